#pragma once

#include <cstddef>
#include <vector>

namespace mvpr {

// Batch of images, NCHW, 64-bit values (pixel intensities scaled to [0, 1]).
struct ImageBatch {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  ImageBatch() = default;
  ImageBatch(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
      : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, 0.0) {}

  std::size_t sample_size() const { return c * h * w; }
  const double* sample(std::size_t i) const { return data.data() + i * sample_size(); }
  double* sample(std::size_t i) { return data.data() + i * sample_size(); }

  friend bool operator==(const ImageBatch&, const ImageBatch&) = default;
};

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Gathers the listed samples into a new batch.
ImageBatch select(const ImageBatch& batch, const std::vector<std::size_t>& indices);
Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& indices);

}  // namespace mvpr
