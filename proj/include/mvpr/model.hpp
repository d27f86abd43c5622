#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvpr/tensor.hpp"

namespace mvpr {

enum class LayerKind { Conv3x3, Relu, AvgPool2, Dense, L2Norm };

struct LayerSpec {
  LayerKind kind;
  std::size_t units = 0;  // output channels (conv) or width (dense)

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Shape {
  std::size_t c = 0, h = 0, w = 0;
  std::size_t size() const { return c * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Layer list such as
//   "input 3 32 32; conv 8; relu; pool; conv 16; relu; pool; dense 64; l2norm"
// Conv layers are 3x3, stride 1, zero "same" padding, with bias. Pool is a
// 2x2 average pool and needs even sides. Dense flattens its input. The list
// must end with l2norm, which may appear only there.
class Architecture {
 public:
  Architecture() = default;
  // Throws RejectedInput on a malformed or inconsistent descriptor.
  static Architecture parse(const std::string& text);
  std::string to_string() const;

  Shape input() const { return input_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  // Output shape of layer i (shapes()[0] is the input).
  const std::vector<Shape>& shapes() const { return shapes_; }
  // Offset of layer i's parameters in the flat vector.
  const std::vector<std::size_t>& offsets() const { return offsets_; }
  std::size_t param_count() const { return param_count_; }
  std::size_t output_dim() const { return shapes_.back().size(); }

  friend bool operator==(const Architecture& a, const Architecture& b) {
    return a.input_ == b.input_ && a.layers_ == b.layers_;
  }

 private:
  Shape input_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::vector<std::size_t> offsets_;
  std::size_t param_count_ = 0;
};

// Desk-scale defaults: three conv blocks and a dense head.
inline constexpr const char* kDefaultArchitecture =
    "input 3 32 32; conv 8; relu; pool; conv 16; relu; pool; conv 32; relu; pool; dense 64; l2norm";

struct EmbeddingModel {
  Architecture arch;
  std::vector<double> params;

  friend bool operator==(const EmbeddingModel&, const EmbeddingModel&) = default;
};

// Uniform fan-in scaled weights (limit sqrt(6 / fan_in)), zero biases, from
// a portable 64-bit generator so the result depends on the seed only.
EmbeddingModel init_model(const Architecture& arch, std::uint64_t seed);

// Row-normalized descriptors, one row per sample. Parallel over samples;
// forward_serial is the reference and is bit-identical. Throws
// ContractViolation on a shape or parameter-count mismatch.
Matrix forward(const EmbeddingModel& model, const ImageBatch& batch);
Matrix forward_serial(const EmbeddingModel& model, const ImageBatch& batch);

// Per-sample record of every layer output; the backward pass replays it in
// reverse.
struct Tape {
  std::vector<std::vector<double>> values;  // values[0] = input, values[i + 1] = layer i output
};

struct RecordedForward {
  Matrix output;
  std::vector<Tape> tapes;
};

// forward() that keeps the tapes so the gradient needs no second pass.
RecordedForward forward_record(const EmbeddingModel& model, const ImageBatch& batch);
std::vector<double> backward(const EmbeddingModel& model, const RecordedForward& recorded,
                             const Matrix& out_grad);

// Gradient of sum_ij out_grad(i, j) * forward(model, batch)(i, j) with
// respect to the parameters, i.e. the vector-Jacobian product. Samples are
// processed in parallel and reduced in sample order.
std::vector<double> backward(const EmbeddingModel& model, const ImageBatch& batch,
                             const Matrix& out_grad);
std::vector<double> backward_serial(const EmbeddingModel& model, const ImageBatch& batch,
                                    const Matrix& out_grad);

// Norms below this map to the first basis vector in the L2 layer.
inline constexpr double kNormGuard = 1e-12;

// Checkpoint: "MVPRMODL", u32 version, u32 descriptor length + UTF-8
// descriptor, u64 parameter count, little-endian f64 parameters.
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::string encode_checkpoint(const EmbeddingModel& model);
EmbeddingModel decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const EmbeddingModel& model);
EmbeddingModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mvpr
