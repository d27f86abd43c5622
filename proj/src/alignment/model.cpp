#include "mvpr/model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <string>

#include "mvpr/binary.hpp"
#include "mvpr/error.hpp"
#include "mvpr/rng.hpp"

namespace mvpr {

ImageBatch select(const ImageBatch& batch, const std::vector<std::size_t>& indices) {
  ImageBatch out(indices.size(), batch.c, batch.h, batch.w);
  const auto s = batch.sample_size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    std::memcpy(out.sample(k), batch.sample(indices[k]), s * sizeof(double));
  }
  return out;
}

Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& indices) {
  Matrix out(indices.size(), m.cols);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    std::memcpy(out.row(k), m.row(indices[k]), m.cols * sizeof(double));
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t positive(const std::string& tok, const std::string& item) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || v == 0 || tok[0] == '-') {
    throw RejectedInput("architecture: bad size '" + tok + "' in '" + item + "'");
  }
  return static_cast<std::size_t>(v);
}

std::size_t layer_params(const LayerSpec& l, const Shape& in) {
  switch (l.kind) {
    case LayerKind::Conv3x3:
      return l.units * in.c * 9 + l.units;
    case LayerKind::Dense:
      return l.units * in.size() + l.units;
    default:
      return 0;
  }
}

}  // namespace

Architecture Architecture::parse(const std::string& text) {
  Architecture a;
  std::vector<std::string> items;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ';');) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  if (items.empty()) throw RejectedInput("architecture: empty descriptor");

  auto words = [](const std::string& item) {
    std::vector<std::string> w;
    std::istringstream in(item);
    for (std::string t; in >> t;) w.push_back(t);
    return w;
  };
  const auto head = words(items[0]);
  if (head.size() != 4 || head[0] != "input") {
    throw RejectedInput("architecture: must start with 'input C H W'");
  }
  a.input_ = {positive(head[1], items[0]), positive(head[2], items[0]), positive(head[3], items[0])};
  a.shapes_.push_back(a.input_);

  for (std::size_t i = 1; i < items.size(); ++i) {
    const auto w = words(items[i]);
    const Shape in = a.shapes_.back();
    LayerSpec l{};
    Shape out = in;
    if (w[0] == "conv" && w.size() == 2) {
      l = {LayerKind::Conv3x3, positive(w[1], items[i])};
      out.c = l.units;
    } else if (w[0] == "dense" && w.size() == 2) {
      l = {LayerKind::Dense, positive(w[1], items[i])};
      out = {l.units, 1, 1};
    } else if (w[0] == "relu" && w.size() == 1) {
      l = {LayerKind::Relu, 0};
    } else if (w[0] == "pool" && w.size() == 1) {
      if (in.h % 2 != 0 || in.w % 2 != 0) {
        throw RejectedInput("architecture: pool needs even sides, got " + std::to_string(in.h) +
                            "x" + std::to_string(in.w));
      }
      l = {LayerKind::AvgPool2, 0};
      out = {in.c, in.h / 2, in.w / 2};
    } else if (w[0] == "l2norm" && w.size() == 1) {
      if (i + 1 != items.size()) throw RejectedInput("architecture: l2norm must be the last layer");
      l = {LayerKind::L2Norm, 0};
    } else {
      throw RejectedInput("architecture: unknown layer '" + items[i] + "'");
    }
    a.offsets_.push_back(a.param_count_);
    a.param_count_ += layer_params(l, in);
    a.layers_.push_back(l);
    a.shapes_.push_back(out);
  }
  if (a.layers_.empty() || a.layers_.back().kind != LayerKind::L2Norm) {
    throw RejectedInput("architecture: must end with l2norm");
  }
  return a;
}

std::string Architecture::to_string() const {
  std::string s = "input " + std::to_string(input_.c) + " " + std::to_string(input_.h) + " " +
                  std::to_string(input_.w);
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerKind::Conv3x3: s += "; conv " + std::to_string(l.units); break;
      case LayerKind::Dense: s += "; dense " + std::to_string(l.units); break;
      case LayerKind::Relu: s += "; relu"; break;
      case LayerKind::AvgPool2: s += "; pool"; break;
      case LayerKind::L2Norm: s += "; l2norm"; break;
    }
  }
  return s;
}

EmbeddingModel init_model(const Architecture& arch, std::uint64_t seed) {
  EmbeddingModel m{arch, std::vector<double>(arch.param_count(), 0.0)};
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < arch.layers().size(); ++i) {
    const auto& l = arch.layers()[i];
    const Shape in = arch.shapes()[i];
    std::size_t fan_in = 0, weights = 0;
    if (l.kind == LayerKind::Conv3x3) {
      fan_in = in.c * 9;
      weights = l.units * fan_in;
    } else if (l.kind == LayerKind::Dense) {
      fan_in = in.size();
      weights = l.units * fan_in;
    } else {
      continue;
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    double* p = m.params.data() + arch.offsets()[i];
    for (std::size_t k = 0; k < weights; ++k) {
      p[k] = (2.0 * rng.uniform() - 1.0) * limit;
    }
  }
  return m;
}

namespace {

void check_model(const EmbeddingModel& model, const ImageBatch& batch) {
  const auto& a = model.arch;
  if (model.params.size() != a.param_count()) {
    throw ContractViolation("model has " + std::to_string(model.params.size()) +
                            " parameters, architecture needs " + std::to_string(a.param_count()));
  }
  const Shape in{batch.c, batch.h, batch.w};
  if (!(in == a.input())) {
    throw ContractViolation("batch shape " + std::to_string(batch.c) + "x" +
                            std::to_string(batch.h) + "x" + std::to_string(batch.w) +
                            " does not match model input " + std::to_string(a.input().c) + "x" +
                            std::to_string(a.input().h) + "x" + std::to_string(a.input().w));
  }
  if (batch.data.size() != batch.n * batch.sample_size()) {
    throw ContractViolation("batch buffer size does not match its shape");
  }
}

void conv_forward(const double* in, Shape s, const double* w, const double* b, std::size_t out_c,
                  double* out) {
  const auto H = s.h, W = s.w;
  for (std::size_t o = 0; o < out_c; ++o) {
    double* dst = out + o * H * W;
    for (std::size_t k = 0; k < H * W; ++k) dst[k] = b[o];
    for (std::size_t i = 0; i < s.c; ++i) {
      const double* src = in + i * H * W;
      const double* k9 = w + (o * s.c + i) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double wk = k9[ky * 3 + kx];
          // Output rows/cols whose tap (y + ky - 1, x + kx - 1) is inside.
          const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? H - 1 : H;
          const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? W - 1 : W;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* srow = src + (y + ky - 1) * W + (kx - 1);
            double* drow = dst + y * W;
            for (std::size_t x = x0; x < x1; ++x) drow[x] += wk * srow[x];
          }
        }
      }
    }
  }
}

void conv_backward(const double* in, Shape s, const double* w, std::size_t out_c, const double* g,
                   double* gw, double* gb, double* gin) {
  const auto H = s.h, W = s.w;
  for (std::size_t o = 0; o < out_c; ++o) {
    const double* go = g + o * H * W;
    double sb = 0.0;
    for (std::size_t k = 0; k < H * W; ++k) sb += go[k];
    gb[o] += sb;
    for (std::size_t i = 0; i < s.c; ++i) {
      const double* src = in + i * H * W;
      double* gsrc = gin ? gin + i * H * W : nullptr;
      const double* k9 = w + (o * s.c + i) * 9;
      double* gk9 = gw + (o * s.c + i) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? H - 1 : H;
          const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? W - 1 : W;
          const double wk = k9[ky * 3 + kx];
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const std::size_t off = (y + ky - 1) * W + (kx - 1);
            const double* grow = go + y * W;
            for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * src[off + x];
            if (gsrc) {
              for (std::size_t x = x0; x < x1; ++x) gsrc[off + x] += wk * grow[x];
            }
          }
          gk9[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

void run_forward(const EmbeddingModel& model, const double* x, Tape& tape) {
  const auto& a = model.arch;
  const auto& shapes = a.shapes();
  tape.values.resize(a.layers().size() + 1);
  tape.values[0].assign(x, x + shapes[0].size());
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    const auto& l = a.layers()[i];
    const Shape in = shapes[i], out = shapes[i + 1];
    const auto& src = tape.values[i];
    auto& dst = tape.values[i + 1];
    dst.assign(out.size(), 0.0);
    const double* p = model.params.data() + a.offsets()[i];
    switch (l.kind) {
      case LayerKind::Conv3x3:
        conv_forward(src.data(), in, p, p + l.units * in.c * 9, l.units, dst.data());
        break;
      case LayerKind::Dense: {
        const auto n = in.size();
        const double* b = p + l.units * n;
        for (std::size_t j = 0; j < l.units; ++j) {
          double acc = b[j];
          const double* wr = p + j * n;
          for (std::size_t k = 0; k < n; ++k) acc += wr[k] * src[k];
          dst[j] = acc;
        }
        break;
      }
      case LayerKind::Relu:
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] > 0.0 ? src[k] : 0.0;
        break;
      case LayerKind::AvgPool2:
        for (std::size_t c = 0; c < out.c; ++c) {
          for (std::size_t y = 0; y < out.h; ++y) {
            for (std::size_t xx = 0; xx < out.w; ++xx) {
              const double* s0 = src.data() + (c * in.h + 2 * y) * in.w + 2 * xx;
              dst[(c * out.h + y) * out.w + xx] = 0.25 * (s0[0] + s0[1] + s0[in.w] + s0[in.w + 1]);
            }
          }
        }
        break;
      case LayerKind::L2Norm: {
        double sq = 0.0;
        for (const double v : src) sq += v * v;
        const double nrm = std::sqrt(sq);
        if (nrm < kNormGuard) {
          dst[0] = 1.0;
        } else {
          for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] / nrm;
        }
        break;
      }
    }
  }
}

// Accumulates d(g . output)/d(params) into grad.
void run_backward(const EmbeddingModel& model, const Tape& tape, const double* out_grad,
                  double* grad) {
  const auto& a = model.arch;
  const auto& shapes = a.shapes();
  const auto L = a.layers().size();
  std::vector<double> g(out_grad, out_grad + shapes[L].size());
  std::vector<double> gin;
  for (std::size_t r = L; r-- > 0;) {
    const auto& l = a.layers()[r];
    const Shape in = shapes[r], out = shapes[r + 1];
    const auto& src = tape.values[r];
    const auto& dst = tape.values[r + 1];
    const double* p = model.params.data() + a.offsets()[r];
    double* gp = grad + a.offsets()[r];
    const bool need_input = r > 0;
    gin.assign(in.size(), 0.0);
    switch (l.kind) {
      case LayerKind::Conv3x3:
        conv_backward(src.data(), in, p, l.units, g.data(), gp, gp + l.units * in.c * 9,
                      need_input ? gin.data() : nullptr);
        break;
      case LayerKind::Dense: {
        const auto n = in.size();
        double* gb = gp + l.units * n;
        for (std::size_t j = 0; j < l.units; ++j) {
          const double gj = g[j];
          gb[j] += gj;
          double* gw = gp + j * n;
          const double* wr = p + j * n;
          for (std::size_t k = 0; k < n; ++k) gw[k] += gj * src[k];
          if (need_input) {
            for (std::size_t k = 0; k < n; ++k) gin[k] += gj * wr[k];
          }
        }
        break;
      }
      case LayerKind::Relu:
        for (std::size_t k = 0; k < src.size(); ++k) gin[k] = src[k] > 0.0 ? g[k] : 0.0;
        break;
      case LayerKind::AvgPool2:
        for (std::size_t c = 0; c < out.c; ++c) {
          for (std::size_t y = 0; y < out.h; ++y) {
            for (std::size_t xx = 0; xx < out.w; ++xx) {
              const double q = 0.25 * g[(c * out.h + y) * out.w + xx];
              double* s0 = gin.data() + (c * in.h + 2 * y) * in.w + 2 * xx;
              s0[0] = q;
              s0[1] = q;
              s0[in.w] = q;
              s0[in.w + 1] = q;
            }
          }
        }
        break;
      case LayerKind::L2Norm: {
        double sq = 0.0;
        for (const double v : src) sq += v * v;
        const double nrm = std::sqrt(sq);
        if (nrm >= kNormGuard) {
          double yg = 0.0;
          for (std::size_t k = 0; k < dst.size(); ++k) yg += dst[k] * g[k];
          for (std::size_t k = 0; k < dst.size(); ++k) gin[k] = (g[k] - dst[k] * yg) / nrm;
        }  // the guarded branch is constant
        break;
      }
    }
    g.swap(gin);
  }
}

void forward_one(const EmbeddingModel& model, const ImageBatch& batch, std::size_t i, Matrix& out) {
  Tape tape;
  run_forward(model, batch.sample(i), tape);
  const auto& y = tape.values.back();
  std::copy(y.begin(), y.end(), out.row(i));
}

void check_grad_shape(const EmbeddingModel& model, const ImageBatch& batch, const Matrix& g) {
  if (g.rows != batch.n || g.cols != model.arch.output_dim()) {
    throw ContractViolation("output gradient must be " + std::to_string(batch.n) + "x" +
                            std::to_string(model.arch.output_dim()));
  }
}

}  // namespace

Matrix forward(const EmbeddingModel& model, const ImageBatch& batch) {
  check_model(model, batch);
  Matrix out(batch.n, model.arch.output_dim());
  const auto n = static_cast<std::ptrdiff_t>(batch.n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) forward_one(model, batch, static_cast<std::size_t>(i), out);
  return out;
}

Matrix forward_serial(const EmbeddingModel& model, const ImageBatch& batch) {
  check_model(model, batch);
  Matrix out(batch.n, model.arch.output_dim());
  for (std::size_t i = 0; i < batch.n; ++i) forward_one(model, batch, i, out);
  return out;
}

std::vector<double> backward(const EmbeddingModel& model, const ImageBatch& batch,
                             const Matrix& out_grad) {
  check_model(model, batch);
  check_grad_shape(model, batch, out_grad);
  return backward(model, forward_record(model, batch), out_grad);
}

RecordedForward forward_record(const EmbeddingModel& model, const ImageBatch& batch) {
  check_model(model, batch);
  RecordedForward rec;
  rec.output = Matrix(batch.n, model.arch.output_dim());
  rec.tapes.resize(batch.n);
  const auto n = static_cast<std::ptrdiff_t>(batch.n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    run_forward(model, batch.sample(s), rec.tapes[s]);
    const auto& y = rec.tapes[s].values.back();
    std::copy(y.begin(), y.end(), rec.output.row(s));
  }
  return rec;
}

std::vector<double> backward(const EmbeddingModel& model, const RecordedForward& recorded,
                             const Matrix& out_grad) {
  if (out_grad.rows != recorded.tapes.size() || out_grad.cols != model.arch.output_dim()) {
    throw ContractViolation("output gradient does not match the recorded batch");
  }
  const auto P = model.params.size();
  const auto B = recorded.tapes.size();
  std::vector<double> per_sample(B * P, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(B);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    run_backward(model, recorded.tapes[s], out_grad.row(s), per_sample.data() + s * P);
  }
  std::vector<double> grad(P, 0.0);
  for (std::size_t s = 0; s < B; ++s) {
    const double* src = per_sample.data() + s * P;
    for (std::size_t k = 0; k < P; ++k) grad[k] += src[k];
  }
  return grad;
}

std::vector<double> backward_serial(const EmbeddingModel& model, const ImageBatch& batch,
                                    const Matrix& out_grad) {
  check_model(model, batch);
  check_grad_shape(model, batch, out_grad);
  const auto P = model.params.size();
  std::vector<double> grad(P, 0.0), one(P);
  for (std::size_t s = 0; s < batch.n; ++s) {
    Tape tape;
    run_forward(model, batch.sample(s), tape);
    std::fill(one.begin(), one.end(), 0.0);
    run_backward(model, tape, out_grad.row(s), one.data());
    for (std::size_t k = 0; k < P; ++k) grad[k] += one[k];
  }
  return grad;
}

std::string encode_checkpoint(const EmbeddingModel& model) {
  if (model.params.size() != model.arch.param_count()) {
    throw ContractViolation("checkpoint: parameter count does not match architecture");
  }
  ByteWriter w;
  w.put_bytes("MVPRMODL");
  w.put<std::uint32_t>(kCheckpointVersion);
  const auto desc = model.arch.to_string();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(desc.size()));
  w.put_bytes(desc);
  w.put<std::uint64_t>(model.params.size());
  for (const double p : model.params) w.put<double>(p);
  return w.take();
}

EmbeddingModel decode_checkpoint(const std::string& bytes) {
  ByteReader r(bytes, "checkpoint");
  if (r.get_bytes(8) != "MVPRMODL") throw ParseError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw UnsupportedVersion("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto len = r.get<std::uint32_t>();
  const std::string desc(r.get_bytes(len));
  EmbeddingModel m;
  try {
    m.arch = Architecture::parse(desc);
  } catch (const RejectedInput& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  if (count != m.arch.param_count()) {
    throw ParseError("checkpoint: parameter count " + std::to_string(count) +
                     " does not match architecture (" + std::to_string(m.arch.param_count()) + ")");
  }
  if (count > r.remaining() / sizeof(double)) throw ParseError("checkpoint: truncated data");
  m.params.resize(count);
  for (auto& p : m.params) p = r.get<double>();
  if (r.remaining() != 0) throw ParseError("checkpoint: trailing bytes");
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const EmbeddingModel& model) {
  write_file(path, encode_checkpoint(model));
}

EmbeddingModel load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const UnsupportedVersion& e) {
    throw UnsupportedVersion(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace mvpr
