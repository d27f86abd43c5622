#include <cmath>
#include <cstring>
#include <sstream>

#include "json.hpp"
#include "mvpr/binary.hpp"
#include "mvpr/error.hpp"
#include "mvpr/retrieval.hpp"

namespace mvpr {

std::string to_string(Domain d) { return d == Domain::Real ? "real" : "synthetic"; }

Domain parse_domain(const std::string& s) {
  if (s == "real") return Domain::Real;
  if (s == "synthetic") return Domain::Synthetic;
  throw RejectedInput("unknown domain '" + s + "'");
}

DescriptorStore::DescriptorStore(std::size_t dim, std::vector<float> rows,
                                 std::vector<DescriptorMeta> meta)
    : dim_(dim), rows_(std::move(rows)), meta_(std::move(meta)) {
  if (rows_.size() != meta_.size() * dim_) {
    throw RejectedInput("descriptor store: " + std::to_string(rows_.size()) + " values for " +
                        std::to_string(meta_.size()) + " rows of dimension " +
                        std::to_string(dim_));
  }
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) {
      const double v = rows_[i * dim_ + k];
      s += v * v;
    }
    if (!(std::abs(std::sqrt(s) - 1.0) <= kStoreNormTolerance)) {
      throw RejectedInput("descriptor store: row " + std::to_string(i) + " (" + meta_[i].id +
                          ") is not unit norm");
    }
  }
}

DescriptorStore DescriptorStore::from_matrix(const Matrix& descriptors,
                                             std::vector<DescriptorMeta> meta) {
  std::vector<float> rows(descriptors.data.size());
  for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = static_cast<float>(descriptors.data[k]);
  return DescriptorStore(descriptors.cols, std::move(rows), std::move(meta));
}

DescriptorStore DescriptorStore::permuted(const std::vector<std::size_t>& order) const {
  if (order.size() != size()) throw ContractViolation("permuted: order size mismatch");
  std::vector<float> rows(rows_.size());
  std::vector<DescriptorMeta> meta(meta_.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::memcpy(rows.data() + i * dim_, row(order[i]), dim_ * sizeof(float));
    meta[i] = meta_[order[i]];
  }
  DescriptorStore s;
  s.dim_ = dim_;
  s.rows_ = std::move(rows);
  s.meta_ = std::move(meta);
  return s;
}

namespace {

void check_items(const ImageBatch& images, const std::vector<StoreItem>& items,
                 std::vector<DescriptorMeta>& meta) {
  if (images.n != items.size()) {
    throw RejectedInput("build_store: " + std::to_string(images.n) + " images but " +
                        std::to_string(items.size()) + " records");
  }
  meta.reserve(items.size());
  for (const auto& it : items) {
    if (!it.geo) throw RejectedInput("build_store: missing pose for image '" + it.id + "'");
    meta.push_back({it.id, *it.geo, it.yaw, it.domain});
  }
}

}  // namespace

DescriptorStore build_store(const EmbeddingModel& model, const ImageBatch& images,
                            const std::vector<StoreItem>& items) {
  std::vector<DescriptorMeta> meta;
  check_items(images, items, meta);
  if (images.n == 0) return DescriptorStore(model.arch.output_dim(), {}, {});
  return DescriptorStore::from_matrix(forward(model, images), std::move(meta));
}

DescriptorStore build_store_serial(const EmbeddingModel& model, const ImageBatch& images,
                                   const std::vector<StoreItem>& items) {
  std::vector<DescriptorMeta> meta;
  check_items(images, items, meta);
  if (images.n == 0) return DescriptorStore(model.arch.output_dim(), {}, {});
  return DescriptorStore::from_matrix(forward_serial(model, images), std::move(meta));
}

std::string encode_store(const DescriptorStore& store) {
  ByteWriter w;
  w.put_bytes("MVPRDESC");
  w.put<std::uint32_t>(kStoreVersion);
  w.put<std::uint64_t>(store.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.dim()));
  for (const float v : store.data()) w.put<float>(v);
  for (const auto& m : store.meta()) {
    const nlohmann::json j = {{"id", m.id},
                              {"lat", m.geo.lat},
                              {"lon", m.geo.lon},
                              {"yaw", m.yaw},
                              {"domain", to_string(m.domain)}};
    w.put_bytes(j.dump());
    w.put_bytes("\n");
  }
  return w.take();
}

DescriptorStore decode_store(const std::string& bytes) {
  ByteReader r(bytes, "descriptor store");
  if (r.get_bytes(8) != "MVPRDESC") throw ParseError("descriptor store: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kStoreVersion) {
    throw UnsupportedVersion("descriptor store: unsupported version " + std::to_string(version));
  }
  const auto n = r.get<std::uint64_t>();
  const auto d = r.get<std::uint32_t>();
  if (d != 0 && n > r.remaining() / sizeof(float) / d) {
    throw ParseError("descriptor store: truncated data");
  }
  std::vector<float> rows(n * d);
  for (auto& v : rows) v = r.get<float>();

  std::vector<DescriptorMeta> meta;
  meta.reserve(n);
  std::istringstream lines(std::string(r.get_bytes(r.remaining())));
  std::string line;
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!std::getline(lines, line) || lines.eof()) {
      throw ParseError("descriptor store: metadata has fewer than " + std::to_string(n) + " lines");
    }
    try {
      const auto j = nlohmann::json::parse(line);
      meta.push_back({j.at("id").get<std::string>(),
                      {j.at("lat").get<double>(), j.at("lon").get<double>()},
                      j.at("yaw").get<double>(),
                      parse_domain(j.at("domain").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("descriptor store: metadata line " + std::to_string(i + 1) + ": " + e.what());
    } catch (const RejectedInput& e) {
      throw ParseError(std::string("descriptor store: ") + e.what());
    }
  }
  if (lines.peek() != std::char_traits<char>::eof()) {
    throw ParseError("descriptor store: trailing data after metadata");
  }
  try {
    return DescriptorStore(d, std::move(rows), std::move(meta));
  } catch (const RejectedInput& e) {
    throw ParseError(e.what());
  }
}

void save_store(const std::filesystem::path& path, const DescriptorStore& store) {
  write_file(path, encode_store(store));
}

DescriptorStore load_store(const std::filesystem::path& path) {
  try {
    return decode_store(read_file(path));
  } catch (const UnsupportedVersion& e) {
    throw UnsupportedVersion(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace mvpr
