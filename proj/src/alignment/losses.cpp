#include "mvpr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mvpr/error.hpp"

namespace mvpr {

LossOutput mse_alignment_loss(const Matrix& teacher, const Matrix& student) {
  if (teacher.rows != student.rows || teacher.cols != student.cols) {
    throw ContractViolation("mse_alignment_loss: shape mismatch");
  }
  LossOutput out;
  out.grad = Matrix(student.rows, student.cols);
  const auto n = student.data.size();
  if (n == 0) return out;
  const double inv = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = student.data[k] - teacher.data[k];
    sum += d * d;
    out.grad.data[k] = 2.0 * d * inv;
  }
  out.value = sum * inv;
  return out;
}

MetricLossKind parse_metric_loss_kind(const std::string& name) {
  if (name == "contrastive") return MetricLossKind::Contrastive;
  if (name == "triplet") return MetricLossKind::Triplet;
  if (name == "ntxent") return MetricLossKind::NTXent;
  if (name == "multisimilarity") return MetricLossKind::MultiSimilarity;
  throw RejectedInput("unknown metric loss '" + name + "'");
}

std::string to_string(MetricLossKind kind) {
  switch (kind) {
    case MetricLossKind::Contrastive: return "contrastive";
    case MetricLossKind::Triplet: return "triplet";
    case MetricLossKind::NTXent: return "ntxent";
    case MetricLossKind::MultiSimilarity: return "multisimilarity";
  }
  return "?";
}

namespace {

// Distances and cosine similarities between rows, with their gradients
// accumulated into a shared matrix.
struct Rows {
  const Matrix& e;
  std::vector<double> norms;

  explicit Rows(const Matrix& m) : e(m), norms(m.rows) {
    for (std::size_t i = 0; i < m.rows; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < m.cols; ++k) s += m(i, k) * m(i, k);
      norms[i] = std::sqrt(s);
    }
  }

  double dist(std::size_t i, std::size_t j) const {
    double s = 0.0;
    for (std::size_t k = 0; k < e.cols; ++k) {
      const double d = e(i, k) - e(j, k);
      s += d * d;
    }
    return std::sqrt(s);
  }

  // grad += c * d(dist(i, j)); zero at coincident rows.
  void add_dist_grad(Matrix& g, std::size_t i, std::size_t j, double c) const {
    const double d = dist(i, j);
    if (d < 1e-12) return;
    for (std::size_t k = 0; k < e.cols; ++k) {
      const double u = c * (e(i, k) - e(j, k)) / d;
      g(i, k) += u;
      g(j, k) -= u;
    }
  }

  double cos(std::size_t i, std::size_t j) const {
    const double den = norms[i] * norms[j];
    if (den < 1e-300) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < e.cols; ++k) s += e(i, k) * e(j, k);
    return s / den;
  }

  // grad += c * d(cos(i, j)).
  void add_cos_grad(Matrix& g, std::size_t i, std::size_t j, double c) const {
    const double ni = norms[i], nj = norms[j];
    if (ni * nj < 1e-300) return;
    const double s = cos(i, j);
    for (std::size_t k = 0; k < e.cols; ++k) {
      g(i, k) += c * (e(j, k) / (ni * nj) - s * e(i, k) / (ni * ni));
      g(j, k) += c * (e(i, k) / (ni * nj) - s * e(j, k) / (nj * nj));
    }
  }
};

LossOutput empty_with_warning(const Matrix& e, const std::string& note) {
  LossOutput out;
  out.grad = Matrix(e.rows, e.cols);
  out.warning = true;
  out.note = note;
  return out;
}

LossOutput contrastive(const Rows& r, const std::vector<int>& labels, double margin) {
  const auto B = r.e.rows;
  LossOutput out;
  out.grad = Matrix(B, r.e.cols);
  const double inv = 2.0 / static_cast<double>(B * (B - 1));
  double sum = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = i + 1; j < B; ++j) {
      const double d = r.dist(i, j);
      if (labels[i] == labels[j]) {
        sum += d * d;
        r.add_dist_grad(out.grad, i, j, 2.0 * d * inv);
      } else if (d < margin) {
        sum += (margin - d) * (margin - d);
        r.add_dist_grad(out.grad, i, j, -2.0 * (margin - d) * inv);
      }
    }
  }
  out.value = sum * inv;
  return out;
}

LossOutput triplet(const Rows& r, const std::vector<int>& labels, const std::vector<Domain>& dom,
                   double margin) {
  const auto B = r.e.rows;
  struct T {
    std::size_t a, p, n;
  };
  std::vector<T> triplets;
  for (std::size_t a = 0; a < B; ++a) {
    if (!dom.empty() && dom[a] != Domain::Real) continue;
    for (std::size_t p = 0; p < B; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      if (!dom.empty() && dom[p] != Domain::Synthetic) continue;
      for (std::size_t n = 0; n < B; ++n) {
        if (labels[n] == labels[a]) continue;
        if (!dom.empty() && dom[n] != Domain::Synthetic) continue;
        triplets.push_back({a, p, n});
      }
    }
  }
  if (triplets.empty()) return empty_with_warning(r.e, "triplet: no valid triplet in batch");
  LossOutput out;
  out.grad = Matrix(B, r.e.cols);
  const double inv = 1.0 / static_cast<double>(triplets.size());
  double sum = 0.0;
  for (const auto& t : triplets) {
    const double h = r.dist(t.a, t.p) - r.dist(t.a, t.n) + margin;
    if (h <= 0.0) continue;
    sum += h;
    r.add_dist_grad(out.grad, t.a, t.p, inv);
    r.add_dist_grad(out.grad, t.a, t.n, -inv);
  }
  out.value = sum * inv;
  return out;
}

LossOutput ntxent(const Rows& r, const std::vector<int>& labels, double tau) {
  const auto B = r.e.rows;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < B; ++a) {
    for (std::size_t p = 0; p < B; ++p) pairs += (p != a && labels[p] == labels[a]);
  }
  if (pairs == 0) return empty_with_warning(r.e, "ntxent: no positive pair in batch");
  LossOutput out;
  out.grad = Matrix(B, r.e.cols);
  const double inv = 1.0 / static_cast<double>(pairs);
  double sum = 0.0;
  std::vector<double> z;
  for (std::size_t a = 0; a < B; ++a) {
    std::vector<std::size_t> negs;
    for (std::size_t n = 0; n < B; ++n) {
      if (labels[n] != labels[a]) negs.push_back(n);
    }
    for (std::size_t p = 0; p < B; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      // loss = logsumexp(z) - z[0], z = (s_ap, s_an...) / tau
      z.assign(1, r.cos(a, p) / tau);
      for (auto n : negs) z.push_back(r.cos(a, n) / tau);
      const double m = *std::max_element(z.begin(), z.end());
      double se = 0.0;
      for (double v : z) se += std::exp(v - m);
      sum += m + std::log(se) - z[0];
      // d/dz_k = softmax_k - [k == 0]
      r.add_cos_grad(out.grad, a, p, inv * (std::exp(z[0] - m) / se - 1.0) / tau);
      for (std::size_t k = 0; k < negs.size(); ++k) {
        r.add_cos_grad(out.grad, a, negs[k], inv * std::exp(z[k + 1] - m) / se / tau);
      }
    }
  }
  out.value = sum * inv;
  return out;
}

// log(1 + sum exp(v)) and its softmax weights over v (the 1 acts as a zero logit).
double log1p_sum_exp(const std::vector<double>& v, std::vector<double>& w) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  double se = std::exp(-m);
  for (double x : v) se += std::exp(x - m);
  w.resize(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) w[k] = std::exp(v[k] - m) / se;
  return m + std::log(se);
}

LossOutput multi_similarity(const Rows& r, const std::vector<int>& labels,
                            const MetricLossParams& prm) {
  const auto B = r.e.rows;
  LossOutput out;
  out.grad = Matrix(B, r.e.cols);
  const double inv = 1.0 / static_cast<double>(B);
  double sum = 0.0;
  bool any_pos = false;
  std::vector<double> v, w;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < B; ++i) {
    // Positive term.
    v.clear();
    idx.clear();
    for (std::size_t p = 0; p < B; ++p) {
      if (p == i || labels[p] != labels[i]) continue;
      v.push_back(-prm.ms_alpha * (r.cos(i, p) - prm.ms_lambda));
      idx.push_back(p);
    }
    if (!v.empty()) {
      any_pos = true;
      sum += log1p_sum_exp(v, w) / prm.ms_alpha;
      for (std::size_t k = 0; k < idx.size(); ++k) r.add_cos_grad(out.grad, i, idx[k], -inv * w[k]);
    }
    // Negative term.
    v.clear();
    idx.clear();
    for (std::size_t n = 0; n < B; ++n) {
      if (labels[n] == labels[i]) continue;
      v.push_back(prm.ms_beta * (r.cos(i, n) - prm.ms_lambda));
      idx.push_back(n);
    }
    if (!v.empty()) {
      sum += log1p_sum_exp(v, w) / prm.ms_beta;
      for (std::size_t k = 0; k < idx.size(); ++k) r.add_cos_grad(out.grad, i, idx[k], inv * w[k]);
    }
  }
  out.value = sum * inv;
  if (!any_pos) {
    out.warning = true;
    out.note = "multisimilarity: no positive pair in batch";
  }
  return out;
}

}  // namespace

LossOutput metric_loss(MetricLossKind kind, const Matrix& embeddings, const std::vector<int>& labels,
                       const std::vector<Domain>& domains, const MetricLossParams& params) {
  if (embeddings.rows < 2) throw ContractViolation("metric_loss: need at least 2 embeddings");
  if (labels.size() != embeddings.rows) {
    throw ContractViolation("metric_loss: label count does not match embedding rows");
  }
  if (!domains.empty() && domains.size() != embeddings.rows) {
    throw ContractViolation("metric_loss: domain count does not match embedding rows");
  }
  const Rows rows(embeddings);
  switch (kind) {
    case MetricLossKind::Contrastive: return contrastive(rows, labels, params.margin);
    case MetricLossKind::Triplet: return triplet(rows, labels, domains, params.margin);
    case MetricLossKind::NTXent: return ntxent(rows, labels, params.temperature);
    case MetricLossKind::MultiSimilarity: return multi_similarity(rows, labels, params);
  }
  throw ContractViolation("metric_loss: unknown kind");
}

}  // namespace mvpr
