#pragma once

#include <string>
#include <vector>

#include "mvpr/tensor.hpp"

namespace mvpr {

// Scalar loss with its gradient with respect to the embedding matrix it was
// computed from.
struct LossOutput {
  double value = 0.0;
  Matrix grad;
  bool warning = false;  // no valid pair/triplet; value and grad are zero
  std::string note;
};

// Mean over all B*D squared differences. The gradient is taken with respect
// to `student`; the teacher side is a constant.
LossOutput mse_alignment_loss(const Matrix& teacher, const Matrix& student);

enum class MetricLossKind { Contrastive, Triplet, NTXent, MultiSimilarity };

MetricLossKind parse_metric_loss_kind(const std::string& name);
std::string to_string(MetricLossKind kind);

struct MetricLossParams {
  double margin = 0.1;       // contrastive, triplet
  double temperature = 0.07; // NTXent
  double ms_alpha = 2.0;     // MultiSimilarity
  double ms_beta = 50.0;
  double ms_lambda = 1.0;
};

enum class Domain { Real, Synthetic };

// Batch-level metric losses over rows of `embeddings` with place labels.
//   contrastive:     mean over pairs i < j of d^2 (same label) or
//                    max(0, margin - d)^2 (different label), d Euclidean
//   triplet:         mean over triplets (anchor real, positive synthetic of
//                    the same place, negative synthetic of another place) of
//                    max(0, d(a,p) - d(a,n) + margin); without domain tags
//                    every (a, p != a, n) with matching labels is used
//   ntxent:          mean over ordered positive pairs (a, p) of
//                    -log(exp(s_ap/t) / (exp(s_ap/t) + sum_n exp(s_an/t))),
//                    s cosine similarity, n over different-label rows
//   multisimilarity: mean over rows i of
//                    log(1 + sum_p exp(-alpha (s_ip - lambda))) / alpha +
//                    log(1 + sum_n exp(beta (s_in - lambda))) / beta
// Throws ContractViolation for fewer than 2 rows or mismatched label/domain
// counts.
LossOutput metric_loss(MetricLossKind kind, const Matrix& embeddings, const std::vector<int>& labels,
                       const std::vector<Domain>& domains = {}, const MetricLossParams& params = {});

}  // namespace mvpr
