#pragma once

#include <span>
#include <utility>
#include <vector>

#include "glrtml/glrt_gmm.hpp"
#include "glrtml/glrt_mg.hpp"
#include "glrtml/numerics.hpp"

namespace glrtml::loss {

struct LossConfig {
  double nu = 0.001;  // temperature on the pair scores
  double alpha = 1.0; // identity-loss weight
};

// Index pairs within a batch, partitioned by polarity, plus the differential
// embeddings they produced. Pairs are canonical (i < j) and never self-pairs.
struct PairBatch {
  std::vector<std::pair<std::size_t, std::size_t>> pos_pairs;
  std::vector<std::pair<std::size_t, std::size_t>> neg_pairs;
  std::vector<Vec> pos_diffs;
  std::vector<Vec> neg_diffs;
};

// log(1 + sum_l exp(nu*s_n_l) * sum_m exp(-nu*s_p_m)), stabilized through
// log-sum-exp aggregates. Zero when either side is empty.
double glrtml_pair_loss(std::span<const double> scores_p, std::span<const double> scores_n,
                        double nu);

// Cross-entropy over log-softmax outputs: -(1/M) sum_i log_probs[i][label].
// Labels are class indices; negatives reject with InvalidLabel.
double identity_loss(std::span<const Vec> log_probs, std::span<const int> label_indices);

double total_loss(double pair_loss, double id_loss, double alpha);

struct PairLossGrads {
  Vec d_pos;  // all entries <= 0
  Vec d_neg;  // all entries >= 0
};

PairLossGrads pair_loss_grad_scores(std::span<const double> scores_p,
                                    std::span<const double> scores_n, double nu);

// Chain rule of the quadratic-form score through the differential embedding:
// ds/dx_i = 2*form*diff, ds/dx_j = -2*form*diff.
std::pair<Vec, Vec> score_grad_embeddings(const glrt_mg::MgModel& model,
                                          std::span<const double> diff);

// Mixture-score variant; gradient of log p1 - log p0 at the diff.
std::pair<Vec, Vec> score_grad_embeddings(const glrt_gmm::GmmScorer& scorer,
                                          std::span<const double> diff);

// Gradient of identity_loss with respect to each instance's log-probs.
std::vector<Vec> identity_loss_grad(std::span<const Vec> log_probs,
                                    std::span<const int> label_indices);

}  // namespace glrtml::loss
