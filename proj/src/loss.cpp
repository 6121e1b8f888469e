#include "glrtml/loss.hpp"

#include <cmath>

#include "glrtml/errors.hpp"

namespace glrtml::loss {

using numerics::log_sum_exp;

namespace {

double softplus(double z) {
  // log(1 + exp(z)) without overflow.
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

}  // namespace

double glrtml_pair_loss(std::span<const double> scores_p, std::span<const double> scores_n,
                        double nu) {
  if (scores_p.empty() || scores_n.empty()) return 0.0;

  Vec neg_terms(scores_n.size());
  for (std::size_t l = 0; l < scores_n.size(); ++l) neg_terms[l] = nu * scores_n[l];
  Vec pos_terms(scores_p.size());
  for (std::size_t m = 0; m < scores_p.size(); ++m) pos_terms[m] = -nu * scores_p[m];

  // sum_l sum_m exp(nu*s_n_l - nu*s_p_m) = exp(A + B) with the two
  // log-sum-exp aggregates.
  const double a = log_sum_exp(neg_terms);
  const double b = log_sum_exp(pos_terms);
  return softplus(a + b);
}

double identity_loss(std::span<const Vec> log_probs, std::span<const int> label_indices) {
  if (log_probs.empty()) throw EmptyInput("identity_loss: empty batch");
  if (log_probs.size() != label_indices.size())
    throw DimensionMismatch("identity_loss: batch size mismatch");

  double acc = 0.0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    const int y = label_indices[i];
    if (y < 0 || static_cast<std::size_t>(y) >= log_probs[i].size())
      throw InvalidLabel("identity_loss: label index " + std::to_string(y) +
                         " out of range for " + std::to_string(log_probs[i].size()) + " classes");
    acc -= log_probs[i][static_cast<std::size_t>(y)];
  }
  return acc / static_cast<double>(log_probs.size());
}

double total_loss(double pair_loss, double id_loss, double alpha) {
  return pair_loss + alpha * id_loss;
}

PairLossGrads pair_loss_grad_scores(std::span<const double> scores_p,
                                    std::span<const double> scores_n, double nu) {
  PairLossGrads g;
  g.d_pos.assign(scores_p.size(), 0.0);
  g.d_neg.assign(scores_n.size(), 0.0);
  if (scores_p.empty() || scores_n.empty()) return g;

  Vec neg_terms(scores_n.size());
  for (std::size_t l = 0; l < scores_n.size(); ++l) neg_terms[l] = nu * scores_n[l];
  Vec pos_terms(scores_p.size());
  for (std::size_t m = 0; m < scores_p.size(); ++m) pos_terms[m] = -nu * scores_p[m];

  const double a = log_sum_exp(neg_terms);
  const double b = log_sum_exp(pos_terms);
  const double log_h = softplus(a + b);

  // dL/ds_p_m = -nu exp(-nu s_p_m) * sum_l exp(nu s_n_l) / h
  // dL/ds_n_l =  nu exp( nu s_n_l) * sum_m exp(-nu s_p_m) / h
  for (std::size_t m = 0; m < scores_p.size(); ++m)
    g.d_pos[m] = -nu * std::exp(pos_terms[m] + a - log_h);
  for (std::size_t l = 0; l < scores_n.size(); ++l)
    g.d_neg[l] = nu * std::exp(neg_terms[l] + b - log_h);
  return g;
}

std::pair<Vec, Vec> score_grad_embeddings(const glrt_mg::MgModel& model,
                                          std::span<const double> diff) {
  Vec gi = numerics::mat_vec(model.form, diff);
  for (double& v : gi) v *= 2.0;
  Vec gj(gi.size());
  for (std::size_t i = 0; i < gi.size(); ++i) gj[i] = -gi[i];
  return {std::move(gi), std::move(gj)};
}

std::pair<Vec, Vec> score_grad_embeddings(const glrt_gmm::GmmScorer& scorer,
                                          std::span<const double> diff) {
  Vec gi = scorer.grad(diff);
  Vec gj(gi.size());
  for (std::size_t i = 0; i < gi.size(); ++i) gj[i] = -gi[i];
  return {std::move(gi), std::move(gj)};
}

std::vector<Vec> identity_loss_grad(std::span<const Vec> log_probs,
                                    std::span<const int> label_indices) {
  if (log_probs.size() != label_indices.size())
    throw DimensionMismatch("identity_loss_grad: batch size mismatch");
  const double inv_m = 1.0 / static_cast<double>(log_probs.size());
  std::vector<Vec> grads(log_probs.size());
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    const int y = label_indices[i];
    if (y < 0 || static_cast<std::size_t>(y) >= log_probs[i].size())
      throw InvalidLabel("identity_loss_grad: label index out of range");
    grads[i].assign(log_probs[i].size(), 0.0);
    grads[i][static_cast<std::size_t>(y)] = -inv_m;
  }
  return grads;
}

}  // namespace glrtml::loss
