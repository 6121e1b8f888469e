#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "glrtml/numerics.hpp"

namespace glrtml::embedder {

// Small fixed architecture: d_in -> hidden -> hidden -> d with tanh on the
// hidden layers, a linear embedding head and a bias-free classifier matrix
// d -> num_classes feeding log-softmax.
struct EmbedderParams {
  int d_in = 0;
  int hidden = 0;
  int d = 0;
  int num_classes = 0;
  Mat w1;  // hidden x d_in
  Vec b1;
  Mat w2;  // hidden x hidden
  Vec b2;
  Mat w3;  // d x hidden
  Vec b3;
  Mat wc;  // num_classes x d

  // Uniform +-sqrt(6/(fan_in+fan_out)) init, seeded.
  static EmbedderParams init(int d_in, int hidden, int d, int num_classes, std::uint64_t seed);
  static EmbedderParams zeros_like(const EmbedderParams& p);

  std::size_t parameter_count() const;
  // Flat parameter view helpers used by gradient checks and the optimizer.
  void for_each(const std::function<void(double&)>& fn);
  void for_each_const(const std::function<void(double)>& fn) const;
};

struct ForwardTrace {
  Vec input;
  Vec a1;         // tanh activations, layer 1
  Vec a2;         // tanh activations, layer 2
  Vec embedding;  // x_theta
  Vec log_probs;  // log-softmax over classes, normalizes to 0 under log-sum-exp
};

ForwardTrace forward(const EmbedderParams& params, std::span<const double> input);

// Accumulates parameter gradients for a batch from the two upstream gradient
// streams. Either span may be empty to drop that path for the whole batch.
EmbedderParams backward(const EmbedderParams& params, std::span<const ForwardTrace> traces,
                        std::span<const Vec> d_loss_d_embedding,
                        std::span<const Vec> d_loss_d_logprobs);

struct SgdState {
  EmbedderParams velocity;
  static SgdState zeros_like(const EmbedderParams& p);
};

// Classical coupled form: v <- momentum*v + grad + weight_decay*param,
// param <- param - lr*v.
void sgd_step(EmbedderParams& params, const EmbedderParams& grads, double lr, double momentum,
              double weight_decay, SgdState& state);

}  // namespace glrtml::embedder
