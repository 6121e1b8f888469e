#include "glrtml/embedder.hpp"

#include <cmath>
#include <random>

#include "glrtml/errors.hpp"

namespace glrtml::embedder {

namespace {

void check_dims(const EmbedderParams& p) {
  if (p.d_in <= 0 || p.hidden <= 0 || p.d <= 0 || p.num_classes <= 0)
    throw InvalidConfig("embedder: all architecture dimensions must be positive");
}

void affine(const Mat& w, const Vec& b, std::span<const double> x, Vec& out) {
  out.assign(w.rows, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    double s = b.empty() ? 0.0 : b[i];
    for (std::size_t j = 0; j < w.cols; ++j) s += w(i, j) * x[j];
    out[i] = s;
  }
}

// dL/dx += w^T g, dW += g x^T, db += g
void affine_backward(const Mat& w, std::span<const double> x, std::span<const double> g,
                     Mat& dw, Vec& db, Vec* dx) {
  for (std::size_t i = 0; i < w.rows; ++i) {
    if (!db.empty()) db[i] += g[i];
    for (std::size_t j = 0; j < w.cols; ++j) dw(i, j) += g[i] * x[j];
  }
  if (dx) {
    for (std::size_t j = 0; j < w.cols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < w.rows; ++i) s += w(i, j) * g[i];
      (*dx)[j] += s;
    }
  }
}

}  // namespace

EmbedderParams EmbedderParams::init(int d_in, int hidden, int d, int num_classes,
                                    std::uint64_t seed) {
  EmbedderParams p;
  p.d_in = d_in;
  p.hidden = hidden;
  p.d = d;
  p.num_classes = num_classes;
  check_dims(p);

  std::mt19937_64 rng(seed);
  auto fill = [&rng](Mat& w, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& x : w.a) x = u(rng);
  };

  p.w1 = Mat(static_cast<std::size_t>(hidden), static_cast<std::size_t>(d_in));
  fill(p.w1, d_in, hidden);
  p.b1.assign(static_cast<std::size_t>(hidden), 0.0);
  p.w2 = Mat(static_cast<std::size_t>(hidden), static_cast<std::size_t>(hidden));
  fill(p.w2, hidden, hidden);
  p.b2.assign(static_cast<std::size_t>(hidden), 0.0);
  p.w3 = Mat(static_cast<std::size_t>(d), static_cast<std::size_t>(hidden));
  fill(p.w3, hidden, d);
  p.b3.assign(static_cast<std::size_t>(d), 0.0);
  p.wc = Mat(static_cast<std::size_t>(num_classes), static_cast<std::size_t>(d));
  fill(p.wc, d, num_classes);
  return p;
}

EmbedderParams EmbedderParams::zeros_like(const EmbedderParams& p) {
  EmbedderParams z;
  z.d_in = p.d_in;
  z.hidden = p.hidden;
  z.d = p.d;
  z.num_classes = p.num_classes;
  z.w1 = Mat(p.w1.rows, p.w1.cols);
  z.b1.assign(p.b1.size(), 0.0);
  z.w2 = Mat(p.w2.rows, p.w2.cols);
  z.b2.assign(p.b2.size(), 0.0);
  z.w3 = Mat(p.w3.rows, p.w3.cols);
  z.b3.assign(p.b3.size(), 0.0);
  z.wc = Mat(p.wc.rows, p.wc.cols);
  return z;
}

std::size_t EmbedderParams::parameter_count() const {
  return w1.a.size() + b1.size() + w2.a.size() + b2.size() + w3.a.size() + b3.size() + wc.a.size();
}

void EmbedderParams::for_each(const std::function<void(double&)>& fn) {
  for (auto& x : w1.a) fn(x);
  for (auto& x : b1) fn(x);
  for (auto& x : w2.a) fn(x);
  for (auto& x : b2) fn(x);
  for (auto& x : w3.a) fn(x);
  for (auto& x : b3) fn(x);
  for (auto& x : wc.a) fn(x);
}

void EmbedderParams::for_each_const(const std::function<void(double)>& fn) const {
  for (double x : w1.a) fn(x);
  for (double x : b1) fn(x);
  for (double x : w2.a) fn(x);
  for (double x : b2) fn(x);
  for (double x : w3.a) fn(x);
  for (double x : b3) fn(x);
  for (double x : wc.a) fn(x);
}

ForwardTrace forward(const EmbedderParams& params, std::span<const double> input) {
  if (input.size() != static_cast<std::size_t>(params.d_in))
    throw DimensionMismatch("forward: input size " + std::to_string(input.size()) +
                            " vs d_in " + std::to_string(params.d_in));

  ForwardTrace t;
  t.input.assign(input.begin(), input.end());

  Vec z;
  affine(params.w1, params.b1, t.input, z);
  t.a1.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) t.a1[i] = std::tanh(z[i]);

  affine(params.w2, params.b2, t.a1, z);
  t.a2.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) t.a2[i] = std::tanh(z[i]);

  affine(params.w3, params.b3, t.a2, t.embedding);

  Vec logits;
  affine(params.wc, {}, t.embedding, logits);
  const double lse = numerics::log_sum_exp(logits);
  t.log_probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) t.log_probs[i] = logits[i] - lse;
  return t;
}

EmbedderParams backward(const EmbedderParams& params, std::span<const ForwardTrace> traces,
                        std::span<const Vec> d_loss_d_embedding,
                        std::span<const Vec> d_loss_d_logprobs) {
  if (!d_loss_d_embedding.empty() && d_loss_d_embedding.size() != traces.size())
    throw DimensionMismatch("backward: embedding-gradient count vs trace count");
  if (!d_loss_d_logprobs.empty() && d_loss_d_logprobs.size() != traces.size())
    throw DimensionMismatch("backward: logprob-gradient count vs trace count");

  EmbedderParams g = EmbedderParams::zeros_like(params);
  Vec empty_bias;

  for (std::size_t n = 0; n < traces.size(); ++n) {
    const ForwardTrace& t = traces[n];
    Vec d_emb(static_cast<std::size_t>(params.d), 0.0);
    if (!d_loss_d_embedding.empty()) {
      if (d_loss_d_embedding[n].size() != d_emb.size())
        throw DimensionMismatch("backward: embedding gradient dimension");
      d_emb = d_loss_d_embedding[n];
    }

    if (!d_loss_d_logprobs.empty()) {
      const Vec& gl = d_loss_d_logprobs[n];
      if (gl.size() != t.log_probs.size())
        throw DimensionMismatch("backward: logprob gradient dimension");
      // Through log-softmax: d/dlogit_k = g_k - p_k * sum(g).
      double gsum = 0.0;
      for (double x : gl) gsum += x;
      Vec d_logits(gl.size());
      for (std::size_t k = 0; k < gl.size(); ++k)
        d_logits[k] = gl[k] - std::exp(t.log_probs[k]) * gsum;
      affine_backward(params.wc, t.embedding, d_logits, g.wc, empty_bias, &d_emb);
    }

    Vec d_a2(t.a2.size(), 0.0);
    affine_backward(params.w3, t.a2, d_emb, g.w3, g.b3, &d_a2);

    Vec d_z2(t.a2.size());
    for (std::size_t i = 0; i < t.a2.size(); ++i) d_z2[i] = d_a2[i] * (1.0 - t.a2[i] * t.a2[i]);
    Vec d_a1(t.a1.size(), 0.0);
    affine_backward(params.w2, t.a1, d_z2, g.w2, g.b2, &d_a1);

    Vec d_z1(t.a1.size());
    for (std::size_t i = 0; i < t.a1.size(); ++i) d_z1[i] = d_a1[i] * (1.0 - t.a1[i] * t.a1[i]);
    affine_backward(params.w1, t.input, d_z1, g.w1, g.b1, nullptr);
  }
  return g;
}

SgdState SgdState::zeros_like(const EmbedderParams& p) {
  SgdState s;
  s.velocity = EmbedderParams::zeros_like(p);
  return s;
}

void sgd_step(EmbedderParams& params, const EmbedderParams& grads, double lr, double momentum,
              double weight_decay, SgdState& state) {
  auto step = [&](auto& pv, const auto& gv, auto& vv) {
    for (std::size_t i = 0; i < pv.size(); ++i) {
      vv[i] = momentum * vv[i] + gv[i] + weight_decay * pv[i];
      pv[i] -= lr * vv[i];
    }
  };
  step(params.w1.a, grads.w1.a, state.velocity.w1.a);
  step(params.b1, grads.b1, state.velocity.b1);
  step(params.w2.a, grads.w2.a, state.velocity.w2.a);
  step(params.b2, grads.b2, state.velocity.b2);
  step(params.w3.a, grads.w3.a, state.velocity.w3.a);
  step(params.b3, grads.b3, state.velocity.b3);
  step(params.wc.a, grads.wc.a, state.velocity.wc.a);
}

}  // namespace glrtml::embedder
