#include "glrtml/sampling.hpp"

#include <algorithm>
#include <limits>

#include "glrtml/errors.hpp"

namespace glrtml::sampling {

std::vector<std::size_t> kmeanspp_seeds(std::span<const Vec> points, int k, std::mt19937_64& rng) {
  if (k < 1) throw InvalidConfig("kmeanspp_seeds: k must be >= 1");
  if (points.size() < static_cast<std::size_t>(k))
    throw TooFewPoints("kmeanspp_seeds: " + std::to_string(points.size()) + " points for k=" +
                       std::to_string(k));

  std::vector<std::size_t> seeds;
  seeds.reserve(static_cast<std::size_t>(k));
  std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
  seeds.push_back(first(rng));

  std::vector<double> min_sq(points.size(), std::numeric_limits<double>::infinity());
  auto update = [&](std::size_t center) {
    const Vec& c = points[center];
    for (std::size_t i = 0; i < points.size(); ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < c.size(); ++j) {
        const double diff = points[i][j] - c[j];
        sq += diff * diff;
      }
      min_sq[i] = std::min(min_sq[i], sq);
    }
  };
  update(seeds.back());

  while (seeds.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (double v : min_sq) total += v;
    std::size_t pick;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = 0;
      for (std::size_t i = 0; i < min_sq.size(); ++i) {
        target -= min_sq[i];
        if (target <= 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // All points coincide with an existing seed; fall back to uniform.
      pick = first(rng);
    }
    seeds.push_back(pick);
    update(pick);
  }
  return seeds;
}

std::vector<std::pair<std::size_t, std::size_t>> reservoir_sample_pairs(
    std::size_t n, const std::function<bool(std::size_t, std::size_t)>& keep, std::size_t budget,
    std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> reservoir;
  reservoir.reserve(std::min<std::size_t>(budget, 1 << 20));
  std::size_t seen = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!keep(i, j)) continue;
      ++seen;
      if (reservoir.size() < budget) {
        reservoir.emplace_back(i, j);
      } else {
        std::uniform_int_distribution<std::size_t> slot(0, seen - 1);
        const std::size_t s = slot(rng);
        if (s < budget) reservoir[s] = {i, j};
      }
    }
  }
  std::sort(reservoir.begin(), reservoir.end());
  return reservoir;
}

}  // namespace glrtml::sampling
