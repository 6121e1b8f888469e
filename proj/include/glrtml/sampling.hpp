#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "glrtml/numerics.hpp"

namespace glrtml::sampling {

// k-means++ seeding: first index uniform, then squared-distance weighted.
std::vector<std::size_t> kmeanspp_seeds(std::span<const Vec> points, int k, std::mt19937_64& rng);

// Reservoir sampling (Algorithm R) over the unordered pair space {(i,j): i<j,
// keep(i,j)}, without materializing it. The result is sorted by index pair so
// downstream iteration order is stable.
std::vector<std::pair<std::size_t, std::size_t>> reservoir_sample_pairs(
    std::size_t n, const std::function<bool(std::size_t, std::size_t)>& keep, std::size_t budget,
    std::mt19937_64& rng);

}  // namespace glrtml::sampling
