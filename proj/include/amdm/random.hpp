#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "amdm/tensor.hpp"

namespace amdm {

using Rng = std::mt19937_64;

/// Independent stream seed for item `index` of a run seeded with `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

void fill_normal(Rng& rng, std::span<double> out, double stddev = 1.0);
Tensor normal_tensor(Rng& rng, Shape shape, double stddev = 1.0);
double uniform(Rng& rng, double lo, double hi);

}  // namespace amdm
