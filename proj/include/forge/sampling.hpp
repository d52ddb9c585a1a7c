#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace forge {

struct DecodeParams {
  double temperature = 0.7;
  double top_p = 0.9;
  std::size_t max_new_tokens = 64;
  std::uint64_t rng_stream = 0;
  // Temperature -> 0 limit: argmax with ties to the lowest index.
  bool greedy = false;

  void validate() const;
};

// Checks that `dist` is a probability vector (finite, non-negative, sums to 1
// within 1e-9). Throws InvalidArgument otherwise.
void require_probability_vector(std::span<const double> dist);

// Keeps the smallest prefix of the probability-descending order (ties by
// ascending index) whose mass reaches top_p, renormalized. Dropped entries
// are zero in the returned vector.
std::vector<double> nucleus_filter(std::span<const double> dist, double top_p);

// p_i^(1/T), renormalized. Zero entries stay zero.
std::vector<double> apply_temperature(std::span<const double> dist,
                                      double temperature);

std::size_t argmax(std::span<const double> weights);

// Inverse-CDF draw in index order. `weights` need not be normalized.
std::size_t sample_index(std::span<const double> weights, std::mt19937_64& gen);

// Temperature, then nucleus truncation, then a draw (or argmax when greedy).
std::size_t sample_next(std::span<const double> dist, const DecodeParams& params,
                        std::mt19937_64& gen);

}  // namespace forge
