#include "forge/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge {

void DecodeParams::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw InvalidArgument("temperature must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0))
    throw InvalidArgument("top_p must lie in (0, 1]");
  if (max_new_tokens == 0)
    throw InvalidArgument("max_new_tokens must be positive");
}

void require_probability_vector(std::span<const double> dist) {
  if (dist.empty()) throw InvalidArgument("empty probability vector");
  double total = 0.0;
  for (double p : dist) {
    if (!std::isfinite(p) || p < 0.0)
      throw InvalidArgument("probability entries must be finite and >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw InvalidArgument("probability vector does not sum to 1");
}

std::vector<double> nucleus_filter(std::span<const double> dist, double top_p) {
  require_probability_vector(dist);
  if (!(top_p > 0.0 && top_p <= 1.0))
    throw InvalidArgument("top_p must lie in (0, 1]");

  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });

  // The 1e-12 slack absorbs summation error so that top_p = 1 keeps the full
  // support instead of spilling past it.
  std::vector<double> out(dist.size(), 0.0);
  double kept = 0.0;
  for (std::size_t idx : order) {
    if (dist[idx] == 0.0) break;
    out[idx] = dist[idx];
    kept += dist[idx];
    if (kept + 1e-12 >= top_p) break;
  }
  for (double& p : out) p /= kept;
  return out;
}

std::vector<double> apply_temperature(std::span<const double> dist,
                                      double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  double max_log = -INFINITY;
  for (double p : dist)
    if (p > 0.0) max_log = std::max(max_log, std::log(p));
  std::vector<double> out(dist.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] > 0.0) {
      out[i] = std::exp((std::log(dist[i]) - max_log) / temperature);
      total += out[i];
    }
  }
  if (!(total > 0.0)) throw InvalidArgument("distribution has no mass");
  for (double& q : out) q /= total;
  return out;
}

std::size_t argmax(std::span<const double> weights) {
  if (weights.empty()) throw InvalidArgument("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < weights.size(); ++i)
    if (weights[i] > weights[best]) best = i;
  return best;
}

std::size_t sample_index(std::span<const double> weights, std::mt19937_64& gen) {
  double total = 0.0;
  std::size_t last = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    total += weights[i];
    if (weights[i] > 0.0) last = i;
  }
  if (last == weights.size()) throw InvalidArgument("cannot sample from zero mass");
  const double u = uniform01(gen) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (weights[i] > 0.0 && u < acc) return i;
  }
  return last;
}

std::size_t sample_next(std::span<const double> dist, const DecodeParams& params,
                        std::mt19937_64& gen) {
  if (params.greedy) return argmax(dist);
  auto tempered = apply_temperature(dist, params.temperature);
  auto kept = nucleus_filter(tempered, params.top_p);
  return sample_index(kept, gen);
}

}  // namespace forge
