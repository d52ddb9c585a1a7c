#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <span>
#include <vector>

#include <omp.h>

#include "forge/model.hpp"

namespace forge {

// How a batch of independent model calls is executed. `serial` is the
// reference path the parallel kernels are tested against.
enum class Exec { serial, parallel };

struct GenerateJob {
  TokenSeq source;
  std::uint64_t rng_stream = 0;
};

// Thread count for a batch of `n` calls: bounded by the backend's advertised
// concurrency and the OpenMP pool.
int fanout(const ModelHandle& model, std::size_t n);

// Runs fn(i) for i in [0, n). In parallel mode the first failing index (the
// lowest, not the first in time) has its exception rethrown after the loop,
// so failures are as deterministic as results.
template <class Fn>
void for_each_index(std::size_t n, Exec exec, int threads, Fn&& fn) {
  if (exec == Exec::serial || threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Output i is generate(model, jobs[i].source, params with jobs[i].rng_stream).
std::vector<TokenSeq> generate_batch(const ModelHandle& model,
                                     std::span<const GenerateJob> jobs,
                                     const DecodeParams& params,
                                     Exec exec = Exec::parallel);

std::vector<NllScore> score_batch(const ModelHandle& model,
                                  std::span<const SourceTarget> items,
                                  Exec exec = Exec::parallel);

// Per-item mean NLL only; avoids keeping per-token vectors for large batches.
std::vector<double> score_means(const ModelHandle& model,
                                std::span<const SourceTarget> items,
                                Exec exec = Exec::parallel);

}  // namespace forge
