#include "forge/kernels.hpp"

namespace forge {

int fanout(const ModelHandle& model, std::size_t n) {
  const auto caps = model->capabilities();
  const std::size_t limit =
      std::min<std::size_t>(static_cast<std::size_t>(omp_get_max_threads()),
                            std::max<std::size_t>(1, caps.max_concurrency));
  return static_cast<int>(std::max<std::size_t>(1, std::min(limit, n)));
}

std::vector<TokenSeq> generate_batch(const ModelHandle& model,
                                     std::span<const GenerateJob> jobs,
                                     const DecodeParams& params, Exec exec) {
  std::vector<TokenSeq> out(jobs.size());
  if (jobs.empty()) return out;
  params.validate();
  for_each_index(jobs.size(), exec, fanout(model, jobs.size()), [&](std::size_t i) {
    DecodeParams p = params;
    p.rng_stream = jobs[i].rng_stream;
    out[i] = generate(model, jobs[i].source, p);
  });
  return out;
}

std::vector<NllScore> score_batch(const ModelHandle& model,
                                  std::span<const SourceTarget> items, Exec exec) {
  std::vector<NllScore> out(items.size());
  if (items.empty()) return out;
  for_each_index(items.size(), exec, fanout(model, items.size()), [&](std::size_t i) {
    out[i] = score_nll(model, items[i].source, items[i].target);
  });
  return out;
}

std::vector<double> score_means(const ModelHandle& model,
                                std::span<const SourceTarget> items, Exec exec) {
  std::vector<double> out(items.size());
  if (items.empty()) return out;
  for_each_index(items.size(), exec, fanout(model, items.size()), [&](std::size_t i) {
    out[i] = score_nll(model, items[i].source, items[i].target).mean;
  });
  return out;
}

}  // namespace forge
