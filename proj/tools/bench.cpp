#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "evh/corpus.hpp"
#include "evh/detector.hpp"
#include "evh/pe.hpp"
#include "evh/rng.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

int main() {
  const std::size_t n_files = 96;
  evh::CorpusConfig cc;
  cc.seed = 7;

  std::vector<evh::Bytes> files;
  std::vector<evh::LabeledSample> batch;
  for (std::size_t i = 0; i < n_files; ++i) {
    const int label = static_cast<int>(i % 2);
    evh::Bytes b = evh::serialize_pe(evh::generate_sample(cc, i, label));
    batch.push_back({b, label});
    files.push_back(std::move(b));
  }

  evh::DetectorConfig dc;
  const evh::DetectorWeights w = evh::DetectorWeights::xavier(dc, 99, 1.0);

#ifdef _OPENMP
  std::printf("omp max threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; both paths run serially\n");
#endif
  std::printf("%zu synthetic files, window %zu bytes\n\n", files.size(), dc.k);

  for (int round = 0; round < 3; ++round) {
    auto t0 = Clock::now();
    const auto serial = evh::score_files_serial(w, files);
    const double t_serial = ms_since(t0);

    t0 = Clock::now();
    const auto parallel = evh::score_files(w, files);
    const double t_parallel = ms_since(t0);

    std::size_t diffs = 0;
    for (std::size_t i = 0; i < serial.size(); ++i) {
      if (serial[i] != parallel[i]) ++diffs;
    }
    std::printf("score    round %d: serial %8.2f ms, parallel %8.2f ms, mismatches %zu\n",
                round, t_serial, t_parallel, diffs);
  }
  std::printf("\n");

  std::vector<const evh::LabeledSample*> batch_ptrs;
  for (const auto& s : batch) batch_ptrs.push_back(&s);

  for (int round = 0; round < 3; ++round) {
    auto t0 = Clock::now();
    const auto [loss_s, grad_s] = evh::batch_loss_grad_serial(w, batch_ptrs);
    const double t_serial = ms_since(t0);

    t0 = Clock::now();
    const auto [loss_p, grad_p] = evh::batch_loss_grad(w, batch_ptrs);
    const double t_parallel = ms_since(t0);

    std::size_t diffs = 0;
    for (std::size_t i = 0; i < grad_s.size(); ++i) {
      if (grad_s[i] != grad_p[i]) ++diffs;
    }
    std::printf("gradient round %d: serial %8.2f ms, parallel %8.2f ms, "
                "loss delta %.3g, mismatches %zu\n",
                round, t_serial, t_parallel, loss_s - loss_p, diffs);
  }
  return 0;
}
