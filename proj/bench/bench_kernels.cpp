// Serial reference vs OpenMP timing for the batched kernels.

#include <omp.h>

#include <chrono>
#include <functional>
#include <iomanip>
#include <iostream>

#include "predcoin/kernels.hpp"
#include "predcoin/theory.hpp"

using namespace predcoin;

namespace {

double best_of(int reps, const std::function<void()>& body) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double serial, double parallel) {
  std::cout << std::left << std::setw(24) << name << std::right << std::fixed << std::setprecision(4) << std::setw(10)
            << serial << std::setw(10) << parallel << std::setw(8) << std::setprecision(2) << serial / parallel
            << '\n';
}

}  // namespace

int main() {
  std::cout << "threads " << omp_get_max_threads() << "\n";
  std::cout << std::left << std::setw(24) << "kernel" << std::right << std::setw(10) << "serial_s" << std::setw(10)
            << "omp_s" << std::setw(8) << "speedup" << '\n';

  const std::vector<std::size_t> arch{784, 128, 64, 10};
  const DenseNetwork net = DenseNetwork::create(arch, 1);
  Rng rng(2);
  std::vector<Vec> batch(2048);
  for (auto& x : batch) x = sample_uniform_box(784, rng);

  std::size_t sink = 0;
  row("forward_batch",
      best_of(5, [&] { sink += kernels::forward_batch_serial(net, batch).size(); }),
      best_of(5, [&] { sink += kernels::forward_batch_parallel(net, batch).size(); }));
  row("predict",
      best_of(5, [&] { sink += kernels::predict_serial(net, batch).size(); }),
      best_of(5, [&] { sink += kernels::predict_parallel(net, batch).size(); }));

  ConvergenceConfig cc;
  cc.samples = 5000;
  row("convergence_experiment",
      best_of(3, [&] { sink += convergence_experiment_serial(cc).size(); }),
      best_of(3, [&] { sink += convergence_experiment(cc).size(); }));
  return sink == 0;
}
