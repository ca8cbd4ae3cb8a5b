#include "predcoin/metrics.hpp"

#include <chrono>

namespace predcoin {

double median(std::vector<double> values) {
  if (values.empty()) throw Error("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double median_lp(std::span<const AttackResult> results, Norm norm) {
  std::vector<double> d;
  for (const auto& r : results)
    if (r.success) d.push_back(r.distance(norm));
  if (d.empty()) throw Error("median_lp: no successful results");
  return median(std::move(d));
}

double asr(std::span<const AttackResult> results, double epsilon, Norm norm) {
  if (results.empty()) throw Error("asr: empty result set");
  std::size_t hit = 0;
  for (const auto& r : results)
    if (r.success && r.distance(norm) <= epsilon) ++hit;
  return static_cast<double>(hit) / static_cast<double>(results.size());
}

AccuracyLoss accuracy_loss(const DefenseState& ds, const LabeledData& data, std::uint64_t eval_seed) {
  if (data.size() == 0) throw Error("accuracy_loss: empty test set");
  ds.validate();
  Rng rng(eval_seed);
  AccuracyLoss out;
  double sum = 0.0, sum_sq = 0.0;
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec p = ds.target->forward(data.inputs[i]);
    const bool base_ok = argmax(p) == data.labels[i];
    const bool def_ok = defended_label(ds, data.inputs[i], p, rng) == data.labels[i];
    if (ds.mode != FlipMode::kOff && detect(ds, p).flagged) ++flagged;
    out.acc_base += base_ok;
    out.acc_defended += def_ok;
    const double diff = static_cast<double>(base_ok) - static_cast<double>(def_ok);
    sum += diff;
    sum_sq += diff * diff;
  }
  const double n = static_cast<double>(data.size());
  out.acc_base /= n;
  out.acc_defended /= n;
  out.delta = sum / n;
  const double var = std::max(0.0, sum_sq / n - out.delta * out.delta);
  out.se = std::sqrt(var / n);
  out.flagged = static_cast<double>(flagged) / n;
  return out;
}

TimingRatio inference_time_ratio(const DefenseState& ds, const std::vector<Vec>& batch, std::size_t reps) {
  if (reps < 5) throw Error("inference_time_ratio: reps must be >= 5");
  if (batch.empty()) throw Error("inference_time_ratio: empty batch");
  using Clock = std::chrono::steady_clock;
  Rng rng(ds.seed);
  std::size_t sink = 0;
  auto time_it = [&](auto&& body) {
    std::vector<double> t;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto start = Clock::now();
      body();
      t.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    }
    return median(std::move(t));
  };
  TimingRatio out;
  out.base_seconds = time_it([&] {
    for (const auto& x : batch) sink += argmax(ds.target->forward(x));
  });
  out.defended_seconds = time_it([&] {
    for (const auto& x : batch) sink += defended_predict(ds, x, rng);
  });
  out.ratio = out.defended_seconds / out.base_seconds;
  if (sink == std::numeric_limits<std::size_t>::max()) out.ratio = 0.0;  // keeps the loops observable
  return out;
}

}  // namespace predcoin
