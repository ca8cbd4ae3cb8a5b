#ifndef PREDCOIN_METRICS_HPP
#define PREDCOIN_METRICS_HPP

#include "predcoin/attacks.hpp"
#include "predcoin/defense.hpp"

namespace predcoin {

/// Median with the even-count convention (mean of the two middle values).
double median(std::vector<double> values);

/// Median distance over successful results; failures are excluded.
double median_lp(std::span<const AttackResult> results, Norm norm);

/// Fraction of all results that succeeded within distance epsilon.
double asr(std::span<const AttackResult> results, double epsilon, Norm norm);

struct AccuracyLoss {
  double acc_base = 0.0;
  double acc_defended = 0.0;
  /// acc_base - acc_defended; may be negative by chance.
  double delta = 0.0;
  /// Standard error of the per-example paired difference.
  double se = 0.0;
  /// Fraction of inputs the detector flags.
  double flagged = 0.0;
};

/// Clean-data accuracy change caused by the defense, coins drawn from eval_seed.
AccuracyLoss accuracy_loss(const DefenseState& ds, const LabeledData& data, std::uint64_t eval_seed);

struct TimingRatio {
  double base_seconds = 0.0;
  double defended_seconds = 0.0;
  double ratio = 0.0;
};

/// Median-of-reps wall time of defended vs plain inference on one batch.
TimingRatio inference_time_ratio(const DefenseState& ds, const std::vector<Vec>& batch, std::size_t reps);

}  // namespace predcoin

#endif
