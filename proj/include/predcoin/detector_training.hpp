#ifndef PREDCOIN_DETECTOR_TRAINING_HPP
#define PREDCOIN_DETECTOR_TRAINING_HPP

// Building the query detector: sampling boundary queries from a target,
// fitting the detector, scoring it and choosing the flag threshold.

#include <functional>

#include "predcoin/attacks.hpp"
#include "predcoin/metrics.hpp"

namespace predcoin {

/// Detector class indices: output 0 is y1, the "gradient-estimation query" score.
inline constexpr ClassIndex kQueryClass = 0;
inline constexpr ClassIndex kCleanClass = 1;

struct SamplerConfig {
  /// Sphere queries emitted per boundary point.
  std::size_t n_sphere = 4;
  /// Sphere radius is 10^U(log_delta_lo, log_delta_hi) / sqrt(d).
  double log_delta_lo = -3.0;
  double log_delta_hi = -1.0;
  std::size_t init_draws = 200;
  double bisection_tol = 1e-4;
};

struct FQDataset {
  /// 3-wide inputs, labels kQueryClass / kCleanClass.
  LabeledData data;
  std::size_t clean = 0;
  std::size_t queries = 0;
  /// Base points for which no adversarial start was found.
  std::size_t skipped = 0;
};

FQDataset generate_fq_dataset(const DenseNetwork& target, const LabeledData& base, const SamplerConfig& cfg,
                              Rng& rng);

struct FQMetrics {
  double fp_rate = 0.0;
  double fn_rate = 0.0;
  double accuracy = 0.0;
  std::size_t clean = 0;
  std::size_t queries = 0;
};

/// Confusion rates of `detector` at threshold gamma on labelled FQ inputs.
FQMetrics fq_metrics(const DenseNetwork& detector, double gamma, const LabeledData& eval);
FQMetrics fq_metrics(const DefenseState& ds, const LabeledData& eval);

/// Detector layout: 3 -> 64 -> 64 -> 32 -> 2, identity on the first layer,
/// ReLU on the next two, softmax out.
DenseNetwork make_detector(std::uint64_t seed);

struct FQTraining {
  DenseNetwork detector;
  FQMetrics held_out;
  double train_seconds = 0.0;
};

/// Trains on a shuffled 80% split; metrics at gamma = 0.5 on the other 20%.
FQTraining train_fq(const FQDataset& fq, const TrainConfig& cfg);

struct GammaSearchResult {
  double gamma = 1.0;
  int iterations = 0;
  double bracket_lo = 0.0;
  double bracket_hi = 1.0;
  /// No gamma in [0,1] keeps the accuracy loss under the cap.
  bool warning = false;
};

/// Bisection for the smallest gamma whose accuracy loss is within `cap`,
/// assuming the loss is non-increasing in gamma.
GammaSearchResult gamma_search(const std::function<double(double)>& acc_loss, double cap, double tol = 0.01);

/// Same search with the loss measured in probabilistic mode on `validation`.
GammaSearchResult gamma_search(const DefenseState& ds, const LabeledData& validation, double cap,
                               std::uint64_t eval_seed, double tol = 0.01);

}  // namespace predcoin

#endif
