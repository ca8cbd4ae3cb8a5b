#ifndef PREDCOIN_DEFENSE_HPP
#define PREDCOIN_DEFENSE_HPP

#include <array>
#include <filesystem>
#include <memory>
#include <string>

#include "predcoin/nn.hpp"

namespace predcoin {

enum class FlipMode { kOff, kProbabilistic, kParity };

std::string to_string(FlipMode mode);
FlipMode parse_flip_mode(const std::string& name);

/// Detector input: the three largest confidences, descending, zero-padded.
using FQInput = std::array<double, 3>;

/// Inference-time defense wrapped around a target classifier.
///
/// The detector maps top3_descending(target(x)) to (y1, y2) where y1 is the
/// score of "gradient-estimation query". A query is flagged when y1 >= gamma;
/// flagged queries may have their label replaced by the runner-up class.
struct DefenseState {
  std::shared_ptr<const DenseNetwork> target;
  std::shared_ptr<const DenseNetwork> detector;
  double gamma = 0.5;
  FlipMode mode = FlipMode::kProbabilistic;
  std::uint64_t seed = 0;
  /// Test mode: treat every query as flagged regardless of the detector.
  bool flag_all = false;

  void validate() const;
};

struct Detection {
  bool flagged = false;
  double y1 = 0.0;
};

FQInput top3_descending(std::span<const double> p);

Detection detect(const DefenseState& ds, std::span<const double> p);

/// Label served to the caller. `rng` supplies the coin in probabilistic mode.
ClassIndex defended_predict(const DefenseState& ds, std::span<const double> x, Rng& rng);

/// Same decision given a precomputed prediction vector for x.
ClassIndex defended_label(const DefenseState& ds, std::span<const double> x, std::span<const double> p,
                          Rng& rng);

/// Parity of the last digit of round(s * 1e4); true (flip) when even.
bool parity_of_sum(double s);
bool parity_flag(const DefenseState& ds, std::span<const double> x);

/// On-disk defense description: {gamma, mode, fq_path, target_path, seed}.
struct DefenseConfig {
  double gamma = 0.5;
  FlipMode mode = FlipMode::kProbabilistic;
  std::string fq_path;
  std::string target_path;
  std::uint64_t seed = 0;
};

void save_defense_config(const DefenseConfig& cfg, const std::filesystem::path& path);
DefenseConfig load_defense_config(const std::filesystem::path& path);
DefenseState load_defense(const DefenseConfig& cfg);

}  // namespace predcoin

#endif
