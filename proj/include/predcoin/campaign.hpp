#ifndef PREDCOIN_CAMPAIGN_HPP
#define PREDCOIN_CAMPAIGN_HPP

// Attack campaigns over many seed images: paired undefended/defended runs,
// aggregate metrics and the JSON/CSV report.

#include <filesystem>
#include <iosfwd>

#include "json.hpp"
#include "predcoin/dataset.hpp"
#include "predcoin/metrics.hpp"

namespace predcoin {

inline constexpr int kReportSchemaVersion = 1;

struct CampaignSpec {
  AttackKind attack = AttackKind::kHsja;
  Norm norm = Norm::kL2;
  std::vector<std::uint64_t> budgets{500, 2000};
  std::uint64_t seed = 0;
  /// Independent repetitions of the whole seed set; run seeds differ per repeat.
  std::size_t repeats = 1;
  AdaptiveMode adaptive = AdaptiveMode::kNone;
  std::size_t k = 1;
  double bypass_delta_max = 1.0;
  /// Attack the undefended target as well (paired with identical run seeds).
  bool run_base = true;
};

struct CampaignInputs {
  std::shared_ptr<const DenseNetwork> target;
  std::optional<DefenseState> defense;
  std::vector<Vec> seeds;
  std::vector<ClassIndex> labels;
};

struct RunRecord {
  std::size_t index = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  ClassIndex label = 0;
  AttackResult result;
  /// x_adv is misclassified by the undefended target.
  bool verified = false;
};

struct BudgetBlock {
  std::uint64_t budget = 0;
  std::vector<RunRecord> base;
  std::vector<RunRecord> defended;
};

/// Seed of run `index` in repeat `repeat`: base seed xor the flat run index.
std::uint64_t run_seed(std::uint64_t base, std::size_t repeat, std::size_t index, std::size_t n_seeds);

std::vector<BudgetBlock> run_campaign(const CampaignInputs& in, const CampaignSpec& spec);
std::vector<BudgetBlock> run_campaign_serial(const CampaignInputs& in, const CampaignSpec& spec);

/// Results whose success flag is the undefended-target verification.
std::vector<AttackResult> verified_results(std::span<const RunRecord> rows);

std::vector<AttackResult> results_of(std::span<const RunRecord> rows);

/// Median distance over oracle-confirmed successes; nullopt when none succeeded.
std::optional<double> success_median(std::span<const RunRecord> rows, Norm norm);

/// Median distance over rows whose x_adv fools the undefended target.
std::optional<double> verified_median(std::span<const RunRecord> rows, Norm norm);

Vec asr_grid(Norm norm);

nlohmann::ordered_json rows_json(std::span<const RunRecord> rows);
nlohmann::ordered_json block_json(const BudgetBlock& block, const CampaignSpec& spec);
nlohmann::ordered_json spec_json(const CampaignSpec& spec);

/// Columns epsilon, asr_base, asr_defended; "nan" for a side that was not run.
void write_asr_csv(std::ostream& os, const BudgetBlock& block, Norm norm);

}  // namespace predcoin

#endif
