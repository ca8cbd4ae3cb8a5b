#include "predcoin/campaign.hpp"

#include <ostream>

namespace predcoin {

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Job {
  std::size_t block;
  bool defended;
  std::size_t repeat;
  std::size_t index;
};

RunRecord run_one(const CampaignInputs& in, const CampaignSpec& spec, std::uint64_t budget, const Job& job) {
  RunRecord rec;
  rec.index = job.index;
  rec.repeat = job.repeat;
  rec.seed = run_seed(spec.seed, job.repeat, job.index, in.seeds.size());
  rec.label = in.labels[job.index];

  AttackConfig cfg;
  cfg.norm = spec.norm;
  cfg.query_budget = budget;
  cfg.seed = rec.seed;
  if (job.defended) {
    cfg.adaptive = spec.adaptive;
    cfg.vote_k = spec.k;
    cfg.whitebox = &*in.defense;
    cfg.bypass_delta_max = spec.bypass_delta_max;
  }
  auto oracle = job.defended ? HardLabelOracle::defended(*in.defense, splitmix(rec.seed))
                             : HardLabelOracle::model(in.target);
  const Vec& x_star = in.seeds[job.index];
  rec.result = run_attack(spec.attack, oracle, x_star, rec.label, cfg);
  if (oracle.query_count() != rec.result.queries_used) throw Error("campaign: query accounting mismatch");
  rec.verified = rec.result.success && argmax(in.target->forward(rec.result.x_adv)) != rec.label;
  return rec;
}

std::vector<BudgetBlock> run_jobs(const CampaignInputs& in, const CampaignSpec& spec, bool parallel) {
  if (!in.target) throw Error("campaign: missing target model");
  if (in.seeds.empty()) throw Error("campaign: no seed images");
  if (in.seeds.size() != in.labels.size()) throw DimensionError("campaign labels", in.seeds.size(), in.labels.size());
  if (spec.repeats == 0) throw Error("campaign: repeats must be >= 1");
  const bool defended = in.defense.has_value();
  if (!spec.run_base && !defended) throw Error("campaign: nothing to run");

  std::vector<BudgetBlock> blocks(spec.budgets.size());
  std::vector<Job> jobs;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].budget = spec.budgets[b];
    for (int side = 0; side < 2; ++side) {
      const bool def = side == 1;
      if ((def && !defended) || (!def && !spec.run_base)) continue;
      auto& rows = def ? blocks[b].defended : blocks[b].base;
      rows.resize(spec.repeats * in.seeds.size());
      for (std::size_t r = 0; r < spec.repeats; ++r)
        for (std::size_t i = 0; i < in.seeds.size(); ++i) jobs.push_back({b, def, r, i});
    }
  }
  auto store = [&](const Job& j, RunRecord rec) {
    auto& rows = j.defended ? blocks[j.block].defended : blocks[j.block].base;
    rows[j.repeat * in.seeds.size() + j.index] = std::move(rec);
  };
  const long n = static_cast<long>(jobs.size());
  if (parallel) {
    // each job writes its own slot; exceptions are carried out of the region
    std::vector<std::exception_ptr> errors(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
      const Job& j = jobs[static_cast<std::size_t>(i)];
      try {
        store(j, run_one(in, spec, blocks[j.block].budget, j));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (const Job& j : jobs) store(j, run_one(in, spec, blocks[j.block].budget, j));
  }
  return blocks;
}

}  // namespace

std::uint64_t run_seed(std::uint64_t base, std::size_t repeat, std::size_t index, std::size_t n_seeds) {
  return base ^ static_cast<std::uint64_t>(repeat * n_seeds + index);
}

std::vector<BudgetBlock> run_campaign(const CampaignInputs& in, const CampaignSpec& spec) {
  return run_jobs(in, spec, true);
}

std::vector<BudgetBlock> run_campaign_serial(const CampaignInputs& in, const CampaignSpec& spec) {
  return run_jobs(in, spec, false);
}

std::vector<AttackResult> verified_results(std::span<const RunRecord> rows) {
  std::vector<AttackResult> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    AttackResult a = r.result;
    a.success = r.verified;
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<AttackResult> results_of(std::span<const RunRecord> rows) {
  std::vector<AttackResult> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.result);
  return out;
}

std::optional<double> success_median(std::span<const RunRecord> rows, Norm norm) {
  const auto res = results_of(rows);
  if (std::none_of(res.begin(), res.end(), [](const AttackResult& a) { return a.success; })) return std::nullopt;
  return median_lp(res, norm);
}

std::optional<double> verified_median(std::span<const RunRecord> rows, Norm norm) {
  const auto res = verified_results(rows);
  if (std::none_of(res.begin(), res.end(), [](const AttackResult& a) { return a.success; })) return std::nullopt;
  return median_lp(res, norm);
}

Vec asr_grid(Norm norm) {
  const double top = norm == Norm::kL2 ? 10.0 : 1.0;
  Vec eps(41);
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = top * static_cast<double>(i) / 40.0;
  return eps;
}

nlohmann::ordered_json spec_json(const CampaignSpec& spec) {
  nlohmann::ordered_json j;
  j["attack"] = to_string(spec.attack);
  j["norm"] = to_string(spec.norm);
  j["budgets"] = spec.budgets;
  j["seed"] = spec.seed;
  j["repeats"] = spec.repeats;
  j["adaptive"] = to_string(spec.adaptive);
  j["k"] = spec.k;
  j["bypass_delta_max"] = spec.bypass_delta_max;
  j["run_base"] = spec.run_base;
  return j;
}

nlohmann::ordered_json rows_json(std::span<const RunRecord> rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["index"] = r.index;
    j["repeat"] = r.repeat;
    j["seed"] = r.seed;
    j["label"] = r.label;
    j["l2"] = r.result.l2_dist;
    j["linf"] = r.result.linf_dist;
    j["queries"] = r.result.queries_used;
    j["success"] = r.result.success;
    j["verified"] = r.verified;
    arr.push_back(std::move(j));
  }
  return arr;
}

namespace {

nlohmann::ordered_json side_json(std::span<const RunRecord> rows, const CampaignSpec& spec) {
  nlohmann::ordered_json j;
  const std::size_t n = rows.size();
  std::size_t verified = 0, success = 0;
  for (const auto& r : rows) {
    verified += r.verified;
    success += r.result.success;
  }
  auto opt = [](std::optional<double> v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
  j["median"] = opt(success_median(rows, spec.norm));
  j["success"] = success;
  j["verified_median"] = opt(verified_median(rows, spec.norm));
  j["verified"] = verified;
  j["runs"] = n;
  // per-repeat medians with their mean and range
  const std::size_t per = n / spec.repeats;
  auto meds = nlohmann::ordered_json::array();
  std::vector<double> vals;
  for (std::size_t r = 0; r < spec.repeats; ++r) {
    const auto m = success_median(rows.subspan(r * per, per), spec.norm);
    meds.push_back(opt(m));
    if (m) vals.push_back(*m);
  }
  j["repeat_medians"] = meds;
  if (!vals.empty()) {
    double mean = 0.0;
    for (double v : vals) mean += v;
    j["repeat_median_mean"] = mean / static_cast<double>(vals.size());
    j["repeat_median_min"] = *std::min_element(vals.begin(), vals.end());
    j["repeat_median_max"] = *std::max_element(vals.begin(), vals.end());
  }
  j["rows"] = rows_json(rows);
  return j;
}

}  // namespace

nlohmann::ordered_json block_json(const BudgetBlock& block, const CampaignSpec& spec) {
  nlohmann::ordered_json j;
  j["budget"] = block.budget;
  if (!block.base.empty()) j["base"] = side_json(block.base, spec);
  if (!block.defended.empty()) j["defended"] = side_json(block.defended, spec);
  if (!block.base.empty() && !block.defended.empty()) {
    const auto b = success_median(block.base, spec.norm);
    const auto d = success_median(block.defended, spec.norm);
    if (b && d && *b > 0.0) j["median_ratio"] = *d / *b;
  }
  return j;
}

void write_asr_csv(std::ostream& os, const BudgetBlock& block, Norm norm) {
  const auto base = results_of(block.base);
  const auto def = results_of(block.defended);
  const auto old = os.precision(17);
  os << "epsilon,asr_base,asr_defended\n";
  for (double eps : asr_grid(norm)) {
    os << eps << ',';
    if (base.empty())
      os << "nan";
    else
      os << asr(base, eps, norm);
    os << ',';
    if (def.empty())
      os << "nan";
    else
      os << asr(def, eps, norm);
    os << '\n';
  }
  os.precision(old);
}

}  // namespace predcoin
