// predcoin: train targets and detectors, tune the defense, run attack
// campaigns and the estimator checks from one binary.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "predcoin/campaign.hpp"
#include "predcoin/detector_training.hpp"
#include "predcoin/theory.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace predcoin;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "runs";
  std::string defense;
  std::string attack;
  std::string adaptive;
  std::string norm;
  std::size_t k = 0;
  std::vector<std::uint64_t> budgets;
};

struct Context {
  Options opt;
  json cfg = json::object();
  fs::path config_dir = ".";
  fs::path out;

  const json& section(const char* name) const {
    static const json empty = json::object();
    return cfg.contains(name) ? cfg.at(name) : empty;
  }

  std::uint64_t seed() const { return opt.seed_set ? opt.seed : cfg.value("seed", std::uint64_t{0}); }

  // config paths are relative to the config file; defaults live in --out
  fs::path path(const char* sec, const char* key, const char* fallback) const {
    const json& s = section(sec);
    if (s.contains(key) && s.at(key).is_string()) {
      fs::path p = s.at(key).get<std::string>();
      return p.is_relative() ? config_dir / p : p;
    }
    return out / fallback;
  }
};

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

TrainConfig train_config(const json& j, std::uint64_t seed) {
  TrainConfig t;
  t.learning_rate = get_or(j, "learning_rate", t.learning_rate);
  t.momentum = get_or(j, "momentum", t.momentum);
  t.batch_size = get_or(j, "batch_size", t.batch_size);
  t.epochs = get_or(j, "epochs", t.epochs);
  t.seed = seed;
  t.validate();
  return t;
}

json train_config_json(const TrainConfig& t) {
  json j;
  j["learning_rate"] = t.learning_rate;
  j["momentum"] = t.momentum;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["seed"] = t.seed;
  return j;
}

void save_with_sidecar(const DenseNetwork& net, const TrainConfig& t, const fs::path& p) {
  save_model(net, p);
  json side;
  side["arch"] = net.arch();
  side["seed"] = t.seed;
  side["train"] = train_config_json(t);
  write_json(fs::path(p).replace_extension(".json"), side);
}

struct Splits {
  LabeledData train;
  LabeledData validation;
  LabeledData test;
};

// train_limit items train the target; the next validation_size items of the
// training file are held back for threshold tuning.
Splits load_data(const Context& ctx) {
  const json& d = ctx.section("data");
  const std::string kind = get_or<std::string>(d, "kind", "idx");
  const std::size_t n_train = get_or<std::size_t>(d, "train_limit", 5000);
  const std::size_t n_val = get_or<std::size_t>(d, "validation_size", 500);
  const std::size_t n_test = get_or<std::size_t>(d, "test_limit", 1000);
  Splits s;
  LabeledData pool;
  if (kind == "blobs") {
    BlobsConfig b;
    b.dim = get_or(d, "dim", b.dim);
    b.separation = get_or(d, "separation", b.separation);
    b.sigma = get_or(d, "sigma", b.sigma);
    b.seed = get_or(d, "seed", std::uint64_t{1});
    b.per_class = (n_train + n_val + n_test + 1) / 2;
    pool = make_blobs(b);
    s.test.inputs.assign(pool.inputs.end() - static_cast<long>(n_test), pool.inputs.end());
    s.test.labels.assign(pool.labels.end() - static_cast<long>(n_test), pool.labels.end());
  } else if (kind == "idx") {
    auto p = [&](const char* key) {
      fs::path q = d.at(key).get<std::string>();
      return q.is_relative() ? ctx.config_dir / q : q;
    };
    pool = load_idx(p("train_images"), p("train_labels"), n_train + n_val);
    s.test = load_idx(p("test_images"), p("test_labels"), n_test);
  } else {
    throw Error("unknown data kind '" + kind + "'");
  }
  const std::size_t cut = std::min(n_train, pool.size());
  const std::size_t end = std::min(cut + n_val, pool.size());
  s.train.inputs.assign(pool.inputs.begin(), pool.inputs.begin() + static_cast<long>(cut));
  s.train.labels.assign(pool.labels.begin(), pool.labels.begin() + static_cast<long>(cut));
  s.validation.inputs.assign(pool.inputs.begin() + static_cast<long>(cut), pool.inputs.begin() + static_cast<long>(end));
  s.validation.labels.assign(pool.labels.begin() + static_cast<long>(cut), pool.labels.begin() + static_cast<long>(end));
  return s;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void cmd_train_target(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const Splits data = load_data(ctx);
  const json& t = ctx.section("target");
  const auto arch = get_or<std::vector<std::size_t>>(t, "arch", {784, 128, 64, 10});
  const TrainConfig tc = train_config(t.contains("train") ? t.at("train") : json::object(), ctx.seed());
  const DenseNetwork net = train_classifier(data.train, arch, tc);
  const fs::path path = ctx.out / "target.pcnn";
  save_with_sidecar(net, tc, path);

  json m;
  m["train_size"] = data.train.size();
  m["test_size"] = data.test.size();
  m["train_loss"] = mean_loss(net, data.train);
  m["train_accuracy"] = accuracy(net, data.train);
  m["test_accuracy"] = accuracy(net, data.test);
  m["timing"]["seconds"] = seconds_since(t0);
  write_json(ctx.out / "train_metrics.json", m);
  std::cout << "target: test accuracy " << m["test_accuracy"].get<double>() << " -> " << path.string() << '\n';
}

void write_fq_csv(const fs::path& p, const LabeledData& data) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out.precision(17);
  out << "label,top1,top2,top3\n";
  for (std::size_t i = 0; i < data.size(); ++i)
    out << data.labels[i] << ',' << data.inputs[i][0] << ',' << data.inputs[i][1] << ',' << data.inputs[i][2] << '\n';
}

FQDataset read_fq_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open detector data " + p.string());
  FQDataset fq;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 4) throw FormatError("detector data: expected 4 columns");
    const auto label = static_cast<ClassIndex>(v[0]);
    fq.data.labels.push_back(label);
    fq.data.inputs.push_back({v[1], v[2], v[3]});
    (label == kCleanClass ? fq.clean : fq.queries) += 1;
  }
  return fq;
}

void cmd_gen_fq_data(const Context& ctx) {
  const Splits data = load_data(ctx);
  const DenseNetwork target = load_model(ctx.path("target", "path", "target.pcnn"));
  const json& d = ctx.section("detector");
  SamplerConfig sc;
  sc.n_sphere = get_or(d, "n_sphere", sc.n_sphere);
  sc.log_delta_lo = get_or(d, "log_delta_lo", sc.log_delta_lo);
  sc.log_delta_hi = get_or(d, "log_delta_hi", sc.log_delta_hi);
  sc.init_draws = get_or(d, "init_draws", sc.init_draws);
  const std::size_t n = std::min(get_or<std::size_t>(d, "base_points", 500), data.train.size());
  LabeledData base;
  base.inputs.assign(data.train.inputs.begin(), data.train.inputs.begin() + static_cast<long>(n));
  base.labels.assign(data.train.labels.begin(), data.train.labels.begin() + static_cast<long>(n));
  Rng rng(ctx.seed());
  const FQDataset fq = generate_fq_dataset(target, base, sc, rng);
  write_fq_csv(ctx.out / "fq_data.csv", fq.data);
  json s;
  s["base_points"] = n;
  s["clean"] = fq.clean;
  s["queries"] = fq.queries;
  s["skipped"] = fq.skipped;
  write_json(ctx.out / "fq_data.json", s);
  std::cout << "detector data: " << fq.clean << " clean, " << fq.queries << " query rows, " << fq.skipped
            << " skipped\n";
}

json fq_metrics_json(const FQMetrics& m) {
  json j;
  j["fp_rate"] = m.fp_rate;
  j["fn_rate"] = m.fn_rate;
  j["accuracy"] = m.accuracy;
  j["clean"] = m.clean;
  j["queries"] = m.queries;
  return j;
}

void cmd_train_fq(const Context& ctx) {
  const FQDataset fq = read_fq_csv(ctx.path("detector", "data_path", "fq_data.csv"));
  const json& d = ctx.section("detector");
  const TrainConfig tc = train_config(d.contains("train") ? d.at("train") : json::object(), ctx.seed());
  const FQTraining res = train_fq(fq, tc);
  save_with_sidecar(res.detector, tc, ctx.out / "fq.pcnn");
  json m = fq_metrics_json(res.held_out);
  m["timing"]["seconds"] = res.train_seconds;
  write_json(ctx.out / "fq_metrics.json", m);
  std::cout << "detector: held-out accuracy " << res.held_out.accuracy << " FP " << res.held_out.fp_rate << " FN "
            << res.held_out.fn_rate << '\n';
}

FlipMode requested_mode(const Context& ctx) {
  if (!ctx.opt.defense.empty()) return parse_flip_mode(ctx.opt.defense);
  return parse_flip_mode(get_or<std::string>(ctx.section("defense"), "mode", "prob"));
}

void cmd_gamma_search(const Context& ctx) {
  const Splits data = load_data(ctx);
  const fs::path target_path = ctx.path("target", "path", "target.pcnn");
  const fs::path fq_path = ctx.path("detector", "path", "fq.pcnn");
  const json& d = ctx.section("defense");
  const double cap = get_or(d, "acc_loss_cap", 0.02);
  const std::uint64_t eval_seed = get_or(d, "eval_seed", ctx.seed());

  DefenseState ds;
  ds.target = std::make_shared<DenseNetwork>(load_model(target_path));
  ds.detector = std::make_shared<DenseNetwork>(load_model(fq_path));
  const LabeledData& val = data.validation.size() ? data.validation : data.test;
  const GammaSearchResult r = gamma_search(ds, val, cap, eval_seed);
  if (r.warning) std::cerr << "warning: no threshold keeps the accuracy loss under " << cap << "; using 1\n";

  DefenseConfig dc;
  dc.gamma = r.gamma;
  dc.mode = requested_mode(ctx);
  dc.fq_path = fs::proximate(fq_path, ctx.out).string();
  dc.target_path = fs::proximate(target_path, ctx.out).string();
  dc.seed = ctx.seed();
  save_defense_config(dc, ctx.out / "defense.json");

  ds.gamma = r.gamma;
  ds.mode = FlipMode::kProbabilistic;
  const AccuracyLoss loss = accuracy_loss(ds, val, eval_seed);
  json s;
  s["gamma"] = r.gamma;
  s["iterations"] = r.iterations;
  s["bracket"] = {r.bracket_lo, r.bracket_hi};
  s["warning"] = r.warning;
  s["acc_loss_cap"] = cap;
  s["acc_loss"] = loss.delta;
  s["validation_size"] = val.size();
  write_json(ctx.out / "gamma_search.json", s);
  std::cout << "gamma " << r.gamma << " after " << r.iterations << " bisections (validation loss " << loss.delta
            << ")\n";
}

CampaignSpec campaign_spec(const Context& ctx) {
  const json& a = ctx.section("attack");
  CampaignSpec s;
  s.attack = parse_attack(ctx.opt.attack.empty() ? get_or<std::string>(a, "name", "hsja") : ctx.opt.attack);
  s.norm = parse_norm(ctx.opt.norm.empty() ? get_or<std::string>(a, "norm", "l2") : ctx.opt.norm);
  s.budgets = ctx.opt.budgets.empty() ? get_or<std::vector<std::uint64_t>>(a, "budgets", {500, 2000}) : ctx.opt.budgets;
  s.seed = ctx.seed();
  s.repeats = get_or<std::size_t>(a, "repeats", 1);
  s.adaptive =
      parse_adaptive(ctx.opt.adaptive.empty() ? get_or<std::string>(a, "adaptive", "none") : ctx.opt.adaptive);
  s.k = ctx.opt.k ? ctx.opt.k : get_or<std::size_t>(a, "k", 1);
  s.bypass_delta_max = get_or(a, "bypass_delta_max", s.bypass_delta_max);
  return s;
}

DefenseState defense_state(const Context& ctx, FlipMode mode) {
  DefenseConfig dc = load_defense_config(ctx.path("defense", "path", "defense.json"));
  dc.mode = mode;
  return load_defense(dc);
}

CampaignInputs campaign_inputs(const Context& ctx, const Splits& data) {
  CampaignInputs in;
  in.target = std::make_shared<DenseNetwork>(load_model(ctx.path("target", "path", "target.pcnn")));
  const std::size_t n = get_or<std::size_t>(ctx.section("attack"), "seeds", 50);
  for (std::size_t i : pick_correct(*in.target, data.test, n)) {
    in.seeds.push_back(data.test.inputs[i]);
    in.labels.push_back(data.test.labels[i]);
  }
  return in;
}

json report_head(const Context& ctx, const CampaignSpec& spec, const CampaignInputs& in, const std::string& defense) {
  json r;
  r["schema_version"] = kReportSchemaVersion;
  r["config"] = ctx.cfg;
  r["campaign"] = spec_json(spec);
  r["defense"] = defense;
  r["seed_images"] = in.seeds.size();
  return r;
}

void write_campaign(const Context& ctx, json& report, const std::vector<BudgetBlock>& blocks, const CampaignSpec& spec) {
  report["budgets"] = json::array();
  for (const auto& b : blocks) {
    report["budgets"].push_back(block_json(b, spec));
    std::ofstream csv(ctx.out / ("asr_" + std::to_string(b.budget) + ".csv"));
    write_asr_csv(csv, b, spec.norm);
  }
  write_json(ctx.out / "report.json", report);
}

void print_summary(const std::vector<BudgetBlock>& blocks, const CampaignSpec& spec) {
  for (const auto& b : blocks) {
    std::cout << "budget " << b.budget;
    if (!b.base.empty()) {
      const auto m = success_median(b.base, spec.norm);
      std::cout << "  base median " << (m ? std::to_string(*m) : "n/a");
    }
    if (!b.defended.empty()) {
      const auto m = success_median(b.defended, spec.norm);
      std::cout << "  defended median " << (m ? std::to_string(*m) : "n/a");
    }
    std::cout << '\n';
  }
}

void cmd_attack(const Context& ctx) {
  const Splits data = load_data(ctx);
  CampaignSpec spec = campaign_spec(ctx);
  CampaignInputs in = campaign_inputs(ctx, data);
  const std::string def = ctx.opt.defense.empty() ? "none" : ctx.opt.defense;
  if (def != "none") {
    in.defense = defense_state(ctx, parse_flip_mode(def));
    spec.run_base = false;
  }
  const auto blocks = run_campaign(in, spec);
  json report = report_head(ctx, spec, in, def);
  write_campaign(ctx, report, blocks, spec);
  print_summary(blocks, spec);
}

void cmd_evaluate(const Context& ctx) {
  const Splits data = load_data(ctx);
  CampaignSpec spec = campaign_spec(ctx);
  CampaignInputs in = campaign_inputs(ctx, data);
  const FlipMode mode = requested_mode(ctx);
  if (mode == FlipMode::kOff) throw Error("evaluate needs an active defense (--defense prob|parity)");
  in.defense = defense_state(ctx, mode);
  const DefenseState& ds = *in.defense;

  const auto blocks = run_campaign(in, spec);
  json report = report_head(ctx, spec, in, to_string(mode));

  const std::uint64_t eval_seed = get_or(ctx.section("defense"), "eval_seed", ctx.seed());
  const AccuracyLoss loss = accuracy_loss(ds, data.test, eval_seed);
  json acc;
  acc["acc_base"] = loss.acc_base;
  acc["acc_defended"] = loss.acc_defended;
  acc["delta"] = loss.delta;
  acc["se"] = loss.se;
  acc["flagged"] = loss.flagged;
  acc["bound"] = loss.flagged / 2.0;
  report["accuracy_loss"] = acc;
  report["gamma"] = ds.gamma;

  const fs::path fq_data = ctx.path("detector", "data_path", "fq_data.csv");
  if (fs::exists(fq_data)) report["fq_metrics"] = fq_metrics_json(fq_metrics(ds, read_fq_csv(fq_data).data));

  const json& e = ctx.section("evaluate");
  const std::size_t batch_n = std::min(get_or<std::size_t>(e, "timing_batch", 256), data.test.size());
  std::vector<Vec> batch(data.test.inputs.begin(), data.test.inputs.begin() + static_cast<long>(batch_n));
  const TimingRatio tr = inference_time_ratio(ds, batch, get_or<std::size_t>(e, "timing_reps", 5));
  report["timing"]["inference_base_seconds"] = tr.base_seconds;
  report["timing"]["inference_defended_seconds"] = tr.defended_seconds;
  report["timing"]["inference_time_ratio"] = tr.ratio;

  write_campaign(ctx, report, blocks, spec);
  print_summary(blocks, spec);
  std::cout << "accuracy loss " << loss.delta << " (se " << loss.se << "), inference time ratio " << tr.ratio << '\n';
}

void cmd_verify_theory(const Context& ctx) {
  const json& t = ctx.section("theory");
  ConvergenceConfig cc;
  cc.dims = get_or(t, "dims", cc.dims);
  cc.deltas = get_or(t, "deltas", cc.deltas);
  cc.samples = get_or(t, "samples", cc.samples);
  cc.radius = get_or(t, "radius", cc.radius);
  cc.seed = ctx.seed();
  const auto rows = convergence_experiment(cc);
  {
    std::ofstream csv(ctx.out / "theory.csv");
    write_convergence_csv(csv, rows);
  }

  const json& c = t.contains("collapse") ? t.at("collapse") : json::object();
  CollapseConfig fc;
  fc.d = get_or(c, "d", fc.d);
  fc.delta = get_or(c, "delta", fc.delta);
  fc.samples = get_or(c, "samples", fc.samples);
  fc.trials = get_or(c, "trials", fc.trials);
  fc.flip_prob = get_or(c, "flip_prob", fc.flip_prob);
  fc.seed = ctx.seed();
  const CollapseStats cs = flip_collapse_experiment(fc);

  json out;
  out["collapse"] = {{"d", fc.d},
                     {"delta", fc.delta},
                     {"samples", fc.samples},
                     {"trials", fc.trials},
                     {"flip_prob", fc.flip_prob},
                     {"mean_norm", cs.mean_norm},
                     {"mean_cos", cs.mean_cos},
                     {"std_cos", cs.std_cos},
                     {"baseline_mean_norm", cs.baseline_mean_norm},
                     {"baseline_mean_cos", cs.baseline_mean_cos},
                     {"baseline_se", cs.baseline_se}};
  const json& b = t.contains("beta") ? t.at("beta") : json::object();
  out["beta"] = json::array();
  for (std::size_t d : get_or<std::vector<std::size_t>>(b, "dims", {2, 10})) {
    const BetaCheck bc = beta_projection_check(d, get_or<std::size_t>(b, "samples", 100000), ctx.seed());
    out["beta"].push_back({{"d", d},
                           {"mean", bc.mean},
                           {"expected_mean", bc.expected_mean},
                           {"se_mean", bc.se_mean},
                           {"var", bc.var},
                           {"expected_var", bc.expected_var},
                           {"se_var", bc.se_var},
                           {"pass", bc.pass}});
  }
  write_json(ctx.out / "theory.json", out);

  std::size_t passed = 0;
  for (const auto& r : rows) passed += r.pass;
  std::cout << "convergence rows passing: " << passed << "/" << rows.size() << "; collapse mean cos " << cs.mean_cos
            << ", mean norm " << cs.mean_norm << " (baseline se " << cs.baseline_se << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PredCoin attacks, defense and evaluation"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "experiment configuration (JSON)");
    sub->add_option("--seed", opt.seed, "base random seed")->each([&](const std::string&) { opt.seed_set = true; });
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--defense", opt.defense, "defense mode")->check(CLI::IsMember({"none", "prob", "parity"}));
    sub->add_option("--attack", opt.attack, "attack")->check(CLI::IsMember({"ba", "signopt", "hsja", "sfa"}));
    sub->add_option("--adaptive", opt.adaptive, "defense-aware variant")
        ->check(CLI::IsMember({"none", "bypass", "uncertainty"}));
    sub->add_option("--k", opt.k, "repeat count for the uncertainty-aware attack")->check(CLI::PositiveNumber);
    sub->add_option("--norm", opt.norm, "distance norm")->check(CLI::IsMember({"l2", "linf"}));
    sub->add_option("--budget", opt.budgets, "query budgets")->delimiter(',');
  };

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train-target", "train the target classifier"},
      {"gen-fq-data", "sample clean and boundary-query confidences for the detector"},
      {"train-fq", "train the query detector"},
      {"gamma-search", "pick the detector threshold under an accuracy-loss cap"},
      {"attack", "run an attack campaign against one oracle"},
      {"evaluate", "paired undefended/defended campaign plus accuracy loss and timing"},
      {"verify-theory", "estimator convergence, flip collapse and projection moments"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

  CLI11_PARSE(app, argc, argv);

  try {
    Context ctx;
    ctx.opt = opt;
    if (!opt.config.empty()) {
      std::ifstream in(opt.config);
      if (!in) throw Error("cannot open config " + opt.config);
      ctx.cfg = json::parse(in);
      ctx.config_dir = fs::path(opt.config).parent_path();
      if (ctx.config_dir.empty()) ctx.config_dir = ".";
    }
    ctx.out = opt.out;
    fs::create_directories(ctx.out);

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "train-target") cmd_train_target(ctx);
    if (cmd == "gen-fq-data") cmd_gen_fq_data(ctx);
    if (cmd == "train-fq") cmd_train_fq(ctx);
    if (cmd == "gamma-search") cmd_gamma_search(ctx);
    if (cmd == "attack") cmd_attack(ctx);
    if (cmd == "evaluate") cmd_evaluate(ctx);
    if (cmd == "verify-theory") cmd_verify_theory(ctx);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
