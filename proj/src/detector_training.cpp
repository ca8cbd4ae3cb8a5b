#include "predcoin/detector_training.hpp"

#include <chrono>
#include <numeric>

namespace predcoin {

namespace {

Vec as_vec(const FQInput& in) { return Vec(in.begin(), in.end()); }

}  // namespace

FQDataset generate_fq_dataset(const DenseNetwork& target, const LabeledData& base, const SamplerConfig& cfg,
                              Rng& rng) {
  if (base.size() == 0) throw Error("fq dataset: empty base data");
  if (!(cfg.log_delta_lo <= cfg.log_delta_hi)) throw Error("fq dataset: bad delta range");
  auto net = std::make_shared<const DenseNetwork>(target);
  auto oracle = HardLabelOracle::model(net);
  const std::size_t d = target.input_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> log_delta(cfg.log_delta_lo, cfg.log_delta_hi);

  AttackConfig init_cfg;
  init_cfg.init_draws = cfg.init_draws;

  FQDataset out;
  std::vector<Vec> pool;
  for (const Vec& x_star : base.inputs) {
    const Vec p = target.forward(x_star);
    out.data.inputs.push_back(as_vec(top3_descending(p)));
    out.data.labels.push_back(kCleanClass);
    ++out.clean;

    const ClassIndex c_star = argmax(p);
    auto init = find_adversarial_init(oracle, x_star, c_star, init_cfg, rng);
    if (!init) {
      ++out.skipped;
      continue;
    }
    const Vec x_t = bisect_to_boundary(oracle, x_star, c_star, *init, cfg.bisection_tol, Norm::kL2, true);
    pool.push_back(as_vec(top3_descending(target.forward(x_t))));
    for (std::size_t s = 0; s < cfg.n_sphere; ++s) {
      const double delta = std::pow(10.0, log_delta(rng)) * scale;
      const Vec u = sample_sphere(d, rng);
      Vec q(d);
      for (std::size_t i = 0; i < d; ++i) q[i] = x_t[i] + delta * u[i];
      clip_unit(q);
      pool.push_back(as_vec(top3_descending(target.forward(q))));
    }
  }
  // balance: keep a random subset of the query side the size of the clean side
  std::shuffle(pool.begin(), pool.end(), rng);
  if (pool.size() > out.clean) pool.resize(out.clean);
  for (Vec& v : pool) {
    out.data.inputs.push_back(std::move(v));
    out.data.labels.push_back(kQueryClass);
    ++out.queries;
  }
  return out;
}

FQMetrics fq_metrics(const DenseNetwork& detector, double gamma, const LabeledData& eval) {
  if (eval.size() == 0) throw Error("fq_metrics: empty evaluation set");
  FQMetrics m;
  std::size_t fp = 0, fn = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const bool flagged = detector.forward(eval.inputs[i])[kQueryClass] >= gamma;
    if (eval.labels[i] == kCleanClass) {
      ++m.clean;
      fp += flagged;
    } else {
      ++m.queries;
      fn += !flagged;
    }
  }
  m.fp_rate = m.clean ? static_cast<double>(fp) / static_cast<double>(m.clean) : 0.0;
  m.fn_rate = m.queries ? static_cast<double>(fn) / static_cast<double>(m.queries) : 0.0;
  m.accuracy = 1.0 - static_cast<double>(fp + fn) / static_cast<double>(eval.size());
  return m;
}

FQMetrics fq_metrics(const DefenseState& ds, const LabeledData& eval) {
  if (ds.flag_all) return fq_metrics(*ds.detector, -1.0, eval);
  return fq_metrics(*ds.detector, ds.gamma, eval);
}

DenseNetwork make_detector(std::uint64_t seed) {
  const std::vector<std::size_t> arch{3, 64, 64, 32, 2};
  DenseNetwork net = DenseNetwork::create(arch, seed);
  net.mutable_layers().front().activation = Activation::kIdentity;
  return net;
}

FQTraining train_fq(const FQDataset& fq, const TrainConfig& cfg) {
  const LabeledData& all = fq.data;
  if (all.size() < 5) throw Error("train_fq: too few examples");
  bool has_clean = false, has_query = false;
  for (ClassIndex y : all.labels) (y == kCleanClass ? has_clean : has_query) = true;
  if (!has_clean || !has_query) throw Error("train_fq: detector data contains a single class");

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed ^ 0x5bd1e995ULL);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = all.size() * 4 / 5;
  LabeledData train_set, held;
  for (std::size_t i = 0; i < order.size(); ++i) {
    LabeledData& dst = i < n_train ? train_set : held;
    dst.inputs.push_back(all.inputs[order[i]]);
    dst.labels.push_back(all.labels[order[i]]);
  }
  const auto start = std::chrono::steady_clock::now();
  FQTraining out{train(make_detector(cfg.seed), train_set, cfg), {}, 0.0};
  out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.held_out = fq_metrics(out.detector, 0.5, held);
  return out;
}

GammaSearchResult gamma_search(const std::function<double(double)>& acc_loss, double cap, double tol) {
  if (!(cap > 0.0 && cap <= 1.0)) throw Error("gamma_search: cap must lie in (0,1]");
  if (!(tol > 0.0)) throw Error("gamma_search: tol must be positive");
  GammaSearchResult r;
  if (acc_loss(1.0) > cap) {
    r.warning = true;
    return r;
  }
  double lo = 0.0, hi = 1.0;
  while (hi - lo >= tol) {
    const double mid = 0.5 * (lo + hi);
    if (acc_loss(mid) <= cap)
      hi = mid;
    else
      lo = mid;
    ++r.iterations;
  }
  r.gamma = hi;
  r.bracket_lo = lo;
  r.bracket_hi = hi;
  return r;
}

GammaSearchResult gamma_search(const DefenseState& ds, const LabeledData& validation, double cap,
                               std::uint64_t eval_seed, double tol) {
  DefenseState probe = ds;
  probe.mode = FlipMode::kProbabilistic;
  probe.flag_all = false;
  return gamma_search(
      [&](double gamma) {
        probe.gamma = gamma;
        return accuracy_loss(probe, validation, eval_seed).delta;
      },
      cap, tol);
}

}  // namespace predcoin
