#include "predcoin/defense.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace predcoin {

std::string to_string(FlipMode mode) {
  switch (mode) {
    case FlipMode::kOff:
      return "off";
    case FlipMode::kProbabilistic:
      return "prob";
    case FlipMode::kParity:
      return "parity";
  }
  return "off";
}

FlipMode parse_flip_mode(const std::string& name) {
  if (name == "off" || name == "none") return FlipMode::kOff;
  if (name == "prob" || name == "probabilistic") return FlipMode::kProbabilistic;
  if (name == "parity") return FlipMode::kParity;
  throw Error("unknown defense mode '" + name + "'");
}

void DefenseState::validate() const {
  if (!target) throw Error("defense: missing target model");
  if (!detector) throw Error("defense: missing detector model");
  if (detector->input_dim() != 3 || detector->output_dim() != 2)
    throw DimensionError("defense: detector must map 3 -> 2, input", 3, detector->input_dim());
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("defense: gamma must lie in [0,1]");
}

FQInput top3_descending(std::span<const double> p) {
  FQInput out{0.0, 0.0, 0.0};
  Vec sorted(p.begin(), p.end());
  const std::size_t k = std::min<std::size_t>(3, sorted.size());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<long>(k), sorted.end(), std::greater<>());
  std::copy_n(sorted.begin(), k, out.begin());
  return out;
}

Detection detect(const DefenseState& ds, std::span<const double> p) {
  const FQInput in = top3_descending(p);
  const double y1 = ds.detector->forward(in)[0];
  return {ds.flag_all || y1 >= ds.gamma, y1};
}

bool parity_of_sum(double s) {
  const double q = std::abs(std::round(s * 1e4));
  const double f = std::fmod(q, 10.0);
  return std::fmod(f, 2.0) == 0.0;
}

bool parity_flag(const DefenseState& ds, std::span<const double> x) {
  return parity_of_sum(ds.target->first_layer_sum(x));
}

ClassIndex defended_label(const DefenseState& ds, std::span<const double> x, std::span<const double> p,
                          Rng& rng) {
  const ClassIndex top = argmax(p);
  if (ds.mode == FlipMode::kOff) return top;
  if (!detect(ds, p).flagged) return top;
  bool flip = false;
  if (ds.mode == FlipMode::kProbabilistic) {
    flip = uniform01(rng) < 0.5;
  } else {
    flip = parity_flag(ds, x);
  }
  return flip ? second_argmax(p) : top;
}

ClassIndex defended_predict(const DefenseState& ds, std::span<const double> x, Rng& rng) {
  const Vec p = ds.target->forward(x);
  return defended_label(ds, x, p, rng);
}

void save_defense_config(const DefenseConfig& cfg, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["gamma"] = cfg.gamma;
  j["mode"] = to_string(cfg.mode);
  j["fq_path"] = cfg.fq_path;
  j["target_path"] = cfg.target_path;
  j["seed"] = cfg.seed;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DefenseConfig load_defense_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open defense config " + path.string());
  const auto j = nlohmann::json::parse(in);
  DefenseConfig cfg;
  cfg.gamma = j.at("gamma").get<double>();
  cfg.mode = parse_flip_mode(j.at("mode").get<std::string>());
  cfg.fq_path = j.at("fq_path").get<std::string>();
  cfg.target_path = j.at("target_path").get<std::string>();
  cfg.seed = j.value("seed", std::uint64_t{0});
  // relative model paths resolve against the config's directory
  const auto base = path.parent_path();
  if (!cfg.fq_path.empty() && std::filesystem::path(cfg.fq_path).is_relative())
    cfg.fq_path = (base / cfg.fq_path).string();
  if (!cfg.target_path.empty() && std::filesystem::path(cfg.target_path).is_relative())
    cfg.target_path = (base / cfg.target_path).string();
  return cfg;
}

DefenseState load_defense(const DefenseConfig& cfg) {
  DefenseState ds;
  ds.target = std::make_shared<DenseNetwork>(load_model(cfg.target_path));
  ds.detector = std::make_shared<DenseNetwork>(load_model(cfg.fq_path));
  ds.gamma = cfg.gamma;
  ds.mode = cfg.mode;
  ds.seed = cfg.seed;
  ds.validate();
  return ds;
}

}  // namespace predcoin
