#include "predcoin/oracle.hpp"

#include <limits>

namespace predcoin {

namespace {
template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;
}  // namespace

HardLabelOracle HardLabelOracle::model(std::shared_ptr<const DenseNetwork> net) {
  if (!net) throw Error("oracle: null model");
  return HardLabelOracle(ModelBackend{std::move(net), std::nullopt});
}

HardLabelOracle HardLabelOracle::defended(DefenseState defense, std::uint64_t seed) {
  defense.validate();
  auto net = defense.target;
  return HardLabelOracle(ModelBackend{std::move(net), std::move(defense)}, seed);
}

HardLabelOracle HardLabelOracle::linear(Vec w, double b) {
  if (w.empty()) throw Error("oracle: empty weight vector");
  return HardLabelOracle(LinearBoundary{std::move(w), b});
}

HardLabelOracle HardLabelOracle::quadratic(Vec center, double radius) {
  if (center.empty()) throw Error("oracle: empty center");
  if (!(radius > 0.0)) throw Error("oracle: radius must be positive");
  return HardLabelOracle(QuadraticBoundary{std::move(center), radius});
}

std::size_t HardLabelOracle::dim() const {
  return std::visit(Overloaded{[](const ModelBackend& m) { return m.net->input_dim(); },
                               [](const LinearBoundary& l) { return l.w.size(); },
                               [](const QuadraticBoundary& q) { return q.center.size(); }},
                    backend_);
}

std::size_t HardLabelOracle::num_classes() const {
  if (const auto* m = std::get_if<ModelBackend>(&backend_)) return m->net->output_dim();
  return 2;
}

bool HardLabelOracle::is_analytic() const { return !std::holds_alternative<ModelBackend>(backend_); }

std::uint64_t HardLabelOracle::remaining() const {
  if (!limit_) return std::numeric_limits<std::uint64_t>::max();
  return *limit_ > count_ ? *limit_ - count_ : 0;
}

ClassIndex HardLabelOracle::query_label(std::span<const double> x) {
  check_dim("query_label input", dim(), x.size());
  if (limit_ && count_ >= *limit_) throw BudgetExhausted(0);
  ++count_;
  return std::visit(Overloaded{[&](const ModelBackend& m) -> ClassIndex {
                                 const Vec p = m.net->forward(x);
                                 if (m.defense) return defended_label(*m.defense, x, p, rng_);
                                 return argmax(p);
                               },
                               [&](const LinearBoundary& l) -> ClassIndex { return dot(l.w, x) + l.b > 0.0 ? 1 : 0; },
                               [&](const QuadraticBoundary& q) -> ClassIndex {
                                 double s = 0.0;
                                 for (std::size_t i = 0; i < x.size(); ++i)
                                   s += (x[i] - q.center[i]) * (x[i] - q.center[i]);
                                 return q.radius * q.radius - s > 0.0 ? 1 : 0;
                               }},
                    backend_);
}

std::pair<double, Vec> HardLabelOracle::margin_gradient(std::span<const double> x) const {
  check_dim("margin_gradient input", dim(), x.size());
  if (const auto* l = std::get_if<LinearBoundary>(&backend_)) return {dot(l->w, x) + l->b, l->w};
  if (const auto* q = std::get_if<QuadraticBoundary>(&backend_)) {
    Vec g(x.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double diff = x[i] - q->center[i];
      s += diff * diff;
      g[i] = -2.0 * diff;
    }
    return {q->radius * q->radius - s, std::move(g)};
  }
  throw UnsupportedOperation("margin_gradient requires an analytic oracle");
}

Phi phi(HardLabelOracle& o, ClassIndex c_star, std::span<const double> x) {
  return o.query_label(x) != c_star ? Phi::kHit : Phi::kMiss;
}

}  // namespace predcoin
