#include "predcoin/nn.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

namespace predcoin {

namespace {

void apply_activation(Activation act, std::span<double> z) {
  switch (act) {
    case Activation::kRelu:
      for (double& v : z) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::kIdentity:
      break;
    case Activation::kSoftmax: {
      const double mx = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (double& v : z) {
        v = std::exp(v - mx);
        s += v;
      }
      for (double& v : z) v /= s;
      break;
    }
  }
}

void affine(const DenseLayer& layer, std::span<const double> in, std::span<double> out) {
  for (std::size_t r = 0; r < layer.rows; ++r) {
    const double* w = layer.weights.data() + r * layer.cols;
    double s = layer.bias[r];
    for (std::size_t c = 0; c < layer.cols; ++c) s += w[c] * in[c];
    out[r] = s;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error("train config: learning_rate must be non-negative and finite");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("train config: momentum must lie in [0,1)");
  if (batch_size == 0) throw Error("train config: batch_size must be positive");
  if (epochs == 0) throw Error("train config: epochs must be positive");
}

DenseNetwork::DenseNetwork(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

void DenseNetwork::validate() const {
  if (layers_.empty()) throw FormatError("network has no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.rows == 0 || l.cols == 0) throw FormatError("layer " + std::to_string(i) + " has a zero dimension");
    if (l.weights.size() != l.rows * l.cols || l.bias.size() != l.rows)
      throw FormatError("layer " + std::to_string(i) + " parameter count does not match its shape");
    if (i > 0 && layers_[i - 1].rows != l.cols)
      throw DimensionError("layer " + std::to_string(i) + " input", layers_[i - 1].rows, l.cols);
  }
  if (layers_.back().activation != Activation::kSoftmax) throw FormatError("final activation must be softmax");
}

DenseNetwork DenseNetwork::create(std::span<const std::size_t> arch, std::uint64_t seed) {
  if (arch.size() < 2) throw Error("architecture needs at least input and output widths");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < arch.size(); ++i) {
    DenseLayer l;
    l.cols = arch[i];
    l.rows = arch[i + 1];
    if (l.rows == 0 || l.cols == 0) throw Error("architecture widths must be positive");
    l.activation = (i + 2 == arch.size()) ? Activation::kSoftmax : Activation::kRelu;
    const double limit = std::sqrt(6.0 / static_cast<double>(l.rows + l.cols));
    std::uniform_real_distribution<double> unif(-limit, limit);
    l.weights.resize(l.rows * l.cols);
    for (double& w : l.weights) w = unif(rng);
    l.bias.assign(l.rows, 0.0);
    layers.push_back(std::move(l));
  }
  return DenseNetwork(std::move(layers));
}

std::vector<std::size_t> DenseNetwork::arch() const {
  std::vector<std::size_t> a{input_dim()};
  for (const auto& l : layers_) a.push_back(l.rows);
  return a;
}

Vec DenseNetwork::forward(std::span<const double> x) const {
  check_dim("forward input", input_dim(), x.size());
  Vec cur(x.begin(), x.end());
  Vec next;
  for (const auto& l : layers_) {
    next.resize(l.rows);
    affine(l, cur, next);
    apply_activation(l.activation, next);
    cur.swap(next);
  }
  return cur;
}

double DenseNetwork::first_layer_sum(std::span<const double> x) const {
  check_dim("first_layer_sum input", input_dim(), x.size());
  const auto& l = layers_.front();
  Vec out(l.rows);
  affine(l, x, out);
  apply_activation(l.activation, out);
  return std::accumulate(out.begin(), out.end(), 0.0);
}

bool DenseNetwork::all_finite() const {
  for (const auto& l : layers_) {
    for (double w : l.weights)
      if (!std::isfinite(w)) return false;
    for (double b : l.bias)
      if (!std::isfinite(b)) return false;
  }
  return true;
}

namespace {

void check_data(const DenseNetwork& net, const LabeledData& data) {
  if (data.size() == 0) throw Error("dataset is empty");
  if (data.labels.size() != data.inputs.size()) throw Error("dataset inputs/labels count mismatch");
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_dim("training input", net.input_dim(), data.inputs[i].size());
    if (data.labels[i] >= net.output_dim())
      throw Error("label " + std::to_string(data.labels[i]) + " out of range [0," +
                  std::to_string(net.output_dim()) + ")");
  }
}

void zero_like(const DenseNetwork& net, Gradients& g) {
  const auto& layers = net.layers();
  g.weights.resize(layers.size());
  g.bias.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    g.weights[i].assign(layers[i].weights.size(), 0.0);
    g.bias[i].assign(layers[i].bias.size(), 0.0);
  }
}

// Backprop for a single example; accumulates into grads and returns its loss.
// Softmax is only supported as the final activation (cross-entropy pairing).
double accumulate_example(const DenseNetwork& net, std::span<const double> x, ClassIndex label,
                          Gradients& grads, std::vector<Vec>& acts) {
  const auto& layers = net.layers();
  const std::size_t n = layers.size();
  acts.resize(n + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t i = 0; i < n; ++i) {
    acts[i + 1].resize(layers[i].rows);
    affine(layers[i], acts[i], acts[i + 1]);
    apply_activation(layers[i].activation, acts[i + 1]);
  }
  const double p = std::max(acts[n][label], 1e-300);
  const double loss = -std::log(p);

  Vec delta = acts[n];
  delta[label] -= 1.0;
  Vec prev;
  for (std::size_t li = n; li-- > 0;) {
    const auto& l = layers[li];
    const Vec& in = acts[li];
    double* gw = grads.weights[li].data();
    for (std::size_t r = 0; r < l.rows; ++r) {
      const double d = delta[r];
      grads.bias[li][r] += d;
      if (d == 0.0) continue;
      double* row = gw + r * l.cols;
      for (std::size_t c = 0; c < l.cols; ++c) row[c] += d * in[c];
    }
    if (li == 0) break;
    prev.assign(l.cols, 0.0);
    for (std::size_t r = 0; r < l.rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* w = l.weights.data() + r * l.cols;
      for (std::size_t c = 0; c < l.cols; ++c) prev[c] += d * w[c];
    }
    switch (layers[li - 1].activation) {
      case Activation::kRelu:
        for (std::size_t c = 0; c < l.cols; ++c)
          if (in[c] <= 0.0) prev[c] = 0.0;
        break;
      case Activation::kIdentity:
        break;
      case Activation::kSoftmax:
        throw UnsupportedOperation("softmax is only supported on the output layer");
    }
    delta.swap(prev);
  }
  return loss;
}

}  // namespace

double loss_and_gradients(const DenseNetwork& net, const LabeledData& data,
                          std::span<const std::size_t> batch, Gradients& grads) {
  zero_like(net, grads);
  std::vector<Vec> acts;
  double loss = 0.0;
  for (std::size_t idx : batch) loss += accumulate_example(net, data.inputs[idx], data.labels[idx], grads, acts);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < grads.weights.size(); ++i) {
    for (double& g : grads.weights[i]) g *= inv;
    for (double& g : grads.bias[i]) g *= inv;
  }
  return loss * inv;
}

double mean_loss(const DenseNetwork& net, const LabeledData& data) {
  check_data(net, data);
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    s -= std::log(std::max(net.forward(data.inputs[i])[data.labels[i]], 1e-300));
  return s / static_cast<double>(data.size());
}

double accuracy(const DenseNetwork& net, const LabeledData& data) {
  if (data.size() == 0) throw Error("dataset is empty");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < data.size(); ++i) ok += argmax(net.forward(data.inputs[i])) == data.labels[i];
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

DenseNetwork train(DenseNetwork net, const LabeledData& data, const TrainConfig& cfg) {
  cfg.validate();
  check_data(net, data);
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  Gradients grads;
  Gradients velocity;
  zero_like(net, velocity);
  auto& layers = net.mutable_layers();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      loss_and_gradients(net, data, std::span(order).subspan(start, end - start), grads);
      for (std::size_t li = 0; li < layers.size(); ++li) {
        auto step = [&](Vec& param, Vec& vel, const Vec& g) {
          for (std::size_t k = 0; k < param.size(); ++k) {
            vel[k] = cfg.momentum * vel[k] - cfg.learning_rate * g[k];
            param[k] += vel[k];
          }
        };
        step(layers[li].weights, velocity.weights[li], grads.weights[li]);
        step(layers[li].bias, velocity.bias[li], grads.bias[li]);
      }
      if (!net.all_finite()) throw Error("training diverged: non-finite weights");
    }
  }
  return net;
}

DenseNetwork train_classifier(const LabeledData& data, std::span<const std::size_t> arch,
                              const TrainConfig& cfg) {
  return train(DenseNetwork::create(arch, cfg.seed), data, cfg);
}

// ---------------------------------------------------------------------------
// PCNN weight file

namespace {

constexpr char kMagic[4] = {'P', 'C', 'N', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "PCNN I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size()) throw FormatError("truncated");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const DenseNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.rows));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.cols));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(l.activation));
    for (double w : l.weights) put<double>(out, w);
    for (double b : l.bias) put<double>(out, b);
  }
  if (!out) throw Error("write failed for " + path.string());
}

DenseNetwork load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4) throw FormatError("truncated");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("bad magic");
  Reader r(std::vector<char>(buf.begin() + 4, buf.end()));
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) throw FormatError("unsupported format version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  if (count == 0) throw FormatError("dimension header mismatch: zero layers");
  std::vector<DenseLayer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    DenseLayer l;
    l.rows = r.get<std::uint32_t>();
    l.cols = r.get<std::uint32_t>();
    const auto tag = r.get<std::uint8_t>();
    if (tag > 2) throw FormatError("unknown activation tag " + std::to_string(tag));
    l.activation = static_cast<Activation>(tag);
    if (l.rows == 0 || l.cols == 0) throw FormatError("dimension header mismatch: zero width");
    if (!layers.empty() && layers.back().rows != l.cols)
      throw FormatError("dimension header mismatch: layer " + std::to_string(i) + " expects " +
                        std::to_string(l.cols) + " inputs, previous layer emits " +
                        std::to_string(layers.back().rows));
    const std::size_t need = (l.rows * l.cols + l.rows) * sizeof(double);
    if (r.remaining() < need) throw FormatError("truncated");
    l.weights.resize(l.rows * l.cols);
    for (double& w : l.weights) w = r.get<double>();
    l.bias.resize(l.rows);
    for (double& b : l.bias) b = r.get<double>();
    layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) throw FormatError("dimension header mismatch: trailing bytes");
  return DenseNetwork(std::move(layers));
}

}  // namespace predcoin
