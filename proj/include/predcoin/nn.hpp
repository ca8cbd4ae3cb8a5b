#ifndef PREDCOIN_NN_HPP
#define PREDCOIN_NN_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "predcoin/common.hpp"

namespace predcoin {

enum class Activation : std::uint8_t { kRelu = 0, kSoftmax = 1, kIdentity = 2 };

/// Fully connected layer: out = act(W x + b), W stored row-major (rows x cols).
struct DenseLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec weights;
  Vec bias;
  Activation activation = Activation::kRelu;
};

struct LabeledData {
  std::vector<Vec> inputs;
  std::vector<ClassIndex> labels;
  std::size_t size() const { return inputs.size(); }
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 128;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

class DenseNetwork {
 public:
  DenseNetwork() = default;
  explicit DenseNetwork(std::vector<DenseLayer> layers);

  /// Glorot-uniform initialised MLP; ReLU on hidden layers, softmax output.
  /// `arch` lists layer widths including input and output, e.g. {784, 128, 10}.
  static DenseNetwork create(std::span<const std::size_t> arch, std::uint64_t seed);

  std::size_t input_dim() const { return layers_.front().cols; }
  std::size_t output_dim() const { return layers_.back().rows; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }
  std::vector<std::size_t> arch() const;

  Vec forward(std::span<const double> x) const;

  /// Sum of the first layer's post-activation outputs.
  double first_layer_sum(std::span<const double> x) const;

  bool all_finite() const;

 private:
  void validate() const;

  std::vector<DenseLayer> layers_;
};

/// Per-layer parameter gradients, same shapes as the network.
struct Gradients {
  std::vector<Vec> weights;
  std::vector<Vec> bias;
};

/// Mean cross-entropy over `batch` and its gradient with respect to every
/// parameter, by backpropagation.
double loss_and_gradients(const DenseNetwork& net, const LabeledData& data,
                          std::span<const std::size_t> batch, Gradients& grads);

double mean_loss(const DenseNetwork& net, const LabeledData& data);
double accuracy(const DenseNetwork& net, const LabeledData& data);

/// Mini-batch SGD with momentum starting from `init`.
DenseNetwork train(DenseNetwork init, const LabeledData& data, const TrainConfig& cfg);

/// Convenience: create(arch, cfg.seed) then train.
DenseNetwork train_classifier(const LabeledData& data, std::span<const std::size_t> arch,
                              const TrainConfig& cfg);

void save_model(const DenseNetwork& net, const std::filesystem::path& path);
DenseNetwork load_model(const std::filesystem::path& path);

}  // namespace predcoin

#endif
