#ifndef PREDCOIN_TEST_SUPPORT_HPP
#define PREDCOIN_TEST_SUPPORT_HPP

#include <cmath>
#include <memory>

#include "predcoin/dataset.hpp"

namespace testing {

inline predcoin::LabeledData mnist_train(std::size_t n) {
  return predcoin::load_idx(PREDCOIN_DATA_DIR "/train-images-idx3-ubyte", PREDCOIN_DATA_DIR "/train-labels-idx1-ubyte",
                            n);
}

inline predcoin::LabeledData mnist_test(std::size_t n) {
  return predcoin::load_idx(PREDCOIN_DATA_DIR "/test-images-idx3-ubyte", PREDCOIN_DATA_DIR "/test-labels-idx1-ubyte",
                            n);
}

/// Small MNIST classifier shared by tests that need a model-backed oracle.
inline std::shared_ptr<const predcoin::DenseNetwork> small_mnist_target() {
  static const auto net = [] {
    predcoin::TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 3;
    const std::vector<std::size_t> arch{784, 32, 10};
    return std::make_shared<const predcoin::DenseNetwork>(predcoin::train_classifier(mnist_train(1000), arch, cfg));
  }();
  return net;
}

/// 3 -> 2 softmax detector whose y1 output is `y1` for every input.
inline std::shared_ptr<const predcoin::DenseNetwork> constant_detector(double y1) {
  predcoin::DenseLayer l;
  l.rows = 2;
  l.cols = 3;
  l.weights.assign(6, 0.0);
  l.bias = {std::log(y1), std::log1p(-y1)};
  l.activation = predcoin::Activation::kSoftmax;
  return std::make_shared<const predcoin::DenseNetwork>(std::vector<predcoin::DenseLayer>{l});
}

/// 3 -> 2 softmax detector with y1 = sigmoid(slope * (top1 - cut)).
inline std::shared_ptr<const predcoin::DenseNetwork> top1_detector(double cut, double slope) {
  predcoin::DenseLayer l;
  l.rows = 2;
  l.cols = 3;
  l.weights = {slope, 0.0, 0.0, 0.0, 0.0, 0.0};
  l.bias = {-slope * cut, 0.0};
  l.activation = predcoin::Activation::kSoftmax;
  return std::make_shared<const predcoin::DenseNetwork>(std::vector<predcoin::DenseLayer>{l});
}

}  // namespace testing

#endif
