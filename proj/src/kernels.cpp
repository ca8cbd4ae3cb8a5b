#include "predcoin/kernels.hpp"

namespace predcoin::kernels {

std::vector<Vec> forward_batch_serial(const DenseNetwork& net, const std::vector<Vec>& inputs) {
  std::vector<Vec> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = net.forward(inputs[i]);
  return out;
}

std::vector<Vec> forward_batch_parallel(const DenseNetwork& net, const std::vector<Vec>& inputs) {
  std::vector<Vec> out(inputs.size());
  const auto n = static_cast<long>(inputs.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = net.forward(inputs[i]);
  return out;
}

std::vector<ClassIndex> predict_serial(const DenseNetwork& net, const std::vector<Vec>& inputs) {
  std::vector<ClassIndex> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = argmax(net.forward(inputs[i]));
  return out;
}

std::vector<ClassIndex> predict_parallel(const DenseNetwork& net, const std::vector<Vec>& inputs) {
  std::vector<ClassIndex> out(inputs.size());
  const auto n = static_cast<long>(inputs.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = argmax(net.forward(inputs[i]));
  return out;
}

}  // namespace predcoin::kernels
