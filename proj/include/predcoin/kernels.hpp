#ifndef PREDCOIN_KERNELS_HPP
#define PREDCOIN_KERNELS_HPP

// Batched inference kernels. Each has a serial reference and an OpenMP
// variant; the two must agree bit-for-bit since every row is independent.

#include <vector>

#include "predcoin/nn.hpp"

namespace predcoin::kernels {

std::vector<Vec> forward_batch_serial(const DenseNetwork& net, const std::vector<Vec>& inputs);
std::vector<Vec> forward_batch_parallel(const DenseNetwork& net, const std::vector<Vec>& inputs);

std::vector<ClassIndex> predict_serial(const DenseNetwork& net, const std::vector<Vec>& inputs);
std::vector<ClassIndex> predict_parallel(const DenseNetwork& net, const std::vector<Vec>& inputs);

}  // namespace predcoin::kernels

#endif
