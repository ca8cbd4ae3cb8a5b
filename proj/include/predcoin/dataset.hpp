#ifndef PREDCOIN_DATASET_HPP
#define PREDCOIN_DATASET_HPP

#include <filesystem>
#include <limits>

#include "predcoin/nn.hpp"

namespace predcoin {

/// Reads an IDX image/label pair (big-endian, u8 pixels scaled by 1/255).
LabeledData load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                     std::size_t limit = std::numeric_limits<std::size_t>::max());

struct BlobsConfig {
  std::size_t per_class = 200;
  std::size_t dim = 2;
  /// Distance between the two centers in units of sigma.
  double separation = 6.0;
  double sigma = 0.05;
  std::uint64_t seed = 0;
};

/// Two isotropic Gaussians centred at 0.5 -/+ separation*sigma/2 along the
/// first axis, clipped to [0,1]^d. Labels 0 and 1, interleaved.
LabeledData make_blobs(const BlobsConfig& cfg);

/// First `n` indices of `data` that `net` classifies correctly, visiting
/// classes round-robin so every class is represented when possible.
std::vector<std::size_t> pick_correct(const DenseNetwork& net, const LabeledData& data, std::size_t n);

}  // namespace predcoin

#endif
