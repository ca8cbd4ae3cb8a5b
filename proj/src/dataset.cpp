#include "predcoin/dataset.hpp"

#include <fstream>
#include <iterator>
#include <map>

#include "predcoin/kernels.hpp"

namespace predcoin {

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& what) {
  if (b.size() < off + 4) throw FormatError(what + ": truncated");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace

LabeledData load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit) {
  const auto img = slurp(images);
  const auto lab = slurp(labels);
  if (be32(img, 0, "idx images") != 0x00000803) throw FormatError("idx images: bad magic");
  if (be32(lab, 0, "idx labels") != 0x00000801) throw FormatError("idx labels: bad magic");
  const std::size_t n = be32(img, 4, "idx images");
  const std::size_t rows = be32(img, 8, "idx images");
  const std::size_t cols = be32(img, 12, "idx images");
  const std::size_t n_labels = be32(lab, 4, "idx labels");
  if (n != n_labels) throw DimensionError("idx image/label count", n, n_labels);
  const std::size_t d = rows * cols;
  if (img.size() < 16 + n * d) throw FormatError("idx images: truncated");
  if (lab.size() < 8 + n) throw FormatError("idx labels: truncated");

  LabeledData out;
  const std::size_t count = std::min(limit, n);
  out.inputs.reserve(count);
  out.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vec x(d);
    const unsigned char* px = img.data() + 16 + i * d;
    for (std::size_t j = 0; j < d; ++j) x[j] = px[j] / 255.0;
    out.inputs.push_back(std::move(x));
    out.labels.push_back(lab[8 + i]);
  }
  return out;
}

LabeledData make_blobs(const BlobsConfig& cfg) {
  if (cfg.dim == 0 || cfg.per_class == 0) throw Error("blobs: empty configuration");
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, cfg.sigma);
  LabeledData out;
  const double offset = cfg.separation * cfg.sigma / 2.0;
  for (std::size_t i = 0; i < 2 * cfg.per_class; ++i) {
    const ClassIndex label = i % 2;
    Vec x(cfg.dim);
    for (double& v : x) v = 0.5 + normal(rng);
    x[0] += label == 0 ? -offset : offset;
    clip_unit(x);
    out.inputs.push_back(std::move(x));
    out.labels.push_back(label);
  }
  return out;
}

std::vector<std::size_t> pick_correct(const DenseNetwork& net, const LabeledData& data, std::size_t n) {
  const auto pred = kernels::predict_parallel(net, data.inputs);
  std::map<ClassIndex, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (pred[i] == data.labels[i]) by_class[data.labels[i]].push_back(i);
  std::vector<std::size_t> out;
  for (std::size_t round = 0; out.size() < n; ++round) {
    bool any = false;
    for (auto& [label, idx] : by_class) {
      if (round < idx.size() && out.size() < n) {
        out.push_back(idx[round]);
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

}  // namespace predcoin
