#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medgan/image_io.hpp"
#include "medgan/tensor.hpp"

namespace medgan {

// One aligned (source y, target x) pair. Both images are 1xHxW in [-1, 1].
struct PairedSample {
  std::string sample_id;
  std::string group_id;
  Tensor<float> source;
  Tensor<float> target;
};

struct PairedDataset {
  std::vector<PairedSample> samples;
  std::string split;            // "train", "val", or "all" before splitting
  std::string manifest_digest;  // SHA-256 over ids, groups and pixels

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::size_t image_size() const { return samples.empty() ? 0 : samples.front().source.height(); }
  std::vector<std::string> group_ids() const;
};

std::string dataset_digest(const std::vector<PairedSample>& samples);

// Reads root/{source,target}/<id>.png and root/manifest.json, keeping the
// samples whose manifest split equals `split` (sorted by id). Throws
// PairingError listing ids present on one side only, FormatError naming a
// non-grayscale or wrongly sized file, and ConfigError when a group appears in
// more than one split. expected_size 0 accepts any common square size.
PairedDataset load_paired_dataset(const std::filesystem::path& root, const std::string& split,
                                  std::size_t expected_size = 0);

// Manifest layout: {"samples": [{"id": ..., "group": ..., "split": ...}, ...]}
void write_paired_dataset(const std::filesystem::path& root, const PairedDataset& train, const PairedDataset& val);

// Deterministic train/val split by group: the last `val_groups` group ids (in
// order of first appearance) go to val.
std::pair<PairedDataset, PairedDataset> split_by_group(const PairedDataset& all, std::size_t val_groups);

// The analytic source -> target mapping of the synthetic task, on the 0..1
// intensity scale: inv = 1 - s, e = clamp(inv + alpha (inv - blur(inv))),
// t = blur(e), Gaussian blur with the given sigma and edge clamping.
struct SyntheticTransform {
  double alpha = 1.0;
  double sigma = 1.0;
  GrayImage operator()(const GrayImage& source) const;
};

// Random smooth ellipse scenes on a black background. Sample i goes to group
// "g<i mod groups>". Throws ConfigError unless size is a power of two >= 32.
PairedDataset generate_synthetic_pairs(std::uint64_t seed, std::size_t count, std::size_t size, std::size_t groups);

}  // namespace medgan
