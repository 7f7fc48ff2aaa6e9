#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "medgan/dataset.hpp"
#include "medgan/extractor.hpp"
#include "medgan/tensor.hpp"

namespace medgan {

// Full-reference quality metrics. Inputs are single-channel 1xHxW images on
// the 0..255 scale unless stated otherwise.

double mse(const Tensor<double>& a, const Tensor<double>& b);
// 10 log10(max^2 / mse); +infinity when the images are identical.
double psnr(const Tensor<double>& a, const Tensor<double>& b, double max_value = 255.0);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double max_value = 255.0;
};

// Mean of the local SSIM map over every fully contained Gaussian window.
// Throws ShapeError when the image is smaller than the window.
double ssim(const Tensor<double>& a, const Tensor<double>& b, const SsimParams& params = {});

struct UqiResult {
  double value = 1.0;
  std::size_t windows = 0;
  std::size_t skipped = 0;  // windows whose index is undefined (zero denominator)
};

// Universal quality index over sliding uniform windows. Undefined windows are
// skipped; if all are skipped the value is 1 for equal images and 0 otherwise.
UqiResult uqi_detail(const Tensor<double>& a, const Tensor<double>& b, std::size_t window = 8);
inline double uqi(const Tensor<double>& a, const Tensor<double>& b, std::size_t window = 8) {
  return uqi_detail(a, b, window).value;
}

// Pixel-domain visual information fidelity over 4 scales with noise variance
// sigma_nsq. `reference` is the undistorted image. Scales whose window does not
// fit are skipped; a reference without any variance yields 1. Needs >= 32x32.
double vif(const Tensor<double>& reference, const Tensor<double>& distorted, double sigma_nsq = 2.0);

// Mean over extractor blocks of (1 / (h w)) * sum over pixels of the squared
// distance between channel-wise unit-normalized activations. Inputs in [-1, 1].
double perceptual_distance(const Extractor<float>& extractor, const Tensor<float>& a, const Tensor<float>& b);

// Extractor used for evaluation unless configured otherwise.
ExtractorSpec evaluation_extractor_spec();

struct MetricRow {
  std::string sample_id;
  double ssim = 0, psnr_db = 0, mse = 0, vif = 0, uqi = 0, pdist = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MetricRow aggregate;  // arithmetic means, sample_id "mean"
  nlohmann::json metadata = nlohmann::json::object();

  static const std::vector<std::string>& columns();
  void compute_aggregate();
  nlohmann::json to_json() const;
  std::string to_csv() const;
  // Writes <stem>.csv and <stem>.json.
  void write(const std::filesystem::path& stem) const;
};

MetricRow evaluate_pair(const std::string& sample_id, const Tensor<float>& prediction, const Tensor<float>& target,
                        const Extractor<float>& extractor);

using TranslateFn = std::function<Tensor<float>(const Tensor<float>&)>;

// Translates every sample, denormalizes to 8-bit, and scores against the
// target. Rows are ordered by sample id.
MetricReport evaluate_dataset(const TranslateFn& translate, const PairedDataset& dataset,
                              const Extractor<float>& extractor);

}  // namespace medgan
