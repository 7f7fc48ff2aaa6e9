#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "medgan/checkpoint.hpp"
#include "medgan/metrics.hpp"
#include "medgan/trainer.hpp"

namespace medgan {

// Translates and scores a dataset with the generator stored in `ckpt`.
MetricReport evaluate_checkpoint(const Checkpoint& ckpt, const PairedDataset& dataset, const Extractor<float>& extractor);

// Loss-component ablation. Arm names are loss presets plus "medgan-1g"
// (medgan weights with a single U-block); every arm shares the seed, the
// dataset and the architecture, except that "medgan" keeps the configured N.
struct AblationPlan {
  std::vector<std::string> arms{"cgan", "perceptual", "style-content", "medgan-1g", "medgan"};
  TrainConfig config = TrainConfig::desk();
  std::filesystem::path dataset;
  std::filesystem::path output;

  void validate() const;
};

// Relative paths are resolved against `base_dir`.
AblationPlan ablation_plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
TrainConfig ablation_arm_config(const TrainConfig& shared, const std::string& arm);

struct ArmResult {
  std::string arm;
  TrainConfig config;
  std::size_t parameters = 0;
  MetricReport report;
};

struct AblationResult {
  std::vector<ArmResult> arms;
  nlohmann::json metadata;
  std::string table_csv() const;  // rows = arms, columns = the six metrics
};

// Trains and evaluates every arm, writing output/arms/<arm>/ and output/table.{csv,json,md}.
AblationResult run_ablation(const AblationPlan& plan, std::ostream* log = nullptr);

// CasNet depth sweep.
struct SweepPlan {
  std::size_t n_min = 1;
  std::size_t n_max = 7;
  std::string preset = "pix2pix";
  TrainConfig config = TrainConfig::desk();
  std::filesystem::path dataset;
  std::filesystem::path output;

  // Throws ConfigError unless 1 <= n_min <= n_max <= 7.
  void validate() const;
};

SweepPlan sweep_plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

struct SweepRow {
  std::size_t n_blocks = 0;
  std::size_t parameters = 0;
  MetricRow metrics;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  nlohmann::json metadata;
  std::string csv() const;
};

// Writes output/sweep.csv, output/sweep.json and one SVG curve per metric.
SweepResult run_sweep(const SweepPlan& plan, std::ostream* log = nullptr);

// Minimal line chart; x and y must have equal length.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<double>& x, const std::vector<double>& y);

}  // namespace medgan
