#include <fstream>
#include <sstream>

#include "doctest.h"
#include "medgan/experiments.hpp"

using namespace medgan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path dataset_dir() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "medgan-test-experiments" / "data";
    fs::remove_all(p);
    const auto [train, val] = split_by_group(generate_synthetic_pairs(4, 12, 64, 4), 1);
    write_paired_dataset(p, train, val);
    return p;
  }();
  return root;
}

json tiny_config() {
  return {{"max_steps", 2},
          {"log_interval", 1},
          {"casnet", {{"n_blocks", 2}, {"ublock", {{"encoder_channels", {8, 16, 32, 32, 32}}}}}},
          {"seed", 3}};
}

}  // namespace

TEST_CASE("arm configurations") {
  TrainConfig shared = TrainConfig::desk();
  shared.casnet.n_blocks = 4;
  CHECK(ablation_arm_config(shared, "medgan").casnet.n_blocks == 4);
  const auto one = ablation_arm_config(shared, "medgan-1g");
  CHECK(one.casnet.n_blocks == 1);
  CHECK(one.weights.lambda1 == 20);
  CHECK(one.preset == "medgan-1g");
  const auto cgan = ablation_arm_config(shared, "cgan");
  CHECK(cgan.casnet.n_blocks == 1);
  CHECK(cgan.weights.lambda1 == 0);
  CHECK(cgan.seed == shared.seed);
  CHECK_THROWS_AS(ablation_arm_config(shared, "unknown"), ConfigError);
  CHECK(AblationPlan{}.arms.size() == 5);
}

TEST_CASE("sweep range limits") {
  SweepPlan p;
  p.dataset = "d";
  p.output = "o";
  CHECK_NOTHROW(p.validate());
  p.n_max = 8;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.n_max = 3;
  p.n_min = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.n_min = 4;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  CHECK_THROWS_AS(sweep_plan_from_json(json{{"n_min", 1}, {"n_max", 8}, {"dataset", "d"}, {"output", "o"}}), ConfigError);
}

TEST_CASE("plans resolve paths against their directory") {
  const auto p = ablation_plan_from_json(json{{"dataset", "data"}, {"output", "out"}, {"arms", {"cgan"}}}, "/plans");
  CHECK(p.dataset == fs::path("/plans/data"));
  CHECK(p.arms == std::vector<std::string>{"cgan"});
  CHECK_THROWS_AS(ablation_plan_from_json(json{{"dataset", "d"}}), ConfigError);
  CHECK_THROWS_AS(ablation_plan_from_json(json{{"dataset", "d"}, {"output", "o"}, {"arms", 3}}), ConfigError);
}

TEST_CASE("svg plot") {
  const auto svg = svg_line_plot("ssim vs N", "N", "ssim", {1, 2, 3}, {0.5, 0.6, 0.55});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("ssim vs N") != std::string::npos);
  CHECK_THROWS(svg_line_plot("t", "x", "y", {1, 2}, {1}));
}

TEST_CASE("ablation writes a table that matches the per-arm reports") {
  const fs::path out = dataset_dir().parent_path() / "ablation";
  const auto plan = ablation_plan_from_json(
      json{{"dataset", dataset_dir().string()}, {"output", out.string()}, {"config", tiny_config()}});
  const auto res = run_ablation(plan);
  REQUIRE(res.arms.size() == 5);
  CHECK(res.arms.back().config.casnet.n_blocks == 2);
  CHECK(res.arms.front().config.casnet.n_blocks == 1);
  std::istringstream csv(res.table_csv());
  std::string header;
  std::getline(csv, header);
  CHECK(header == "arm,ssim,psnr_db,mse,vif,uqi,pdist");
  for (const auto& a : res.arms) {
    std::ifstream in(out / "arms" / a.arm / "report.json");
    const auto j = json::parse(in);
    CHECK(j.at("aggregate").at("ssim").get<double>() == doctest::Approx(a.report.aggregate.ssim));
    CHECK(res.metadata.at("arms").at(a.arm).at("val_digest") == res.metadata.at("val_digest"));
    CHECK(fs::exists(out / "arms" / a.arm / "events.ndjson"));
  }
  CHECK(fs::exists(out / "table.md"));
}

TEST_CASE("sweep rows and plots") {
  const fs::path out = dataset_dir().parent_path() / "sweep";
  const auto plan = sweep_plan_from_json(
      json{{"dataset", dataset_dir().string()}, {"output", out.string()}, {"n_min", 1}, {"n_max", 2}, {"config", tiny_config()}});
  const auto res = run_sweep(plan);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[1].parameters == 2 * res.rows[0].parameters);
  CHECK(fs::exists(out / "sweep_ssim.svg"));
  CHECK(fs::exists(out / "n2"));
}

TEST_CASE("empty val split is refused") {
  const fs::path p = dataset_dir().parent_path() / "noval";
  fs::remove_all(p);
  write_paired_dataset(p, split_by_group(generate_synthetic_pairs(4, 4, 64, 2), 1).first, PairedDataset{});
  AblationPlan plan;
  plan.dataset = p;
  plan.output = p / "out";
  CHECK_THROWS_AS(run_ablation(plan), ConfigError);
}
