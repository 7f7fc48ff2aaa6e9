#include "medgan/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace medgan {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string num(double v, int precision = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::vector<double> metric_values(const MetricRow& r) { return {r.ssim, r.psnr_db, r.mse, r.vif, r.uqi, r.pdist}; }

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> n{"ssim", "psnr_db", "mse", "vif", "uqi", "pdist"};
  return n;
}

json row_json(const MetricRow& r) {
  json j;
  const auto v = metric_values(r);
  for (std::size_t i = 0; i < v.size(); ++i) j[metric_names()[i]] = std::isinf(v[i]) ? json("inf") : json(v[i]);
  return j;
}

struct Splits {
  PairedDataset train;
  PairedDataset val;
};

Splits load_splits(const fs::path& root, std::size_t size) {
  Splits s{load_paired_dataset(root, "train", size), load_paired_dataset(root, "val", size)};
  if (s.train.empty()) throw ConfigError("dataset " + root.string() + " has no train samples");
  if (s.val.empty()) throw ConfigError("dataset " + root.string() + " has no val samples");
  return s;
}

// Trains one configuration, evaluates it on val, and writes everything under dir.
MetricReport train_and_evaluate(const TrainConfig& cfg, const Splits& data, const fs::path& dir,
                                const Extractor<float>& eval_extractor, std::ostream* log, const std::string& label) {
  fs::create_directories(dir);
  NdjsonSink sink(dir / "events.ndjson");
  Trainer t(cfg);
  if (log) *log << "[" << label << "] training " << t.generator().parameter_count() << " generator parameters\n";
  t.run(data.train, &sink, dir, 0, &data.val);
  const Translator tr(t.generator());
  MetricReport rep = evaluate_dataset([&](const Tensor<float>& x) { return tr(x); }, data.val, eval_extractor);
  rep.metadata["checkpoint"] = (dir / "checkpoints" / "final.mgck").string();
  rep.metadata["steps"] = t.step();
  rep.write(dir / "report");
  if (log) {
    *log << "[" << label << "] ssim " << num(rep.aggregate.ssim) << " psnr " << num(rep.aggregate.psnr_db) << " dB\n";
  }
  return rep;
}

}  // namespace

MetricReport evaluate_checkpoint(const Checkpoint& ckpt, const PairedDataset& dataset, const Extractor<float>& extractor) {
  const Translator tr(ckpt);
  MetricReport rep = evaluate_dataset([&](const Tensor<float>& x) { return tr(x); }, dataset, extractor);
  rep.metadata["checkpoint_step"] = ckpt.metadata.value("step", 0);
  return rep;
}

void AblationPlan::validate() const {
  if (arms.empty()) throw ConfigError("ablation plan needs at least one arm");
  for (const auto& a : arms) ablation_arm_config(config, a).validate();
  if (dataset.empty()) throw ConfigError("ablation plan needs a dataset path");
  if (output.empty()) throw ConfigError("ablation plan needs an output directory");
}

AblationPlan ablation_plan_from_json(const json& j, const fs::path& base_dir) {
  AblationPlan p;
  try {
    if (j.contains("arms")) p.arms = j.at("arms").get<std::vector<std::string>>();
    if (j.contains("config")) p.config = train_config_from_json(j.at("config"), TrainConfig::desk());
    p.dataset = resolve(j.value("dataset", std::string{}), base_dir);
    p.output = resolve(j.value("output", std::string{}), base_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed ablation plan: ") + e.what());
  }
  p.validate();
  return p;
}

TrainConfig ablation_arm_config(const TrainConfig& shared, const std::string& arm) {
  TrainConfig c = shared;
  if (arm == "medgan-1g") {
    c.apply_preset("medgan");
    c.preset = arm;
    c.casnet.n_blocks = 1;
  } else if (arm == "medgan") {
    c.apply_preset(arm);
  } else {
    c.apply_preset(arm);  // throws for unknown names
    c.casnet.n_blocks = 1;
  }
  return c;
}

std::string AblationResult::table_csv() const {
  std::ostringstream os;
  os << "arm";
  for (const auto& m : metric_names()) os << "," << m;
  os << "\n";
  for (const auto& a : arms) {
    os << a.arm;
    for (double v : metric_values(a.report.aggregate)) os << "," << num(v, 10);
    os << "\n";
  }
  return os.str();
}

AblationResult run_ablation(const AblationPlan& plan, std::ostream* log) {
  plan.validate();
  const Splits data = load_splits(plan.dataset, plan.config.image_size);
  const Extractor<float> eval_extractor(evaluation_extractor_spec());
  AblationResult res;
  json arms_meta = json::object();
  for (const auto& arm : plan.arms) {
    const TrainConfig cfg = ablation_arm_config(plan.config, arm);
    ArmResult r{arm, cfg, 0, {}};
    r.report = train_and_evaluate(cfg, data, plan.output / "arms" / arm, eval_extractor, log, arm);
    r.parameters = CasNet<float>(cfg.casnet, 0).parameter_count();
    arms_meta[arm] = {{"preset", cfg.preset},
                      {"weights", to_json(cfg.weights)},
                      {"n_blocks", cfg.casnet.n_blocks},
                      {"generator_parameters", r.parameters},
                      {"seed", cfg.seed},
                      {"train_digest", data.train.manifest_digest},
                      {"val_digest", data.val.manifest_digest},
                      {"aggregate", row_json(r.report.aggregate)}};
    res.arms.push_back(std::move(r));
  }
  // Per-metric orderings are reported only; higher is better except mse and pdist.
  json ranking = json::object();
  for (std::size_t m = 0; m < metric_names().size(); ++m) {
    std::vector<const ArmResult*> order;
    for (const auto& a : res.arms) order.push_back(&a);
    const bool lower_better = metric_names()[m] == "mse" || metric_names()[m] == "pdist";
    std::stable_sort(order.begin(), order.end(), [&](auto* x, auto* y) {
      const double a = metric_values(x->report.aggregate)[m], b = metric_values(y->report.aggregate)[m];
      return lower_better ? a < b : a > b;
    });
    for (auto* a : order) ranking[metric_names()[m]].push_back(a->arm);
  }
  res.metadata = {{"arms", arms_meta},
                  {"seed", plan.config.seed},
                  {"train_digest", data.train.manifest_digest},
                  {"val_digest", data.val.manifest_digest},
                  {"image_size", plan.config.image_size},
                  {"ranking", ranking},
                  {"columns", metric_names()}};

  fs::create_directories(plan.output);
  std::ofstream(plan.output / "table.csv") << res.table_csv();
  json table = json::array();
  for (const auto& a : res.arms) table.push_back({{"arm", a.arm}, {"metrics", row_json(a.report.aggregate)}});
  std::ofstream(plan.output / "table.json") << json{{"table", table}, {"metadata", res.metadata}}.dump(2) << "\n";
  std::ofstream md(plan.output / "table.md");
  md << "| arm | SSIM | PSNR (dB) | MSE | VIF | UQI | pdist |\n|---|---|---|---|---|---|---|\n";
  for (const auto& a : res.arms) {
    md << "| " << a.arm;
    for (double v : metric_values(a.report.aggregate)) md << " | " << num(v, 4);
    md << " |\n";
  }
  return res;
}

void SweepPlan::validate() const {
  if (n_min < 1 || n_max > 7 || n_min > n_max) {
    throw ConfigError("sweep range must satisfy 1 <= n_min <= n_max <= 7, got " + std::to_string(n_min) + ".." +
                      std::to_string(n_max));
  }
  loss_preset(preset);
  if (dataset.empty()) throw ConfigError("sweep plan needs a dataset path");
  if (output.empty()) throw ConfigError("sweep plan needs an output directory");
}

SweepPlan sweep_plan_from_json(const json& j, const fs::path& base_dir) {
  SweepPlan p;
  try {
    if (j.contains("config")) p.config = train_config_from_json(j.at("config"), TrainConfig::desk());
    p.n_min = j.value("n_min", p.n_min);
    p.n_max = j.value("n_max", p.n_max);
    p.preset = j.value("preset", p.preset);
    p.dataset = resolve(j.value("dataset", std::string{}), base_dir);
    p.output = resolve(j.value("output", std::string{}), base_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed sweep plan: ") + e.what());
  }
  p.validate();
  return p;
}

std::string SweepResult::csv() const {
  std::ostringstream os;
  os << "n_blocks,parameters";
  for (const auto& m : metric_names()) os << "," << m;
  os << "\n";
  for (const auto& r : rows) {
    os << r.n_blocks << "," << r.parameters;
    for (double v : metric_values(r.metrics)) os << "," << num(v, 10);
    os << "\n";
  }
  return os.str();
}

SweepResult run_sweep(const SweepPlan& plan, std::ostream* log) {
  plan.validate();
  const Splits data = load_splits(plan.dataset, plan.config.image_size);
  const Extractor<float> eval_extractor(evaluation_extractor_spec());
  SweepResult res;
  for (std::size_t n = plan.n_min; n <= plan.n_max; ++n) {
    TrainConfig cfg = plan.config;
    cfg.apply_preset(plan.preset);
    cfg.casnet.n_blocks = n;
    SweepRow row;
    row.n_blocks = n;
    row.parameters = CasNet<float>(cfg.casnet, 0).parameter_count();
    row.metrics = train_and_evaluate(cfg, data, plan.output / ("n" + std::to_string(n)), eval_extractor, log,
                                     "N=" + std::to_string(n))
                      .aggregate;
    res.rows.push_back(row);
  }
  res.metadata = {{"preset", plan.preset},
                  {"n_min", plan.n_min},
                  {"n_max", plan.n_max},
                  {"seed", plan.config.seed},
                  {"train_digest", data.train.manifest_digest},
                  {"val_digest", data.val.manifest_digest}};

  fs::create_directories(plan.output);
  std::ofstream(plan.output / "sweep.csv") << res.csv();
  json rows = json::array();
  for (const auto& r : res.rows) {
    rows.push_back({{"n_blocks", r.n_blocks}, {"parameters", r.parameters}, {"metrics", row_json(r.metrics)}});
  }
  std::ofstream(plan.output / "sweep.json") << json{{"rows", rows}, {"metadata", res.metadata}}.dump(2) << "\n";

  std::vector<double> xs;
  for (const auto& r : res.rows) xs.push_back(static_cast<double>(r.n_blocks));
  const std::vector<std::pair<std::string, std::string>> curves{
      {"psnr_db", "PSNR (dB)"}, {"ssim", "SSIM"}, {"mse", "MSE"}, {"pdist", "perceptual distance"}};
  for (const auto& [key, label] : curves) {
    const std::size_t m = static_cast<std::size_t>(
        std::find(metric_names().begin(), metric_names().end(), key) - metric_names().begin());
    std::vector<double> ys;
    for (const auto& r : res.rows) ys.push_back(metric_values(r.metrics)[m]);
    std::ofstream(plan.output / ("sweep_" + key + ".svg"))
        << svg_line_plot(label + " vs number of U-blocks", "U-blocks (N)", label, xs, ys);
  }
  return res;
}

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("svg_line_plot: x and y differ in length");
  constexpr double W = 480, H = 320, L = 64, R = 16, T = 36, B = 48;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  std::vector<std::size_t> finite;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::isfinite(x[i]) && std::isfinite(y[i])) finite.push_back(i);
  }
  if (!finite.empty()) {
    x0 = x1 = x[finite[0]];
    y0 = y1 = y[finite[0]];
    for (std::size_t i : finite) {
      x0 = std::min(x0, x[i]);
      x1 = std::max(x1, x[i]);
      y0 = std::min(y0, y[i]);
      y1 = std::max(y1, y[i]);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.08 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream s;
  s << std::fixed << std::setprecision(1);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y0 + (y1 - y0) * i / 4.0;
    s << "<text x=\"" << L - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << num(v, 4) << "</text>\n";
  }
  for (std::size_t i : finite) {
    s << "<text x=\"" << px(x[i]) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << num(x[i], 4)
      << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  s << "<text transform=\"translate(14," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << y_label
    << "</text>\n";
  if (!finite.empty()) {
    s << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"";
    for (std::size_t i : finite) s << px(x[i]) << "," << py(y[i]) << " ";
    s << "\"/>\n";
    for (std::size_t i : finite) s << "<circle cx=\"" << px(x[i]) << "\" cy=\"" << py(y[i]) << "\" r=\"3\" fill=\"#1f5fa8\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace medgan
