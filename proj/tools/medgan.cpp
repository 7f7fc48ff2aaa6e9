// medgan: train, evaluate and study paired image-to-image translation models.

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "medgan/experiments.hpp"
#include "medgan/image_io.hpp"
#include "medgan/metrics.hpp"
#include "medgan/study.hpp"
#include "medgan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace medgan;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

// Echoes step events to stdout while recording them.
class ConsoleSink : public EventSink {
 public:
  explicit ConsoleSink(EventSink& inner) : inner_(inner) {}
  void on_event(const json& e) override {
    inner_.on_event(e);
    if (e.at("type") == "step") {
      const auto& g = e.at("generator");
      std::cout << "step " << e.at("step") << " epoch " << e.at("epoch") << "  G " << g.at("total").get<double>()
                << " (adv " << g.at("adversarial").get<double>() << ")  D " << e.at("discriminator_objective").get<double>()
                << "\n";
    } else if (e.at("type") == "done") {
      std::cout << "finished at step " << e.at("step") << ": " << e.at("generator_updates") << " generator / "
                << e.at("discriminator_updates") << " discriminator updates\n";
    }
  }

 private:
  EventSink& inner_;
};

struct TrainFlags {
  std::string config, dataset, run_dir, profile, preset, resume;
  std::optional<std::size_t> n_epochs, n_g, max_steps, checkpoint_interval, log_interval, n_blocks, image_size;
  std::optional<double> learning_rate, adam_beta1;
  std::optional<std::uint64_t> seed;

  json overrides() const {
    json o = json::object();
    if (n_epochs) o["n_epochs"] = *n_epochs;
    if (n_g) o["n_g"] = *n_g;
    if (max_steps) o["max_steps"] = *max_steps;
    if (checkpoint_interval) o["checkpoint_interval"] = *checkpoint_interval;
    if (log_interval) o["log_interval"] = *log_interval;
    if (learning_rate) o["learning_rate"] = *learning_rate;
    if (adam_beta1) o["adam_beta1"] = *adam_beta1;
    if (seed) o["seed"] = *seed;
    if (image_size) o["image_size"] = *image_size;
    if (n_blocks) o["casnet"] = {{"n_blocks", *n_blocks}};
    if (!preset.empty()) o["preset"] = preset;
    return o;
  }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config, "JSON file with TrainConfig fields");
  cmd->add_option("--dataset", f.dataset, "dataset root (source/, target/, manifest.json)")->required();
  cmd->add_option("--run-dir", f.run_dir, "run directory")->required();
  cmd->add_option("--profile", f.profile, "paper | desk");
  cmd->add_option("--preset", f.preset, "loss preset");
  cmd->add_option("--resume", f.resume, "continue from this checkpoint");
  cmd->add_option("--n_epochs", f.n_epochs);
  cmd->add_option("--n_g", f.n_g);
  cmd->add_option("--max_steps", f.max_steps);
  cmd->add_option("--checkpoint_interval", f.checkpoint_interval);
  cmd->add_option("--log_interval", f.log_interval);
  cmd->add_option("--learning_rate", f.learning_rate);
  cmd->add_option("--adam_beta1", f.adam_beta1);
  cmd->add_option("--seed", f.seed);
  cmd->add_option("--image_size", f.image_size);
  cmd->add_option("--n_blocks", f.n_blocks, "U-blocks in the CasNet generator");
}

int cmd_train(const TrainFlags& f) {
  std::optional<Trainer> trainer;
  if (!f.resume.empty()) {
    if (!f.config.empty() || !f.profile.empty()) throw ConfigError("--resume takes its config from the checkpoint");
    trainer.emplace(Trainer::resume(load_checkpoint(f.resume), f.overrides()));
    std::cout << "resuming at step " << trainer->step() << "\n";
  } else {
    json j = f.config.empty() ? json::object() : read_json(f.config);
    if (!f.profile.empty()) j["profile"] = f.profile;
    TrainConfig base = j.contains("profile") ? TrainConfig::profile(j.at("profile")) : TrainConfig::paper();
    TrainConfig cfg = train_config_from_json(j, base);
    json merged = to_json(cfg);
    json o = f.overrides();
    if (o.contains("preset")) merged.erase("weights");
    merged.merge_patch(o);
    cfg = train_config_from_json(merged, cfg);
    trainer.emplace(cfg);
  }
  const auto& cfg = trainer->config();
  const PairedDataset data = load_paired_dataset(f.dataset, "train", cfg.image_size);
  PairedDataset val;
  try {
    val = load_paired_dataset(f.dataset, "val", cfg.image_size);
  } catch (const std::exception&) {
    // previews fall back to training samples
  }
  std::cout << "training on " << data.size() << " samples, preset " << cfg.preset << ", N = " << cfg.casnet.n_blocks
            << ", " << trainer->generator().parameter_count() << " generator parameters\n";
  NdjsonSink file(fs::path(f.run_dir) / "events.ndjson", !f.resume.empty());
  ConsoleSink sink(file);
  trainer->run(data, &sink, f.run_dir, 0, &val);
  std::cout << "checkpoint: " << (fs::path(f.run_dir) / "checkpoints" / "final.mgck").string() << "\n";
  return 0;
}

int cmd_translate(const std::string& ckpt_path, const std::string& input, const std::string& output,
                  const std::string& targets) {
  const Translator tr(load_checkpoint(ckpt_path));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(output);
  std::size_t panels = 0;
  for (const auto& p : files) {
    const GrayImage in = read_png(p);
    const GrayImage out = denormalize_image(tr(normalize_image(in)));
    write_png(fs::path(output) / p.filename(), out);
    if (!targets.empty() && fs::exists(fs::path(targets) / p.filename())) {
      write_png(fs::path(output) / "panels" / p.filename(), hconcat({in, out, read_png(fs::path(targets) / p.filename())}));
      ++panels;
    }
  }
  std::cout << "translated " << files.size() << " images";
  if (panels) std::cout << ", " << panels << " panels";
  std::cout << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& dataset, const std::string& report,
                 const std::string& split, bool allow_train) {
  if (split == "train" && !allow_train) {
    throw ConfigError("refusing to evaluate on the train split; pass --allow-train to override");
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const TrainConfig cfg = train_config_from_json(ckpt.metadata.at("config"));
  const PairedDataset data = load_paired_dataset(dataset, split, cfg.image_size);
  if (data.empty()) throw ConfigError("split '" + split + "' of " + dataset + " is empty");
  const Extractor<float> ex(evaluation_extractor_spec());
  MetricReport rep = evaluate_checkpoint(ckpt, data, ex);
  rep.metadata["checkpoint"] = ckpt_path;
  rep.write(report);
  std::cout << rep.to_csv();
  return 0;
}

int cmd_synth(std::uint64_t seed, std::size_t count, std::size_t size, std::size_t groups, std::size_t val_groups,
              const std::string& out) {
  const PairedDataset all = generate_synthetic_pairs(seed, count, size, groups);
  const auto [train, val] = split_by_group(all, val_groups);
  write_paired_dataset(out, train, val);
  std::cout << "wrote " << train.size() << " train and " << val.size() << " val pairs to " << out << "\n";
  return 0;
}

StudyServer* g_server = nullptr;
extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_study_serve(const std::string& manifest, const std::string& results, const std::string& host, int port,
                    const std::string& static_dir) {
  StudyService service(StudyManifest::load(manifest), results);
  StudyServer server(service, static_dir);
  const int bound = server.bind(host, port);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "study of " << service.total() << " trials on http://" << host << ":" << bound << "/ (results: " << results
            << ")" << std::endl;
  server.listen();
  g_server = nullptr;
  return 0;
}

int cmd_study_report(const std::string& results, const std::string& json_out) {
  const auto rows = study_report(load_study_records(results));
  std::cout << study_report_table(rows);
  if (!json_out.empty()) std::ofstream(json_out) << study_report_json(rows).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MedGAN-style paired image translation: training, evaluation, ablation and perceptual study"};
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "train a generator/discriminator pair");
  add_train_flags(train, tf);

  std::string ckpt, input, output, targets;
  auto* translate = app.add_subcommand("translate", "translate every PNG in a directory");
  translate->add_option("--checkpoint", ckpt)->required();
  translate->add_option("--input", input)->required()->check(CLI::ExistingDirectory);
  translate->add_option("--output", output)->required();
  translate->add_option("--targets", targets, "directory of targets; enables input|output|target panels");

  std::string dataset, report, split = "val";
  bool allow_train = false;
  auto* evaluate = app.add_subcommand("evaluate", "metric report for a checkpoint");
  evaluate->add_option("--checkpoint", ckpt)->required();
  evaluate->add_option("--dataset", dataset)->required();
  evaluate->add_option("--report", report, "output path stem (.csv and .json are appended)")->required();
  evaluate->add_option("--split", split);
  evaluate->add_flag("--allow-train", allow_train);

  std::string plan;
  auto* ablate = app.add_subcommand("ablate", "loss-component ablation");
  ablate->add_option("--plan", plan, "ablation plan JSON")->required();

  std::string sweep_plan, sweep_config, n_range = "1..7", sweep_preset = "pix2pix";
  auto* sweep = app.add_subcommand("sweep", "CasNet depth sweep");
  sweep->add_option("--plan", sweep_plan, "sweep plan JSON");
  sweep->add_option("--config", sweep_config, "TrainConfig JSON (desk profile by default)");
  sweep->add_option("--dataset", dataset);
  sweep->add_option("--output", output);
  sweep->add_option("--n-range", n_range, "e.g. 1..3");
  sweep->add_option("--preset", sweep_preset);

  std::uint64_t seed = 1;
  std::size_t count = 80, size = 64, groups = 10, val_groups = 2;
  auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
  synth->add_option("--seed", seed);
  synth->add_option("--count", count);
  synth->add_option("--size", size);
  synth->add_option("--groups", groups);
  synth->add_option("--val-groups", val_groups, "groups held out for val");
  synth->add_option("--out", output)->required();

  std::string manifest, results = "study_results.ndjson", host = "127.0.0.1", static_dir;
  int port = 8080;
  auto* serve = app.add_subcommand("study-serve", "serve the blinded perceptual study");
  serve->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  serve->add_option("--results", results);
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--static-dir", static_dir, "built frontend assets");

  std::string json_out;
  auto* sreport = app.add_subcommand("study-report", "mean, SD and real % per method");
  sreport->add_option("--results", results)->required()->check(CLI::ExistingFile);
  sreport->add_option("--json", json_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(tf);
    if (*translate) return cmd_translate(ckpt, input, output, targets);
    if (*evaluate) return cmd_evaluate(ckpt, dataset, report, split, allow_train);
    if (*ablate) {
      const auto p = ablation_plan_from_json(read_json(plan), fs::path(plan).parent_path());
      const auto res = run_ablation(p, &std::cout);
      std::cout << res.table_csv();
      return 0;
    }
    if (*sweep) {
      SweepPlan p;
      if (!sweep_plan.empty()) {
        p = sweep_plan_from_json(read_json(sweep_plan), fs::path(sweep_plan).parent_path());
      } else {
        if (!sweep_config.empty()) p.config = train_config_from_json(read_json(sweep_config), TrainConfig::desk());
        const auto dots = n_range.find("..");
        if (dots == std::string::npos) throw ConfigError("--n-range must look like 1..3");
        p.n_min = std::stoul(n_range.substr(0, dots));
        p.n_max = std::stoul(n_range.substr(dots + 2));
        p.preset = sweep_preset;
        p.dataset = dataset;
        p.output = output;
        p.validate();
      }
      std::cout << run_sweep(p, &std::cout).csv();
      return 0;
    }
    if (*synth) return cmd_synth(seed, count, size, groups, val_groups, output);
    if (*serve) return cmd_study_serve(manifest, results, host, port, static_dir);
    if (*sreport) return cmd_study_report(results, json_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
