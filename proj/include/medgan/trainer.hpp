#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "medgan/checkpoint.hpp"
#include "medgan/dataset.hpp"
#include "medgan/discriminator.hpp"
#include "medgan/extractor.hpp"
#include "medgan/generator.hpp"
#include "medgan/losses.hpp"

namespace medgan {

struct TrainConfig {
  std::size_t n_epochs = 200;
  std::size_t n_g = 3;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 1;
  std::string preset = "medgan";
  LossWeights weights{};
  CasNetConfig casnet{};
  PatchDiscriminatorSpec discriminator{};
  ExtractorSpec extractor{};
  std::uint64_t seed = 0;
  std::size_t image_size = 256;
  std::size_t checkpoint_interval = 0;  // steps between checkpoints, 0 = final only
  std::size_t log_interval = 1;         // steps between emitted events
  std::size_t max_steps = 0;            // 0 = no cap
  int spectral_iterations = 1;

  // Throws ConfigError.
  void validate() const;
  // Full-scale values (the defaults above).
  static TrainConfig paper();
  // 64x64 images, depth-5 U-blocks, every width / 4, N = 1, 30 epochs.
  static TrainConfig desk();
  // "paper" or "desk"; anything else raises ConfigError.
  static TrainConfig profile(const std::string& name);
  // Replaces the loss weights by a named preset with masks sized for this architecture.
  void apply_preset(const std::string& name);
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing fields keep the values of `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = TrainConfig{});
// Architecture part of the config (generator, discriminator, extractor, image size).
nlohmann::json architecture_json(const TrainConfig& cfg);
// Merges `overrides` into `base`; throws ConfigError naming the field when an
// override would change the architecture.
TrainConfig apply_overrides(const TrainConfig& base, const nlohmann::json& overrides);

nlohmann::json to_json(const CasNetConfig& c);
CasNetConfig casnet_config_from_json(const nlohmann::json& j, const CasNetConfig& base = {});

// Adam over a fixed parameter list; moments are keyed by parameter name.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Parameter<float>*>& params);
  std::uint64_t steps() const noexcept { return t_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  void save(Checkpoint& ckpt, const std::string& prefix) const;
  void load(const Checkpoint& ckpt, const std::string& prefix, const std::vector<Parameter<float>*>& params);

 private:
  struct Moments {
    Tensor<float> m;
    Tensor<float> v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

// Receives training events; must not block for long.
class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual void on_event(const nlohmann::json& event) = 0;
};

// Appends one JSON object per line.
class NdjsonSink : public EventSink {
 public:
  explicit NdjsonSink(const std::filesystem::path& path, bool append = false);
  void on_event(const nlohmann::json& event) override;

 private:
  std::ofstream out_;
};

class CollectingSink : public EventSink {
 public:
  void on_event(const nlohmann::json& event) override { events.push_back(event); }
  std::vector<nlohmann::json> events;
};

struct StepRecord {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::string sample_id;
  LossBreakdown generator;  // from the last generator update of the step
  double discriminator_objective = 0.0;
  std::vector<float> sigmas;  // power-iteration estimates used for the projection
};

// Algorithm-1 training state: CasNet generator, patch discriminator, frozen
// extractor, both optimizers and the position in the sample stream.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  // Restores a saved state; `overrides` may change anything but the architecture.
  static Trainer resume(const Checkpoint& ckpt, const nlohmann::json& overrides = nlohmann::json::object());

  const TrainConfig& config() const noexcept { return cfg_; }
  CasNet<float>& generator() noexcept { return generator_; }
  const CasNet<float>& generator() const noexcept { return generator_; }
  PatchDiscriminator<float>& discriminator() noexcept { return discriminator_; }
  const Extractor<float>* extractor() const noexcept { return extractor_.get(); }

  std::uint64_t step() const noexcept { return step_; }
  std::uint64_t epoch() const noexcept { return epoch_; }
  std::uint64_t generator_updates() const noexcept { return g_updates_; }
  std::uint64_t discriminator_updates() const noexcept { return d_updates_; }
  bool finished() const;

  // One Algorithm-1 iteration on the next sample of the shuffled stream.
  StepRecord train_step(const PairedDataset& data);
  // Runs until n_epochs / max_steps or `limit` more steps (0 = no limit).
  // Emits an event every log_interval steps and, when run_dir is set, writes
  // checkpoints and sample panels there.
  void run(const PairedDataset& data, EventSink* sink = nullptr, const std::filesystem::path& run_dir = {},
           std::size_t limit = 0, const PairedDataset* preview = nullptr);

  Checkpoint checkpoint() const;

 private:
  void check_dataset(const PairedDataset& data) const;
  std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t epoch) const;

  TrainConfig cfg_;
  CasNet<float> generator_;
  PatchDiscriminator<float> discriminator_;
  std::unique_ptr<Extractor<float>> extractor_;
  Adam adam_g_;
  Adam adam_d_;
  std::uint64_t step_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t position_ = 0;
  std::uint64_t g_updates_ = 0;
  std::uint64_t d_updates_ = 0;
};

// Convenience: fresh training over `data`, returns the final trainer.
Trainer train(const TrainConfig& cfg, const PairedDataset& data, EventSink* sink = nullptr,
              const std::filesystem::path& run_dir = {});

// Inference with a generator restored from a checkpoint.
class Translator {
 public:
  explicit Translator(const Checkpoint& ckpt);
  explicit Translator(const CasNet<float>& generator) : generator_(generator) {}

  // Throws ShapeError for sizes the architecture cannot take.
  Tensor<float> operator()(const Tensor<float>& image) const;
  std::vector<Tensor<float>> translate(const std::vector<Tensor<float>>& images) const;
  const CasNet<float>& generator() const noexcept { return generator_; }

 private:
  CasNet<float> generator_;
};

std::vector<Tensor<float>> translate(const Checkpoint& ckpt, const std::vector<Tensor<float>>& inputs);

}  // namespace medgan
