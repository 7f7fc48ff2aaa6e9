#include "medgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "medgan/image_io.hpp"
#include "medgan/objective.hpp"
#include "medgan/rng.hpp"

namespace medgan {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json to_json(const UBlockSpec& s) {
  return {{"encoder_channels", s.encoder_channels},
          {"decoder_channels", s.decoder_channels},
          {"kernel", s.kernel},
          {"leaky_slope", s.leaky_slope},
          {"normalization", to_string(s.normalization)},
          {"norm_eps", s.norm_eps},
          {"input_channels", s.input_channels},
          {"output_channels", s.output_channels}};
}

UBlockSpec ublock_from_json(const json& j, const UBlockSpec& base) {
  UBlockSpec s = base;
  if (j.contains("encoder_channels")) {
    // A bare encoder list implies the mirrored decoder.
    s = UBlockSpec::from_encoder(j.at("encoder_channels").get<std::vector<std::size_t>>());
    s.kernel = base.kernel;
    s.leaky_slope = base.leaky_slope;
    s.normalization = base.normalization;
    s.norm_eps = base.norm_eps;
  }
  s.decoder_channels = j.value("decoder_channels", s.decoder_channels);
  s.kernel = j.value("kernel", s.kernel);
  s.leaky_slope = j.value("leaky_slope", s.leaky_slope);
  if (j.contains("normalization")) s.normalization = normalization_from_string(j.at("normalization"));
  s.norm_eps = j.value("norm_eps", s.norm_eps);
  s.input_channels = j.value("input_channels", s.input_channels);
  s.output_channels = j.value("output_channels", s.output_channels);
  return s;
}

json to_json(const PatchDiscriminatorSpec& s) {
  return {{"layer_channels", s.layer_channels}, {"strides", s.strides},
          {"head_stride", s.head_stride},       {"kernel", s.kernel},
          {"padding", s.padding},               {"input_channels", s.input_channels},
          {"leaky_slope", s.leaky_slope},       {"normalization", to_string(s.normalization)},
          {"norm_eps", s.norm_eps}};
}

PatchDiscriminatorSpec discriminator_from_json(const json& j, const PatchDiscriminatorSpec& base) {
  PatchDiscriminatorSpec s = base;
  s.layer_channels = j.value("layer_channels", s.layer_channels);
  s.strides = j.value("strides", s.strides);
  s.head_stride = j.value("head_stride", s.head_stride);
  s.kernel = j.value("kernel", s.kernel);
  s.padding = j.value("padding", s.padding);
  s.input_channels = j.value("input_channels", s.input_channels);
  s.leaky_slope = j.value("leaky_slope", s.leaky_slope);
  if (j.contains("normalization")) s.normalization = normalization_from_string(j.at("normalization"));
  s.norm_eps = j.value("norm_eps", s.norm_eps);
  return s;
}

json to_json(const ExtractorSpec& s) {
  return {{"block_channels", s.block_channels},
          {"block_layers", s.block_layers},
          {"width_divisor", s.width_divisor},
          {"mean", s.mean},
          {"stddev", s.stddev},
          {"weights_source", s.weights_source == WeightsSource::external_file ? "external-file" : "seeded-random"},
          {"seed", s.seed},
          {"weights_path", s.weights_path.string()}};
}

ExtractorSpec extractor_from_json(const json& j, const ExtractorSpec& base) {
  ExtractorSpec s = base;
  s.block_channels = j.value("block_channels", s.block_channels);
  s.block_layers = j.value("block_layers", s.block_layers);
  s.width_divisor = j.value("width_divisor", s.width_divisor);
  s.mean = j.value("mean", s.mean);
  s.stddev = j.value("stddev", s.stddev);
  if (j.contains("weights_source")) {
    const std::string src = j.at("weights_source");
    if (src == "external-file") {
      s.weights_source = WeightsSource::external_file;
    } else if (src == "seeded-random") {
      s.weights_source = WeightsSource::seeded_random;
    } else {
      throw ConfigError("extractor.weights_source must be external-file or seeded-random, got '" + src + "'");
    }
  }
  s.seed = j.value("seed", s.seed);
  s.weights_path = j.value("weights_path", s.weights_path.string());
  return s;
}

const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{"n_epochs",   "n_g",         "learning_rate", "adam_beta1",
                                          "adam_beta2", "adam_eps",    "batch_size",    "preset",
                                          "weights",    "casnet",      "discriminator", "extractor",
                                          "seed",       "image_size",  "checkpoint_interval",
                                          "log_interval", "max_steps", "spectral_iterations", "profile"};
  return keys;
}

template <typename T>
std::vector<const Parameter<T>*> as_const(const std::vector<Parameter<T>*>& v) {
  return {v.begin(), v.end()};
}

std::string step_tag(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step-%06llu", static_cast<unsigned long long>(step));
  return buf;
}

void check_finite(double v, const char* term, std::uint64_t step) {
  if (!std::isfinite(v)) throw NonFiniteLossError(term, static_cast<long long>(step));
}

}  // namespace

json to_json(const CasNetConfig& c) { return {{"n_blocks", c.n_blocks}, {"ublock", to_json(c.ublock)}}; }

CasNetConfig casnet_config_from_json(const json& j, const CasNetConfig& base) {
  CasNetConfig c = base;
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  if (j.contains("ublock")) c.ublock = ublock_from_json(j.at("ublock"), c.ublock);
  return c;
}

void TrainConfig::validate() const {
  if (n_epochs < 1) throw ConfigError("n_epochs must be >= 1");
  if (n_g < 1) throw ConfigError("n_g must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be > 0");
  if (batch_size != 1) throw ConfigError("only batch_size 1 is supported (instance statistics per sample)");
  if (spectral_iterations < 1) throw ConfigError("spectral_iterations must be >= 1");
  casnet.validate();
  discriminator.validate();
  extractor.validate();
  weights.validate();
  if (casnet.ublock.input_channels != 1) throw ConfigError("only single-channel images are supported");
  if (image_size == 0 || image_size % casnet.ublock.required_divisor() != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by " +
                      std::to_string(casnet.ublock.required_divisor()) + " (U-block depth " +
                      std::to_string(casnet.ublock.depth()) + ")");
  }
  if (weights.lambda_p.size() != discriminator.layer_channels.size() + 1) {
    throw ConfigError("weights.lambda_p needs " + std::to_string(discriminator.layer_channels.size() + 1) +
                      " entries (raw input plus each hidden layer)");
  }
  if (weights.lambda_s.size() != extractor.blocks() || weights.lambda_c.size() != extractor.blocks()) {
    throw ConfigError("weights.lambda_s and weights.lambda_c need one entry per extractor block (" +
                      std::to_string(extractor.blocks()) + ")");
  }
  if (weights.uses_extractor() && image_size < extractor.min_input_size()) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is below the extractor minimum " +
                      std::to_string(extractor.min_input_size()));
  }
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.casnet.n_blocks = 6;
  return c;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.image_size = 64;
  c.casnet.n_blocks = 1;
  c.casnet.ublock = UBlockSpec::scaled(5, 4);
  c.discriminator = PatchDiscriminatorSpec::scaled(4);
  c.extractor.width_divisor = 4;
  c.n_epochs = 30;
  c.log_interval = 10;
  return c;
}

TrainConfig TrainConfig::profile(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw ConfigError("unknown profile '" + name + "' (valid profiles: paper, desk)");
}

void TrainConfig::apply_preset(const std::string& name) {
  weights = loss_preset(name).with_masks(discriminator.layer_channels.size(), extractor.blocks());
  preset = name;
}

json to_json(const TrainConfig& c) {
  return {{"n_epochs", c.n_epochs},
          {"n_g", c.n_g},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size},
          {"preset", c.preset},
          {"weights", to_json(c.weights)},
          {"casnet", to_json(c.casnet)},
          {"discriminator", to_json(c.discriminator)},
          {"extractor", to_json(c.extractor)},
          {"seed", c.seed},
          {"image_size", c.image_size},
          {"checkpoint_interval", c.checkpoint_interval},
          {"log_interval", c.log_interval},
          {"max_steps", c.max_steps},
          {"spectral_iterations", c.spectral_iterations}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!config_keys().count(key)) throw ConfigError("unknown train config field '" + key + "'");
  }
  try {
    TrainConfig c = j.contains("profile") ? TrainConfig::profile(j.at("profile")) : base;
    c.n_epochs = j.value("n_epochs", c.n_epochs);
    c.n_g = j.value("n_g", c.n_g);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("casnet")) c.casnet = casnet_config_from_json(j.at("casnet"), c.casnet);
    if (j.contains("discriminator")) c.discriminator = discriminator_from_json(j.at("discriminator"), c.discriminator);
    if (j.contains("extractor")) c.extractor = extractor_from_json(j.at("extractor"), c.extractor);
    c.seed = j.value("seed", c.seed);
    c.image_size = j.value("image_size", c.image_size);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.log_interval = j.value("log_interval", c.log_interval);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.spectral_iterations = j.value("spectral_iterations", c.spectral_iterations);
    if (j.contains("preset")) c.apply_preset(j.at("preset"));
    if (j.contains("weights")) {
      json w = to_json(c.weights);
      w.merge_patch(j.at("weights"));
      c.weights = loss_weights_from_json(w);
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
}

json architecture_json(const TrainConfig& c) {
  return {{"casnet", to_json(c.casnet)},
          {"discriminator", to_json(c.discriminator)},
          {"extractor", to_json(c.extractor)},
          {"image_size", c.image_size}};
}

TrainConfig apply_overrides(const TrainConfig& base, const json& overrides) {
  json merged = to_json(base);
  json patch = overrides;
  if (patch.contains("preset") && !patch.contains("weights")) merged.erase("weights");
  if (patch.contains("profile")) throw ConfigError("a resumed run cannot switch profile");
  merged.merge_patch(patch);
  TrainConfig out = train_config_from_json(merged, base);
  const json before = architecture_json(base);
  const json after = architecture_json(out);
  for (const auto& [key, value] : before.items()) {
    if (after.at(key) != value) {
      throw ConfigError("override of '" + key + "' changes the architecture; resume keeps the stored architecture");
    }
  }
  out.validate();
  return out;
}

void Adam::step(const std::vector<Parameter<float>*>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float step = static_cast<float>(lr_ / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(eps_);
  for (auto* p : params) {
    auto [it, fresh] = moments_.try_emplace(p->name);
    Moments& mo = it->second;
    if (fresh) {
      mo.m = Tensor<float>(p->value.shape());
      mo.v = Tensor<float>(p->value.shape());
    }
    float* w = p->value.data();
    const float* g = p->grad.data();
    float* m = mo.m.data();
    float* v = mo.v.data();
    for (std::size_t i = 0, n = p->value.size(); i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
  }
}

void Adam::save(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.metadata["optimizer_steps"][prefix] = t_;
  for (const auto& [name, mo] : moments_) {
    ckpt.tensors[prefix + "m." + name] = mo.m;
    ckpt.tensors[prefix + "v." + name] = mo.v;
  }
}

void Adam::load(const Checkpoint& ckpt, const std::string& prefix, const std::vector<Parameter<float>*>& params) {
  t_ = ckpt.metadata.at("optimizer_steps").at(prefix).get<std::uint64_t>();
  moments_.clear();
  if (t_ == 0) return;
  for (auto* p : params) {
    Moments mo{ckpt.tensor(prefix + "m." + p->name), ckpt.tensor(prefix + "v." + p->name)};
    if (mo.m.shape() != p->value.shape() || mo.v.shape() != p->value.shape()) {
      throw IncompatibilityError("optimizer state for '" + p->name + "' does not match the parameter shape");
    }
    moments_.emplace(p->name, std::move(mo));
  }
}

NdjsonSink::NdjsonSink(const fs::path& path, bool append) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open event file " + path.string());
}

void NdjsonSink::on_event(const json& event) {
  out_ << event.dump() << '\n';
  out_.flush();
}

namespace {
TrainConfig validated(TrainConfig cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

Trainer::Trainer(TrainConfig cfg)
    : cfg_(validated(std::move(cfg))),
      generator_(cfg_.casnet, derive_seed(cfg_.seed, "generator")),
      discriminator_(cfg_.discriminator, derive_seed(cfg_.seed, "discriminator")),
      adam_g_(cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      adam_d_(cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps) {
  if (cfg_.weights.uses_extractor()) extractor_ = std::make_unique<Extractor<float>>(cfg_.extractor);
}

Trainer Trainer::resume(const Checkpoint& ckpt, const json& overrides) {
  if (!ckpt.metadata.contains("config")) throw IncompatibilityError("checkpoint carries no training config");
  const TrainConfig stored = train_config_from_json(ckpt.metadata.at("config"));
  Trainer t(apply_overrides(stored, overrides));
  restore_parameters(ckpt, t.generator_.parameters(), "generator.");
  restore_parameters(ckpt, t.discriminator_.parameters(), "discriminator.");
  for (std::size_t i = 0; i < t.discriminator_.conv_count(); ++i) {
    const Tensor<float>& u = ckpt.tensor("power.u" + std::to_string(i));
    auto& dst = t.discriminator_.power_vector(i);
    if (u.size() != dst.size()) throw IncompatibilityError("power-iteration vector " + std::to_string(i) + " has wrong length");
    dst.assign(u.values().begin(), u.values().end());
  }
  t.adam_g_.load(ckpt, "adam.generator.", t.generator_.parameters());
  t.adam_d_.load(ckpt, "adam.discriminator.", t.discriminator_.parameters());
  const json& m = ckpt.metadata;
  t.step_ = m.at("step");
  t.epoch_ = m.at("epoch");
  t.position_ = m.at("position");
  t.g_updates_ = m.at("generator_updates");
  t.d_updates_ = m.at("discriminator_updates");
  return t;
}

bool Trainer::finished() const {
  if (cfg_.max_steps && step_ >= cfg_.max_steps) return true;
  return epoch_ >= cfg_.n_epochs;
}

void Trainer::check_dataset(const PairedDataset& data) const {
  if (data.empty()) throw ConfigError("training dataset is empty");
  if (data.image_size() != cfg_.image_size) {
    throw ShapeError("dataset images are " + std::to_string(data.image_size()) + " pixels but the config expects " +
                     std::to_string(cfg_.image_size));
  }
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t n, std::uint64_t epoch) const {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Engine eng(derive_seed(derive_seed(cfg_.seed, "shuffle"), epoch));
  // Fisher-Yates with our own index draw so the order is identical across standard libraries.
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[eng() % i]);
  return order;
}

StepRecord Trainer::train_step(const PairedDataset& data) {
  check_dataset(data);
  if (position_ >= data.size()) throw ConfigError("resumed position is beyond the dataset; was it changed?");
  const PairedSample& s = data.samples[epoch_order(data.size(), epoch_)[position_]];

  StepRecord rec;
  rec.step = step_ + 1;
  rec.epoch = epoch_;
  rec.sample_id = s.sample_id;

  const auto refs = compute_references(discriminator_, extractor_.get(), s.target, s.source, cfg_.weights);
  const auto g_params = generator_.parameters();
  for (std::size_t k = 0; k < cfg_.n_g; ++k) {
    std::vector<UBlockTrace<float>> traces;
    const Tensor<float> fake = generator_.forward(s.source, &traces);
    auto obj = generator_objective(fake, s.target, s.source, discriminator_, extractor_.get(), cfg_.weights, refs, true);
    const LossBreakdown& b = obj.breakdown;
    check_finite(b.adversarial, "adversarial", rec.step);
    check_finite(b.perceptual, "perceptual", rec.step);
    check_finite(b.style, "style", rec.step);
    check_finite(b.content, "content", rec.step);
    check_finite(b.l1, "l1", rec.step);
    check_finite(b.l2, "l2", rec.step);
    check_finite(b.tv, "tv", rec.step);
    check_finite(b.total, "total", rec.step);
    zero_grads(g_params);
    generator_.backward(traces, obj.grad_fake);
    adam_g_.step(g_params);
    ++g_updates_;
    rec.generator = b;
  }

  const Tensor<float> fake = generator_.forward(s.source);
  const auto d_params = discriminator_.parameters();
  zero_grads(d_params);
  rec.discriminator_objective = discriminator_objective(discriminator_, s.target, fake, s.source, true);
  check_finite(rec.discriminator_objective, "discriminator", rec.step);
  adam_d_.step(d_params);
  rec.sigmas = discriminator_.apply_spectral_normalization(cfg_.spectral_iterations);
  ++d_updates_;

  ++step_;
  if (++position_ == data.size()) {
    position_ = 0;
    ++epoch_;
  }
  return rec;
}

void Trainer::run(const PairedDataset& data, EventSink* sink, const fs::path& run_dir, std::size_t limit,
                  const PairedDataset* preview) {
  check_dataset(data);
  if (!run_dir.empty()) {
    fs::create_directories(run_dir / "checkpoints");
    std::ofstream(run_dir / "config.json") << to_json(cfg_).dump(2) << "\n";
  }
  auto write_outputs = [&](const std::string& tag) {
    if (run_dir.empty()) return;
    save_checkpoint(checkpoint(), run_dir / "checkpoints" / (tag + ".mgck"));
    const PairedDataset& shown = preview && !preview->empty() ? *preview : data;
    for (std::size_t i = 0; i < std::min<std::size_t>(2, shown.size()); ++i) {
      const auto& s = shown.samples[i];
      const GrayImage panel = hconcat({denormalize_image(s.source), denormalize_image(generator_.forward(s.source)),
                                       denormalize_image(s.target)});
      write_png(run_dir / "samples" / (tag + "_" + s.sample_id + ".png"), panel);
    }
  };

  std::size_t done = 0;
  while (!finished() && (limit == 0 || done < limit)) {
    const StepRecord rec = train_step(data);
    ++done;
    if (sink && cfg_.log_interval && (rec.step % cfg_.log_interval == 0 || rec.step == 1)) {
      sink->on_event({{"type", "step"},
                      {"step", rec.step},
                      {"epoch", rec.epoch},
                      {"sample_id", rec.sample_id},
                      {"generator", to_json(rec.generator)},
                      {"discriminator_objective", rec.discriminator_objective},
                      {"sigmas", rec.sigmas},
                      {"generator_updates", g_updates_},
                      {"discriminator_updates", d_updates_}});
    }
    if (cfg_.checkpoint_interval && rec.step % cfg_.checkpoint_interval == 0) write_outputs(step_tag(rec.step));
  }
  write_outputs("final");
  if (sink) {
    sink->on_event({{"type", "done"},
                    {"step", step_},
                    {"epoch", epoch_},
                    {"generator_updates", g_updates_},
                    {"discriminator_updates", d_updates_}});
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.metadata = {{"format", "medgan-training-state"},
                 {"config", to_json(cfg_)},
                 {"seed", cfg_.seed},
                 {"step", step_},
                 {"epoch", epoch_},
                 {"position", position_},
                 {"generator_updates", g_updates_},
                 {"discriminator_updates", d_updates_}};
  if (extractor_) ck.metadata["extractor_digest"] = extractor_->weights_digest();
  store_parameters(ck, generator_.parameters(), "generator.");
  store_parameters(ck, discriminator_.parameters(), "discriminator.");
  for (std::size_t i = 0; i < discriminator_.conv_count(); ++i) {
    const auto& u = discriminator_.power_vector(i);
    ck.tensors["power.u" + std::to_string(i)] = Tensor<float>(Shape{u.size()}, u);
  }
  adam_g_.save(ck, "adam.generator.");
  adam_d_.save(ck, "adam.discriminator.");
  return ck;
}

Trainer train(const TrainConfig& cfg, const PairedDataset& data, EventSink* sink, const fs::path& run_dir) {
  Trainer t(cfg);
  t.run(data, sink, run_dir);
  return t;
}

namespace {
CasNet<float> generator_from(const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("config")) throw IncompatibilityError("checkpoint carries no training config");
  const TrainConfig cfg = train_config_from_json(ckpt.metadata.at("config"));
  CasNet<float> g(cfg.casnet, 0);
  restore_parameters(ckpt, g.parameters(), "generator.");
  return g;
}
}  // namespace

Translator::Translator(const Checkpoint& ckpt) : generator_(generator_from(ckpt)) {}

Tensor<float> Translator::operator()(const Tensor<float>& image) const { return generator_.forward(image); }

std::vector<Tensor<float>> Translator::translate(const std::vector<Tensor<float>>& images) const {
  std::vector<Tensor<float>> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back((*this)(im));
  return out;
}

std::vector<Tensor<float>> translate(const Checkpoint& ckpt, const std::vector<Tensor<float>>& inputs) {
  return Translator(ckpt).translate(inputs);
}

}  // namespace medgan
