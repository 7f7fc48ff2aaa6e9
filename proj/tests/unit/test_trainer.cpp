#include <fstream>

#include "doctest.h"
#include "medgan/trainer.hpp"
#include "suites.hpp"

using namespace medgan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

PairedDataset small_train() {
  static const PairedDataset d = split_by_group(generate_synthetic_pairs(8, 12, 64, 4), 1).first;
  return d;
}

TrainConfig quick(std::size_t steps) {
  TrainConfig c = TrainConfig::desk();
  c.casnet.ublock = UBlockSpec::scaled(4, 8);
  c.discriminator = PatchDiscriminatorSpec::scaled(8);
  c.seed = 12;
  c.max_steps = steps;
  return c;
}

}  // namespace

TEST_CASE("paper and desk profiles") {
  const auto p = TrainConfig::paper();
  CHECK(p.n_epochs == 200);
  CHECK(p.n_g == 3);
  CHECK(p.learning_rate == 2e-4);
  CHECK(p.adam_beta1 == 0.5);
  CHECK(p.casnet.n_blocks == 6);
  CHECK(p.image_size == 256);
  const auto d = TrainConfig::profile("desk");
  CHECK(d.image_size == 64);
  CHECK(d.casnet.n_blocks == 1);
  CHECK(d.casnet.ublock.depth() == 5);
  CHECK(d.casnet.ublock.encoder_channels.front() == 16);
  CHECK(d.n_epochs == 30);
  CHECK_THROWS_AS(TrainConfig::profile("laptop"), ConfigError);
}

TEST_CASE("config JSON round trip and validation") {
  TrainConfig c = TrainConfig::desk();
  c.apply_preset("fila-like");
  c.seed = 99;
  const auto back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(train_config_from_json(json{{"n_epoch", 3}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json{{"preset", "nope"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json{{"image_size", 100}}, TrainConfig::desk()), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json{{"batch_size", 4}}), ConfigError);
  const auto pre = train_config_from_json(json{{"profile", "desk"}, {"preset", "pix2pix"}}, TrainConfig::desk());
  CHECK(pre.weights.lambda_l1 == 100);
  CHECK(pre.weights.lambda_s.size() == pre.extractor.blocks());
}

TEST_CASE("overrides may not change the architecture") {
  const auto base = TrainConfig::desk();
  CHECK(apply_overrides(base, json{{"n_epochs", 5}}).n_epochs == 5);
  CHECK_THROWS_AS(apply_overrides(base, json{{"casnet", {{"n_blocks", 2}}}}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(base, json{{"image_size", 128}}), ConfigError);
  CHECK(apply_overrides(base, json{{"preset", "cgan"}}).weights.lambda1 == 0);
}

TEST_CASE("update schedule and spectral norms") {
  const auto r = suites::schedule(100);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("resumed trajectory matches the uninterrupted one") {
  const auto r = suites::resume(12, 10);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("same seed, same losses") {
  Trainer a(quick(4)), b(quick(4));
  for (int i = 0; i < 4; ++i) {
    const auto ra = a.train_step(small_train()), rb = b.train_step(small_train());
    CHECK(ra.sample_id == rb.sample_id);
    CHECK(ra.generator.total == rb.generator.total);
    CHECK(ra.discriminator_objective == rb.discriminator_objective);
  }
}

TEST_CASE("n_g controls generator updates per step") {
  auto c = quick(3);
  c.n_g = 1;
  Trainer t(c);
  t.run(small_train());
  CHECK(t.step() == 3);
  CHECK(t.generator_updates() == 3);
  CHECK(t.discriminator_updates() == 3);
  CHECK(t.finished());
}

TEST_CASE("extractor is only built when the weights need it") {
  auto c = quick(1);
  c.apply_preset("perceptual");
  CHECK(Trainer(c).extractor() == nullptr);
  c.apply_preset("medgan");
  CHECK(Trainer(c).extractor() != nullptr);
}

TEST_CASE("run directory, events and checkpoint resume") {
  const fs::path dir = fs::temp_directory_path() / "medgan-test-run";
  fs::remove_all(dir);
  auto c = quick(6);
  c.checkpoint_interval = 3;
  c.log_interval = 2;
  CollectingSink sink;
  Trainer t(c);
  t.run(small_train(), &sink, dir);
  CHECK(fs::exists(dir / "config.json"));
  CHECK(fs::exists(dir / "checkpoints" / "step-000003.mgck"));
  CHECK(fs::exists(dir / "checkpoints" / "final.mgck"));
  CHECK(fs::exists(dir / "samples"));
  REQUIRE(!sink.events.empty());
  CHECK(sink.events.front().at("step") == 1);
  CHECK(sink.events.back().at("type") == "done");

  const auto ck = load_checkpoint(dir / "checkpoints" / "step-000003.mgck");
  CHECK(ck.metadata.at("step") == 3);
  CHECK(ck.metadata.at("generator_updates") == 9);
  Trainer r = Trainer::resume(ck, json{{"max_steps", 5}});
  CHECK(r.step() == 3);
  r.run(small_train());
  CHECK(r.step() == 5);
  CHECK_THROWS_AS(Trainer::resume(ck, json{{"casnet", {{"n_blocks", 3}}}}), ConfigError);
}

TEST_CASE("dataset size must match the config") {
  Trainer t(quick(1));
  const auto wrong = split_by_group(generate_synthetic_pairs(1, 4, 32, 2), 1).first;
  CHECK_THROWS(t.train_step(wrong));
  CHECK_THROWS(t.train_step(PairedDataset{}));
}

TEST_CASE("ndjson sink writes one object per line") {
  const fs::path p = fs::temp_directory_path() / "medgan-test-events.ndjson";
  {
    NdjsonSink s(p);
    s.on_event({{"type", "a"}});
    s.on_event({{"type", "b"}});
  }
  std::ifstream in(p);
  std::string l1, l2;
  std::getline(in, l1);
  std::getline(in, l2);
  CHECK(json::parse(l1).at("type") == "a");
  CHECK(json::parse(l2).at("type") == "b");
}

TEST_CASE("translator reproduces the trained generator") {
  Trainer t(quick(1));
  const PairedDataset data = small_train();
  t.train_step(data);
  const auto& y = data.samples[0].source;
  const Translator tr(deserialize_checkpoint(serialize_checkpoint(t.checkpoint())));
  CHECK(tr(y) == t.generator().forward(y));
  CHECK_THROWS_AS(tr(Tensor<float>(Shape{1, 40, 40})), ShapeError);
}
