#include <png.h>

#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "medgan/dataset.hpp"
#include "medgan/digest.hpp"
#include "medgan/image_io.hpp"

using namespace medgan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("medgan-test-data-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_rgb(const fs::path& p, std::size_t n) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(n);
  img.height = static_cast<png_uint_32>(n);
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> px(n * n * 3, 90);
  REQUIRE(png_image_write_to_file(&img, p.c_str(), 0, px.data(), 0, nullptr));
}

PairedDataset tiny(std::size_t count) { return generate_synthetic_pairs(9, count, 32, 4); }

}  // namespace

TEST_CASE("sha256 known vector") {
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("value normalization") {
  CHECK(normalize_value(0) == -1.0f);
  CHECK(normalize_value(255) == 1.0f);
  for (int p = 0; p < 256; ++p) CHECK(denormalize_value(normalize_value(static_cast<std::uint8_t>(p))) == p);
  CHECK(denormalize_value(3.0) == 255);
  CHECK(denormalize_value(-7.0) == 0);
}

TEST_CASE("png round trip and format checks") {
  const auto dir = scratch("png");
  GrayImage g(5, 3);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = static_cast<std::uint8_t>(i * 17);
  write_png(dir / "nested" / "g.png", g);
  CHECK(read_png(dir / "nested" / "g.png") == g);
  write_rgb(dir / "rgb.png", 4);
  try {
    read_png(dir / "rgb.png");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("rgb.png") != std::string::npos);
  }
  std::ofstream(dir / "junk.png") << "not a png";
  CHECK_THROWS_AS(read_png(dir / "junk.png"), FormatError);
}

TEST_CASE("panel concatenation") {
  const GrayImage a(2, 2, 10), b(3, 2, 20);
  const auto p = hconcat({a, b}, 1);
  CHECK(p.width == 6);
  CHECK(p.at(0, 2) == 0);
  CHECK(p.at(1, 5) == 20);
}

TEST_CASE("synthetic pairs are deterministic and follow the transform") {
  const auto a = tiny(6), b = tiny(6);
  CHECK(a.manifest_digest == b.manifest_digest);
  CHECK(a.manifest_digest != generate_synthetic_pairs(10, 6, 32, 4).manifest_digest);
  CHECK(a.samples[0].sample_id == "s0000");
  CHECK(a.samples[5].group_id == "g1");
  // black background maps to white after inversion
  CHECK(SyntheticTransform{}(GrayImage(32, 32, 0)).pixels.front() == 255);
  CHECK_THROWS_AS(generate_synthetic_pairs(1, 4, 48, 2), ConfigError);
  CHECK_THROWS_AS(generate_synthetic_pairs(1, 0, 32, 2), ConfigError);
}

TEST_CASE("group split never leaks") {
  const auto [train, val] = split_by_group(tiny(20), 1);
  CHECK(train.size() == 15);
  CHECK(val.size() == 5);
  for (const auto& s : val.samples) CHECK(s.group_id == "g3");
  CHECK_THROWS_AS(split_by_group(tiny(8), 4), ConfigError);
}

TEST_CASE("dataset directory round trip") {
  const auto dir = scratch("roundtrip");
  const auto [train, val] = split_by_group(tiny(12), 1);
  write_paired_dataset(dir, train, val);
  const auto t = load_paired_dataset(dir, "train", 32);
  const auto v = load_paired_dataset(dir, "val");
  CHECK(t.size() == 9);
  CHECK(v.size() == 3);
  CHECK(t.manifest_digest == train.manifest_digest);
  // 8-bit storage is exact for synthetic data
  CHECK(t.samples[0].target == train.samples[0].target);
  CHECK_THROWS_AS(load_paired_dataset(dir, "train", 64), FormatError);
}

TEST_CASE("orphans and broken manifests are reported") {
  const auto dir = scratch("orphan");
  const auto [train, val] = split_by_group(tiny(8), 1);
  write_paired_dataset(dir, train, val);
  fs::remove(dir / "target" / "s0001.png");
  try {
    load_paired_dataset(dir, "train");
    FAIL("expected PairingError");
  } catch (const PairingError& e) {
    CHECK(std::string(e.what()).find("s0001") != std::string::npos);
  }

  const auto dir2 = scratch("leak");
  write_paired_dataset(dir2, train, val);
  std::ifstream in(dir2 / "manifest.json");
  auto m = nlohmann::json::parse(in);
  m["samples"][0]["group"] = val.samples[0].group_id;
  std::ofstream(dir2 / "manifest.json") << m.dump();
  CHECK_THROWS_AS(load_paired_dataset(dir2, "train"), ConfigError);

  const auto dir3 = scratch("rgb");
  write_paired_dataset(dir3, train, val);
  write_rgb(dir3 / "source" / "s0000.png", 32);
  CHECK_THROWS_AS(load_paired_dataset(dir3, "train"), FormatError);

  CHECK_THROWS_AS(load_paired_dataset(scratch("empty"), "train"), FormatError);
}
