#include "medgan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "json.hpp"
#include "medgan/digest.hpp"
#include "medgan/rng.hpp"

namespace medgan {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::set<std::string> png_ids(const fs::path& dir) {
  std::set<std::string> ids;
  if (!fs::is_directory(dir)) throw FormatError("missing directory " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") ids.insert(e.path().stem().string());
  }
  return ids;
}

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& i : items) s += (s.empty() ? "" : ", ") + i;
  return s;
}

// Separable Gaussian blur with clamped borders, on doubles.
std::vector<double> blur(const std::vector<double>& img, std::size_t w, std::size_t h, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  auto clampi = [](long v, long n) { return static_cast<std::size_t>(std::clamp<long>(v, 0, n - 1)); };
  std::vector<double> tmp(img.size()), out(img.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img[y * w + clampi(long(x) + i, long(w))];
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[clampi(long(y) + i, long(h)) * w + x];
      out[y * w + x] = acc;
    }
  }
  return out;
}

GrayImage ellipse_scene(std::uint64_t seed, std::size_t size) {
  Engine eng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double n = static_cast<double>(size);
  const int count = 2 + static_cast<int>(unit(eng) * 4);  // 2..5
  std::vector<double> field(size * size, 0.0);
  for (int e = 0; e < count; ++e) {
    const double cx = n * (0.2 + 0.6 * unit(eng));
    const double cy = n * (0.2 + 0.6 * unit(eng));
    const double a = n * (0.08 + 0.17 * unit(eng));
    const double b = n * (0.08 + 0.17 * unit(eng));
    const double theta = std::numbers::pi * unit(eng);
    const double level = 0.35 + 0.65 * unit(eng);
    const double taper = 0.25;  // fraction of the radius over which the edge falls off
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
        const double r = std::sqrt(u * u + v * v);
        double f = 0;
        if (r <= 1.0 - taper) {
          f = 1.0;
        } else if (r < 1.0) {
          f = 0.5 * (1.0 + std::cos(std::numbers::pi * (r - (1.0 - taper)) / taper));
        }
        double& p = field[y * size + x];
        p = std::max(p, level * f);
      }
    }
  }
  GrayImage out(size, size);
  for (std::size_t i = 0; i < field.size(); ++i) out.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * field[i]));
  return out;
}

}  // namespace

std::vector<std::string> PairedDataset::group_ids() const {
  std::vector<std::string> out;
  for (const auto& s : samples) {
    if (std::find(out.begin(), out.end(), s.group_id) == out.end()) out.push_back(s.group_id);
  }
  return out;
}

std::string dataset_digest(const std::vector<PairedSample>& samples) {
  Sha256 h;
  for (const auto& s : samples) {
    h.update(s.sample_id.data(), s.sample_id.size() + 1);
    h.update(s.group_id.data(), s.group_id.size() + 1);
    h.update_values(s.source.values());
    h.update_values(s.target.values());
  }
  return h.hex_digest();
}

PairedDataset load_paired_dataset(const fs::path& root, const std::string& split, std::size_t expected_size) {
  const auto src_ids = png_ids(root / "source");
  const auto tgt_ids = png_ids(root / "target");
  std::vector<std::string> orphans;
  std::set_symmetric_difference(src_ids.begin(), src_ids.end(), tgt_ids.begin(), tgt_ids.end(),
                                std::back_inserter(orphans));
  if (!orphans.empty()) throw PairingError("unpaired sample ids (missing counterpart): " + join(orphans));

  const fs::path manifest_path = root / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("missing manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }

  std::map<std::string, std::pair<std::string, std::string>> entries;  // id -> (group, split)
  std::map<std::string, std::string> group_split;
  for (const auto& e : manifest.at("samples")) {
    const std::string id = e.at("id"), group = e.at("group"), sp = e.at("split");
    if (!entries.emplace(id, std::make_pair(group, sp)).second) throw FormatError("manifest: duplicate id '" + id + "'");
    auto [it, fresh] = group_split.emplace(group, sp);
    if (!fresh && it->second != sp) {
      throw ConfigError("manifest: group '" + group + "' appears in both " + it->second + " and " + sp + " splits");
    }
  }
  std::vector<std::string> unlisted;
  for (const auto& id : src_ids) {
    if (!entries.count(id)) unlisted.push_back(id);
  }
  if (!unlisted.empty()) throw FormatError("manifest has no entry for: " + join(unlisted));
  std::vector<std::string> missing;
  for (const auto& [id, e] : entries) {
    if (!src_ids.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) throw PairingError("manifest lists ids with no image files: " + join(missing));

  PairedDataset ds;
  ds.split = split;
  std::size_t size = expected_size;
  for (const auto& [id, e] : entries) {
    if (e.second != split) continue;
    PairedSample s;
    s.sample_id = id;
    s.group_id = e.first;
    for (const char* side : {"source", "target"}) {
      const fs::path p = root / side / (id + ".png");
      const GrayImage img = read_png(p);
      if (img.width != img.height) throw FormatError(p.string() + ": image is not square");
      if (size == 0) size = img.width;
      if (img.width != size) {
        throw FormatError(p.string() + ": size " + std::to_string(img.width) + " differs from expected " +
                          std::to_string(size));
      }
      (std::string(side) == "source" ? s.source : s.target) = normalize_image(img);
    }
    ds.samples.push_back(std::move(s));
  }
  ds.manifest_digest = dataset_digest(ds.samples);
  return ds;
}

void write_paired_dataset(const fs::path& root, const PairedDataset& train, const PairedDataset& val) {
  fs::create_directories(root / "source");
  fs::create_directories(root / "target");
  json samples = json::array();
  for (const auto* ds : {&train, &val}) {
    for (const auto& s : ds->samples) {
      write_png(root / "source" / (s.sample_id + ".png"), denormalize_image(s.source));
      write_png(root / "target" / (s.sample_id + ".png"), denormalize_image(s.target));
      samples.push_back({{"id", s.sample_id}, {"group", s.group_id}, {"split", ds == &train ? "train" : "val"}});
    }
  }
  std::ofstream out(root / "manifest.json");
  out << json{{"samples", samples}}.dump(2) << "\n";
}

std::pair<PairedDataset, PairedDataset> split_by_group(const PairedDataset& all, std::size_t val_groups) {
  const auto groups = all.group_ids();
  if (val_groups >= groups.size() && !groups.empty()) {
    throw ConfigError("cannot hold out " + std::to_string(val_groups) + " of " + std::to_string(groups.size()) +
                      " groups and keep a training split");
  }
  const std::set<std::string> held(groups.end() - static_cast<std::ptrdiff_t>(val_groups), groups.end());
  PairedDataset train, val;
  train.split = "train";
  val.split = "val";
  for (const auto& s : all.samples) (held.count(s.group_id) ? val : train).samples.push_back(s);
  train.manifest_digest = dataset_digest(train.samples);
  val.manifest_digest = dataset_digest(val.samples);
  return {std::move(train), std::move(val)};
}

GrayImage SyntheticTransform::operator()(const GrayImage& source) const {
  const std::size_t w = source.width, h = source.height;
  std::vector<double> inv(w * h);
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 - source.pixels[i] / 255.0;
  const std::vector<double> smooth = blur(inv, w, h, sigma);
  std::vector<double> sharp(inv.size());
  for (std::size_t i = 0; i < inv.size(); ++i) sharp[i] = std::clamp(inv[i] + alpha * (inv[i] - smooth[i]), 0.0, 1.0);
  const std::vector<double> t = blur(sharp, w, h, sigma);
  GrayImage out(w, h);
  for (std::size_t i = 0; i < t.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(t[i], 0.0, 1.0)));
  }
  return out;
}

PairedDataset generate_synthetic_pairs(std::uint64_t seed, std::size_t count, std::size_t size, std::size_t groups) {
  if (count < 1) throw ConfigError("synthetic dataset needs count >= 1");
  if (size < 32 || (size & (size - 1)) != 0) {
    throw ConfigError("synthetic image size must be a power of two >= 32, got " + std::to_string(size));
  }
  if (groups < 1) throw ConfigError("synthetic dataset needs at least one group");
  const SyntheticTransform transform;
  PairedDataset ds;
  ds.split = "all";
  const int width = count > 9999 ? static_cast<int>(std::to_string(count - 1).size()) : 4;
  for (std::size_t i = 0; i < count; ++i) {
    std::string id = std::to_string(i);
    id = "s" + std::string(width - std::min<std::size_t>(width, id.size()), '0') + id;
    const GrayImage src = ellipse_scene(derive_seed(seed, i), size);
    ds.samples.push_back({id, "g" + std::to_string(i % groups), normalize_image(src), normalize_image(transform(src))});
  }
  ds.manifest_digest = dataset_digest(ds.samples);
  return ds;
}

}  // namespace medgan
