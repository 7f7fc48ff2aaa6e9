#include "medgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "medgan/image_io.hpp"

namespace medgan {
namespace {

struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> v;
  double at(std::size_t r, std::size_t c) const { return v[r * w + c]; }
};

Plane plane(const Tensor<double>& t) {
  if (t.rank() != 3 || t.channels() != 1) throw ShapeError("metrics expect a 1xHxW image, got " + shape_string(t.shape()));
  return {t.height(), t.width(), {t.storage().begin(), t.storage().end()}};
}

void check_pair(const Tensor<double>& a, const Tensor<double>& b, const char* what) {
  require_same_shape(a, b, what);
  if (a.rank() != 3 || a.channels() != 1) throw ShapeError(std::string(what) + ": expected a 1xHxW image");
}

std::vector<double> gaussian_1d(std::size_t n, double sigma) {
  std::vector<double> k(n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - c;
    sum += k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  for (auto& x : k) x /= sum;
  return k;
}

// 'valid' correlation with the separable kernel k (x) k.
Plane filter_valid(const Plane& p, const std::vector<double>& k) {
  const std::size_t n = k.size();
  if (p.h < n || p.w < n) return {};
  const std::size_t oh = p.h - n + 1, ow = p.w - n + 1;
  Plane tmp{p.h, ow, std::vector<double>(p.h * ow)};
  for (std::size_t r = 0; r < p.h; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * p.at(r, c + i);
      tmp.v[r * ow + c] = acc;
    }
  }
  Plane out{oh, ow, std::vector<double>(oh * ow)};
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * tmp.at(r + i, c);
      out.v[r * ow + c] = acc;
    }
  }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out{a.h, a.w, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

Plane decimate(const Plane& p) {
  Plane out{(p.h + 1) / 2, (p.w + 1) / 2, {}};
  out.v.resize(out.h * out.w);
  for (std::size_t r = 0; r < out.h; ++r) {
    for (std::size_t c = 0; c < out.w; ++c) out.v[r * out.w + c] = p.at(2 * r, 2 * c);
  }
  return out;
}

}  // namespace

double mse(const Tensor<double>& a, const Tensor<double>& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw ShapeError("mse of empty images");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr(const Tensor<double>& a, const Tensor<double>& b, double max_value) {
  if (!(max_value > 0)) throw ConfigError("psnr max_value must be positive");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / m);
}

double ssim(const Tensor<double>& a, const Tensor<double>& b, const SsimParams& params) {
  check_pair(a, b, "ssim");
  if (a.height() < params.window || a.width() < params.window) {
    throw ShapeError("ssim: image " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                     " is smaller than the " + std::to_string(params.window) + "x" + std::to_string(params.window) +
                     " window");
  }
  const Plane pa = plane(a), pb = plane(b);
  const auto k = gaussian_1d(params.window, params.sigma);
  const Plane mu_a = filter_valid(pa, k), mu_b = filter_valid(pb, k);
  const Plane aa = filter_valid(product(pa, pa), k), bb = filter_valid(product(pb, pb), k),
              ab = filter_valid(product(pa, pb), k);
  const double c1 = std::pow(params.k1 * params.max_value, 2);
  const double c2 = std::pow(params.k2 * params.max_value, 2);
  double acc = 0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = aa.v[i] - ma * ma, vb = bb.v[i] - mb * mb, cov = ab.v[i] - ma * mb;
    acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(mu_a.v.size());
}

UqiResult uqi_detail(const Tensor<double>& a, const Tensor<double>& b, std::size_t window) {
  check_pair(a, b, "uqi");
  if (window == 0 || a.height() < window || a.width() < window) {
    throw ShapeError("uqi: image smaller than the " + std::to_string(window) + "x" + std::to_string(window) + " window");
  }
  const Plane pa = plane(a), pb = plane(b);
  const double n = static_cast<double>(window * window);
  UqiResult res;
  double acc = 0;
  std::size_t used = 0;
  for (std::size_t r = 0; r + window <= pa.h; ++r) {
    for (std::size_t c = 0; c + window <= pa.w; ++c) {
      double ma = 0, mb = 0;
      for (std::size_t i = 0; i < window; ++i) {
        for (std::size_t j = 0; j < window; ++j) {
          ma += pa.at(r + i, c + j);
          mb += pb.at(r + i, c + j);
        }
      }
      ma /= n;
      mb /= n;
      double va = 0, vb = 0, cov = 0;
      for (std::size_t i = 0; i < window; ++i) {
        for (std::size_t j = 0; j < window; ++j) {
          const double da = pa.at(r + i, c + j) - ma, db = pb.at(r + i, c + j) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      }
      va /= n;
      vb /= n;
      cov /= n;
      ++res.windows;
      const double den_var = va + vb, den_mean = ma * ma + mb * mb;
      if (den_mean == 0.0) {
        ++res.skipped;
        continue;
      }
      // Two flat windows: only the luminance factor is defined.
      acc += den_var == 0.0 ? 2 * ma * mb / den_mean : 4 * cov * ma * mb / (den_var * den_mean);
      ++used;
    }
  }
  if (used == 0) {
    res.value = a == b ? 1.0 : 0.0;
  } else {
    res.value = acc / static_cast<double>(used);
  }
  return res;
}

double vif(const Tensor<double>& reference, const Tensor<double>& distorted, double sigma_nsq) {
  check_pair(reference, distorted, "vif");
  if (reference.height() < 32 || reference.width() < 32) throw ShapeError("vif needs images of at least 32x32");
  Plane ref = plane(reference), dist = plane(distorted);
  constexpr double kTiny = 1e-10;
  double num = 0, den = 0;
  for (int scale = 1; scale <= 4; ++scale) {
    const std::size_t n = (std::size_t{1} << (4 - scale + 1)) + 1;
    const auto k = gaussian_1d(n, static_cast<double>(n) / 5.0);
    if (scale > 1) {
      ref = filter_valid(ref, k);
      dist = filter_valid(dist, k);
      if (ref.v.empty()) break;
      ref = decimate(ref);
      dist = decimate(dist);
    }
    const Plane mu1 = filter_valid(ref, k), mu2 = filter_valid(dist, k);
    if (mu1.v.empty()) break;  // window no longer fits
    const Plane s11 = filter_valid(product(ref, ref), k), s22 = filter_valid(product(dist, dist), k),
                s12 = filter_valid(product(ref, dist), k);
    for (std::size_t i = 0; i < mu1.v.size(); ++i) {
      double sigma1_sq = std::max(0.0, s11.v[i] - mu1.v[i] * mu1.v[i]);
      const double sigma2_sq = std::max(0.0, s22.v[i] - mu2.v[i] * mu2.v[i]);
      const double sigma12 = s12.v[i] - mu1.v[i] * mu2.v[i];
      double g = sigma12 / (sigma1_sq + kTiny);
      double sv_sq = sigma2_sq - g * sigma12;
      if (sigma1_sq < kTiny) {
        g = 0;
        sv_sq = sigma2_sq;
        sigma1_sq = 0;
      }
      if (sigma2_sq < kTiny) {
        g = 0;
        sv_sq = 0;
      }
      if (g < 0) {
        sv_sq = sigma2_sq;
        g = 0;
      }
      sv_sq = std::max(sv_sq, kTiny);
      num += std::log10(1.0 + g * g * sigma1_sq / (sv_sq + sigma_nsq));
      den += std::log10(1.0 + sigma1_sq / sigma_nsq);
    }
  }
  return den == 0.0 ? 1.0 : num / den;
}

double perceptual_distance(const Extractor<float>& extractor, const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a, b, "perceptual_distance");
  const auto fa = extractor.forward(a);
  const auto fb = extractor.forward(b);
  constexpr double kEps = 1e-10;
  double total = 0;
  for (std::size_t j = 0; j < fa.size(); ++j) {
    const std::size_t d = fa[j].channels(), hw = fa[j].height() * fa[j].width();
    double block = 0;
    for (std::size_t p = 0; p < hw; ++p) {
      double na = 0, nb = 0;
      for (std::size_t c = 0; c < d; ++c) {
        na += double(fa[j][c * hw + p]) * fa[j][c * hw + p];
        nb += double(fb[j][c * hw + p]) * fb[j][c * hw + p];
      }
      na = std::sqrt(na) + kEps;
      nb = std::sqrt(nb) + kEps;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = fa[j][c * hw + p] / na - fb[j][c * hw + p] / nb;
        block += diff * diff;
      }
    }
    total += block / static_cast<double>(hw);
  }
  return total / static_cast<double>(fa.size());
}

ExtractorSpec evaluation_extractor_spec() {
  ExtractorSpec s;
  s.width_divisor = 4;
  s.seed = 7;
  return s;
}

const std::vector<std::string>& MetricReport::columns() {
  static const std::vector<std::string> cols{"sample_id", "ssim", "psnr_db", "mse", "vif", "uqi", "pdist"};
  return cols;
}

void MetricReport::compute_aggregate() {
  aggregate = MetricRow{};
  aggregate.sample_id = "mean";
  if (rows.empty()) return;
  for (const auto& r : rows) {
    aggregate.ssim += r.ssim;
    aggregate.psnr_db += r.psnr_db;
    aggregate.mse += r.mse;
    aggregate.vif += r.vif;
    aggregate.uqi += r.uqi;
    aggregate.pdist += r.pdist;
  }
  const double n = static_cast<double>(rows.size());
  aggregate.ssim /= n;
  aggregate.psnr_db /= n;
  aggregate.mse /= n;
  aggregate.vif /= n;
  aggregate.uqi /= n;
  aggregate.pdist /= n;
}

namespace {
nlohmann::json row_json(const MetricRow& r) {
  // JSON has no infinity; identical images report psnr_db as the string "inf".
  nlohmann::json p = std::isinf(r.psnr_db) ? nlohmann::json("inf") : nlohmann::json(r.psnr_db);
  return {{"sample_id", r.sample_id}, {"ssim", r.ssim}, {"psnr_db", p}, {"mse", r.mse},
          {"vif", r.vif},             {"uqi", r.uqi},   {"pdist", r.pdist}};
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}
}  // namespace

nlohmann::json MetricReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) rs.push_back(row_json(r));
  return {{"columns", columns()}, {"rows", rs}, {"aggregate", row_json(aggregate)}, {"metadata", metadata}};
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < columns().size(); ++i) os << (i ? "," : "") << columns()[i];
  os << "\n";
  auto line = [&](const MetricRow& r) {
    os << r.sample_id << "," << fmt(r.ssim) << "," << fmt(r.psnr_db) << "," << fmt(r.mse) << "," << fmt(r.vif) << ","
       << fmt(r.uqi) << "," << fmt(r.pdist) << "\n";
  };
  for (const auto& r : rows) line(r);
  line(aggregate);
  return os.str();
}

void MetricReport::write(const std::filesystem::path& stem) const {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream(stem.string() + ".csv") << to_csv();
  std::ofstream(stem.string() + ".json") << to_json().dump(2) << "\n";
}

MetricRow evaluate_pair(const std::string& sample_id, const Tensor<float>& prediction, const Tensor<float>& target,
                        const Extractor<float>& extractor) {
  const GrayImage p8 = denormalize_image(prediction), t8 = denormalize_image(target);
  const Tensor<double> p = to_intensity(p8), t = to_intensity(t8);
  MetricRow r;
  r.sample_id = sample_id;
  r.ssim = ssim(p, t);
  r.psnr_db = psnr(p, t);
  r.mse = mse(p, t);
  r.vif = vif(t, p);
  r.uqi = uqi(p, t);
  r.pdist = perceptual_distance(extractor, normalize_image(p8), normalize_image(t8));
  return r;
}

MetricReport evaluate_dataset(const TranslateFn& translate, const PairedDataset& dataset,
                              const Extractor<float>& extractor) {
  MetricReport rep;
  std::vector<const PairedSample*> order;
  for (const auto& s : dataset.samples) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](auto* x, auto* y) { return x->sample_id < y->sample_id; });
  for (const auto* s : order) rep.rows.push_back(evaluate_pair(s->sample_id, translate(s->source), s->target, extractor));
  rep.compute_aggregate();
  const auto& es = extractor.spec();
  rep.metadata = {{"dataset_digest", dataset.manifest_digest},
                  {"split", dataset.split},
                  {"samples", dataset.size()},
                  {"scale", "denormalized 8-bit, max_value 255"},
                  {"ssim", {{"window", 11}, {"sigma", 1.5}, {"k1", 0.01}, {"k2", 0.03}}},
                  {"uqi", {{"window", 8}}},
                  {"vif", {{"variant", "pixel-domain, 4 scales"}, {"sigma_nsq", 2.0}}},
                  {"pdist",
                   {{"extractor_width_divisor", es.width_divisor},
                    {"extractor_seed", es.seed},
                    {"extractor_digest", extractor.weights_digest()}}}};
  return rep;
}

}  // namespace medgan
