#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dr2/image.hpp"
#include "dr2/io.hpp"
#include "dr2/rng.hpp"

namespace dr2 {

inline constexpr double kPsnrCap = 100.0;  // returned for identical images

// PSNR on the 8-bit scale (MAX = 255).
inline double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = to_8bit_scale(a.data[i]) - to_8bit_scale(b.data[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, computed per channel on the 8-bit scale and averaged.
inline double ssim(const ImageTensor& a, const ImageTensor& b,
                   const SsimParams& p = {}) {
  require_same_shape(a, b, "ssim");
  if (a.height < p.window || a.width < p.window)
    throw std::invalid_argument("ssim: image smaller than window");

  std::vector<double> kernel(p.window);
  const int radius = p.window / 2;
  double ksum = 0.0;
  for (int i = 0; i < p.window; ++i) {
    const double d = i - radius;
    kernel[i] = std::exp(-0.5 * d * d / (p.sigma * p.sigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  const double c1 = (p.k1 * 255.0) * (p.k1 * 255.0);
  const double c2 = (p.k2 * 255.0) * (p.k2 * 255.0);
  const int oh = a.height - p.window + 1;
  const int ow = a.width - p.window + 1;

  // Separable filter helper over an arbitrary plane.
  const auto filter = [&](const std::vector<double>& plane, int h,
                          int w) -> std::vector<double> {
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int k = 0; k < p.window; ++k) acc += kernel[k] * plane[y * w + x + k];
        tmp[y * ow + x] = acc;
      }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int k = 0; k < p.window; ++k) acc += kernel[k] * tmp[(y + k) * ow + x];
        out[y * ow + x] = acc;
      }
    return out;
  };

  double total = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    const int h = a.height, w = a.width;
    std::vector<double> pa(static_cast<std::size_t>(h) * w);
    std::vector<double> pb(pa.size()), paa(pa.size()), pbb(pa.size()),
        pab(pa.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double va = to_8bit_scale(a.at(y, x, ch));
        const double vb = to_8bit_scale(b.at(y, x, ch));
        pa[y * w + x] = va;
        pb[y * w + x] = vb;
        paa[y * w + x] = va * va;
        pbb[y * w + x] = vb * vb;
        pab[y * w + x] = va * vb;
      }
    const auto mu_a = filter(pa, h, w);
    const auto mu_b = filter(pb, h, w);
    const auto s_aa = filter(paa, h, w);
    const auto s_bb = filter(pbb, h, w);
    const auto s_ab = filter(pab, h, w);

    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = s_aa[i] - mu_a[i] * mu_a[i];
      const double vb = s_bb[i] - mu_b[i] * mu_b[i];
      const double cov = s_ab[i] - mu_a[i] * mu_b[i];
      acc += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / a.channels;
}

// ---------------------------------------------------------------------------
// Identity distance (embedding angle) behind a pluggable embedder contract.

class Embedder {
 public:
  virtual ~Embedder() = default;
  // Unit-norm embedding of an image.
  virtual std::vector<double> embed(const ImageTensor& img) const = 0;
  virtual int dimension() const = 0;
};

// Fixed random projection + normalization; stands in for a face-identity
// network in desk-scale runs.
class ToyEmbedder final : public Embedder {
 public:
  ToyEmbedder(int image_size, int dim = 64, std::uint64_t seed = 7)
      : image_size_(image_size), dim_(dim) {
    Rng rng(seed);
    const int in = image_size * image_size * 3;
    proj_.resize(static_cast<std::size_t>(dim) * in);
    for (double& v : proj_) v = rng.normal() / std::sqrt(in);
  }

  std::vector<double> embed(const ImageTensor& img) const override {
    if (img.height != image_size_ || img.width != image_size_ ||
        img.channels != 3)
      throw std::invalid_argument("ToyEmbedder: unexpected image shape");
    std::vector<double> out(dim_, 0.0);
    const int in = image_size_ * image_size_ * 3;
    for (int d = 0; d < dim_; ++d) {
      double acc = 0.0;
      for (int i = 0; i < in; ++i)
        acc += proj_[static_cast<std::size_t>(d) * in + i] * img.data[i];
      out[d] = acc;
    }
    double norm = 0.0;
    for (double v : out) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      out[0] = 1.0;  // degenerate all-zero projection
      return out;
    }
    for (double& v : out) v /= norm;
    return out;
  }

  int dimension() const override { return dim_; }

 private:
  int image_size_;
  int dim_;
  std::vector<double> proj_;
};

// Deg: arccos of the embeddings' dot product, in degrees.
inline double identity_deg(const ImageTensor& a, const ImageTensor& b,
                           const Embedder& embedder) {
  const auto ea = embedder.embed(a);
  const auto eb = embedder.embed(b);
  double dot = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) dot += ea[i] * eb[i];
  dot = std::max(-1.0, std::min(1.0, dot));
  return std::acos(dot) * 180.0 / 3.14159265358979323846;
}

// ---------------------------------------------------------------------------
// Perceptual-metric contracts. Feature extraction is pluggable; only the
// Frechet distance over supplied feature sets is computed natively.

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<double> features(const ImageTensor& img) const = 0;
  virtual int dimension() const = 0;
};

// Frechet distance between Gaussians fitted to two feature sets:
// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
inline double frechet_distance(const std::vector<std::vector<double>>& feats_a,
                               const std::vector<std::vector<double>>& feats_b) {
  if (feats_a.size() < 2 || feats_b.size() < 2)
    throw std::invalid_argument("frechet_distance: need >= 2 samples per set");
  const int d = static_cast<int>(feats_a[0].size());
  const auto fit = [d](const std::vector<std::vector<double>>& feats,
                       Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    const int n = static_cast<int>(feats.size());
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) X(i, j) = feats[i][j];
    mu = X.colwise().mean();
    const Eigen::MatrixXd centered = X.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / (n - 1.0);
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  fit(feats_a, mu_a, cov_a);
  fit(feats_b, mu_b, cov_b);

  const auto sqrt_psd = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() *
                           es.eigenvectors().transpose());
  };
  const Eigen::MatrixXd root_a = sqrt_psd(cov_a);
  const Eigen::MatrixXd inner = sqrt_psd(root_a * cov_b * root_a);
  const double mean_term = (mu_a - mu_b).squaredNorm();
  const double trace_term =
      cov_a.trace() + cov_b.trace() - 2.0 * inner.trace();
  return mean_term + trace_term;
}

// ---------------------------------------------------------------------------
// Directory evaluation

struct MetricsRow {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::optional<double> deg_degrees;
  std::optional<double> lpips;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::optional<double> mean_deg;
  std::optional<double> mean_lpips;
  std::vector<std::string> warnings;

  void finalize() {
    if (rows.empty()) return;
    double sp = 0.0, ss = 0.0, sd = 0.0, sl = 0.0;
    int nd = 0, nl = 0;
    for (const auto& r : rows) {
      sp += r.psnr_db;
      ss += r.ssim;
      if (r.deg_degrees) {
        sd += *r.deg_degrees;
        ++nd;
      }
      if (r.lpips) {
        sl += *r.lpips;
        ++nl;
      }
    }
    mean_psnr = sp / rows.size();
    mean_ssim = ss / rows.size();
    if (nd > 0) mean_deg = sd / nd;
    if (nl > 0) mean_lpips = sl / nl;
  }

  void write_csv_file(const std::string& path) const {
    std::vector<std::vector<std::string>> out;
    const auto fmt = [](double v) {
      std::ostringstream os;
      os.precision(10);
      os << v;
      return os.str();
    };
    for (const auto& r : rows)
      out.push_back({r.name, fmt(r.psnr_db), fmt(r.ssim),
                     r.deg_degrees ? fmt(*r.deg_degrees) : "",
                     r.lpips ? fmt(*r.lpips) : ""});
    if (!rows.empty())
      out.push_back({"MEAN", fmt(mean_psnr), fmt(mean_ssim),
                     mean_deg ? fmt(*mean_deg) : "",
                     mean_lpips ? fmt(*mean_lpips) : ""});
    write_csv(path, {"name", "psnr", "ssim", "deg", "lpips"}, out);
  }
};

struct EvaluateConfig {
  const Embedder* embedder = nullptr;             // enables the deg column
  const FeatureExtractor* lpips_extractor = nullptr;  // enables lpips
};

// Pairs prediction/reference files by stem; missing counterparts are
// surfaced in the report warnings rather than silently skipped.
inline MetricsReport evaluate_dir(const std::string& pred_dir,
                                  const std::string& ref_dir,
                                  const EvaluateConfig& cfg = {}) {
  MetricsReport report;
  const auto preds = list_images(pred_dir);
  const auto refs = list_images(ref_dir);
  if (preds.empty())
    report.warnings.push_back("no images found in " + pred_dir);

  const auto find_ref = [&](const std::string& stem) -> const fs::path* {
    for (const auto& r : refs)
      if (r.stem().string() == stem) return &r;
    return nullptr;
  };

  for (const auto& p : preds) {
    const fs::path* ref = find_ref(p.stem().string());
    if (!ref) {
      report.warnings.push_back("no reference for " + p.filename().string());
      continue;
    }
    const ImageTensor a = read_image(p.string());
    const ImageTensor b = read_image(ref->string());
    MetricsRow row;
    row.name = p.filename().string();
    row.psnr_db = psnr(a, b);
    row.ssim = ssim(a, b);
    if (cfg.embedder) row.deg_degrees = identity_deg(a, b, *cfg.embedder);
    if (cfg.lpips_extractor) {
      // Squared feature distance as the perceptual score stand-in.
      const auto fa = cfg.lpips_extractor->features(a);
      const auto fb = cfg.lpips_extractor->features(b);
      double acc = 0.0;
      for (std::size_t i = 0; i < fa.size(); ++i)
        acc += (fa[i] - fb[i]) * (fa[i] - fb[i]);
      row.lpips = acc / static_cast<double>(fa.size());
    }
    report.rows.push_back(std::move(row));
  }
  for (const auto& r : refs)
    if (std::none_of(preds.begin(), preds.end(), [&](const fs::path& p) {
          return p.stem() == r.stem();
        }))
      report.warnings.push_back("no prediction for " + r.filename().string());
  report.finalize();
  return report;
}

}  // namespace dr2
