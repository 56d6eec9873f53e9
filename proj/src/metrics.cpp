#include "panoseg/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "panoseg/error.hpp"

namespace panoseg {

namespace {
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
}  // namespace

Grid to_gray(const ImageRGB& image) {
  Grid g(image.width, image.height);
  for (size_t i = 0; i < image.pixels.size(); ++i) {
    const auto& px = image.pixels[i];
    g.v[i] = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
  }
  return g;
}

std::array<Grid, 3> to_channels(const ImageRGB& image) {
  std::array<Grid, 3> out{Grid(image.width, image.height), Grid(image.width, image.height),
                          Grid(image.width, image.height)};
  for (size_t i = 0; i < image.pixels.size(); ++i) {
    for (int c = 0; c < 3; ++c) out[c].v[i] = image.pixels[i][c] / 255.0;
  }
  return out;
}

Grid bilinear_resize(const Grid& g, int out_w, int out_h) {
  Grid out(out_w, out_h);
  const double sy = static_cast<double>(g.height) / out_h;
  const double sx = static_cast<double>(g.width) / out_w;
  for (int i = 0; i < out_h; ++i) {
    double fy = (i + 0.5) * sy - 0.5;
    fy = std::max(0.0, std::min(fy, static_cast<double>(g.height - 1)));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, g.height - 1);
    const double wy = fy - y0;
    for (int j = 0; j < out_w; ++j) {
      double fx = (j + 0.5) * sx - 0.5;
      fx = std::max(0.0, std::min(fx, static_cast<double>(g.width - 1)));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, g.width - 1);
      const double wx = fx - x0;
      const double top = g.at(y0, x0) + wx * (g.at(y0, x1) - g.at(y0, x0));
      const double bot = g.at(y1, x0) + wx * (g.at(y1, x1) - g.at(y1, x0));
      out.at(i, j) = top + wy * (bot - top);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// IoU
// ---------------------------------------------------------------------------

void ConfusionMatrix::add(const SegmentMap& pred, const SegmentMap& gt, int ignore_id) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw Error("shape mismatch", "confusion add: map dims differ");
  }
  for (size_t i = 0; i < gt.ids().size(); ++i) {
    const int g = gt.ids()[i];
    if (g == ignore_id) continue;
    counts_[g][pred.ids()[i]]++;
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  for (int g = 0; g < kSharedClassCount; ++g) {
    for (int p = 0; p < kSharedClassCount; ++p) counts_[g][p] += other.counts_[g][p];
  }
}

IouReport ConfusionMatrix::iou(int ignore_id) const {
  IouReport report;
  report.per_class.fill(std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < kSharedClassCount; ++c) {
    if (c == ignore_id) continue;
    int64_t gt_total = 0, pred_total = 0;
    for (int j = 0; j < kSharedClassCount; ++j) {
      gt_total += counts_[c][j];
      pred_total += counts_[j][c];
    }
    const int64_t inter = counts_[c][c];
    const int64_t uni = gt_total + pred_total - inter;
    if (uni == 0) continue;  // class absent from both: excluded from the mean
    report.present[c] = true;
    report.per_class[c] = static_cast<double>(inter) / static_cast<double>(uni);
    sum += report.per_class[c];
    ++n;
  }
  report.miou = n > 0 ? sum / n : 0.0;
  return report;
}

IouReport miou(const SegmentMap& pred, const SegmentMap& gt, int ignore_id) {
  ConfusionMatrix cm;
  cm.add(pred, gt, ignore_id);
  return cm.iou(ignore_id);
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

namespace {

// Summed-area table with a zero row/column prefix.
std::vector<double> integral_image(const Grid& g) {
  const int w = g.width, h = g.height;
  std::vector<double> s(static_cast<size_t>(w + 1) * (h + 1), 0.0);
  for (int i = 0; i < h; ++i) {
    double row = 0.0;
    for (int j = 0; j < w; ++j) {
      row += g.at(i, j);
      s[static_cast<size_t>(i + 1) * (w + 1) + j + 1] =
          s[static_cast<size_t>(i) * (w + 1) + j + 1] + row;
    }
  }
  return s;
}

double window_sum(const std::vector<double>& s, int stride, int r0, int c0, int k) {
  return s[static_cast<size_t>(r0 + k) * stride + c0 + k] -
         s[static_cast<size_t>(r0) * stride + c0 + k] -
         s[static_cast<size_t>(r0 + k) * stride + c0] + s[static_cast<size_t>(r0) * stride + c0];
}

Grid product_grid(const Grid& a, const Grid& b) {
  Grid g(a.width, a.height);
  for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = a.v[i] * b.v[i];
  return g;
}

}  // namespace

double ssim(const Grid& a, const Grid& b, int window) {
  if (a.width != b.width || a.height != b.height) {
    throw Error("shape mismatch", "ssim image dims differ");
  }
  if (a.width < window || a.height < window) {
    throw Error("shape mismatch", "ssim image below the window size");
  }
  const auto sa = integral_image(a);
  const auto sb = integral_image(b);
  const auto saa = integral_image(product_grid(a, a));
  const auto sbb = integral_image(product_grid(b, b));
  const auto sab = integral_image(product_grid(a, b));
  const int stride = a.width + 1;
  const double inv_n = 1.0 / (static_cast<double>(window) * window);

  double total = 0.0;
  int64_t windows = 0;
  for (int r = 0; r + window <= a.height; ++r) {
    for (int c = 0; c + window <= a.width; ++c) {
      const double mu_a = window_sum(sa, stride, r, c, window) * inv_n;
      const double mu_b = window_sum(sb, stride, r, c, window) * inv_n;
      const double var_a = window_sum(saa, stride, r, c, window) * inv_n - mu_a * mu_a;
      const double var_b = window_sum(sbb, stride, r, c, window) * inv_n - mu_b * mu_b;
      const double cov = window_sum(sab, stride, r, c, window) * inv_n - mu_a * mu_b;
      const double num = (2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2);
      const double den = (mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2);
      total += num / den;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double ssim_rgb(const ImageRGB& a, const ImageRGB& b, int window) {
  return ssim(to_gray(a), to_gray(b), window);
}

// ---------------------------------------------------------------------------
// Laplacian pyramid
// ---------------------------------------------------------------------------

namespace {

constexpr double kBurt[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

Grid blur5(const Grid& g) {
  Grid tmp(g.width, g.height);
  for (int i = 0; i < g.height; ++i) {
    for (int j = 0; j < g.width; ++j) {
      double s = 0.0;
      for (int t = -2; t <= 2; ++t) s += kBurt[t + 2] * g.at(i, reflect(j + t, g.width));
      tmp.at(i, j) = s;
    }
  }
  Grid out(g.width, g.height);
  for (int i = 0; i < g.height; ++i) {
    for (int j = 0; j < g.width; ++j) {
      double s = 0.0;
      for (int t = -2; t <= 2; ++t) s += kBurt[t + 2] * tmp.at(reflect(i + t, g.height), j);
      out.at(i, j) = s;
    }
  }
  return out;
}

bool power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

}  // namespace

Grid pyramid_reduce(const Grid& g) {
  const Grid blurred = blur5(g);
  Grid out(g.width / 2, g.height / 2);
  for (int i = 0; i < out.height; ++i) {
    for (int j = 0; j < out.width; ++j) out.at(i, j) = blurred.at(2 * i, 2 * j);
  }
  return out;
}

Grid pyramid_expand(const Grid& g) {
  Grid stuffed(g.width * 2, g.height * 2);
  for (int i = 0; i < g.height; ++i) {
    for (int j = 0; j < g.width; ++j) stuffed.at(2 * i, 2 * j) = g.at(i, j);
  }
  Grid out = blur5(stuffed);
  for (auto& x : out.v) x *= 4.0;  // restore unit DC gain after zero stuffing
  return out;
}

std::vector<Grid> laplacian_pyramid(const Grid& image, int min_resolution) {
  if (image.width != image.height || !power_of_two(image.width) ||
      image.width < min_resolution) {
    throw Error("invalid pyramid input",
                "expected a square power-of-two image with side >= " +
                    std::to_string(min_resolution));
  }
  std::vector<Grid> levels;
  Grid current = image;
  while (current.width > min_resolution) {
    Grid next = pyramid_reduce(current);
    Grid up = pyramid_expand(next);
    Grid band(current.width, current.height);
    for (size_t i = 0; i < band.v.size(); ++i) band.v[i] = current.v[i] - up.v[i];
    levels.push_back(std::move(band));
    current = std::move(next);
  }
  levels.push_back(std::move(current));  // low-pass residual
  return levels;
}

Grid reconstruct_pyramid(const std::vector<Grid>& levels) {
  if (levels.empty()) throw Error("invalid pyramid input", "no levels");
  Grid current = levels.back();
  for (auto it = levels.rbegin() + 1; it != levels.rend(); ++it) {
    Grid up = pyramid_expand(current);
    if (up.width != it->width) throw Error("invalid pyramid input", "level size chain broken");
    for (size_t i = 0; i < up.v.size(); ++i) up.v[i] += it->v[i];
    current = std::move(up);
  }
  return current;
}

// ---------------------------------------------------------------------------
// SWD
// ---------------------------------------------------------------------------

double swd(const PatchSet& a, const PatchSet& b, int n_projections, Rng& rng) {
  if (a.count() == 0 || b.count() == 0) throw Error("empty patch set");
  if (a.dim != b.dim) throw Error("shape mismatch", "patch dims differ");
  const int dim = a.dim;

  // Equalize counts by downsampling the larger set.
  const size_t n = std::min(a.count(), b.count());
  auto take = [&](const PatchSet& src) {
    if (src.count() == n) return src.data;
    auto keep = rng.sample_indices(src.count(), n);
    std::sort(keep.begin(), keep.end());
    std::vector<double> out(n * dim);
    for (size_t i = 0; i < n; ++i) {
      std::copy_n(src.data.begin() + static_cast<int64_t>(keep[i]) * dim, dim,
                  out.begin() + static_cast<int64_t>(i) * dim);
    }
    return out;
  };
  const auto da = take(a);
  const auto db = take(b);

  std::vector<double> dir(dim), pa(n), pb(n);
  double total = 0.0;
  for (int p = 0; p < n_projections; ++p) {
    double norm = 0.0;
    for (auto& d : dir) {
      d = rng.normal();
      norm += d * d;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      dir[0] = 1.0;
      norm = 1.0;
    }
    for (auto& d : dir) d /= norm;
    for (size_t i = 0; i < n; ++i) {
      double sa = 0.0, sb = 0.0;
      for (int k = 0; k < dim; ++k) {
        sa += da[i * dim + k] * dir[k];
        sb += db[i * dim + k] * dir[k];
      }
      pa[i] = sa;
      pb[i] = sb;
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double w1 = 0.0;
    for (size_t i = 0; i < n; ++i) w1 += std::abs(pa[i] - pb[i]);
    total += w1 / static_cast<double>(n);
  }
  return total / n_projections;
}

namespace {

std::vector<std::pair<int, int>> draw_positions(int h, int w, int patch, int count, Rng& rng) {
  std::vector<std::pair<int, int>> pos;
  if (h < patch || w < patch) return pos;
  pos.reserve(count);
  for (int s = 0; s < count; ++s) {
    pos.emplace_back(static_cast<int>(rng.uniform_index(h - patch + 1)),
                     static_cast<int>(rng.uniform_index(w - patch + 1)));
  }
  return pos;
}

// Patch descriptors from one pyramid level of an RGB image (3 stacked channel
// grids) at the given positions, appended to out.
void sample_patches(const std::array<Grid, 3>& level, int patch,
                    const std::vector<std::pair<int, int>>& positions,
                    std::vector<double>& out) {
  for (const auto& [r0, c0] : positions) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < patch; ++i) {
        for (int j = 0; j < patch; ++j) {
          out.push_back(level[c].at(r0 + i, c0 + j));
        }
      }
    }
  }
}

// Zero mean, unit std per channel over the whole set.
void normalize_per_channel(PatchSet& set, int patch) {
  const size_t n = set.count();
  if (n == 0) return;
  const int chan_dim = patch * patch;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) {
      for (int k = 0; k < chan_dim; ++k) mean += set.data[i * set.dim + c * chan_dim + k];
    }
    mean /= static_cast<double>(n * chan_dim);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
      for (int k = 0; k < chan_dim; ++k) {
        const double d = set.data[i * set.dim + c * chan_dim + k] - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(n * chan_dim);
    const double inv = 1.0 / std::sqrt(var + 1e-12);
    for (size_t i = 0; i < n; ++i) {
      for (int k = 0; k < chan_dim; ++k) {
        auto& x = set.data[i * set.dim + c * chan_dim + k];
        x = (x - mean) * inv;
      }
    }
  }
}

void apply_keep(PatchSet& set, const std::vector<uint64_t>& keep) {
  std::vector<double> out(keep.size() * set.dim);
  for (size_t i = 0; i < keep.size(); ++i) {
    std::copy_n(set.data.begin() + static_cast<int64_t>(keep[i]) * set.dim, set.dim,
                out.begin() + static_cast<int64_t>(i) * set.dim);
  }
  set.data = std::move(out);
}

void cap_patches(PatchSet& set, size_t max_count, Rng& rng) {
  if (set.count() <= max_count) return;
  auto keep = rng.sample_indices(set.count(), max_count);
  std::sort(keep.begin(), keep.end());
  apply_keep(set, keep);
}

}  // namespace

std::vector<SwdLevel> swd_pyramid(std::span<const ImageRGB> set_a, std::span<const ImageRGB> set_b,
                                  const SwdConfig& config, Rng& rng) {
  if (set_a.empty() || set_b.empty()) throw Error("empty patch set", "no images");
  // Per-channel pyramids for every image, resized to the target square.
  auto build = [&](std::span<const ImageRGB> images) {
    std::vector<std::vector<std::array<Grid, 3>>> levels;  // [level][image]
    for (const auto& img : images) {
      auto chans = to_channels(img);
      std::array<std::vector<Grid>, 3> pyr;
      for (int c = 0; c < 3; ++c) {
        pyr[c] = laplacian_pyramid(
            bilinear_resize(chans[c], config.target_resolution, config.target_resolution),
            config.min_resolution);
      }
      if (levels.empty()) levels.resize(pyr[0].size());
      for (size_t l = 0; l < pyr[0].size(); ++l) {
        levels[l].push_back({pyr[0][l], pyr[1][l], pyr[2][l]});
      }
    }
    return levels;
  };
  auto levels_a = build(set_a);
  auto levels_b = build(set_b);

  // Paired sets (equal image counts) share patch positions, so identical sets
  // measure exactly zero; unpaired sets sample independently.
  const bool paired = set_a.size() == set_b.size();
  std::vector<SwdLevel> out;
  for (size_t l = 0; l < levels_a.size(); ++l) {
    PatchSet pa, pb;
    pa.dim = pb.dim = 3 * config.patch_size * config.patch_size;
    const int side = levels_a[l][0][0].width;
    for (size_t i = 0; i < levels_a[l].size(); ++i) {
      auto pos = draw_positions(side, side, config.patch_size, config.patches_per_image, rng);
      sample_patches(levels_a[l][i], config.patch_size, pos, pa.data);
      if (paired) sample_patches(levels_b[l][i], config.patch_size, pos, pb.data);
    }
    if (!paired) {
      for (const auto& img : levels_b[l]) {
        auto pos = draw_positions(side, side, config.patch_size, config.patches_per_image, rng);
        sample_patches(img, config.patch_size, pos, pb.data);
      }
    }
    if (paired && pa.count() > config.max_patches_per_level) {
      auto keep = rng.sample_indices(pa.count(), config.max_patches_per_level);
      std::sort(keep.begin(), keep.end());
      apply_keep(pa, keep);
      apply_keep(pb, keep);
    } else {
      cap_patches(pa, config.max_patches_per_level, rng);
      cap_patches(pb, config.max_patches_per_level, rng);
    }
    normalize_per_channel(pa, config.patch_size);
    normalize_per_channel(pb, config.patch_size);
    const int resolution = levels_a[l][0][0].width;
    out.push_back({resolution, swd(pa, pb, config.n_projections, rng)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frechet distance
// ---------------------------------------------------------------------------

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features) {
  if (features.empty()) throw Error("empty patch set", "no feature vectors");
  const int dim = static_cast<int>(features[0].size());
  GaussianStats stats;
  stats.mean.assign(dim, 0.0);
  stats.cov = SquareMatrix(dim);
  for (const auto& f : features) {
    if (static_cast<int>(f.size()) != dim) throw Error("shape mismatch", "feature dims differ");
    for (int i = 0; i < dim; ++i) stats.mean[i] += f[i];
  }
  const double n = static_cast<double>(features.size());
  for (auto& m : stats.mean) m /= n;
  if (features.size() < 2) return stats;
  for (const auto& f : features) {
    for (int i = 0; i < dim; ++i) {
      const double di = f[i] - stats.mean[i];
      for (int j = 0; j < dim; ++j) stats.cov.at(i, j) += di * (f[j] - stats.mean[j]);
    }
  }
  for (auto& x : stats.cov.v) x /= (n - 1.0);
  return stats;
}

namespace {

Eigen::MatrixXd to_eigen(const SquareMatrix& m) {
  Eigen::MatrixXd out(m.n, m.n);
  for (int i = 0; i < m.n; ++i) {
    for (int j = 0; j < m.n; ++j) out(i, j) = m.at(i, j);
  }
  return out;
}

void check_covariance(const Eigen::MatrixXd& s, const char* which) {
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-6 * scale) {
    throw Error("non-PSD covariance", std::string(which) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()),
                                                    Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-6 * scale) {
    throw Error("non-PSD covariance", std::string(which) + " has negative eigenvalues");
  }
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const std::vector<double>& mu1, const SquareMatrix& sigma1,
                        const std::vector<double>& mu2, const SquareMatrix& sigma2) {
  if (mu1.size() != mu2.size() || sigma1.n != sigma2.n ||
      static_cast<size_t>(sigma1.n) != mu1.size()) {
    throw Error("shape mismatch", "frechet inputs");
  }
  const auto s1 = to_eigen(sigma1);
  const auto s2 = to_eigen(sigma2);
  check_covariance(s1, "sigma1");
  check_covariance(s2, "sigma2");

  double mean_term = 0.0;
  for (size_t i = 0; i < mu1.size(); ++i) {
    mean_term += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
  }
  // tr((S1 S2)^{1/2}) through the symmetrized product sqrt(S2) S1 sqrt(S2).
  const Eigen::MatrixXd root2 = psd_sqrt(s2);
  Eigen::MatrixXd inner = root2 * s1 * root2;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()),
                                                    Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return mean_term + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
}

std::vector<double> HistogramFeatures::extract(const ImageRGB& image) const {
  constexpr int kBins = 64;
  constexpr int kSide = 64;
  auto chans = to_channels(image);
  std::vector<double> feat(3 * kBins, 0.0);
  for (int c = 0; c < 3; ++c) {
    Grid small = bilinear_resize(chans[c], kSide, kSide);
    for (double v : small.v) {
      int bin = static_cast<int>(v * kBins);
      bin = std::clamp(bin, 0, kBins - 1);
      feat[static_cast<size_t>(c) * kBins + bin] += 1.0;
    }
  }
  for (auto& x : feat) x /= static_cast<double>(kSide) * kSide;
  return feat;
}

double frechet_from_images(std::span<const ImageRGB> set_a, std::span<const ImageRGB> set_b,
                           const FeatureExtractor& features) {
  std::vector<std::vector<double>> fa, fb;
  for (const auto& img : set_a) fa.push_back(features.extract(img));
  for (const auto& img : set_b) fb.push_back(features.extract(img));
  auto ga = fit_gaussian(fa);
  auto gb = fit_gaussian(fb);
  return frechet_distance(ga.mean, ga.cov, gb.mean, gb.cov);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

void write_report_csv(const std::string& path, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("unwritable path", path);
  if (!report.note.empty()) out << "# " << report.note << "\n";
  out << "metric,value\n";
  out.precision(9);
  out << "ssim," << report.ssim << "\n";
  if (report.frechet) {
    out << "frechet_" << report.feature_extractor << "," << *report.frechet << "\n";
  }
  for (const auto& level : report.swd_per_level) {
    out << "swd_x1000_" << level.resolution << "," << level.value * 1000.0 << "\n";
  }
  out << "swd_x1000_avg," << report.swd_avg * 1000.0 << "\n";
  for (int c = 1; c < kSharedClassCount; ++c) {
    out << "iou_" << shared_class_name(c) << ",";
    if (report.iou.present[c]) {
      out << report.iou.per_class[c];
    } else {
      out << "absent";
    }
    out << "\n";
  }
  out << "miou," << report.iou.miou << "\n";
}

std::string format_report_table(const MetricReport& report) {
  std::ostringstream out;
  out.precision(4);
  if (!report.note.empty()) out << "note: " << report.note << "\n";
  out << "SSIM ";
  if (report.frechet) out << "| FID(" << report.feature_extractor << ") ";
  for (const auto& level : report.swd_per_level) {
    out << "| SWDx1e3 " << level.resolution;
  }
  out << "| SWDx1e3 avg\n";
  out << report.ssim << " ";
  if (report.frechet) out << "| " << *report.frechet << " ";
  for (const auto& level : report.swd_per_level) out << "| " << level.value * 1000.0 << " ";
  out << "| " << report.swd_avg * 1000.0 << "\n";
  out << "per-class IoU:\n";
  for (int c = 1; c < kSharedClassCount; ++c) {
    out << "  " << shared_class_name(c) << ": ";
    if (report.iou.present[c]) {
      out << report.iou.per_class[c];
    } else {
      out << "absent";
    }
    out << "\n";
  }
  out << "mIoU: " << report.iou.miou << "\n";
  return out.str();
}

}  // namespace panoseg
