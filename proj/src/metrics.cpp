#include "rddm/metrics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>

#include "rddm/errors.hpp"

namespace rddm {

namespace {

struct ImageView {
  std::size_t h, w;
  std::span<const double> px;
  double at(std::size_t r, std::size_t c) const { return px[r * w + c]; }
};

ImageView view(const Tensor& t, const char* what) {
  if (t.rank() < 2) throw DimensionError(std::string(what) + ": image must have rank >= 2, got " + shape_str(t.shape()));
  for (std::size_t i = 0; i + 2 < t.rank(); ++i) {
    if (t.dim(i) != 1) throw DimensionError(std::string(what) + ": expected a single image, got " + shape_str(t.shape()));
  }
  return {t.dim(t.rank() - 2), t.dim(t.rank() - 1), t.data()};
}

void require_same(const ImageView& a, const ImageView& b, const char* what) {
  if (a.h != b.h || a.w != b.w) {
    throw DimensionError(std::string(what) + ": image sizes differ (" + std::to_string(a.h) + "x" +
                         std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" + std::to_string(b.w) + ")");
  }
}

// Owns one forward complex 2D plan and its buffer.
class Fft2d {
 public:
  Fft2d(std::size_t h, std::size_t w) : h_(h), w_(w) {
    buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * h * w));
    if (!buf_) throw std::bad_alloc();
    plan_ = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  ~Fft2d() {
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  // Adds |F|^2 / n of `field` (row-major h*w) into `acc`.
  void accumulate_power(std::span<const double> field, std::vector<double>& acc) {
    const std::size_t n = h_ * w_;
    for (std::size_t i = 0; i < n; ++i) {
      buf_[i][0] = field[i];
      buf_[i][1] = 0.0;
    }
    fftw_execute(plan_);
    for (std::size_t i = 0; i < n; ++i) {
      acc[i] += (buf_[i][0] * buf_[i][0] + buf_[i][1] * buf_[i][1]) / static_cast<double>(n);
    }
  }

 private:
  std::size_t h_, w_;
  fftw_complex* buf_ = nullptr;
  fftw_plan plan_ = nullptr;
};

// Signed frequency of FFT index k on an axis of length n, cycles/pixel.
double axis_freq(std::size_t k, std::size_t n) {
  const auto sk = static_cast<double>(k);
  return (2 * k < n ? sk : sk - static_cast<double>(n)) / static_cast<double>(n);
}

SpectrumProfile radial_profile(const std::vector<double>& power2d, std::size_t h, std::size_t w,
                               std::size_t samples, double pixel_spacing) {
  const std::size_t n = std::min(h, w);
  const double delta = 1.0 / static_cast<double>(n);
  const std::size_t bins = n / 2 + 1;
  std::vector<double> sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t ky = 0; ky < h; ++ky) {
    const double fy = axis_freq(ky, h);
    for (std::size_t kx = 0; kx < w; ++kx) {
      const double fx = axis_freq(kx, w);
      const auto bin = static_cast<std::size_t>(std::lround(std::hypot(fx, fy) / delta));
      if (bin >= bins) continue;
      sum[bin] += power2d[ky * w + kx];
      ++count[bin];
    }
  }
  const double unit = pixel_spacing > 0.0 ? 1.0 / pixel_spacing : 1.0;
  SpectrumProfile p;
  p.sample_count = samples;
  p.bin_width = delta * unit;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    p.freq_bins.push_back(static_cast<double>(b) * delta * unit);
    p.raw_power.push_back(sum[b] / static_cast<double>(count[b]));
  }
  p.power = p.raw_power;
  return p;
}

// Least-squares plane a + b*y + c*x over the ROI; returns residuals.
std::vector<double> detrend_plane(const ImageView& img, const Roi& roi) {
  const std::size_t s = roi.size;
  const double centre = (static_cast<double>(s) - 1.0) / 2.0;
  double mean = 0.0, sy = 0.0, sx = 0.0, syy = 0.0;
  const double first = img.at(roi.row, roi.col);
  bool constant = true;
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c < s; ++c) {
      const double v = img.at(roi.row + r, roi.col + c);
      constant = constant && v == first;
      const double dy = static_cast<double>(r) - centre, dx = static_cast<double>(c) - centre;
      mean += v;
      sy += v * dy;
      sx += v * dx;
    }
    const double dy = static_cast<double>(r) - centre;
    syy += dy * dy;
  }
  // rounding in the sums below would otherwise leave ~1e-17 residue, which
  // unit-area normalisation turns into a full-size curve
  if (constant) return std::vector<double>(s * s, 0.0);
  const double n = static_cast<double>(s * s);
  mean /= n;
  // centred coordinates make the normal equations diagonal
  const double denom = syy * static_cast<double>(s);
  const double b = denom > 0.0 ? sy / denom : 0.0;
  const double c = denom > 0.0 ? sx / denom : 0.0;
  std::vector<double> out(s * s);
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t col = 0; col < s; ++col) {
      const double dy = static_cast<double>(r) - centre, dx = static_cast<double>(col) - centre;
      out[r * s + col] = img.at(roi.row + r, roi.col + col) - (mean + b * dy + c * dx);
    }
  }
  return out;
}

void check_roi(const ImageView& img, const Roi& roi) {
  if (roi.size < 2) throw ContractError("ROI size must be at least 2");
  if (roi.row + roi.size > img.h || roi.col + roi.size > img.w) {
    throw ContractError("ROI at (" + std::to_string(roi.row) + "," + std::to_string(roi.col) + ") size " +
                        std::to_string(roi.size) + " exceeds image " + std::to_string(img.h) + "x" +
                        std::to_string(img.w));
  }
}

std::pair<double, double> mean_and_population_std(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

constexpr std::size_t kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> g(kSsimWindow);
  const double c = (kSsimWindow - 1) / 2.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
  }
  const double s = std::accumulate(g.begin(), g.end(), 0.0);
  for (double& v : g) v /= s;
  return g;
}

// Separable valid-mode filtering of an h*w field.
std::vector<double> filter_valid(const std::vector<double>& f, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size(), oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * f[r * w + c + i];
      rows[r * ow + c] = s;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * rows[(r + i) * ow + c];
      out[r * ow + c] = s;
    }
  }
  return out;
}

}  // namespace

double psnr(const Tensor& test, const Tensor& ref, double data_range) {
  const auto a = view(test, "psnr"), b = view(ref, "psnr");
  require_same(a, b, "psnr");
  if (!(data_range > 0.0)) throw ContractError("psnr data_range must be positive");
  double se = 0.0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    const double d = a.px[i] - b.px[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.px.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(data_range * data_range / mse));
}

SsimTerms ssim_terms(const Tensor& test, const Tensor& ref, double data_range) {
  const auto a = view(test, "ssim"), b = view(ref, "ssim");
  require_same(a, b, "ssim");
  if (a.h < kSsimWindow || a.w < kSsimWindow) throw ContractError("ssim needs images of at least 11x11");
  if (!(data_range > 0.0)) throw ContractError("ssim data_range must be positive");

  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const double c3 = c2 / 2.0;
  const std::size_t n = a.h * a.w;
  std::vector<double> x(a.px.begin(), a.px.end()), y(b.px.begin(), b.px.end());
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto g = gaussian_window();
  const auto mx = filter_valid(x, a.h, a.w, g), my = filter_valid(y, a.h, a.w, g);
  const auto exx = filter_valid(xx, a.h, a.w, g), eyy = filter_valid(yy, a.h, a.w, g);
  const auto exy = filter_valid(xy, a.h, a.w, g);

  SsimTerms t;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    // unclamped variances keep 2*cov == vx + vy exactly for identical inputs
    const double vx = exx[i] - mx[i] * mx[i];
    const double vy = eyy[i] - my[i] * my[i];
    const double cov = exy[i] - mx[i] * my[i];
    const double sx = std::sqrt(std::max(0.0, vx)), sy = std::sqrt(std::max(0.0, vy));
    const double lum = (2.0 * mx[i] * my[i] + c1) / (mx[i] * mx[i] + my[i] * my[i] + c1);
    const double cs = (2.0 * cov + c2) / (vx + vy + c2);
    t.ssim += lum * cs;
    t.luminance += lum;
    t.contrast += (2.0 * sx * sy + c2) / (vx + vy + c2);
    t.structure += (cov + c3) / (sx * sy + c3);
  }
  const auto m = static_cast<double>(mx.size());
  t.ssim /= m;
  t.luminance /= m;
  t.contrast /= m;
  t.structure /= m;
  return t;
}

double ssim(const Tensor& test, const Tensor& ref, double data_range) {
  return ssim_terms(test, ref, data_range).ssim;
}

double band_power(const SpectrumProfile& p, double lo, double hi) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.freq_bins.size(); ++i) {
    if (p.freq_bins[i] >= lo && p.freq_bins[i] <= hi) s += p.raw_power[i] * p.bin_width;
  }
  return s;
}

double total_power(const SpectrumProfile& p) {
  double s = 0.0;
  for (double v : p.raw_power) s += v * p.bin_width;
  return s;
}

ResidualSpectrum rps(std::span<const Tensor> test, std::span<const Tensor> ref, double pixel_spacing) {
  if (test.size() != ref.size()) {
    throw DimensionError("rps: set sizes differ (" + std::to_string(test.size()) + " vs " +
                         std::to_string(ref.size()) + ")");
  }
  if (test.empty()) throw ContractError("rps: empty image set");
  const auto first = view(test[0], "rps");
  ResidualSpectrum out;
  out.height = first.h;
  out.width = first.w;
  const std::size_t n = first.h * first.w;
  out.power2d.assign(n, 0.0);
  Fft2d fft(first.h, first.w);
  std::vector<double> residual(n);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto a = view(test[i], "rps"), b = view(ref[i], "rps");
    require_same(a, first, "rps");
    require_same(a, b, "rps");
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      residual[k] = a.px[k] - b.px[k];
      mean += residual[k];
    }
    mean /= static_cast<double>(n);
    for (double& v : residual) v -= mean;
    out.dc += mean * mean * static_cast<double>(n);
    fft.accumulate_power(residual, out.power2d);
  }
  const auto count = static_cast<double>(test.size());
  for (double& v : out.power2d) v /= count;
  out.dc /= count;
  out.profile = radial_profile(out.power2d, first.h, first.w, test.size(), pixel_spacing);
  return out;
}

double roi_residual_std(const Tensor& image, const Roi& roi) {
  const auto img = view(image, "roi_residual_std");
  check_roi(img, roi);
  const auto r = detrend_plane(img, roi);
  double ss = 0.0;
  for (double v : r) ss += v * v;
  return std::sqrt(ss / static_cast<double>(r.size()));
}

SpectrumProfile nps(std::span<const Tensor> images, std::span<const Roi> rois, double pixel_spacing) {
  if (images.empty() || rois.empty()) throw ContractError("nps: need at least one image and one ROI");
  const std::size_t s = rois[0].size;
  for (const auto& roi : rois) {
    if (roi.size != s) throw ContractError("nps: all ROIs must share one size");
  }
  std::vector<double> power(s * s, 0.0);
  Fft2d fft(s, s);
  std::size_t count = 0;
  for (const auto& image : images) {
    const auto img = view(image, "nps");
    for (const auto& roi : rois) {
      check_roi(img, roi);
      fft.accumulate_power(detrend_plane(img, roi), power);
      ++count;
    }
  }
  for (double& v : power) v /= static_cast<double>(count);
  auto p = radial_profile(power, s, s, count, pixel_spacing);
  const double area = total_power(p);
  if (area > 0.0) {
    for (double& v : p.power) v /= area;
  }
  return p;
}

std::vector<Roi> select_flat_rois(const Tensor& image, std::size_t roi_size, std::size_t count,
                                  double flatness_factor) {
  const auto img = view(image, "select_flat_rois");
  if (roi_size < 2 || roi_size > img.h || roi_size > img.w) {
    throw ContractError("select_flat_rois: ROI size " + std::to_string(roi_size) + " does not fit the image");
  }
  const std::size_t step = std::max<std::size_t>(1, roi_size / 2);
  struct Candidate {
    Roi roi;
    double std;
  };
  std::vector<Candidate> cands;
  for (std::size_t r = 0; r + roi_size <= img.h; r += step) {
    for (std::size_t c = 0; c + roi_size <= img.w; c += step) {
      Roi roi{r, c, roi_size};
      cands.push_back({roi, roi_residual_std(image, roi)});
    }
  }
  std::vector<double> stds;
  for (const auto& c : cands) stds.push_back(c.std);
  std::nth_element(stds.begin(), stds.begin() + stds.size() / 2, stds.end());
  const double limit = flatness_factor * stds[stds.size() / 2];

  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.std < b.std; });
  std::vector<Roi> chosen;
  for (const auto& c : cands) {
    if (chosen.size() == count) break;
    if (c.std > limit) break;
    const bool overlaps = std::any_of(chosen.begin(), chosen.end(), [&](const Roi& o) {
      return c.roi.row < o.row + o.size && o.row < c.roi.row + c.roi.size && c.roi.col < o.col + o.size &&
             o.col < c.roi.col + c.roi.size;
    });
    if (!overlaps) chosen.push_back(c.roi);
  }
  return chosen;
}

MetricsReport report(std::span<const Tensor> test, std::span<const Tensor> ref, double data_range) {
  if (test.empty()) throw ContractError("report: empty image set");
  if (test.size() != ref.size()) {
    throw ContractError("report: set sizes differ (" + std::to_string(test.size()) + " vs " +
                        std::to_string(ref.size()) + ")");
  }
  MetricsReport r;
  std::vector<double> ps, ss;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const SliceMetrics m{i, psnr(test[i], ref[i], data_range), ssim(test[i], ref[i], data_range)};
    r.slices.push_back(m);
    ps.push_back(m.psnr);
    ss.push_back(m.ssim);
  }
  std::tie(r.psnr_mean, r.psnr_std) = mean_and_population_std(ps);
  std::tie(r.ssim_mean, r.ssim_std) = mean_and_population_std(ss);
  return r;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& r) {
  out << "slice_index,psnr,ssim\n" << std::setprecision(10);
  for (const auto& s : r.slices) out << s.index << ',' << s.psnr << ',' << s.ssim << '\n';
}

void write_profile_csv(std::ostream& out, const SpectrumProfile& p) {
  out << "freq,power\n" << std::setprecision(10);
  for (std::size_t i = 0; i < p.freq_bins.size(); ++i) out << p.freq_bins[i] << ',' << p.power[i] << '\n';
}

}  // namespace rddm
