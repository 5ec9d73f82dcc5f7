#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "rddm/tensor.hpp"

namespace rddm {

// Images are tensors whose last two dims are H and W and whose leading dims
// (if any) are all 1, e.g. [H,W], [1,H,W] or [1,1,H,W].

/// Returned by `psnr` when the images are identical.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(range^2 / MSE), capped at kPsnrCap.
double psnr(const Tensor& test, const Tensor& ref, double data_range);

/// Means of the local SSIM map and of its three factors (11x11 Gaussian
/// window, sigma 1.5, K1 = 0.01, K2 = 0.03, valid positions only). The
/// contrast and structure factors use C3 = C2 / 2, so their product with the
/// luminance factor is the usual combined index at every position.
struct SsimTerms {
  double ssim = 0.0;
  double luminance = 0.0;
  double contrast = 0.0;
  double structure = 0.0;
};

SsimTerms ssim_terms(const Tensor& test, const Tensor& ref, double data_range);
double ssim(const Tensor& test, const Tensor& ref, double data_range);

/// Radially binned power. Bin k sits at k / N cycles per pixel (N = smaller
/// image or ROI side) and collects every 2D frequency whose magnitude rounds
/// to it, up to the Nyquist radius.
struct SpectrumProfile {
  std::vector<double> freq_bins;  // cycles/pixel, or 1/mm with a pixel spacing
  std::vector<double> power;      // normalised (unit area for NPS)
  std::vector<double> raw_power;  // mean |F|^2 / n_pixels per bin, before normalisation
  std::size_t sample_count = 0;   // images (RPS) or ROIs (NPS) averaged
  double bin_width = 0.0;         // in the units of freq_bins
};

/// Sum of raw_power * bin_width over bins with lo <= freq <= hi.
double band_power(const SpectrumProfile& p, double lo, double hi);
/// Sum of raw_power * bin_width over every bin.
double total_power(const SpectrumProfile& p);

struct ResidualSpectrum {
  std::size_t height = 0;
  std::size_t width = 0;
  /// Mean |F|^2 / n_pixels of the mean-subtracted residual, in FFT order
  /// (row-major, index [ky * width + kx], zero frequency at [0]).
  std::vector<double> power2d;
  /// Mean power the subtracted means would have put in the zero bin.
  double dc = 0.0;
  SpectrumProfile profile;  // radial mean of power2d; power == raw_power
};

/// Residual (test - ref) power spectrum averaged over aligned sets.
ResidualSpectrum rps(std::span<const Tensor> test, std::span<const Tensor> ref, double pixel_spacing = 0.0);

struct Roi {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t size = 64;
};

/// Radial NPS over `rois` applied to every image: per-ROI plane detrend,
/// |DFT|^2 / n_pixels, ensemble mean, radial binning, then `power` scaled to
/// unit area (sum power * bin_width == 1). All-zero spectra stay zero.
SpectrumProfile nps(std::span<const Tensor> images, std::span<const Roi> rois, double pixel_spacing = 0.0);

/// Standard deviation of the plane-fit residual inside `roi`.
double roi_residual_std(const Tensor& image, const Roi& roi);

/// Picks up to `count` non-overlapping ROIs from a half-overlapping grid,
/// flattest first. Candidates whose plane-fit residual std exceeds
/// `flatness_factor` times the median candidate std are rejected.
std::vector<Roi> select_flat_rois(const Tensor& image, std::size_t roi_size, std::size_t count,
                                  double flatness_factor = 3.0);

struct SliceMetrics {
  std::size_t index = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricsReport {
  double psnr_mean = 0.0;
  double psnr_std = 0.0;  // population std
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  std::vector<SliceMetrics> slices;
};

MetricsReport report(std::span<const Tensor> test, std::span<const Tensor> ref, double data_range);

/// "slice_index,psnr,ssim" then one row per slice.
void write_metrics_csv(std::ostream& out, const MetricsReport& r);
/// "freq,power" then one row per bin (normalised power).
void write_profile_csv(std::ostream& out, const SpectrumProfile& p);

}  // namespace rddm
