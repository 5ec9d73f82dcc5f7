#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rddm/tensor.hpp"

namespace rddm {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4 };

/// Image container ("RDDI"): named [N,1,H,W] tensors, "x" (reference or
/// estimate) and "y" (noisy input). Either may be absent.
struct ImageSet {
  Tensor x;
  Tensor y;
  bool has_x() const { return x.defined(); }
  bool has_y() const { return y.defined(); }
};

void write_image_set(const std::filesystem::path& path, const ImageSet& set);
ImageSet read_image_set(const std::filesystem::path& path);

/// Worker count from RDDM_THREADS (default: hardware concurrency, at least 1).
std::size_t worker_count();

/// Writes an 8-bit grayscale PNG of a [1,H,W] or [H,W] image through a
/// display window given in HU, with data 0 and 1 mapped to `hu_at_zero` and
/// `hu_at_one`.
void write_png(const std::filesystem::path& path, const Tensor& image, double window_low_hu, double window_high_hu,
               double hu_at_zero, double hu_at_one);

/// Entry point for `rddm simulate|train|denoise|eval`. Normal output goes to
/// `out`, diagnostics to `err`; returns an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rddm
