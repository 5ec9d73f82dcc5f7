#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rddm/tensor.hpp"

namespace rddm {

/// Ellipse in normalised image coordinates: the image spans [-1, 1] on both
/// axes, x to the right and y downward.
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double semi_x = 1.0;
  double semi_y = 1.0;
  double angle = 0.0;  // radians, counter-clockwise
  double intensity = 0.0;
};

struct PhantomSpec {
  std::size_t size = 64;
  std::vector<Ellipse> ellipses;
};

/// Sum of ellipse indicator intensities at pixel centres, clamped to [0, 1].
/// Returns [1,H,W].
Tensor render_phantom(const PhantomSpec& spec);

/// Randomised head-like phantom: a body ellipse plus smaller inserts.
PhantomSpec random_phantom(std::size_t size, std::mt19937_64& rng);

/// Phantom of uniform intensity filling the whole frame, for noise-power
/// measurements.
PhantomSpec flat_phantom(std::size_t size, double intensity);

struct NoiseModel {
  double gaussian_sigma = 0.05;  // white component of the low-dose noise
  double streak_sigma = 0.03;    // amplitude of the vertical streak field
  double ndct_sigma = 0.01;      // white noise retained by the normal-dose target
  std::uint64_t seed = 0;

  void validate() const;
};

/// One NDCT/LDCT pair with r == y - x exactly. Tensors are [1,H,W].
struct PairedSample {
  Tensor x;
  Tensor y;
  Tensor r;
};

/// Column-wise streak field [H,W] with unit standard deviation: one N(0,1)
/// draw per column, smoothed across neighbouring columns with [1,2,1]/4 and
/// rescaled, then repeated down every row.
std::vector<double> streak_field(std::size_t height, std::size_t width, std::mt19937_64& rng);

/// x = clean + ndct_sigma * white
/// y = x + gaussian_sigma * white + streak_sigma * streaks
PairedSample corrupt(const Tensor& clean, const NoiseModel& model);

/// Seed for the stream of item `index` under a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0);

struct Batch {
  Tensor y;  // [B,1,P,P]
  Tensor x;
  Tensor r;
};

/// B random aligned patches from a pool; reproducible per seed.
Batch make_batch(std::span<const PairedSample> pool, std::size_t batch, std::size_t patch, std::uint64_t seed);

enum class PhantomKind { random, flat };

struct DatasetSpec {
  std::size_t count = 64;
  std::size_t size = 64;
  PhantomKind kind = PhantomKind::random;
  double flat_intensity = 0.5;
  NoiseModel noise;
  std::uint64_t seed = 0;
};

/// Pure function of `spec`: sample i uses phantom and noise streams derived
/// from (seed, i).
std::vector<PairedSample> generate_dataset(const DatasetSpec& spec);

/// Stacks [1,H,W] images into [N,1,H,W] and back.
Tensor stack_images(std::span<const Tensor> images);
std::vector<Tensor> unstack_images(const Tensor& stacked);

/// Pairs rebuilt from stacked x/y tensors, with r recomputed as y - x.
std::vector<PairedSample> pairs_from_stacks(const Tensor& x, const Tensor& y);

}  // namespace rddm
