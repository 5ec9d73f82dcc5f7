#pragma once

#include <span>
#include <string>
#include <vector>

#include "rddm/tensor.hpp"

namespace rddm {

/// Whether kernel distances are divided by sqrt(D) before applying tau.
enum class NormScaling { raw, per_dimension };

/// How the pixel loss reduces |r_hat - r| over a sample.
///   sample_sum:   (1/B) sum_i ||r_hat_i - r_i||_1
///   element_mean: the same divided by the element count D
enum class L1Reduction { sample_sum, element_mean };

std::string to_string(NormScaling s);
std::string to_string(L1Reduction r);
NormScaling parse_norm_scaling(const std::string& s);
L1Reduction parse_l1_reduction(const std::string& s);

struct DriftConfig {
  std::vector<double> temperatures{1.0};
  double lambda = 0.0;
  NormScaling norm_scaling = NormScaling::per_dimension;
  L1Reduction l1_reduction = L1Reduction::sample_sum;

  /// Temperatures non-empty, positive and distinct; lambda >= 0.
  void validate() const;
};

enum class ResidualKind { real, generated };

/// B residual images [B,C,H,W]. Real batches never carry gradient linkage.
struct ResidualBatch {
  Tensor samples;
  ResidualKind kind;

  static ResidualBatch real(const Tensor& samples);
  static ResidualBatch generated(const Tensor& samples);

  std::size_t size() const { return samples.dim(0); }
  std::size_t sample_dim() const { return samples.numel() / samples.dim(0); }
};

/// Per-sample field values; none of these carry gradient linkage.
struct FieldOutput {
  Tensor drift;       // attraction - repulsion
  Tensor attraction;
  Tensor repulsion;
};

using Vector = std::vector<double>;

/// exp(-||r - r'|| / tau), with the distance divided by sqrt(D) under
/// per-dimension scaling.
double kernel(std::span<const double> r, std::span<const double> r_prime, double tau, NormScaling scaling);

/// Normalised kernel weights of x against every member of `set` (sums to 1).
Vector kernel_weights(std::span<const double> x, std::span<const Vector> set, double tau, NormScaling scaling);

/// (1/Z) sum_j k(x, s_j) (s_j - x). Attraction and repulsion are both this
/// estimator, applied to the real and generated sets respectively.
Vector mean_shift(std::span<const double> x, std::span<const Vector> set, double tau, NormScaling scaling);

Vector attraction(std::span<const double> x, std::span<const Vector> targets, double tau, NormScaling scaling);
Vector repulsion(std::span<const double> x, std::span<const Vector> peers, double tau, NormScaling scaling);

/// mean_shift(x, positive) - mean_shift(x, negative) for an arbitrary probe.
Vector field_at(std::span<const double> x, std::span<const Vector> positive, std::span<const Vector> negative,
                double tau, NormScaling scaling);

/// Pairwise Euclidean distances between the rows of `a` [n,D] and `b` [m,D],
/// summed from direct differences so identical rows are exactly zero apart.
std::vector<double> pairwise_distances(std::span<const double> a, std::size_t n, std::span<const double> b,
                                       std::size_t m, std::size_t dim);

/// Field for every generated sample: attraction toward `real`, repulsion from
/// `generated` itself (self term included). Computed outside the graph.
FieldOutput drift_field(const ResidualBatch& generated, const ResidualBatch& real, double tau, NormScaling scaling);

/// (1/B) sum_i ||r_hat_i - target_i||^2 for a target that carries no
/// gradient; the regression half of the drift loss.
Tensor regression_to_target(const Tensor& generated, const Tensor& frozen_target);

/// stop_gradient(r_hat + V) at one temperature.
Tensor drift_target(const ResidualBatch& generated, const ResidualBatch& real, double tau, NormScaling scaling);

/// (1/B) sum_i ||r_hat_i - stop_gradient(r_hat_i + V_i)||^2.
Tensor drift_loss(const ResidualBatch& generated, const ResidualBatch& real, double tau, NormScaling scaling);

/// Mean absolute error between index-aligned batches, reduced per `reduction`.
Tensor pixel_loss(const ResidualBatch& generated, const ResidualBatch& real,
                  L1Reduction reduction = L1Reduction::sample_sum);

struct LossParts {
  Tensor total;
  std::vector<double> drift;  // one value per temperature, config order
  double l1 = 0.0;            // unweighted pixel loss; 0 when lambda == 0
};

/// sum_tau drift_loss(tau) + lambda * pixel_loss; the pixel term is skipped
/// when lambda == 0.
LossParts total_loss_parts(const ResidualBatch& generated, const ResidualBatch& real, const DriftConfig& cfg);
Tensor total_loss(const ResidualBatch& generated, const ResidualBatch& real, const DriftConfig& cfg);

}  // namespace rddm
