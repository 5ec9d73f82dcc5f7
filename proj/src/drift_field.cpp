#include "rddm/drift_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "rddm/errors.hpp"

namespace rddm {

std::string to_string(NormScaling s) { return s == NormScaling::raw ? "raw" : "per_dimension"; }
std::string to_string(L1Reduction r) { return r == L1Reduction::sample_sum ? "sample_sum" : "element_mean"; }

NormScaling parse_norm_scaling(const std::string& s) {
  if (s == "raw") return NormScaling::raw;
  if (s == "per_dimension") return NormScaling::per_dimension;
  throw ConfigError("norm_scaling must be 'raw' or 'per_dimension', got '" + s + "'");
}

L1Reduction parse_l1_reduction(const std::string& s) {
  if (s == "sample_sum") return L1Reduction::sample_sum;
  if (s == "element_mean") return L1Reduction::element_mean;
  throw ConfigError("l1_reduction must be 'sample_sum' or 'element_mean', got '" + s + "'");
}

void DriftConfig::validate() const {
  if (temperatures.empty()) throw ContractError("at least one temperature is required");
  std::set<double> seen;
  for (double t : temperatures) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ContractError("temperatures must be finite and positive");
    if (!seen.insert(t).second) throw ContractError("temperatures must be distinct");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ContractError("lambda must be finite and >= 0");
}

ResidualBatch ResidualBatch::real(const Tensor& samples) {
  if (samples.rank() < 2) throw DimensionError("residual batch must be [B,...], got " + shape_str(samples.shape()));
  return {stop_gradient(samples), ResidualKind::real};
}

ResidualBatch ResidualBatch::generated(const Tensor& samples) {
  if (samples.rank() < 2) throw DimensionError("residual batch must be [B,...], got " + shape_str(samples.shape()));
  return {samples, ResidualKind::generated};
}

namespace {

double distance_scale(std::size_t dim, NormScaling scaling) {
  return scaling == NormScaling::per_dimension ? 1.0 / std::sqrt(static_cast<double>(dim)) : 1.0;
}

// Normalised weights from one row of raw distances. Shifting by the row
// minimum leaves the ratios k_j / Z unchanged and keeps Z >= 1.
std::vector<double> weights_from_distances(std::span<const double> dist, double tau, double scale) {
  const double dmin = *std::min_element(dist.begin(), dist.end());
  std::vector<double> w(dist.size());
  double z = 0.0;
  for (std::size_t j = 0; j < dist.size(); ++j) {
    w[j] = std::exp(-(dist[j] - dmin) * scale / tau);
    z += w[j];
  }
  for (auto& v : w) v /= z;
  return w;
}

// sum_j w_j (s_j - x), rows of `set` laid out contiguously.
void weighted_displacement(std::span<const double> x, std::span<const double> set, std::span<const double> w,
                           double* out) {
  const std::size_t dim = x.size();
  std::fill(out, out + dim, 0.0);
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double* s = set.data() + j * dim;
    for (std::size_t k = 0; k < dim; ++k) out[k] += w[j] * (s[k] - x[k]);
  }
}

std::vector<double> flatten(std::span<const double> x, std::span<const Vector> set) {
  if (set.empty()) throw ContractError("kernel estimators need a non-empty set");
  std::vector<double> flat;
  flat.reserve(set.size() * x.size());
  for (const auto& v : set) {
    if (v.size() != x.size()) {
      throw DimensionError("set member of length " + std::to_string(v.size()) + " vs probe of length " +
                           std::to_string(x.size()));
    }
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return flat;
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw ContractError("temperature must be positive");
}

}  // namespace

double kernel(std::span<const double> r, std::span<const double> r_prime, double tau, NormScaling scaling) {
  if (r.size() != r_prime.size()) {
    throw DimensionError("kernel arguments of length " + std::to_string(r.size()) + " and " +
                         std::to_string(r_prime.size()));
  }
  check_tau(tau);
  double sq = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double d = r[k] - r_prime[k];
    sq += d * d;
  }
  return std::exp(-std::sqrt(sq) * distance_scale(r.size(), scaling) / tau);
}

std::vector<double> pairwise_distances(std::span<const double> a, std::size_t n, std::span<const double> b,
                                       std::size_t m, std::size_t dim) {
  if (a.size() != n * dim || b.size() != m * dim) throw DimensionError("pairwise_distances: buffer sizes disagree");
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * dim;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data() + j * dim;
      double sq = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = ai[k] - bj[k];
        sq += d * d;
      }
      out[i * m + j] = std::sqrt(sq);
    }
  }
  return out;
}

Vector kernel_weights(std::span<const double> x, std::span<const Vector> set, double tau, NormScaling scaling) {
  check_tau(tau);
  const auto flat = flatten(x, set);
  const auto dist = pairwise_distances(x, 1, flat, set.size(), x.size());
  return weights_from_distances(dist, tau, distance_scale(x.size(), scaling));
}

Vector mean_shift(std::span<const double> x, std::span<const Vector> set, double tau, NormScaling scaling) {
  check_tau(tau);
  const auto flat = flatten(x, set);
  const auto dist = pairwise_distances(x, 1, flat, set.size(), x.size());
  const auto w = weights_from_distances(dist, tau, distance_scale(x.size(), scaling));
  Vector out(x.size());
  weighted_displacement(x, flat, w, out.data());
  return out;
}

Vector attraction(std::span<const double> x, std::span<const Vector> targets, double tau, NormScaling scaling) {
  return mean_shift(x, targets, tau, scaling);
}

Vector repulsion(std::span<const double> x, std::span<const Vector> peers, double tau, NormScaling scaling) {
  return mean_shift(x, peers, tau, scaling);
}

Vector field_at(std::span<const double> x, std::span<const Vector> positive, std::span<const Vector> negative,
                double tau, NormScaling scaling) {
  const auto plus = mean_shift(x, positive, tau, scaling);
  const auto minus = mean_shift(x, negative, tau, scaling);
  Vector out(x.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = plus[k] - minus[k];
  return out;
}

FieldOutput drift_field(const ResidualBatch& generated, const ResidualBatch& real, double tau, NormScaling scaling) {
  check_tau(tau);
  const auto& gs = generated.samples.shape();
  const auto& rs = real.samples.shape();
  if (gs.size() != rs.size() || !std::equal(gs.begin() + 1, gs.end(), rs.begin() + 1)) {
    throw DimensionError("generated " + shape_str(gs) + " and real " + shape_str(rs) + " residuals disagree");
  }
  const std::size_t b = generated.size();
  const std::size_t m = real.size();
  const std::size_t dim = generated.sample_dim();
  const double scale = distance_scale(dim, scaling);
  auto g = generated.samples.data();
  auto r = real.samples.data();

  const auto d_real = pairwise_distances(g, b, r, m, dim);
  const auto d_gen = pairwise_distances(g, b, g, b, dim);

  std::vector<double> attr(b * dim), rep(b * dim), drift(b * dim);
  for (std::size_t i = 0; i < b; ++i) {
    std::span<const double> xi = g.subspan(i * dim, dim);
    const auto wa = weights_from_distances(std::span<const double>(d_real).subspan(i * m, m), tau, scale);
    const auto wr = weights_from_distances(std::span<const double>(d_gen).subspan(i * b, b), tau, scale);
    weighted_displacement(xi, r, wa, attr.data() + i * dim);
    weighted_displacement(xi, g, wr, rep.data() + i * dim);
  }
  for (std::size_t k = 0; k < drift.size(); ++k) drift[k] = attr[k] - rep[k];
  return {Tensor::from(gs, std::move(drift)), Tensor::from(gs, std::move(attr)), Tensor::from(gs, std::move(rep))};
}

Tensor regression_to_target(const Tensor& generated, const Tensor& frozen_target) {
  if (frozen_target.requires_grad()) throw ContractError("regression target must not carry gradient");
  const double batch = static_cast<double>(generated.dim(0));
  return sum(square(sub(generated, frozen_target))) / batch;
}

Tensor drift_target(const ResidualBatch& generated, const ResidualBatch& real, double tau, NormScaling scaling) {
  const auto field = drift_field(generated, real, tau, scaling);
  return stop_gradient(add(generated.samples, field.drift));
}

Tensor drift_loss(const ResidualBatch& generated, const ResidualBatch& real, double tau, NormScaling scaling) {
  return regression_to_target(generated.samples, drift_target(generated, real, tau, scaling));
}

Tensor pixel_loss(const ResidualBatch& generated, const ResidualBatch& real, L1Reduction reduction) {
  if (generated.samples.shape() != real.samples.shape()) {
    throw DimensionError("pixel loss needs aligned batches, got " + shape_str(generated.samples.shape()) + " and " +
                         shape_str(real.samples.shape()));
  }
  double denom = static_cast<double>(generated.size());
  if (reduction == L1Reduction::element_mean) denom *= static_cast<double>(generated.sample_dim());
  return sum(abs(sub(generated.samples, real.samples))) / denom;
}

LossParts total_loss_parts(const ResidualBatch& generated, const ResidualBatch& real, const DriftConfig& cfg) {
  cfg.validate();
  LossParts parts;
  Tensor total;
  for (double tau : cfg.temperatures) {
    Tensor term = drift_loss(generated, real, tau, cfg.norm_scaling);
    parts.drift.push_back(term.item());
    total = total.defined() ? add(total, term) : term;
  }
  if (cfg.lambda > 0.0) {
    Tensor l1 = pixel_loss(generated, real, cfg.l1_reduction);
    parts.l1 = l1.item();
    total = add(total, l1 * cfg.lambda);
  }
  parts.total = total;
  return parts;
}

Tensor total_loss(const ResidualBatch& generated, const ResidualBatch& real, const DriftConfig& cfg) {
  return total_loss_parts(generated, real, cfg).total;
}

}  // namespace rddm
