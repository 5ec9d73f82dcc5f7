#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rddm/tensor.hpp"

namespace rddm {

struct GeneratorConfig {
  std::size_t base_channels = 16;
  std::size_t depth = 2;
  std::size_t in_channels = 2;   // noise + condition
  std::size_t out_channels = 1;  // residual
  std::uint64_t seed = 0;

  void validate() const;
};

/// Named parameter leaves in a fixed order (the order of `parameter_layout`).
struct GeneratorParams {
  GeneratorConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& at(const std::string& name) const;
  std::vector<Tensor> leaves() const;
  std::size_t parameter_count() const;
  /// Deep copy with fresh leaves.
  GeneratorParams clone(bool requires_grad) const;
};

struct ParamSlot {
  std::string name;
  Shape shape;
  std::size_t fan_in;  // 0 for biases
};

/// Every parameter the architecture needs, in canonical order.
std::vector<ParamSlot> parameter_layout(const GeneratorConfig& cfg);

/// Closed form of the sum over `parameter_layout`. With c = base channels,
/// c_l = c * 2^l:
///   9*in*c + c + 9*c^2 + c
///   + sum_{l=1..depth} [ 9*c_{l-1}*c_l + c_l        (strided down conv)
///                      + 9*c_l^2 + c_l              (level conv)
///                      + 4*c_l*c_{l-1} + c_{l-1}    (2x2 transposed up conv)
///                      + 18*c_{l-1}^2 + c_{l-1} ]   (conv after skip concat)
///   + c*out + out
std::size_t parameter_count(const GeneratorConfig& cfg);

/// Kaiming fan-in normal weights, zero biases; deterministic per cfg.seed.
GeneratorParams init_params(const GeneratorConfig& cfg);

/// Standard normal draws, reproducible per seed.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : engine_(seed) {}
  Tensor sample(Shape shape);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Residual estimate for noise eps and condition y, both [B,1,H,W].
Tensor forward(const Tensor& eps, const Tensor& y, const GeneratorParams& params);

/// y - forward(eps, y) with eps freshly drawn from `noise`. One generator
/// evaluation.
Tensor denoise(const Tensor& y, const GeneratorParams& params, NoiseSource& noise);

/// Number of per-sample generator evaluations performed by `forward` in this
/// process (a batch of B counts B).
std::uint64_t generator_evaluations();
void reset_generator_evaluations();

}  // namespace rddm
