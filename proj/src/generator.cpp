#include "rddm/generator.hpp"

#include <atomic>
#include <cmath>
#include <optional>

#include "rddm/errors.hpp"
#include "rddm/nn.hpp"

namespace rddm {

namespace {

std::atomic<std::uint64_t> g_evaluations{0};

std::size_t level_channels(const GeneratorConfig& cfg, std::size_t level) { return cfg.base_channels << level; }

Tensor conv_block(const Tensor& x, const GeneratorParams& p, const std::string& name, std::size_t stride = 1) {
  return silu(conv2d(x, p.at(name + ".w"), p.at(name + ".b"), {.stride = stride, .padding = 1}));
}

}  // namespace

void GeneratorConfig::validate() const {
  if (base_channels == 0) throw ContractError("generator base_channels must be positive");
  if (depth == 0 || depth > 6) throw ContractError("generator depth must be in [1, 6]");
  if (in_channels < 2) throw ContractError("generator in_channels must be at least 2 (noise + condition)");
  if (out_channels == 0) throw ContractError("generator out_channels must be positive");
}

const Tensor& GeneratorParams::at(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw ContractError("unknown generator parameter '" + name + "'");
}

std::vector<Tensor> GeneratorParams::leaves() const {
  std::vector<Tensor> out;
  out.reserve(tensors.size());
  for (const auto& [n, t] : tensors) out.push_back(t);
  return out;
}

std::size_t GeneratorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.numel();
  return n;
}

GeneratorParams GeneratorParams::clone(bool requires_grad) const {
  GeneratorParams out{config, {}};
  for (const auto& [n, t] : tensors) out.tensors.emplace_back(n, t.detach_copy(requires_grad));
  return out;
}

std::vector<ParamSlot> parameter_layout(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<ParamSlot> slots;
  auto conv = [&](const std::string& name, std::size_t cout, std::size_t cin, std::size_t k) {
    slots.push_back({name + ".w", {cout, cin, k, k}, cin * k * k});
    slots.push_back({name + ".b", {cout}, 0});
  };
  const std::size_t c = cfg.base_channels;
  conv("enc0.in", c, cfg.in_channels, 3);
  conv("enc0.conv", c, c, 3);
  for (std::size_t l = 1; l <= cfg.depth; ++l) {
    const auto lo = level_channels(cfg, l - 1), hi = level_channels(cfg, l);
    conv("down" + std::to_string(l), hi, lo, 3);
    conv("enc" + std::to_string(l), hi, hi, 3);
  }
  for (std::size_t l = cfg.depth; l >= 1; --l) {
    const auto lo = level_channels(cfg, l - 1), hi = level_channels(cfg, l);
    // each upsampled pixel receives exactly one tap from every input channel
    slots.push_back({"up" + std::to_string(l) + ".w", {hi, lo, 2, 2}, hi});
    slots.push_back({"up" + std::to_string(l) + ".b", {lo}, 0});
    conv("dec" + std::to_string(l), lo, 2 * lo, 3);
  }
  conv("head", cfg.out_channels, c, 1);
  return slots;
}

std::size_t parameter_count(const GeneratorConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.base_channels;
  std::size_t n = 9 * cfg.in_channels * c + c + 9 * c * c + c;
  for (std::size_t l = 1; l <= cfg.depth; ++l) {
    const auto lo = level_channels(cfg, l - 1), hi = level_channels(cfg, l);
    n += 9 * lo * hi + hi;
    n += 9 * hi * hi + hi;
    n += 4 * hi * lo + lo;
    n += 18 * lo * lo + lo;
  }
  n += c * cfg.out_channels + cfg.out_channels;
  return n;
}

GeneratorParams init_params(const GeneratorConfig& cfg) {
  GeneratorParams params{cfg, {}};
  std::mt19937_64 engine(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& slot : parameter_layout(cfg)) {
    std::vector<double> values(shape_numel(slot.shape), 0.0);
    if (slot.fan_in > 0) {
      const double std_dev = std::sqrt(2.0 / static_cast<double>(slot.fan_in));
      for (auto& v : values) v = std_dev * normal(engine);
    }
    params.tensors.emplace_back(slot.name, Tensor::from(slot.shape, std::move(values), true));
  }
  return params;
}

Tensor NoiseSource::sample(Shape shape) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = normal_(engine_);
  return Tensor::from(std::move(shape), std::move(values));
}

Tensor forward(const Tensor& eps, const Tensor& y, const GeneratorParams& params) {
  const auto& cfg = params.config;
  if (eps.rank() != 4 || y.rank() != 4) throw DimensionError("generator inputs must be [B,C,H,W]");
  if (eps.dim(0) != y.dim(0) || eps.dim(2) != y.dim(2) || eps.dim(3) != y.dim(3)) {
    throw DimensionError("noise " + shape_str(eps.shape()) + " and condition " + shape_str(y.shape()) +
                         " disagree");
  }
  if (eps.dim(1) + y.dim(1) != cfg.in_channels) {
    throw DimensionError("generator expects " + std::to_string(cfg.in_channels) + " input channels");
  }
  const std::size_t multiple = std::size_t{1} << cfg.depth;
  if (y.dim(2) % multiple != 0 || y.dim(3) % multiple != 0) {
    throw DimensionError("spatial size " + std::to_string(y.dim(2)) + "x" + std::to_string(y.dim(3)) +
                         " not divisible by " + std::to_string(multiple));
  }

  Tensor h = conv_block(concat_channels(eps, y), params, "enc0.in");
  h = conv_block(h, params, "enc0.conv");
  std::vector<Tensor> skips{h};
  for (std::size_t l = 1; l <= cfg.depth; ++l) {
    h = conv_block(h, params, "down" + std::to_string(l), 2);
    h = conv_block(h, params, "enc" + std::to_string(l));
    if (l < cfg.depth) skips.push_back(h);
  }
  for (std::size_t l = cfg.depth; l >= 1; --l) {
    const auto tag = std::to_string(l);
    h = conv_transpose2d(h, params.at("up" + tag + ".w"), params.at("up" + tag + ".b"), 2);
    h = concat_channels(h, skips[l - 1]);
    h = conv_block(h, params, "dec" + tag);
  }
  Tensor out = conv2d(h, params.at("head.w"), params.at("head.b"));
  g_evaluations.fetch_add(y.dim(0), std::memory_order_relaxed);
  return out;
}

Tensor denoise(const Tensor& y, const GeneratorParams& params, NoiseSource& noise) {
  if (y.rank() != 4 || y.dim(1) >= params.config.in_channels) {
    throw DimensionError("condition must be [B,C,H,W] with fewer than " +
                         std::to_string(params.config.in_channels) + " channels, got " + shape_str(y.shape()));
  }
  Shape eps_shape = y.shape();
  eps_shape[1] = params.config.in_channels - y.dim(1);
  Tensor eps = noise.sample(eps_shape);
  return sub(y, forward(eps, y, params));
}

std::uint64_t generator_evaluations() { return g_evaluations.load(std::memory_order_relaxed); }
void reset_generator_evaluations() { g_evaluations.store(0, std::memory_order_relaxed); }

}  // namespace rddm
