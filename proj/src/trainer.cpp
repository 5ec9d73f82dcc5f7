#include "rddm/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "rddm/config.hpp"
#include "rddm/errors.hpp"
#include "rddm/tensor_archive.hpp"

namespace rddm {

namespace {

constexpr const char* kCheckpointMagic = "RDDM";
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

std::vector<std::vector<double>> copy_values(const GeneratorParams& p) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : p.tensors) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

std::vector<std::vector<double>> zeros_like(const GeneratorParams& p) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : p.tensors) out.emplace_back(t.numel(), 0.0);
  return out;
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be finite and non-negative");
  if (decay_step == 0) throw ConfigError("train.decay_step must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("train.decay_factor must be in (0, 1]");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("train.ema_decay must be in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be positive");
  if (batch < 2) throw ConfigError("train.batch must be at least 2");
  if (patch == 0 || patch % (std::size_t{1} << generator.depth) != 0) {
    throw ConfigError("train.patch must be a positive multiple of 2^depth");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (log_every == 0) throw ConfigError("train.log_every must be positive");
  try {
    drift.validate();
    generator.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

TrainConfig full_scale(TrainConfig base) {
  base.iterations = 50000;
  base.lr = 1e-4;
  base.decay_step = 10000;
  base.ema_decay = 0.999;
  base.batch = 24;
  return base;
}

VariantPreset preset(Variant v) {
  switch (v) {
    case Variant::fine: return {"fine", {1.0, 1.5}, 0.0};
    case Variant::balanced: return {"balanced", {0.2, 1.0}, 0.0};
    case Variant::smooth: return {"smooth", {1.0}, 0.01};
  }
  throw ContractError("unknown variant");
}

std::vector<std::string> variant_names() { return {"fine", "balanced", "smooth"}; }

Variant parse_variant(const std::string& name) {
  for (auto v : {Variant::fine, Variant::balanced, Variant::smooth}) {
    if (preset(v).name == name) return v;
  }
  throw ConfigError("unknown variant '" + name + "' (expected fine, balanced or smooth)");
}

void apply_preset(TrainConfig& cfg, Variant v) {
  const auto p = preset(v);
  cfg.drift.temperatures = p.temperatures;
  cfg.drift.lambda = p.lambda;
}

double lr_at(std::size_t iteration, const TrainConfig& cfg) {
  return cfg.lr * std::pow(cfg.decay_factor, static_cast<double>(iteration / cfg.decay_step));
}

GeneratorParams TrainState::ema_params() const {
  GeneratorParams out{params.config, {}};
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto& [name, t] = params.tensors[i];
    out.tensors.emplace_back(name, Tensor::from(t.shape(), ema[i]));
  }
  return out;
}

TrainState init_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.config = cfg;
  s.params = init_params(cfg.generator).clone(true);
  s.ema = copy_values(s.params);
  s.adam_m = zeros_like(s.params);
  s.adam_v = zeros_like(s.params);
  return s;
}

std::string format_log_line(const LossReport& r, const DriftConfig& drift) {
  std::ostringstream os;
  os << std::setprecision(6) << "iter=" << r.iteration << " lr=" << r.lr << " loss=" << r.loss;
  for (std::size_t i = 0; i < r.drift.size(); ++i) {
    const double tau = i < drift.temperatures.size() ? drift.temperatures[i] : 0.0;
    os << " drift[τ=" << tau << "]=" << r.drift[i];
  }
  os << " l1=" << r.l1;
  return os.str();
}

double clip_grad_norm(std::span<std::vector<double>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g) v *= scale;
    }
  }
  return norm;
}

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::size_t step, double lr, const TrainConfig& cfg) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DimensionError("adamw_update: mismatched buffer sizes");
  }
  if (step == 0) throw ContractError("adamw_update: step is 1-based");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * param[i]);
  }
}

void ema_update(std::span<double> ema, std::span<const double> param, double decay) {
  if (ema.size() != param.size()) throw DimensionError("ema_update: mismatched buffer sizes");
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = decay * ema[i] + (1.0 - decay) * param[i];
}

LossReport train_step(TrainState& state, const Batch& batch) {
  const auto& cfg = state.config;
  for (auto& [name, t] : state.params.tensors) t.zero_grad();

  NoiseSource noise(derive_seed(cfg.seed, state.iteration, kNoiseStream));
  const Tensor eps = noise.sample(batch.y.shape());
  const Tensor r_hat = forward(eps, batch.y, state.params);
  auto parts = total_loss_parts(ResidualBatch::generated(r_hat), ResidualBatch::real(batch.r), cfg.drift);

  LossReport report;
  report.iteration = state.iteration;
  report.lr = lr_at(state.iteration, cfg);
  report.loss = parts.total.item();
  report.drift = parts.drift;
  report.l1 = parts.l1;
  if (!std::isfinite(report.loss)) {
    throw NumericError("non-finite loss at iteration " + std::to_string(state.iteration) + ": " +
                       format_log_line(report, cfg.drift));
  }
  parts.total.backward();

  std::vector<std::vector<double>> grads;
  grads.reserve(state.params.tensors.size());
  for (const auto& [name, t] : state.params.tensors) {
    if (t.has_grad()) {
      grads.emplace_back(t.grad().begin(), t.grad().end());
      if (!all_finite(grads.back())) {
        throw NumericError("non-finite gradient for '" + name + "' at iteration " + std::to_string(state.iteration));
      }
    } else {
      grads.emplace_back(t.numel(), 0.0);
    }
  }
  report.grad_norm = clip_grad_norm(grads, cfg.clip_norm);
  report.clipped_norm = std::min(report.grad_norm, cfg.clip_norm);

  const std::size_t step = state.iteration + 1;
  for (std::size_t i = 0; i < state.params.tensors.size(); ++i) {
    auto values = state.params.tensors[i].second.mutable_data();
    adamw_update(values, grads[i], state.adam_m[i], state.adam_v[i], step, report.lr, cfg);
    ema_update(state.ema[i], values, cfg.ema_decay);
  }
  state.iteration = step;
  return report;
}

Batch batch_for_iteration(const TrainConfig& cfg, std::span<const PairedSample> pool, std::size_t iteration) {
  return make_batch(pool, cfg.batch, cfg.patch, derive_seed(cfg.seed, iteration, kBatchStream));
}

void train_until_done(TrainState& state, std::span<const PairedSample> pool, std::ostream* log) {
  const auto& cfg = state.config;
  while (state.iteration < cfg.iterations) {
    const auto report = train_step(state, batch_for_iteration(cfg, pool, state.iteration));
    if (log && (state.iteration % cfg.log_every == 0 || state.iteration == cfg.iterations)) {
      *log << format_log_line(report, cfg.drift) << '\n' << std::flush;
    }
  }
}

Checkpoint train(const TrainConfig& cfg, std::span<const PairedSample> pool, std::ostream* log) {
  auto state = init_state(cfg);
  train_until_done(state, pool, log);
  return state;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  TensorArchive a;
  a.magic = kCheckpointMagic;
  a.add_text("config", to_json(c.config).dump());
  const double iteration = static_cast<double>(c.iteration);
  const std::size_t one = 1;
  a.add_exact("iteration", std::span<const std::size_t>(&one, 1), std::span<const double>(&iteration, 1));
  for (std::size_t i = 0; i < c.params.tensors.size(); ++i) {
    const auto& [name, t] = c.params.tensors[i];
    a.add_exact("param/" + name, t);
    a.add_exact("ema/" + name, t.shape(), c.ema[i]);
    a.add_exact("adam_m/" + name, t.shape(), c.adam_m[i]);
    a.add_exact("adam_v/" + name, t.shape(), c.adam_v[i]);
  }
  write_archive(path, a);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto a = read_archive(path, kCheckpointMagic);
  Checkpoint c;
  try {
    from_json_strict(Json::parse(a.text("config")), c.config, "checkpoint:/config");
  } catch (const Json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what(), 0);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config rejected: ") + e.what(), 0);
  }
  const auto it = a.exact_values("iteration");
  if (it.size() != 1 || it[0] < 0.0 || it[0] != std::floor(it[0])) throw FormatError("bad checkpoint iteration", 0);
  c.iteration = static_cast<std::size_t>(it[0]);

  c.params.config = c.config.generator;
  for (const auto& slot : parameter_layout(c.config.generator)) {
    const auto check = [&](const std::string& key) {
      const auto& e = a.at(key);
      if (Shape(e.dims.begin(), e.dims.end()) != slot.shape) {
        throw FormatError("checkpoint tensor '" + key + "' has shape " + shape_str(Shape(e.dims.begin(), e.dims.end())) +
                              ", expected " + shape_str(slot.shape), 0);
      }
      return a.exact_values(key);
    };
    c.params.tensors.emplace_back(slot.name, Tensor::from(slot.shape, check("param/" + slot.name), true));
    c.ema.push_back(check("ema/" + slot.name));
    c.adam_m.push_back(check("adam_m/" + slot.name));
    c.adam_v.push_back(check("adam_v/" + slot.name));
  }
  return c;
}

}  // namespace rddm
