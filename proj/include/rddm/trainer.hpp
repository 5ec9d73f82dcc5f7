#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rddm/drift_field.hpp"
#include "rddm/generator.hpp"
#include "rddm/sim_data.hpp"

namespace rddm {

// Defaults are tuned for short single-core runs on 32x32 patches; the
// full-resolution schedule is `full_scale`.
struct TrainConfig {
  std::size_t iterations = 2000;
  double lr = 3e-3;
  std::size_t decay_step = 1000;
  double decay_factor = 0.5;
  double ema_decay = 0.99;
  double clip_norm = 1.0;
  std::size_t batch = 8;
  std::size_t patch = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t log_every = 100;
  DriftConfig drift;
  GeneratorConfig generator;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Settings of the full-resolution schedule (lr 1e-4 halved every 10k of 50k
/// iterations, batch 24, EMA 0.999) applied on top of `base`.
TrainConfig full_scale(TrainConfig base);

enum class Variant { fine, balanced, smooth };

struct VariantPreset {
  std::string name;
  std::vector<double> temperatures;
  double lambda;
};

VariantPreset preset(Variant v);
/// Throws ConfigError listing the valid names.
Variant parse_variant(const std::string& name);
std::vector<std::string> variant_names();
void apply_preset(TrainConfig& cfg, Variant v);

/// Step decay: lr * factor^floor(iteration / decay_step).
double lr_at(std::size_t iteration, const TrainConfig& cfg);

/// Everything needed to continue training bit-exactly.
struct TrainState {
  TrainConfig config;
  GeneratorParams params;
  std::vector<std::vector<double>> ema;  // shadow copy per parameter tensor
  std::vector<std::vector<double>> adam_m;
  std::vector<std::vector<double>> adam_v;
  std::size_t iteration = 0;  // completed steps

  /// EMA weights as a standalone parameter set (no gradients).
  GeneratorParams ema_params() const;
};

using Checkpoint = TrainState;

TrainState init_state(const TrainConfig& cfg);

struct LossReport {
  std::size_t iteration = 0;  // index of the step that produced this report
  double lr = 0.0;
  double loss = 0.0;
  std::vector<double> drift;  // per temperature, config order
  double l1 = 0.0;
  double grad_norm = 0.0;     // before clipping
  double clipped_norm = 0.0;  // after clipping
};

/// "iter=<n> lr=<v> loss=<v> drift[τ=<t>]=<v>... l1=<v>"
std::string format_log_line(const LossReport& report, const DriftConfig& drift);

/// Scales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before scaling.
double clip_grad_norm(std::span<std::vector<double>> grads, double max_norm);

/// One adaptive-moment step with decoupled weight decay on a flat array;
/// `step` is 1-based for bias correction.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::size_t step, double lr, const TrainConfig& cfg);

/// ema <- d * ema + (1 - d) * param
void ema_update(std::span<double> ema, std::span<const double> param, double decay);

/// Draws eps, evaluates the objective against `batch.r`, backpropagates,
/// clips, updates parameters and the EMA shadow, and advances the iteration.
/// Throws NumericError on a non-finite loss.
LossReport train_step(TrainState& state, const Batch& batch);

/// Batch and noise for step `iteration` depend only on (seed, iteration), so
/// a resumed run replays the same stream.
Batch batch_for_iteration(const TrainConfig& cfg, std::span<const PairedSample> pool, std::size_t iteration);

/// Runs steps until `state.iteration == state.config.iterations`, writing a
/// log line every `log_every` steps (and on the last one) to `log`.
void train_until_done(TrainState& state, std::span<const PairedSample> pool, std::ostream* log = nullptr);

/// Fresh state plus `train_until_done`.
Checkpoint train(const TrainConfig& cfg, std::span<const PairedSample> pool, std::ostream* log = nullptr);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rddm
