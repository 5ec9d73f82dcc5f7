// Acceptance gate: runs criteria 1-9 and prints one PASS/FAIL line each.
// Usage: acceptance [criterion ...]   (default: all)

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rddm/cli.hpp"
#include "rddm/config.hpp"
#include "rddm/drift_field.hpp"
#include "rddm/generator.hpp"
#include "rddm/gradcheck.hpp"
#include "rddm/metrics.hpp"
#include "rddm/sim_data.hpp"
#include "rddm/tensor_archive.hpp"
#include "rddm/trainer.hpp"

using namespace rddm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

using Set = std::vector<Vector>;

Set random_set(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Set s(n, Vector(dim));
  for (auto& v : s)
    for (auto& e : v) e = nd(rng);
  return s;
}

Tensor as_batch(const Set& s, bool requires_grad = false) {
  std::vector<double> flat;
  for (const auto& v : s) flat.insert(flat.end(), v.begin(), v.end());
  return Tensor::from({s.size(), s.front().size()}, flat, requires_grad);
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end(),
                    [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); });
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// ---------------------------------------------------------------- criterion 1

Outcome estimator_identities() {
  Outcome o;
  std::mt19937_64 rng(1001);
  const NormScaling scalings[] = {NormScaling::raw, NormScaling::per_dimension};

  double anti = 0.0;
  std::size_t instances = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t dim = 1 + trial % 16;
    const auto a = random_set(1 + trial % 8, dim, rng);
    const auto b = random_set(1 + (trial * 5 + 3) % 8, dim, rng);
    const auto x = random_set(1, dim, rng)[0];
    for (double tau : {0.05, 0.2, 1.0}) {
      for (auto sc : scalings) {
        const auto ab = field_at(x, a, b, tau, sc);
        const auto ba = field_at(x, b, a, tau, sc);
        for (std::size_t k = 0; k < dim; ++k) anti = std::max(anti, std::abs(ab[k] + ba[k]));
        ++instances;
      }
    }
  }
  o.check(anti <= 1e-12, "anti-symmetry over " + std::to_string(instances) + " instances, max |V_AB + V_BA| = " +
                             fmt("%.3g", anti));

  double eq = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_set(1 + trial % 8, 1 + trial % 16, rng);
    Set shuffled = s;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (double tau : {0.05, 0.2, 1.0}) {
      for (auto sc : scalings) {
        const auto f = drift_field(ResidualBatch::generated(as_batch(s)), ResidualBatch::real(as_batch(shuffled)), tau, sc);
        for (double v : f.drift.data()) eq = std::max(eq, std::abs(v));
      }
    }
  }
  o.check(eq <= 1e-12, "equilibrium on identical multisets, max |V| = " + fmt("%.3g", eq));

  double ident = 0.0, additive = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t dim = 1 + trial % 16;
    const auto g = ResidualBatch::generated(as_batch(random_set(1 + trial % 8, dim, rng), true));
    const auto r = ResidualBatch::real(as_batch(random_set(1 + (trial * 3) % 8, dim, rng)));
    for (auto sc : scalings) {
      for (double tau : {0.05, 0.2, 1.0}) {
        const auto f = drift_field(g, r, tau, sc);
        double want = 0.0;
        for (double v : f.drift.data()) want += v * v;
        want /= static_cast<double>(g.size());
        const double got = drift_loss(g, r, tau, sc).item();
        ident = std::max(ident, want == 0.0 ? std::abs(got) : std::abs(got - want) / std::abs(want));
      }
      DriftConfig cfg;
      cfg.temperatures = {0.2, 1.0};
      cfg.lambda = 0.0;
      cfg.norm_scaling = sc;
      const double total = total_loss(g, r, cfg).item();
      const double parts = drift_loss(g, r, 0.2, sc).item() + drift_loss(g, r, 1.0, sc).item();
      additive = std::max(additive, std::abs(total - parts));
    }
  }
  o.check(ident <= 1e-12, "drift_loss == mean ||V||^2, max relative deviation = " + fmt("%.3g", ident));
  o.check(additive <= 1e-12, "total_loss({a,b}, lambda 0) == drift_loss(a) + drift_loss(b), max deviation = " +
                                 fmt("%.3g", additive));
  return o;
}

// ---------------------------------------------------------------- criterion 2

Outcome gradient_correctness() {
  Outcome o;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GeneratorConfig gc;
    gc.depth = 2;
    gc.base_channels = 8;
    gc.seed = seed;
    auto params = init_params(gc);
    std::vector<Tensor> leaves;
    for (auto& [name, t] : params.tensors) leaves.push_back(t);

    NoiseSource noise(derive_seed(seed, 0, 77));
    const Tensor eps = noise.sample({2, 1, 8, 8});
    const Tensor y = noise.sample({2, 1, 8, 8}) * 0.1 + 0.5;
    const Tensor real = noise.sample({2, 1, 8, 8}) * 0.05;

    DriftConfig cfg;
    cfg.temperatures = {0.5, 1.0};
    cfg.lambda = 0.01;
    const auto r = ResidualBatch::real(real);

    // The stop-gradient target is a constant of the objective; freeze it at
    // the unperturbed parameters so central differences see the same function.
    std::vector<Tensor> targets;
    {
      NoGradGuard guard;
      const auto g0 = ResidualBatch::generated(forward(eps, y, params));
      for (double tau : cfg.temperatures) targets.push_back(drift_target(g0, r, tau, cfg.norm_scaling));
    }
    const auto frozen = [&] {
      const Tensor rhat = forward(eps, y, params);
      Tensor total = regression_to_target(rhat, targets[0]);
      for (std::size_t k = 1; k < targets.size(); ++k) total = total + regression_to_target(rhat, targets[k]);
      return total + pixel_loss(ResidualBatch::generated(rhat), r, cfg.l1_reduction) * cfg.lambda;
    };

    // live total_loss gradient == frozen-objective gradient at theta_0
    for (auto& t : leaves) t.zero_grad();
    total_loss(ResidualBatch::generated(forward(eps, y, params)), r, cfg).backward();
    std::vector<std::vector<double>> live;
    for (const auto& t : leaves) live.emplace_back(t.grad().begin(), t.grad().end());
    for (auto& t : leaves) t.zero_grad();
    frozen().backward();
    double agree = 0.0;
    for (std::size_t p = 0; p < leaves.size(); ++p) {
      for (std::size_t i = 0; i < live[p].size(); ++i) {
        agree = std::max(agree, std::abs(live[p][i] - leaves[p].grad()[i]));
      }
    }

    const double err = finite_diff_check(frozen, leaves, 1e-5);
    o.check(err <= 1e-4 && agree <= 1e-12, "seed " + std::to_string(seed) + ": " +
                                               std::to_string(parameter_count(gc)) +
                                               " parameters, max relative error " + fmt("%.3g", err) +
                                               ", live vs frozen gradient " + fmt("%.3g", agree));
  }
  return o;
}

// ---------------------------------------------------------------- criterion 3

Outcome stop_gradient_semantics() {
  Outcome o;
  std::mt19937_64 rng(3003);
  double worst = 0.0;
  for (std::size_t b = 1; b <= 4; ++b) {
    for (std::size_t dim : {1, 5, 16}) {
      for (double tau : {0.05, 0.2, 1.0}) {
        for (auto sc : {NormScaling::raw, NormScaling::per_dimension}) {
          const auto gen = as_batch(random_set(b, dim, rng), true);
          const auto g = ResidualBatch::generated(gen);
          const auto r = ResidualBatch::real(as_batch(random_set(1 + (b + dim) % 4, dim, rng)));
          const auto f = drift_field(g, r, tau, sc);
          drift_loss(g, r, tau, sc).backward();
          for (std::size_t i = 0; i < gen.numel(); ++i) {
            worst = std::max(worst, std::abs(gen.grad()[i] + 2.0 * f.drift[i] / static_cast<double>(b)));
          }
        }
      }
    }
  }
  o.check(worst <= 1e-10, "dL/dr_hat == -2V/B over B = 1..4, max deviation " + fmt("%.3g", worst));
  return o;
}

// ------------------------------------------------------------ criteria 4 to 6

struct RunResult {
  double psnr_noisy = 0.0;
  double psnr_denoised = 0.0;
  double nps_total = 0.0;  // unnormalised, flat ROIs of the denoised output
  double nps_band = 0.0;   // [0.1, 0.5] cycles/pixel
  double noisy_nps_band = 0.0;
};

struct ToyData {
  std::vector<PairedSample> train, test, flat;
};

ToyData toy_data(std::uint64_t seed) {
  DatasetSpec spec;
  spec.size = 64;
  ToyData d;
  spec.count = 64;
  spec.seed = derive_seed(seed, 0, 100);
  d.train = generate_dataset(spec);
  spec.count = 16;
  spec.seed = derive_seed(seed, 1, 100);
  d.test = generate_dataset(spec);
  spec.count = 4;
  spec.size = 128;
  spec.kind = PhantomKind::flat;
  spec.seed = derive_seed(seed, 2, 100);
  d.flat = generate_dataset(spec);
  return d;
}

const std::vector<Roi> kQuadrants{{0, 0, 64}, {0, 64, 64}, {64, 0, 64}, {64, 64, 64}};

RunResult toy_run(const ToyData& data, std::uint64_t seed, const std::vector<double>& temperatures, double lambda) {
  TrainConfig cfg;  // 2000 iterations, B = 8
  cfg.drift.temperatures = temperatures;
  cfg.drift.lambda = lambda;
  cfg.seed = seed;
  cfg.generator.seed = seed;
  cfg.log_every = 500;
  std::ostringstream log;
  const auto t0 = std::chrono::steady_clock::now();
  const auto state = train(cfg, data.train, &log);
  const auto params = state.ema_params();

  NoGradGuard guard;
  std::vector<Tensor> denoised, noisy, clean;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const auto& s = data.test[i];
    NoiseSource noise(derive_seed(seed, i, 200));
    denoised.push_back(denoise(reshape(s.y, {1, 1, 64, 64}), params, noise));
    noisy.push_back(s.y);
    clean.push_back(s.x);
  }
  std::vector<Tensor> flat_denoised, flat_noisy;
  for (std::size_t i = 0; i < data.flat.size(); ++i) {
    NoiseSource noise(derive_seed(seed, i, 300));
    flat_denoised.push_back(denoise(reshape(data.flat[i].y, {1, 1, 128, 128}), params, noise));
    flat_noisy.push_back(data.flat[i].y);
  }
  RunResult r;
  r.psnr_noisy = report(noisy, clean, 1.0).psnr_mean;
  r.psnr_denoised = report(denoised, clean, 1.0).psnr_mean;
  const auto pd = nps(flat_denoised, kQuadrants);
  const auto pn = nps(flat_noisy, kQuadrants);
  r.nps_total = total_power(pd);
  r.nps_band = band_power(pd, 0.1, 0.5);
  r.noisy_nps_band = band_power(pn, 0.1, 0.5);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string taus;
  for (double t : temperatures) taus += (taus.empty() ? "" : ",") + fmt("%g", t);
  std::printf("  run seed=%llu tau={%s} lambda=%g psnr %.3f -> %.3f dB, nps total %.4g band %.4g (noisy band %.4g), %.0f s\n",
              static_cast<unsigned long long>(seed), taus.c_str(), lambda, r.psnr_noisy, r.psnr_denoised, r.nps_total,
              r.nps_band, r.noisy_nps_band, secs);
  std::fflush(stdout);
  return r;
}

const std::uint64_t kSeeds[] = {0, 1, 2};

struct ToyRuns {
  std::map<std::uint64_t, RunResult> smooth, tau1_l1_off, fine;
};

const ToyRuns& toy_runs() {
  static std::optional<ToyRuns> runs;
  if (!runs) {
    runs.emplace();
    const auto s = preset(Variant::smooth), f = preset(Variant::fine);
    for (auto seed : kSeeds) {
      const auto data = toy_data(seed);
      runs->smooth[seed] = toy_run(data, seed, s.temperatures, s.lambda);
      runs->tau1_l1_off[seed] = toy_run(data, seed, {1.0}, 0.0);
      runs->fine[seed] = toy_run(data, seed, f.temperatures, f.lambda);
    }
  }
  return *runs;
}

Outcome denoising_efficacy() {
  Outcome o;
  for (auto seed : kSeeds) {
    const auto& r = toy_runs().smooth.at(seed);
    const double gain = r.psnr_denoised - r.psnr_noisy;
    o.check(gain >= 3.0, "seed " + std::to_string(seed) + ": smooth preset gains " + fmt("%.3f", gain) + " dB (" +
                             fmt("%.3f", r.psnr_noisy) + " -> " + fmt("%.3f", r.psnr_denoised) + ")");
  }
  return o;
}

Outcome lambda_ordering() {
  Outcome o;
  double with = 0.0, without = 0.0;
  for (auto seed : kSeeds) {
    const auto& a = toy_runs().smooth.at(seed);
    const auto& b = toy_runs().tau1_l1_off.at(seed);
    with += a.psnr_denoised / 3.0;
    without += b.psnr_denoised / 3.0;
    o.check(a.nps_total < b.nps_total, "seed " + std::to_string(seed) + ": NPS total power lambda 0.01 " +
                                           fmt("%.4g", a.nps_total) + " < lambda 0 " + fmt("%.4g", b.nps_total));
  }
  o.check(with > without,
          "mean test PSNR lambda 0.01 " + fmt("%.3f", with) + " dB > lambda 0 " + fmt("%.3f", without) + " dB");
  return o;
}

Outcome variant_nps_ordering() {
  Outcome o;
  for (auto seed : kSeeds) {
    const auto& s = toy_runs().smooth.at(seed);
    const auto& f = toy_runs().fine.at(seed);
    o.check(s.nps_band < f.nps_band && f.nps_band < f.noisy_nps_band,
            "seed " + std::to_string(seed) + ": band [0.1, 0.5] smooth " + fmt("%.4g", s.nps_band) + " < fine " +
                fmt("%.4g", f.nps_band) + " < noisy " + fmt("%.4g", f.noisy_nps_band));
  }
  return o;
}

// ------------------------------------------------------- CLI pipeline (7, 9)

struct PipelineRun {
  int code = 0;
  std::string denoise_out;
  std::map<std::string, std::string> files;
};

PipelineRun run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  Json j;
  j["simulate"] = {{"train_count", 8}, {"test_count", 5}, {"flat_count", 2}, {"size", 32}, {"flat_size", 64}, {"seed", 11}};
  j["train"] = {{"iterations", 6}, {"batch", 4}, {"patch", 16}, {"log_every", 2}, {"seed", 11},
                {"generator", {{"base_channels", 4}, {"depth", 2}, {"seed", 11}}}, {"variant", "smooth"}};
  j["denoise"] = {{"seed", 11}};
  std::ofstream(dir / "config.json") << j.dump(2);

  const auto cfg = (dir / "config.json").string();
  const auto p = [&](const char* name) { return (dir / name).string(); };
  const std::vector<std::vector<std::string>> steps{
      {"simulate", "--config", cfg, "--out", dir.string()},
      {"train", "--config", cfg, "--data", p("train.rddi"), "--out", p("model.ckpt")},
      {"denoise", "--config", cfg, "--checkpoint", p("model.ckpt"), "--input", p("test.rddi"), "--output",
       p("denoised.rddi")},
      {"eval", "--config", cfg, "--pred", p("denoised.rddi"), "--ref", p("test.rddi"), "--out-dir", p("eval")},
  };
  PipelineRun run;
  for (const auto& args : steps) {
    std::ostringstream out, err;
    run.code = run_cli(args, out, err);
    if (args[0] == "denoise") run.denoise_out = out.str();
    if (run.code != kExitOk) {
      std::cerr << args[0] << ": " << err.str();
      return run;
    }
  }
  for (const char* f : {"train.rddi", "test.rddi", "flat.rddi", "model.ckpt", "denoised.rddi", "eval/metrics.csv",
                        "eval/rps.csv"}) {
    run.files[f] = slurp(dir / f);
  }
  return run;
}

fs::path scratch() { return fs::temp_directory_path() / "rddm_acceptance"; }

Outcome one_step_inference() {
  Outcome o;
  const auto run = run_pipeline(scratch() / "nfe");
  if (run.code != kExitOk) {
    o.check(false, "pipeline exited with " + std::to_string(run.code));
    return o;
  }
  // "images=<n> nfe=<m> mean_ms=<t>"
  const auto at = run.denoise_out.find("images=");
  unsigned long images = 0, nfe = 0;
  double ms = 0.0;
  const bool parsed =
      at != std::string::npos && std::sscanf(run.denoise_out.c_str() + at, "images=%lu nfe=%lu mean_ms=%lf", &images, &nfe, &ms) == 3;
  o.check(parsed && images == 5 && nfe == images, "denoise of " + std::to_string(images) + " images used " +
                                                      std::to_string(nfe) + " generator evaluations (" +
                                                      fmt("%.2f", ms) + " ms/image, not asserted)");

  // the library counter, independent of the CLI's own bookkeeping
  GeneratorConfig gc;
  gc.base_channels = 4;
  const auto params = init_params(gc);
  reset_generator_evaluations();
  NoGradGuard guard;
  NoiseSource noise(5);
  for (int i = 0; i < 7; ++i) denoise(noise.sample({1, 1, 16, 16}), params, noise);
  o.check(generator_evaluations() == 7, "library counter after 7 denoise calls: " +
                                            std::to_string(generator_evaluations()));
  return o;
}

// ---------------------------------------------------------------- criterion 8

Outcome spectral_oracles() {
  Outcome o;
  std::mt19937_64 rng(8008);
  std::normal_distribution<double> nd(0.0, 0.05);
  std::vector<Tensor> images;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> v(128 * 128);
    for (auto& e : v) e = 0.5 + nd(rng);
    images.push_back(Tensor::from({1, 128, 128}, std::move(v)));
  }
  const auto p = nps(images, kQuadrants);
  double lo = 1e300, hi = 0.0;
  for (std::size_t i = 0; i < p.freq_bins.size(); ++i) {
    if (p.freq_bins[i] < 0.1 || p.freq_bins[i] > 0.5) continue;
    lo = std::min(lo, p.power[i]);
    hi = std::max(hi, p.power[i]);
  }
  o.check(p.sample_count >= 4000 && hi / lo <= 1.2, "white-noise NPS over " + std::to_string(p.sample_count) +
                                                        " ROIs, max/min on [0.1, 0.5] = " + fmt("%.4f", hi / lo));

  const std::size_t n = 64;
  DatasetSpec spec;
  spec.count = 1;
  spec.size = n;
  spec.seed = 8;
  const Tensor ref = reshape(generate_dataset(spec)[0].x, {1, n, n});
  for (std::size_t k : {3, 8, 20}) {
    std::vector<double> wave(n * n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        wave[r * n + c] = 0.05 * std::cos(2.0 * M_PI * static_cast<double>(k * c) / static_cast<double>(n));
      }
    }
    const std::vector<Tensor> test{ref + Tensor::from({1, n, n}, wave)}, refs{ref};
    const auto s = rps(test, refs);
    double total = 0.0;
    for (std::size_t i = 1; i < s.power2d.size(); ++i) total += s.power2d[i];
    const double share = (s.power2d[k] + s.power2d[n - k]) / total;
    o.check(share >= 0.95, "cosine at " + std::to_string(k) + "/" + std::to_string(n) +
                               " cycles/pixel: bin pair holds " + fmt("%.6f", share) + " of non-DC RPS energy");
  }
  return o;
}

// ---------------------------------------------------------------- criterion 9

TrainConfig small_train_config(std::size_t iterations) {
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.batch = 4;
  cfg.patch = 16;
  cfg.log_every = 1000;
  cfg.generator.base_channels = 4;
  cfg.generator.seed = 21;
  cfg.seed = 21;
  apply_preset(cfg, Variant::fine);
  return cfg;
}

bool same_state(const TrainState& a, const TrainState& b) {
  if (a.iteration != b.iteration || a.params.tensors.size() != b.params.tensors.size()) return false;
  if (to_json(a.config) != to_json(b.config)) return false;
  for (std::size_t t = 0; t < a.params.tensors.size(); ++t) {
    if (a.params.tensors[t].first != b.params.tensors[t].first) return false;
    if (!same_bits(a.params.tensors[t].second.data(), b.params.tensors[t].second.data())) return false;
    if (!same_bits(a.ema[t], b.ema[t]) || !same_bits(a.adam_m[t], b.adam_m[t]) || !same_bits(a.adam_v[t], b.adam_v[t]))
      return false;
  }
  return true;
}

Outcome determinism_and_persistence() {
  Outcome o;
  const auto dir = scratch() / "persist";
  fs::remove_all(dir);
  fs::create_directories(dir);
  DatasetSpec spec;
  spec.count = 8;
  spec.size = 32;
  spec.seed = 9;
  const auto pool = generate_dataset(spec);

  const auto full = train(small_train_config(12), pool);
  save_checkpoint(full, dir / "full.ckpt");
  const auto loaded = load_checkpoint(dir / "full.ckpt");
  save_checkpoint(loaded, dir / "again.ckpt");
  o.check(same_state(full, loaded) && slurp(dir / "full.ckpt") == slurp(dir / "again.ckpt"),
          "checkpoint round trip: every parameter, moment and EMA value bit-identical, resave byte-identical");

  bool split_ok = true;
  for (std::size_t k : {1, 5, 11}) {
    auto first = train(small_train_config(k), pool);
    save_checkpoint(first, dir / "part.ckpt");
    auto resumed = load_checkpoint(dir / "part.ckpt");
    resumed.config.iterations = 12;
    train_until_done(resumed, pool);
    split_ok = split_ok && same_state(full, resumed);
  }
  o.check(split_ok, "save at iteration 1, 5, 11 and resume: state bit-identical to the uninterrupted 12 steps");

  const auto a = run_pipeline(scratch() / "pipe_a");
  const auto b = run_pipeline(scratch() / "pipe_b");
  bool same = a.code == kExitOk && b.code == kExitOk && a.files.size() == 7 && a.files == b.files;
  for (const auto& [name, bytes] : a.files) same = same && !bytes.empty();
  o.check(same, "simulate/train/denoise/eval from one config twice: all 7 artifacts byte-identical");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"estimator identities", estimator_identities},
      {"gradient correctness through the generator", gradient_correctness},
      {"stop-gradient semantics", stop_gradient_semantics},
      {"toy denoising efficacy", denoising_efficacy},
      {"lambda ordering", lambda_ordering},
      {"variant NPS ordering", variant_nps_ordering},
      {"one-step inference", one_step_inference},
      {"spectral oracles", spectral_oracles},
      {"determinism and persistence", determinism_and_persistence},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "usage: acceptance [criterion 1-" << criteria.size() << " ...]\n";
      return 2;
    }
    selected.insert(static_cast<std::size_t>(n));
  }

  std::vector<std::string> summary;
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    const auto& [name, fn] = criteria[i];
    std::printf("criterion %zu: %s\n", i + 1, name.c_str());
    std::fflush(stdout);
    Outcome outcome;
    try {
      outcome = fn();
    } catch (const std::exception& e) {
      outcome.check(false, std::string("threw: ") + e.what());
    }
    for (const auto& d : outcome.details) std::printf("  %s\n", d.c_str());
    all = all && outcome.pass;
    summary.push_back((outcome.pass ? "PASS" : "FAIL") + std::string("  criterion ") + std::to_string(i + 1) + ": " +
                      name);
  }
  std::error_code ec;
  fs::remove_all(scratch(), ec);

  std::printf("\n");
  for (const auto& line : summary) std::printf("%s\n", line.c_str());
  return all ? 0 : 1;
}
