#include "rddm/cli.hpp"

#include <png.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include "rddm/config.hpp"
#include "rddm/errors.hpp"
#include "rddm/generator.hpp"
#include "rddm/metrics.hpp"
#include "rddm/sim_data.hpp"
#include "rddm/tensor_archive.hpp"
#include "rddm/trainer.hpp"

namespace rddm {

namespace {

constexpr const char* kImageMagic = "RDDI";

// Runs body(i) for i in [0, n) on up to `workers` threads; results must be
// written to per-index slots so ordering stays deterministic.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

Tensor image_at(const Tensor& stack, std::size_t i) {
  const std::size_t h = stack.dim(2), w = stack.dim(3), plane = stack.dim(1) * h * w;
  const auto d = stack.data().subspan(i * plane, plane);
  return Tensor::from({1, stack.dim(1), h, w}, std::vector<double>(d.begin(), d.end()));
}

std::vector<Tensor> images_of(const Tensor& stack) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < stack.dim(0); ++i) out.push_back(image_at(stack, i));
  return out;
}

const Tensor& pick(const ImageSet& set, const std::string& name, const std::string& file) {
  if (name == "x" && set.has_x()) return set.x;
  if (name == "y" && set.has_y()) return set.y;
  throw FormatError(file + " has no image tensor '" + name + "'", 0);
}

// Values as stored in an archive (f32), so reported statistics match a reload.
Tensor rounded(const Tensor& t) {
  std::vector<double> v;
  v.reserve(t.numel());
  for (double d : t.data()) v.push_back(static_cast<double>(static_cast<float>(d)));
  return Tensor::from(t.shape(), std::move(v));
}

void echo_config(std::ostream& out, const std::string& command, const RunConfig& cfg) {
  out << "config " << command << ' ' << to_json(cfg).dump() << '\n';
}

RunConfig load_or_default(const std::string& path) {
  if (path.empty()) return {};
  return load_run_config(path);
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_dir,
                 std::ostream& out) {
  auto cfg = load_or_default(config_path);
  if (seed) cfg.simulate.seed = *seed;
  const auto& sim = cfg.simulate;
  try {
    sim.noise.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  echo_config(out, "simulate", cfg);
  ensure_dir(out_dir);

  struct Split {
    const char* name;
    std::size_t count;
    std::size_t size;
    PhantomKind kind;
  };
  const Split splits[] = {{"train", sim.train_count, sim.size, PhantomKind::random},
                          {"test", sim.test_count, sim.size, PhantomKind::random},
                          {"flat", sim.flat_count, sim.flat_size, PhantomKind::flat}};
  for (std::size_t s = 0; s < std::size(splits); ++s) {
    const auto& split = splits[s];
    if (split.count == 0) continue;
    DatasetSpec spec;
    spec.count = split.count;
    spec.size = split.size;
    spec.kind = split.kind;
    spec.flat_intensity = sim.flat_intensity;
    spec.noise = sim.noise;
    spec.seed = derive_seed(sim.seed, s, 100);
    const auto pairs = generate_dataset(spec);
    std::vector<Tensor> xs, ys;
    for (const auto& p : pairs) {
      xs.push_back(p.x);
      ys.push_back(p.y);
    }
    ImageSet set{rounded(stack_images(xs)), rounded(stack_images(ys))};
    const auto path = std::filesystem::path(out_dir) / (std::string(split.name) + ".rddi");
    write_image_set(path, set);

    double sum = 0.0, sq = 0.0;
    const auto n = static_cast<double>(set.x.numel());
    for (std::size_t i = 0; i < set.x.numel(); ++i) sum += set.y[i] - set.x[i];
    const double mean = sum / n;
    for (std::size_t i = 0; i < set.x.numel(); ++i) {
      const double d = set.y[i] - set.x[i] - mean;
      sq += d * d;
    }
    out << "split=" << split.name << " count=" << split.count << " size=" << split.size
        << " residual_mean=" << mean << " residual_std=" << std::sqrt(sq / n) << " file=" << path.string() << '\n';
  }
  return kExitOk;
}

struct TrainArgs {
  std::string config, data, out, log, resume;
  std::optional<std::string> variant;
  std::optional<std::size_t> iterations;
  std::optional<std::uint64_t> seed;
  std::vector<double> temperatures;
  std::optional<double> lambda;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto cfg = load_or_default(a.config);
  if (a.variant) {
    cfg.variant = parse_variant(*a.variant);
    apply_preset(cfg.train, *cfg.variant);
  }
  if (!a.temperatures.empty()) {
    cfg.train.drift.temperatures = a.temperatures;
    cfg.variant.reset();
  }
  if (a.lambda) {
    cfg.train.drift.lambda = *a.lambda;
    cfg.variant.reset();
  }
  if (a.iterations) cfg.train.iterations = *a.iterations;
  if (a.seed) {
    cfg.train.seed = *a.seed;
    cfg.train.generator.seed = *a.seed;
  }
  cfg.train.validate();
  echo_config(out, "train", cfg);

  const auto data = read_image_set(a.data);
  if (!data.has_x() || !data.has_y()) throw FormatError(a.data + " needs both 'x' and 'y' tensors", 0);
  const auto pool = pairs_from_stacks(data.x, data.y);
  for (const auto& p : pool) {
    if (p.x.dim(1) < cfg.train.patch || p.x.dim(2) < cfg.train.patch) {
      throw DimensionError("training images are smaller than train.patch");
    }
  }

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log);
    if (!log_file) throw std::runtime_error("cannot write " + a.log);
    echo_config(log_file, "train", cfg);
  }
  struct Tee : std::streambuf {
    std::ostream* a;
    std::ostream* b;
    int overflow(int c) override {
      if (c == EOF) return 0;
      a->put(static_cast<char>(c));
      if (b) b->put(static_cast<char>(c));
      return c;
    }
    int sync() override {
      a->flush();
      if (b) b->flush();
      return 0;
    }
  } tee;
  tee.a = &out;
  tee.b = log_file.is_open() ? &log_file : nullptr;
  std::ostream log(&tee);

  TrainState state;
  if (!a.resume.empty()) {
    state = load_checkpoint(a.resume);
    if (to_json(state.config) != to_json(cfg.train)) {
      // schedule length may grow on resume; everything else must match
      auto stored = state.config;
      stored.iterations = cfg.train.iterations;
      if (to_json(stored) != to_json(cfg.train)) {
        throw ConfigError("resume checkpoint was trained with a different configuration");
      }
      state.config.iterations = cfg.train.iterations;
    }
    log << "resume iteration=" << state.iteration << '\n';
  } else {
    state = init_state(cfg.train);
  }
  const auto start = std::chrono::steady_clock::now();
  train_until_done(state, pool, &log);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_checkpoint(state, a.out);
  log << "done iterations=" << state.iteration << " seconds=" << secs << " checkpoint=" << a.out << '\n';
  log.flush();
  return kExitOk;
}

struct DenoiseArgs {
  std::string config, checkpoint, input, output, png_dir;
  std::optional<std::uint64_t> seed;
  bool raw_weights = false;
};

int cmd_denoise(const DenoiseArgs& a, std::ostream& out) {
  auto cfg = load_or_default(a.config);
  if (a.seed) cfg.denoise.seed = *a.seed;
  if (a.raw_weights) cfg.denoise.raw_weights = true;
  if (!a.png_dir.empty()) cfg.denoise.png_dir = a.png_dir;
  echo_config(out, "denoise", cfg);

  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto params = cfg.denoise.raw_weights ? ckpt.params.clone(false) : ckpt.ema_params();
  const auto input = read_image_set(a.input);
  if (!input.has_y()) throw FormatError(a.input + " has no 'y' tensor to denoise", 0);
  const auto images = images_of(input.y);
  const std::size_t n = images.size();

  reset_generator_evaluations();
  std::vector<Tensor> outputs(n);
  std::vector<double> millis(n);
  parallel_for(n, worker_count(), [&](std::size_t i) {
    NoGradGuard no_grad;
    NoiseSource noise(derive_seed(cfg.denoise.seed, i, 0));
    const auto t0 = std::chrono::steady_clock::now();
    outputs[i] = reshape(denoise(images[i], params, noise), {1, images[i].dim(2), images[i].dim(3)});
    millis[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  });
  const auto nfe = generator_evaluations();

  double total_ms = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out << "image=" << i << " ms=" << std::fixed << std::setprecision(3) << millis[i] << std::defaultfloat
        << " nfe=1\n";
    total_ms += millis[i];
  }
  out << "images=" << n << " nfe=" << nfe << " mean_ms=" << (n ? total_ms / static_cast<double>(n) : 0.0) << '\n';
  if (nfe != n) throw NumericError("generator evaluation count " + std::to_string(nfe) + " != image count");

  ImageSet result{rounded(stack_images(outputs)), input.y};
  write_image_set(a.output, result);
  if (!cfg.denoise.png_dir.empty()) {
    ensure_dir(cfg.denoise.png_dir);
    const auto& d = cfg.denoise;
    for (std::size_t i = 0; i < n; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.png", i);
      write_png(std::filesystem::path(d.png_dir) / name, outputs[i], d.window_low_hu, d.window_high_hu, d.hu_at_zero,
                d.hu_at_one);
    }
  }
  return kExitOk;
}

struct EvalArgs {
  std::string config, pred, ref, out_dir;
  std::string pred_tensor = "x";
  std::string ref_tensor = "x";
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  auto cfg = load_or_default(a.config);
  echo_config(out, "eval", cfg);
  const auto& opt = cfg.eval;
  if (!(opt.data_range > 0.0)) throw ConfigError("/eval/data_range must be positive");

  const auto pred_set = read_image_set(a.pred);
  const auto ref_set = read_image_set(a.ref);
  const auto pred = images_of(pick(pred_set, a.pred_tensor, a.pred));
  const auto ref = images_of(pick(ref_set, a.ref_tensor, a.ref));
  if (pred.size() != ref.size()) {
    throw ContractError("prediction has " + std::to_string(pred.size()) + " images, reference has " +
                        std::to_string(ref.size()));
  }
  ensure_dir(a.out_dir);
  const std::filesystem::path dir(a.out_dir);

  const auto metrics = report(pred, ref, opt.data_range);
  {
    std::ofstream f(dir / "metrics.csv");
    write_metrics_csv(f, metrics);
  }
  const auto spectrum = rps(pred, ref, opt.pixel_spacing);
  {
    std::ofstream f(dir / "rps.csv");
    write_profile_csv(f, spectrum.profile);
  }
  out << std::setprecision(6) << "images=" << pred.size() << " psnr=" << metrics.psnr_mean << "±" << metrics.psnr_std
      << " ssim=" << metrics.ssim_mean << "±" << metrics.ssim_std << " rps_dc=" << spectrum.dc << '\n';

  // one NPS over every image, with ROIs chosen per image
  std::size_t roi_count = 0;
  std::optional<SpectrumProfile> accumulated;
  for (const auto& img : pred) {
    if (img.dim(2) < opt.roi_size || img.dim(3) < opt.roi_size) continue;
    const auto rois = select_flat_rois(img, opt.roi_size, opt.rois_per_image, opt.flatness_factor);
    if (rois.empty()) continue;
    const Tensor one[] = {img};
    const auto p = nps(one, rois, opt.pixel_spacing);
    if (!accumulated) {
      accumulated = p;
      for (double& v : accumulated->raw_power) v *= static_cast<double>(p.sample_count);
    } else {
      for (std::size_t k = 0; k < p.raw_power.size(); ++k) {
        accumulated->raw_power[k] += p.raw_power[k] * static_cast<double>(p.sample_count);
      }
    }
    roi_count += p.sample_count;
  }
  if (accumulated) {
    auto& p = *accumulated;
    for (double& v : p.raw_power) v /= static_cast<double>(roi_count);
    p.sample_count = roi_count;
    const double area = total_power(p);
    p.power = p.raw_power;
    if (area > 0.0) {
      for (double& v : p.power) v /= area;
    }
    std::ofstream f(dir / "nps.csv");
    write_profile_csv(f, p);
    out << "nps rois=" << roi_count << " total_power=" << area << " band_power[0.1,0.5]=" << band_power(p, 0.1, 0.5)
        << '\n';
  } else {
    out << "nps skipped: no flat " << opt.roi_size << "x" << opt.roi_size << " ROI found\n";
  }
  return kExitOk;
}

}  // namespace

void write_image_set(const std::filesystem::path& path, const ImageSet& set) {
  TensorArchive a;
  a.magic = kImageMagic;
  if (set.has_x()) a.add_tensor("x", set.x);
  if (set.has_y()) a.add_tensor("y", set.y);
  write_archive(path, a);
}

ImageSet read_image_set(const std::filesystem::path& path) {
  const auto a = read_archive(path, kImageMagic);
  ImageSet set;
  for (const char* name : {"x", "y"}) {
    if (!a.find(name)) continue;
    auto t = a.tensor(name);
    if (t.rank() != 4) {
      throw FormatError(path.string() + ": tensor '" + name + "' must be [N,C,H,W], got " + shape_str(t.shape()), 0);
    }
    (std::string(name) == "x" ? set.x : set.y) = std::move(t);
  }
  if (set.has_x() && set.has_y() && set.x.shape() != set.y.shape()) {
    throw FormatError(path.string() + ": 'x' and 'y' shapes differ", 0);
  }
  if (!set.has_x() && !set.has_y()) throw FormatError(path.string() + ": no 'x' or 'y' tensor", 0);
  return set;
}

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RDDM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError("RDDM_THREADS must be a positive integer");
    n = std::min(n, static_cast<std::size_t>(v));
  }
  return n;
}

void write_png(const std::filesystem::path& path, const Tensor& image, double window_low_hu, double window_high_hu,
               double hu_at_zero, double hu_at_one) {
  if (image.rank() < 2) throw DimensionError("write_png needs an image");
  if (!(window_high_hu > window_low_hu)) throw ConfigError("display window must have high > low");
  const std::size_t h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  if (image.numel() != h * w) throw DimensionError("write_png expects a single-channel image");

  std::vector<png_byte> pixels(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const double hu = hu_at_zero + image[i] * (hu_at_one - hu_at_zero);
    const double g = std::clamp((hu - window_low_hu) / (window_high_hu - window_low_hu), 0.0, 1.0);
    pixels[i] = static_cast<png_byte>(std::lround(g * 255.0));
  }
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < h; ++r) png_write_row(png, pixels.data() + r * w);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Residual drifting model for one-step low-dose CT denoising", "rddm"};
  app.require_subcommand(1);

  std::string sim_config, sim_out;
  std::optional<std::uint64_t> sim_seed;
  auto* sim = app.add_subcommand("simulate", "Render phantoms and write train/test/flat image sets");
  sim->add_option("--config", sim_config, "JSON run configuration");
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--seed", sim_seed, "Override simulate.seed");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a generator and write a checkpoint");
  train->add_option("--config", ta.config, "JSON run configuration");
  train->add_option("--data", ta.data, "Training image set (.rddi)")->required();
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--log", ta.log, "Also write the log here");
  train->add_option("--resume", ta.resume, "Continue from this checkpoint");
  train->add_option("--variant", ta.variant, "Preset: fine, balanced or smooth");
  train->add_option("--iterations", ta.iterations, "Override train.iterations");
  train->add_option("--seed", ta.seed, "Override train.seed and generator seed");
  train->add_option("--temperatures", ta.temperatures, "Kernel temperatures (overrides the preset)")->delimiter(',');
  train->add_option("--lambda", ta.lambda, "Pixel-loss weight (overrides the preset)");

  DenoiseArgs da;
  auto* den = app.add_subcommand("denoise", "Denoise an image set with one generator pass per image");
  den->add_option("--config", da.config, "JSON run configuration");
  den->add_option("--checkpoint", da.checkpoint, "Checkpoint path")->required();
  den->add_option("--input", da.input, "Input image set; its 'y' tensor is denoised")->required();
  den->add_option("--output", da.output, "Output image set")->required();
  den->add_option("--seed", da.seed, "Override denoise.seed");
  den->add_flag("--raw-weights", da.raw_weights, "Use raw instead of EMA weights");
  den->add_option("--png-dir", da.png_dir, "Also export windowed PNGs here");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Write metrics, RPS and NPS CSV reports");
  ev->add_option("--config", ea.config, "JSON run configuration");
  ev->add_option("--pred", ea.pred, "Predicted image set")->required();
  ev->add_option("--ref", ea.ref, "Reference image set")->required();
  ev->add_option("--out-dir", ea.out_dir, "Directory for metrics.csv, rps.csv, nps.csv")->required();
  ev->add_option("--pred-tensor", ea.pred_tensor, "Tensor of --pred to score (x or y)");
  ev->add_option("--ref-tensor", ea.ref_tensor, "Tensor of --ref to score against (x or y)");

  std::vector<const char*> argv{"rddm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_config, sim_seed, sim_out, out);
    if (train->parsed()) return cmd_train(ta, out);
    if (den->parsed()) return cmd_denoise(da, out);
    if (ev->parsed()) return cmd_eval(ea, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace rddm
