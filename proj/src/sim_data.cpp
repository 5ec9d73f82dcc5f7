#include "rddm/sim_data.hpp"

#include <algorithm>
#include <cmath>

#include "rddm/errors.hpp"

namespace rddm {

Tensor render_phantom(const PhantomSpec& spec) {
  if (spec.size == 0) throw ContractError("phantom size must be positive");
  const std::size_t n = spec.size;
  std::vector<double> img(n * n, 0.0);
  for (const auto& e : spec.ellipses) {
    if (!(e.semi_x > 0.0) || !(e.semi_y > 0.0)) throw ContractError("ellipse semi-axes must be positive");
    const double c = std::cos(e.angle), s = std::sin(e.angle);
    for (std::size_t row = 0; row < n; ++row) {
      const double py = (2.0 * static_cast<double>(row) + 1.0) / static_cast<double>(n) - 1.0 - e.cy;
      for (std::size_t col = 0; col < n; ++col) {
        const double px = (2.0 * static_cast<double>(col) + 1.0) / static_cast<double>(n) - 1.0 - e.cx;
        const double u = (c * px + s * py) / e.semi_x;
        const double v = (-s * px + c * py) / e.semi_y;
        if (u * u + v * v <= 1.0) img[row * n + col] += e.intensity;
      }
    }
  }
  for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
  return Tensor::from({1, n, n}, std::move(img));
}

PhantomSpec random_phantom(std::size_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  PhantomSpec spec{size, {}};
  // skull shell and soft-tissue interior
  const double ax = between(0.72, 0.92), ay = between(0.80, 0.95), tilt = between(-0.2, 0.2);
  const double shell = between(0.75, 0.95), tissue = between(0.30, 0.50);
  spec.ellipses.push_back({0.0, 0.0, ax, ay, tilt, shell});
  spec.ellipses.push_back({0.0, 0.0, ax - 0.06, ay - 0.06, tilt, tissue - shell});

  const int inserts = 3 + static_cast<int>(u(rng) * 5.0);
  for (int k = 0; k < inserts; ++k) {
    Ellipse e;
    e.cx = between(-0.45, 0.45);
    e.cy = between(-0.5, 0.5);
    e.semi_x = between(0.05, 0.3);
    e.semi_y = between(0.05, 0.3);
    e.angle = between(0.0, M_PI);
    e.intensity = (u(rng) < 0.5 ? -1.0 : 1.0) * between(0.05, 0.3);
    spec.ellipses.push_back(e);
  }
  return spec;
}

PhantomSpec flat_phantom(std::size_t size, double intensity) {
  // the circumscribed ellipse covers every pixel centre
  return {size, {{0.0, 0.0, 1.5, 1.5, 0.0, intensity}}};
}

void NoiseModel::validate() const {
  for (double s : {gaussian_sigma, streak_sigma, ndct_sigma}) {
    if (!std::isfinite(s) || s < 0.0) throw ContractError("noise sigmas must be finite and nonnegative");
  }
}

std::vector<double> streak_field(std::size_t height, std::size_t width, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> draws(width);
  for (auto& d : draws) d = normal(rng);
  // [1,2,1]/4 has gain sqrt(6)/4 on white input
  const double renorm = 4.0 / std::sqrt(6.0);
  std::vector<double> profile(width);
  for (std::size_t j = 0; j < width; ++j) {
    const double left = draws[j == 0 ? width - 1 : j - 1];
    const double right = draws[j + 1 == width ? 0 : j + 1];
    profile[j] = renorm * 0.25 * (left + 2.0 * draws[j] + right);
  }
  std::vector<double> field(height * width);
  for (std::size_t i = 0; i < height; ++i) std::copy(profile.begin(), profile.end(), field.begin() + i * width);
  return field;
}

PairedSample corrupt(const Tensor& clean, const NoiseModel& model) {
  model.validate();
  if (clean.rank() != 3) throw DimensionError("corrupt expects [C,H,W], got " + shape_str(clean.shape()));
  const std::size_t height = clean.dim(1), width = clean.dim(2);
  const std::size_t plane = height * width;
  std::mt19937_64 rng(model.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto c = clean.data();
  std::vector<double> x(c.size()), y(c.size()), r(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) x[i] = c[i] + model.ndct_sigma * normal(rng);
  for (std::size_t ch = 0; ch < clean.dim(0); ++ch) {
    const auto streaks = streak_field(height, width, rng);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = ch * plane + i;
      y[k] = x[k] + model.gaussian_sigma * normal(rng) + model.streak_sigma * streaks[i];
    }
  }
  for (std::size_t i = 0; i < c.size(); ++i) r[i] = y[i] - x[i];
  const Shape shape = clean.shape();
  return {Tensor::from(shape, std::move(x)), Tensor::from(shape, std::move(y)), Tensor::from(shape, std::move(r))};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Batch make_batch(std::span<const PairedSample> pool, std::size_t batch, std::size_t patch, std::uint64_t seed) {
  if (pool.empty()) throw ContractError("make_batch needs a non-empty pool");
  if (batch == 0 || patch == 0) throw ContractError("batch and patch must be positive");
  for (const auto& s : pool) {
    if (s.x.rank() != 3 || s.x.dim(0) != 1) throw DimensionError("pool images must be [1,H,W]");
    if (patch > s.x.dim(1) || patch > s.x.dim(2)) {
      throw ContractError("patch " + std::to_string(patch) + " larger than image " + shape_str(s.x.shape()));
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<double> ys(batch * patch * patch), xs(ys.size()), rs(ys.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& s = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    const std::size_t h = s.x.dim(1), w = s.x.dim(2);
    const std::size_t top = std::uniform_int_distribution<std::size_t>(0, h - patch)(rng);
    const std::size_t left = std::uniform_int_distribution<std::size_t>(0, w - patch)(rng);
    for (std::size_t i = 0; i < patch; ++i) {
      for (std::size_t j = 0; j < patch; ++j) {
        const std::size_t src = (top + i) * w + left + j;
        const std::size_t dst = (b * patch + i) * patch + j;
        ys[dst] = s.y[src];
        xs[dst] = s.x[src];
        rs[dst] = s.r[src];
      }
    }
  }
  const Shape shape{batch, 1, patch, patch};
  return {Tensor::from(shape, std::move(ys)), Tensor::from(shape, std::move(xs)), Tensor::from(shape, std::move(rs))};
}

std::vector<PairedSample> generate_dataset(const DatasetSpec& spec) {
  spec.noise.validate();
  std::vector<PairedSample> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    std::mt19937_64 phantom_rng(derive_seed(spec.seed, i, 0));
    const PhantomSpec phantom = spec.kind == PhantomKind::flat ? flat_phantom(spec.size, spec.flat_intensity)
                                                               : random_phantom(spec.size, phantom_rng);
    NoiseModel model = spec.noise;
    model.seed = derive_seed(spec.seed, i, 1);
    out.push_back(corrupt(render_phantom(phantom), model));
  }
  return out;
}

Tensor stack_images(std::span<const Tensor> images) {
  if (images.empty()) throw ContractError("cannot stack an empty image list");
  const Shape& first = images.front().shape();
  if (first.size() != 3) throw DimensionError("images must be [C,H,W]");
  std::vector<double> values;
  values.reserve(images.size() * images.front().numel());
  for (const auto& img : images) {
    if (img.shape() != first) throw DimensionError("stacked images must share a shape");
    values.insert(values.end(), img.data().begin(), img.data().end());
  }
  return Tensor::from({images.size(), first[0], first[1], first[2]}, std::move(values));
}

std::vector<Tensor> unstack_images(const Tensor& stacked) {
  if (stacked.rank() != 4) throw DimensionError("expected [N,C,H,W], got " + shape_str(stacked.shape()));
  const Shape item{stacked.dim(1), stacked.dim(2), stacked.dim(3)};
  const std::size_t per = shape_numel(item);
  std::vector<Tensor> out;
  for (std::size_t n = 0; n < stacked.dim(0); ++n) {
    auto begin = stacked.data().begin() + static_cast<std::ptrdiff_t>(n * per);
    out.push_back(Tensor::from(item, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(per))));
  }
  return out;
}

std::vector<PairedSample> pairs_from_stacks(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) throw DimensionError("x " + shape_str(x.shape()) + " vs y " + shape_str(y.shape()));
  const auto xs = unstack_images(x);
  const auto ys = unstack_images(y);
  std::vector<PairedSample> out;
  for (std::size_t n = 0; n < xs.size(); ++n) out.push_back({xs[n], ys[n], sub(ys[n], xs[n])});
  return out;
}

}  // namespace rddm
