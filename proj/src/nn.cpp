#include "rddm/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <memory>
#include <utility>

#include "rddm/errors.hpp"

namespace rddm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, k, stride, pad, oh, ow;
  std::size_t col_rows() const { return cin * k * k; }
  std::size_t col_cols() const { return oh * ow; }
};

// Output columns [lo, hi) whose tap kx lands inside the row (stride 1).
std::pair<std::size_t, std::size_t> valid_span(std::size_t kx, const ConvGeometry& g) {
  const std::size_t lo = std::min(g.ow, g.pad > kx ? g.pad - kx : 0);
  const std::size_t hi = std::max(lo, std::min(g.ow, g.w + g.pad - kx));
  return {lo, hi};
}

void im2col(const double* img, const ConvGeometry& g, double* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const double* plane = img + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
        double* dst = col + row * g.col_cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst + oy * g.ow, dst + (oy + 1) * g.ow, 0.0);
            continue;
          }
          const double* src = plane + iy * g.w;
          double* d = dst + oy * g.ow;
          if (g.stride == 1) {
            const auto [lo, hi] = valid_span(kx, g);
            std::fill(d, d + lo, 0.0);
            std::copy(src + lo + kx - g.pad, src + hi + kx - g.pad, d + lo);
            std::fill(d + hi, d + g.ow, 0.0);
            continue;
          }
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            d[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* img) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    double* plane = img + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
        const double* src = col + row * g.col_cols();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = plane + iy * g.w;
          if (g.stride == 1) {
            const auto [lo, hi] = valid_span(kx, g);
            const double* s = src + oy * g.ow;
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox + kx - g.pad] += s[ox];
            continue;
          }
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

void check_bias(const std::optional<Tensor>& bias, std::size_t channels) {
  if (bias && (bias->rank() != 1 || bias->dim(0) != channels)) {
    throw DimensionError("bias shape " + shape_str(bias->shape()) + " does not match " + std::to_string(channels) +
                         " output channels");
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias, Conv2dOptions options) {
  if (input.rank() != 4) throw DimensionError("conv2d input must be [B,C,H,W], got " + shape_str(input.shape()));
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3)) {
    throw DimensionError("conv2d kernel must be [Cout,Cin,k,k], got " + shape_str(kernel.shape()));
  }
  if (kernel.dim(2) % 2 == 0) throw ContractError("conv2d kernel size must be odd");
  if (options.stride == 0) throw ContractError("conv2d stride must be positive");
  if (kernel.dim(1) != input.dim(1)) {
    throw DimensionError("conv2d channel mismatch: input has " + std::to_string(input.dim(1)) +
                         " channels, kernel expects " + std::to_string(kernel.dim(1)));
  }
  check_bias(bias, kernel.dim(0));

  ConvGeometry g{};
  g.batch = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.k = kernel.dim(2);
  g.stride = options.stride;
  g.pad = options.padding;
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) throw DimensionError("conv2d kernel larger than padded input");
  g.oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;

  const std::size_t in_plane = g.cin * g.h * g.w;
  const std::size_t out_plane = g.cout * g.oh * g.ow;
  const std::size_t col_size = g.col_rows() * g.col_cols();

  // every entry is written by im2col, so skip zero-initialisation
  std::shared_ptr<double[]> cols(new double[g.batch * col_size]);
  std::vector<double> out(g.batch * out_plane);
  ConstMapMat wmat(kernel.data().data(), g.cout, g.col_rows());
  for (std::size_t b = 0; b < g.batch; ++b) {
    double* col = cols.get() + b * col_size;
    im2col(input.data().data() + b * in_plane, g, col);
    MapMat o(out.data() + b * out_plane, g.cout, g.col_cols());
    o.noalias() = wmat * ConstMapMat(col, g.col_rows(), g.col_cols());
    if (bias) {
      auto bd = bias->data();
      for (std::size_t c = 0; c < g.cout; ++c) o.row(c).array() += bd[c];
    }
  }

  std::vector<Tensor> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return Tensor::make_result(
      {g.batch, g.cout, g.oh, g.ow}, std::move(out), std::move(inputs),
      [g, cols, has_bias, in_plane, out_plane, col_size](detail::Node& self) {
        auto& pin = *self.parents[0];
        auto& pk = *self.parents[1];
        ConstMapMat wmat(pk.data.data(), g.cout, g.col_rows());
        std::vector<double> dcol(pin.requires_grad ? col_size : 0);
        for (std::size_t b = 0; b < g.batch; ++b) {
          ConstMapMat gout(self.grad.data() + b * out_plane, g.cout, g.col_cols());
          const double* col = cols.get() + b * col_size;
          if (pk.requires_grad) {
            MapMat gw(pk.grad_buffer().data(), g.cout, g.col_rows());
            gw.noalias() += gout * ConstMapMat(col, g.col_rows(), g.col_cols()).transpose();
          }
          if (pin.requires_grad) {
            MapMat dc(dcol.data(), g.col_rows(), g.col_cols());
            dc.noalias() = wmat.transpose() * gout;
            col2im_add(dcol.data(), g, pin.grad_buffer().data() + b * in_plane);
          }
          if (has_bias && self.parents[2]->requires_grad) {
            auto& gb = self.parents[2]->grad_buffer();
            // plain loop: Eigen's vectorised sum rounds differently with buffer alignment
            for (std::size_t c = 0; c < g.cout; ++c) {
              const double* row = self.grad.data() + b * out_plane + c * g.col_cols();
              double s = 0.0;
              for (std::size_t i = 0; i < g.col_cols(); ++i) s += row[i];
              gb[c] += s;
            }
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias,
                        std::size_t stride) {
  if (input.rank() != 4) throw DimensionError("conv_transpose2d input must be [B,C,H,W], got " + shape_str(input.shape()));
  if (kernel.rank() != 4 || kernel.dim(2) != stride || kernel.dim(3) != stride) {
    throw DimensionError("conv_transpose2d kernel must be [Cin,Cout,s,s] with s == stride, got " +
                         shape_str(kernel.shape()));
  }
  if (kernel.dim(0) != input.dim(1)) {
    throw DimensionError("conv_transpose2d channel mismatch: input has " + std::to_string(input.dim(1)) +
                         " channels, kernel expects " + std::to_string(kernel.dim(0)));
  }
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(1), s = stride;
  check_bias(bias, cout);
  const std::size_t oh = h * s, ow = w * s;
  const std::size_t hw = h * w;
  const std::size_t taps = cout * s * s;
  const std::size_t in_plane = cin * hw;
  const std::size_t out_plane = cout * oh * ow;

  // scatter [Cout*s*s, H*W] into [Cout, H*s, W*s]
  auto scatter = [=](const double* cols, double* dst) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t ky = 0; ky < s; ++ky) {
        for (std::size_t kx = 0; kx < s; ++kx) {
          const double* src = cols + ((co * s + ky) * s + kx) * hw;
          double* plane = dst + co * oh * ow;
          for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) plane[(y * s + ky) * ow + x * s + kx] = src[y * w + x];
          }
        }
      }
    }
  };
  auto gather = [=](const double* src_img, double* cols) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t ky = 0; ky < s; ++ky) {
        for (std::size_t kx = 0; kx < s; ++kx) {
          double* dst = cols + ((co * s + ky) * s + kx) * hw;
          const double* plane = src_img + co * oh * ow;
          for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) dst[y * w + x] = plane[(y * s + ky) * ow + x * s + kx];
          }
        }
      }
    }
  };

  std::vector<double> out(batch * out_plane);
  std::vector<double> cols(taps * hw);
  ConstMapMat wmat(kernel.data().data(), cin, taps);
  for (std::size_t b = 0; b < batch; ++b) {
    MapMat c(cols.data(), taps, hw);
    c.noalias() = wmat.transpose() * ConstMapMat(input.data().data() + b * in_plane, cin, hw);
    scatter(cols.data(), out.data() + b * out_plane);
    if (bias) {
      auto bd = bias->data();
      double* o = out.data() + b * out_plane;
      for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t i = 0; i < oh * ow; ++i) o[co * oh * ow + i] += bd[co];
      }
    }
  }

  std::vector<Tensor> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return Tensor::make_result({batch, cout, oh, ow}, std::move(out), std::move(inputs),
                             [=](detail::Node& self) {
                               auto& pin = *self.parents[0];
                               auto& pk = *self.parents[1];
                               std::vector<double> gcols(taps * hw);
                               ConstMapMat wm(pk.data.data(), cin, taps);
                               for (std::size_t b = 0; b < batch; ++b) {
                                 const double* gout = self.grad.data() + b * out_plane;
                                 gather(gout, gcols.data());
                                 ConstMapMat gc(gcols.data(), taps, hw);
                                 if (pin.requires_grad) {
                                   MapMat gi(pin.grad_buffer().data() + b * in_plane, cin, hw);
                                   gi.noalias() += wm * gc;
                                 }
                                 if (pk.requires_grad) {
                                   MapMat gw(pk.grad_buffer().data(), cin, taps);
                                   gw.noalias() += ConstMapMat(pin.data.data() + b * in_plane, cin, hw) * gc.transpose();
                                 }
                                 if (has_bias && self.parents[2]->requires_grad) {
                                   auto& gb = self.parents[2]->grad_buffer();
                                   for (std::size_t co = 0; co < cout; ++co) {
                                     double acc = 0.0;
                                     for (std::size_t i = 0; i < oh * ow; ++i) acc += gout[co * oh * ow + i];
                                     gb[co] += acc;
                                   }
                                 }
                               }
                             });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels needs matching [B,*,H,W], got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<double> out(batch * (ca + cb) * hw);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(ad.data() + n * ca * hw, ca * hw, out.data() + n * (ca + cb) * hw);
    std::copy_n(bd.data() + n * cb * hw, cb * hw, out.data() + n * (ca + cb) * hw + ca * hw);
  }
  return Tensor::make_result({batch, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
                             [=](detail::Node& self) {
                               auto& pa = *self.parents[0];
                               auto& pb = *self.parents[1];
                               for (std::size_t n = 0; n < batch; ++n) {
                                 const double* g = self.grad.data() + n * (ca + cb) * hw;
                                 if (pa.requires_grad) {
                                   double* ga = pa.grad_buffer().data() + n * ca * hw;
                                   for (std::size_t i = 0; i < ca * hw; ++i) ga[i] += g[i];
                                 }
                                 if (pb.requires_grad) {
                                   double* gb = pb.grad_buffer().data() + n * cb * hw;
                                   for (std::size_t i = 0; i < cb * hw; ++i) gb[i] += g[ca * hw + i];
                                 }
                               }
                             });
}

}  // namespace rddm
