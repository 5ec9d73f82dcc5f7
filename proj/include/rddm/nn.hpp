#pragma once

#include <cstddef>
#include <optional>

#include "rddm/tensor.hpp"

namespace rddm {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation of input [B,Cin,H,W] with kernel [Cout,Cin,k,k] (k odd),
/// plus an optional per-output-channel bias [Cout].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias = std::nullopt,
              Conv2dOptions options = {});

/// Non-overlapping transposed convolution (kernel size == stride), the
/// upsampling half of a U-Net. Kernel layout is [Cin,Cout,s,s].
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, const std::optional<Tensor>& bias,
                        std::size_t stride);

/// Concatenates two [B,C,H,W] tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

}  // namespace rddm
