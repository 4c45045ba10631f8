#pragma once

#include "connseg/tensor.hpp"

namespace connseg::ad {

// Inputs to log() (and the cross-entropy probabilities) are clamped to
// [LOG_CLAMP_EPS, 1 - LOG_CLAMP_EPS] so the loss stays defined at {0,1}.
inline constexpr double LOG_CLAMP_EPS = 1e-7;

// Element-wise; shapes must match exactly (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
/// log of the input clamped to [LOG_CLAMP_EPS, 1 - LOG_CLAMP_EPS].
Tensor log(const Tensor& x);

/// 2-D matrix product.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Softmax over the last axis of a rank-1 or rank-2 tensor.
Tensor softmax(const Tensor& x);

Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);

/// Cross-correlation with holes. input [N,Ci,H,W], kernel [Co,Ci,kh,kw].
/// The output size (H + 2*pad - dilation*(kh-1) - 1)/stride + 1 must be
/// integral; anything else is rejected.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride = 1, int pad = 0,
              int dilation = 1);

/// Fractionally strided convolution. input [N,Ci,H,W], kernel [Ci,Co,kh,kw];
/// output spatial size is (H-1)*stride - 2*pad + kh.
Tensor transposed_conv2d(const Tensor& input, const Tensor& kernel, int stride = 2,
                         int pad = 0);

/// align-corners=false resize of each channel plane.
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

/// Embedded-Gaussian attention: out[n,d,i] = sum_j softmax_j(theta_i.phi_j) g[n,d,j]
/// over the flattened H*W positions. All three inputs are [N,d,H,W].
Tensor attention(const Tensor& theta, const Tensor& phi, const Tensor& g);

/// x [N,C,H,W] + bias [C], broadcast over N,H,W.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

Tensor zero_pad2d(const Tensor& x, int pad_bottom, int pad_right);
Tensor crop2d(const Tensor& x, int out_h, int out_w);  // top-left corner

/// Mean binary cross-entropy through a sigmoid. targets must be exactly
/// {0,1}; probabilities are clamped before the log. The analytic input
/// gradient is (sigmoid(z) - y) / element_count.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

}  // namespace connseg::ad
