#pragma once

#include "ganlab/tape.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

// Fixed primitive set of the autodiff core. Every op validates operand
// shapes, produces a finite-valued tensor of the algebraically determined
// shape, and records itself onto the active tape when an operand requires
// gradients. Images and feature maps are NCHW.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Elementwise (Hadamard) product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real_t k);

// (M,K) x (K,N) -> (M,N)
Tensor matmul(const Tensor& a, const Tensor& b);

// Concat along dim 1 (channels of NCHW, columns of a 2-d batch).
Tensor concat_dim1(const Tensor& a, const Tensor& b);
// Columns/channels [from, from+count) of dim 1.
Tensor slice_dim1(const Tensor& x, int from, int count);

// x: (B,Ci,H,W), w: (Co,Ci,kh,kw), optional bias (Co); zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride, int pad);

// Integer-factor nearest-neighbor upsampling of NCHW.
Tensor nearest_upsample(const Tensor& x, int factor);

struct BatchNormState {
    std::vector<real_t> running_mean;
    std::vector<real_t> running_var;
    explicit BatchNormState(int channels)
        : running_mean(channels, real_t(0)), running_var(channels, real_t(1)) {}
};

// Training mode normalizes with batch statistics and updates the running
// ones; inference mode uses the running statistics and leaves them alone.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);

// Natural log with the input clamped at 1e-12 from below; gradient is zero
// in the clamped region.
Tensor log_op(const Tensor& x);
Tensor exp_op(const Tensor& x);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
// (B,C,H,W) -> (B,C) mean over the spatial extent.
Tensor spatial_mean(const Tensor& x);

// (B,D) -> (B,D,m,m) by spatial replication.
Tensor spatial_replicate(const Tensor& v, int m);

// x: (B,In), w: (In,Out), bias: (Out) or undefined.
Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& bias);

// Metadata-only reshape (same element count), recorded as identity.
Tensor reshape(const Tensor& x, Shape shape);
// (B, ...) -> (B, rest)
Tensor flatten_batch(const Tensor& x);

}  // namespace ganlab
