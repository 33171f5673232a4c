#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ganlab/adam.hpp"
#include "ganlab/ops.hpp"

namespace ganlab {

// Layer helpers shared by every model. Construction registers parameters
// under `prefix` in declaration order, which fixes the checkpoint layout.

class Linear {
public:
    Linear() = default;
    Linear(ParamStore& ps, const std::string& prefix, int in, int out,
           bool bias, RngStream& rng);
    Tensor forward(const Tensor& x) const;
    int out_dim() const { return w_ ? w_->value.dim(1) : 0; }

private:
    Parameter* w_ = nullptr;
    Parameter* b_ = nullptr;
};

class Conv2dLayer {
public:
    Conv2dLayer() = default;
    Conv2dLayer(ParamStore& ps, const std::string& prefix, int in, int out,
                int kernel, int stride, int pad, bool bias, RngStream& rng);
    Tensor forward(const Tensor& x) const;

private:
    Parameter* w_ = nullptr;
    Parameter* b_ = nullptr;
    int stride_ = 1, pad_ = 0;
};

class BatchNormLayer {
public:
    BatchNormLayer() = default;
    BatchNormLayer(ParamStore& ps, const std::string& prefix, int channels,
                   RngStream& rng);
    Tensor forward(const Tensor& x, bool training) const;

private:
    Parameter* gamma_ = nullptr;
    Parameter* beta_ = nullptr;
    std::unique_ptr<BatchNormState> state_;  // address registered as buffer
};

enum class BlockKind { upsample, downsample, residual };
enum class Activation { none, relu, leaky_relu };

struct BlockSpec {
    BlockKind kind;
    int in_channels = 0;
    int out_channels = 0;
    bool has_batch_norm = true;
    Activation activation = Activation::relu;
};

// The three reusable composite blocks:
//   upsample:   nearest x2, 3x3 stride-1 conv, BN, ReLU
//   downsample: 4x4 stride-2 conv, optional BN, LeakyReLU
//   residual:   two (3x3 conv, BN) with ReLU between, identity skip, ReLU
class Block {
public:
    static std::unique_ptr<Block> build(ParamStore& ps,
                                        const std::string& prefix,
                                        const BlockSpec& spec, RngStream& rng);
    Tensor forward(const Tensor& x, bool training) const;
    const BlockSpec& spec() const { return spec_; }

private:
    BlockSpec spec_;
    Conv2dLayer conv1_, conv2_;
    std::optional<BatchNormLayer> bn1_, bn2_;
};

// Joining network between scales: channel-concat of the hidden features with
// a spatially replicated vector, then residual blocks at the joint width.
class JoinBlock {
public:
    JoinBlock(ParamStore& ps, const std::string& prefix, int h_channels,
              int vec_dim, int residual_blocks, RngStream& rng);
    // h: (B,C,M,M), v: (B,vec_dim)
    Tensor forward(const Tensor& h, const Tensor& v, bool training) const;
    int out_channels() const { return h_channels_ + vec_dim_; }

private:
    int h_channels_, vec_dim_;
    std::vector<std::unique_ptr<Block>> residuals_;
};

Tensor apply_activation(const Tensor& x, Activation act);

}  // namespace ganlab
