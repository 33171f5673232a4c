#include "ganlab/blocks.hpp"

namespace ganlab {

namespace {
constexpr real_t kInitStd = static_cast<real_t>(0.02);
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int in, int out,
               bool bias, RngStream& rng) {
    w_ = ps.add(prefix + ".weight", init_normal({in, out}, 0, kInitStd, rng));
    if (bias) b_ = ps.add(prefix + ".bias", init_zeros({out}));
}

Tensor Linear::forward(const Tensor& x) const {
    return fully_connected(x, w_->value, b_ ? b_->value : Tensor());
}

Conv2dLayer::Conv2dLayer(ParamStore& ps, const std::string& prefix, int in,
                         int out, int kernel, int stride, int pad, bool bias,
                         RngStream& rng)
    : stride_(stride), pad_(pad) {
    w_ = ps.add(prefix + ".weight",
                init_normal({out, in, kernel, kernel}, 0, kInitStd, rng));
    if (bias) b_ = ps.add(prefix + ".bias", init_zeros({out}));
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
    return conv2d(x, w_->value, b_ ? b_->value : Tensor(), stride_, pad_);
}

BatchNormLayer::BatchNormLayer(ParamStore& ps, const std::string& prefix,
                               int channels, RngStream& rng)
    : state_(std::make_unique<BatchNormState>(channels)) {
    gamma_ = ps.add(prefix + ".gamma",
                    init_normal({channels}, 1, kInitStd, rng));
    beta_ = ps.add(prefix + ".beta", init_zeros({channels}));
    ps.add_buffer(prefix + ".running_mean", &state_->running_mean);
    ps.add_buffer(prefix + ".running_var", &state_->running_var);
}

Tensor BatchNormLayer::forward(const Tensor& x, bool training) const {
    return batch_norm(x, gamma_->value, beta_->value, *state_, training);
}

Tensor apply_activation(const Tensor& x, Activation act) {
    switch (act) {
        case Activation::relu: return relu(x);
        case Activation::leaky_relu: return leaky_relu(x);
        default: return x;
    }
}

std::unique_ptr<Block> Block::build(ParamStore& ps, const std::string& prefix,
                                    const BlockSpec& spec, RngStream& rng) {
    if (spec.in_channels <= 0 || spec.out_channels <= 0)
        throw ShapeError("block " + prefix +
                         ": channel counts must be positive");
    if (spec.kind == BlockKind::residual &&
        spec.in_channels != spec.out_channels)
        throw ShapeError("block " + prefix +
                         ": residual blocks preserve channel count");
    auto block = std::unique_ptr<Block>(new Block());
    block->spec_ = spec;
    switch (spec.kind) {
        case BlockKind::upsample:
            block->conv1_ =
                Conv2dLayer(ps, prefix + ".conv", spec.in_channels,
                            spec.out_channels, 3, 1, 1,
                            /*bias=*/!spec.has_batch_norm, rng);
            if (spec.has_batch_norm)
                block->bn1_.emplace(ps, prefix + ".bn", spec.out_channels,
                                    rng);
            break;
        case BlockKind::downsample:
            block->conv1_ =
                Conv2dLayer(ps, prefix + ".conv", spec.in_channels,
                            spec.out_channels, 4, 2, 1,
                            /*bias=*/!spec.has_batch_norm, rng);
            if (spec.has_batch_norm)
                block->bn1_.emplace(ps, prefix + ".bn", spec.out_channels,
                                    rng);
            break;
        case BlockKind::residual:
            block->conv1_ = Conv2dLayer(ps, prefix + ".conv1",
                                        spec.in_channels, spec.out_channels,
                                        3, 1, 1, false, rng);
            block->bn1_.emplace(ps, prefix + ".bn1", spec.out_channels, rng);
            block->conv2_ = Conv2dLayer(ps, prefix + ".conv2",
                                        spec.out_channels, spec.out_channels,
                                        3, 1, 1, false, rng);
            block->bn2_.emplace(ps, prefix + ".bn2", spec.out_channels, rng);
            break;
    }
    return block;
}

Tensor Block::forward(const Tensor& x, bool training) const {
    if (x.rank() != 4 || x.dim(1) != spec_.in_channels)
        throw ShapeError("block forward: expected (B," +
                         std::to_string(spec_.in_channels) + ",H,W), got " +
                         shape_str(x.shape()));
    switch (spec_.kind) {
        case BlockKind::upsample: {
            Tensor y = conv1_.forward(nearest_upsample(x, 2));
            if (bn1_) y = bn1_->forward(y, training);
            return apply_activation(y, spec_.activation);
        }
        case BlockKind::downsample: {
            if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
                throw ShapeError(
                    "downsample block: odd spatial extent in input " +
                    shape_str(x.shape()));
            Tensor y = conv1_.forward(x);
            if (bn1_) y = bn1_->forward(y, training);
            return apply_activation(y, spec_.activation);
        }
        case BlockKind::residual: {
            Tensor y = relu(bn1_->forward(conv1_.forward(x), training));
            y = bn2_->forward(conv2_.forward(y), training);
            return relu(add(x, y));
        }
    }
    throw Error("unreachable");
}

JoinBlock::JoinBlock(ParamStore& ps, const std::string& prefix,
                     int h_channels, int vec_dim, int residual_blocks,
                     RngStream& rng)
    : h_channels_(h_channels), vec_dim_(vec_dim) {
    const int width = h_channels + vec_dim;
    for (int i = 0; i < residual_blocks; ++i)
        residuals_.push_back(Block::build(
            ps, prefix + ".res" + std::to_string(i),
            {BlockKind::residual, width, width, true, Activation::relu},
            rng));
}

Tensor JoinBlock::forward(const Tensor& h, const Tensor& v,
                          bool training) const {
    if (h.rank() != 4 || h.dim(1) != h_channels_)
        throw ShapeError("join: hidden features " + shape_str(h.shape()) +
                         " do not carry " + std::to_string(h_channels_) +
                         " channels");
    if (h.dim(2) != h.dim(3))
        throw ShapeError("join: spatial extent must be square, got " +
                         shape_str(h.shape()));
    if (v.rank() != 2 || v.dim(1) != vec_dim_ || v.dim(0) != h.dim(0))
        throw ShapeError("join: vector " + shape_str(v.shape()) +
                         " does not match (" + std::to_string(h.dim(0)) +
                         "," + std::to_string(vec_dim_) + ")");
    Tensor y = concat_dim1(h, spatial_replicate(v, h.dim(2)));
    for (const auto& r : residuals_) y = r->forward(y, training);
    return y;
}

}  // namespace ganlab
