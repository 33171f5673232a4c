#pragma once

#include <functional>
#include <optional>

#include "ganlab/conditioning.hpp"
#include "ganlab/data.hpp"

namespace ganlab::v2 {

enum class Ablation { full, no_jcu, g3_only, three_g3, all256 };

Ablation ablation_from_string(const std::string& s);
std::string ablation_name(Ablation a);

struct ModelConfig {
    int embed_dim = 64;
    int cond_dim = 16;   // CA output fed to F_i joins and JCU heads
    int noise_dim = 16;
    int g_base = 4;      // seed tensor is 4x4x(64*g_base)
    int d_base = 16;     // discriminator trunks end at 4x4x(8*d_base)
    int branches = 3;
    int base_res = 16;
    bool conditional = false;
    Ablation ablation = Ablation::full;
    int join_residual_blocks = 2;
    real_t lambda_kl = 1;  // KL weight on the CA head in conditional mode

    int top_res() const { return base_res << (branches - 1); }
    int branch_res(int i) const { return base_res << i; }
    // Discriminators carry a conditional head in conditional mode; they also
    // carry the unconditional head unless the JCU pairing is ablated away.
    bool cond_head() const { return conditional; }
    bool uncond_head() const {
        return !conditional || ablation != Ablation::no_jcu;
    }
    // Branch heads actually emitting images (index, output resolution).
    std::vector<std::pair<int, int>> active_heads() const;
    void validate() const;
};

// Tree generator: seed transform to 4x4x64*g_base, upsample chain to the
// first branch, then per branch a join (concat of z or c) plus residual
// blocks and one upsample; every active branch ends in a 3x3 conv + tanh.
class TreeGenerator {
public:
    TreeGenerator(ParamStore& ps, const std::string& prefix,
                  const ModelConfig& cfg, RngStream& rng);
    // input: (B, noise[+cond]) seed vector; join_vec: (B, noise|cond) fed to
    // every F_i. Returns one image per active head, in head order.
    std::vector<Tensor> forward(const Tensor& input, const Tensor& join_vec,
                                bool training) const;

private:
    const ModelConfig cfg_;
    Linear seed_fc_;
    BatchNormLayer seed_bn_;
    std::vector<std::unique_ptr<Block>> seed_ups_;
    std::vector<std::unique_ptr<JoinBlock>> joins_;
    std::vector<std::unique_ptr<Block>> branch_ups_;
    struct Head {
        int branch;
        int upsample_factor;  // 1 except in the all-top-resolution ablation
        Conv2dLayer conv;
    };
    std::vector<Head> heads_;
};

// Per-scale discriminator: downsample trunk to 4x4x8*d_base (first block
// without BN, 3x3 squeeze when the chain ends narrower), an unconditional
// scalar head and a conditional head fusing the replicated condition.
class BranchDiscriminator {
public:
    BranchDiscriminator(ParamStore& ps, const std::string& prefix,
                        int image_res, const ModelConfig& cfg,
                        RngStream& rng);
    Tensor trunk(const Tensor& image, bool training) const;
    Tensor uncond_logit(const Tensor& trunk_features, bool training) const;
    Tensor cond_logit(const Tensor& trunk_features, const Tensor& c,
                      bool training) const;
    Tensor features(const Tensor& image) const;  // flattened eval trunk
    int resolution() const { return image_res_; }
    bool has_uncond() const { return has_uncond_; }
    bool has_cond() const { return has_cond_; }

private:
    int image_res_;
    bool has_uncond_, has_cond_;
    std::vector<std::unique_ptr<Block>> downs_;
    std::optional<Conv2dLayer> squeeze_;
    std::optional<BatchNormLayer> squeeze_bn_;
    Linear u_fc_;
    Conv2dLayer c_fuse_;
    std::optional<BatchNormLayer> c_fuse_bn_;
    Linear c_fc_;
};

// Per-image pixel population statistics, differentiable through the pixels.
struct ColorStats {
    Tensor mu;   // (B,3)
    Tensor cov;  // (B,3,3), population covariance (divisor N)
};
ColorStats color_stats(const Tensor& image);

// (1/n) sum_j (l1 ||mu_i - mu_j||^2 + l2 ||cov_i - cov_j||_F^2) between two
// scales of the same batch; symmetric and zero iff the per-sample stats
// agree.
Tensor color_consistency_loss(const Tensor& s_a, const Tensor& s_b,
                              real_t lambda1, real_t lambda2);

class Model {
public:
    Model(const ModelConfig& cfg, uint64_t seed);

    ModelConfig cfg;
    ParamStore g_store;
    std::vector<std::unique_ptr<ParamStore>> d_stores;
    std::optional<EmbeddingTable> embed;
    std::optional<CAHead> ca;
    std::optional<TreeGenerator> gen;
    std::vector<std::unique_ptr<BranchDiscriminator>> ds;
    // For discriminator i: which dataset resolution it sees and which
    // generator output it judges.
    struct Wiring {
        int d_resolution;
        int fake_index;
    };
    std::vector<Wiring> wiring;

    std::vector<ParamStore*> stores();

    struct GenOut {
        std::vector<Tensor> images;
        Tensor c, mu, sigma;  // conditional mode only
    };
    // captions required iff conditional; z_rng null draws zero noise;
    // eps_rng null pins CA at its mean.
    GenOut generate(int batch, const std::vector<data::Caption>* captions,
                    RngStream* z_rng, RngStream* eps_rng,
                    bool training) const;
    Tensor phi_of(const std::vector<data::Caption>& captions) const;
};

// Cross-entropy for one branch discriminator; fakes must be detached.
// Unconditional head: real/fake terms. Conditional head: matching-aware
// (real,c) positives with (real,c_mis) and (fake,c) negatives at half
// weight each.
Tensor branch_d_loss(const BranchDiscriminator& d, const Tensor& real,
                     const Tensor& fake, const Tensor& c,
                     const Tensor& c_mismatched, bool training);

// Joint generator loss over all branches: adversarial terms of every head
// plus alpha-weighted color consistency between adjacent scales (branches
// i >= 1). color_out receives the raw consistency sum.
Tensor joint_g_loss(const Model& model, const std::vector<Tensor>& fakes,
                    const Tensor& c, real_t alpha, real_t lambda1,
                    real_t lambda2, bool training, real_t* color_out);

struct TrainConfig {
    int batch = 8;
    int64_t steps = 20000;  // generator updates
    real_t lr = static_cast<real_t>(2e-4);
    real_t alpha = 50;
    real_t lambda1 = 1, lambda2 = 5;
    uint64_t seed = 1;
    int grid_every = 500;
};

struct StepStats {
    int64_t step = 0;
    int epoch = 0;
    std::vector<double> d_losses;
    double g_loss = 0, kl = 0, color = 0;
    double lr = 0;
};

struct TrainHooks {
    std::function<void(const StepStats&)> on_step;
    std::function<void(int64_t step)> on_sample_point;
};

void train(Model& model, const data::DatasetCache& data,
           const TrainConfig& tc, const TrainHooks& hooks);

}  // namespace ganlab::v2
