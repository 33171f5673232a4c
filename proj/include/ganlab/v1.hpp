#pragma once

#include <functional>
#include <optional>

#include "ganlab/conditioning.hpp"
#include "ganlab/data.hpp"

namespace ganlab::v1 {

struct ModelConfig {
    int embed_dim = 64;   // caption embedding width
    int cond_dim = 16;    // CA output width
    int noise_dim = 16;
    int d_text_dim = 16;  // caption compression inside the discriminators
    int g_base = 32;      // stage-I chain ends at this width before the head
    int g2_base = 32;     // stage-II encoder width at the fusion extent
    int d_base = 16;
    int base_res = 16;            // stage-I output, W0 = H0
    int fusion_spatial_g = 16;    // stage-II fusion extent
    int fusion_spatial_d = 4;     // discriminator fusion extent
    int stage2_residual_blocks = 2;
    real_t lambda_kl = 1;
    bool use_ca = true;      // off: deterministic c from phi, no KL term
    bool text_twice = true;  // off: stage-II generator ignores the caption

    int final_res() const { return base_res * 4; }
    void validate() const;
};

// Conditional discriminator shared by both stages: image trunk of
// downsample blocks to the fusion extent, caption path compressed and
// spatially replicated, 1x1 fusion convolution, scalar logit.
class Discriminator {
public:
    Discriminator(ParamStore& ps, const std::string& prefix, int image_res,
                  const ModelConfig& cfg, RngStream& rng);
    // (B, C, fusion, fusion) image features; also the retrieval features.
    Tensor trunk(const Tensor& image, bool training) const;
    // One logit per (trunk, caption-embedding) pair.
    Tensor score(const Tensor& trunk_features, const Tensor& phi,
                 bool training) const;
    Tensor features(const Tensor& image) const;  // flattened eval trunk

private:
    int image_res_, fusion_;
    std::vector<std::unique_ptr<Block>> downs_;
    Linear text_fc_;
    Conv2dLayer fuse_;
    std::optional<BatchNormLayer> fuse_bn_;
    Linear out_fc_;
};

class StageIGenerator {
public:
    StageIGenerator(ParamStore& ps, const std::string& prefix,
                    const EmbeddingTable& embed, const ModelConfig& cfg,
                    RngStream& rng);
    struct Out {
        Tensor image;      // (B,3,W0,H0) in [-1,1]
        Tensor mu, sigma;  // CA moments (undefined when CA is off)
        Tensor c;
    };
    // eps_rng == nullptr pins the CA draw to its mean.
    Out forward(const Tensor& phi, const Tensor& z, RngStream* eps_rng,
                bool training) const;

private:
    const ModelConfig cfg_;
    std::optional<CAHead> ca_;
    std::optional<Linear> cond_fc_;  // CA-off conditioning path
    Linear seed_fc_;
    BatchNormLayer seed_bn_;
    std::vector<std::unique_ptr<Block>> ups_;
    Conv2dLayer head_;
};

// Encoder-decoder refiner conditioned on the stage-I image and the caption.
class StageIIGenerator {
public:
    StageIIGenerator(ParamStore& ps, const std::string& prefix,
                     const ModelConfig& cfg, RngStream& rng);
    struct Out {
        Tensor image;  // (B,3,4*W0,4*H0)
        Tensor mu, sigma, c;
    };
    Out forward(const Tensor& s0, const Tensor& phi, RngStream* eps_rng,
                bool training) const;

private:
    const ModelConfig cfg_;
    std::optional<CAHead> ca_;
    Conv2dLayer enc_conv_;
    std::vector<std::unique_ptr<Block>> enc_downs_;
    std::optional<JoinBlock> join_;
    std::vector<std::unique_ptr<Block>> plain_res_;  // text-twice off
    std::vector<std::unique_ptr<Block>> dec_ups_;
    Conv2dLayer head_;
};

// The embedding trains jointly with the stage-I generator and stands in for
// a fixed text encoder afterwards: phase 2 freezes every stage-I parameter.
class Model {
public:
    Model(const ModelConfig& cfg, uint64_t seed);

    ModelConfig cfg;
    ParamStore stage1_g_store, stage1_d_store;
    ParamStore stage2_g_store, stage2_d_store;
    std::optional<EmbeddingTable> embed;
    std::optional<StageIGenerator> g0;
    std::optional<Discriminator> d0;
    std::optional<StageIIGenerator> g2;
    std::optional<Discriminator> d2;

    std::vector<ParamStore*> stores();
    Tensor phi_of(const std::vector<data::Caption>& captions) const;
};

// loss = -E log D(real, matched) - 0.5 E log(1-D(real, mismatched))
//        - 0.5 E log(1-D(fake, matched)); fakes must be detached.
Tensor stage_d_loss(const Discriminator& d, const Tensor& real,
                    const Tensor& phi_matched, const Tensor& phi_mismatched,
                    const Tensor& fake, const Tensor& phi_fake,
                    bool training);

// loss = -E log D(fake, phi) + lambda * KL(N(mu, sigma^2) || N(0, I)).
// mu/sigma may be undefined (CA off), dropping the KL term.
Tensor stage_g_loss(const Discriminator& d, const Tensor& fake,
                    const Tensor& phi, const Tensor& mu, const Tensor& sigma,
                    real_t lambda_kl, bool training, real_t* kl_out);

struct TrainConfig {
    int batch = 8;
    int epochs_per_stage = 120;
    real_t lr = static_cast<real_t>(2e-4);
    int lr_halve_every = 20;     // epochs
    int64_t max_steps = -1;      // per-phase cap, -1 unlimited
    uint64_t seed = 1;
    int grid_every = 500;
};

struct StepStats {
    int64_t step = 0;      // generator updates so far (both phases)
    int epoch = 0;
    int phase = 1;
    double d_loss = 0, g_loss = 0, kl = 0;
    double lr = 0;
};

struct TrainHooks {
    std::function<void(const StepStats&)> on_step;
    // Called at grid cadence and at phase ends with eval-mode samples.
    std::function<void(int64_t step, int phase)> on_sample_point;
};

void train(Model& model, const data::DatasetCache& data,
           const TrainConfig& tc, const TrainHooks& hooks);

// Images for interpolated captions: phi walks the segment [phi_a, phi_b],
// z = 0 and the CA draws pinned to their means. Returns stage-II images
// (steps,3,W,H) plus the stage-I sketches.
struct InterpolationResult {
    Tensor stage1;  // (steps,3,W0,H0)
    Tensor stage2;  // (steps,3,4W0,4H0)
};
InterpolationResult interpolate_embeddings(const Model& model,
                                           const Tensor& phi_a,
                                           const Tensor& phi_b, int steps);

}  // namespace ganlab::v1
