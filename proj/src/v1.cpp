#include "ganlab/v1.hpp"

#include <cmath>

#include "ganlab/gan_losses.hpp"

namespace ganlab::v1 {

namespace {

int log2_exact(int a, int b, const char* what) {
    int n = 0, v = a;
    while (v > b) {
        if (v % 2) break;
        v /= 2;
        ++n;
    }
    if (v != b)
        throw ConfigError(std::string(what) + ": " + std::to_string(a) +
                          " is not " + std::to_string(b) +
                          " times a power of two");
    return n;
}

}  // namespace

void ModelConfig::validate() const {
    if (embed_dim < 1 || cond_dim < 1 || noise_dim < 1 || d_text_dim < 1 ||
        g_base < 1 || g2_base < 1 || d_base < 1)
        throw ConfigError("v1: all widths must be positive");
    if (lambda_kl < 0) throw ConfigError("v1: lambda_kl must be >= 0");
    log2_exact(base_res, 4, "v1 base resolution");
    log2_exact(base_res, fusion_spatial_g, "v1 stage-II fusion");
    log2_exact(base_res, fusion_spatial_d, "v1 stage-I discriminator fusion");
    log2_exact(final_res(), fusion_spatial_d,
               "v1 stage-II discriminator fusion");
}

Discriminator::Discriminator(ParamStore& ps, const std::string& prefix,
                             int image_res, const ModelConfig& cfg,
                             RngStream& rng)
    : image_res_(image_res), fusion_(cfg.fusion_spatial_d) {
    const int n = log2_exact(image_res, fusion_, "discriminator input");
    int ch = 3;
    for (int i = 0; i < n; ++i) {
        const int out = cfg.d_base << i;
        downs_.push_back(Block::build(
            ps, prefix + ".down" + std::to_string(i),
            {BlockKind::downsample, ch, out, /*bn=*/i != 0,
             Activation::leaky_relu},
            rng));
        ch = out;
    }
    text_fc_ = Linear(ps, prefix + ".text", cfg.embed_dim, cfg.d_text_dim,
                      true, rng);
    fuse_ = Conv2dLayer(ps, prefix + ".fuse", ch + cfg.d_text_dim, ch, 1, 1,
                        0, false, rng);
    fuse_bn_.emplace(ps, prefix + ".fuse_bn", ch, rng);
    out_fc_ = Linear(ps, prefix + ".out", ch * fusion_ * fusion_, 1, true,
                     rng);
}

Tensor Discriminator::trunk(const Tensor& image, bool training) const {
    if (image.rank() != 4 || image.dim(1) != 3 ||
        image.dim(2) != image_res_ || image.dim(3) != image_res_)
        throw ShapeError("discriminator expects (B,3," +
                         std::to_string(image_res_) + "," +
                         std::to_string(image_res_) + "), got " +
                         shape_str(image.shape()));
    Tensor h = image;
    for (const auto& b : downs_) h = b->forward(h, training);
    return h;
}

Tensor Discriminator::score(const Tensor& trunk_features, const Tensor& phi,
                            bool training) const {
    Tensor text = leaky_relu(text_fc_.forward(phi));
    Tensor joint =
        concat_dim1(trunk_features, spatial_replicate(text, fusion_));
    joint = leaky_relu(fuse_bn_->forward(fuse_.forward(joint), training));
    return out_fc_.forward(flatten_batch(joint));
}

Tensor Discriminator::features(const Tensor& image) const {
    return flatten_batch(trunk(image, false));
}

StageIGenerator::StageIGenerator(ParamStore& ps, const std::string& prefix,
                                 const EmbeddingTable& embed,
                                 const ModelConfig& cfg, RngStream& rng)
    : cfg_(cfg) {
    if (cfg.use_ca)
        ca_.emplace(ps, prefix + ".ca", embed.dim(), cfg.cond_dim, rng);
    else
        cond_fc_.emplace(ps, prefix + ".cond", embed.dim(), cfg.cond_dim,
                         true, rng);
    const int n = log2_exact(cfg.base_res, 4, "stage-I resolution");
    const int seed_ch = cfg.g_base << n;
    seed_fc_ = Linear(ps, prefix + ".seed", cfg.cond_dim + cfg.noise_dim,
                      seed_ch * 16, false, rng);
    seed_bn_ = BatchNormLayer(ps, prefix + ".seed_bn", seed_ch, rng);
    int ch = seed_ch;
    for (int i = 0; i < n; ++i) {
        ups_.push_back(Block::build(ps, prefix + ".up" + std::to_string(i),
                                    {BlockKind::upsample, ch, ch / 2, true,
                                     Activation::relu},
                                    rng));
        ch /= 2;
    }
    head_ = Conv2dLayer(ps, prefix + ".head", ch, 3, 3, 1, 1, true, rng);
}

StageIGenerator::Out StageIGenerator::forward(const Tensor& phi,
                                              const Tensor& z,
                                              RngStream* eps_rng,
                                              bool training) const {
    if (z.rank() != 2 || z.dim(1) != cfg_.noise_dim)
        throw ShapeError("stage-I: noise must be (B," +
                         std::to_string(cfg_.noise_dim) + "), got " +
                         shape_str(z.shape()));
    Out out;
    if (ca_) {
        auto draw = ca_->sample(phi, eps_rng);
        out.c = draw.c;
        out.mu = draw.mu;
        out.sigma = draw.sigma;
    } else {
        out.c = cond_fc_->forward(phi);
    }
    Tensor h = seed_fc_.forward(concat_dim1(out.c, z));
    h = reshape(h, {h.dim(0), h.dim(1) / 16, 4, 4});
    h = relu(seed_bn_.forward(h, training));
    for (const auto& b : ups_) h = b->forward(h, training);
    out.image = tanh_op(head_.forward(h));
    return out;
}

StageIIGenerator::StageIIGenerator(ParamStore& ps, const std::string& prefix,
                                   const ModelConfig& cfg, RngStream& rng)
    : cfg_(cfg) {
    const int n_enc =
        log2_exact(cfg.base_res, cfg.fusion_spatial_g, "stage-II encoder");
    const int enc0 = std::max(1, cfg.g2_base >> n_enc);
    enc_conv_ = Conv2dLayer(ps, prefix + ".enc", 3, enc0, 3, 1, 1, true, rng);
    int ch = enc0;
    for (int i = 0; i < n_enc; ++i) {
        enc_downs_.push_back(
            Block::build(ps, prefix + ".enc_down" + std::to_string(i),
                         {BlockKind::downsample, ch, ch * 2, true,
                          Activation::leaky_relu},
                         rng));
        ch *= 2;
    }
    int width = ch;
    if (cfg.text_twice) {
        ca_.emplace(ps, prefix + ".ca", cfg.embed_dim, cfg.cond_dim, rng);
        join_.emplace(ps, prefix + ".join", ch, cfg.cond_dim,
                      cfg.stage2_residual_blocks, rng);
        width = join_->out_channels();
    } else {
        for (int i = 0; i < cfg.stage2_residual_blocks; ++i)
            plain_res_.push_back(
                Block::build(ps, prefix + ".res" + std::to_string(i),
                             {BlockKind::residual, ch, ch, true,
                              Activation::relu},
                             rng));
    }
    const int n_dec =
        log2_exact(cfg.final_res(), cfg.fusion_spatial_g, "stage-II decoder");
    for (int i = 0; i < n_dec; ++i) {
        if (width % 2)
            throw ConfigError("stage-II decoder width " +
                              std::to_string(width) + " is not even");
        dec_ups_.push_back(
            Block::build(ps, prefix + ".dec" + std::to_string(i),
                         {BlockKind::upsample, width, width / 2, true,
                          Activation::relu},
                         rng));
        width /= 2;
    }
    head_ = Conv2dLayer(ps, prefix + ".head", width, 3, 3, 1, 1, true, rng);
}

StageIIGenerator::Out StageIIGenerator::forward(const Tensor& s0,
                                                const Tensor& phi,
                                                RngStream* eps_rng,
                                                bool training) const {
    if (s0.rank() != 4 || s0.dim(1) != 3 || s0.dim(2) != cfg_.base_res ||
        s0.dim(3) != cfg_.base_res)
        throw ShapeError("stage-II expects a (B,3," +
                         std::to_string(cfg_.base_res) + "," +
                         std::to_string(cfg_.base_res) +
                         ") stage-I batch, got " + shape_str(s0.shape()));
    Out out;
    Tensor h = relu(enc_conv_.forward(s0));
    for (const auto& b : enc_downs_) h = b->forward(h, training);
    if (ca_) {
        auto draw = ca_->sample(phi, eps_rng);
        out.c = draw.c;
        out.mu = draw.mu;
        out.sigma = draw.sigma;
        h = join_->forward(h, draw.c, training);
    } else {
        for (const auto& b : plain_res_) h = b->forward(h, training);
    }
    for (const auto& b : dec_ups_) h = b->forward(h, training);
    out.image = tanh_op(head_.forward(h));
    return out;
}

Model::Model(const ModelConfig& config, uint64_t seed) : cfg(config) {
    cfg.validate();
    RngStream init_g1(seed, 1), init_d1(seed, 2), init_g2(seed, 3),
        init_d2(seed, 4);
    embed.emplace(stage1_g_store, "v1.embed", data::kVocabSize,
                  cfg.embed_dim, init_g1);
    g0.emplace(stage1_g_store, "v1.g0", *embed, cfg, init_g1);
    d0.emplace(stage1_d_store, "v1.d0", cfg.base_res, cfg, init_d1);
    g2.emplace(stage2_g_store, "v1.g2", cfg, init_g2);
    d2.emplace(stage2_d_store, "v1.d2", cfg.final_res(), cfg, init_d2);
}

std::vector<ParamStore*> Model::stores() {
    return {&stage1_g_store, &stage1_d_store, &stage2_g_store,
            &stage2_d_store};
}

Tensor Model::phi_of(const std::vector<data::Caption>& captions) const {
    std::vector<std::vector<int>> ids;
    ids.reserve(captions.size());
    for (const auto& c : captions) {
        if (!c.defined())
            throw DataError("v1 training requires captioned samples");
        ids.push_back(c.vocab_ids());
    }
    return embed->forward(ids);
}

Tensor stage_d_loss(const Discriminator& d, const Tensor& real,
                    const Tensor& phi_matched, const Tensor& phi_mismatched,
                    const Tensor& fake, const Tensor& phi_fake,
                    bool training) {
    if (real.dim(0) != fake.dim(0))
        throw ShapeError("stage_d_loss: real and fake batch sizes differ");
    Tensor trunk_r = d.trunk(real, training);
    Tensor trunk_f = d.trunk(fake, training);
    Tensor loss = adversarial_real(d.score(trunk_r, phi_matched, training));
    loss = add(loss, scale(adversarial_fake(
                               d.score(trunk_r, phi_mismatched, training)),
                           static_cast<real_t>(0.5)));
    loss = add(loss, scale(adversarial_fake(
                               d.score(trunk_f, phi_fake, training)),
                           static_cast<real_t>(0.5)));
    return loss;
}

Tensor stage_g_loss(const Discriminator& d, const Tensor& fake,
                    const Tensor& phi, const Tensor& mu, const Tensor& sigma,
                    real_t lambda_kl, bool training, real_t* kl_out) {
    Tensor loss =
        adversarial_real(d.score(d.trunk(fake, training), phi, training));
    if (kl_out) *kl_out = 0;
    if (mu.defined() && sigma.defined()) {
        Tensor kl = kl_standard_normal(mu, sigma);
        if (kl_out) *kl_out = kl.item();
        loss = add(loss, scale(kl, lambda_kl));
    }
    return loss;
}

namespace {

Tensor draw_noise(int batch, int dim, RngStream& rng) {
    Tensor z = Tensor::zeros({batch, dim});
    for (int64_t i = 0; i < z.size(); ++i)
        z.mutable_data()[i] = static_cast<real_t>(rng.normal());
    return z;
}

}  // namespace

void train(Model& model, const data::DatasetCache& data,
           const TrainConfig& tc, const TrainHooks& hooks) {
    if (!data.conditional())
        throw ConfigError("v1 training needs a captioned dataset");
    const int batches_per_epoch =
        static_cast<int>(data.train_size()) / tc.batch;
    if (batches_per_epoch < 1)
        throw ConfigError("dataset smaller than one batch");
    const int lo_level = data.manifest().level_of(model.cfg.base_res);
    const int hi_level = data.manifest().level_of(model.cfg.final_res());

    const AdamConfig adam_base;
    int64_t gstep = 0;
    for (int phase = 1; phase <= 2; ++phase) {
        RngStream rng_data(tc.seed, 10 + 8ull * phase);
        RngStream rng_z(tc.seed, 11 + 8ull * phase);
        RngStream rng_eps(tc.seed, 12 + 8ull * phase);
        ParamStore& gstore =
            phase == 1 ? model.stage1_g_store : model.stage2_g_store;
        ParamStore& dstore =
            phase == 1 ? model.stage1_d_store : model.stage2_d_store;
        auto gparams = gstore.parameters();
        auto dparams = dstore.parameters();
        if (phase == 2) model.stage1_g_store.set_trainable(false);

        int64_t phase_steps = 0;
        bool done = false;
        for (int epoch = 0; epoch < tc.epochs_per_stage && !done; ++epoch) {
            AdamConfig adam = adam_base;
            adam.lr = tc.lr *
                      static_cast<real_t>(std::pow(
                          0.5, epoch / std::max(1, tc.lr_halve_every)));
            for (int it = 0; it < batches_per_epoch && !done; ++it) {
                auto batch = data.sample_batch(tc.batch, rng_data);
                Tensor z = draw_noise(tc.batch, model.cfg.noise_dim, rng_z);

                // One generator forward serves both the discriminator step
                // (detached) and the generator step (attached).
                Tape tape_g;
                Tensor fake, mu, sigma, phi_g;
                if (phase == 1) {
                    TapeScope scope(tape_g);
                    phi_g = model.phi_of(batch.captions);
                    auto out = model.g0->forward(phi_g, z, &rng_eps, true);
                    fake = out.image;
                    mu = out.mu;
                    sigma = out.sigma;
                } else {
                    // Frozen stage-I sketch, inference mode, no tape.
                    Tensor phi0 = model.phi_of(batch.captions);
                    Tensor s0 =
                        model.g0->forward(phi0, z, &rng_eps, false).image;
                    TapeScope scope(tape_g);
                    phi_g = model.phi_of(batch.captions);
                    auto out = model.g2->forward(s0, phi_g, &rng_eps, true);
                    fake = out.image;
                    mu = out.mu;
                    sigma = out.sigma;
                }
                const Discriminator& d = phase == 1 ? *model.d0 : *model.d2;
                const Tensor& real = batch.pyramid[static_cast<size_t>(
                    phase == 1 ? lo_level : hi_level)];

                // Discriminator step on detached fakes; generator-side
                // parameters are frozen so no gradient work is spent there.
                double d_loss_v;
                {
                    model.stage1_g_store.set_trainable(false);
                    model.stage2_g_store.set_trainable(false);
                    Tape tape_d;
                    TapeScope scope(tape_d);
                    Tensor phi_m = model.phi_of(batch.captions);
                    Tensor phi_mis = model.phi_of(batch.mismatched);
                    Tensor dl = stage_d_loss(d, real, phi_m, phi_mis,
                                             fake.detach(), phi_m, true);
                    d_loss_v = dl.item();
                    tape_d.backward(dl, dparams);
                    adam_step(dparams, adam);
                    model.stage2_g_store.set_trainable(true);
                    if (phase == 1) model.stage1_g_store.set_trainable(true);
                }

                // Generator step through the updated discriminator.
                double g_loss_v;
                real_t kl_v = 0;
                {
                    dstore.set_trainable(false);
                    TapeScope scope(tape_g);
                    Tensor gl =
                        stage_g_loss(d, fake, phi_g, mu, sigma,
                                     model.cfg.lambda_kl, true, &kl_v);
                    g_loss_v = gl.item();
                    tape_g.backward(gl, gparams);
                    adam_step(gparams, adam);
                    dstore.set_trainable(true);
                }

                ++gstep;
                ++phase_steps;
                if (hooks.on_step) {
                    StepStats st;
                    st.step = gstep;
                    st.epoch = epoch;
                    st.phase = phase;
                    st.d_loss = d_loss_v;
                    st.g_loss = g_loss_v;
                    st.kl = kl_v;
                    st.lr = adam.lr;
                    hooks.on_step(st);
                }
                if (hooks.on_sample_point && tc.grid_every > 0 &&
                    gstep % tc.grid_every == 0)
                    hooks.on_sample_point(gstep, phase);
                done = tc.max_steps >= 0 && phase_steps >= tc.max_steps;
            }
        }
        if (hooks.on_sample_point) hooks.on_sample_point(gstep, phase);
        if (phase == 2) model.stage1_g_store.set_trainable(true);
    }
}

InterpolationResult interpolate_embeddings(const Model& model,
                                           const Tensor& phi_a,
                                           const Tensor& phi_b, int steps) {
    if (steps < 2)
        throw ConfigError("interpolation needs at least two steps");
    if (phi_a.size() != phi_b.size() || phi_a.size() != model.cfg.embed_dim)
        throw ShapeError("interpolation endpoints must be embedding vectors");
    Tensor phi = Tensor::zeros({steps, model.cfg.embed_dim});
    for (int s = 0; s < steps; ++s) {
        const real_t t =
            static_cast<real_t>(s) / static_cast<real_t>(steps - 1);
        for (int j = 0; j < model.cfg.embed_dim; ++j)
            phi.mutable_data()[static_cast<int64_t>(s) * model.cfg.embed_dim +
                               j] =
                phi_a.data()[j] + t * (phi_b.data()[j] - phi_a.data()[j]);
    }
    Tensor z = Tensor::zeros({steps, model.cfg.noise_dim});
    InterpolationResult out;
    out.stage1 = model.g0->forward(phi, z, nullptr, false).image;
    out.stage2 = model.g2->forward(out.stage1, phi, nullptr, false).image;
    return out;
}

}  // namespace ganlab::v1
