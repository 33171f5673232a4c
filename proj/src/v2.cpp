#include "ganlab/v2.hpp"

#include <cmath>

#include "ganlab/gan_losses.hpp"

namespace ganlab::v2 {

Ablation ablation_from_string(const std::string& s) {
    if (s == "full") return Ablation::full;
    if (s == "no_jcu") return Ablation::no_jcu;
    if (s == "g3_only") return Ablation::g3_only;
    if (s == "three_g3") return Ablation::three_g3;
    if (s == "all256") return Ablation::all256;
    throw ConfigError("unknown ablation mode '" + s + "'");
}

std::string ablation_name(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::no_jcu: return "no_jcu";
        case Ablation::g3_only: return "g3_only";
        case Ablation::three_g3: return "three_g3";
        case Ablation::all256: return "all256";
    }
    return "full";
}

std::vector<std::pair<int, int>> ModelConfig::active_heads() const {
    std::vector<std::pair<int, int>> heads;
    switch (ablation) {
        case Ablation::g3_only:
        case Ablation::three_g3:
            heads.emplace_back(branches - 1, top_res());
            break;
        case Ablation::all256:
            for (int i = 0; i < branches; ++i)
                heads.emplace_back(i, top_res());
            break;
        default:
            for (int i = 0; i < branches; ++i)
                heads.emplace_back(i, branch_res(i));
    }
    return heads;
}

void ModelConfig::validate() const {
    if (branches < 1) throw ConfigError("v2: need at least one branch");
    if (embed_dim < 1 || cond_dim < 1 || noise_dim < 1 || g_base < 1 ||
        d_base < 1)
        throw ConfigError("v2: all widths must be positive");
    if (lambda_kl < 0) throw ConfigError("v2: lambda_kl must be >= 0");
    int v = base_res;
    int n = 0;
    while (v > 4 && v % 2 == 0) {
        v /= 2;
        ++n;
    }
    if (v != 4)
        throw ConfigError("v2: base resolution must be 4 times a power of 2");
    // Hidden widths halve at every upsample and must stay even.
    if ((64 * g_base) % (1 << (n + branches - 1)) != 0)
        throw ConfigError("v2: g_base too small for the configured depth");
}

TreeGenerator::TreeGenerator(ParamStore& ps, const std::string& prefix,
                             const ModelConfig& cfg, RngStream& rng)
    : cfg_(cfg) {
    const int join_dim = cfg.conditional ? cfg.cond_dim : cfg.noise_dim;
    const int in_dim =
        cfg.conditional ? cfg.noise_dim + cfg.cond_dim : cfg.noise_dim;
    const int seed_ch = 64 * cfg.g_base;
    seed_fc_ = Linear(ps, prefix + ".seed", in_dim, seed_ch * 16, false, rng);
    seed_bn_ = BatchNormLayer(ps, prefix + ".seed_bn", seed_ch, rng);
    int n0 = 0;
    for (int v = cfg.base_res; v > 4; v /= 2) ++n0;
    int ch = seed_ch;
    for (int i = 0; i < n0; ++i) {
        seed_ups_.push_back(
            Block::build(ps, prefix + ".up" + std::to_string(i),
                         {BlockKind::upsample, ch, ch / 2, true,
                          Activation::relu},
                         rng));
        ch /= 2;
    }
    // ch now carries h0; each later branch joins and upsamples to ch/2.
    for (int i = 1; i < cfg.branches; ++i) {
        joins_.push_back(std::make_unique<JoinBlock>(
            ps, prefix + ".f" + std::to_string(i), ch, join_dim,
            cfg.join_residual_blocks, rng));
        branch_ups_.push_back(
            Block::build(ps, prefix + ".f" + std::to_string(i) + ".up",
                         {BlockKind::upsample, ch + join_dim, ch / 2, true,
                          Activation::relu},
                         rng));
        ch /= 2;
    }
    for (auto [branch, res] : cfg.active_heads()) {
        Head head;
        head.branch = branch;
        head.upsample_factor = res / cfg.branch_res(branch);
        head.conv = Conv2dLayer(
            ps, prefix + ".g" + std::to_string(branch) + ".head",
            (64 * cfg.g_base >> n0) >> branch, 3, 3, 1, 1, true, rng);
        heads_.push_back(std::move(head));
    }
}

std::vector<Tensor> TreeGenerator::forward(const Tensor& input,
                                           const Tensor& join_vec,
                                           bool training) const {
    Tensor h = seed_fc_.forward(input);
    h = reshape(h, {h.dim(0), h.dim(1) / 16, 4, 4});
    h = relu(seed_bn_.forward(h, training));
    for (const auto& b : seed_ups_) h = b->forward(h, training);

    std::vector<Tensor> hidden;  // h_i per branch
    hidden.push_back(h);
    for (size_t i = 0; i < joins_.size(); ++i) {
        Tensor joined = joins_[i]->forward(hidden.back(), join_vec, training);
        hidden.push_back(branch_ups_[i]->forward(joined, training));
    }

    std::vector<Tensor> images;
    for (const auto& head : heads_) {
        Tensor feat = hidden[static_cast<size_t>(head.branch)];
        if (head.upsample_factor > 1)
            feat = nearest_upsample(feat, head.upsample_factor);
        images.push_back(tanh_op(head.conv.forward(feat)));
    }
    return images;
}

BranchDiscriminator::BranchDiscriminator(ParamStore& ps,
                                         const std::string& prefix,
                                         int image_res,
                                         const ModelConfig& cfg,
                                         RngStream& rng)
    : image_res_(image_res),
      has_uncond_(cfg.uncond_head()),
      has_cond_(cfg.cond_head()) {
    int n = 0;
    for (int v = image_res; v > 4; v /= 2) ++n;
    if ((4 << n) != image_res)
        throw ConfigError("discriminator resolution " +
                          std::to_string(image_res) +
                          " is not 4 times a power of 2");
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
    const int trunk_ch = 8 * cfg.d_base;
    if (ch != trunk_ch) {
        squeeze_.emplace(ps, prefix + ".squeeze", ch, trunk_ch, 3, 1, 1,
                         false, rng);
        squeeze_bn_.emplace(ps, prefix + ".squeeze_bn", trunk_ch, rng);
    }
    if (has_uncond_)
        u_fc_ = Linear(ps, prefix + ".u_out", trunk_ch * 16, 1, true, rng);
    if (has_cond_) {
        c_fuse_ = Conv2dLayer(ps, prefix + ".c_fuse", trunk_ch + cfg.cond_dim,
                              trunk_ch, 1, 1, 0, false, rng);
        c_fuse_bn_.emplace(ps, prefix + ".c_fuse_bn", trunk_ch, rng);
        c_fc_ = Linear(ps, prefix + ".c_out", trunk_ch * 16, 1, true, rng);
    }
}

Tensor BranchDiscriminator::trunk(const Tensor& image, bool training) const {
    if (image.rank() != 4 || image.dim(1) != 3 ||
        image.dim(2) != image_res_ || image.dim(3) != image_res_)
        throw ShapeError("branch discriminator expects (B,3," +
                         std::to_string(image_res_) + "," +
                         std::to_string(image_res_) + "), got " +
                         shape_str(image.shape()));
    Tensor h = image;
    for (const auto& b : downs_) h = b->forward(h, training);
    if (squeeze_)
        h = leaky_relu(squeeze_bn_->forward(squeeze_->forward(h), training));
    return h;
}

Tensor BranchDiscriminator::uncond_logit(const Tensor& trunk_features,
                                         bool) const {
    if (!has_uncond_)
        throw Error("discriminator has no unconditional head");
    return u_fc_.forward(flatten_batch(trunk_features));
}

Tensor BranchDiscriminator::cond_logit(const Tensor& trunk_features,
                                       const Tensor& c, bool training) const {
    if (!has_cond_) throw Error("discriminator has no conditional head");
    Tensor joint = concat_dim1(trunk_features, spatial_replicate(c, 4));
    joint = leaky_relu(c_fuse_bn_->forward(c_fuse_.forward(joint), training));
    return c_fc_.forward(flatten_batch(joint));
}

Tensor BranchDiscriminator::features(const Tensor& image) const {
    return flatten_batch(trunk(image, false));
}

namespace {

// Population covariance of the pixel colors of each image, one custom tape
// node. For upstream gradient G: d/dx_k = (G + G^T)(x_k - mu) / N; the mean
// path cancels inside the covariance, the separate mean node carries it.
Tensor pixel_covariance(const Tensor& image) {
    const int b = image.dim(0);
    const int64_t hw =
        static_cast<int64_t>(image.dim(2)) * image.dim(3);
    Tensor mu = Tensor::zeros({b, 3});
    Tensor cov = Tensor::zeros({b, 3, 3});
    for (int bb = 0; bb < b; ++bb) {
        const real_t* px = image.data() + static_cast<int64_t>(bb) * 3 * hw;
        double m[3] = {0, 0, 0};
        for (int c = 0; c < 3; ++c) {
            for (int64_t i = 0; i < hw; ++i) m[c] += px[c * hw + i];
            m[c] /= static_cast<double>(hw);
            mu.mutable_data()[bb * 3 + c] = static_cast<real_t>(m[c]);
        }
        for (int c1 = 0; c1 < 3; ++c1)
            for (int c2 = c1; c2 < 3; ++c2) {
                double s = 0;
                for (int64_t i = 0; i < hw; ++i)
                    s += (px[c1 * hw + i] - m[c1]) * (px[c2 * hw + i] - m[c2]);
                const real_t v =
                    static_cast<real_t>(s / static_cast<double>(hw));
                cov.mutable_data()[(bb * 3 + c1) * 3 + c2] = v;
                cov.mutable_data()[(bb * 3 + c2) * 3 + c1] = v;
            }
    }
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(image) : -1;
    if (ix >= 0)
        tp->record(cov, [ix, image, mu, b, hw](Tape& t, const real_t* g) {
            real_t* gx = t.grad_accum(ix);
            if (!gx) return;
            for (int bb = 0; bb < b; ++bb) {
                const real_t* px =
                    image.data() + static_cast<int64_t>(bb) * 3 * hw;
                real_t* gp = gx + static_cast<int64_t>(bb) * 3 * hw;
                const real_t* G = g + static_cast<int64_t>(bb) * 9;
                const real_t* m = mu.data() + bb * 3;
                real_t S[3][3];
                for (int c1 = 0; c1 < 3; ++c1)
                    for (int c2 = 0; c2 < 3; ++c2)
                        S[c1][c2] = (G[c1 * 3 + c2] + G[c2 * 3 + c1]) /
                                    static_cast<real_t>(hw);
                for (int64_t i = 0; i < hw; ++i) {
                    const real_t d0 = px[0 * hw + i] - m[0];
                    const real_t d1 = px[1 * hw + i] - m[1];
                    const real_t d2 = px[2 * hw + i] - m[2];
                    gp[0 * hw + i] += S[0][0] * d0 + S[0][1] * d1 + S[0][2] * d2;
                    gp[1 * hw + i] += S[1][0] * d0 + S[1][1] * d1 + S[1][2] * d2;
                    gp[2 * hw + i] += S[2][0] * d0 + S[2][1] * d1 + S[2][2] * d2;
                }
            }
        });
    return cov;
}

}  // namespace

ColorStats color_stats(const Tensor& image) {
    if (image.rank() != 4 || image.dim(1) != 3)
        throw ShapeError("color_stats: expected (B,3,H,W), got " +
                         shape_str(image.shape()));
    return {spatial_mean(image), pixel_covariance(image)};
}

Tensor color_consistency_loss(const Tensor& s_a, const Tensor& s_b,
                              real_t lambda1, real_t lambda2) {
    if (s_a.dim(0) != s_b.dim(0))
        throw ShapeError("color consistency: batch sizes differ");
    const ColorStats a = color_stats(s_a);
    const ColorStats b = color_stats(s_b);
    const real_t inv_batch = real_t(1) / static_cast<real_t>(s_a.dim(0));
    Tensor dm = sub(a.mu, b.mu);
    Tensor dc = sub(a.cov, b.cov);
    Tensor loss = scale(sum_all(mul(dm, dm)), lambda1 * inv_batch);
    return add(loss, scale(sum_all(mul(dc, dc)), lambda2 * inv_batch));
}

Model::Model(const ModelConfig& config, uint64_t seed) : cfg(config) {
    cfg.validate();
    RngStream init_g(seed, 1);
    if (cfg.conditional) {
        embed.emplace(g_store, "v2.embed", data::kVocabSize, cfg.embed_dim,
                      init_g);
        ca.emplace(g_store, "v2.ca", cfg.embed_dim, cfg.cond_dim, init_g);
    }
    gen.emplace(g_store, "v2.g", cfg, init_g);

    const auto heads = cfg.active_heads();
    std::vector<std::pair<int, int>> d_plan;  // (resolution, fake index)
    if (cfg.ablation == Ablation::three_g3) {
        for (int i = 0; i < 3; ++i) d_plan.emplace_back(cfg.top_res(), 0);
    } else {
        for (size_t i = 0; i < heads.size(); ++i)
            d_plan.emplace_back(heads[i].second, static_cast<int>(i));
    }
    for (size_t i = 0; i < d_plan.size(); ++i) {
        d_stores.push_back(std::make_unique<ParamStore>());
        RngStream init_d(seed, 100 + i);  // distinct initializations
        ds.push_back(std::make_unique<BranchDiscriminator>(
            *d_stores.back(), "v2.d" + std::to_string(i), d_plan[i].first,
            cfg, init_d));
        wiring.push_back({d_plan[i].first, d_plan[i].second});
    }
}

std::vector<ParamStore*> Model::stores() {
    std::vector<ParamStore*> out = {&g_store};
    for (auto& d : d_stores) out.push_back(d.get());
    return out;
}

Tensor Model::phi_of(const std::vector<data::Caption>& captions) const {
    std::vector<std::vector<int>> ids;
    ids.reserve(captions.size());
    for (const auto& c : captions) {
        if (!c.defined())
            throw DataError("conditional generation requires captions");
        ids.push_back(c.vocab_ids());
    }
    return embed->forward(ids);
}

Model::GenOut Model::generate(int batch,
                              const std::vector<data::Caption>* captions,
                              RngStream* z_rng, RngStream* eps_rng,
                              bool training) const {
    if (cfg.conditional && !captions)
        throw ConfigError("conditional model: captions are required");
    if (!cfg.conditional && captions)
        throw ConfigError("unconditional model: captions were supplied");
    Tensor z = Tensor::zeros({batch, cfg.noise_dim});
    if (z_rng)
        for (int64_t i = 0; i < z.size(); ++i)
            z.mutable_data()[i] = static_cast<real_t>(z_rng->normal());
    GenOut out;
    Tensor input = z, join_vec = z;
    if (cfg.conditional) {
        Tensor phi = phi_of(*captions);
        auto draw = ca->sample(phi, eps_rng);
        out.c = draw.c;
        out.mu = draw.mu;
        out.sigma = draw.sigma;
        input = concat_dim1(draw.c, z);
        join_vec = draw.c;
    }
    out.images = gen->forward(input, join_vec, training);
    return out;
}

Tensor branch_d_loss(const BranchDiscriminator& d, const Tensor& real,
                     const Tensor& fake, const Tensor& c,
                     const Tensor& c_mismatched, bool training) {
    if (real.dim(0) != fake.dim(0))
        throw ShapeError("branch_d_loss: real and fake batch sizes differ");
    Tensor trunk_r = d.trunk(real, training);
    Tensor trunk_f = d.trunk(fake, training);
    Tensor loss;
    if (d.has_uncond()) {
        loss = add(adversarial_real(d.uncond_logit(trunk_r, training)),
                   adversarial_fake(d.uncond_logit(trunk_f, training)));
    }
    if (d.has_cond()) {
        if (!c.defined() || !c_mismatched.defined())
            throw ConfigError("branch_d_loss: conditional head needs c and "
                              "a mismatched c");
        Tensor cond =
            adversarial_real(d.cond_logit(trunk_r, c, training));
        cond = add(cond, scale(adversarial_fake(d.cond_logit(
                                   trunk_r, c_mismatched, training)),
                               static_cast<real_t>(0.5)));
        cond = add(cond, scale(adversarial_fake(
                                   d.cond_logit(trunk_f, c, training)),
                               static_cast<real_t>(0.5)));
        loss = loss.defined() ? add(loss, cond) : cond;
    }
    return loss;
}

Tensor joint_g_loss(const Model& model, const std::vector<Tensor>& fakes,
                    const Tensor& c, real_t alpha, real_t lambda1,
                    real_t lambda2, bool training, real_t* color_out) {
    Tensor loss;
    for (size_t i = 0; i < model.ds.size(); ++i) {
        const BranchDiscriminator& d = *model.ds[i];
        const Tensor& fake =
            fakes[static_cast<size_t>(model.wiring[i].fake_index)];
        Tensor trunk = d.trunk(fake, training);
        if (d.has_uncond()) {
            Tensor t = adversarial_real(d.uncond_logit(trunk, training));
            loss = loss.defined() ? add(loss, t) : t;
        }
        if (d.has_cond()) {
            Tensor t = adversarial_real(d.cond_logit(trunk, c, training));
            loss = loss.defined() ? add(loss, t) : t;
        }
    }
    if (color_out) *color_out = 0;
    if (fakes.size() > 1) {
        Tensor color;
        for (size_t i = 1; i < fakes.size(); ++i) {
            Tensor t = color_consistency_loss(fakes[i], fakes[i - 1],
                                              lambda1, lambda2);
            color = color.defined() ? add(color, t) : t;
        }
        if (color_out) *color_out = color.item();
        if (alpha != 0) loss = add(loss, scale(color, alpha));
    }
    return loss;
}

namespace {

std::vector<int> dataset_levels(const Model& model,
                                const data::DatasetCache& data) {
    std::vector<int> levels;
    for (const auto& w : model.wiring)
        levels.push_back(data.manifest().level_of(w.d_resolution));
    return levels;
}

}  // namespace

void train(Model& model, const data::DatasetCache& data,
           const TrainConfig& tc, const TrainHooks& hooks) {
    if (model.cfg.conditional && !data.conditional())
        throw ConfigError("conditional training needs a captioned dataset");
    if (static_cast<size_t>(tc.batch) > data.train_size())
        throw ConfigError("dataset smaller than one batch");
    const auto levels = dataset_levels(model, data);
    const int batches_per_epoch =
        std::max<int>(1, static_cast<int>(data.train_size()) / tc.batch);

    RngStream rng_data(tc.seed, 20);
    RngStream rng_z(tc.seed, 21);
    RngStream rng_eps(tc.seed, 22);
    RngStream rng_eps_mis(tc.seed, 23);

    AdamConfig adam;
    adam.lr = tc.lr;
    auto gparams = model.g_store.parameters();
    std::vector<std::vector<Parameter*>> dparams;
    for (auto& store : model.d_stores)
        dparams.push_back(store->parameters());

    for (int64_t step = 1; step <= tc.steps; ++step) {
        auto batch = data.sample_batch(tc.batch, rng_data);

        // Generator forward once; the tape later extends through the
        // discriminators for the generator update.
        Tape tape_g;
        Model::GenOut gen_out;
        {
            TapeScope scope(tape_g);
            gen_out = model.generate(
                tc.batch,
                model.cfg.conditional ? &batch.captions : nullptr, &rng_z,
                &rng_eps, true);
        }
        // Mismatched conditions are constants for every loss.
        Tensor c_mis;
        if (model.cfg.conditional)
            c_mis = model.ca
                        ->sample(model.phi_of(batch.mismatched),
                                 &rng_eps_mis)
                        .c;
        Tensor c_det =
            gen_out.c.defined() ? gen_out.c.detach() : Tensor();

        // Per-branch discriminator updates on detached fakes.
        std::vector<double> d_losses;
        model.g_store.set_trainable(false);
        for (size_t i = 0; i < model.ds.size(); ++i) {
            Tape tape_d;
            TapeScope scope(tape_d);
            const Tensor& real =
                batch.pyramid[static_cast<size_t>(levels[i])];
            const Tensor fake =
                gen_out.images[static_cast<size_t>(model.wiring[i]
                                                       .fake_index)]
                    .detach();
            Tensor dl = branch_d_loss(*model.ds[i], real, fake, c_det, c_mis,
                                      true);
            d_losses.push_back(dl.item());
            tape_d.backward(dl, dparams[i]);
            adam_step(dparams[i], adam);
        }
        model.g_store.set_trainable(true);

        // Joint generator update through the refreshed discriminators.
        double g_loss_v;
        real_t color_v = 0, kl_v = 0;
        {
            for (auto& store : model.d_stores) store->set_trainable(false);
            TapeScope scope(tape_g);
            Tensor gl =
                joint_g_loss(model, gen_out.images, gen_out.c, tc.alpha,
                             tc.lambda1, tc.lambda2, true, &color_v);
            if (model.cfg.conditional && model.cfg.lambda_kl > 0) {
                Tensor kl = kl_standard_normal(gen_out.mu, gen_out.sigma);
                kl_v = kl.item();
                gl = add(gl, scale(kl, model.cfg.lambda_kl));
            }
            g_loss_v = gl.item();
            tape_g.backward(gl, gparams);
            adam_step(gparams, adam);
            for (auto& store : model.d_stores) store->set_trainable(true);
        }

        if (hooks.on_step) {
            StepStats st;
            st.step = step;
            st.epoch = static_cast<int>((step - 1) / batches_per_epoch);
            st.d_losses = d_losses;
            st.g_loss = g_loss_v;
            st.kl = kl_v;
            st.color = color_v;
            st.lr = adam.lr;
            hooks.on_step(st);
        }
        if (hooks.on_sample_point && tc.grid_every > 0 &&
            step % tc.grid_every == 0)
            hooks.on_sample_point(step);
    }
    if (hooks.on_sample_point) hooks.on_sample_point(tc.steps);
}

}  // namespace ganlab::v2
