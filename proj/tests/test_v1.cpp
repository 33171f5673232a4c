#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ganlab/gan_losses.hpp"
#include "ganlab/v1.hpp"

using namespace ganlab;
using namespace ganlab::v1;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.embed_dim = 16;
    cfg.cond_dim = 8;
    cfg.noise_dim = 8;
    cfg.d_text_dim = 8;
    cfg.g_base = 8;
    cfg.g2_base = 8;
    cfg.d_base = 8;
    return cfg;
}

Tensor noise(int b, int d, RngStream& rng) {
    Tensor z = Tensor::zeros({b, d});
    for (int64_t i = 0; i < z.size(); ++i)
        z.mutable_data()[i] = static_cast<real_t>(rng.normal());
    return z;
}

std::vector<data::Caption> captions(std::initializer_list<int> classes) {
    std::vector<data::Caption> out;
    for (int c : classes) out.push_back(data::caption_from_class(c));
    return out;
}

void zero_params(ParamStore& ps) {
    for (Parameter* p : ps.parameters())
        for (int64_t i = 0; i < p->value.size(); ++i)
            p->value.mutable_data()[i] = 0;
}

const data::DatasetCache& shared_dataset() {
    static const data::DatasetCache* cache = [] {
        const auto dir = fs::temp_directory_path() / "ganlab_v1_data";
        fs::remove_all(dir);
        auto m = data::generate_dataset(120, 17, {16, 32, 64}, dir.string());
        return new data::DatasetCache(m);
    }();
    return *cache;
}

}  // namespace

TEST_CASE("stage-I output shape, range, determinism, nondegeneracy") {
    Model model(tiny_cfg(), 5);
    RngStream rng(9, 0);
    auto caps = captions({0, 7, 13});
    Tensor phi = model.phi_of(caps);
    Tensor z = noise(3, model.cfg.noise_dim, rng);
    auto a = model.g0->forward(phi, z, nullptr, false);
    CHECK(a.image.shape() == Shape{3, 3, 16, 16});
    for (int64_t i = 0; i < a.image.size(); ++i) {
        CHECK(a.image.data()[i] <= 1);
        CHECK(a.image.data()[i] >= -1);
    }
    // Same (z, eps) twice: identical images.
    auto b = model.g0->forward(phi, z, nullptr, false);
    CHECK(a.image.values() == b.image.values());
    // Different z, same caption, untrained net: images differ.
    Tensor z2 = noise(3, model.cfg.noise_dim, rng);
    auto c = model.g0->forward(phi, z2, nullptr, false);
    real_t maxdiff = 0;
    for (int64_t i = 0; i < a.image.size(); ++i)
        maxdiff = std::max(maxdiff,
                           std::abs(a.image.data()[i] - c.image.data()[i]));
    CHECK(maxdiff > 0);
}

TEST_CASE("zeroed discriminator gives the logit-zero loss identities") {
    Model model(tiny_cfg(), 6);
    zero_params(model.stage1_d_store);
    RngStream rng(10, 0);
    auto caps = captions({1, 4});
    Tensor phi = model.phi_of(caps);
    Tensor real = Tensor::zeros({2, 3, 16, 16});
    Tensor fake = Tensor::zeros({2, 3, 16, 16});
    for (int64_t i = 0; i < fake.size(); ++i)
        fake.mutable_data()[i] = static_cast<real_t>(rng.uniform(-1, 1));
    Tensor dl = stage_d_loss(*model.d0, real, phi, phi, fake, phi, true);
    CHECK(dl.item() == doctest::Approx(2 * std::log(2)).epsilon(1e-5));

    // Generator side with lambda = 0: exactly ln 2.
    real_t kl = -1;
    Tensor gl = stage_g_loss(*model.d0, fake, phi, Tensor(), Tensor(), 0,
                             true, &kl);
    CHECK(gl.item() == doctest::Approx(std::log(2)).epsilon(1e-5));
    CHECK(kl == 0);
}

TEST_CASE("adversarial loss optimum is ~0 and bounded by the log clamp") {
    Tensor pos = Tensor::full({4, 1}, 40);
    Tensor neg = Tensor::full({4, 1}, -40);
    CHECK(adversarial_real(pos).item() == doctest::Approx(0).epsilon(1e-9));
    CHECK(adversarial_fake(neg).item() == doctest::Approx(0).epsilon(1e-9));
    // Saturated the wrong way: finite because of the clamp.
    const real_t worst = adversarial_real(Tensor::full({1, 1}, -1000)).item();
    CHECK(worst == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("losses are finite and positive for random nets") {
    Model model(tiny_cfg(), 7);
    RngStream rng(11, 0);
    auto caps = captions({2, 9, 20, 5});
    Tensor phi = model.phi_of(caps);
    Tensor z = noise(4, model.cfg.noise_dim, rng);
    auto out = model.g0->forward(phi, z, &rng, true);
    Tensor real = reshape(tanh_op(noise(4, 3 * 16 * 16, rng)),
                          {4, 3, 16, 16});
    Tensor dl = stage_d_loss(*model.d0, real, phi, phi, out.image.detach(),
                             phi, true);
    CHECK(dl.item() > 0);
    CHECK(std::isfinite(static_cast<double>(dl.item())));
    real_t kl = 0;
    Tensor gl = stage_g_loss(*model.d0, out.image, phi, out.mu, out.sigma, 1,
                             true, &kl);
    CHECK(gl.item() > 0);
    CHECK(std::isfinite(static_cast<double>(kl)));
}

TEST_CASE("stage-II upsamples exactly 4x and is deterministic") {
    Model model(tiny_cfg(), 8);
    RngStream rng(12, 0);
    auto caps = captions({3, 18});
    Tensor phi = model.phi_of(caps);
    Tensor s0 = Tensor::zeros({2, 3, 16, 16});
    for (int64_t i = 0; i < s0.size(); ++i)
        s0.mutable_data()[i] = static_cast<real_t>(rng.uniform(-1, 1));
    auto a = model.g2->forward(s0, phi, nullptr, false);
    CHECK(a.image.shape() == Shape{2, 3, 64, 64});
    auto b = model.g2->forward(s0, phi, nullptr, false);
    CHECK(a.image.values() == b.image.values());
    CHECK_THROWS_AS(
        model.g2->forward(Tensor::zeros({2, 3, 32, 32}), phi, nullptr,
                          false),
        ShapeError);
}

TEST_CASE("stage-II KL gradient reaches only the stage-II CA head") {
    Model model(tiny_cfg(), 9);
    auto caps = captions({6, 11});
    Tensor s0 = Tensor::zeros({2, 3, 16, 16});
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor phi = model.phi_of(caps);
        auto out = model.g2->forward(s0, phi, nullptr, true);
        Tensor kl = kl_standard_normal(out.mu, out.sigma);
        std::vector<Parameter*> all;
        for (auto* s : model.stores())
            for (auto* p : s->parameters()) all.push_back(p);
        tape.backward(kl, all);
    }
    auto grad_norm = [](const Parameter* p) {
        real_t n = 0;
        for (real_t g : p->grad) n += std::abs(g);
        return n;
    };
    const Parameter* ca2 = model.stage2_g_store.find("v1.g2.ca.fc.weight");
    const Parameter* ca0 = model.stage1_g_store.find("v1.g0.ca.fc.weight");
    REQUIRE(ca2 != nullptr);
    REQUIRE(ca0 != nullptr);
    CHECK(grad_norm(ca2) > 0);
    CHECK(grad_norm(ca0) == 0);
}

TEST_CASE("caption input is gradient-reachable from the score") {
    Model model(tiny_cfg(), 10);
    RngStream rng(13, 0);
    Tensor img = Tensor::zeros({2, 3, 16, 16});
    for (int64_t i = 0; i < img.size(); ++i)
        img.mutable_data()[i] = static_cast<real_t>(rng.uniform(-1, 1));
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor phi = model.phi_of(captions({0, 23}));
        Tensor score =
            model.d0->score(model.d0->trunk(img, true), phi, true);
        std::vector<Parameter*> ps = {
            model.stage1_g_store.find("v1.embed.rows")};
        tape.backward(sum_all(score), ps);
    }
    const Parameter* rows = model.stage1_g_store.find("v1.embed.rows");
    real_t n = 0;
    for (real_t g : rows->grad) n += std::abs(g);
    CHECK(n > 0);
}

TEST_CASE("two-step training is bit-deterministic; phase 2 freezes stage I") {
    const auto& cache = shared_dataset();
    auto run = [&](std::vector<double>& losses,
                   std::vector<std::vector<real_t>>& stage1_at_p1_end,
                   std::vector<std::vector<real_t>>& stage1_final) {
        Model model(tiny_cfg(), 42);
        TrainConfig tc;
        tc.batch = 4;
        tc.epochs_per_stage = 1;
        tc.max_steps = 2;
        tc.seed = 42;
        tc.grid_every = 0;
        TrainHooks hooks;
        hooks.on_step = [&](const StepStats& st) {
            losses.push_back(st.d_loss);
            losses.push_back(st.g_loss);
        };
        hooks.on_sample_point = [&](int64_t, int phase) {
            if (phase == 1 && stage1_at_p1_end.empty())
                for (auto* p : model.stage1_g_store.parameters())
                    stage1_at_p1_end.push_back(p->value.values());
        };
        train(model, cache, tc, hooks);
        for (auto* p : model.stage1_g_store.parameters())
            stage1_final.push_back(p->value.values());
    };
    std::vector<double> l1, l2;
    std::vector<std::vector<real_t>> snap1, fin1, snap2, fin2;
    run(l1, snap1, fin1);
    run(l2, snap2, fin2);
    CHECK(l1 == l2);
    REQUIRE(!l1.empty());
    // Freeze contract: stage-I parameters bit-identical across phase 2.
    CHECK(snap1 == fin1);
}

TEST_CASE("interpolation endpoints equal direct generations") {
    Model model(tiny_cfg(), 11);
    RngStream rng(14, 0);
    Tensor phi_a = Tensor::zeros({model.cfg.embed_dim});
    Tensor phi_b = Tensor::zeros({model.cfg.embed_dim});
    for (int i = 0; i < model.cfg.embed_dim; ++i) {
        phi_a.mutable_data()[i] = static_cast<real_t>(rng.uniform(-1, 1));
        phi_b.mutable_data()[i] = static_cast<real_t>(rng.uniform(-1, 1));
    }
    auto strip = interpolate_embeddings(model, phi_a, phi_b, 2);
    CHECK(strip.stage2.shape() == Shape{2, 3, 64, 64});

    Tensor phi_row = reshape(phi_a, {1, model.cfg.embed_dim});
    Tensor z = Tensor::zeros({1, model.cfg.noise_dim});
    Tensor s0 = model.g0->forward(phi_row, z, nullptr, false).image;
    Tensor direct = model.g2->forward(s0, phi_row, nullptr, false).image;
    for (int64_t i = 0; i < direct.size(); ++i)
        CHECK(strip.stage2.data()[i] == direct.data()[i]);

    // Degenerate interpolation: all frames identical.
    auto flat = interpolate_embeddings(model, phi_a, phi_a, 4);
    const int64_t frame = flat.stage2.size() / 4;
    for (int s = 1; s < 4; ++s)
        for (int64_t i = 0; i < frame; ++i)
            CHECK(flat.stage2.data()[s * frame + i] == flat.stage2.data()[i]);
}

TEST_CASE("baseline modes: CA off and text-twice off stay runnable") {
    ModelConfig cfg = tiny_cfg();
    cfg.use_ca = false;
    cfg.text_twice = false;
    Model model(cfg, 12);
    RngStream rng(15, 0);
    auto caps = captions({4, 16});
    Tensor phi = model.phi_of(caps);
    Tensor z = noise(2, cfg.noise_dim, rng);
    auto out = model.g0->forward(phi, z, &rng, true);
    CHECK_FALSE(out.mu.defined());
    auto out2 = model.g2->forward(out.image.detach(), phi, &rng, true);
    CHECK(out2.image.shape() == Shape{2, 3, 64, 64});
    CHECK_FALSE(out2.mu.defined());
}
