#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ganlab/blocks.hpp"
#include "ganlab/tape.hpp"

using namespace ganlab;

namespace {

Tensor rand_t(Shape s, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(s));
    for (int64_t i = 0; i < t.size(); ++i)
        t.mutable_data()[i] = static_cast<real_t>(rng.uniform(lo, hi));
    return t;
}

}  // namespace

TEST_CASE("shape contracts hold over random admissible specs") {
    RngStream rng(31, 0);
    for (int c = 0; c < 30; ++c) {
        const int cin = 1 + rng.uniform_int(12);
        const int cout = 1 + rng.uniform_int(12);
        const int ext = 2 * (1 + rng.uniform_int(6));  // even
        const int batch = 1 + rng.uniform_int(3);
        ParamStore ps;
        RngStream init = rng.substream(c);
        Tensor x = rand_t({batch, cin, ext, ext}, rng);

        auto up = Block::build(ps, "up",
                               {BlockKind::upsample, cin, cout, true,
                                Activation::relu},
                               init);
        Tensor yu = up->forward(x, true);
        CHECK(yu.shape() == Shape{batch, cout, 2 * ext, 2 * ext});

        auto down = Block::build(ps, "down" + std::to_string(c),
                                 {BlockKind::downsample, cin, cout,
                                  c % 2 == 0, Activation::leaky_relu},
                                 init);
        Tensor yd = down->forward(x, true);
        CHECK(yd.shape() == Shape{batch, cout, ext / 2, ext / 2});

        auto res = Block::build(ps, "res" + std::to_string(c),
                                {BlockKind::residual, cin, cin, true,
                                 Activation::relu},
                                init);
        Tensor yr = res->forward(x, true);
        CHECK(yr.shape() == x.shape());
    }
}

TEST_CASE("residual block with a zeroed branch is ReLU of the identity") {
    ParamStore ps;
    RngStream rng(32, 0);
    auto res = Block::build(
        ps, "res", {BlockKind::residual, 3, 3, true, Activation::relu}, rng);
    for (Parameter* p : ps.parameters()) {
        // Zero convs; batch-norm affine at identity.
        real_t v = p->name.find(".gamma") != std::string::npos ? 1 : 0;
        for (int64_t i = 0; i < p->value.size(); ++i)
            p->value.mutable_data()[i] = v;
    }
    Tensor x = rand_t({2, 3, 5, 5}, rng, -2, 2);
    Tensor y = res->forward(x, true);
    for (int64_t i = 0; i < x.size(); ++i) {
        const real_t want = x.data()[i] > 0 ? x.data()[i] : 0;
        CHECK(y.data()[i] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("downsample block on 64x64 reaches every parameter") {
    ParamStore ps;
    RngStream rng(33, 0);
    auto down = Block::build(ps, "d",
                             {BlockKind::downsample, 3, 8, true,
                              Activation::leaky_relu},
                             rng);
    Tensor x = rand_t({2, 3, 64, 64}, rng);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor y = down->forward(x, true);
        CHECK(y.shape() == Shape{2, 8, 32, 32});
        auto params = ps.parameters();
        tape.backward(sum_all(y), params);
    }
    for (Parameter* p : ps.parameters()) {
        REQUIRE(p->has_grad);
        real_t norm = 0;
        for (real_t g : p->grad) norm += std::abs(g);
        CHECK_MESSAGE(norm > 0, "zero gradient reached " << p->name);
    }
}

TEST_CASE("odd spatial extent into a downsample block is an error") {
    ParamStore ps;
    RngStream rng(34, 0);
    auto down = Block::build(ps, "d",
                             {BlockKind::downsample, 2, 4, false,
                              Activation::leaky_relu},
                             rng);
    Tensor x = Tensor::zeros({1, 2, 7, 7});
    CHECK_THROWS_AS(down->forward(x, true), ShapeError);
}

TEST_CASE("blocks are differentiable end to end (finite-difference spot)") {
    RngStream rng(35, 0);
    const BlockSpec specs[] = {
        {BlockKind::upsample, 2, 3, true, Activation::relu},
        {BlockKind::downsample, 2, 3, true, Activation::leaky_relu},
        {BlockKind::residual, 3, 3, true, Activation::relu},
    };
    for (const auto& spec : specs) {
        ParamStore ps;
        RngStream init = rng.substream(static_cast<uint64_t>(spec.kind));
        auto block = Block::build(ps, "b", spec, init);
        const int ext = 4;
        Tensor x = rand_t({2, spec.in_channels, ext, ext}, rng);
        Tensor probe;  // fixed random functional weights
        auto functional = [&](bool with_tape, Parameter** pp, int np) {
            (void)pp;
            (void)np;
            Tensor y = block->forward(x, true);
            if (!probe.defined()) {
                // Sparse +/-1 functional keeps |loss| small enough that the
                // f32 forward noise stays below the tolerance.
                probe = Tensor::zeros(y.shape());
                for (int t = 0; t < 8; ++t)
                    probe.mutable_data()[rng.uniform_int(
                        static_cast<int>(probe.size()))] =
                        rng.uniform() < 0.5 ? real_t(-1) : real_t(1);
            }
            return sum_all(mul(y, probe));
        };
        // Analytic gradients.
        std::vector<Parameter*> params = ps.parameters();
        Tape tape;
        {
            TapeScope scope(tape);
            tape.backward(functional(true, nullptr, 0), params);
        }
        // Spot-check a few elements of the first conv weight by central
        // differences.
        // Weights are initialized at 0.02 scale, so the step must sit well
        // below them or truncation error dominates.
        Parameter* w = params[0];
        const double h = 1e-4;
        for (int64_t i = 0; i < std::min<int64_t>(w->value.size(), 6); ++i) {
            real_t* slot = w->value.mutable_data() + i;
            const real_t keep = *slot;
            *slot = keep + static_cast<real_t>(h);
            const double fp = functional(false, nullptr, 0).item();
            *slot = keep - static_cast<real_t>(h);
            const double fm = functional(false, nullptr, 0).item();
            *slot = keep;
            const double numeric = (fp - fm) / (2 * h);
            const double analytic = w->grad[static_cast<size_t>(i)];
            const double err =
                std::abs(analytic - numeric) /
                std::max({1.0, std::abs(analytic), std::abs(numeric)});
            CHECK_MESSAGE(err <= 1e-3, "block kind "
                                           << static_cast<int>(spec.kind)
                                           << " elem " << i << ": " << analytic
                                           << " vs " << numeric);
        }
    }
}

TEST_CASE("join concatenates replicated vector and keeps width") {
    ParamStore ps;
    RngStream rng(36, 0);
    JoinBlock join(ps, "join", 6, 4, 2, rng);
    CHECK(join.out_channels() == 10);
    Tensor h = rand_t({2, 6, 8, 8}, rng);
    Tensor v = rand_t({2, 4}, rng);
    Tensor y = join.forward(h, v, true);
    CHECK(y.shape() == Shape{2, 10, 8, 8});
    // Vector mismatch is rejected.
    CHECK_THROWS_AS(join.forward(h, rand_t({2, 5}, rng), true), ShapeError);
}
