#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ganlab/adam.hpp"
#include "ganlab/ops.hpp"
#include "ganlab/rng.hpp"
#include "ganlab/tape.hpp"

using namespace ganlab;

namespace {

struct Leaf {
    Parameter p;
    explicit Leaf(const char* name, Tensor value) {
        p.name = name;
        p.value = std::move(value);
        p.value.set_requires_grad(true);
        p.value.impl()->param = &p;
    }
};

Tensor random_tensor(Shape s, RngStream& rng, double lo = -1.5,
                     double hi = 1.5) {
    Tensor t = Tensor::zeros(std::move(s));
    for (int64_t i = 0; i < t.size(); ++i)
        t.mutable_data()[i] = static_cast<real_t>(rng.uniform(lo, hi));
    return t;
}

// Direct six-nested-loop convolution, the independent oracle for conv2d.
std::vector<double> conv_oracle(const Tensor& x, const Tensor& w, int stride,
                                int pad) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (H + 2 * pad - kh) / stride + 1;
    const int ow = (W + 2 * pad - kw) / stride + 1;
    std::vector<double> out(static_cast<size_t>(B) * Co * oh * ow, 0.0);
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < Co; ++co)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    double s = 0;
                    for (int ci = 0; ci < C; ++ci)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int sy = y * stride - pad + ky;
                                const int sx = xx * stride - pad + kx;
                                if (sy < 0 || sy >= H || sx < 0 || sx >= W)
                                    continue;
                                s += double(x.data()[((b * C + ci) * H + sy) *
                                                         W +
                                                     sx]) *
                                     w.data()[((co * C + ci) * kh + ky) * kw +
                                              kx];
                            }
                    out[((static_cast<size_t>(b) * Co + co) * oh + y) * ow +
                        xx] = s;
                }
    return out;
}

}  // namespace

TEST_CASE("ones convolution counts kernel overlap") {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1);
    Tensor y = conv2d(x, w, Tensor(), 1, 1);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    CHECK(y.data()[4] == doctest::Approx(9.0));  // center
    CHECK(y.data()[0] == doctest::Approx(4.0));  // corner
}

TEST_CASE("nearest upsample replicates blocks") {
    Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor y = nearest_upsample(x, 2);
    const std::vector<real_t> want = {1, 1, 2, 2, 1, 1, 2, 2,
                                      3, 3, 4, 4, 3, 3, 4, 4};
    REQUIRE(y.size() == 16);
    for (int i = 0; i < 16; ++i) CHECK(y.data()[i] == want[i]);
}

TEST_CASE("conv2d matches the direct-loop oracle") {
    RngStream rng(11, 0);
    struct Case {
        Shape xs, ws;
        int stride, pad;
    };
    const Case cases[] = {
        {{2, 3, 8, 8}, {4, 3, 4, 4}, 2, 1},
        {{1, 2, 7, 7}, {3, 2, 3, 3}, 1, 1},
        {{2, 4, 6, 6}, {2, 4, 1, 1}, 1, 0},
        {{1, 3, 9, 9}, {2, 3, 5, 5}, 2, 2},
        {{2, 2, 8, 8}, {3, 2, 3, 3}, 2, 1},
    };
    for (const auto& c : cases) {
        Tensor x = random_tensor(c.xs, rng);
        Tensor w = random_tensor(c.ws, rng);
        Tensor y = conv2d(x, w, Tensor(), c.stride, c.pad);
        auto ref = conv_oracle(x, w, c.stride, c.pad);
        REQUIRE(y.size() == static_cast<int64_t>(ref.size()));
        for (int64_t i = 0; i < y.size(); ++i)
            CHECK(std::abs(y.data()[i] - ref[static_cast<size_t>(i)]) <= 1e-5);
    }
}

TEST_CASE("backward of sum(x*x) is 2x") {
    Leaf x("x", Tensor::from({3}, {1, -2, 3}));
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = sum_all(mul(x.p.value, x.p.value));
        Parameter* ps[] = {&x.p};
        tape.backward(loss, ps);
    }
    REQUIRE(x.p.has_grad);
    CHECK(x.p.grad[0] == doctest::Approx(2));
    CHECK(x.p.grad[1] == doctest::Approx(-4));
    CHECK(x.p.grad[2] == doctest::Approx(6));
}

TEST_CASE("sigmoid gradient at zero is a quarter") {
    Leaf x("x", Tensor::from({1}, {0}));
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = sum_all(sigmoid(x.p.value));
        Parameter* ps[] = {&x.p};
        tape.backward(loss, ps);
    }
    CHECK(x.p.grad[0] == doctest::Approx(0.25));
}

TEST_CASE("backward rejects non-scalar losses and reentry") {
    Leaf x("x", Tensor::from({2}, {1, 2}));
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor y = mul(x.p.value, x.p.value);
        CHECK_THROWS_AS(tape.backward(y), ShapeError);
    }
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = sum_all(mul(x.p.value, x.p.value));
        tape.backward(loss);
        CHECK_THROWS_AS(tape.backward(loss), Error);
        // Recording onto a consumed tape is also an error.
        CHECK_THROWS_AS(sum_all(mul(x.p.value, x.p.value)), Error);
    }
}

TEST_CASE("unreachable parameters receive explicit zero gradients") {
    Leaf a("a", Tensor::from({2}, {1, 2}));
    Leaf b("b", Tensor::from({2}, {3, 4}));
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = sum_all(mul(a.p.value, a.p.value));
        Parameter* ps[] = {&a.p, &b.p};
        tape.backward(loss, ps);
    }
    REQUIRE(b.p.has_grad);
    CHECK(b.p.grad[0] == 0);
    CHECK(b.p.grad[1] == 0);
}

TEST_CASE("shape errors name the primitive and shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    try {
        add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("(2x3)") != std::string::npos);
        CHECK(msg.find("(3x2)") != std::string::npos);
    }
}

TEST_CASE("non-finite outputs raise NumericError") {
    Tensor big = Tensor::full({4}, 200.0);
    CHECK_THROWS_AS(exp_op(big), NumericError);
}

TEST_CASE("batch_norm training output is standardized per channel") {
    RngStream rng(5, 0);
    Tensor x = random_tensor({8, 3, 6, 6}, rng, -2.0, 3.0);
    Tensor gamma = Tensor::full({3}, 1);
    Tensor beta = Tensor::zeros({3});
    BatchNormState state(3);
    Tensor y = batch_norm(x, gamma, beta, state, true);
    const int64_t hw = 36;
    for (int c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        for (int b = 0; b < 8; ++b) {
            const real_t* p = y.data() + (b * 3 + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
                s += p[i];
                s2 += double(p[i]) * p[i];
            }
        }
        const double m = 8.0 * hw;
        CHECK(std::abs(s / m) <= 1e-4);
        CHECK(std::abs(s2 / m - (s / m) * (s / m) - 1.0) <= 1e-3);
    }
    // Inference mode leaves running statistics untouched.
    const auto rm = state.running_mean;
    Tensor y2 = batch_norm(x, gamma, beta, state, false);
    CHECK(state.running_mean == rm);
}

TEST_CASE("determinism: identical seeds give bit-identical forward/backward") {
    auto run = [](std::vector<real_t>& grads) {
        RngStream rng(77, 3);
        Leaf w("w", random_tensor({4, 2, 3, 3}, rng));
        Tensor x = random_tensor({2, 2, 8, 8}, rng);
        Tape tape;
        TapeScope scope(tape);
        Tensor y = leaky_relu(conv2d(x, w.p.value, Tensor(), 2, 1));
        Tensor loss = mean_all(mul(y, y));
        Parameter* ps[] = {&w.p};
        tape.backward(loss, ps);
        grads = w.p.grad;
        return loss.item();
    };
    std::vector<real_t> g1, g2;
    const real_t l1 = run(g1), l2 = run(g2);
    CHECK(l1 == l2);
    CHECK(g1 == g2);
}

TEST_CASE("concat and slice are inverse") {
    RngStream rng(13, 1);
    Tensor a = random_tensor({2, 3, 4, 4}, rng);
    Tensor b = random_tensor({2, 5, 4, 4}, rng);
    Tensor cat = concat_dim1(a, b);
    CHECK(cat.shape() == Shape{2, 8, 4, 4});
    Tensor a2 = slice_dim1(cat, 0, 3);
    Tensor b2 = slice_dim1(cat, 3, 5);
    CHECK(a2.values() == a.values());
    CHECK(b2.values() == b.values());
}

TEST_CASE("spatial replicate and mean") {
    Tensor v = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor r = spatial_replicate(v, 3);
    CHECK(r.shape() == Shape{2, 2, 3, 3});
    CHECK(r.data()[0] == 1);
    CHECK(r.data()[17] == 2);
    Tensor m = spatial_mean(r);
    CHECK(m.shape() == Shape{2, 2});
    for (int i = 0; i < 4; ++i)
        CHECK(m.data()[i] == doctest::Approx(v.data()[i]));
}

TEST_CASE("fully connected matches matmul plus bias") {
    RngStream rng(21, 2);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor w = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    Tensor y = fully_connected(x, w, b);
    Tensor ref = matmul(x, w);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            CHECK(y.data()[r * 4 + c] ==
                  doctest::Approx(ref.data()[r * 4 + c] + b.data()[c]));
}

TEST_CASE("log clamps at 1e-12") {
    Tensor x = Tensor::from({2}, {0, 1});
    Tensor y = log_op(x);
    CHECK(y.data()[0] == doctest::Approx(std::log(1e-12)));
    CHECK(y.data()[1] == doctest::Approx(0));
}
