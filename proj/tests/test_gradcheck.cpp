// Central finite-difference oracle for every autodiff primitive. The oracle
// perturbs each input element by +/-h, re-evaluates the forward function
// without a tape, and compares the quotient against the recorded gradient.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "ganlab/adam.hpp"
#include "ganlab/ops.hpp"
#include "ganlab/rng.hpp"
#include "ganlab/tape.hpp"

using namespace ganlab;

namespace {

#ifdef GANLAB_REAL64
constexpr double kStep = 1e-5;
constexpr double kTol = 1e-6;
#else
constexpr double kStep = 1e-3;
constexpr double kTol = 1e-3;
#endif

struct Input {
    std::unique_ptr<Parameter> p;
    explicit Input(std::string name, Tensor value) {
        p = std::make_unique<Parameter>();
        p->name = std::move(name);
        p->value = std::move(value);
        p->value.set_requires_grad(true);
        p->value.impl()->param = p.get();
    }
};

Tensor rand_t(Shape s, RngStream& rng, double lo = -1.5, double hi = 1.5) {
    Tensor t = Tensor::zeros(std::move(s));
    for (int64_t i = 0; i < t.size(); ++i)
        t.mutable_data()[i] = static_cast<real_t>(rng.uniform(lo, hi));
    return t;
}

// Keeps sampled values away from the relu/leaky kink so the two-sided
// difference stays on one side of it.
Tensor rand_off_kink(Shape s, RngStream& rng) {
    Tensor t = rand_t(std::move(s), rng);
    for (int64_t i = 0; i < t.size(); ++i) {
        real_t& v = t.mutable_data()[i];
        if (std::abs(v) < real_t(0.05)) v += v >= 0 ? real_t(0.1) : real_t(-0.1);
    }
    return t;
}

// f builds a scalar loss from the bound inputs. Checks d(loss)/d(every
// element of every input) against the finite-difference quotient.
void check_grads(const std::vector<Input*>& inputs,
                 const std::function<Tensor()>& f, const char* what) {
    std::vector<std::vector<real_t>> analytic;
    for (auto* in : inputs) {
        in->p->grad.clear();
        in->p->has_grad = false;
    }
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = f();
        std::vector<Parameter*> ps;
        for (auto* in : inputs) ps.push_back(in->p.get());
        tape.backward(loss, ps);
        for (auto* in : inputs) analytic.push_back(in->p->grad);
    }
    for (size_t k = 0; k < inputs.size(); ++k) {
        Parameter& p = *inputs[k]->p;
        for (int64_t i = 0; i < p.value.size(); ++i) {
            real_t* slot = p.value.mutable_data() + i;
            const real_t keep = *slot;
            *slot = keep + static_cast<real_t>(kStep);
            const double fp = f().item();
            *slot = keep - static_cast<real_t>(kStep);
            const double fm = f().item();
            *slot = keep;
            const double numeric = (fp - fm) / (2 * kStep);
            const double a = analytic[k][static_cast<size_t>(i)];
            const double err = std::abs(a - numeric) /
                               std::max({1.0, std::abs(a), std::abs(numeric)});
            CHECK_MESSAGE(err <= kTol, what << " input#" << k << " elem " << i
                                            << ": analytic " << a
                                            << " vs numeric " << numeric);
        }
    }
}

// Scalar probe: weighted sum against fixed random weights so every output
// element contributes to the loss.
Tensor probe(const Tensor& out, const Tensor& w) { return sum_all(mul(out, w)); }

constexpr int kCases = 20;

}  // namespace

TEST_CASE("gradcheck: elementwise and scalar ops") {
    RngStream rng(101, 0);
    for (int c = 0; c < kCases; ++c) {
        const int n = 2 + rng.uniform_int(8);
        Input a("a", rand_t({n}, rng));
        Input b("b", rand_t({n}, rng));
        Tensor w = rand_t({n}, rng);
        check_grads({&a, &b}, [&] { return probe(add(a.p->value, b.p->value), w); },
                    "add");
        check_grads({&a, &b}, [&] { return probe(sub(a.p->value, b.p->value), w); },
                    "subtract");
        check_grads({&a, &b}, [&] { return probe(mul(a.p->value, b.p->value), w); },
                    "multiply");
        check_grads({&a}, [&] { return probe(scale(a.p->value, real_t(1.7)), w); },
                    "scalar-scale");
    }
}

TEST_CASE("gradcheck: activations, log, exp") {
    RngStream rng(102, 0);
    for (int c = 0; c < kCases; ++c) {
        const int n = 2 + rng.uniform_int(8);
        Input a("a", rand_off_kink({n}, rng));
        Input pos("pos", rand_t({n}, rng, 0.2, 2.0));
        Tensor w = rand_t({n}, rng);
        check_grads({&a}, [&] { return probe(relu(a.p->value), w); }, "relu");
        check_grads({&a}, [&] { return probe(leaky_relu(a.p->value), w); },
                    "leaky_relu");
        check_grads({&a}, [&] { return probe(sigmoid(a.p->value), w); },
                    "sigmoid");
        check_grads({&a}, [&] { return probe(tanh_op(a.p->value), w); }, "tanh");
        check_grads({&pos}, [&] { return probe(log_op(pos.p->value), w); }, "log");
        check_grads({&a}, [&] { return probe(exp_op(a.p->value), w); }, "exp");
    }
}

TEST_CASE("gradcheck: reductions, replicate, reshape, concat, slice") {
    RngStream rng(103, 0);
    for (int c = 0; c < kCases; ++c) {
        const int b = 1 + rng.uniform_int(3), d = 1 + rng.uniform_int(4);
        const int m = 2 + rng.uniform_int(3);
        Input x("x", rand_t({b, d, m, m}, rng));
        Input v("v", rand_t({b, d}, rng));
        Tensor wbd = rand_t({b, d}, rng);
        Tensor wrep = rand_t({b, d, m, m}, rng);
        check_grads({&x}, [&] { return sum_all(x.p->value); }, "sum-reduce");
        check_grads({&x}, [&] { return mean_all(x.p->value); }, "mean-reduce");
        check_grads({&x},
                    [&] { return probe(spatial_mean(x.p->value), wbd); },
                    "mean-reduce(spatial)");
        check_grads({&v},
                    [&] { return probe(spatial_replicate(v.p->value, m), wrep); },
                    "spatial_replicate");
        check_grads({&x},
                    [&] {
                        return probe(reshape(x.p->value, {b, d * m * m}),
                                     reshape(wrep, {b, d * m * m}));
                    },
                    "reshape");
        Input y("y", rand_t({b, d + 1, m, m}, rng));
        Tensor wcat = rand_t({b, 2 * d + 1, m, m}, rng);
        check_grads({&x, &y},
                    [&] {
                        return probe(concat_dim1(x.p->value, y.p->value), wcat);
                    },
                    "channel-concat");
        Tensor wsl = rand_t({b, 1, m, m}, rng);
        check_grads({&y},
                    [&] { return probe(slice_dim1(y.p->value, d, 1), wsl); },
                    "slice");
    }
}

TEST_CASE("gradcheck: matmul and fully_connected") {
    RngStream rng(104, 0);
    for (int c = 0; c < kCases; ++c) {
        const int m = 1 + rng.uniform_int(4), k = 1 + rng.uniform_int(5),
                  n = 1 + rng.uniform_int(4);
        Input a("a", rand_t({m, k}, rng));
        Input b("b", rand_t({k, n}, rng));
        Input bias("bias", rand_t({n}, rng));
        Tensor w = rand_t({m, n}, rng);
        check_grads({&a, &b},
                    [&] { return probe(matmul(a.p->value, b.p->value), w); },
                    "matmul");
        check_grads(
            {&a, &b, &bias},
            [&] {
                return probe(
                    fully_connected(a.p->value, b.p->value, bias.p->value), w);
            },
            "fully_connected");
    }
}

TEST_CASE("gradcheck: conv2d over stride/pad/kernel combinations") {
    RngStream rng(105, 0);
    struct Geo {
        int ci, co, h, kernel, stride, pad;
    };
    const Geo geos[] = {
        {1, 1, 5, 3, 1, 1}, {2, 2, 4, 3, 1, 1}, {2, 2, 6, 4, 2, 1},
        {3, 2, 4, 1, 1, 0}, {2, 1, 5, 5, 2, 2},
    };
    int cases = 0;
    while (cases < kCases) {
        for (const auto& g : geos) {
            const int b = 1;
            Input x("x", rand_t({b, g.ci, g.h, g.h}, rng));
            Input w("w", rand_t({g.co, g.ci, g.kernel, g.kernel}, rng));
            Input bias("bias", rand_t({g.co}, rng));
            const int oh = (g.h + 2 * g.pad - g.kernel) / g.stride + 1;
            // Sparse +/-1 probe keeps |loss| small so the f32 forward noise
            // stays well under the finite-difference tolerance.
            Tensor probe_w = Tensor::zeros({b, g.co, oh, oh});
            for (int t = 0; t < 8; ++t)
                probe_w.mutable_data()[rng.uniform_int(
                    static_cast<int>(probe_w.size()))] =
                    rng.uniform() < 0.5 ? real_t(-1) : real_t(1);
            check_grads({&x, &w, &bias},
                        [&] {
                            return probe(conv2d(x.p->value, w.p->value,
                                                bias.p->value, g.stride, g.pad),
                                         probe_w);
                        },
                        "conv2d");
            ++cases;
        }
    }
}

TEST_CASE("gradcheck: nearest_upsample") {
    RngStream rng(106, 0);
    for (int c = 0; c < kCases; ++c) {
        const int b = 1 + rng.uniform_int(2), ch = 1 + rng.uniform_int(3);
        const int h = 2 + rng.uniform_int(3), f = 1 + rng.uniform_int(2);
        Input x("x", rand_t({b, ch, h, h}, rng));
        Tensor w = rand_t({b, ch, h * f, h * f}, rng);
        check_grads({&x},
                    [&] { return probe(nearest_upsample(x.p->value, f), w); },
                    "nearest_upsample");
    }
}

TEST_CASE("gradcheck: batch_norm training and inference") {
    RngStream rng(107, 0);
    for (int c = 0; c < kCases; ++c) {
        const int b = 8, ch = 1 + rng.uniform_int(2), h = 2;
        Input x("x", rand_t({b, ch, h, h}, rng));
        Input gamma("gamma", rand_t({ch}, rng, 0.5, 1.5));
        Input beta("beta", rand_t({ch}, rng, -0.5, 0.5));
        Tensor w = rand_t({b, ch, h, h}, rng);
        for (bool training : {true, false}) {
            BatchNormState state(ch);
            // Make inference statistics non-trivial.
            for (int i = 0; i < ch; ++i) {
                state.running_mean[i] = static_cast<real_t>(rng.uniform(-0.3, 0.3));
                state.running_var[i] = static_cast<real_t>(rng.uniform(0.5, 1.5));
            }
            const BatchNormState frozen = state;
            check_grads({&x, &gamma, &beta},
                        [&] {
                            // Each probe evaluation must see the same
                            // statistics, so restore them.
                            state = frozen;
                            return probe(batch_norm(x.p->value, gamma.p->value,
                                                    beta.p->value, state,
                                                    training),
                                         w);
                        },
                        training ? "batch_norm(train)" : "batch_norm(infer)");
        }
    }
}
