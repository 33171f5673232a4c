#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ganlab/adam.hpp"
#include "ganlab/ops.hpp"
#include "ganlab/tape.hpp"

using namespace ganlab;

namespace {

struct Leaf {
    Parameter p;
    Leaf(const char* name, Tensor value) {
        p.name = name;
        p.value = std::move(value);
        p.value.set_requires_grad(true);
        p.value.impl()->param = &p;
    }
};

}  // namespace

TEST_CASE("first adam step moves exactly -lr * sign(grad)") {
    Leaf w("w", Tensor::scalar(0));
    w.p.grad = {1};
    w.p.has_grad = true;
    AdamConfig cfg;
    cfg.lr = static_cast<real_t>(2e-4);
    Parameter* ps[] = {&w.p};
    adam_step(ps, cfg);
    // Bias correction makes mhat/sqrt(vhat) = 1 at t=1 up to eps.
    CHECK(w.p.value.item() == doctest::Approx(-2e-4).epsilon(1e-6));
    CHECK(w.p.step_count == 1);
    CHECK_FALSE(w.p.has_grad);
}

TEST_CASE("zero gradient is a fixed point but still counts the step") {
    Leaf w("w", Tensor::from({3}, {1, 2, 3}));
    w.p.grad = {0, 0, 0};
    w.p.has_grad = true;
    Parameter* ps[] = {&w.p};
    adam_step(ps, AdamConfig{});
    CHECK(w.p.value.values() == std::vector<real_t>{1, 2, 3});
    CHECK(w.p.step_count == 1);
}

TEST_CASE("adam without a gradient names the parameter") {
    Leaf w("g0.conv.weight", Tensor::scalar(0));
    Parameter* ps[] = {&w.p};
    try {
        adam_step(ps, AdamConfig{});
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("g0.conv.weight") !=
              std::string::npos);
    }
}

TEST_CASE("adam descends f(w) = (w-3)^2") {
    Leaf w("w", Tensor::scalar(0));
    AdamConfig cfg;
    cfg.lr = static_cast<real_t>(0.1);
    Parameter* ps[] = {&w.p};
    const real_t start_dist = 3;
    for (int i = 0; i < 100; ++i) {
        Tape tape;
        TapeScope scope(tape);
        Tensor d = sub(w.p.value, Tensor::scalar(3));
        Tensor loss = sum_all(mul(d, d));
        tape.backward(loss, ps);
        adam_step(ps, cfg);
    }
    CHECK(std::abs(w.p.value.item() - 3) < start_dist);
    // With lr 0.1 and 100 steps it should actually be close.
    CHECK(std::abs(w.p.value.item() - 3) < 0.5);
}

TEST_CASE("adam moment buffers track the parameter shape") {
    Leaf w("w", Tensor::zeros({4, 5}));
    w.p.grad.assign(20, 1);
    w.p.has_grad = true;
    Parameter* ps[] = {&w.p};
    adam_step(ps, AdamConfig{});
    CHECK(w.p.adam_m.size() == 20);
    CHECK(w.p.adam_v.size() == 20);
}

TEST_CASE("substreams derived from the same stream differ") {
    RngStream base(5, 1);
    RngStream a = base.substream(0);
    RngStream b = base.substream(1);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
    CHECK(same == 0);
    RngStream a2 = RngStream(5, 1).substream(0);
    RngStream a3 = RngStream(5, 1).substream(0);
    for (int i = 0; i < 64; ++i) CHECK(a2.next_u64() == a3.next_u64());
}

TEST_CASE("parameter freeze removes it from recording") {
    Leaf w("w", Tensor::scalar(2));
    w.p.value.set_requires_grad(false);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = sum_all(mul(w.p.value, w.p.value));
        CHECK(tape.record_count() == 0);
        tape.backward(loss);
    }
    CHECK_FALSE(w.p.has_grad);
}
