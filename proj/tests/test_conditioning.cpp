#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ganlab/conditioning.hpp"
#include "ganlab/tape.hpp"

using namespace ganlab;

TEST_CASE("empty attribute tuple embeds to the zero vector") {
    ParamStore ps;
    RngStream rng(41, 0);
    EmbeddingTable table(ps, "embed", 11, 16, rng);
    Tensor phi = table.forward({{}});
    for (int64_t i = 0; i < phi.size(); ++i) CHECK(phi.data()[i] == 0);
}

TEST_CASE("embedding is order invariant and linear in the rows") {
    ParamStore ps;
    RngStream rng(42, 0);
    EmbeddingTable table(ps, "embed", 11, 8, rng);
    Tensor a = table.forward({{2, 9}});
    Tensor b = table.forward({{9, 2}});
    CHECK(a.values() == b.values());

    // Two captions differing in one attribute: phi difference equals the
    // difference of the two embedding rows.
    Tensor c1 = table.forward({{2, 9}});
    Tensor c2 = table.forward({{3, 9}});
    const Parameter* rows = ps.find("embed.rows");
    for (int j = 0; j < 8; ++j) {
        const real_t want =
            rows->value.data()[2 * 8 + j] - rows->value.data()[3 * 8 + j];
        CHECK(c1.data()[j] - c2.data()[j] == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("unknown attribute ids are vocabulary errors") {
    ParamStore ps;
    RngStream rng(43, 0);
    EmbeddingTable table(ps, "embed", 11, 8, rng);
    CHECK_THROWS_AS(table.forward({{11}}), DataError);
    CHECK_THROWS_AS(table.forward({{-1}}), DataError);
}

TEST_CASE("ca sample with zero epsilon returns mu") {
    ParamStore ps;
    RngStream rng(44, 0);
    CAHead head(ps, "ca", 16, 8, rng);
    Tensor phi = init_normal({3, 16}, 0, 1, rng);
    auto draw = head.sample(phi, nullptr);
    CHECK(draw.c.values() == draw.mu.values());
    for (int64_t i = 0; i < draw.sigma.size(); ++i)
        CHECK(draw.sigma.data()[i] > 0);
}

TEST_CASE("ca sample moment recovery over 1e5 draws") {
    ParamStore ps;
    RngStream rng(45, 0);
    const int dim = 6;
    CAHead head(ps, "ca", 8, dim, rng);
    Tensor phi = init_normal({1, 8}, 0, 2, rng);
    auto ref = head.sample(phi, nullptr);  // mu, sigma

    RngStream eps_rng(45, 99);
    const int n = 100000;
    std::vector<double> sum(dim, 0), sum2(dim, 0);
    for (int i = 0; i < n; ++i) {
        auto d = head.sample(phi, &eps_rng);
        for (int j = 0; j < dim; ++j) {
            sum[j] += d.c.data()[j];
            sum2[j] += double(d.c.data()[j]) * d.c.data()[j];
        }
    }
    for (int j = 0; j < dim; ++j) {
        const double mu = ref.mu.data()[j];
        const double sg = ref.sigma.data()[j];
        const double m = sum[j] / n;
        const double var = sum2[j] / n - m * m;
        CHECK(std::abs(m - mu) <= 3.0 * sg / std::sqrt(double(n)));
        CHECK(std::abs(var - sg * sg) <= 0.05 * sg * sg);
    }
}

TEST_CASE("gradient of sum(c) wrt log-sigma head equals sigma*epsilon") {
    ParamStore ps;
    RngStream rng(46, 0);
    const int dim = 5;
    CAHead head(ps, "ca", 4, dim, rng);
    Tensor phi = init_normal({2, 4}, 0, 1, rng);
    RngStream eps_rng(46, 7);
    Tape tape;
    CAHead::Draw draw;
    {
        TapeScope scope(tape);
        draw = head.sample(phi, &eps_rng);
        auto params = ps.parameters();
        tape.backward(sum_all(draw.c), params);
    }
    // The fc bias slots [dim, 2*dim) shift log-sigma directly, so their
    // gradient is the batch sum of sigma * epsilon.
    const Parameter* bias = ps.find("ca.fc.bias");
    REQUIRE(bias != nullptr);
    for (int j = 0; j < dim; ++j) {
        double want = 0;
        for (int b = 0; b < 2; ++b)
            want += double(draw.sigma.data()[b * dim + j]) *
                    draw.epsilon.data()[b * dim + j];
        CHECK(bias->grad[static_cast<size_t>(dim + j)] ==
              doctest::Approx(want).epsilon(1e-3));
    }
}

TEST_CASE("kl closed form: identity and hand-evaluated cases") {
    Tensor mu0 = Tensor::zeros({4});
    Tensor sig1 = Tensor::full({4}, 1);
    CHECK(kl_standard_normal(mu0, sig1).item() == 0);  // exactly

    Tensor mu1 = Tensor::from({1}, {1});
    Tensor s1 = Tensor::from({1}, {1});
    CHECK(kl_standard_normal(mu1, s1).item() == doctest::Approx(0.5));

    CHECK_THROWS_AS(kl_standard_normal(mu1, Tensor::from({1}, {0})),
                    NumericError);
}

TEST_CASE("kl is nonnegative with equality only at the standard normal") {
    RngStream rng(47, 0);
    for (int c = 0; c < 200; ++c) {
        const int d = 1 + rng.uniform_int(6);
        Tensor mu = init_normal({d}, 0, 1.5, rng);
        Tensor sigma = Tensor::zeros({d});
        for (int i = 0; i < d; ++i)
            sigma.mutable_data()[i] = static_cast<real_t>(rng.uniform(0.05, 3));
        const real_t kl = kl_standard_normal(mu, sigma).item();
        CHECK(kl >= 0);
        double dist = 0;
        for (int i = 0; i < d; ++i)
            dist += std::abs(mu.data()[i]) + std::abs(sigma.data()[i] - 1);
        if (dist > 0.1) CHECK(kl > 0);
    }
}

TEST_CASE("kl closed form matches a monte-carlo estimate") {
    RngStream rng(48, 0);
    for (int c = 0; c < 10; ++c) {
        const int d = 1 + rng.uniform_int(4);
        Tensor mu = init_normal({d}, 0, 1, rng);
        Tensor sigma = Tensor::zeros({d});
        for (int i = 0; i < d; ++i)
            sigma.mutable_data()[i] = static_cast<real_t>(rng.uniform(0.3, 2));
        const double closed = kl_standard_normal(mu, sigma).item();

        RngStream draw(48, 100 + c);
        const int n = 1000000;
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            double term = 0;
            for (int j = 0; j < d; ++j) {
                const double e = draw.normal();
                const double x = mu.data()[j] + sigma.data()[j] * e;
                // log q(x) - log p(x) for diagonal Gaussians.
                term += -std::log(double(sigma.data()[j])) - 0.5 * e * e +
                        0.5 * x * x;
            }
            acc += term;
        }
        const double mc = acc / n;
        CHECK(std::abs(closed - mc) <= 1e-2 * std::max(1.0, std::abs(closed)));
    }
}
