#include "doctest.h"

#include "les/error.hpp"
#include "les/mlp.hpp"
#include "les/random.hpp"
#include "support/test_support.hpp"

using namespace les;
using les::testing::central_difference;

TEST_CASE("shifted softplus values")
{
    CHECK(shifted_softplus(0.0) == 0.0);
    CHECK(shifted_softplus_d1(0.0) == 0.5);
    CHECK(shifted_softplus_d2(0.0) == 0.25);
    CHECK(shifted_softplus(1000.0) == doctest::Approx(1000.0 - std::numbers::ln2).epsilon(1e-15));
    CHECK(shifted_softplus(-1000.0) == doctest::Approx(-std::numbers::ln2).epsilon(1e-15));
    CHECK(std::isfinite(shifted_softplus_d2(-800.0)));
    // log(1 + e^2) - log 2
    CHECK(shifted_softplus(2.0) == doctest::Approx(1.4337808304830272).epsilon(1e-15));
    for (double x = -6; x <= 6; x += 0.37) {
        CHECK(std::abs(shifted_softplus_d1(x) - central_difference(shifted_softplus, x, 1e-5)) < 1e-9);
        CHECK(std::abs(shifted_softplus_d2(x) - central_difference(shifted_softplus_d1, x, 1e-5)) < 1e-9);
    }
}

TEST_CASE("layout and validation")
{
    const Mlp m({5, 7, 3});
    CHECK(m.parameter_count() == 7 * 6 + 3 * 8);
    CHECK(m.weight_offset(1) == 42);
    CHECK(m.bias_offset(0) == 35);
    CHECK(m.bias_offset(1) == 42 + 21);
    CHECK_THROWS_AS(Mlp({5}), UserError);
    CHECK_THROWS_AS(Mlp({5, 0, 1}), UserError);

    Rng rng(1);
    const auto r = Mlp::random({4, 6, 1}, rng);
    for (double p : r.parameters()) {
        CHECK(std::abs(p) <= 0.5);
    }
}

TEST_CASE("forward pass by hand")
{
    Mlp m({2, 2, 1});
    m.weight(0, 0, 0) = 1.0;
    m.weight(0, 0, 1) = -2.0;
    m.weight(0, 1, 0) = 0.5;
    m.weight(0, 1, 1) = 0.25;
    m.bias(0, 0) = 0.1;
    m.bias(0, 1) = -0.3;
    m.weight(1, 0, 0) = 3.0;
    m.weight(1, 0, 1) = -1.0;
    m.bias(1, 0) = 0.7;
    const std::vector<double> x{0.4, -0.9};
    const double h0 = shifted_softplus(0.4 + 1.8 + 0.1);
    const double h1 = shifted_softplus(0.2 - 0.225 - 0.3);
    CHECK(m.forward(x)[0] == doctest::Approx(3 * h0 - h1 + 0.7).epsilon(1e-15));
}

namespace {

double objective(const Mlp& m, const std::vector<double>& x, const std::vector<double>& xdot,
                 const std::vector<double>& a, const std::vector<double>& b)
{
    Mlp::Tape tape;
    m.forward(x, xdot, tape);
    double v = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        v += a[k] * tape.output()[k] + b[k] * tape.output_tangent()[k];
    return v;
}

} // namespace

TEST_CASE("tangent equals finite-difference directional derivative")
{
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = Mlp::random({6, 8, 5, 3}, rng);
        std::vector<double> x(6), xdot(6);
        for (int k = 0; k < 6; ++k) {
            x[k] = rng.normal();
            xdot[k] = rng.normal();
        }
        Mlp::Tape tape;
        m.forward(x, xdot, tape);
        const double h = 1e-5;
        std::vector<double> xp = x, xm = x;
        for (int k = 0; k < 6; ++k) {
            xp[k] += h * xdot[k];
            xm[k] -= h * xdot[k];
        }
        const auto yp = m.forward(xp), ym = m.forward(xm);
        for (int o = 0; o < 3; ++o)
            CHECK(std::abs(tape.output_tangent()[o] - (yp[o] - ym[o]) / (2 * h)) < 1e-9);
    }
}

TEST_CASE("reverse pass over value and tangent matches finite differences")
{
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto m = Mlp::random({4, 7, 5, 2}, rng);
        std::vector<double> x(4), xdot(4), a(2), b(2);
        for (int k = 0; k < 4; ++k) {
            x[k] = rng.normal();
            xdot[k] = rng.normal();
        }
        for (int k = 0; k < 2; ++k) {
            a[k] = rng.normal();
            b[k] = trial % 2 ? rng.normal() : 0.0;
        }
        Mlp::Tape tape;
        m.forward(x, xdot, tape);
        std::vector<double> pg(m.parameter_count(), 0.0), xg(4);
        m.backward(tape, a, b, pg, xg);

        const double h = 1e-6;
        double scale = 1e-8;
        for (double v : pg)
            scale = std::max(scale, std::abs(v));
        for (std::size_t p = 0; p < m.parameter_count(); ++p) {
            const double keep = m.parameters()[p];
            m.parameters()[p] = keep + h;
            const double up = objective(m, x, xdot, a, b);
            m.parameters()[p] = keep - h;
            const double down = objective(m, x, xdot, a, b);
            m.parameters()[p] = keep;
            CHECK(std::abs(pg[p] - (up - down) / (2 * h)) / scale < 1e-7);
        }
        for (int k = 0; k < 4; ++k) {
            auto xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            const double fd = (objective(m, xp, xdot, a, b) - objective(m, xm, xdot, a, b)) / (2 * h);
            CHECK(std::abs(xg[k] - fd) < 1e-7 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("backward accumulates into the parameter gradient")
{
    Rng rng(4);
    const auto m = Mlp::random({3, 4, 1}, rng);
    const std::vector<double> x{0.1, 0.2, 0.3};
    Mlp::Tape tape;
    m.forward(x, tape);
    std::vector<double> once(m.parameter_count(), 0.0), twice(m.parameter_count(), 0.0);
    const std::vector<double> adj{1.0};
    m.backward(tape, adj, {}, once, {});
    m.backward(tape, adj, {}, twice, {});
    m.backward(tape, adj, {}, twice, {});
    for (std::size_t p = 0; p < once.size(); ++p)
        CHECK(twice[p] == 2 * once[p]);
}
