#include "doctest.h"

#include "les/error.hpp"
#include "les/latent_ewald.hpp"
#include "support/test_support.hpp"

using namespace les;
using les::testing::naive_lr_energy;
using les::testing::rel_err;

namespace {

struct System {
    LatentCharges q;
    std::vector<Vec3> r;
    Cell cell;
};

System random_system(Rng& rng, int n, int channels)
{
    System s;
    s.cell = Cell({rng.uniform(5, 14), rng.uniform(5, 14), rng.uniform(5, 14)});
    s.q = LatentCharges(n, channels);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < channels; ++c)
            s.q(i, c) = rng.uniform(-1, 1);
        s.r.push_back({rng.uniform(0, s.cell.length(0)), rng.uniform(0, s.cell.length(1)),
                       rng.uniform(0, s.cell.length(2))});
    }
    return s;
}

std::vector<double> as_vector(const LatentCharges& q)
{
    return {q.values().begin(), q.values().end()};
}

} // namespace

TEST_CASE("reciprocal set sizes")
{
    const Cell box({30, 30, 30});
    const double kc = 2 * std::numbers::pi / 3;
    CHECK(enumerate_kvectors(box, kc, 1.0, false).size() == 4138);
    CHECK(enumerate_kvectors(box, kc, 1.0, true).size() == 2069);

    // first shell of a 10 A cube has |k| = 2 pi / 10
    const Cell small({10, 10, 10});
    CHECK(enumerate_kvectors(small, 0.63, 1.0, false).size() == 6);
    CHECK(enumerate_kvectors(small, 0.62, 1.0).empty());

    const auto ks = enumerate_kvectors(small, 1.0, 1.0);
    for (std::size_t m = 0; m < ks.size(); ++m) {
        const auto& n = ks.indices[m];
        CHECK((n[0] > 0 || (n[0] == 0 && (n[1] > 0 || (n[1] == 0 && n[2] > 0)))));
        CHECK(ks.ksq[m] < 1.0);
        if (m > 0)
            CHECK(ks.indices[m - 1] < n);
    }
    CHECK_THROWS_AS(enumerate_kvectors(small, 1.0, 0.0), UserError);
}

TEST_CASE("single charge in a cube")
{
    // |S(k)|^2 = q^2 for every k, so E = q^2/V sum_k w(k) over the full set.
    const Cell box({10, 10, 10});
    const double kc = 1.3;
    LatentCharges q(1, 1, {0.7});
    const std::vector<Vec3> r{{1.0, 2.0, 3.0}};
    double ref = 0.0;
    constexpr double two_pi = 2 * std::numbers::pi;
    for (int nx = -3; nx <= 3; ++nx)
        for (int ny = -3; ny <= 3; ++ny)
            for (int nz = -3; nz <= 3; ++nz) {
                const double k2 = (nx * nx + ny * ny + nz * nz) * (two_pi / 10) * (two_pi / 10);
                if (k2 > 0 && k2 < kc * kc)
                    ref += std::exp(-k2 / 2) / k2;
            }
    ref *= 0.49 / 1000.0;
    CHECK(rel_err(lr_energy(q, r, enumerate_kvectors(box, kc, 1.0)), ref) < 1e-14);
}

TEST_CASE("empty reciprocal set gives zero energy and gradients")
{
    const Cell box({10, 10, 10});
    const auto ks = enumerate_kvectors(box, 0.5, 1.0);
    LatentCharges q(2, 1, {1.0, -1.0});
    const std::vector<Vec3> r{{1, 1, 1}, {2, 2, 2}};
    const auto g = lr_gradients(q, r, ks);
    CHECK(g.energy == 0.0);
    CHECK(g.dq == std::vector<double>{0.0, 0.0});
    CHECK(g.dr[0] == Vec3{0, 0, 0});
}

TEST_CASE("structured sum equals direct full-space summation")
{
    Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng.index(40));
        const int d = 1 + static_cast<int>(rng.index(4));
        const auto s = random_system(rng, n, d);
        const double kc = rng.uniform(0.8, 3.2);
        const double sigma = rng.uniform(0.5, 1.5);
        const double ref = naive_lr_energy(as_vector(s.q), d, s.r, s.cell, kc, sigma);
        const double half = lr_energy(s.q, s.r, enumerate_kvectors(s.cell, kc, sigma, true));
        const double full = lr_energy(s.q, s.r, enumerate_kvectors(s.cell, kc, sigma, false));
        CHECK(rel_err(half, ref) < 1e-12);
        CHECK(rel_err(full, ref) < 1e-12);
    }
}

TEST_CASE("energy invariants")
{
    Rng rng(202);
    SUBCASE("non-negative")
    {
        for (int trial = 0; trial < 1000; ++trial) {
            const auto s = random_system(rng, 1 + static_cast<int>(rng.index(12)), 2);
            CHECK(lr_energy(s.q, s.r, enumerate_kvectors(s.cell, 2.0, 1.0)) >= 0.0);
        }
    }
    SUBCASE("translation, wrapping and permutation")
    {
        for (int trial = 0; trial < 20; ++trial) {
            auto s = random_system(rng, 10, 3);
            const auto ks = enumerate_kvectors(s.cell, 2.5, 1.0);
            const double e0 = lr_energy(s.q, s.r, ks);
            const Vec3 t{rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-9, 9)};
            auto moved = s.r;
            for (auto& p : moved)
                p = p + t;
            CHECK(rel_err(lr_energy(s.q, moved, ks), e0) < 1e-12);
            for (auto& p : moved)
                p = wrap_position(p, s.cell);
            CHECK(rel_err(lr_energy(s.q, moved, ks), e0) < 1e-12);

            LatentCharges qr(10, 3);
            std::vector<Vec3> rr(10);
            for (int i = 0; i < 10; ++i) {
                rr[i] = s.r[9 - i];
                for (int c = 0; c < 3; ++c)
                    qr(i, c) = s.q(9 - i, c);
            }
            CHECK(rel_err(lr_energy(qr, rr, ks), e0) < 1e-12);
        }
    }
    SUBCASE("quadratic in q and additive over channels")
    {
        for (int trial = 0; trial < 20; ++trial) {
            const auto s = random_system(rng, 8, 3);
            const auto ks = enumerate_kvectors(s.cell, 2.5, 1.0);
            const double e = lr_energy(s.q, s.r, ks);
            LatentCharges scaled = s.q;
            for (double& v : scaled.values())
                v *= -2.5;
            CHECK(rel_err(lr_energy(scaled, s.r, ks), 6.25 * e) < 1e-12);
            double sum = 0.0;
            for (int c = 0; c < 3; ++c) {
                LatentCharges one(8, 1);
                for (int i = 0; i < 8; ++i)
                    one(i, 0) = s.q(i, c);
                sum += lr_energy(one, s.r, ks);
            }
            CHECK(rel_err(sum, e) < 1e-12);
        }
    }
}

TEST_CASE("gradients match finite differences")
{
    Rng rng(303);
    const double h = 1e-5;
    for (int trial = 0; trial < 25; ++trial) {
        auto s = random_system(rng, 2 + static_cast<int>(rng.index(10)), 1 + static_cast<int>(rng.index(3)));
        const auto ks = enumerate_kvectors(s.cell, rng.uniform(1.5, 3.0), rng.uniform(0.7, 1.3));
        const auto g = lr_gradients(s.q, s.r, ks);
        CHECK(rel_err(g.energy, lr_energy(s.q, s.r, ks)) < 1e-14);
        const int d = s.q.channels();
        double scale = 1e-8;
        for (double v : g.dq)
            scale = std::max(scale, std::abs(v));
        for (int i = 0; i < s.q.atoms(); ++i)
            for (int c = 0; c < d; ++c) {
                auto qp = s.q, qm = s.q;
                qp(i, c) += h;
                qm(i, c) -= h;
                const double fd = (lr_energy(qp, s.r, ks) - lr_energy(qm, s.r, ks)) / (2 * h);
                CHECK(std::abs(g.dq[i * d + c] - fd) / scale < 1e-7);
            }
        double rscale = 1e-8;
        for (const auto& v : g.dr)
            rscale = std::max(rscale, norm(v));
        for (int i = 0; i < s.q.atoms(); ++i)
            for (int a = 0; a < 3; ++a) {
                auto rp = s.r, rm = s.r;
                rp[i][a] += h;
                rm[i][a] -= h;
                const double fd = (lr_energy(s.q, rp, ks) - lr_energy(s.q, rm, ks)) / (2 * h);
                CHECK(std::abs(g.dr[i][a] - fd) / rscale < 1e-7);
            }
        // translation invariance: forces on a closed system sum to zero
        Vec3 total{};
        for (const auto& v : g.dr)
            total = total + v;
        CHECK(norm(total) < 1e-12 * std::max(1.0, rscale) * s.q.atoms());
    }
}

TEST_CASE("directional derivative and its charge gradient")
{
    Rng rng(404);
    const double h = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        auto s = random_system(rng, 2 + static_cast<int>(rng.index(8)), 1 + static_cast<int>(rng.index(3)));
        const int n = s.q.atoms(), d = s.q.channels();
        const auto ks = enumerate_kvectors(s.cell, 2.2, 1.0);
        std::vector<double> qdot(n * d);
        std::vector<Vec3> rdot(n);
        for (double& v : qdot)
            v = rng.normal();
        for (auto& v : rdot)
            v = {rng.normal(), rng.normal(), rng.normal()};

        const auto t = lr_tangent(s.q, qdot, s.r, rdot, ks);
        const auto g = lr_gradients(s.q, s.r, ks);
        double ref = 0.0;
        for (int k = 0; k < n * d; ++k)
            ref += g.dq[k] * qdot[k];
        for (int i = 0; i < n; ++i)
            ref += dot(g.dr[i], rdot[i]);
        CHECK(rel_err(t.energy_rate, ref, 1e-10) < 1e-11);

        auto rate = [&](const LatentCharges& q) { return lr_tangent(q, qdot, s.r, rdot, ks).energy_rate; };
        double scale = 1e-8;
        for (double v : t.dq)
            scale = std::max(scale, std::abs(v));
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c) {
                auto qp = s.q, qm = s.q;
                qp(i, c) += h;
                qm(i, c) -= h;
                const double fd = (rate(qp) - rate(qm)) / (2 * h);
                CHECK(std::abs(t.dq[i * d + c] - fd) / scale < 1e-7);
            }
    }
}

TEST_CASE("structure factor of a single unit charge is a pure phase")
{
    const Cell box({8, 9, 10});
    const auto ks = enumerate_kvectors(box, 2.0, 1.0);
    LatentCharges q(1, 1, {1.0});
    const std::vector<Vec3> r{{1.3, -0.4, 7.7}};
    const auto S = structure_factor(q, r, ks);
    REQUIRE(S.size() == ks.size());
    for (std::size_t m = 0; m < ks.size(); ++m) {
        const double phase = dot(ks.kvecs[m], r[0]);
        CHECK(std::abs(S[m] - std::complex<double>(std::cos(phase), std::sin(phase))) < 1e-13);
    }
}
