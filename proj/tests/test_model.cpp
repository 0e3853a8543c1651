#include "doctest.h"

#include <filesystem>

#include "les/error.hpp"
#include "les/model.hpp"
#include "support/test_support.hpp"

using namespace les;
using les::testing::rel_err;

namespace {

ModelParams small_model(bool lr_enabled, std::uint64_t seed)
{
    DescriptorConfig d;
    d.r_cut = 3.5;
    d.n_radial = 3;
    d.l_max = 2;
    d.species = {"H", "O"};
    LrSettings lr;
    lr.enabled = lr_enabled;
    lr.k_cut = 2.5;
    lr.channels = 2;
    auto p = ModelParams::initialize(d, lr, {8, 6}, seed);
    Rng rng(seed + 1000);
    for (std::size_t k = 0; k < p.feature_shift.size(); ++k) {
        p.feature_shift[k] = rng.uniform(-0.2, 0.2);
        p.feature_scale[k] = rng.uniform(0.5, 2.0);
    }
    p.energy_offsets = {-0.3, -2.1};
    return p;
}

Configuration random_box(Rng& rng, int n)
{
    return les::testing::random_spread_configuration(rng, n, {rng.uniform(7.5, 9.5), rng.uniform(7.5, 9.5),
                                                               rng.uniform(7.5, 9.5)},
                                                     {"H", "O"}, 0.9);
}

} // namespace

TEST_CASE("energy decomposition and latent charges")
{
    Rng rng(1);
    const auto c = random_box(rng, 8);
    const auto lr = predict(small_model(true, 5), c);
    CHECK(lr.energy == lr.energy_sr + lr.energy_lr);
    REQUIRE(lr.latent_q.has_value());
    CHECK(lr.latent_q->atoms() == 8);
    CHECK(lr.latent_q->channels() == 2);
    CHECK(lr.energy_lr >= 0.0);

    const auto sr = predict(small_model(false, 5), c);
    CHECK_FALSE(sr.latent_q.has_value());
    CHECK(sr.energy_lr == 0.0);
    // identical seed gives the identical short-range head
    CHECK(sr.energy_sr == lr.energy_sr);
}

TEST_CASE("forces are the negative energy gradient")
{
    Rng rng(2);
    const double h = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        const auto params = small_model(trial % 2 == 0, 10 + trial);
        auto c = random_box(rng, 6 + trial % 4);
        const auto pred = predict(params, c);
        double scale = 1e-6;
        for (const auto& f : pred.forces)
            scale = std::max(scale, norm(f));
        for (std::size_t i = 0; i < c.size(); ++i)
            for (int a = 0; a < 3; ++a) {
                auto p = c, m = c;
                p.positions[i][a] += h;
                m.positions[i][a] -= h;
                const double fd = -(predict(params, p).energy - predict(params, m).energy) / (2 * h);
                CHECK(std::abs(pred.forces[i][a] - fd) / scale < 1e-6);
            }
        Vec3 total{};
        for (const auto& f : pred.forces)
            total = total + f;
        CHECK(norm(total) < 1e-10 * scale * c.size());
    }
}

TEST_CASE("energy is invariant under translation and cell-consistent axis permutation")
{
    Rng rng(3);
    const auto params = small_model(true, 7);
    for (int trial = 0; trial < 5; ++trial) {
        const auto c = random_box(rng, 10);
        const double e = predict(params, c).energy;
        auto t = c;
        const Vec3 shift{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        for (auto& r : t.positions)
            r = r + shift;
        CHECK(rel_err(predict(params, t).energy, e) < 1e-12);

        auto p = c;
        const Vec3 L = c.cell.lengths();
        p.cell = Cell({L.y, L.z, L.x});
        for (auto& r : p.positions)
            r = Vec3{r.y, r.z, r.x};
        CHECK(rel_err(predict(params, p).energy, e) < 1e-12);
    }
}

TEST_CASE("short-range energy is extensive, long-range energy couples distant fragments")
{
    Rng rng(4);
    const auto params = small_model(true, 9);
    auto fragment = les::testing::random_spread_configuration(rng, 5, {4, 4, 4}, {"H", "O"}, 0.9);

    auto embed = [&](const std::vector<Configuration>& parts, const std::vector<Vec3>& origins) {
        Configuration c;
        c.cell = Cell({30, 14, 14});
        for (std::size_t k = 0; k < parts.size(); ++k)
            for (std::size_t i = 0; i < parts[k].size(); ++i) {
                c.species.push_back(parts[k].species[i]);
                c.positions.push_back(parts[k].positions[i] + origins[k]);
            }
        return c;
    };
    const auto single = predict(params, embed({fragment}, {{2, 2, 2}}));
    const auto pair = predict(params, embed({fragment, fragment}, {{2, 2, 2}, {17, 2, 2}}));
    // both copies see identical local environments
    CHECK(rel_err(pair.energy_sr, 2 * single.energy_sr) < 1e-12);
    // |S(k)|^2 for two copies is not twice the single-copy value
    CHECK(std::abs(pair.energy_lr - 2 * single.energy_lr) > 1e-6 * std::abs(single.energy_lr));

    // a short-range-only model cannot feel a displacement of a fragment beyond r_cut
    const auto sr_params = small_model(false, 9);
    const auto near = predict(sr_params, embed({fragment, fragment}, {{2, 2, 2}, {12, 2, 2}}));
    const auto far = predict(sr_params, embed({fragment, fragment}, {{2, 2, 2}, {17, 2, 2}}));
    CHECK(rel_err(near.energy, far.energy) < 1e-12);
    const auto near_lr = predict(params, embed({fragment, fragment}, {{2, 2, 2}, {12, 2, 2}}));
    CHECK(std::abs(near_lr.energy - pair.energy) > 1e-8);
}

namespace {

// L = a (E - E0)^2 + sum b_i . (F_i - F0_i)^2, with its adjoints.
struct Quadratic {
    double e0 = 0.0;
    std::vector<Vec3> f0;
    double a = 0.7;
    double b = 0.3;
    bool forces = true;

    double value(const Prediction& p) const
    {
        double v = a * (p.energy - e0) * (p.energy - e0);
        if (forces)
            for (std::size_t i = 0; i < f0.size(); ++i) {
                const Vec3 d = p.forces[i] - f0[i];
                v += b * dot(d, d);
            }
        return v;
    }
    PredictionAdjoint adjoint(const Prediction& p) const
    {
        PredictionAdjoint adj;
        adj.energy = 2 * a * (p.energy - e0);
        if (forces)
            for (std::size_t i = 0; i < f0.size(); ++i)
                adj.forces.push_back((p.forces[i] - f0[i]) * (2 * b));
        return adj;
    }
};

} // namespace

TEST_CASE("parameter gradient of energy and force losses matches finite differences")
{
    Rng rng(5);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        auto params = small_model(trial % 2 == 0, 40 + trial);
        const auto c = random_box(rng, 5 + trial % 3);
        Quadratic loss;
        loss.e0 = rng.normal();
        loss.forces = trial % 5 != 4;
        for (std::size_t i = 0; i < c.size(); ++i)
            loss.f0.push_back({rng.normal(), rng.normal(), rng.normal()});

        const auto pg = parameter_gradient(params, c, [&](const Prediction& p) { return loss.adjoint(p); });
        CHECK(pg.prediction.energy == predict(params, c).energy);
        const auto flat = params.pack();
        REQUIRE(pg.gradient.size() == flat.size());

        double scale = 1e-8;
        for (double g : pg.gradient)
            scale = std::max(scale, std::abs(g));
        // every parameter of the small heads would be slow; sample a spread of indices
        double worst = 0.0;
        for (std::size_t k = trial % 3; k < flat.size(); k += 3) {
            auto up = flat, down = flat;
            up[k] += h;
            down[k] -= h;
            params.unpack(up);
            const double lu = loss.value(predict(params, c));
            params.unpack(down);
            const double ld = loss.value(predict(params, c));
            params.unpack(flat);
            worst = std::max(worst, std::abs(pg.gradient[k] - (lu - ld) / (2 * h)) / scale);
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("pack and unpack round trip")
{
    auto p = small_model(true, 3);
    auto flat = p.pack();
    CHECK(flat.size() == p.trainable_count());
    for (double& v : flat)
        v += 1.0;
    p.unpack(flat);
    CHECK(p.pack() == flat);
    CHECK_THROWS_AS(p.unpack(std::vector<double>(3)), UserError);

    const auto sr = small_model(false, 3);
    CHECK(sr.trainable_count() == sr.sr_head.parameter_count() + 2);
}

TEST_CASE("checkpoint round trip is bit-identical")
{
    Rng rng(6);
    const auto params = small_model(true, 11);
    const auto text = checkpoint_to_string(params);
    const auto back = checkpoint_from_string(text);
    CHECK(back == params);
    CHECK(checkpoint_to_string(back) == text);
    const auto c = random_box(rng, 9);
    const auto a = predict(params, c), b = predict(back, c);
    CHECK(a.energy == b.energy);
    CHECK(a.forces == b.forces);

    const auto path = std::filesystem::temp_directory_path() / "les_checkpoint_test.json";
    save_checkpoint(params, path);
    CHECK(load_checkpoint(path) == params);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), UserError);
}

TEST_CASE("checkpoint errors")
{
    const auto text = checkpoint_to_string(small_model(true, 12));
    try {
        checkpoint_from_string(text.substr(0, text.find("\"sr_head\"")));
        FAIL("expected an error");
    } catch (const UserError& e) {
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
        CHECK(std::string(e.what()).find("sr_head") != std::string::npos);
    }
    auto bumped = text;
    const auto pos = bumped.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    bumped.replace(pos, 19, "\"format_version\": 99");
    try {
        checkpoint_from_string(bumped);
        FAIL("expected an error");
    } catch (const UserError& e) {
        CHECK(std::string(e.what()).find("version 99") != std::string::npos);
    }
    CHECK_THROWS_AS(checkpoint_from_string("{}"), UserError);
}

TEST_CASE("unknown species and non-finite forces are reported")
{
    const auto params = small_model(true, 13);
    Configuration c;
    c.cell = Cell({10, 10, 10});
    c.species = {"H", "Cl"};
    c.positions = {{1, 1, 1}, {2, 2, 2}};
    CHECK_THROWS_AS(predict(params, c), UserError);

    auto bad = params;
    bad.sr_head.parameters()[0] = std::numeric_limits<double>::quiet_NaN();
    c.species = {"H", "O"};
    CHECK_THROWS_AS(predict(bad, c), NumericalError);
}

TEST_CASE("potential caches the reciprocal set per cell")
{
    Rng rng(7);
    const auto params = small_model(true, 14);
    Potential pot(params);
    const auto c1 = random_box(rng, 6);
    const auto c2 = random_box(rng, 6);
    CHECK(pot.evaluate(c1).energy == predict(params, c1).energy);
    CHECK(pot.evaluate(c2).energy == predict(params, c2).energy);
    CHECK(pot.evaluate(c1).energy == predict(params, c1).energy);
}

TEST_CASE("zeroed charge head reproduces the short-range model")
{
    Rng rng(8);
    auto lr = small_model(true, 15);
    const int last = lr.lr_head.layer_count() - 1;
    for (int o = 0; o < lr.lr_head.output_dim(); ++o) {
        for (int i = 0; i < lr.lr_head.widths()[last]; ++i)
            lr.lr_head.weight(last, o, i) = 0.0;
        lr.lr_head.bias(last, o) = 0.0;
    }
    auto sr = lr;
    sr.lr.enabled = false;
    const auto c = random_box(rng, 9);
    const auto a = predict(lr, c), b = predict(sr, c);
    CHECK(a.energy_lr == 0.0);
    CHECK(a.energy == b.energy);
    CHECK(a.forces == b.forces);

    const auto back = checkpoint_from_string(checkpoint_to_string(sr));
    CHECK_FALSE(back.lr.enabled);
    CHECK(predict(back, c).energy_lr == 0.0);
}

TEST_CASE("energy is permutation invariant and forces permute with atoms")
{
    Rng rng(9);
    const auto params = small_model(true, 16);
    const auto c = random_box(rng, 10);
    const auto base = predict(params, c);
    Configuration p = c;
    const std::vector<int> perm{3, 7, 0, 9, 1, 2, 8, 4, 6, 5};
    for (int k = 0; k < 10; ++k) {
        p.species[k] = c.species[perm[k]];
        p.positions[k] = c.positions[perm[k]];
    }
    const auto pp = predict(params, p);
    CHECK(rel_err(pp.energy, base.energy) < 1e-12);
    for (int k = 0; k < 10; ++k)
        CHECK(norm(pp.forces[k] - base.forces[perm[k]]) < 1e-10 * std::max(1.0, norm(base.forces[perm[k]])));
}

TEST_CASE("energy is continuous as an atom crosses the cutoff")
{
    const auto params = small_model(true, 17);
    Configuration c;
    c.cell = Cell({12, 12, 12});
    c.species = {"O", "H", "H"};
    c.positions = {{5, 5, 5}, {5.9, 5.3, 5}, {5, 5, 5}};
    const double rc = params.descriptor.r_cut;
    double prev = 0.0;
    double worst = 0.0;
    for (int step = -20; step <= 20; ++step) {
        c.positions[2] = Vec3{5.0 + rc + step * 1e-6, 5.0, 5.0};
        const double e = predict(params, c).energy_sr;
        if (step > -20)
            worst = std::max(worst, std::abs(e - prev));
        prev = e;
    }
    CHECK(worst < 1e-8);
}
