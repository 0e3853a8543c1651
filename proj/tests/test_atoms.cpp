#include "doctest.h"

#include <set>

#include "les/atoms.hpp"
#include "les/error.hpp"
#include "les/extxyz.hpp"
#include "support/test_support.hpp"

using namespace les;
using les::testing::brute_minimum_image;

TEST_CASE("minimum_image examples")
{
    const Cell cube({10, 10, 10});
    CHECK(minimum_image({1, 1, 1}, cube) == Vec3{1, 1, 1});
    CHECK(minimum_image({6, 0, 0}, cube) == Vec3{-4, 0, 0});

    // brute-force shift scan, ties to the lower end: every component lands on -5
    const Vec3 d{-5, 5, 15};
    const Vec3 expected{brute_minimum_image(-5, 10), brute_minimum_image(5, 10), brute_minimum_image(15, 10)};
    CHECK(expected == Vec3{-5, -5, -5});
    CHECK(minimum_image(d, cube) == expected);
}

TEST_CASE("minimum_image matches shift scan and is idempotent")
{
    Rng rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
        const Cell cell({rng.uniform(1, 20), rng.uniform(1, 20), rng.uniform(1, 20)});
        const Vec3 d{rng.uniform(-60, 60), rng.uniform(-60, 60), rng.uniform(-60, 60)};
        const Vec3 m = minimum_image(d, cell);
        for (int a = 0; a < 3; ++a) {
            const double L = cell.length(a);
            CHECK(m[a] >= -L / 2);
            CHECK(m[a] < L / 2);
            CHECK(std::abs(m[a] - brute_minimum_image(d[a], L)) < 1e-12 * 60);
            // result differs from delta by a lattice vector
            const double shifts = (d[a] - m[a]) / L;
            CHECK(std::abs(shifts - std::round(shifts)) < 1e-9);
        }
        CHECK(minimum_image(m, cell) == m);
    }
}

TEST_CASE("neighbor list examples")
{
    Configuration single;
    single.cell = Cell({10, 10, 10});
    single.species = {"O"};
    single.positions = {{5, 5, 5}};
    CHECK(build_neighbor_list(single, 3.0).pair_count() == 0);

    Configuration pair;
    pair.cell = Cell({10, 10, 10});
    pair.species = {"O", "O"};
    pair.positions = {{0.5, 5, 5}, {9.9, 5, 5}};
    const auto nl = build_neighbor_list(pair, 1.0);
    REQUIRE(nl.entries[0].size() == 1);
    REQUIRE(nl.entries[1].size() == 1);
    CHECK(nl.entries[0][0].distance == doctest::Approx(0.6));
    CHECK(nl.entries[0][0].displacement.x == doctest::Approx(-0.6));
    CHECK(nl.entries[1][0].displacement.x == doctest::Approx(0.6));

    Configuration lattice;
    lattice.cell = Cell({9, 9, 9});
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y)
            for (int z = 0; z < 3; ++z) {
                lattice.species.push_back("Na");
                lattice.positions.push_back({3.0 * x, 3.0 * y, 3.0 * z});
            }
    const auto lnl = build_neighbor_list(lattice, 3.1);
    for (const auto& e : lnl.entries)
        CHECK(e.size() == 6);
    CHECK(les::testing::brute_neighbor_pairs(lattice, 3.1).size() == 27 * 6);
}

TEST_CASE("neighbor list rejects ambiguous minimum image")
{
    Configuration c;
    c.cell = Cell({6, 10, 10});
    c.species = {"O"};
    c.positions = {{1, 1, 1}};
    CHECK_THROWS_AS(build_neighbor_list(c, 3.0), UserError);
    CHECK_NOTHROW(build_neighbor_list(c, 3.0, {.multi_image = true}));
}

namespace {

std::set<std::tuple<int, int, long, long, long>> as_set(const NeighborList& nl)
{
    std::set<std::tuple<int, int, long, long, long>> s;
    for (std::size_t i = 0; i < nl.size(); ++i)
        for (const auto& n : nl.entries[i])
            s.emplace(int(i), n.j, std::lround(n.displacement.x * 1e8), std::lround(n.displacement.y * 1e8),
                      std::lround(n.displacement.z * 1e8));
    return s;
}

} // namespace

TEST_CASE("neighbor list equals brute-force enumeration")
{
    Rng rng(5);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 1 + static_cast<int>(rng.index(64));
        const bool multi = trial % 3 == 0;
        const Vec3 L{rng.uniform(6, 16), rng.uniform(6, 16), rng.uniform(6, 16)};
        const auto c = les::testing::random_configuration(rng, n, L, {"H", "O"});
        const double min_l = std::min({L.x, L.y, L.z});
        const double r_cut = multi ? rng.uniform(0.5, 1.3) * min_l : rng.uniform(0.5, 0.49 * min_l);
        const auto nl = build_neighbor_list(c, r_cut, {.multi_image = multi});

        std::set<std::tuple<int, int, long, long, long>> ref;
        for (const auto& [i, j, x, y, z] : les::testing::brute_neighbor_pairs(c, r_cut))
            ref.emplace(i, j, std::lround(x * 1e8), std::lround(y * 1e8), std::lround(z * 1e8));
        CHECK(as_set(nl) == ref);

        for (std::size_t i = 0; i < nl.size(); ++i) {
            for (const auto& nb : nl.entries[i]) {
                CHECK(nb.distance < r_cut);
                // symmetric partner with negated displacement
                const auto& back = nl.entries[nb.j];
                const bool found = std::any_of(back.begin(), back.end(), [&](const Neighbor& m) {
                    return m.j == int(i) && norm(m.displacement + nb.displacement) < 1e-9;
                });
                CHECK(found);
            }
            CHECK(std::is_sorted(nl.entries[i].begin(), nl.entries[i].end(),
                                 [](const Neighbor& a, const Neighbor& b) { return a.j < b.j; }));
        }
    }
}

TEST_CASE("extxyz parse examples")
{
    const auto frames = parse_extxyz("1\nLattice=\"10 0 0 0 10 0 0 0 10\" Properties=species:S:1:pos:R:3 "
                                     "energy=-1.0 pbc=\"T T T\"\nO 1 2 3\n");
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].size() == 1);
    CHECK(frames[0].cell.volume() == doctest::Approx(1000.0));
    REQUIRE(frames[0].labels.energy.has_value());
    CHECK(*frames[0].labels.energy == -1.0);

    try {
        parse_extxyz("1\nLattice=\"10 1 0 0 10 0 0 0 10\" Properties=species:S:1:pos:R:3\nO 0 0 0\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("non-orthorhombic cell") != std::string::npos);
        CHECK(e.line() == 2);
    }

    CHECK_THROWS_AS(parse_extxyz("3\nLattice=\"10 0 0 0 10 0 0 0 10\" Properties=species:S:1:pos:R:3\nO 0 0 0\n"),
                    ParseError);
    CHECK_THROWS_AS(parse_extxyz("x\n"), ParseError);
    CHECK_THROWS_AS(parse_extxyz("1\nProperties=species:S:1:pos:R:3\nO 0 0 0\n"), ParseError);
    CHECK_THROWS_AS(parse_extxyz("1\nLattice=\"10 0 0 0 10 0 0 0 10\" Properties=species:S:1:pos:R:3\nO 0 0\n"),
                    ParseError);
}

TEST_CASE("extxyz multi-frame with forces")
{
    const auto frames = parse_extxyz(
        "2\nLattice=\"5 0 0 0 6 0 0 0 7\" Properties=species:S:1:pos:R:3:forces:R:3 energy=2.5\n"
        "H 0 0 0 1 2 3\nO 1 1 1 -1 -2 -3\n"
        "1\nLattice=\"5 0 0 0 6 0 0 0 7\" Properties=species:S:1:pos:R:3 step=4\nH 0 0 0\n");
    REQUIRE(frames.size() == 2);
    REQUIRE(frames[0].labels.forces.has_value());
    CHECK((*frames[0].labels.forces)[1] == Vec3{-1, -2, -3});
    CHECK(frames[1].info.at("step") == "4");
    CHECK_FALSE(frames[1].labels.energy.has_value());
}

TEST_CASE("extxyz round trip is lossless")
{
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Configuration> configs;
        const int frames = 1 + static_cast<int>(rng.index(3));
        for (int f = 0; f < frames; ++f) {
            auto c = les::testing::random_configuration(
                rng, 1 + static_cast<int>(rng.index(12)),
                {rng.uniform(2, 40), rng.uniform(2, 40), rng.uniform(2, 40)}, {"H", "O", "Na"});
            for (auto& p : c.positions)
                p = p * rng.uniform(-3, 3);
            if (rng.uniform() < 0.7)
                c.labels.energy = rng.uniform(-1e4, 1e4) * std::pow(10.0, rng.uniform(-8, 3));
            if (rng.uniform() < 0.7) {
                std::vector<Vec3> fr;
                for (std::size_t a = 0; a < c.size(); ++a)
                    fr.push_back({rng.normal(), rng.normal() * 1e-7, rng.normal() * 1e5});
                c.labels.forces = fr;
            }
            if (rng.uniform() < 0.3) {
                std::vector<Vec3> v;
                for (std::size_t a = 0; a < c.size(); ++a)
                    v.push_back({rng.normal(), rng.normal(), rng.normal()});
                c.velocities = v;
                c.info["time"] = "12.5";
            }
            configs.push_back(std::move(c));
        }
        const auto back = parse_extxyz(write_extxyz(configs));
        REQUIRE(back.size() == configs.size());
        for (std::size_t f = 0; f < configs.size(); ++f) {
            CHECK(back[f].species == configs[f].species);
            CHECK(back[f].positions == configs[f].positions);
            CHECK(back[f].cell == configs[f].cell);
            CHECK(back[f].labels.energy == configs[f].labels.energy);
            CHECK(back[f].labels.forces == configs[f].labels.forces);
            CHECK(back[f].velocities == configs[f].velocities);
            CHECK(back[f].info == configs[f].info);
        }
    }
}
