#include "les/atoms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <tuple>
#include <unordered_map>

#include "les/error.hpp"

namespace les {

Cell::Cell(const Vec3& lengths) : lengths_(lengths)
{
    for (int a = 0; a < 3; ++a) {
        if (!(lengths_[a] > 0.0) || !std::isfinite(lengths_[a]))
            throw UserError("cell lengths must be positive and finite");
    }
}

double Cell::min_length() const
{
    return std::min({lengths_.x, lengths_.y, lengths_.z});
}

void Configuration::validate() const
{
    if (positions.empty())
        throw UserError("configuration has no atoms");
    if (species.size() != positions.size())
        throw UserError("species and positions have different lengths");
    for (const auto& r : positions) {
        if (!std::isfinite(r.x) || !std::isfinite(r.y) || !std::isfinite(r.z))
            throw UserError("non-finite atomic position");
    }
    if (labels.forces && labels.forces->size() != positions.size())
        throw UserError("force label rows do not match atom count");
    if (velocities && velocities->size() != positions.size())
        throw UserError("velocity rows do not match atom count");
}

static double image_component(double d, double length)
{
    double r = d - length * std::floor(d / length + 0.5);
    // floor() rounding can land exactly on the open end of the interval
    if (r >= 0.5 * length)
        r -= length;
    else if (r < -0.5 * length)
        r += length;
    return r;
}

Vec3 minimum_image(const Vec3& delta, const Cell& cell)
{
    return {image_component(delta.x, cell.length(0)),
            image_component(delta.y, cell.length(1)),
            image_component(delta.z, cell.length(2))};
}

Vec3 wrap_position(const Vec3& position, const Cell& cell)
{
    Vec3 out;
    for (int a = 0; a < 3; ++a) {
        const double length = cell.length(a);
        double w = position[a] - length * std::floor(position[a] / length);
        if (w >= length)
            w -= length;
        out[a] = w;
    }
    return out;
}

std::size_t NeighborList::pair_count() const
{
    std::size_t n = 0;
    for (const auto& e : entries)
        n += e.size();
    return n;
}

namespace {

bool neighbor_less(const Neighbor& a, const Neighbor& b)
{
    return std::tie(a.j, a.displacement.x, a.displacement.y, a.displacement.z)
         < std::tie(b.j, b.displacement.x, b.displacement.y, b.displacement.z);
}

void build_multi_image(const Configuration& config, double r_cut, NeighborList& nl)
{
    const Cell& cell = config.cell;
    std::array<int, 3> reach{};
    for (int a = 0; a < 3; ++a)
        reach[a] = static_cast<int>(std::ceil(r_cut / cell.length(a)));
    const double rc2 = r_cut * r_cut;
    const std::size_t n = config.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const Vec3 base = minimum_image(config.positions[j] - config.positions[i], cell);
            for (int nx = -reach[0]; nx <= reach[0]; ++nx)
                for (int ny = -reach[1]; ny <= reach[1]; ++ny)
                    for (int nz = -reach[2]; nz <= reach[2]; ++nz) {
                        const Vec3 d = base + Vec3{nx * cell.length(0), ny * cell.length(1),
                                                   nz * cell.length(2)};
                        const double d2 = dot(d, d);
                        if (d2 >= rc2 || d2 == 0.0)
                            continue;
                        nl.entries[i].push_back({static_cast<int>(j), d, std::sqrt(d2)});
                    }
        }
    }
}

void build_single_image(const Configuration& config, double r_cut, NeighborList& nl)
{
    const Cell& cell = config.cell;
    const std::size_t n = config.size();
    const double rc2 = r_cut * r_cut;

    std::array<int, 3> bins{};
    for (int a = 0; a < 3; ++a)
        bins[a] = std::max(1, static_cast<int>(std::floor(cell.length(a) / r_cut)));

    auto add_pair = [&](std::size_t i, std::size_t j) {
        const Vec3 d = minimum_image(config.positions[j] - config.positions[i], cell);
        const double d2 = dot(d, d);
        if (d2 < rc2 && i != j)
            nl.entries[i].push_back({static_cast<int>(j), d, std::sqrt(d2)});
    };

    if (bins[0] < 3 || bins[1] < 3 || bins[2] < 3) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                add_pair(i, j);
        return;
    }

    auto bin_of = [&](const Vec3& r) {
        const Vec3 w = wrap_position(r, cell);
        std::array<int, 3> b{};
        for (int a = 0; a < 3; ++a)
            b[a] = std::min(bins[a] - 1, static_cast<int>(w[a] / cell.length(a) * bins[a]));
        return b;
    };
    auto flat = [&](int bx, int by, int bz) { return (bx * bins[1] + by) * bins[2] + bz; };

    std::vector<std::vector<int>> members(static_cast<std::size_t>(bins[0]) * bins[1] * bins[2]);
    std::vector<std::array<int, 3>> atom_bin(n);
    for (std::size_t i = 0; i < n; ++i) {
        atom_bin[i] = bin_of(config.positions[i]);
        members[flat(atom_bin[i][0], atom_bin[i][1], atom_bin[i][2])].push_back(static_cast<int>(i));
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = atom_bin[i];
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    const int bx = (b[0] + dx + bins[0]) % bins[0];
                    const int by = (b[1] + dy + bins[1]) % bins[1];
                    const int bz = (b[2] + dz + bins[2]) % bins[2];
                    for (int j : members[flat(bx, by, bz)])
                        add_pair(i, static_cast<std::size_t>(j));
                }
    }
}

} // namespace

NeighborList build_neighbor_list(const Configuration& config, double r_cut, NeighborOptions options)
{
    if (!(r_cut > 0.0))
        throw UserError("neighbor cutoff must be positive");
    if (!options.multi_image && r_cut >= 0.5 * config.cell.min_length())
        throw UserError("cutoff " + std::to_string(r_cut)
                        + " A is not below half the shortest cell length; minimum image is ambiguous");

    NeighborList nl;
    nl.r_cut = r_cut;
    nl.entries.resize(config.size());
    if (options.multi_image)
        build_multi_image(config, r_cut, nl);
    else
        build_single_image(config, r_cut, nl);
    for (auto& e : nl.entries)
        std::sort(e.begin(), e.end(), neighbor_less);
    return nl;
}

double atomic_mass(const std::string& symbol)
{
    static const std::unordered_map<std::string, double> masses = {
        {"H", 1.008},   {"He", 4.0026}, {"Li", 6.94},   {"C", 12.011},  {"N", 14.007},
        {"O", 15.999},  {"F", 18.998},  {"Na", 22.990}, {"Mg", 24.305}, {"Al", 26.982},
        {"Si", 28.085}, {"P", 30.974},  {"S", 32.06},   {"Cl", 35.45},  {"K", 39.098},
        {"Ca", 40.078}, {"Ar", 39.948}, {"Br", 79.904}, {"I", 126.90},
    };
    const auto it = masses.find(symbol);
    if (it == masses.end())
        throw UserError("no atomic mass known for species '" + symbol + "'");
    return it->second;
}

} // namespace les
