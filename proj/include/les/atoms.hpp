#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "les/vec3.hpp"

namespace les {

/// Orthorhombic periodic cell. Lengths in Angstrom.
class Cell {
public:
    Cell() = default;
    explicit Cell(const Vec3& lengths);

    const Vec3& lengths() const { return lengths_; }
    double length(int axis) const { return lengths_[axis]; }
    double volume() const { return lengths_.x * lengths_.y * lengths_.z; }
    double min_length() const;

    friend bool operator==(const Cell&, const Cell&) = default;

private:
    Vec3 lengths_{1.0, 1.0, 1.0};
};

/// Reference labels attached to a configuration (eV, eV/A).
struct Labels {
    std::optional<double> energy;
    std::optional<std::vector<Vec3>> forces;
};

/// One atomic configuration: the unit of data everywhere in the toolkit.
///
/// Coordinates are kept exactly as given; wrapping happens only inside the
/// geometry kernels. `velocities` and `info` carry trajectory payload
/// (A/fs and free-form key=value pairs) and are optional.
struct Configuration {
    std::vector<std::string> species;
    std::vector<Vec3> positions;
    Cell cell;
    Labels labels;
    std::optional<std::vector<Vec3>> velocities;
    std::map<std::string, std::string> info;

    std::size_t size() const { return positions.size(); }

    /// Throws UserError when the invariants (N >= 1, consistent row counts,
    /// finite coordinates) do not hold.
    void validate() const;
};

/// Maps each component of `delta` into [-L/2, L/2).
Vec3 minimum_image(const Vec3& delta, const Cell& cell);

/// Maps a position into [0, L) along every axis.
Vec3 wrap_position(const Vec3& position, const Cell& cell);

struct Neighbor {
    int j = 0;
    Vec3 displacement;   // r_j + image shift - r_i
    double distance = 0.0;
};

/// Per-atom neighbor entries, sorted by (j, displacement).
struct NeighborList {
    double r_cut = 0.0;
    std::vector<std::vector<Neighbor>> entries;

    std::size_t size() const { return entries.size(); }
    std::size_t pair_count() const;
};

struct NeighborOptions {
    /// Enumerate every periodic image within r_cut; required when r_cut >= min(L)/2.
    bool multi_image = false;
};

/// Cell-linked-list neighbor search with strict cutoff (distance < r_cut).
NeighborList build_neighbor_list(const Configuration& config, double r_cut,
                                 NeighborOptions options = {});

/// Atomic mass in amu for a chemical symbol. Throws UserError if unknown.
double atomic_mass(const std::string& symbol);

} // namespace les
