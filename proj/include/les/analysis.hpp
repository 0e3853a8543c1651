#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "les/atoms.hpp"

namespace les {

/// Fixed point charges (e) used to build molecular dipoles.
struct WaterCharges {
    double hydrogen = 0.4238;
    double oxygen = -0.8476;
};

struct Molecule {
    int oxygen = 0;
    std::array<int, 2> hydrogens{};
    Vec3 dipole;   // e A
    Vec3 center;   // oxygen position, wrapped into the cell
};

/// Water molecules of an O/H configuration: every H joins its nearest O under
/// the minimum image. Throws UserError if the frame is not a 2:1 H:O system,
/// an O does not receive exactly two H, or an O-H distance exceeds `max_oh`.
std::vector<Molecule> identify_molecules(const Configuration& config, const WaterCharges& charges = {},
                                         double max_oh = 1.3);

/// g(r) between two species, averaged over frames.
struct Rdf {
    std::string species_a, species_b;
    double r_max = 0.0;
    std::vector<double> edges;          // n_bins + 1
    std::vector<double> g;
    std::vector<double> coordination;   // mean number of b within the bin's upper edge of an a
    int frames = 0;
};

/// Pairs i != j at minimum-image distance r, normalized as
/// V / (N_a (N_b - [a == b]) * shell volume). Requires r_max <= min(L)/2.
Rdf compute_rdf(std::span<const Configuration> traj, const std::string& species_a,
                const std::string& species_b, double r_max, int n_bins);

/// Mass density (g/mL) in slabs along `axis` (0, 1, 2), averaged over frames.
struct DensityProfile {
    int axis = 2;
    std::vector<double> edges;     // A, over [0, L)
    std::vector<double> density;   // g/mL
    int frames = 0;
};

DensityProfile density_profile(std::span<const Configuration> traj, int axis, int n_bins);

/// Mean cosine between each molecular dipole and the `axis` direction,
/// binned by molecular center. Bins that never received a molecule are empty.
struct OrientationProfile {
    int axis = 2;
    std::vector<double> edges;
    std::vector<std::optional<double>> mean_cos;
    std::vector<long> counts;
    int frames = 0;
};

OrientationProfile orientation_profile(std::span<const Configuration> traj, int axis, int n_bins,
                                       const WaterCharges& charges = {});

/// < |m(k)|^2 > / N_molecules with m(k) = sum over molecules of
/// mu_axis exp(i k x_axis), for k = 2 pi n / L_axis, n = 1..n_max.
struct DipoleCorrelation {
    int axis = 2;
    std::vector<int> n;
    std::vector<double> k;
    std::vector<double> value;
    int frames = 0;
};

DipoleCorrelation dipole_k_correlation(std::span<const Configuration> traj, int axis, int n_max,
                                       const WaterCharges& charges = {});

int axis_from_string(const std::string& name);

/// Plain-text tables with a parameter header and labeled columns.
std::string rdf_table(const Rdf& rdf);
std::string density_table(const DensityProfile& profile);
std::string orientation_table(const OrientationProfile& profile);
std::string dipole_correlation_table(const DipoleCorrelation& corr);

/// 1 amu/A^3 in g/mL.
inline constexpr double amu_per_a3_to_g_per_ml = 1.66053906660;

} // namespace les
