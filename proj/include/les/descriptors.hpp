#pragma once

#include <span>
#include <string>
#include <vector>

#include "les/atoms.hpp"

namespace les {

/// Hyperparameters of the invariant atomic descriptor.
///
/// Each atom i gets B_i = [A_i, T_i] with
///   A_i[s,n]           = sum_{j in N(i), s_j = s} f_n(r_ij)
///   T_i[s,s',n,n',l]   = sum_{j,k in N(i)} d(s,s_j) d(s',s_k) f_n(r_ij) f_n'(r_ik) P_l(cos theta_jik)
/// where the double sum includes j == k.
struct DescriptorConfig {
    double r_cut = 5.0;
    int n_radial = 6;
    int l_max = 2;
    std::vector<std::string> species;

    int species_count() const { return static_cast<int>(species.size()); }
    /// D = S*n_radial + S^2*n_radial^2*(l_max+1)
    int dimension() const;
    int two_body_dimension() const { return species_count() * n_radial; }
    /// Index into `species`; throws UserError for an unknown element.
    int species_index(const std::string& symbol) const;
    void validate() const;

    friend bool operator==(const DescriptorConfig&, const DescriptorConfig&) = default;
};

/// f_n(r) = sin(n pi r / r_cut) / r * (1 - (r/r_cut)^2)^2 for r < r_cut, else 0. n is 1-based.
double radial_basis(double r, int n, const DescriptorConfig& config);
double radial_basis_derivative(double r, int n, const DescriptorConfig& config);

/// Flat index of A_i[s,n] (n is 0-based here) inside B_i.
int two_body_index(const DescriptorConfig& config, int s, int n);
/// Flat index of T_i[s,s',n,n',l] inside B_i.
int three_body_index(const DescriptorConfig& config, int s, int s2, int n, int n2, int l);

/// dB_i/dr_m for one atom m: `values[d*3 + alpha]`.
struct FeatureGradientBlock {
    int atom = 0;
    std::vector<double> values;
};

struct FeatureSet {
    int n_atoms = 0;
    int dim = 0;
    std::vector<double> values;                                  // N x D, row-major
    std::vector<std::vector<FeatureGradientBlock>> gradients;    // per atom i, sorted by m; empty unless requested

    std::span<const double> row(int i) const
    {
        return {values.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
};

FeatureSet compute_features(const Configuration& config, const NeighborList& nl,
                            const DescriptorConfig& dcfg);

/// Dense per-atom blocks of dB_i/dr_m. Blocks exist only for m = i and for
/// atoms inside the cutoff sphere of i.
std::vector<std::vector<FeatureGradientBlock>> compute_feature_gradients(
    const Configuration& config, const NeighborList& nl, const DescriptorConfig& dcfg);

/// Vector-Jacobian product: returns g_m = sum_{i,d} adjoint[i,d] dB_i[d]/dr_m.
std::vector<Vec3> feature_vjp(const Configuration& config, const NeighborList& nl,
                              const DescriptorConfig& dcfg, std::span<const double> adjoint);

/// Jacobian-vector product: returns Bdot_i[d] = sum_m dB_i[d]/dr_m . tangent_m (N x D).
std::vector<double> feature_jvp(const Configuration& config, const NeighborList& nl,
                                const DescriptorConfig& dcfg, std::span<const Vec3> tangent);

} // namespace les
