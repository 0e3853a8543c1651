#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "les/atoms.hpp"

namespace les {

/// Reciprocal vectors k = 2 pi (n_x/L_x, n_y/L_y, n_z/L_z) with 0 < |k| < k_cut.
///
/// In half-space mode only one of {k, -k} is kept (the one whose first nonzero
/// integer index is positive) and every term is counted twice.
struct KSpace {
    std::vector<std::array<int, 3>> indices;
    std::vector<Vec3> kvecs;
    std::vector<double> ksq;
    std::vector<double> weights;   // exp(-sigma^2 k^2 / 2) / k^2
    double sigma = 1.0;
    double k_cut = 0.0;
    double volume = 0.0;
    Cell cell;
    bool half_space = true;

    std::size_t size() const { return kvecs.size(); }
    bool empty() const { return kvecs.empty(); }
    double multiplicity() const { return half_space ? 2.0 : 1.0; }
};

/// Enumerates the k set in lexicographic order of the integer indices.
/// An empty set is allowed (k_cut below the first shell); a warning goes to stderr.
KSpace enumerate_kvectors(const Cell& cell, double k_cut, double sigma, bool half_space = true);

/// Per-atom latent charges, N x d row-major.
class LatentCharges {
public:
    LatentCharges() = default;
    LatentCharges(int n_atoms, int channels);
    LatentCharges(int n_atoms, int channels, std::vector<double> values);

    int atoms() const { return n_atoms_; }
    int channels() const { return channels_; }
    double& operator()(int i, int c) { return values_[static_cast<std::size_t>(i) * channels_ + c]; }
    double operator()(int i, int c) const { return values_[static_cast<std::size_t>(i) * channels_ + c]; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

private:
    int n_atoms_ = 0;
    int channels_ = 1;
    std::vector<double> values_;
};

/// S(k)[c] = sum_i q_i[c] exp(i k.r_i); result is M x d row-major.
std::vector<std::complex<double>> structure_factor(const LatentCharges& q,
                                                   std::span<const Vec3> positions,
                                                   const KSpace& kspace);

/// E = (1/V) sum_k sum_c w(k) |S(k)[c]|^2. No k = 0 term and no self term.
double lr_energy(const LatentCharges& q, std::span<const Vec3> positions, const KSpace& kspace);

struct LrGradients {
    double energy = 0.0;
    std::vector<double> dq;   // N x d
    std::vector<Vec3> dr;     // N
};

/// Energy together with dE/dq and dE/dr (at fixed q).
LrGradients lr_gradients(const LatentCharges& q, std::span<const Vec3> positions, const KSpace& kspace);

struct LrTangent {
    double energy_rate = 0.0;   // dE along (q_dot, r_dot)
    std::vector<double> dq;     // d(energy_rate)/dq, N x d
};

/// Directional derivative of E along charge tangent `q_dot` and position tangent
/// `r_dot`, together with its gradient with respect to q. Needed to
/// differentiate forces with respect to the charge head parameters.
LrTangent lr_tangent(const LatentCharges& q, std::span<const double> q_dot,
                     std::span<const Vec3> positions, std::span<const Vec3> r_dot,
                     const KSpace& kspace);

} // namespace les
