#include "les/latent_ewald.hpp"

#include <cmath>
#include <iostream>
#include <numbers>

#include "les/error.hpp"

namespace les {

using complex = std::complex<double>;

KSpace enumerate_kvectors(const Cell& cell, double k_cut, double sigma, bool half_space)
{
    if (!(sigma > 0.0))
        throw UserError("Ewald smearing sigma must be positive");
    if (!(k_cut > 0.0))
        throw UserError("Ewald k_cut must be positive");

    KSpace ks;
    ks.sigma = sigma;
    ks.k_cut = k_cut;
    ks.volume = cell.volume();
    ks.cell = cell;
    ks.half_space = half_space;

    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::array<int, 3> nmax{};
    std::array<double, 3> dk{};
    for (int a = 0; a < 3; ++a) {
        dk[a] = two_pi / cell.length(a);
        nmax[a] = static_cast<int>(std::floor(k_cut / dk[a]));
    }
    const double kc2 = k_cut * k_cut;
    for (int nx = -nmax[0]; nx <= nmax[0]; ++nx)
        for (int ny = -nmax[1]; ny <= nmax[1]; ++ny)
            for (int nz = -nmax[2]; nz <= nmax[2]; ++nz) {
                if (nx == 0 && ny == 0 && nz == 0)
                    continue;
                if (half_space) {
                    const bool positive = nx > 0 || (nx == 0 && (ny > 0 || (ny == 0 && nz > 0)));
                    if (!positive)
                        continue;
                }
                const Vec3 k{nx * dk[0], ny * dk[1], nz * dk[2]};
                const double k2 = dot(k, k);
                if (k2 >= kc2)
                    continue;
                ks.indices.push_back({nx, ny, nz});
                ks.kvecs.push_back(k);
                ks.ksq.push_back(k2);
                ks.weights.push_back(std::exp(-0.5 * sigma * sigma * k2) / k2);
            }
    if (ks.empty())
        std::cerr << "warning: k_cut = " << k_cut
                  << " lies below the first reciprocal shell; the long-range energy is identically zero\n";
    return ks;
}

LatentCharges::LatentCharges(int n_atoms, int channels)
    : LatentCharges(n_atoms, channels, std::vector<double>(static_cast<std::size_t>(n_atoms) * channels, 0.0))
{
}

LatentCharges::LatentCharges(int n_atoms, int channels, std::vector<double> values)
    : n_atoms_(n_atoms), channels_(channels), values_(std::move(values))
{
    if (n_atoms < 0 || channels < 1)
        throw UserError("latent charges need at least one channel");
    if (values_.size() != static_cast<std::size_t>(n_atoms) * channels)
        throw UserError("latent charge array has the wrong size");
}

namespace {

// exp(i 2 pi n x_a / L_a) for every atom, axis and |n| <= nmax, built from
// powers of the fundamental phase so that each k costs two complex products.
class PhaseTable {
public:
    PhaseTable(std::span<const Vec3> positions, const KSpace& ks) : n_atoms_(positions.size())
    {
        for (const auto& idx : ks.indices)
            for (int a = 0; a < 3; ++a)
                nmax_[a] = std::max(nmax_[a], std::abs(idx[a]));
        for (int a = 0; a < 3; ++a) {
            const int width = 2 * nmax_[a] + 1;
            table_[a].resize(n_atoms_ * width);
            const double dk = 2.0 * std::numbers::pi / ks.cell.length(a);
            for (std::size_t i = 0; i < n_atoms_; ++i) {
                complex* row = table_[a].data() + i * width + nmax_[a];
                const complex base = std::polar(1.0, dk * positions[i][a]);
                row[0] = 1.0;
                for (int n = 1; n <= nmax_[a]; ++n) {
                    row[n] = row[n - 1] * base;
                    row[-n] = std::conj(row[n]);
                }
            }
        }
    }

    complex phase(std::size_t i, const std::array<int, 3>& n) const
    {
        return at(0, i, n[0]) * at(1, i, n[1]) * at(2, i, n[2]);
    }

private:
    complex at(int a, std::size_t i, int n) const
    {
        return table_[a][i * (2 * nmax_[a] + 1) + nmax_[a] + n];
    }

    std::size_t n_atoms_;
    std::array<int, 3> nmax_{};
    std::array<std::vector<complex>, 3> table_;
};

void check_sizes(const LatentCharges& q, std::span<const Vec3> positions)
{
    if (static_cast<std::size_t>(q.atoms()) != positions.size())
        throw UserError("latent charges and positions have different atom counts");
}

} // namespace

std::vector<complex> structure_factor(const LatentCharges& q, std::span<const Vec3> positions,
                                      const KSpace& kspace)
{
    check_sizes(q, positions);
    const int d = q.channels();
    std::vector<complex> S(kspace.size() * d);
    const PhaseTable phases(positions, kspace);
    for (std::size_t k = 0; k < kspace.size(); ++k) {
        complex* sk = S.data() + k * d;
        for (int i = 0; i < q.atoms(); ++i) {
            const complex ph = phases.phase(i, kspace.indices[k]);
            for (int c = 0; c < d; ++c)
                sk[c] += q(i, c) * ph;
        }
    }
    return S;
}

double lr_energy(const LatentCharges& q, std::span<const Vec3> positions, const KSpace& kspace)
{
    const auto S = structure_factor(q, positions, kspace);
    const int d = q.channels();
    double e = 0.0;
    for (std::size_t k = 0; k < kspace.size(); ++k) {
        double s2 = 0.0;
        for (int c = 0; c < d; ++c)
            s2 += std::norm(S[k * d + c]);
        e += kspace.weights[k] * s2;
    }
    return kspace.multiplicity() * e / kspace.volume;
}

LrGradients lr_gradients(const LatentCharges& q, std::span<const Vec3> positions, const KSpace& kspace)
{
    check_sizes(q, positions);
    const int n = q.atoms();
    const int d = q.channels();
    LrGradients out;
    out.dq.assign(static_cast<std::size_t>(n) * d, 0.0);
    out.dr.assign(n, Vec3{});

    const PhaseTable phases(positions, kspace);
    std::vector<complex> S(d);
    const double pref = 2.0 * kspace.multiplicity() / kspace.volume;
    double energy = 0.0;
    for (std::size_t k = 0; k < kspace.size(); ++k) {
        const auto& idx = kspace.indices[k];
        std::fill(S.begin(), S.end(), complex{});
        for (int i = 0; i < n; ++i) {
            const complex ph = phases.phase(i, idx);
            for (int c = 0; c < d; ++c)
                S[c] += q(i, c) * ph;
        }
        const double w = kspace.weights[k];
        for (int c = 0; c < d; ++c)
            energy += w * std::norm(S[c]);
        const double pw = pref * w;
        for (int i = 0; i < n; ++i) {
            const complex ph = phases.phase(i, idx);
            double radial = 0.0;
            for (int c = 0; c < d; ++c) {
                const complex z = std::conj(S[c]) * ph;
                out.dq[static_cast<std::size_t>(i) * d + c] += pw * z.real();
                radial -= q(i, c) * z.imag();
            }
            out.dr[i] += kspace.kvecs[k] * (pw * radial);
        }
    }
    out.energy = kspace.multiplicity() * energy / kspace.volume;
    return out;
}

LrTangent lr_tangent(const LatentCharges& q, std::span<const double> q_dot,
                     std::span<const Vec3> positions, std::span<const Vec3> r_dot,
                     const KSpace& kspace)
{
    check_sizes(q, positions);
    const int n = q.atoms();
    const int d = q.channels();
    if (q_dot.size() != static_cast<std::size_t>(n) * d || r_dot.size() != positions.size())
        throw UserError("tangent arrays have the wrong size");

    LrTangent out;
    out.dq.assign(static_cast<std::size_t>(n) * d, 0.0);
    const PhaseTable phases(positions, kspace);
    std::vector<complex> S(d), dS(d);
    const double pref = 2.0 * kspace.multiplicity() / kspace.volume;
    double rate = 0.0;
    for (std::size_t k = 0; k < kspace.size(); ++k) {
        const auto& idx = kspace.indices[k];
        const Vec3& kv = kspace.kvecs[k];
        std::fill(S.begin(), S.end(), complex{});
        std::fill(dS.begin(), dS.end(), complex{});
        for (int i = 0; i < n; ++i) {
            const complex ph = phases.phase(i, idx);
            const double kr = dot(kv, r_dot[i]);
            for (int c = 0; c < d; ++c) {
                S[c] += q(i, c) * ph;
                dS[c] += complex(q_dot[static_cast<std::size_t>(i) * d + c], q(i, c) * kr) * ph;
            }
        }
        const double pw = pref * kspace.weights[k];
        for (int c = 0; c < d; ++c)
            rate += pw * (std::conj(S[c]) * dS[c]).real();
        for (int i = 0; i < n; ++i) {
            const complex ph = phases.phase(i, idx);
            const double kr = dot(kv, r_dot[i]);
            for (int c = 0; c < d; ++c) {
                const double v = (std::conj(ph) * dS[c]).real() - kr * (std::conj(S[c]) * ph).imag();
                out.dq[static_cast<std::size_t>(i) * d + c] += pw * v;
            }
        }
    }
    out.energy_rate = rate;
    return out;
}

} // namespace les
