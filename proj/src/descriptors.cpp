#include "les/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "les/error.hpp"

namespace les {

int DescriptorConfig::dimension() const
{
    const int s = species_count();
    return s * n_radial + s * s * n_radial * n_radial * (l_max + 1);
}

int DescriptorConfig::species_index(const std::string& symbol) const
{
    const auto it = std::find(species.begin(), species.end(), symbol);
    if (it == species.end())
        throw UserError("species '" + symbol + "' is not in the descriptor species table");
    return static_cast<int>(it - species.begin());
}

void DescriptorConfig::validate() const
{
    if (!(r_cut > 0.0))
        throw UserError("descriptor r_cut must be positive");
    if (n_radial < 1)
        throw UserError("descriptor n_radial must be at least 1");
    if (l_max < 0)
        throw UserError("descriptor l_max must be non-negative");
    if (species.empty())
        throw UserError("descriptor species table is empty");
    for (std::size_t a = 0; a < species.size(); ++a)
        for (std::size_t b = a + 1; b < species.size(); ++b)
            if (species[a] == species[b])
                throw UserError("duplicate species '" + species[a] + "' in descriptor table");
}

double radial_basis(double r, int n, const DescriptorConfig& config)
{
    const double rc = config.r_cut;
    if (r >= rc)
        return 0.0;
    const double x = r / rc;
    const double env = (1.0 - x * x) * (1.0 - x * x);
    const double a = n * std::numbers::pi / rc;
    return std::sin(a * r) / r * env;
}

double radial_basis_derivative(double r, int n, const DescriptorConfig& config)
{
    const double rc = config.r_cut;
    if (r >= rc)
        return 0.0;
    const double x = r / rc;
    const double env = (1.0 - x * x) * (1.0 - x * x);
    const double denv = -4.0 * x * (1.0 - x * x) / rc;
    const double a = n * std::numbers::pi / rc;
    const double s = std::sin(a * r);
    const double g = s / r;
    const double dg = (a * std::cos(a * r) * r - s) / (r * r);
    return dg * env + g * denv;
}

int two_body_index(const DescriptorConfig& config, int s, int n)
{
    return s * config.n_radial + n;
}

int three_body_index(const DescriptorConfig& config, int s, int s2, int n, int n2, int l)
{
    const int S = config.species_count();
    const int nr = config.n_radial;
    return config.two_body_dimension() + ((((s * S + s2) * nr + n) * nr + n2) * (config.l_max + 1) + l);
}

namespace {

// Moments M[s,n,p] = sum_j f_n(r_ij) u_j^{(x)p} over the neighbors of one atom,
// stored as full 3^p tensors; T follows from contracting moment pairs with the
// monomial coefficients of the Legendre polynomials.
class Layout {
public:
    explicit Layout(const DescriptorConfig& cfg)
        : S(cfg.species_count()), nr(cfg.n_radial), L(cfg.l_max), dim(cfg.dimension()),
          two_body(cfg.two_body_dimension())
    {
        int size = 1;
        for (int p = 0; p <= L; ++p) {
            offset.push_back(tsize);
            pow3.push_back(size);
            tsize += size;
            size *= 3;
        }
        // monomial coefficients of P_l via (l+1) P_{l+1} = (2l+1) x P_l - l P_{l-1}
        coef.assign(static_cast<std::size_t>(L + 1) * (L + 1), 0.0);
        coef[0] = 1.0;
        if (L >= 1)
            coef[(L + 1) + 1] = 1.0;
        for (int l = 1; l < L; ++l)
            for (int p = 0; p <= L; ++p) {
                double v = -l * coef[(l - 1) * (L + 1) + p];
                if (p > 0)
                    v += (2 * l + 1) * coef[l * (L + 1) + p - 1];
                coef[(l + 1) * (L + 1) + p] = v / (l + 1);
            }
    }

    double c(int l, int p) const { return coef[l * (L + 1) + p]; }
    std::size_t moment(int s, int n) const { return (static_cast<std::size_t>(s) * nr + n) * tsize; }
    std::size_t moments_size() const { return static_cast<std::size_t>(S) * nr * tsize; }
    int t_index(int s, int s2, int n, int n2, int l) const
    {
        return two_body + ((((s * S + s2) * nr + n) * nr + n2) * (L + 1) + l);
    }

    int S, nr, L, dim, two_body;
    int tsize = 0;
    std::vector<int> offset;
    std::vector<int> pow3;
    std::vector<double> coef;
};

struct NeighborTerm {
    int j = 0;
    int s = 0;
    double r = 0.0;
    Vec3 u;
    std::vector<double> f;
    std::vector<double> df;
    std::vector<double> U;   // all tensor powers u^{(x)p}, p = 0..L
};

void fill_powers(const Layout& lay, const Vec3& u, double* U)
{
    U[0] = 1.0;
    for (int p = 1; p <= lay.L; ++p) {
        const double* prev = U + lay.offset[p - 1];
        double* cur = U + lay.offset[p];
        const int m = lay.pow3[p - 1];
        for (int a = 0; a < 3; ++a)
            for (int rest = 0; rest < m; ++rest)
                cur[rest + m * a] = prev[rest] * u[a];
    }
}

// d(u^{(x)p}) for a tangent du of the unit vector, by the product rule.
void fill_power_tangents(const Layout& lay, const Vec3& u, const Vec3& du, const double* U, double* dU)
{
    dU[0] = 0.0;
    for (int p = 1; p <= lay.L; ++p) {
        const double* prev = U + lay.offset[p - 1];
        const double* dprev = dU + lay.offset[p - 1];
        double* cur = dU + lay.offset[p];
        const int m = lay.pow3[p - 1];
        for (int a = 0; a < 3; ++a)
            for (int rest = 0; rest < m; ++rest)
                cur[rest + m * a] = dprev[rest] * u[a] + prev[rest] * du[a];
    }
}

std::vector<NeighborTerm> environment(const NeighborList& nl, const DescriptorConfig& dcfg,
                                      const Layout& lay,
                                      const std::vector<int>& species_idx, int i)
{
    std::vector<NeighborTerm> terms;
    terms.reserve(nl.entries[i].size());
    for (const auto& nb : nl.entries[i]) {
        if (nb.distance >= dcfg.r_cut)
            continue;
        NeighborTerm t;
        t.j = nb.j;
        t.s = species_idx[nb.j];
        t.r = nb.distance;
        t.u = nb.displacement * (1.0 / nb.distance);
        t.f.resize(lay.nr);
        t.df.resize(lay.nr);
        for (int n = 0; n < lay.nr; ++n) {
            t.f[n] = radial_basis(t.r, n + 1, dcfg);
            t.df[n] = radial_basis_derivative(t.r, n + 1, dcfg);
        }
        t.U.resize(lay.tsize);
        fill_powers(lay, t.u, t.U.data());
        terms.push_back(std::move(t));
    }
    return terms;
}

void accumulate_moments(const Layout& lay, const std::vector<NeighborTerm>& terms,
                        std::vector<double>& A, std::vector<double>& M)
{
    A.assign(static_cast<std::size_t>(lay.S) * lay.nr, 0.0);
    M.assign(lay.moments_size(), 0.0);
    for (const auto& t : terms)
        for (int n = 0; n < lay.nr; ++n) {
            A[t.s * lay.nr + n] += t.f[n];
            double* m = M.data() + lay.moment(t.s, n);
            for (int k = 0; k < lay.tsize; ++k)
                m[k] += t.f[n] * t.U[k];
        }
}

double contract(const double* a, const double* b, int n)
{
    double s = 0.0;
    for (int k = 0; k < n; ++k)
        s += a[k] * b[k];
    return s;
}

void features_from_moments(const Layout& lay, const std::vector<double>& A,
                           const std::vector<double>& M, double* out)
{
    std::copy(A.begin(), A.end(), out);
    for (int s = 0; s < lay.S; ++s)
        for (int s2 = 0; s2 < lay.S; ++s2)
            for (int n = 0; n < lay.nr; ++n)
                for (int n2 = 0; n2 < lay.nr; ++n2) {
                    const double* m1 = M.data() + lay.moment(s, n);
                    const double* m2 = M.data() + lay.moment(s2, n2);
                    double g[32];
                    for (int p = 0; p <= lay.L; ++p)
                        g[p] = contract(m1 + lay.offset[p], m2 + lay.offset[p], lay.pow3[p]);
                    for (int l = 0; l <= lay.L; ++l) {
                        double v = 0.0;
                        for (int p = l % 2; p <= l; p += 2)
                            v += lay.c(l, p) * g[p];
                        out[lay.t_index(s, s2, n, n2, l)] = v;
                    }
                }
}

// Tangent of B given tangents of the two-body sums and of the moments.
void tangent_from_moments(const Layout& lay, const std::vector<double>& dA,
                          const std::vector<double>& M, const std::vector<double>& dM, double* out)
{
    std::copy(dA.begin(), dA.end(), out);
    for (int s = 0; s < lay.S; ++s)
        for (int s2 = 0; s2 < lay.S; ++s2)
            for (int n = 0; n < lay.nr; ++n)
                for (int n2 = 0; n2 < lay.nr; ++n2) {
                    const std::size_t o1 = lay.moment(s, n);
                    const std::size_t o2 = lay.moment(s2, n2);
                    double g[32];
                    for (int p = 0; p <= lay.L; ++p) {
                        const int off = lay.offset[p];
                        g[p] = contract(dM.data() + o1 + off, M.data() + o2 + off, lay.pow3[p])
                             + contract(M.data() + o1 + off, dM.data() + o2 + off, lay.pow3[p]);
                    }
                    for (int l = 0; l <= lay.L; ++l) {
                        double v = 0.0;
                        for (int p = l % 2; p <= l; p += 2)
                            v += lay.c(l, p) * g[p];
                        out[lay.t_index(s, s2, n, n2, l)] = v;
                    }
                }
}

std::vector<int> species_indices(const Configuration& config, const DescriptorConfig& dcfg)
{
    std::vector<int> idx(config.size());
    for (std::size_t a = 0; a < config.size(); ++a)
        idx[a] = dcfg.species_index(config.species[a]);
    return idx;
}

void check_inputs(const Configuration& config, const NeighborList& nl, const DescriptorConfig& dcfg)
{
    dcfg.validate();
    if (nl.size() != config.size())
        throw UserError("neighbor list does not match configuration");
    if (nl.r_cut < dcfg.r_cut)
        throw UserError("neighbor list cutoff is smaller than descriptor cutoff");
    if (dcfg.l_max > 31)
        throw UserError("descriptor l_max above 31 is not supported");
}

} // namespace

FeatureSet compute_features(const Configuration& config, const NeighborList& nl,
                            const DescriptorConfig& dcfg)
{
    check_inputs(config, nl, dcfg);
    const Layout lay(dcfg);
    const auto sidx = species_indices(config, dcfg);

    FeatureSet fs;
    fs.n_atoms = static_cast<int>(config.size());
    fs.dim = lay.dim;
    fs.values.assign(static_cast<std::size_t>(fs.n_atoms) * fs.dim, 0.0);
    std::vector<double> A, M;
    for (int i = 0; i < fs.n_atoms; ++i) {
        const auto terms = environment(nl, dcfg, lay, sidx, i);
        accumulate_moments(lay, terms, A, M);
        features_from_moments(lay, A, M, fs.values.data() + static_cast<std::size_t>(i) * fs.dim);
    }
    return fs;
}

std::vector<std::vector<FeatureGradientBlock>> compute_feature_gradients(
    const Configuration& config, const NeighborList& nl, const DescriptorConfig& dcfg)
{
    check_inputs(config, nl, dcfg);
    const Layout lay(dcfg);
    const auto sidx = species_indices(config, dcfg);
    const int n_atoms = static_cast<int>(config.size());
    const int D = lay.dim;

    std::vector<std::vector<FeatureGradientBlock>> out(n_atoms);
    std::vector<double> A, M, dA, dM, dU(lay.tsize), column(D);
    for (int i = 0; i < n_atoms; ++i) {
        const auto terms = environment(nl, dcfg, lay, sidx, i);
        if (terms.empty())
            continue;
        accumulate_moments(lay, terms, A, M);
        std::map<int, std::vector<double>> blocks;
        blocks[i].assign(static_cast<std::size_t>(D) * 3, 0.0);
        for (const auto& t : terms) {
            auto& bj = blocks[t.j];
            if (bj.empty())
                bj.assign(static_cast<std::size_t>(D) * 3, 0.0);
            for (int beta = 0; beta < 3; ++beta) {
                Vec3 du;
                du[beta] = 1.0;
                const double radial_rate = t.u[beta];
                const Vec3 dunit = (du - t.u * radial_rate) * (1.0 / t.r);
                fill_power_tangents(lay, t.u, dunit, t.U.data(), dU.data());
                dA.assign(static_cast<std::size_t>(lay.S) * lay.nr, 0.0);
                dM.assign(lay.moments_size(), 0.0);
                for (int n = 0; n < lay.nr; ++n) {
                    dA[t.s * lay.nr + n] = t.df[n] * radial_rate;
                    double* m = dM.data() + lay.moment(t.s, n);
                    for (int k = 0; k < lay.tsize; ++k)
                        m[k] = t.df[n] * radial_rate * t.U[k] + t.f[n] * dU[k];
                }
                tangent_from_moments(lay, dA, M, dM, column.data());
                auto& bi = blocks[i];
                for (int d = 0; d < D; ++d) {
                    bj[static_cast<std::size_t>(d) * 3 + beta] += column[d];
                    bi[static_cast<std::size_t>(d) * 3 + beta] -= column[d];
                }
            }
        }
        for (auto& [m, values] : blocks)
            out[i].push_back({m, std::move(values)});
    }
    return out;
}

std::vector<Vec3> feature_vjp(const Configuration& config, const NeighborList& nl,
                              const DescriptorConfig& dcfg, std::span<const double> adjoint)
{
    check_inputs(config, nl, dcfg);
    const Layout lay(dcfg);
    const auto sidx = species_indices(config, dcfg);
    const int n_atoms = static_cast<int>(config.size());
    const int D = lay.dim;
    if (adjoint.size() != static_cast<std::size_t>(n_atoms) * D)
        throw UserError("feature adjoint has the wrong size");

    std::vector<Vec3> grad(n_atoms);
    std::vector<double> A, M, Mbar(lay.moments_size()), Gbar, X(lay.tsize);
    const int SN = lay.S * lay.nr;
    Gbar.resize(static_cast<std::size_t>(SN) * SN * (lay.L + 1));
    for (int i = 0; i < n_atoms; ++i) {
        const auto terms = environment(nl, dcfg, lay, sidx, i);
        if (terms.empty())
            continue;
        const double* abar = adjoint.data() + static_cast<std::size_t>(i) * D;
        accumulate_moments(lay, terms, A, M);

        // adjoint of the pairwise moment contractions
        for (int s = 0; s < lay.S; ++s)
            for (int s2 = 0; s2 < lay.S; ++s2)
                for (int n = 0; n < lay.nr; ++n)
                    for (int n2 = 0; n2 < lay.nr; ++n2) {
                        const int a = s * lay.nr + n;
                        const int b = s2 * lay.nr + n2;
                        for (int p = 0; p <= lay.L; ++p) {
                            double v = 0.0;
                            for (int l = p; l <= lay.L; l += 2)
                                v += lay.c(l, p) * abar[lay.t_index(s, s2, n, n2, l)];
                            Gbar[(static_cast<std::size_t>(a) * SN + b) * (lay.L + 1) + p] = v;
                        }
                    }
        std::fill(Mbar.begin(), Mbar.end(), 0.0);
        for (int a = 0; a < SN; ++a)
            for (int b = 0; b < SN; ++b) {
                double* ma = Mbar.data() + static_cast<std::size_t>(a) * lay.tsize;
                const double* mb = M.data() + static_cast<std::size_t>(b) * lay.tsize;
                for (int p = 0; p <= lay.L; ++p) {
                    const double w = Gbar[(static_cast<std::size_t>(a) * SN + b) * (lay.L + 1) + p]
                                   + Gbar[(static_cast<std::size_t>(b) * SN + a) * (lay.L + 1) + p];
                    if (w == 0.0)
                        continue;
                    const int off = lay.offset[p];
                    for (int k = 0; k < lay.pow3[p]; ++k)
                        ma[off + k] += w * mb[off + k];
                }
            }

        for (const auto& t : terms) {
            double radial = 0.0;
            for (int n = 0; n < lay.nr; ++n)
                radial += abar[two_body_index(dcfg, t.s, n)] * t.df[n];
            std::fill(X.begin(), X.end(), 0.0);
            for (int n = 0; n < lay.nr; ++n) {
                const double* mb = Mbar.data() + lay.moment(t.s, n);
                radial += t.df[n] * contract(mb, t.U.data(), lay.tsize);
                for (int k = 0; k < lay.tsize; ++k)
                    X[k] += t.f[n] * mb[k];
            }
            Vec3 g = t.u * radial;
            // angular part: p (v - (v.u) u) / r with v the (p-1)-fold contraction of X with u
            for (int p = 1; p <= lay.L; ++p) {
                const int m = lay.pow3[p - 1];
                const double* xp = X.data() + lay.offset[p];
                const double* up = t.U.data() + lay.offset[p - 1];
                Vec3 v;
                for (int a = 0; a < 3; ++a)
                    v[a] = contract(xp + m * a, up, m);
                g += (v - t.u * dot(v, t.u)) * (p / t.r);
            }
            grad[t.j] += g;
            grad[i] -= g;
        }
    }
    return grad;
}

std::vector<double> feature_jvp(const Configuration& config, const NeighborList& nl,
                                const DescriptorConfig& dcfg, std::span<const Vec3> tangent)
{
    check_inputs(config, nl, dcfg);
    const Layout lay(dcfg);
    const auto sidx = species_indices(config, dcfg);
    const int n_atoms = static_cast<int>(config.size());
    const int D = lay.dim;
    if (tangent.size() != static_cast<std::size_t>(n_atoms))
        throw UserError("position tangent has the wrong size");

    std::vector<double> out(static_cast<std::size_t>(n_atoms) * D, 0.0);
    std::vector<double> A, M, dA, dM, dU(lay.tsize);
    for (int i = 0; i < n_atoms; ++i) {
        const auto terms = environment(nl, dcfg, lay, sidx, i);
        if (terms.empty())
            continue;
        accumulate_moments(lay, terms, A, M);
        dA.assign(static_cast<std::size_t>(lay.S) * lay.nr, 0.0);
        dM.assign(lay.moments_size(), 0.0);
        for (const auto& t : terms) {
            const Vec3 du = tangent[t.j] - tangent[i];
            const double radial_rate = dot(t.u, du);
            const Vec3 dunit = (du - t.u * radial_rate) * (1.0 / t.r);
            fill_power_tangents(lay, t.u, dunit, t.U.data(), dU.data());
            for (int n = 0; n < lay.nr; ++n) {
                dA[t.s * lay.nr + n] += t.df[n] * radial_rate;
                double* m = dM.data() + lay.moment(t.s, n);
                for (int k = 0; k < lay.tsize; ++k)
                    m[k] += t.df[n] * radial_rate * t.U[k] + t.f[n] * dU[k];
            }
        }
        tangent_from_moments(lay, dA, M, dM, out.data() + static_cast<std::size_t>(i) * D);
    }
    return out;
}

} // namespace les
