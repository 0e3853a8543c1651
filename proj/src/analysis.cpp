#include "les/analysis.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "les/error.hpp"
#include "les/format.hpp"

namespace les {

namespace {

const char* axis_name(int axis)
{
    static const char* names[] = {"x", "y", "z"};
    return names[axis];
}

void check_axis(int axis)
{
    if (axis < 0 || axis > 2)
        throw UserError("axis must be x, y or z");
}

void check_bins(int n_bins)
{
    if (n_bins < 1)
        throw UserError("bin count must be at least 1");
}

std::vector<double> uniform_edges(double hi, int n_bins)
{
    std::vector<double> e(n_bins + 1);
    for (int b = 0; b <= n_bins; ++b)
        e[b] = hi * b / n_bins;
    return e;
}

int bin_of(double x, double length, int n_bins)
{
    const int b = static_cast<int>(std::floor(x / length * n_bins));
    return std::clamp(b, 0, n_bins - 1);
}

} // namespace

int axis_from_string(const std::string& name)
{
    if (name == "x")
        return 0;
    if (name == "y")
        return 1;
    if (name == "z")
        return 2;
    throw UserError("unknown axis '" + name + "' (expected x, y or z)");
}

std::vector<Molecule> identify_molecules(const Configuration& config, const WaterCharges& charges, double max_oh)
{
    std::vector<int> oxygens, hydrogens;
    for (std::size_t i = 0; i < config.size(); ++i) {
        if (config.species[i] == "O")
            oxygens.push_back(static_cast<int>(i));
        else if (config.species[i] == "H")
            hydrogens.push_back(static_cast<int>(i));
        else
            throw UserError("molecule identification expects only O and H, found '" + config.species[i] + "'");
    }
    if (hydrogens.size() != 2 * oxygens.size())
        throw UserError("molecule identification expects two H per O, found " + std::to_string(hydrogens.size())
                        + " H and " + std::to_string(oxygens.size()) + " O");

    std::vector<Molecule> mols(oxygens.size());
    std::vector<int> filled(oxygens.size(), 0);
    for (std::size_t m = 0; m < oxygens.size(); ++m) {
        mols[m].oxygen = oxygens[m];
        mols[m].center = wrap_position(config.positions[oxygens[m]], config.cell);
    }
    for (int h : hydrogens) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        Vec3 best_v;
        for (std::size_t m = 0; m < oxygens.size(); ++m) {
            const Vec3 v = minimum_image(config.positions[h] - config.positions[oxygens[m]], config.cell);
            const double d = norm(v);
            if (d < best_d) {
                best_d = d;
                best = m;
                best_v = v;
            }
        }
        if (!(best_d <= max_oh))
            throw UserError("hydrogen " + std::to_string(h) + " is " + format_double(best_d)
                            + " A from the nearest oxygen (limit " + format_double(max_oh) + " A)");
        if (filled[best] == 2)
            throw UserError("oxygen " + std::to_string(oxygens[best])
                            + " is the nearest oxygen of more than two hydrogens");
        mols[best].hydrogens[filled[best]++] = h;
        mols[best].dipole += best_v * charges.hydrogen;
    }
    for (std::size_t m = 0; m < mols.size(); ++m)
        if (filled[m] != 2)
            throw UserError("oxygen " + std::to_string(oxygens[m]) + " has " + std::to_string(filled[m])
                            + " hydrogens assigned");
    // dipoles are taken about the oxygen, so the oxygen charge drops out
    return mols;
}

Rdf compute_rdf(std::span<const Configuration> traj, const std::string& species_a, const std::string& species_b,
                double r_max, int n_bins)
{
    check_bins(n_bins);
    if (!(r_max > 0.0))
        throw UserError("RDF range must be positive");
    Rdf out;
    out.species_a = species_a;
    out.species_b = species_b;
    out.r_max = r_max;
    out.edges = uniform_edges(r_max, n_bins);
    out.g.assign(n_bins, 0.0);
    out.coordination.assign(n_bins, 0.0);
    std::vector<double> counts(n_bins);

    for (const auto& frame : traj) {
        if (r_max > 0.5 * frame.cell.min_length() + 1e-12)
            throw UserError("RDF range " + format_double(r_max) + " A exceeds half the shortest cell length");
        std::vector<int> a, b;
        for (std::size_t i = 0; i < frame.size(); ++i) {
            if (frame.species[i] == species_a)
                a.push_back(static_cast<int>(i));
            if (frame.species[i] == species_b)
                b.push_back(static_cast<int>(i));
        }
        const double pairs_norm = static_cast<double>(a.size())
                                * (static_cast<double>(b.size()) - (species_a == species_b ? 1.0 : 0.0));
        if (a.empty() || pairs_norm <= 0.0)
            throw UserError("frame has too few atoms of species " + species_a + "/" + species_b + " for an RDF");
        std::fill(counts.begin(), counts.end(), 0.0);
        for (int i : a)
            for (int j : b) {
                if (i == j)
                    continue;
                const double r = norm(minimum_image(frame.positions[j] - frame.positions[i], frame.cell));
                if (r >= r_max)
                    continue;
                counts[std::min(n_bins - 1, static_cast<int>(r / r_max * n_bins))] += 1.0;
            }
        const double volume = frame.cell.volume();
        double running = 0.0;
        for (int k = 0; k < n_bins; ++k) {
            const double lo = out.edges[k], hi = out.edges[k + 1];
            const double shell = 4.0 / 3.0 * std::numbers::pi * (hi * hi * hi - lo * lo * lo);
            out.g[k] += counts[k] * volume / (pairs_norm * shell);
            running += counts[k];
            out.coordination[k] += running / static_cast<double>(a.size());
        }
        ++out.frames;
    }
    if (out.frames > 0)
        for (int k = 0; k < n_bins; ++k) {
            out.g[k] /= out.frames;
            out.coordination[k] /= out.frames;
        }
    return out;
}

DensityProfile density_profile(std::span<const Configuration> traj, int axis, int n_bins)
{
    check_axis(axis);
    check_bins(n_bins);
    DensityProfile out;
    out.axis = axis;
    out.density.assign(n_bins, 0.0);
    for (const auto& frame : traj) {
        const Vec3 L = frame.cell.lengths();
        if (out.edges.empty())
            out.edges = uniform_edges(L[axis], n_bins);
        const double slab = frame.cell.volume() / n_bins;
        for (std::size_t i = 0; i < frame.size(); ++i) {
            const Vec3 r = wrap_position(frame.positions[i], frame.cell);
            out.density[bin_of(r[axis], L[axis], n_bins)] += atomic_mass(frame.species[i]) / slab;
        }
        ++out.frames;
    }
    for (double& d : out.density)
        d = out.frames > 0 ? d / out.frames * amu_per_a3_to_g_per_ml : 0.0;
    if (out.edges.empty())
        out.edges.assign(n_bins + 1, 0.0);
    return out;
}

OrientationProfile orientation_profile(std::span<const Configuration> traj, int axis, int n_bins,
                                       const WaterCharges& charges)
{
    check_axis(axis);
    check_bins(n_bins);
    OrientationProfile out;
    out.axis = axis;
    std::vector<double> sum(n_bins, 0.0);
    out.counts.assign(n_bins, 0);
    for (const auto& frame : traj) {
        const Vec3 L = frame.cell.lengths();
        if (out.edges.empty())
            out.edges = uniform_edges(L[axis], n_bins);
        for (const auto& m : identify_molecules(frame, charges)) {
            const double mu = norm(m.dipole);
            if (mu == 0.0)
                continue;
            const int b = bin_of(m.center[axis], L[axis], n_bins);
            sum[b] += m.dipole[axis] / mu;
            ++out.counts[b];
        }
        ++out.frames;
    }
    if (out.edges.empty())
        out.edges.assign(n_bins + 1, 0.0);
    out.mean_cos.resize(n_bins);
    for (int b = 0; b < n_bins; ++b)
        if (out.counts[b] > 0)
            out.mean_cos[b] = sum[b] / static_cast<double>(out.counts[b]);
    return out;
}

DipoleCorrelation dipole_k_correlation(std::span<const Configuration> traj, int axis, int n_max,
                                       const WaterCharges& charges)
{
    check_axis(axis);
    if (n_max < 1)
        throw UserError("the k grid needs at least one point");
    DipoleCorrelation out;
    out.axis = axis;
    out.value.assign(n_max, 0.0);
    for (int n = 1; n <= n_max; ++n)
        out.n.push_back(n);
    for (const auto& frame : traj) {
        const double L = frame.cell.length(axis);
        if (out.k.empty())
            for (int n = 1; n <= n_max; ++n)
                out.k.push_back(2.0 * std::numbers::pi * n / L);
        const auto mols = identify_molecules(frame, charges);
        if (mols.empty())
            throw UserError("frame contains no molecules");
        for (int n = 1; n <= n_max; ++n) {
            const double k = 2.0 * std::numbers::pi * n / L;
            std::complex<double> m{};
            for (const auto& mol : mols)
                m += mol.dipole[axis] * std::polar(1.0, k * mol.center[axis]);
            out.value[n - 1] += std::norm(m) / static_cast<double>(mols.size());
        }
        ++out.frames;
    }
    if (out.frames > 0)
        for (double& v : out.value)
            v /= out.frames;
    return out;
}

std::string rdf_table(const Rdf& rdf)
{
    std::ostringstream out;
    out << "# rdf species=" << rdf.species_a << '-' << rdf.species_b << " r_max=" << format_double(rdf.r_max)
        << " n_bins=" << rdf.g.size() << " frames=" << rdf.frames << '\n';
    out << "# r_A g coordination\n";
    for (std::size_t k = 0; k < rdf.g.size(); ++k)
        out << format_sci(0.5 * (rdf.edges[k] + rdf.edges[k + 1])) << ' ' << format_sci(rdf.g[k]) << ' '
            << format_sci(rdf.coordination[k]) << '\n';
    return out.str();
}

std::string density_table(const DensityProfile& p)
{
    std::ostringstream out;
    out << "# density axis=" << axis_name(p.axis) << " n_bins=" << p.density.size() << " frames=" << p.frames
        << '\n';
    out << "# position_A density_g_per_mL\n";
    for (std::size_t k = 0; k < p.density.size(); ++k)
        out << format_sci(0.5 * (p.edges[k] + p.edges[k + 1])) << ' ' << format_sci(p.density[k]) << '\n';
    return out.str();
}

std::string orientation_table(const OrientationProfile& p)
{
    std::ostringstream out;
    out << "# orientation axis=" << axis_name(p.axis) << " n_bins=" << p.mean_cos.size()
        << " frames=" << p.frames << '\n';
    out << "# position_A mean_cos count\n";
    for (std::size_t k = 0; k < p.mean_cos.size(); ++k)
        out << format_sci(0.5 * (p.edges[k] + p.edges[k + 1])) << ' '
            << (p.mean_cos[k] ? format_sci(*p.mean_cos[k]) : std::string("empty")) << ' ' << p.counts[k] << '\n';
    return out.str();
}

std::string dipole_correlation_table(const DipoleCorrelation& c)
{
    std::ostringstream out;
    out << "# dipolecorr axis=" << axis_name(c.axis) << " n_max=" << c.n.size() << " frames=" << c.frames
        << " normalization=per_molecule\n";
    out << "# n k_inv_A correlation_e2A2\n";
    for (std::size_t k = 0; k < c.value.size(); ++k)
        out << c.n[k] << ' ' << format_sci(c.k.empty() ? 0.0 : c.k[k]) << ' ' << format_sci(c.value[k]) << '\n';
    return out.str();
}

} // namespace les
