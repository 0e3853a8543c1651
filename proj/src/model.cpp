#include "les/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "les/error.hpp"
#include "les/random.hpp"

namespace les {

using nlohmann::json;

ModelParams ModelParams::initialize(DescriptorConfig descriptor, LrSettings lr,
                                    const std::vector<int>& hidden, std::uint64_t seed)
{
    descriptor.validate();
    ModelParams p;
    p.descriptor = std::move(descriptor);
    p.lr = lr;
    p.seed = seed;
    const int D = p.descriptor.dimension();
    Rng rng(seed);
    std::vector<int> widths{D};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(1);
    p.sr_head = Mlp::random(widths, rng);
    widths.back() = lr.channels;
    p.lr_head = Mlp::random(widths, rng);
    p.feature_shift.assign(D, 0.0);
    p.feature_scale.assign(D, 1.0);
    p.energy_offsets.assign(p.descriptor.species.size(), 0.0);
    p.validate();
    return p;
}

void ModelParams::validate() const
{
    descriptor.validate();
    const int D = descriptor.dimension();
    if (sr_head.widths().empty() || sr_head.input_dim() != D || sr_head.output_dim() != 1)
        throw UserError("short-range head must map the descriptor width to one energy");
    if (lr.channels < 1)
        throw UserError("latent charge channels must be at least 1");
    if (lr_head.widths().empty() || lr_head.input_dim() != D || lr_head.output_dim() != lr.channels)
        throw UserError("latent-charge head must map the descriptor width to the charge channels");
    if (!(lr.sigma > 0.0) || !(lr.k_cut > 0.0))
        throw UserError("long-range sigma and k_cut must be positive");
    if (feature_shift.size() != static_cast<std::size_t>(D) || feature_scale.size() != static_cast<std::size_t>(D))
        throw UserError("feature standardization does not match the descriptor width");
    if (energy_offsets.size() != descriptor.species.size())
        throw UserError("energy offsets do not match the species table");
    for (double v : sr_head.parameters())
        if (!std::isfinite(v))
            throw UserError("non-finite short-range head parameter");
    for (double v : lr_head.parameters())
        if (!std::isfinite(v))
            throw UserError("non-finite latent-charge head parameter");
}

std::size_t ModelParams::trainable_count() const
{
    return sr_head.parameter_count() + (lr.enabled ? lr_head.parameter_count() : 0) + energy_offsets.size();
}

std::vector<double> ModelParams::pack() const
{
    std::vector<double> flat;
    flat.reserve(trainable_count());
    const auto sr = sr_head.parameters();
    flat.insert(flat.end(), sr.begin(), sr.end());
    if (lr.enabled) {
        const auto q = lr_head.parameters();
        flat.insert(flat.end(), q.begin(), q.end());
    }
    flat.insert(flat.end(), energy_offsets.begin(), energy_offsets.end());
    return flat;
}

void ModelParams::unpack(std::span<const double> flat)
{
    if (flat.size() != trainable_count())
        throw UserError("parameter vector has the wrong length");
    auto it = flat.begin();
    auto sr = sr_head.parameters();
    std::copy(it, it + sr.size(), sr.begin());
    it += sr.size();
    if (lr.enabled) {
        auto q = lr_head.parameters();
        std::copy(it, it + q.size(), q.begin());
        it += q.size();
    }
    std::copy(it, flat.end(), energy_offsets.begin());
}

namespace {

struct ForwardPass {
    NeighborList nl;
    std::vector<double> x;           // standardized features, N x D
    std::vector<int> species;
    std::vector<Vec3> wrapped;
    std::vector<Mlp::Tape> sr_tapes;
    std::vector<Mlp::Tape> lr_tapes;
    std::optional<LatentCharges> q;
    LrGradients lr;
    Prediction pred;
};

NeighborList neighbors_for(const ModelParams& params, const Configuration& config)
{
    NeighborOptions opts;
    opts.multi_image = params.descriptor.r_cut >= 0.5 * config.cell.min_length();
    return build_neighbor_list(config, params.descriptor.r_cut, opts);
}

ForwardPass run_forward(const ModelParams& params, const Configuration& config, const KSpace* kspace)
{
    config.validate();
    ForwardPass fp;
    const int n = static_cast<int>(config.size());
    const int D = params.descriptor.dimension();
    fp.species.resize(n);
    for (int i = 0; i < n; ++i)
        fp.species[i] = params.descriptor.species_index(config.species[i]);

    fp.nl = neighbors_for(params, config);
    const FeatureSet fs = compute_features(config, fp.nl, params.descriptor);
    fp.x.resize(fs.values.size());
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < D; ++d) {
            const std::size_t k = static_cast<std::size_t>(i) * D + d;
            fp.x[k] = (fs.values[k] - params.feature_shift[d]) * params.feature_scale[d];
        }

    std::vector<double> dEdx(fs.values.size(), 0.0);
    const std::vector<double> one{1.0};
    fp.sr_tapes.resize(n);
    double e_sr = 0.0;
    for (int i = 0; i < n; ++i) {
        const std::span<const double> xi(fp.x.data() + static_cast<std::size_t>(i) * D, D);
        params.sr_head.forward(xi, fp.sr_tapes[i]);
        e_sr += params.energy_offsets[fp.species[i]] + fp.sr_tapes[i].output()[0];
        params.sr_head.backward(fp.sr_tapes[i], one, {}, {},
                                std::span<double>(dEdx.data() + static_cast<std::size_t>(i) * D, D));
    }

    fp.wrapped.resize(n);
    for (int i = 0; i < n; ++i)
        fp.wrapped[i] = wrap_position(config.positions[i], config.cell);

    double e_lr = 0.0;
    std::vector<Vec3> grad_r;
    if (params.lr.enabled) {
        std::optional<KSpace> own;
        if (kspace == nullptr || !(kspace->cell == config.cell)) {
            own = enumerate_kvectors(config.cell, params.lr.k_cut, params.lr.sigma);
            kspace = &*own;
        }
        const int d = params.lr.channels;
        fp.q = LatentCharges(n, d);
        fp.lr_tapes.resize(n);
        for (int i = 0; i < n; ++i) {
            const std::span<const double> xi(fp.x.data() + static_cast<std::size_t>(i) * D, D);
            params.lr_head.forward(xi, fp.lr_tapes[i]);
            for (int c = 0; c < d; ++c)
                (*fp.q)(i, c) = fp.lr_tapes[i].output()[c];
        }
        fp.lr = lr_gradients(*fp.q, fp.wrapped, *kspace);
        e_lr = fp.lr.energy;
        std::vector<double> xgrad(D);
        for (int i = 0; i < n; ++i) {
            const std::span<const double> gi(fp.lr.dq.data() + static_cast<std::size_t>(i) * d, d);
            params.lr_head.backward(fp.lr_tapes[i], gi, {}, {}, xgrad);
            for (int k = 0; k < D; ++k)
                dEdx[static_cast<std::size_t>(i) * D + k] += xgrad[k];
        }
    }

    for (int i = 0; i < n; ++i)
        for (int k = 0; k < D; ++k)
            dEdx[static_cast<std::size_t>(i) * D + k] *= params.feature_scale[k];
    grad_r = feature_vjp(config, fp.nl, params.descriptor, dEdx);
    if (params.lr.enabled)
        for (int i = 0; i < n; ++i)
            grad_r[i] += fp.lr.dr[i];

    fp.pred.energy_sr = e_sr;
    fp.pred.energy_lr = e_lr;
    fp.pred.energy = e_sr + e_lr;
    fp.pred.forces.resize(n);
    for (int i = 0; i < n; ++i) {
        fp.pred.forces[i] = -grad_r[i];
        const Vec3& f = fp.pred.forces[i];
        if (!std::isfinite(f.x) || !std::isfinite(f.y) || !std::isfinite(f.z))
            throw NumericalError("non-finite force on atom " + std::to_string(i));
    }
    fp.pred.latent_q = fp.q;
    return fp;
}

} // namespace

Prediction predict(const ModelParams& params, const Configuration& config, const KSpace* kspace)
{
    return run_forward(params, config, kspace).pred;
}

ParameterGradient parameter_gradient(const ModelParams& params, const Configuration& config,
                                     const std::function<PredictionAdjoint(const Prediction&)>& adjoint,
                                     const KSpace* kspace)
{
    ForwardPass fp = run_forward(params, config, kspace);
    const PredictionAdjoint adj = adjoint(fp.pred);
    const int n = static_cast<int>(config.size());
    const int D = params.descriptor.dimension();

    ParameterGradient out;
    out.gradient.assign(params.trainable_count(), 0.0);
    const std::size_t n_sr = params.sr_head.parameter_count();
    const std::size_t n_lr = params.lr.enabled ? params.lr_head.parameter_count() : 0;
    std::span<double> g_sr(out.gradient.data(), n_sr);
    std::span<double> g_lr(out.gradient.data() + n_sr, n_lr);
    std::span<double> g_off(out.gradient.data() + n_sr + n_lr, params.energy_offsets.size());

    for (int i = 0; i < n; ++i)
        g_off[fp.species[i]] += adj.energy;

    const bool force_term = !adj.forces.empty();
    if (force_term && adj.forces.size() != config.size())
        throw UserError("force adjoint has the wrong number of rows");

    std::vector<double> xdot;
    if (force_term) {
        xdot = feature_jvp(config, fp.nl, params.descriptor, adj.forces);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < D; ++k)
                xdot[static_cast<std::size_t>(i) * D + k] *= params.feature_scale[k];
    }

    const std::vector<double> e_adj{adj.energy};
    const std::vector<double> e_dot_adj{-1.0};
    Mlp::Tape tape;
    for (int i = 0; i < n; ++i) {
        const std::span<const double> xi(fp.x.data() + static_cast<std::size_t>(i) * D, D);
        if (force_term) {
            const std::span<const double> xdi(xdot.data() + static_cast<std::size_t>(i) * D, D);
            params.sr_head.forward(xi, xdi, tape);
            params.sr_head.backward(tape, e_adj, e_dot_adj, g_sr, {});
        } else {
            params.sr_head.backward(fp.sr_tapes[i], e_adj, {}, g_sr, {});
        }
    }

    if (params.lr.enabled) {
        const int d = params.lr.channels;
        std::vector<double> out_adj(d), out_dot_adj(d);
        if (!force_term) {
            for (int i = 0; i < n; ++i) {
                for (int c = 0; c < d; ++c)
                    out_adj[c] = adj.energy * fp.lr.dq[static_cast<std::size_t>(i) * d + c];
                params.lr_head.backward(fp.lr_tapes[i], out_adj, {}, g_lr, {});
            }
        } else {
            std::vector<Mlp::Tape> tapes(n);
            std::vector<double> qdot(static_cast<std::size_t>(n) * d);
            for (int i = 0; i < n; ++i) {
                const std::span<const double> xi(fp.x.data() + static_cast<std::size_t>(i) * D, D);
                const std::span<const double> xdi(xdot.data() + static_cast<std::size_t>(i) * D, D);
                params.lr_head.forward(xi, xdi, tapes[i]);
                for (int c = 0; c < d; ++c)
                    qdot[static_cast<std::size_t>(i) * d + c] = tapes[i].output_tangent()[c];
            }
            std::optional<KSpace> own;
            if (kspace == nullptr || !(kspace->cell == config.cell)) {
                own = enumerate_kvectors(config.cell, params.lr.k_cut, params.lr.sigma);
                kspace = &*own;
            }
            const LrTangent tan = lr_tangent(*fp.q, qdot, fp.wrapped, adj.forces, *kspace);
            for (int i = 0; i < n; ++i) {
                for (int c = 0; c < d; ++c) {
                    const std::size_t k = static_cast<std::size_t>(i) * d + c;
                    out_adj[c] = adj.energy * fp.lr.dq[k] - tan.dq[k];
                    out_dot_adj[c] = -fp.lr.dq[k];
                }
                params.lr_head.backward(tapes[i], out_adj, out_dot_adj, g_lr, {});
            }
        }
    }
    out.prediction = std::move(fp.pred);
    return out;
}

Prediction Potential::evaluate(const Configuration& config)
{
    if (params_.lr.enabled && (!kspace_ || !(kspace_->cell == config.cell)))
        kspace_ = enumerate_kvectors(config.cell, params_.lr.k_cut, params_.lr.sigma);
    return predict(params_, config, kspace_ ? &*kspace_ : nullptr);
}

// ---------------------------------------------------------------------------
// checkpoint

namespace {

const char* const checkpoint_sections[] = {"format_version", "seed",           "descriptor",
                                           "long_range",     "standardization", "energy_offsets",
                                           "sr_head",        "lr_head"};

json mlp_to_json(const Mlp& m)
{
    json layers = json::array();
    for (int l = 0; l < m.layer_count(); ++l) {
        json w = json::array();
        for (int o = 0; o < m.widths()[l + 1]; ++o) {
            json row = json::array();
            for (int i = 0; i < m.widths()[l]; ++i)
                row.push_back(m.weight(l, o, i));
            w.push_back(std::move(row));
        }
        json b = json::array();
        for (int o = 0; o < m.widths()[l + 1]; ++o)
            b.push_back(m.bias(l, o));
        layers.push_back({{"weights", std::move(w)}, {"bias", std::move(b)}});
    }
    return {{"widths", m.widths()}, {"activation", "shifted_softplus"}, {"layers", std::move(layers)}};
}

const json& require(const json& j, const std::string& key, const std::string& where)
{
    if (!j.is_object() || !j.contains(key))
        throw UserError("checkpoint is missing field '" + key + "' in section '" + where + "'");
    return j.at(key);
}

Mlp mlp_from_json(const json& j, const std::string& where)
{
    Mlp m(require(j, "widths", where).get<std::vector<int>>());
    const json& layers = require(j, "layers", where);
    if (!layers.is_array() || static_cast<int>(layers.size()) != m.layer_count())
        throw UserError("checkpoint section '" + where + "' has the wrong number of layers");
    for (int l = 0; l < m.layer_count(); ++l) {
        const json& w = require(layers[l], "weights", where);
        const json& b = require(layers[l], "bias", where);
        if (static_cast<int>(w.size()) != m.widths()[l + 1] || static_cast<int>(b.size()) != m.widths()[l + 1])
            throw UserError("checkpoint section '" + where + "' has inconsistent layer shapes");
        for (int o = 0; o < m.widths()[l + 1]; ++o) {
            if (static_cast<int>(w[o].size()) != m.widths()[l])
                throw UserError("checkpoint section '" + where + "' has inconsistent layer shapes");
            for (int i = 0; i < m.widths()[l]; ++i)
                m.weight(l, o, i) = w[o][i].get<double>();
            m.bias(l, o) = b[o].get<double>();
        }
    }
    return m;
}

} // namespace

std::string checkpoint_to_string(const ModelParams& params)
{
    params.validate();
    json j;
    j["format"] = "les-checkpoint";
    j["format_version"] = checkpoint_format_version;
    j["seed"] = params.seed;
    j["descriptor"] = {{"r_cut", params.descriptor.r_cut},
                       {"n_radial", params.descriptor.n_radial},
                       {"l_max", params.descriptor.l_max},
                       {"species", params.descriptor.species}};
    j["long_range"] = {{"enabled", params.lr.enabled},
                       {"sigma", params.lr.sigma},
                       {"k_cut", params.lr.k_cut},
                       {"channels", params.lr.channels}};
    j["standardization"] = {{"shift", params.feature_shift}, {"scale", params.feature_scale}};
    json offsets = json::object();
    for (std::size_t s = 0; s < params.energy_offsets.size(); ++s)
        offsets[params.descriptor.species[s]] = params.energy_offsets[s];
    j["energy_offsets"] = std::move(offsets);
    j["sr_head"] = mlp_to_json(params.sr_head);
    j["lr_head"] = mlp_to_json(params.lr_head);
    return j.dump(1) + "\n";
}

ModelParams checkpoint_from_string(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        std::string missing;
        for (const char* section : checkpoint_sections)
            if (text.find("\"" + std::string(section) + "\"") == std::string::npos)
                missing += (missing.empty() ? "'" : ", '") + std::string(section) + "'";
        if (!missing.empty())
            throw UserError("checkpoint is truncated: missing " + missing);
        throw UserError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    for (const char* section : checkpoint_sections)
        if (!j.is_object() || !j.contains(section))
            throw UserError("checkpoint is missing section '" + std::string(section) + "'");
    const int version = j.at("format_version").get<int>();
    if (version != checkpoint_format_version)
        throw UserError("checkpoint format version " + std::to_string(version) + " is not supported (expected "
                        + std::to_string(checkpoint_format_version) + ")");

    try {
        ModelParams p;
        p.seed = j.at("seed").get<std::uint64_t>();
        const json& d = j.at("descriptor");
        p.descriptor.r_cut = require(d, "r_cut", "descriptor").get<double>();
        p.descriptor.n_radial = require(d, "n_radial", "descriptor").get<int>();
        p.descriptor.l_max = require(d, "l_max", "descriptor").get<int>();
        p.descriptor.species = require(d, "species", "descriptor").get<std::vector<std::string>>();
        const json& lr = j.at("long_range");
        p.lr.enabled = require(lr, "enabled", "long_range").get<bool>();
        p.lr.sigma = require(lr, "sigma", "long_range").get<double>();
        p.lr.k_cut = require(lr, "k_cut", "long_range").get<double>();
        p.lr.channels = require(lr, "channels", "long_range").get<int>();
        const json& st = j.at("standardization");
        p.feature_shift = require(st, "shift", "standardization").get<std::vector<double>>();
        p.feature_scale = require(st, "scale", "standardization").get<std::vector<double>>();
        const json& off = j.at("energy_offsets");
        for (const auto& s : p.descriptor.species)
            p.energy_offsets.push_back(require(off, s, "energy_offsets").get<double>());
        p.sr_head = mlp_from_json(j.at("sr_head"), "sr_head");
        p.lr_head = mlp_from_json(j.at("lr_head"), "lr_head");
        p.validate();
        return p;
    } catch (const json::exception& e) {
        throw UserError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw UserError("cannot write checkpoint '" + path.string() + "'");
    out << checkpoint_to_string(params);
}

ModelParams load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw UserError("cannot open checkpoint '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_string(buf.str());
}

} // namespace les
