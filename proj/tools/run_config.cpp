#include "run_config.hpp"

#include <fstream>
#include <numbers>
#include <sstream>

#include "les/error.hpp"

namespace les::cli {

using nlohmann::ordered_json;

namespace {

struct KeySpec {
    const char* path;
    ordered_json value;
    const char* help;
};

const std::vector<KeySpec>& key_table()
{
    static const std::vector<KeySpec> table = {
        {"seed", 0, "root seed: weight initialization, data split, MD velocities and noise"},
        {"data.dataset", "", "labeled extxyz file read by train and eval"},
        {"data.structure", "", "extxyz file whose first frame starts md"},
        {"data.trajectory", "", "extxyz trajectory read by analyze"},
        {"descriptor.r_cut", 5.0, "descriptor cutoff radius (A)"},
        {"descriptor.n_radial", 6, "number of radial basis functions"},
        {"descriptor.l_max", 2, "highest Legendre order of the three-body terms"},
        {"descriptor.species", ordered_json::array(), "element table; empty means the sorted elements of the dataset"},
        {"model.checkpoint", "", "checkpoint read by eval and md"},
        {"model.lr_enabled", true, "include the latent-charge long-range term"},
        {"model.sigma", 1.0, "Gaussian smearing width sigma (A)"},
        {"model.k_cut", std::numbers::pi, "reciprocal-space cutoff k_c (1/A)"},
        {"model.channels", 4, "latent charge channels d"},
        {"model.hidden", ordered_json::array({32, 32}), "hidden layer widths of both heads"},
        {"train.lambda_e", 1.0, "energy loss weight (per-atom energy error)"},
        {"train.lambda_f", 10.0, "force loss weight"},
        {"train.learning_rate", 1e-3, "initial Adam learning rate"},
        {"train.decay_factor", 0.5, "learning-rate factor applied on a validation plateau"},
        {"train.patience", 50, "epochs without validation improvement before decay"},
        {"train.min_learning_rate", 1e-7, "learning-rate floor"},
        {"train.epochs", 500, "training epochs"},
        {"train.batch_size", 0, "configurations per step; 0 means full batch"},
        {"train.train_fraction", 0.8, "fraction of the dataset used for training"},
        {"train.valid_fraction", 0.2, "fraction used for validation; the rest is the test split"},
        {"md.ensemble", "nve", "nve, nose_hoover (alias nvt) or langevin"},
        {"md.temperature", 300.0, "target or initial temperature (K)"},
        {"md.dt", 0.5, "time step (fs)"},
        {"md.steps", 1000, "number of steps"},
        {"md.tau", 0.0, "thermostat time constant (fs); 0 means 100 dt"},
        {"md.output_stride", 10, "steps between written frames"},
        {"md.max_speed", 1.0, "speed (A/fs) above which the run halts as unstable"},
        {"analysis.species_a", "O", "first species of the RDF"},
        {"analysis.species_b", "O", "second species of the RDF"},
        {"analysis.r_max", 6.0, "RDF range (A), at most half the shortest cell length"},
        {"analysis.bins", 60, "histogram bins for rdf, density and orientation"},
        {"analysis.axis", "z", "profile and k-vector axis: x, y or z"},
        {"analysis.n_max", 10, "dipole correlation uses k = 2 pi n / L for n = 1..n_max"},
        {"analysis.skip_frames", 0, "leading trajectory frames to ignore"},
        {"analysis.hydrogen_charge", 0.4238, "hydrogen point charge for molecular dipoles (e)"},
        {"output.dir", "les_out", "directory receiving all output files"},
    };
    return table;
}

ordered_json::json_pointer pointer(const std::string& dotted)
{
    std::string p = "/" + dotted;
    for (char& c : p)
        if (c == '.')
            c = '/';
    return ordered_json::json_pointer(p);
}

const KeySpec* find_key(const std::string& path)
{
    for (const auto& k : key_table())
        if (path == k.path)
            return &k;
    return nullptr;
}

bool is_integer(const ordered_json& v)
{
    return v.is_number_integer() || v.is_number_unsigned();
}

// Checks `value` against the type of the default and returns the stored form.
ordered_json coerce(const KeySpec& key, const ordered_json& value)
{
    const auto& def = key.value;
    auto fail = [&](const char* expected) {
        return UserError(std::string("config key '") + key.path + "' expects " + expected + ", got "
                         + value.dump());
    };
    if (def.is_boolean()) {
        if (!value.is_boolean())
            throw fail("true or false");
    } else if (is_integer(def)) {
        if (!is_integer(value))
            throw fail("an integer");
    } else if (def.is_number_float()) {
        if (!value.is_number())
            throw fail("a number");
        return value.get<double>();
    } else if (def.is_string()) {
        if (!value.is_string())
            throw fail("a string");
    } else if (def.is_array()) {
        if (!value.is_array())
            throw fail("a list");
    }
    return value;
}

void merge_file(ordered_json& doc, const ordered_json& file, const std::string& prefix)
{
    if (!file.is_object())
        throw UserError("config section '" + (prefix.empty() ? std::string("<root>") : prefix)
                        + "' must be an object");
    for (const auto& [name, value] : file.items()) {
        const std::string path = prefix.empty() ? name : prefix + "." + name;
        if (const KeySpec* key = find_key(path)) {
            doc[pointer(path)] = coerce(*key, value);
            continue;
        }
        const auto ptr = pointer(path);
        if (!doc.contains(ptr) || !doc[ptr].is_object())
            throw UserError("unknown config key '" + path + "'");
        merge_file(doc, value, path);
    }
}

ordered_json parse_override_value(const KeySpec& key, const std::string& raw)
{
    if (key.value.is_string())
        return raw;
    if (key.value.is_array() && (raw.empty() || raw.front() != '[')) {
        ordered_json list = ordered_json::array();
        std::stringstream in(raw);
        std::string item;
        while (std::getline(in, item, ',')) {
            auto v = ordered_json::parse(item, nullptr, false);
            list.push_back(v.is_discarded() ? ordered_json(item) : v);
        }
        return list;
    }
    auto v = ordered_json::parse(raw, nullptr, false);
    if (v.is_discarded())
        throw UserError(std::string("cannot parse value '") + raw + "' for config key '" + key.path + "'");
    return v;
}

template <class T>
T get(const ordered_json& doc, const char* path)
{
    return doc.at(pointer(path)).get<T>();
}

} // namespace

ordered_json default_config()
{
    ordered_json doc = ordered_json::object();
    for (const auto& k : key_table())
        doc[pointer(k.path)] = k.value;
    return doc;
}

std::string config_reference()
{
    std::ostringstream out;
    out << "Config keys (JSON file sections; override any key with --section.key=value):\n";
    for (const auto& k : key_table()) {
        std::string line = std::string("  ") + k.path + " = " + k.value.dump();
        if (line.size() < 40)
            line.resize(40, ' ');
        else
            line += "  ";
        out << line << k.help << '\n';
    }
    out << "  --lr-enabled=<bool> is shorthand for --model.lr_enabled=<bool>\n";
    return out.str();
}

std::vector<Override> extract_overrides(std::vector<std::string>& args)
{
    std::vector<Override> found;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) != 0) {
            rest.push_back(a);
            continue;
        }
        const auto eq = a.find('=');
        std::string name = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
        const bool alias = name == "lr-enabled";
        if (!alias && name.find('.') == std::string::npos && !find_key(name)) {
            rest.push_back(a);
            continue;
        }
        if (alias)
            name = "model.lr_enabled";
        std::string value;
        if (eq != std::string::npos)
            value = a.substr(eq + 1);
        else if (i + 1 < args.size() && args[i + 1].rfind("--", 0) != 0)
            value = args[++i];
        else if (alias)
            value = "true";
        else
            throw UserError("missing value for --" + name);
        found.emplace_back(name, value);
    }
    args = std::move(rest);
    return found;
}

ordered_json merge_config(const std::optional<std::filesystem::path>& file, const std::vector<Override>& overrides)
{
    ordered_json doc = default_config();
    if (file) {
        std::ifstream in(*file);
        if (!in)
            throw UserError("cannot open config file " + file->string());
        std::stringstream text;
        text << in.rdbuf();
        const auto parsed = ordered_json::parse(text.str(), nullptr, false);
        if (parsed.is_discarded())
            throw UserError("config file " + file->string() + " is not valid JSON");
        merge_file(doc, parsed, "");
    }
    for (const auto& [path, raw] : overrides) {
        const KeySpec* key = find_key(path);
        if (!key)
            throw UserError("unknown config key '" + path + "' in override --" + path);
        doc[pointer(path)] = coerce(*key, parse_override_value(*key, raw));
    }
    return doc;
}

RunConfig resolve_config(const ordered_json& doc)
{
    RunConfig rc;
    const auto seed = doc.at("seed");
    if (seed.is_number_integer() && seed.get<long long>() < 0)
        throw UserError("seed must be non-negative");
    rc.seed = seed.get<std::uint64_t>();
    rc.dataset = get<std::string>(doc, "data.dataset");
    rc.structure = get<std::string>(doc, "data.structure");
    rc.trajectory = get<std::string>(doc, "data.trajectory");
    rc.checkpoint = get<std::string>(doc, "model.checkpoint");
    rc.output_dir = get<std::string>(doc, "output.dir");
    if (rc.output_dir.empty())
        throw UserError("output.dir must not be empty");

    rc.descriptor.r_cut = get<double>(doc, "descriptor.r_cut");
    rc.descriptor.n_radial = get<int>(doc, "descriptor.n_radial");
    rc.descriptor.l_max = get<int>(doc, "descriptor.l_max");
    for (const auto& s : doc.at(pointer("descriptor.species"))) {
        if (!s.is_string())
            throw UserError("descriptor.species must list element symbols");
        rc.descriptor.species.push_back(s.get<std::string>());
    }

    rc.lr.enabled = get<bool>(doc, "model.lr_enabled");
    rc.lr.sigma = get<double>(doc, "model.sigma");
    rc.lr.k_cut = get<double>(doc, "model.k_cut");
    rc.lr.channels = get<int>(doc, "model.channels");
    if (!(rc.lr.sigma > 0.0) || !(rc.lr.k_cut > 0.0) || rc.lr.channels < 1)
        throw UserError("model.sigma and model.k_cut must be positive and model.channels at least 1");
    for (const auto& h : doc.at(pointer("model.hidden"))) {
        if (!is_integer(h) || h.get<long long>() < 1)
            throw UserError("model.hidden must list positive layer widths");
        rc.hidden.push_back(h.get<int>());
    }

    rc.train.weights.energy = get<double>(doc, "train.lambda_e");
    rc.train.weights.forces = get<double>(doc, "train.lambda_f");
    rc.train.learning_rate = get<double>(doc, "train.learning_rate");
    rc.train.decay_factor = get<double>(doc, "train.decay_factor");
    rc.train.patience = get<int>(doc, "train.patience");
    rc.train.min_learning_rate = get<double>(doc, "train.min_learning_rate");
    rc.train.epochs = get<int>(doc, "train.epochs");
    rc.train.batch_size = get<int>(doc, "train.batch_size");
    rc.train.train_fraction = get<double>(doc, "train.train_fraction");
    rc.train.valid_fraction = get<double>(doc, "train.valid_fraction");
    rc.train.seed = rc.seed;
    rc.train.validate();

    rc.md.ensemble = ensemble_from_string(get<std::string>(doc, "md.ensemble"));
    rc.md.temperature = get<double>(doc, "md.temperature");
    rc.md.dt = get<double>(doc, "md.dt");
    rc.md.steps = get<long>(doc, "md.steps");
    rc.md.tau = get<double>(doc, "md.tau");
    rc.md.output_stride = get<int>(doc, "md.output_stride");
    rc.md.max_speed = get<double>(doc, "md.max_speed");
    rc.md.seed = rc.seed;
    rc.md.validate();

    auto& a = rc.analysis;
    a.species_a = get<std::string>(doc, "analysis.species_a");
    a.species_b = get<std::string>(doc, "analysis.species_b");
    a.r_max = get<double>(doc, "analysis.r_max");
    a.bins = get<int>(doc, "analysis.bins");
    a.axis = axis_from_string(get<std::string>(doc, "analysis.axis"));
    a.n_max = get<int>(doc, "analysis.n_max");
    a.skip_frames = get<int>(doc, "analysis.skip_frames");
    a.charges.hydrogen = get<double>(doc, "analysis.hydrogen_charge");
    a.charges.oxygen = -2.0 * a.charges.hydrogen;
    if (a.skip_frames < 0)
        throw UserError("analysis.skip_frames must be non-negative");

    rc.resolved = doc;
    return rc;
}

} // namespace les::cli
