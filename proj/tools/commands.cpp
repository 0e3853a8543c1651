#include "commands.hpp"

#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "les/analysis.hpp"
#include "les/dynamics.hpp"
#include "les/error.hpp"
#include "les/extxyz.hpp"
#include "les/format.hpp"
#include "les/latent_ewald.hpp"
#include "les/model.hpp"
#include "les/training.hpp"
#include "run_config.hpp"

namespace les::cli {

namespace fs = std::filesystem;

namespace {

const fs::path& require_file(const fs::path& path, const char* key)
{
    if (path.empty())
        throw UserError(std::string("no input file given: set ") + key + " in the config or pass --" + key
                        + "=PATH");
    if (!fs::is_regular_file(path))
        throw UserError("file not found: " + path.string() + " (" + key + ")");
    return path;
}

std::string header(const char* command, const RunConfig& rc)
{
    return std::string("# les ") + command + " seed=" + std::to_string(rc.seed) + '\n';
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << text))
        throw UserError("cannot write " + path.string());
}

fs::path prepare_output(const RunConfig& rc)
{
    std::error_code ec;
    fs::create_directories(rc.output_dir, ec);
    if (ec)
        throw UserError("cannot create output directory " + rc.output_dir.string() + ": " + ec.message());
    write_text(rc.output_dir / "config.json", rc.resolved.dump(2) + "\n");
    return rc.output_dir;
}

std::vector<Configuration> load_dataset(const fs::path& path, const char* key)
{
    auto frames = read_extxyz_file(require_file(path, key));
    if (frames.empty())
        throw UserError("no configurations in " + path.string());
    return frames;
}

std::string stats_line(const char* name, const ErrorStats& s)
{
    return std::string(name) + ": configs=" + std::to_string(s.configs)
         + " energy_rmse_meV_per_atom=" + format_sci(s.energy_rmse_per_atom, 6)
         + " force_rmse_eV_per_A=" + format_sci(s.force_rmse, 6) + '\n';
}

int cmd_train(RunConfig rc, std::ostream& out)
{
    const auto dataset = load_dataset(rc.dataset, "data.dataset");
    if (rc.descriptor.species.empty()) {
        std::set<std::string> elements;
        for (const auto& c : dataset)
            elements.insert(c.species.begin(), c.species.end());
        rc.descriptor.species.assign(elements.begin(), elements.end());
    }
    const auto initial = ModelParams::initialize(rc.descriptor, rc.lr, rc.hidden, rc.seed);
    const int report = std::max(1, rc.train.epochs / 10);
    const auto result = train(dataset, initial, rc.train, [&](const EpochRecord& r) {
        if (r.epoch % report == 0 || r.epoch == rc.train.epochs)
            out << "epoch " << r.epoch << " train_loss=" << format_sci(r.train_loss, 6)
                << " valid_loss=" << format_sci(r.valid_loss, 6) << " lr=" << format_sci(r.learning_rate, 3)
                << '\n';
    });

    const fs::path dir = prepare_output(rc);
    save_checkpoint(result.params, dir / "checkpoint.json");
    write_text(dir / "metrics.txt", header("train", rc) + history_table(result.history));
    write_text(dir / "results.json", results_json(result, rc.train));
    out << "model: " << (result.params.lr.enabled ? "long-range" : "short-range only") << ", "
        << result.params.trainable_count() << " parameters, best epoch " << result.best_epoch << '\n';
    out << stats_line("train", result.train) << stats_line("valid", result.valid)
        << stats_line("test", result.test);
    out << "checkpoint: " << (dir / "checkpoint.json").string() << '\n';
    return 0;
}

int cmd_eval(const RunConfig& rc, std::ostream& out)
{
    const auto params = load_checkpoint(require_file(rc.checkpoint, "model.checkpoint"));
    auto dataset = load_dataset(rc.dataset, "data.dataset");
    const fs::path dir = prepare_output(rc);

    Potential pot(params);
    std::string table = header("eval", rc);
    table += "# index n_atoms energy_ref_eV energy_pred_eV energy_sr_eV energy_lr_eV force_rmse_eV_per_A\n";
    std::vector<Configuration> predicted;
    for (std::size_t k = 0; k < dataset.size(); ++k) {
        const auto& c = dataset[k];
        const auto p = pot.evaluate(c);
        std::string frmse = "-";
        if (c.labels.forces) {
            double s = 0.0;
            for (std::size_t i = 0; i < c.size(); ++i) {
                const Vec3 d = p.forces[i] - (*c.labels.forces)[i];
                s += dot(d, d);
            }
            frmse = format_sci(std::sqrt(s / (3.0 * static_cast<double>(c.size()))));
        }
        table += std::to_string(k) + ' ' + std::to_string(c.size()) + ' '
               + (c.labels.energy ? format_sci(*c.labels.energy) : std::string("-")) + ' ' + format_sci(p.energy)
               + ' ' + format_sci(p.energy_sr) + ' ' + format_sci(p.energy_lr) + ' ' + frmse + '\n';
        Configuration q = c;
        q.labels.energy = p.energy;
        q.labels.forces = p.forces;
        q.info["energy_sr"] = format_double(p.energy_sr);
        q.info["energy_lr"] = format_double(p.energy_lr);
        predicted.push_back(std::move(q));
    }
    write_text(dir / "eval.txt", table);
    write_extxyz_file(dir / "predictions.extxyz", predicted);
    out << stats_line("eval", evaluate(params, dataset));
    return 0;
}

int cmd_md(const RunConfig& rc, std::ostream& out)
{
    const auto params = load_checkpoint(require_file(rc.checkpoint, "model.checkpoint"));
    auto init = read_extxyz_file(require_file(rc.structure, "data.structure"));
    if (init.empty())
        throw UserError("no configurations in " + rc.structure.string());
    Configuration start = std::move(init.front());
    start.labels = {};
    start.info.clear();

    const auto traj = run_md(start, rc.md, model_force_field(params));
    const fs::path dir = prepare_output(rc);
    write_extxyz_file(dir / "trajectory.extxyz", traj.frames);
    std::string energies = header("md", rc);
    energies += "# ensemble=" + to_string(rc.md.ensemble) + " dt_fs=" + format_double(rc.md.dt)
              + " temperature_K=" + format_double(rc.md.temperature)
              + " tau_fs=" + format_double(rc.md.time_constant()) + '\n';
    energies += energy_table(traj);
    write_text(dir / "energies.txt", energies);

    const auto& last = traj.records.back();
    out << "md: " << traj.frames.size() << " frames, last step " << last.step << ", T=" << format_sci(last.temperature, 6)
        << " K, conserved drift " << format_sci(last.conserved - traj.records.front().conserved, 6) << " eV\n";
    if (traj.halted) {
        out << "md halted: " << traj.halt_reason << '\n';
        return 1;
    }
    return 0;
}

int cmd_analyze(const RunConfig& rc, const std::string& kind, std::ostream& out)
{
    auto traj = read_extxyz_file(require_file(rc.trajectory, "data.trajectory"));
    const auto& a = rc.analysis;
    if (static_cast<std::size_t>(a.skip_frames) >= traj.size())
        throw UserError("analysis.skip_frames=" + std::to_string(a.skip_frames) + " leaves no frames of "
                        + std::to_string(traj.size()));
    traj.erase(traj.begin(), traj.begin() + a.skip_frames);

    std::string table;
    if (kind == "rdf")
        table = rdf_table(compute_rdf(traj, a.species_a, a.species_b, a.r_max, a.bins));
    else if (kind == "density")
        table = density_table(density_profile(traj, a.axis, a.bins));
    else if (kind == "orientation")
        table = orientation_table(orientation_profile(traj, a.axis, a.bins, a.charges));
    else
        table = dipole_correlation_table(dipole_k_correlation(traj, a.axis, a.n_max, a.charges));

    const fs::path dir = prepare_output(rc);
    const std::string text = header(("analyze " + kind).c_str(), rc) + table;
    write_text(dir / (kind + ".txt"), text);
    out << text;
    return 0;
}

int cmd_kinfo(const RunConfig& rc, const std::vector<double>& lengths, std::ostream& out)
{
    Cell cell;
    if (lengths.size() == 1)
        cell = Cell({lengths[0], lengths[0], lengths[0]});
    else if (lengths.size() == 3)
        cell = Cell({lengths[0], lengths[1], lengths[2]});
    else if (lengths.empty() && !rc.structure.empty())
        cell = read_extxyz_file(require_file(rc.structure, "data.structure")).at(0).cell;
    else
        throw UserError("kinfo needs --cell L or --cell Lx Ly Lz, or data.structure");
    if (!(cell.lengths().x > 0.0 && cell.lengths().y > 0.0 && cell.lengths().z > 0.0))
        throw UserError("cell lengths must be positive");

    const auto full = enumerate_kvectors(cell, rc.lr.k_cut, rc.lr.sigma, false);
    const auto half = enumerate_kvectors(cell, rc.lr.k_cut, rc.lr.sigma, true);
    out << header("kinfo", rc);
    out << "cell_A " << format_double(cell.lengths().x) << ' ' << format_double(cell.lengths().y) << ' '
        << format_double(cell.lengths().z) << '\n';
    out << "k_cut_inv_A " << format_double(rc.lr.k_cut) << '\n';
    out << "sigma_A " << format_double(rc.lr.sigma) << '\n';
    out << "full_space_vectors " << full.size() << '\n';
    out << "half_space_vectors " << half.size() << '\n';
    return 0;
}

} // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err)
{
    try {
        const auto overrides = extract_overrides(args);

        CLI::App app{"Latent Ewald summation interatomic potentials: train, evaluate, simulate, analyze."};
        app.footer(config_reference());
        app.require_subcommand(1);
        app.fallthrough();
        std::string config_path;
        app.add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);

        auto* train_cmd = app.add_subcommand("train", "fit a model to data.dataset, write checkpoint and metrics");
        auto* eval_cmd = app.add_subcommand("eval", "evaluate model.checkpoint on data.dataset");
        auto* md_cmd = app.add_subcommand("md", "run molecular dynamics from data.structure");
        auto* analyze_cmd = app.add_subcommand("analyze", "analyze data.trajectory");
        analyze_cmd->require_subcommand(1);
        for (const char* kind : {"rdf", "density", "orientation", "dipolecorr"})
            analyze_cmd->add_subcommand(kind, std::string(kind) + " table");
        auto* kinfo_cmd = app.add_subcommand("kinfo", "count reciprocal vectors below model.k_cut");
        std::vector<double> cell;
        kinfo_cmd->add_option("--cell", cell, "cube length, or three orthorhombic lengths (A)")->expected(1, 3);

        std::vector<const char*> argv{"les"};
        for (const auto& a : args)
            argv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            return app.exit(e, out, err) == 0 ? 0 : 1;
        }

        std::optional<fs::path> file;
        if (!config_path.empty())
            file = config_path;
        const RunConfig rc = resolve_config(merge_config(file, overrides));

        if (*train_cmd)
            return cmd_train(rc, out);
        if (*eval_cmd)
            return cmd_eval(rc, out);
        if (*md_cmd)
            return cmd_md(rc, out);
        if (*kinfo_cmd)
            return cmd_kinfo(rc, cell, out);
        return cmd_analyze(rc, analyze_cmd->get_subcommands().front()->get_name(), out);
    } catch (const UserError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace les::cli
