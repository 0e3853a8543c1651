#include "les/dynamics.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include "les/error.hpp"
#include "les/format.hpp"

namespace les {

std::string to_string(Ensemble e)
{
    switch (e) {
    case Ensemble::nve:
        return "nve";
    case Ensemble::nose_hoover:
        return "nose_hoover";
    case Ensemble::langevin:
        return "langevin";
    }
    return "unknown";
}

Ensemble ensemble_from_string(const std::string& name)
{
    if (name == "nve")
        return Ensemble::nve;
    if (name == "nose_hoover" || name == "nvt")
        return Ensemble::nose_hoover;
    if (name == "langevin")
        return Ensemble::langevin;
    throw UserError("unknown ensemble '" + name + "' (expected nve, nose_hoover or langevin)");
}

void MdProtocol::validate() const
{
    if (!(dt > 0.0))
        throw UserError("MD time step must be positive");
    if (steps < 0)
        throw UserError("MD step count must be non-negative");
    if (ensemble != Ensemble::nve && !(temperature > 0.0))
        throw UserError("thermostatted MD needs a positive target temperature");
    if (temperature < 0.0)
        throw UserError("temperature must be non-negative");
    if (tau < 0.0)
        throw UserError("thermostat time constant must be non-negative");
    if (output_stride < 1)
        throw UserError("output stride must be at least 1");
    if (!(max_speed > 0.0))
        throw UserError("speed limit must be positive");
}

ForceField model_force_field(const ModelParams& params)
{
    auto pot = std::make_shared<Potential>(params);
    return [pot](const Configuration& c) { return pot->evaluate(c); };
}

double MdState::kinetic_energy() const
{
    double ke = 0.0;
    for (std::size_t i = 0; i < velocities.size(); ++i)
        ke += 0.5 * masses[i] * dot(velocities[i], velocities[i]);
    return ke / force_to_acceleration;
}

int MdState::degrees_of_freedom(Ensemble e) const
{
    const int n = static_cast<int>(masses.size());
    // deterministic integrators conserve the net momentum, the Langevin bath does not
    if (e == Ensemble::langevin || n < 2)
        return 3 * n;
    return 3 * n - 3;
}

double MdState::temperature(Ensemble e) const
{
    const int g = degrees_of_freedom(e);
    return g > 0 ? 2.0 * kinetic_energy() / (g * boltzmann_ev) : 0.0;
}

Vec3 MdState::momentum() const
{
    Vec3 p{};
    for (std::size_t i = 0; i < velocities.size(); ++i)
        p += velocities[i] * masses[i];
    return p;
}

namespace {

double thermostat_mass(const MdState& s, const MdProtocol& p)
{
    const double tau = p.time_constant();
    return s.degrees_of_freedom(p.ensemble) * boltzmann_ev * p.temperature * tau * tau;
}

Configuration wrapped(const Configuration& c)
{
    Configuration w = c;
    for (auto& r : w.positions)
        r = wrap_position(r, w.cell);
    return w;
}

void evaluate_forces(MdState& s, const ForceField& forces)
{
    s.last = forces(wrapped(s.config));
    if (s.last.forces.size() != s.config.size())
        throw UserError("force field returned the wrong number of forces");
    for (std::size_t i = 0; i < s.last.forces.size(); ++i) {
        const Vec3& f = s.last.forces[i];
        if (!std::isfinite(f.x) || !std::isfinite(f.y) || !std::isfinite(f.z))
            throw NumericalError("non-finite force on atom " + std::to_string(i) + " at step "
                                 + std::to_string(s.step));
    }
}

void kick(MdState& s, double dt)
{
    for (std::size_t i = 0; i < s.velocities.size(); ++i)
        s.velocities[i] += s.last.forces[i] * (dt * force_to_acceleration / s.masses[i]);
}

void drift(MdState& s, double dt)
{
    for (std::size_t i = 0; i < s.velocities.size(); ++i)
        s.config.positions[i] += s.velocities[i] * dt;
}

// Nose-Hoover thermostat propagation over dt/2 (Trotter splitting).
void thermostat_half(MdState& s, const MdProtocol& p)
{
    const double Q = thermostat_mass(s, p);
    const double gkT = s.degrees_of_freedom(p.ensemble) * boltzmann_ev * p.temperature;
    const double dt = p.dt;
    double ke = s.kinetic_energy();
    s.thermostat_velocity += 0.25 * dt * (2.0 * ke - gkT) / Q;
    const double scale = std::exp(-0.5 * dt * s.thermostat_velocity);
    for (auto& v : s.velocities)
        v = v * scale;
    ke *= scale * scale;
    s.thermostat_position += 0.5 * dt * s.thermostat_velocity;
    s.thermostat_velocity += 0.25 * dt * (2.0 * ke - gkT) / Q;
}

void langevin_bath(MdState& s, const MdProtocol& p)
{
    const double gamma = 1.0 / p.time_constant();
    const double c1 = std::exp(-gamma * p.dt);
    const double c2 = std::sqrt(1.0 - c1 * c1);
    const double before = s.kinetic_energy();
    for (std::size_t i = 0; i < s.velocities.size(); ++i) {
        const double sd = std::sqrt(boltzmann_ev * p.temperature * force_to_acceleration / s.masses[i]);
        for (int a = 0; a < 3; ++a)
            s.velocities[i][a] = c1 * s.velocities[i][a] + c2 * sd * s.rng.normal();
    }
    s.bath_energy += before - s.kinetic_energy();
}

void check_speeds(const MdState& s, const MdProtocol& p)
{
    for (std::size_t i = 0; i < s.velocities.size(); ++i) {
        const double v = norm(s.velocities[i]);
        if (!(v <= p.max_speed))
            throw InstabilityError("unstable dynamics: atom " + std::to_string(i) + " moves at "
                                   + format_double(v) + " A/fs at step " + std::to_string(s.step));
    }
}

Configuration snapshot(const MdState& s, const MdProtocol& p)
{
    Configuration c = s.config;
    c.velocities = s.velocities;
    c.labels.energy = s.last.energy;
    c.labels.forces = s.last.forces;
    c.info.clear();
    c.info["step"] = std::to_string(s.step);
    c.info["time_fs"] = format_double(s.time);
    c.info["temperature_K"] = format_double(s.temperature(p.ensemble));
    c.info["kinetic_energy"] = format_double(s.kinetic_energy());
    c.info["potential_energy"] = format_double(s.last.energy);
    c.info["energy_sr"] = format_double(s.last.energy_sr);
    c.info["energy_lr"] = format_double(s.last.energy_lr);
    c.info["total_energy"] = format_double(s.kinetic_energy() + s.last.energy);
    c.info["conserved_energy"] = format_double(s.conserved_energy(p));
    c.info["ensemble"] = to_string(p.ensemble);
    c.info["seed"] = std::to_string(p.seed);
    return c;
}

FrameRecord record(const MdState& s, const MdProtocol& p)
{
    FrameRecord r;
    r.step = s.step;
    r.time = s.time;
    r.temperature = s.temperature(p.ensemble);
    r.kinetic = s.kinetic_energy();
    r.potential = s.last.energy;
    r.energy_sr = s.last.energy_sr;
    r.energy_lr = s.last.energy_lr;
    r.total = r.kinetic + r.potential;
    r.conserved = s.conserved_energy(p);
    return r;
}

} // namespace

double MdState::conserved_energy(const MdProtocol& protocol) const
{
    double e = kinetic_energy() + last.energy;
    switch (protocol.ensemble) {
    case Ensemble::nve:
        break;
    case Ensemble::nose_hoover: {
        const double Q = thermostat_mass(*this, protocol);
        const double gkT = degrees_of_freedom(protocol.ensemble) * boltzmann_ev * protocol.temperature;
        e += 0.5 * Q * thermostat_velocity * thermostat_velocity + gkT * thermostat_position;
        break;
    }
    case Ensemble::langevin:
        e += bath_energy;
        break;
    }
    return e;
}

MdState initialize_md(Configuration config, const MdProtocol& protocol, const ForceField& forces)
{
    protocol.validate();
    config.validate();
    MdState s;
    s.rng = Rng(protocol.seed);
    for (const auto& sp : config.species)
        s.masses.push_back(atomic_mass(sp));
    const std::size_t n = config.size();
    if (config.velocities) {
        s.velocities = *config.velocities;
    } else {
        s.velocities.assign(n, Vec3{});
        if (protocol.temperature > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                const double sd = std::sqrt(boltzmann_ev * protocol.temperature * force_to_acceleration / s.masses[i]);
                s.velocities[i] = {sd * s.rng.normal(), sd * s.rng.normal(), sd * s.rng.normal()};
            }
            if (n > 1) {
                double mass = 0.0;
                for (double m : s.masses)
                    mass += m;
                const Vec3 vcm = s.momentum() * (1.0 / mass);
                for (auto& v : s.velocities)
                    v = v - vcm;
            }
        }
    }
    config.velocities.reset();
    s.config = std::move(config);
    evaluate_forces(s, forces);
    return s;
}

void md_step(MdState& s, const MdProtocol& p, const ForceField& forces)
{
    const double dt = p.dt;
    switch (p.ensemble) {
    case Ensemble::nve:
        kick(s, 0.5 * dt);
        drift(s, dt);
        evaluate_forces(s, forces);
        kick(s, 0.5 * dt);
        break;
    case Ensemble::nose_hoover:
        thermostat_half(s, p);
        kick(s, 0.5 * dt);
        drift(s, dt);
        evaluate_forces(s, forces);
        kick(s, 0.5 * dt);
        thermostat_half(s, p);
        break;
    case Ensemble::langevin:
        kick(s, 0.5 * dt);
        drift(s, 0.5 * dt);
        langevin_bath(s, p);
        drift(s, 0.5 * dt);
        evaluate_forces(s, forces);
        kick(s, 0.5 * dt);
        break;
    }
    ++s.step;
    s.time = static_cast<double>(s.step) * dt;
    check_speeds(s, p);
}

Trajectory run_md(Configuration init, const MdProtocol& protocol, const ForceField& forces)
{
    MdState s = initialize_md(std::move(init), protocol, forces);
    Trajectory t;
    t.frames.push_back(snapshot(s, protocol));
    t.records.push_back(record(s, protocol));
    for (long k = 0; k < protocol.steps; ++k) {
        try {
            md_step(s, protocol, forces);
        } catch (const InstabilityError& e) {
            t.halted = true;
            t.halt_reason = e.what();
            std::cerr << "md halted: " << e.what() << '\n';
            break;
        }
        if (s.step % protocol.output_stride == 0) {
            t.frames.push_back(snapshot(s, protocol));
            t.records.push_back(record(s, protocol));
        }
    }
    return t;
}

std::string energy_table(const Trajectory& traj)
{
    std::ostringstream out;
    out << "# step time_fs temperature_K kinetic_eV potential_eV energy_sr_eV energy_lr_eV total_eV "
           "conserved_eV\n";
    for (const auto& r : traj.records)
        out << r.step << ' ' << format_sci(r.time) << ' ' << format_sci(r.temperature) << ' '
            << format_sci(r.kinetic) << ' ' << format_sci(r.potential) << ' ' << format_sci(r.energy_sr) << ' '
            << format_sci(r.energy_lr) << ' ' << format_sci(r.total) << ' ' << format_sci(r.conserved) << '\n';
    return out.str();
}

} // namespace les
