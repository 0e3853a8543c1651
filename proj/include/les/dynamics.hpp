#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "les/atoms.hpp"
#include "les/model.hpp"
#include "les/random.hpp"

namespace les {

/// (eV/A) / amu expressed in A/fs^2.
inline constexpr double force_to_acceleration = 9.648533212e-3;
/// Boltzmann constant in eV/K.
inline constexpr double boltzmann_ev = 8.617333262e-5;

enum class Ensemble { nve, nose_hoover, langevin };

std::string to_string(Ensemble e);
Ensemble ensemble_from_string(const std::string& name);

struct MdProtocol {
    Ensemble ensemble = Ensemble::nve;
    double temperature = 300.0;   // K
    double dt = 0.5;              // fs
    long steps = 0;
    double tau = 0.0;             // fs; 0 selects 100 dt
    long output_stride = 1;
    std::uint64_t seed = 0;
    double max_speed = 1.0;       // A/fs; faster atoms halt the run

    void validate() const;
    double time_constant() const { return tau > 0.0 ? tau : 100.0 * dt; }
};

/// Energy and forces for a configuration whose positions lie inside the cell.
using ForceField = std::function<Prediction(const Configuration&)>;

/// Force field backed by a model, reusing one reciprocal set across steps.
ForceField model_force_field(const ModelParams& params);

struct MdState {
    Configuration config;           // positions are kept unwrapped
    std::vector<Vec3> velocities;   // A/fs
    std::vector<double> masses;     // amu
    Prediction last;                // at the current positions
    double thermostat_velocity = 0.0;   // Nose-Hoover v_xi, 1/fs
    double thermostat_position = 0.0;   // Nose-Hoover eta
    double bath_energy = 0.0;       // kinetic energy removed by the Langevin bath, eV
    long step = 0;
    double time = 0.0;              // fs
    Rng rng{0};

    double kinetic_energy() const;                      // eV
    int degrees_of_freedom(Ensemble e) const;
    double temperature(Ensemble e) const;               // K
    Vec3 momentum() const;                              // amu A/fs
    /// Total energy plus the thermostat's extended-system or bath terms.
    double conserved_energy(const MdProtocol& protocol) const;
};

/// Masses from the species table; velocities taken from the configuration
/// when present, otherwise Maxwell-Boltzmann at the target temperature with
/// the net momentum removed.
MdState initialize_md(Configuration config, const MdProtocol& protocol, const ForceField& forces);

/// Advances the state by one time step. Throws NumericalError on non-finite
/// forces or when an atom exceeds `max_speed`.
void md_step(MdState& state, const MdProtocol& protocol, const ForceField& forces);

struct FrameRecord {
    long step = 0;
    double time = 0.0;
    double temperature = 0.0;
    double kinetic = 0.0;
    double potential = 0.0;
    double energy_sr = 0.0;
    double energy_lr = 0.0;
    double total = 0.0;
    double conserved = 0.0;
};

struct Trajectory {
    std::vector<Configuration> frames;   // positions, velocities, per-frame info
    std::vector<FrameRecord> records;
    bool halted = false;
    std::string halt_reason;
};

/// Runs `protocol.steps` steps, recording the initial state and every
/// `output_stride`-th step. An instability is reported on stderr and ends the
/// run early with `halted` set; other failures propagate.
Trajectory run_md(Configuration init, const MdProtocol& protocol, const ForceField& forces);

/// Plain-text table of the per-frame energy breakdown.
std::string energy_table(const Trajectory& traj);

} // namespace les
