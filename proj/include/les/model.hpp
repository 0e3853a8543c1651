#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "les/atoms.hpp"
#include "les/descriptors.hpp"
#include "les/latent_ewald.hpp"
#include "les/mlp.hpp"

namespace les {

struct LrSettings {
    bool enabled = true;
    double sigma = 1.0;
    double k_cut = std::numbers::pi;
    int channels = 4;

    friend bool operator==(const LrSettings&, const LrSettings&) = default;
};

/// Everything needed to evaluate a model: descriptor hyperparameters, the
/// short-range energy head (D -> 1), the latent-charge head (D -> d), the
/// fixed input standardization and trainable per-species energy offsets.
struct ModelParams {
    DescriptorConfig descriptor;
    LrSettings lr;
    Mlp sr_head;
    Mlp lr_head;
    std::vector<double> feature_shift;   // B is fed to the heads as (B - shift) * scale
    std::vector<double> feature_scale;
    std::vector<double> energy_offsets;  // eV, one per descriptor species
    std::uint64_t seed = 0;

    /// Random heads of shape D -> hidden... -> {1, d}; identity standardization, zero offsets.
    static ModelParams initialize(DescriptorConfig descriptor, LrSettings lr,
                                  const std::vector<int>& hidden, std::uint64_t seed);

    void validate() const;

    /// Trainable parameters flattened as [sr_head, lr_head (when enabled), offsets].
    std::size_t trainable_count() const;
    std::vector<double> pack() const;
    void unpack(std::span<const double> flat);

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct Prediction {
    double energy = 0.0;
    double energy_sr = 0.0;   // includes the species offsets
    double energy_lr = 0.0;
    std::vector<Vec3> forces;
    std::optional<LatentCharges> latent_q;   // absent for short-range-only models
};

/// Energy and forces F = -dE/dr. `kspace` may supply a cached reciprocal set
/// for the configuration's cell; otherwise one is enumerated.
Prediction predict(const ModelParams& params, const Configuration& config,
                   const KSpace* kspace = nullptr);

/// Caller-supplied loss adjoints for a prediction: dL/dE and dL/dF.
struct PredictionAdjoint {
    double energy = 0.0;
    std::vector<Vec3> forces;   // empty means zero
};

struct ParameterGradient {
    Prediction prediction;
    std::vector<double> gradient;   // packed like ModelParams::pack()
};

/// Gradient of a loss L(E, F) with respect to every trainable parameter.
///
/// The force part needs d(-dE/dr)/dtheta. It is obtained without a second
/// reverse sweep: the position adjoint rho = dL/dF is pushed forward through
/// the descriptors as a tangent, the heads propagate that tangent alongside
/// their activations, and one reverse pass over (value, tangent) pairs gives
/// d/dtheta of the directional derivative rho . dE/dr.
ParameterGradient parameter_gradient(const ModelParams& params, const Configuration& config,
                                     const std::function<PredictionAdjoint(const Prediction&)>& adjoint,
                                     const KSpace* kspace = nullptr);

/// Model evaluator that keeps the reciprocal set for the last cell it saw.
class Potential {
public:
    explicit Potential(ModelParams params) : params_(std::move(params)) {}

    const ModelParams& params() const { return params_; }
    Prediction evaluate(const Configuration& config);

private:
    ModelParams params_;
    std::optional<KSpace> kspace_;
};

/// Versioned JSON checkpoint. Parameters are written with enough digits to
/// read back bit-identically.
std::string checkpoint_to_string(const ModelParams& params);
ModelParams checkpoint_from_string(const std::string& text);
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

inline constexpr int checkpoint_format_version = 1;

} // namespace les
