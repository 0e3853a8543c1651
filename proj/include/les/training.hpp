#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "les/atoms.hpp"
#include "les/model.hpp"

namespace les {

struct LossWeights {
    double energy = 1.0;
    double forces = 10.0;
};

struct TrainConfig {
    LossWeights weights;
    double learning_rate = 1e-3;
    double decay_factor = 0.5;      // applied on a validation plateau
    int patience = 50;              // epochs without improvement before decay
    double min_learning_rate = 1e-7;
    int epochs = 500;
    int batch_size = 0;             // 0 means full batch
    double train_fraction = 0.8;
    double valid_fraction = 0.2;    // remainder is the test split
    std::uint64_t seed = 0;

    void validate() const;
};

/// Errors of a model on a set of labeled configurations. Energy errors are
/// per configuration (eV) and per atom (meV/atom); force errors are over
/// Cartesian components (eV/A).
struct ErrorStats {
    std::size_t configs = 0;
    std::size_t force_components = 0;
    double energy_rmse = 0.0;
    double energy_mae = 0.0;
    double energy_rmse_per_atom = 0.0;
    double energy_mae_per_atom = 0.0;
    double force_rmse = 0.0;
    double force_mae = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    ErrorStats train;
    ErrorStats valid;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> valid;
    std::vector<std::size_t> test;
};

struct TrainResult {
    ModelParams params;   // best-validation parameters
    DatasetSplit split;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    ErrorStats train;
    ErrorStats valid;
    ErrorStats test;
};

/// Per-configuration loss
///   w_E ((E - E_ref)/N)^2 + w_F/(3N) sum (F - F_ref)^2.
double loss(const Prediction& pred, const Configuration& labeled, const LossWeights& weights);

struct LossGradient {
    double loss = 0.0;
    std::vector<double> gradient;   // packed like ModelParams::pack()
};

/// Mean loss over `batch` and its gradient with respect to all trainable parameters.
LossGradient loss_gradients(const ModelParams& params, std::span<const Configuration> batch,
                            const LossWeights& weights);

ErrorStats evaluate(const ModelParams& params, std::span<const Configuration> dataset);

/// Seeded shuffle of 0..n-1 cut into train/valid/test. A nonempty dataset
/// always gets at least one training configuration.
DatasetSplit split_dataset(std::size_t n, double train_fraction, double valid_fraction, std::uint64_t seed);

/// Sets feature standardization from the training features and every species
/// offset to the mean energy per atom of the training set.
void fit_normalization(ModelParams& params, std::span<const Configuration> train_set);

class Adam {
public:
    explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(std::span<double> params, std::span<const double> gradient, double learning_rate);

private:
    double beta1_, beta2_, eps_;
    long steps_ = 0;
    std::vector<double> m_, v_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full training run from `initial` (whose normalization and offsets are
/// refitted on the training split). Throws NumericalError if the loss
/// becomes non-finite.
TrainResult train(std::span<const Configuration> dataset, ModelParams initial, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Column-labeled text table of the epoch history.
std::string history_table(const std::vector<EpochRecord>& history);

/// Structured summary of a run (JSON).
std::string results_json(const TrainResult& result, const TrainConfig& config);

} // namespace les
