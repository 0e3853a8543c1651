#include "les/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "les/error.hpp"
#include "les/format.hpp"
#include "les/random.hpp"

namespace les {

void TrainConfig::validate() const
{
    if (weights.energy < 0.0 || weights.forces < 0.0)
        throw UserError("loss weights must be non-negative");
    if (weights.energy == 0.0 && weights.forces == 0.0)
        throw UserError("at least one loss weight must be positive");
    if (!(learning_rate > 0.0))
        throw UserError("learning rate must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0))
        throw UserError("learning-rate decay factor must lie in (0, 1]");
    if (patience < 1)
        throw UserError("plateau patience must be at least 1 epoch");
    if (epochs < 0)
        throw UserError("epoch count must be non-negative");
    if (batch_size < 0)
        throw UserError("batch size must be non-negative");
    if (train_fraction <= 0.0 || valid_fraction < 0.0 || train_fraction + valid_fraction > 1.0 + 1e-12)
        throw UserError("split fractions must be non-negative, train > 0, and sum to at most 1");
}

namespace {

void require_labels(const Configuration& c, const LossWeights& w)
{
    if (w.energy > 0.0 && !c.labels.energy)
        throw UserError("configuration has no energy label but the energy loss weight is positive");
    if (w.forces > 0.0 && !c.labels.forces)
        throw UserError("configuration has no force labels but the force loss weight is positive");
    if (c.labels.forces && c.labels.forces->size() != c.size())
        throw UserError("force labels do not match the atom count");
}

PredictionAdjoint loss_adjoint(const Prediction& p, const Configuration& c, const LossWeights& w, double factor)
{
    const double n = static_cast<double>(c.size());
    PredictionAdjoint adj;
    if (w.energy > 0.0)
        adj.energy = factor * 2.0 * w.energy * (p.energy - *c.labels.energy) / (n * n);
    if (w.forces > 0.0) {
        const double s = factor * 2.0 * w.forces / (3.0 * n);
        adj.forces.resize(c.size());
        for (std::size_t i = 0; i < c.size(); ++i)
            adj.forces[i] = (p.forces[i] - (*c.labels.forces)[i]) * s;
    }
    return adj;
}

/// Reciprocal sets for the distinct cells of a dataset.
class KSpaceCache {
public:
    explicit KSpaceCache(const ModelParams& p) : params_(p) {}

    const KSpace* get(const Cell& cell)
    {
        if (!params_.lr.enabled)
            return nullptr;
        for (const auto& k : cache_)
            if (k.cell == cell)
                return &k;
        cache_.push_back(enumerate_kvectors(cell, params_.lr.k_cut, params_.lr.sigma));
        return &cache_.back();
    }

private:
    const ModelParams& params_;
    std::vector<KSpace> cache_;
};

struct ErrorAccumulator {
    std::size_t configs = 0, comps = 0;
    double e2 = 0, e1 = 0, ea2 = 0, ea1 = 0, f2 = 0, f1 = 0;

    void add(const Prediction& p, const Configuration& c)
    {
        if (c.labels.energy) {
            const double d = p.energy - *c.labels.energy;
            const double da = d / static_cast<double>(c.size());
            ++configs;
            e2 += d * d;
            e1 += std::abs(d);
            ea2 += da * da;
            ea1 += std::abs(da);
        }
        if (c.labels.forces)
            for (std::size_t i = 0; i < c.size(); ++i)
                for (int a = 0; a < 3; ++a) {
                    const double d = p.forces[i][a] - (*c.labels.forces)[i][a];
                    ++comps;
                    f2 += d * d;
                    f1 += std::abs(d);
                }
    }

    ErrorStats stats() const
    {
        ErrorStats s;
        s.configs = configs;
        s.force_components = comps;
        if (configs > 0) {
            const double n = static_cast<double>(configs);
            s.energy_rmse = std::sqrt(e2 / n);
            s.energy_mae = e1 / n;
            s.energy_rmse_per_atom = 1e3 * std::sqrt(ea2 / n);
            s.energy_mae_per_atom = 1e3 * ea1 / n;
        }
        if (comps > 0) {
            const double n = static_cast<double>(comps);
            s.force_rmse = std::sqrt(f2 / n);
            s.force_mae = f1 / n;
        }
        return s;
    }
};

struct BatchResult {
    double loss = 0.0;
    std::vector<double> gradient;
    ErrorAccumulator errors;
};

BatchResult batch_gradient(const ModelParams& params, std::span<const Configuration> data,
                           std::span<const std::size_t> indices, const LossWeights& w, KSpaceCache& cache)
{
    BatchResult out;
    out.gradient.assign(params.trainable_count(), 0.0);
    if (indices.empty())
        return out;
    const double factor = 1.0 / static_cast<double>(indices.size());
    for (std::size_t idx : indices) {
        const Configuration& c = data[idx];
        require_labels(c, w);
        const auto pg = parameter_gradient(
            params, c, [&](const Prediction& p) { return loss_adjoint(p, c, w, factor); }, cache.get(c.cell));
        out.loss += factor * loss(pg.prediction, c, w);
        for (std::size_t k = 0; k < out.gradient.size(); ++k)
            out.gradient[k] += pg.gradient[k];
        out.errors.add(pg.prediction, c);
    }
    return out;
}

struct EvalResult {
    double loss = 0.0;
    ErrorAccumulator errors;
};

EvalResult evaluate_subset(const ModelParams& params, std::span<const Configuration> data,
                           std::span<const std::size_t> indices, const LossWeights& w, KSpaceCache& cache)
{
    EvalResult out;
    for (std::size_t idx : indices) {
        const Configuration& c = data[idx];
        const Prediction p = predict(params, c, cache.get(c.cell));
        out.loss += loss(p, c, w) / static_cast<double>(indices.size());
        out.errors.add(p, c);
    }
    return out;
}

} // namespace

double loss(const Prediction& pred, const Configuration& labeled, const LossWeights& weights)
{
    require_labels(labeled, weights);
    const double n = static_cast<double>(labeled.size());
    double l = 0.0;
    if (weights.energy > 0.0) {
        const double d = (pred.energy - *labeled.labels.energy) / n;
        l += weights.energy * d * d;
    }
    if (weights.forces > 0.0) {
        double s = 0.0;
        for (std::size_t i = 0; i < labeled.size(); ++i) {
            const Vec3 d = pred.forces[i] - (*labeled.labels.forces)[i];
            s += dot(d, d);
        }
        l += weights.forces * s / (3.0 * n);
    }
    return l;
}

LossGradient loss_gradients(const ModelParams& params, std::span<const Configuration> batch,
                            const LossWeights& weights)
{
    KSpaceCache cache(params);
    std::vector<std::size_t> all(batch.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto r = batch_gradient(params, batch, all, weights, cache);
    return {r.loss, std::move(r.gradient)};
}

ErrorStats evaluate(const ModelParams& params, std::span<const Configuration> dataset)
{
    KSpaceCache cache(params);
    ErrorAccumulator acc;
    for (const auto& c : dataset)
        acc.add(predict(params, c, cache.get(c.cell)), c);
    return acc.stats();
}

DatasetSplit split_dataset(std::size_t n, double train_fraction, double valid_fraction, std::uint64_t seed)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t k = n; k > 1; --k)
        std::swap(order[k - 1], order[rng.index(k)]);
    std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    std::size_t n_valid = static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, n > 0 ? 1 : 0, n);
    n_valid = std::min(n_valid, n - n_train);
    DatasetSplit s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.valid.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
    s.test.assign(order.begin() + n_train + n_valid, order.end());
    for (auto* v : {&s.train, &s.valid, &s.test})
        std::sort(v->begin(), v->end());
    return s;
}

void fit_normalization(ModelParams& params, std::span<const Configuration> train_set)
{
    const int D = params.descriptor.dimension();
    std::vector<double> sum(D, 0.0), sum2(D, 0.0);
    std::size_t atoms = 0;
    double energy_per_atom = 0.0;
    std::size_t labeled = 0;
    for (const auto& c : train_set) {
        NeighborOptions opts;
        opts.multi_image = params.descriptor.r_cut >= 0.5 * c.cell.min_length();
        const auto fs = compute_features(c, build_neighbor_list(c, params.descriptor.r_cut, opts), params.descriptor);
        for (std::size_t i = 0; i < c.size(); ++i)
            for (int d = 0; d < D; ++d) {
                const double v = fs.values[i * D + d];
                sum[d] += v;
                sum2[d] += v * v;
            }
        atoms += c.size();
        if (c.labels.energy) {
            energy_per_atom += *c.labels.energy / static_cast<double>(c.size());
            ++labeled;
        }
    }
    if (atoms == 0)
        return;
    for (int d = 0; d < D; ++d) {
        const double mean = sum[d] / static_cast<double>(atoms);
        const double var = std::max(0.0, sum2[d] / static_cast<double>(atoms) - mean * mean);
        const double sd = std::sqrt(var);
        params.feature_shift[d] = mean;
        params.feature_scale[d] = sd > 1e-8 * std::max(1.0, std::abs(mean)) ? 1.0 / sd : 1.0;
    }
    if (labeled > 0)
        std::fill(params.energy_offsets.begin(), params.energy_offsets.end(),
                  energy_per_atom / static_cast<double>(labeled));
}

Adam::Adam(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0)
{
}

void Adam::step(std::span<double> params, std::span<const double> gradient, double learning_rate)
{
    if (params.size() != m_.size() || gradient.size() != m_.size())
        throw UserError("optimizer state does not match the parameter count");
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * gradient[k];
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * gradient[k] * gradient[k];
        params[k] -= learning_rate * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
    }
}

TrainResult train(std::span<const Configuration> dataset, ModelParams initial, const TrainConfig& config,
                  const EpochCallback& on_epoch)
{
    config.validate();
    if (dataset.empty())
        throw UserError("training dataset is empty");
    for (const auto& c : dataset)
        require_labels(c, config.weights);

    TrainResult result;
    result.split = split_dataset(dataset.size(), config.train_fraction, config.valid_fraction, config.seed);
    const auto& tr = result.split.train;
    const auto& va = result.split.valid;

    std::vector<Configuration> train_set;
    for (std::size_t i : tr)
        train_set.push_back(dataset[i]);
    fit_normalization(initial, train_set);

    ModelParams params = initial;
    KSpaceCache cache(params);
    std::vector<double> flat = params.pack();
    Adam adam(flat.size());
    Rng batch_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t batch = config.batch_size == 0 ? tr.size()
                                                     : std::min<std::size_t>(config.batch_size, tr.size());

    double lr = config.learning_rate;
    double best = std::numeric_limits<double>::infinity();
    double plateau_best = best;
    int since_improvement = 0;
    result.params = params;

    std::vector<std::size_t> order = tr;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.learning_rate = lr;

        const EvalResult valid = evaluate_subset(params, dataset, va, config.weights, cache);
        ErrorAccumulator train_errors;
        double train_loss = 0.0;
        if (batch < order.size())
            for (std::size_t k = order.size(); k > 1; --k)
                std::swap(order[k - 1], order[batch_rng.index(k)]);

        // parameters at the start of the epoch, the ones the record describes
        const ModelParams snapshot = params;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t stop = std::min(order.size(), start + batch);
            const std::span<const std::size_t> idx(order.data() + start, stop - start);
            BatchResult b = batch_gradient(params, dataset, idx, config.weights, cache);
            if (!std::isfinite(b.loss))
                throw NumericalError("training diverged at epoch " + std::to_string(epoch)
                                     + ": loss is not finite");
            for (double g : b.gradient)
                if (!std::isfinite(g))
                    throw NumericalError("training diverged at epoch " + std::to_string(epoch)
                                         + ": gradient is not finite");
            train_loss += b.loss * static_cast<double>(idx.size()) / static_cast<double>(order.size());
            train_errors.e2 += b.errors.e2;
            train_errors.e1 += b.errors.e1;
            train_errors.ea2 += b.errors.ea2;
            train_errors.ea1 += b.errors.ea1;
            train_errors.f2 += b.errors.f2;
            train_errors.f1 += b.errors.f1;
            train_errors.configs += b.errors.configs;
            train_errors.comps += b.errors.comps;
            adam.step(flat, b.gradient, lr);
            params.unpack(flat);
        }

        rec.train_loss = train_loss;
        rec.valid_loss = va.empty() ? train_loss : valid.loss;
        if (!std::isfinite(rec.valid_loss))
            throw NumericalError("training diverged at epoch " + std::to_string(epoch)
                                 + ": validation loss is not finite");
        rec.train = train_errors.stats();
        rec.valid = valid.errors.stats();
        result.history.push_back(rec);
        if (on_epoch)
            on_epoch(rec);

        if (rec.valid_loss < best) {
            best = rec.valid_loss;
            result.best_epoch = epoch;
            result.params = snapshot;
        }
        if (rec.valid_loss < plateau_best) {
            plateau_best = rec.valid_loss;
            since_improvement = 0;
        } else if (++since_improvement >= config.patience) {
            lr = std::max(config.min_learning_rate, lr * config.decay_factor);
            since_improvement = 0;
        }
    }

    auto subset = [&](const std::vector<std::size_t>& idx) {
        std::vector<Configuration> s;
        for (std::size_t i : idx)
            s.push_back(dataset[i]);
        return s;
    };
    result.train = evaluate(result.params, subset(tr));
    result.valid = evaluate(result.params, subset(va));
    result.test = evaluate(result.params, subset(result.split.test));
    return result;
}

std::string history_table(const std::vector<EpochRecord>& history)
{
    std::ostringstream out;
    out << "# epoch learning_rate train_loss valid_loss train_energy_rmse_eV valid_energy_rmse_eV "
           "train_force_rmse_eV_per_A valid_force_rmse_eV_per_A\n";
    for (const auto& r : history)
        out << r.epoch << ' ' << format_sci(r.learning_rate) << ' ' << format_sci(r.train_loss) << ' '
            << format_sci(r.valid_loss) << ' ' << format_sci(r.train.energy_rmse) << ' '
            << format_sci(r.valid.energy_rmse) << ' ' << format_sci(r.train.force_rmse) << ' '
            << format_sci(r.valid.force_rmse) << '\n';
    return out.str();
}

namespace {

nlohmann::ordered_json stats_json(const ErrorStats& s)
{
    return {{"configs", s.configs},
            {"force_components", s.force_components},
            {"energy_rmse_eV", s.energy_rmse},
            {"energy_mae_eV", s.energy_mae},
            {"energy_rmse_meV_per_atom", s.energy_rmse_per_atom},
            {"energy_mae_meV_per_atom", s.energy_mae_per_atom},
            {"force_rmse_eV_per_A", s.force_rmse},
            {"force_mae_eV_per_A", s.force_mae}};
}

} // namespace

std::string results_json(const TrainResult& result, const TrainConfig& config)
{
    nlohmann::ordered_json j;
    j["seed"] = config.seed;
    j["model_seed"] = result.params.seed;
    j["long_range"] = result.params.lr.enabled;
    j["lambda_e"] = config.weights.energy;
    j["lambda_f"] = config.weights.forces;
    j["epochs"] = config.epochs;
    j["best_epoch"] = result.best_epoch;
    j["split"] = {{"train", result.split.train}, {"valid", result.split.valid}, {"test", result.split.test}};
    j["train"] = stats_json(result.train);
    j["valid"] = stats_json(result.valid);
    j["test"] = stats_json(result.test);
    if (!result.history.empty())
        j["final_learning_rate"] = result.history.back().learning_rate;
    return j.dump(2) + "\n";
}

} // namespace les
