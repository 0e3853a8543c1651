#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace les {

class Rng;

/// Shifted softplus, log(1 + e^x) - log 2, and its first two derivatives.
double shifted_softplus(double x);
double shifted_softplus_d1(double x);
double shifted_softplus_d2(double x);

/// Fully connected network: affine + shifted softplus on every hidden layer,
/// plain affine output layer. All parameters live in one flat array, layer by
/// layer, each layer storing its weight matrix (out x in, row-major) and then
/// its bias.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<int> widths);

    /// Weights and biases uniform in +-1/sqrt(fan_in).
    static Mlp random(std::vector<int> widths, Rng& rng);

    const std::vector<int>& widths() const { return widths_; }
    int input_dim() const { return widths_.front(); }
    int output_dim() const { return widths_.back(); }
    int layer_count() const { return static_cast<int>(widths_.size()) - 1; }
    std::size_t parameter_count() const { return params_.size(); }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    double& weight(int layer, int out, int in);
    double weight(int layer, int out, int in) const;
    double& bias(int layer, int out);
    double bias(int layer, int out) const;
    std::size_t weight_offset(int layer) const { return offsets_[layer]; }
    std::size_t bias_offset(int layer) const;

    std::vector<double> forward(std::span<const double> x) const;

    /// Activations of one evaluation, optionally carrying a forward-mode
    /// tangent (directional derivative along an input perturbation).
    struct Tape {
        std::vector<std::vector<double>> pre;         // z_l
        std::vector<std::vector<double>> post;        // a_l, with post[0] = x
        std::vector<std::vector<double>> pre_dot;
        std::vector<std::vector<double>> post_dot;
        bool has_tangent = false;

        std::span<const double> output() const { return post.back(); }
        std::span<const double> output_tangent() const { return post_dot.back(); }
    };

    void forward(std::span<const double> x, Tape& tape) const;
    void forward(std::span<const double> x, std::span<const double> x_dot, Tape& tape) const;

    /// Reverse pass for the objective  out_adj . y + out_dot_adj . y_dot.
    /// Accumulates into `param_grad` and writes d/dx into `input_grad`; either
    /// may be empty to skip it. `out_dot_adj` must be empty unless the tape has
    /// a tangent.
    void backward(const Tape& tape, std::span<const double> out_adj,
                  std::span<const double> out_dot_adj, std::span<double> param_grad,
                  std::span<double> input_grad) const;

    friend bool operator==(const Mlp&, const Mlp&) = default;

private:
    void layout();

    std::vector<int> widths_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

} // namespace les
