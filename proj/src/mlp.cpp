#include "les/mlp.hpp"

#include <cmath>
#include <numbers>

#include "les/error.hpp"
#include "les/random.hpp"

namespace les {

double shifted_softplus(double x)
{
    const double sp = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return sp - std::numbers::ln2;
}

double shifted_softplus_d1(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double shifted_softplus_d2(double x)
{
    const double s = shifted_softplus_d1(x);
    return s * (1.0 - s);
}

Mlp::Mlp(std::vector<int> widths) : widths_(std::move(widths))
{
    if (widths_.size() < 2)
        throw UserError("an MLP needs at least an input and an output width");
    for (int w : widths_)
        if (w < 1)
            throw UserError("MLP layer widths must be positive");
    layout();
}

void Mlp::layout()
{
    offsets_.clear();
    std::size_t total = 0;
    for (int l = 0; l < layer_count(); ++l) {
        offsets_.push_back(total);
        total += static_cast<std::size_t>(widths_[l + 1]) * (widths_[l] + 1);
    }
    params_.assign(total, 0.0);
}

Mlp Mlp::random(std::vector<int> widths, Rng& rng)
{
    Mlp m(std::move(widths));
    for (int l = 0; l < m.layer_count(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(m.widths_[l]));
        const std::size_t begin = m.offsets_[l];
        const std::size_t end = begin + static_cast<std::size_t>(m.widths_[l + 1]) * (m.widths_[l] + 1);
        for (std::size_t k = begin; k < end; ++k)
            m.params_[k] = rng.uniform(-bound, bound);
    }
    return m;
}

double& Mlp::weight(int layer, int out, int in)
{
    return params_[offsets_[layer] + static_cast<std::size_t>(out) * widths_[layer] + in];
}

double Mlp::weight(int layer, int out, int in) const
{
    return params_[offsets_[layer] + static_cast<std::size_t>(out) * widths_[layer] + in];
}

std::size_t Mlp::bias_offset(int layer) const
{
    return offsets_[layer] + static_cast<std::size_t>(widths_[layer + 1]) * widths_[layer];
}

double& Mlp::bias(int layer, int out)
{
    return params_[bias_offset(layer) + out];
}

double Mlp::bias(int layer, int out) const
{
    return params_[bias_offset(layer) + out];
}

std::vector<double> Mlp::forward(std::span<const double> x) const
{
    Tape tape;
    forward(x, tape);
    return tape.post.back();
}

void Mlp::forward(std::span<const double> x, Tape& tape) const
{
    forward(x, {}, tape);
}

void Mlp::forward(std::span<const double> x, std::span<const double> x_dot, Tape& tape) const
{
    if (static_cast<int>(x.size()) != input_dim())
        throw UserError("MLP input width mismatch: expected " + std::to_string(input_dim()) + ", got "
                        + std::to_string(x.size()));
    const bool tangent = !x_dot.empty();
    if (tangent && x_dot.size() != x.size())
        throw UserError("MLP tangent width mismatch");

    const int L = layer_count();
    tape.has_tangent = tangent;
    tape.pre.resize(L);
    tape.post.resize(L + 1);
    tape.post[0].assign(x.begin(), x.end());
    if (tangent) {
        tape.pre_dot.resize(L);
        tape.post_dot.resize(L + 1);
        tape.post_dot[0].assign(x_dot.begin(), x_dot.end());
    }
    for (int l = 0; l < L; ++l) {
        const int in = widths_[l];
        const int out = widths_[l + 1];
        const double* W = params_.data() + offsets_[l];
        const double* b = W + static_cast<std::size_t>(out) * in;
        const auto& a = tape.post[l];
        auto& z = tape.pre[l];
        z.resize(out);
        for (int o = 0; o < out; ++o) {
            const double* row = W + static_cast<std::size_t>(o) * in;
            double s = b[o];
            for (int i = 0; i < in; ++i)
                s += row[i] * a[i];
            z[o] = s;
        }
        const bool hidden = l + 1 < L;
        auto& next = tape.post[l + 1];
        next.resize(out);
        for (int o = 0; o < out; ++o)
            next[o] = hidden ? shifted_softplus(z[o]) : z[o];

        if (tangent) {
            const auto& ad = tape.post_dot[l];
            auto& zd = tape.pre_dot[l];
            zd.resize(out);
            for (int o = 0; o < out; ++o) {
                const double* row = W + static_cast<std::size_t>(o) * in;
                double s = 0.0;
                for (int i = 0; i < in; ++i)
                    s += row[i] * ad[i];
                zd[o] = s;
            }
            auto& nd = tape.post_dot[l + 1];
            nd.resize(out);
            for (int o = 0; o < out; ++o)
                nd[o] = hidden ? shifted_softplus_d1(z[o]) * zd[o] : zd[o];
        }
    }
}

void Mlp::backward(const Tape& tape, std::span<const double> out_adj,
                   std::span<const double> out_dot_adj, std::span<double> param_grad,
                   std::span<double> input_grad) const
{
    const int L = layer_count();
    const bool tangent = !out_dot_adj.empty();
    if (tangent && !tape.has_tangent)
        throw UserError("tangent adjoint given for a tape without tangent");
    if (static_cast<int>(out_adj.size()) != output_dim()
        || (tangent && static_cast<int>(out_dot_adj.size()) != output_dim()))
        throw UserError("MLP output adjoint width mismatch");
    if (!param_grad.empty() && param_grad.size() != params_.size())
        throw UserError("MLP parameter gradient has the wrong size");

    std::vector<double> abar(out_adj.begin(), out_adj.end());
    std::vector<double> adbar;
    if (tangent)
        adbar.assign(out_dot_adj.begin(), out_dot_adj.end());
    std::vector<double> zbar, zdbar;

    for (int l = L - 1; l >= 0; --l) {
        const int in = widths_[l];
        const int out = widths_[l + 1];
        const double* W = params_.data() + offsets_[l];
        const bool hidden = l + 1 < L;
        const auto& z = tape.pre[l];

        zbar.resize(out);
        if (tangent)
            zdbar.resize(out);
        for (int o = 0; o < out; ++o) {
            if (!hidden) {
                zbar[o] = abar[o];
                if (tangent)
                    zdbar[o] = adbar[o];
                continue;
            }
            const double d1 = shifted_softplus_d1(z[o]);
            zbar[o] = d1 * abar[o];
            if (tangent) {
                zbar[o] += shifted_softplus_d2(z[o]) * tape.pre_dot[l][o] * adbar[o];
                zdbar[o] = d1 * adbar[o];
            }
        }

        if (!param_grad.empty()) {
            double* gW = param_grad.data() + offsets_[l];
            double* gb = gW + static_cast<std::size_t>(out) * in;
            const auto& a = tape.post[l];
            for (int o = 0; o < out; ++o) {
                double* row = gW + static_cast<std::size_t>(o) * in;
                const double zb = zbar[o];
                for (int i = 0; i < in; ++i)
                    row[i] += zb * a[i];
                gb[o] += zb;
                if (tangent) {
                    const auto& ad = tape.post_dot[l];
                    const double zdb = zdbar[o];
                    for (int i = 0; i < in; ++i)
                        row[i] += zdb * ad[i];
                }
            }
        }

        if (l == 0 && input_grad.empty())
            break;
        std::vector<double> prev(in, 0.0), prev_dot;
        if (tangent)
            prev_dot.assign(in, 0.0);
        for (int o = 0; o < out; ++o) {
            const double* row = W + static_cast<std::size_t>(o) * in;
            const double zb = zbar[o];
            for (int i = 0; i < in; ++i)
                prev[i] += row[i] * zb;
            if (tangent) {
                const double zdb = zdbar[o];
                for (int i = 0; i < in; ++i)
                    prev_dot[i] += row[i] * zdb;
            }
        }
        abar = std::move(prev);
        adbar = std::move(prev_dot);
    }
    if (!input_grad.empty()) {
        if (static_cast<int>(input_grad.size()) != input_dim())
            throw UserError("MLP input gradient has the wrong size");
        std::copy(abar.begin(), abar.end(), input_grad.begin());
    }
}

} // namespace les
