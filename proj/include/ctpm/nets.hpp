#pragma once

#include <span>
#include <string>
#include <vector>

#include "ctpm/common.hpp"
#include "ctpm/tape.hpp"

namespace ctpm::diffcore {

enum class Activation { Identity, Tanh, Relu, Sigmoid, SoftplusShifted };

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "softplus_shifted") return Activation::SoftplusShifted;
    throw ConfigError("unknown activation: " + s);
}

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::SoftplusShifted: return "softplus_shifted";
    }
    return "?";
}

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::Identity: return z;
        case Activation::Tanh: return std::tanh(z);
        case Activation::Relu: return z > 0.0 ? z : 0.0;
        case Activation::Sigmoid: return ctpm::sigmoid(z);
        case Activation::SoftplusShifted: return 1.0 + ctpm::softplus(z);
    }
    return z;
}

// derivative expressed from the pre-activation
inline double activate_deriv(Activation a, double pre) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::Tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: {
            const double s = ctpm::sigmoid(pre);
            return s * (1.0 - s);
        }
        case Activation::SoftplusShifted: return ctpm::sigmoid(pre);
    }
    return 1.0;
}

inline Var activate_taped(Activation a, Var z) {
    switch (a) {
        case Activation::Identity: return z;
        case Activation::Tanh: return tanh(z);
        case Activation::Relu: return relu(z);
        case Activation::Sigmoid: return sigmoid(z);
        case Activation::SoftplusShifted: return softplus(z) + 1.0;
    }
    return z;
}

// Fully-connected net. Parameters are stored flat, layer-major, weights before
// biases within a layer: W1 (row-major, out x in), b1, W2, b2, ...
// Checkpoints rely on this order.
struct DenseNet {
    std::vector<int> layer_dims;  // input, hidden..., output
    Activation hidden_activation = Activation::Tanh;
    Activation output_activation = Activation::Identity;
    std::vector<double> params;

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }

    static std::size_t param_count_for(const std::vector<int>& dims) {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            n += static_cast<std::size_t>(dims[l + 1]) * static_cast<std::size_t>(dims[l]);
            n += static_cast<std::size_t>(dims[l + 1]);
        }
        return n;
    }

    std::size_t param_count() const { return param_count_for(layer_dims); }
};

inline DenseNet make_net(std::vector<int> dims, Activation hidden, Activation output) {
    require(dims.size() >= 2, "DenseNet needs at least input and output dims");
    for (int d : dims) require(d > 0, "DenseNet dims must be positive");
    DenseNet net;
    net.layer_dims = std::move(dims);
    net.hidden_activation = hidden;
    net.output_activation = output;
    net.params.assign(net.param_count(), 0.0);
    return net;
}

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
inline void init_params(DenseNet& net, Rng& rng) {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
        const int in = net.layer_dims[l];
        const int out = net.layer_dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (int i = 0; i < out * in; ++i) net.params[off++] = rng.uniform(-bound, bound);
        for (int i = 0; i < out; ++i) net.params[off++] = 0.0;
    }
}

// Per-layer pre-activations and activations kept for the backward pass.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> act;
};

inline void forward_trace(const DenseNet& net, std::span<const double> input,
                          ForwardTrace& trace) {
    if (static_cast<int>(input.size()) != net.input_dim()) {
        throw ShapeError("forward: input size " + std::to_string(input.size()) +
                         " != net input dim " + std::to_string(net.input_dim()));
    }
    const std::size_t layers = net.layer_dims.size() - 1;
    trace.pre.resize(layers);
    trace.act.resize(layers);
    std::size_t off = 0;
    const double* cur = input.data();
    int cur_dim = net.input_dim();
    for (std::size_t l = 0; l < layers; ++l) {
        const int out = net.layer_dims[l + 1];
        const bool last = (l + 1 == layers);
        const Activation a = last ? net.output_activation : net.hidden_activation;
        auto& pre = trace.pre[l];
        auto& act = trace.act[l];
        pre.resize(out);
        act.resize(out);
        const double* w = net.params.data() + off;
        const double* b = w + static_cast<std::size_t>(out) * cur_dim;
        for (int o = 0; o < out; ++o) {
            double z = b[o];
            const double* row = w + static_cast<std::size_t>(o) * cur_dim;
            for (int i = 0; i < cur_dim; ++i) z += row[i] * cur[i];
            pre[o] = z;
            act[o] = activate(a, z);
        }
        off += static_cast<std::size_t>(out) * cur_dim + out;
        cur = act.data();
        cur_dim = out;
    }
}

inline std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
    ForwardTrace trace;
    forward_trace(net, input, trace);
    return trace.act.back();
}

// Accumulates dL/dparams into grad_out (layout identical to net.params) given
// dL/d(output) in seed; optionally returns dL/d(input).
inline void backward_trace(const DenseNet& net, std::span<const double> input,
                           const ForwardTrace& trace, std::span<const double> seed,
                           std::span<double> grad_out, std::vector<double>* input_grad = nullptr) {
    const std::size_t layers = net.layer_dims.size() - 1;
    if (seed.size() != static_cast<std::size_t>(net.output_dim())) {
        throw ShapeError("backward: seed size mismatch");
    }
    if (grad_out.size() != net.param_count()) throw ShapeError("backward: grad size mismatch");

    // layer parameter offsets
    std::vector<std::size_t> offsets(layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offsets[l] = off;
        off += static_cast<std::size_t>(net.layer_dims[l + 1]) * net.layer_dims[l] +
               net.layer_dims[l + 1];
    }

    std::vector<double> delta(seed.begin(), seed.end());
    for (std::size_t l = layers; l-- > 0;) {
        const int out = net.layer_dims[l + 1];
        const int in = net.layer_dims[l];
        const bool last = (l + 1 == layers);
        const Activation a = last ? net.output_activation : net.hidden_activation;
        const double* pre = trace.pre[l].data();
        const double* below = (l == 0) ? input.data() : trace.act[l - 1].data();
        const double* w = net.params.data() + offsets[l];
        double* gw = grad_out.data() + offsets[l];
        double* gb = gw + static_cast<std::size_t>(out) * in;

        // delta through the nonlinearity
        for (int o = 0; o < out; ++o) delta[o] *= activate_deriv(a, pre[o]);

        std::vector<double> next_delta;
        const bool need_below = (l > 0) || (input_grad != nullptr);
        if (need_below) next_delta.assign(in, 0.0);
        for (int o = 0; o < out; ++o) {
            const double d = delta[o];
            gb[o] += d;
            double* grow = gw + static_cast<std::size_t>(o) * in;
            const double* wrow = w + static_cast<std::size_t>(o) * in;
            if (d != 0.0) {
                for (int i = 0; i < in; ++i) grow[i] += d * below[i];
                if (need_below) {
                    for (int i = 0; i < in; ++i) next_delta[i] += d * wrow[i];
                }
            }
        }
        if (l == 0 && input_grad != nullptr) *input_grad = next_delta;
        delta = std::move(next_delta);
    }
}

// Tape counterpart of forward. param_vars must cover the whole net, same layout.
inline std::vector<Var> forward_taped(const DenseNet& net, Tape& tape,
                                      std::span<const Var> param_vars,
                                      std::span<const double> input) {
    if (static_cast<int>(input.size()) != net.input_dim()) {
        throw ShapeError("forward_taped: input dim mismatch");
    }
    if (param_vars.size() != net.param_count()) {
        throw ShapeError("forward_taped: param count mismatch");
    }
    const std::size_t layers = net.layer_dims.size() - 1;
    std::size_t off = 0;
    std::vector<Var> cur;
    cur.reserve(net.input_dim());
    for (double v : input) cur.push_back(tape.constant(v));
    for (std::size_t l = 0; l < layers; ++l) {
        const int out = net.layer_dims[l + 1];
        const int in = net.layer_dims[l];
        const bool last = (l + 1 == layers);
        const Activation a = last ? net.output_activation : net.hidden_activation;
        std::vector<Var> next;
        next.reserve(out);
        for (int o = 0; o < out; ++o) {
            Var z = param_vars[off + static_cast<std::size_t>(out) * in + o];  // bias
            for (int i = 0; i < in; ++i) {
                z = z + param_vars[off + static_cast<std::size_t>(o) * in + i] * cur[i];
            }
            next.push_back(activate_taped(a, z));
        }
        off += static_cast<std::size_t>(out) * in + out;
        cur = std::move(next);
    }
    return cur;
}

}  // namespace ctpm::diffcore
