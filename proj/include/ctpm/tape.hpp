#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ctpm/common.hpp"

namespace ctpm::diffcore {

// Scalar reverse-mode tape. Nodes are appended in topological order; local
// partials are recorded at construction time, so the reverse sweep is a single
// backwards pass over flat arrays.

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::int32_t idx = -1;
};

class Tape {
public:
    Tape() { reserve(1024); }

    void reserve(std::size_t n) {
        val_.reserve(n);
        pa_.reserve(n);
        pb_.reserve(n);
        la_.reserve(n);
        lb_.reserve(n);
    }

    void clear() {
        val_.clear();
        pa_.clear();
        pb_.clear();
        la_.clear();
        lb_.clear();
        grad_.clear();
    }

    std::size_t size() const { return val_.size(); }

    Var leaf(double v) { return push(v, -1, 0.0, -1, 0.0, "leaf"); }
    Var constant(double v) { return push(v, -1, 0.0, -1, 0.0, "const"); }

    double value(Var v) const { return val_[static_cast<std::size_t>(v.idx)]; }
    double gradient(Var v) const { return grad_[static_cast<std::size_t>(v.idx)]; }

    // Seeds d(root)/d(root) = seed and accumulates into every node.
    void reverse(Var root, double seed = 1.0) {
        grad_.assign(val_.size(), 0.0);
        grad_[static_cast<std::size_t>(root.idx)] = seed;
        for (std::size_t i = val_.size(); i-- > 0;) {
            const double g = grad_[i];
            if (g == 0.0) continue;
            if (pa_[i] >= 0) grad_[static_cast<std::size_t>(pa_[i])] += la_[i] * g;
            if (pb_[i] >= 0) grad_[static_cast<std::size_t>(pb_[i])] += lb_[i] * g;
        }
    }

    Var push(double value, std::int32_t pa, double la, std::int32_t pb, double lb,
             const char* op_name) {
        if (!std::isfinite(value)) {
            throw NumericError(std::string("non-finite value in '") + op_name +
                               "' at tape node " + std::to_string(val_.size()));
        }
        val_.push_back(value);
        pa_.push_back(pa);
        pb_.push_back(pb);
        la_.push_back(la);
        lb_.push_back(lb);
        return Var{this, static_cast<std::int32_t>(val_.size() - 1)};
    }

private:
    std::vector<double> val_;
    std::vector<std::int32_t> pa_, pb_;
    std::vector<double> la_, lb_;
    std::vector<double> grad_;
};

inline double value(Var v) { return v.tape->value(v); }

inline Var operator+(Var a, Var b) {
    return a.tape->push(value(a) + value(b), a.idx, 1.0, b.idx, 1.0, "add");
}
inline Var operator-(Var a, Var b) {
    return a.tape->push(value(a) - value(b), a.idx, 1.0, b.idx, -1.0, "sub");
}
inline Var operator*(Var a, Var b) {
    return a.tape->push(value(a) * value(b), a.idx, value(b), b.idx, value(a), "mul");
}
inline Var operator/(Var a, Var b) {
    const double bv = value(b);
    return a.tape->push(value(a) / bv, a.idx, 1.0 / bv, b.idx, -value(a) / (bv * bv), "div");
}
inline Var operator-(Var a) { return a.tape->push(-value(a), a.idx, -1.0, -1, 0.0, "neg"); }

inline Var operator+(Var a, double c) { return a.tape->push(value(a) + c, a.idx, 1.0, -1, 0.0, "add"); }
inline Var operator+(double c, Var a) { return a + c; }
inline Var operator-(Var a, double c) { return a + (-c); }
inline Var operator-(double c, Var a) { return a.tape->push(c - value(a), a.idx, -1.0, -1, 0.0, "sub"); }
inline Var operator*(Var a, double c) { return a.tape->push(value(a) * c, a.idx, c, -1, 0.0, "mul"); }
inline Var operator*(double c, Var a) { return a * c; }
inline Var operator/(Var a, double c) { return a * (1.0 / c); }
inline Var operator/(double c, Var a) {
    const double av = value(a);
    return a.tape->push(c / av, a.idx, -c / (av * av), -1, 0.0, "div");
}

inline Var exp(Var a) {
    const double e = std::exp(value(a));
    return a.tape->push(e, a.idx, e, -1, 0.0, "exp");
}
inline Var log(Var a) {
    const double av = value(a);
    return a.tape->push(std::log(av), a.idx, 1.0 / av, -1, 0.0, "log");
}
inline Var sqrt(Var a) {
    const double s = std::sqrt(value(a));
    return a.tape->push(s, a.idx, 0.5 / s, -1, 0.0, "sqrt");
}
inline Var tanh(Var a) {
    const double t = std::tanh(value(a));
    return a.tape->push(t, a.idx, 1.0 - t * t, -1, 0.0, "tanh");
}
inline Var sigmoid(Var a) {
    const double s = ctpm::sigmoid(value(a));
    return a.tape->push(s, a.idx, s * (1.0 - s), -1, 0.0, "sigmoid");
}
inline Var softplus(Var a) {
    return a.tape->push(ctpm::softplus(value(a)), a.idx, ctpm::sigmoid(value(a)), -1, 0.0,
                        "softplus");
}
inline Var lgamma(Var a) {
    return a.tape->push(std::lgamma(value(a)), a.idx, ctpm::digamma(value(a)), -1, 0.0,
                        "lgamma");
}
inline Var relu(Var a) {
    const double av = value(a);
    return a.tape->push(av > 0.0 ? av : 0.0, a.idx, av > 0.0 ? 1.0 : 0.0, -1, 0.0, "relu");
}
// max(a, floor): derivative 0 in the clamped branch
inline Var clamp_min(Var a, double floor) {
    const double av = value(a);
    return a.tape->push(av > floor ? av : floor, a.idx, av > floor ? 1.0 : 0.0, -1, 0.0,
                        "clamp_min");
}

inline Var sum(std::span<const Var> xs) {
    require(!xs.empty(), "sum over empty span");
    Var acc = xs[0];
    for (std::size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
    return acc;
}

inline Var dot(std::span<const Var> a, std::span<const Var> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    Var acc = a[0] * b[0];
    for (std::size_t i = 1; i < a.size(); ++i) acc = acc + a[i] * b[i];
    return acc;
}

// A differentiable scalar loss built from tape operations over leaf parameters.
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double loss_value(const LossFn& f, const std::vector<double>& params) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (double p : params) vars.push_back(tape.leaf(p));
    return value(f(tape, vars));
}

// Reverse-mode gradient of f at params.
inline std::vector<double> gradient(const LossFn& f, const std::vector<double>& params) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (double p : params) vars.push_back(tape.leaf(p));
    Var loss = f(tape, vars);
    tape.reverse(loss);
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) g[i] = tape.gradient(vars[i]);
    return g;
}

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
inline double finite_diff_check(const LossFn& f, const std::vector<double>& params, double h) {
    require(h > 0.0, "finite_diff_check: h must be positive");
    const std::vector<double> analytic = gradient(f, params);
    std::vector<double> probe = params;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + h;
        const double up = loss_value(f, probe);
        probe[i] = params[i] - h;
        const double down = loss_value(f, probe);
        probe[i] = params[i];
        const double fd = (up - down) / (2.0 * h);
        const double err = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace ctpm::diffcore
