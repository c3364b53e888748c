#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "glimt/tape.hpp"
#include "glimt/tensor.hpp"

namespace glimt {

/// Per-step reconstruction cost weights. Zero during the warm-up phase,
/// Poisson-shaped afterwards, normalized to sum one.
struct CostWeights {
    std::vector<double> weights;
    std::size_t warmup = 0;
    double poisson_rate = 1.0;

    std::size_t horizon() const { return weights.size(); }
};

/// Exact expectation weights of a reconstruction cost evaluated at a Poisson
/// termination time. The pmf argument is the number of steps past warm-up,
/// so w_t ∝ rate^(t-warmup) e^(-rate) / (t-warmup)! for t in [warmup, T),
/// renormalized over that range; earlier steps carry zero weight.
inline CostWeights poisson_weights(double rate, std::size_t horizon, std::size_t warmup) {
    if (!(rate > 0.0)) throw invalid_argument("poisson_weights: rate must be positive");
    if (warmup >= horizon) throw invalid_argument("poisson_weights: warmup must be < horizon");
    CostWeights cw;
    cw.warmup = warmup;
    cw.poisson_rate = rate;
    cw.weights.assign(horizon, 0.0);
    double pmf = std::exp(-rate);
    double sum = 0.0;
    for (std::size_t t = warmup; t < horizon; ++t) {
        cw.weights[t] = pmf;
        sum += pmf;
        pmf *= rate / static_cast<double>(t - warmup + 1);
    }
    for (std::size_t t = warmup; t < horizon; ++t) cw.weights[t] /= sum;
    return cw;
}

/// Default termination rate: mass concentrated over the post-warm-up steps.
inline double default_poisson_rate(std::size_t horizon, std::size_t warmup) {
    return 0.75 * static_cast<double>(horizon - warmup);
}

/// Bernoulli cross-entropy of a belief against a [0,1]-valued target:
/// -sum(y log b + (1-y) log(1-b)). Belief must lie strictly inside (0,1).
inline double reconstruction_nll(const Tensor& belief, const Tensor& target) {
    require_same_shape(belief, target, "reconstruction_nll");
    double acc = 0.0;
    for (std::size_t i = 0; i < belief.size(); ++i) {
        const double b = belief[i], y = target[i];
        acc -= y * std::log(b) + (1.0 - y) * std::log(1.0 - b);
    }
    return acc;
}

/// KL(q || p) between diagonal Gaussians given (mean, log variance) pairs.
inline double kl_diag_gaussian(const GaussianParams& q, const GaussianParams& p) {
    require_same_shape(q.mean, p.mean, "kl_diag_gaussian");
    double acc = 0.0;
    for (std::size_t i = 0; i < q.mean.size(); ++i) {
        const double dm = q.mean[i] - p.mean[i];
        const double lq = q.log_variance[i], lp = p.log_variance[i];
        acc += std::exp(lq - lp) + dm * dm * std::exp(-lp) - 1.0 + lp - lq;
    }
    return 0.5 * acc;
}

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// ---- tape-side versions ----

/// Differentiable Bernoulli cross-entropy in belief space.
inline Var bernoulli_nll(Tape& tape, Var belief, const Tensor& target) {
    const Tensor& b = tape.value(belief);
    require_same_shape(b, target, "bernoulli_nll");
    double acc = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        acc -= target[i] * std::log(b[i]) + (1.0 - target[i]) * std::log(1.0 - b[i]);
    }
    if (!tape.wants_grad(belief)) return tape.constant(Tensor::scalar(acc));
    Var out = tape.push(Tensor::scalar(acc), true, nullptr);
    const int oid = out.id, bid = belief.id;
    tape.set_backward(out, [oid, bid, target](Tape& t) {
        const double g = t.grad(Var{oid})[0];
        const Tensor& bv = t.value(Var{bid});
        Tensor& gb = t.grad_ref(Var{bid});
        for (std::size_t i = 0; i < bv.size(); ++i) {
            gb[i] += g * (bv[i] - target[i]) / (bv[i] * (1.0 - bv[i]));
        }
    });
    return out;
}

/// Same cross-entropy parameterized by the pre-sigmoid canvas, which keeps
/// both the value and the gradient finite at extreme logits:
/// sum(softplus(c) - y*c), gradient sigmoid(c) - y.
inline Var bernoulli_nll_logits(Tape& tape, Var canvas, const Tensor& target) {
    const Tensor& c = tape.value(canvas);
    require_same_shape(c, target, "bernoulli_nll_logits");
    double acc = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) acc += softplus(c[i]) - target[i] * c[i];
    if (!tape.wants_grad(canvas)) return tape.constant(Tensor::scalar(acc));
    Var out = tape.push(Tensor::scalar(acc), true, nullptr);
    const int oid = out.id, cid = canvas.id;
    tape.set_backward(out, [oid, cid, target](Tape& t) {
        const double g = t.grad(Var{oid})[0];
        const Tensor& cv = t.value(Var{cid});
        Tensor& gc = t.grad_ref(Var{cid});
        for (std::size_t i = 0; i < cv.size(); ++i) {
            gc[i] += g * (Tape::sigmoid_scalar(cv[i]) - target[i]);
        }
    });
    return out;
}

/// Differentiable KL(q || p) for diagonal Gaussians, in all four inputs.
inline Var kl_diag_gaussian(Tape& tape, Var q_mean, Var q_logvar, Var p_mean, Var p_logvar) {
    const Tensor &qm = tape.value(q_mean), &ql = tape.value(q_logvar);
    const Tensor &pm = tape.value(p_mean), &pl = tape.value(p_logvar);
    require_same_shape(qm, ql, "kl_diag_gaussian");
    require_same_shape(qm, pm, "kl_diag_gaussian");
    require_same_shape(qm, pl, "kl_diag_gaussian");
    double acc = 0.0;
    for (std::size_t i = 0; i < qm.size(); ++i) {
        const double dm = qm[i] - pm[i];
        acc += std::exp(ql[i] - pl[i]) + dm * dm * std::exp(-pl[i]) - 1.0 + pl[i] - ql[i];
    }
    const bool needs = tape.wants_grad(q_mean) || tape.wants_grad(q_logvar) ||
                       tape.wants_grad(p_mean) || tape.wants_grad(p_logvar);
    if (!needs) return tape.constant(Tensor::scalar(0.5 * acc));
    Var out = tape.push(Tensor::scalar(0.5 * acc), true, nullptr);
    const int oid = out.id;
    const int qmid = q_mean.id, qlid = q_logvar.id, pmid = p_mean.id, plid = p_logvar.id;
    tape.set_backward(out, [oid, qmid, qlid, pmid, plid](Tape& t) {
        const double g = t.grad(Var{oid})[0];
        const Tensor &qmv = t.value(Var{qmid}), &qlv = t.value(Var{qlid});
        const Tensor &pmv = t.value(Var{pmid}), &plv = t.value(Var{plid});
        for (std::size_t i = 0; i < qmv.size(); ++i) {
            const double dm = qmv[i] - pmv[i];
            const double ratio = std::exp(qlv[i] - plv[i]);
            const double prec = std::exp(-plv[i]);
            if (t.wants_grad(Var{qmid})) t.grad_ref(Var{qmid})[i] += g * dm * prec;
            if (t.wants_grad(Var{pmid})) t.grad_ref(Var{pmid})[i] -= g * dm * prec;
            if (t.wants_grad(Var{qlid})) t.grad_ref(Var{qlid})[i] += g * 0.5 * (ratio - 1.0);
            if (t.wants_grad(Var{plid})) {
                t.grad_ref(Var{plid})[i] += g * 0.5 * (1.0 - ratio - dm * dm * prec);
            }
        }
    });
    return out;
}

}  // namespace glimt
