#pragma once

#include <cstddef>
#include <vector>

#include "glimt/model.hpp"
#include "glimt/objective.hpp"
#include "glimt/tape.hpp"
#include "glimt/tensor.hpp"

namespace glimt {

struct BoundBreakdown {
    std::vector<double> nll;   // per-step reconstruction cross-entropy
    std::vector<double> kl_c;  // per-step KL of the movement latent
    std::vector<double> kl_o;  // per-step KL of the percept latent
    double weighted_nll = 0.0;
    double total_kl = 0.0;
    double loss = 0.0;
};

struct BoundResult {
    Var loss;
    BoundBreakdown breakdown;
};

/// Assembles the training objective over a guide-mode rollout graph:
/// loss = sum_t w_t * NLL(belief_t, y_t) + beta * sum_t (KL_c,t + KL_o,t).
/// Zero-weight (warm-up) steps contribute no reconstruction node at all, so
/// the loss is bit-insensitive to their targets.
inline BoundResult variational_bound(Tape& tape, const RolloutGraph& graph,
                                     const std::vector<Tensor>& targets, const CostWeights& cw,
                                     double beta) {
    if (graph.mode != RolloutMode::guide) {
        throw invalid_argument("variational_bound: requires a guide-mode rollout");
    }
    if (targets.size() != graph.steps.size()) {
        throw invalid_argument("variational_bound: targets and rollout disagree on horizon");
    }
    if (cw.weights.size() != graph.steps.size()) {
        throw invalid_argument("variational_bound: cost weights and rollout disagree on horizon");
    }
    if (beta < 0.0) throw invalid_argument("variational_bound: beta must be non-negative");

    BoundResult result;
    BoundBreakdown& bd = result.breakdown;
    const std::size_t horizon = graph.steps.size();
    bd.nll.assign(horizon, 0.0);
    bd.kl_c.assign(horizon, 0.0);
    bd.kl_o.assign(horizon, 0.0);

    Var weighted_nll{};
    bool have_nll = false;
    Var kl_sum{};
    bool have_kl = false;
    for (std::size_t t = 0; t < horizon; ++t) {
        const StepVars& sv = graph.steps[t];
        if (cw.weights[t] != 0.0) {
            const std::size_t pixels = tape.value(sv.canvas).size();
            Var nll = bernoulli_nll_logits(tape, sv.canvas, targets[t].reshaped({pixels}));
            bd.nll[t] = tape.value(nll)[0];
            Var term = tape.scale(nll, cw.weights[t]);
            weighted_nll = have_nll ? tape.add(weighted_nll, term) : term;
            have_nll = true;
        }
        Var kc = kl_diag_gaussian(tape, sv.guide_c.mean, sv.guide_c.log_variance,
                                  sv.prior_c.mean, sv.prior_c.log_variance);
        Var ko = kl_diag_gaussian(tape, sv.guide_o.mean, sv.guide_o.log_variance,
                                  sv.prior_o.mean, sv.prior_o.log_variance);
        bd.kl_c[t] = tape.value(kc)[0];
        bd.kl_o[t] = tape.value(ko)[0];
        Var step_kl = tape.add(kc, ko);
        kl_sum = have_kl ? tape.add(kl_sum, step_kl) : step_kl;
        have_kl = true;
    }
    if (!have_nll) {
        throw invalid_argument("variational_bound: all cost weights are zero");
    }

    for (std::size_t t = 0; t < horizon; ++t) {
        bd.weighted_nll += cw.weights[t] * bd.nll[t];
        bd.total_kl += bd.kl_c[t] + bd.kl_o[t];
    }
    result.loss =
        beta == 0.0 ? weighted_nll : tape.add(weighted_nll, tape.scale(kl_sum, beta));
    bd.loss = tape.value(result.loss)[0];
    return result;
}

}  // namespace glimt
