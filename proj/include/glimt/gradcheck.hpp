#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "glimt/tape.hpp"

namespace glimt {

/// A differentiable scalar-valued computation: given a tape and one leaf Var
/// per input tensor, build the graph and return the scalar output.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckInput {
    std::string name;
    Tensor value;
};

struct GradCheckReport {
    struct PerInput {
        std::string name;
        double max_rel_err = 0.0;
        std::size_t worst_element = 0;
        double analytic_at_worst = 0.0;
        double numeric_at_worst = 0.0;
    };
    std::vector<PerInput> inputs;
    double max_rel_err = 0.0;
};

namespace detail {

inline double eval_scalar(const ScalarFn& f, const std::vector<GradCheckInput>& inputs,
                          const std::string& perturbed_name) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& in : inputs) vars.push_back(tape.leaf(in.value));
    Var out = f(tape, vars);
    if (tape.value(out).size() != 1) {
        throw invalid_argument("grad_check: function output is not a scalar");
    }
    const double v = tape.value(out)[0];
    if (!std::isfinite(v)) {
        throw numeric_error("grad_check: non-finite function value while perturbing input '" +
                            perturbed_name + "'");
    }
    return v;
}

}  // namespace detail

/// Compare analytic gradients against central finite differences, one input
/// element at a time. Relative error uses max(|analytic|, |numeric|, 1e-8)
/// as denominator so near-zero gradients do not blow the ratio up.
inline GradCheckReport grad_check(const ScalarFn& f, std::vector<GradCheckInput> inputs,
                                  double epsilon) {
    if (epsilon <= 0.0) throw invalid_argument("grad_check: epsilon must be positive");

    // Analytic pass.
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(inputs.size());
        for (const auto& in : inputs) vars.push_back(tape.leaf(in.value));
        Var out = f(tape, vars);
        if (tape.value(out).size() != 1) {
            throw invalid_argument("grad_check: function output is not a scalar");
        }
        if (!std::isfinite(tape.value(out)[0])) {
            throw numeric_error("grad_check: non-finite function value at the base point");
        }
        tape.backward(out);
        for (Var v : vars) analytic.push_back(tape.grad(v));
    }

    GradCheckReport report;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        GradCheckReport::PerInput per;
        per.name = inputs[k].name;
        for (std::size_t i = 0; i < inputs[k].value.size(); ++i) {
            const double saved = inputs[k].value[i];
            inputs[k].value[i] = saved + epsilon;
            const double fp = detail::eval_scalar(f, inputs, inputs[k].name);
            inputs[k].value[i] = saved - epsilon;
            const double fm = detail::eval_scalar(f, inputs, inputs[k].name);
            inputs[k].value[i] = saved;

            const double numeric = (fp - fm) / (2.0 * epsilon);
            const double a = analytic[k][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > per.max_rel_err) {
                per.max_rel_err = rel;
                per.worst_element = i;
                per.analytic_at_worst = a;
                per.numeric_at_worst = numeric;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, per.max_rel_err);
        report.inputs.push_back(std::move(per));
    }
    return report;
}

}  // namespace glimt
