#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "glimt/gradcheck.hpp"
#include "glimt/lstm.hpp"
#include "glimt/rng.hpp"

using namespace glimt;

TEST_CASE("analytic gradient of x^2 at 3 matches 6 to high precision", "[gradcheck]") {
    ScalarFn f = [](Tape& t, const std::vector<Var>& in) { return t.sum(t.mul(in[0], in[0])); };
    GradCheckReport rep = grad_check(f, {{"x", Tensor::scalar(3.0)}}, 1e-5);
    REQUIRE(rep.max_rel_err < 1e-9);
    REQUIRE(rep.inputs[0].analytic_at_worst == Catch::Approx(6.0));
}

TEST_CASE("sum of sigmoid passes tightly over random draws", "[gradcheck]") {
    Rng rng(21);
    ScalarFn f = [](Tape& t, const std::vector<Var>& in) { return t.sum(t.sigmoid(in[0])); };
    for (int k = 0; k < 10; ++k) {
        GradCheckReport rep = grad_check(f, {{"x", rng.normal_tensor({5})}}, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-6);
    }
}

TEST_CASE("a wrong backward is flagged", "[gradcheck]") {
    ScalarFn broken = [](Tape& t, const std::vector<Var>& in) {
        const Tensor& x = t.value(in[0]);
        Tensor out = Tensor::scalar(x[0] * x[0]);
        Var o = t.push(std::move(out), true, nullptr);
        const int oid = o.id, xid = in[0].id;
        t.set_backward(o, [oid, xid](Tape& tt) {
            // deliberately reports d(x^2)/dx as 3x
            tt.grad_ref(Var{xid})[0] += tt.grad(Var{oid})[0] * 3.0 * tt.value(Var{xid})[0];
        });
        return o;
    };
    GradCheckReport rep = grad_check(broken, {{"x", Tensor::scalar(2.0)}}, 1e-5);
    REQUIRE(rep.max_rel_err > 0.3);
}

TEST_CASE("non-scalar outputs and bad epsilon are rejected", "[gradcheck]") {
    ScalarFn vec = [](Tape&, const std::vector<Var>& in) { return in[0]; };
    REQUIRE_THROWS_AS(grad_check(vec, {{"x", Tensor({2}, {1.0, 2.0})}}, 1e-5), invalid_argument);
    ScalarFn ok = [](Tape& t, const std::vector<Var>& in) { return t.sum(in[0]); };
    REQUIRE_THROWS_AS(grad_check(ok, {{"x", Tensor::scalar(1.0)}}, 0.0), invalid_argument);
}

TEST_CASE("non-finite values during perturbation are reported", "[gradcheck]") {
    // log of x via exp-composition: 1/x explodes at 0; use sqrt(-x) style trap
    ScalarFn trap = [](Tape& t, const std::vector<Var>& in) {
        const Tensor& x = t.value(in[0]);
        Tensor out = Tensor::scalar(std::log(x[0]));
        Var o = t.push(std::move(out), true, nullptr);
        const int oid = o.id, xid = in[0].id;
        t.set_backward(o, [oid, xid](Tape& tt) {
            tt.grad_ref(Var{xid})[0] += tt.grad(Var{oid})[0] / tt.value(Var{xid})[0];
        });
        return o;
    };
    // base point just above zero: x - eps goes negative -> log is NaN
    REQUIRE_THROWS_AS(grad_check(trap, {{"x", Tensor::scalar(5e-6)}}, 1e-5), numeric_error);
}

TEST_CASE("one LSTM step passes grad_check end to end", "[gradcheck]") {
    Rng rng(31);
    LstmCell cell = make_lstm_cell(3, 4, rng);
    Tensor x = rng.normal_tensor({3});
    Tensor h0 = rng.normal_tensor({4});
    Tensor c0 = rng.normal_tensor({4});
    Tensor pick = rng.normal_tensor({4});  // fixed linear functional
    ScalarFn f = [&pick](Tape& t, const std::vector<Var>& in) {
        LstmVars cell_vars{in[0], in[1]};
        LstmState prev{in[3], in[4]};
        LstmState next = lstm_step(t, cell_vars, in[2], prev);
        return t.sum(t.mul(next.h, t.constant(pick)));
    };
    GradCheckReport rep = grad_check(
        f, {{"W", cell.weight}, {"b", cell.bias}, {"x", x}, {"h0", h0}, {"c0", c0}}, 1e-5);
    REQUIRE(rep.max_rel_err < 1e-4);
}
