#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "glimt/tape.hpp"

using namespace glimt;

TEST_CASE("elementwise arithmetic forwards and backwards", "[tape]") {
    Tape tape;
    Var x = tape.leaf(Tensor({2}, {3.0, -1.0}));
    Var y = tape.leaf(Tensor({2}, {2.0, 5.0}));
    Var s = tape.sum(tape.mul(tape.add(x, y), tape.sub(x, y)));  // sum(x^2 - y^2)
    REQUIRE(tape.value(s)[0] == Catch::Approx(9.0 - 4.0 + 1.0 - 25.0));
    tape.backward(s);
    REQUIRE(tape.grad(x)[0] == Catch::Approx(6.0));
    REQUIRE(tape.grad(x)[1] == Catch::Approx(-2.0));
    REQUIRE(tape.grad(y)[0] == Catch::Approx(-4.0));
    REQUIRE(tape.grad(y)[1] == Catch::Approx(-10.0));
}

TEST_CASE("backward roots must be scalar and tracked", "[tape]") {
    Tape tape;
    Var v = tape.leaf(Tensor({2}, {1.0, 2.0}));
    REQUIRE_THROWS_AS(tape.backward(v), invalid_argument);
    Var c = tape.constant(Tensor::scalar(1.0));
    REQUIRE_THROWS_AS(tape.backward(c), invalid_argument);
    Var s = tape.sum(v);
    tape.backward(s);
    REQUIRE_THROWS_AS(tape.backward(s), invalid_argument);  // single-shot sweep
}

TEST_CASE("constants carry no gradient work", "[tape]") {
    Tape tape;
    Var c1 = tape.constant(Tensor({2}, {1.0, 2.0}));
    Var c2 = tape.constant(Tensor({2}, {3.0, 4.0}));
    Var prod = tape.mul(c1, c2);
    REQUIRE_FALSE(tape.wants_grad(prod));
    Var x = tape.leaf(Tensor({2}, {1.0, 1.0}));
    Var mixed = tape.mul(prod, x);
    Var s = tape.sum(mixed);
    tape.backward(s);
    REQUIRE(tape.grad(x)[0] == Catch::Approx(3.0));
    REQUIRE(tape.grad(x)[1] == Catch::Approx(8.0));
}

TEST_CASE("scalar broadcast multiply", "[tape]") {
    Tape tape;
    Var v = tape.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    Var k = tape.leaf(Tensor::scalar(2.0));
    Var s = tape.sum(tape.smul(v, k));
    REQUIRE(tape.value(s)[0] == Catch::Approx(12.0));
    tape.backward(s);
    REQUIRE(tape.grad(k)[0] == Catch::Approx(6.0));
    REQUIRE(tape.grad(v)[2] == Catch::Approx(2.0));
}

TEST_CASE("activation values match library functions", "[tape]") {
    Tape tape;
    Var x = tape.leaf(Tensor({3}, {-2.0, 0.0, 1.5}));
    const Tensor& e = tape.value(tape.exp(x));
    const Tensor& th = tape.value(tape.tanh(x));
    const Tensor& sg = tape.value(tape.sigmoid(x));
    for (std::size_t i = 0; i < 3; ++i) {
        const double v = tape.value(x)[i];
        REQUIRE(e[i] == Catch::Approx(std::exp(v)));
        REQUIRE(th[i] == Catch::Approx(std::tanh(v)));
        REQUIRE(sg[i] == Catch::Approx(1.0 / (1.0 + std::exp(-v))));
    }
}

TEST_CASE("clamp passes gradient only strictly inside the interval", "[tape]") {
    Tape tape;
    Var x = tape.leaf(Tensor({3}, {-9.0, 0.5, 9.0}));
    Var c = tape.clamp(x, -1.0, 1.0);
    REQUIRE(tape.value(c)[0] == -1.0);
    REQUIRE(tape.value(c)[1] == 0.5);
    REQUIRE(tape.value(c)[2] == 1.0);
    tape.backward(tape.sum(c));
    REQUIRE(tape.grad(x)[0] == 0.0);
    REQUIRE(tape.grad(x)[1] == 1.0);
    REQUIRE(tape.grad(x)[2] == 0.0);
}

TEST_CASE("concat and slice route gradients to the right segments", "[tape]") {
    Tape tape;
    Var a = tape.leaf(Tensor({2}, {1.0, 2.0}));
    Var b = tape.leaf(Tensor({3}, {3.0, 4.0, 5.0}));
    Var cat = tape.concat({a, b});
    REQUIRE(tape.value(cat).size() == 5);
    REQUIRE(tape.value(cat)[4] == 5.0);
    Var mid = tape.slice(cat, 1, 3);  // {2, 3, 4}
    REQUIRE(tape.value(mid)[0] == 2.0);
    tape.backward(tape.sum(mid));
    REQUIRE(tape.grad(a)[0] == 0.0);
    REQUIRE(tape.grad(a)[1] == 1.0);
    REQUIRE(tape.grad(b)[0] == 1.0);
    REQUIRE(tape.grad(b)[1] == 1.0);
    REQUIRE(tape.grad(b)[2] == 0.0);
    REQUIRE_THROWS_AS(tape.slice(cat, 3, 4), invalid_argument);
}

TEST_CASE("matmul against hand-computed product", "[tape]") {
    Tape tape;
    Var a = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var b = tape.leaf(Tensor({3, 2}, {7, 8, 9, 10, 11, 12}));
    Var p = tape.matmul(a, b);
    const Tensor& v = tape.value(p);
    REQUIRE(v.at(0, 0) == Catch::Approx(58.0));
    REQUIRE(v.at(0, 1) == Catch::Approx(64.0));
    REQUIRE(v.at(1, 0) == Catch::Approx(139.0));
    REQUIRE(v.at(1, 1) == Catch::Approx(154.0));
    tape.backward(tape.sum(p));
    // d(sum AB)/dA = ones * B^T: row sums of B per column index.
    REQUIRE(tape.grad(a).at(0, 0) == Catch::Approx(15.0));
    REQUIRE(tape.grad(a).at(1, 2) == Catch::Approx(23.0));
    REQUIRE(tape.grad(b).at(0, 0) == Catch::Approx(5.0));
    REQUIRE(tape.grad(b).at(2, 1) == Catch::Approx(9.0));
    REQUIRE_THROWS_AS(tape.matmul(a, a), invalid_argument);
}

TEST_CASE("matmul_nt equals matmul with an explicitly transposed factor", "[tape]") {
    Tape tape;
    Var a = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var b = tape.leaf(Tensor({2, 3}, {1, 0, 2, -1, 1, 0}));
    Var p = tape.matmul_nt(a, b);  // A * B^T, 2x2
    const Tensor& v = tape.value(p);
    REQUIRE(v.at(0, 0) == Catch::Approx(7.0));
    REQUIRE(v.at(0, 1) == Catch::Approx(1.0));
    REQUIRE(v.at(1, 0) == Catch::Approx(16.0));
    REQUIRE(v.at(1, 1) == Catch::Approx(1.0));
}

TEST_CASE("affine fuses matrix, input, and bias", "[tape]") {
    Tape tape;
    Var w = tape.leaf(Tensor({2, 3}, {1, 0, -1, 2, 1, 0}));
    Var x = tape.leaf(Tensor({3}, {3.0, 4.0, 5.0}));
    Var b = tape.leaf(Tensor({2}, {0.5, -0.5}));
    Var y = tape.affine(w, x, b);
    REQUIRE(tape.value(y)[0] == Catch::Approx(-1.5));
    REQUIRE(tape.value(y)[1] == Catch::Approx(9.5));
    tape.backward(tape.sum(y));
    REQUIRE(tape.grad(b)[0] == 1.0);
    REQUIRE(tape.grad(x)[0] == Catch::Approx(3.0));   // column sums of W
    REQUIRE(tape.grad(x)[2] == Catch::Approx(-1.0));
    REQUIRE(tape.grad(w).at(0, 1) == Catch::Approx(4.0));
}

TEST_CASE("reparameterized sampling identities", "[tape]") {
    // mean 0, log_var 0, noise e -> e
    {
        Tape tape;
        Var m = tape.leaf(Tensor({2}, {0.0, 0.0}));
        Var lv = tape.leaf(Tensor({2}, {0.0, 0.0}));
        Var n = tape.constant(Tensor({2}, {0.3, -0.7}));
        const Tensor& z = tape.value(tape.gaussian_sample(m, lv, n));
        REQUIRE(z[0] == Catch::Approx(0.3));
        REQUIRE(z[1] == Catch::Approx(-0.7));
    }
    // noise 0 -> mean
    {
        Tape tape;
        Var m = tape.leaf(Tensor({2}, {1.5, -2.0}));
        Var lv = tape.leaf(Tensor({2}, {0.7, -3.0}));
        Var n = tape.constant(Tensor::zeros({2}));
        const Tensor& z = tape.value(tape.gaussian_sample(m, lv, n));
        REQUIRE(z[0] == Catch::Approx(1.5));
        REQUIRE(z[1] == Catch::Approx(-2.0));
    }
    // mean 1, log_var ln 4 (sigma 2), noise 0.5 -> 2
    {
        Tape tape;
        Var m = tape.leaf(Tensor({1}, {1.0}));
        Var lv = tape.leaf(Tensor({1}, {std::log(4.0)}));
        Var n = tape.constant(Tensor({1}, {0.5}));
        REQUIRE(tape.value(tape.gaussian_sample(m, lv, n))[0] == Catch::Approx(2.0));
    }
}

TEST_CASE("shape mismatches are rejected", "[tape]") {
    Tape tape;
    Var a = tape.leaf(Tensor({2}, {1.0, 2.0}));
    Var b = tape.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    REQUIRE_THROWS_AS(tape.add(a, b), invalid_argument);
    REQUIRE_THROWS_AS(tape.mul(a, b), invalid_argument);
    REQUIRE_THROWS_AS(tape.gaussian_sample(a, a, b), invalid_argument);
}
