#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "glimt/attention.hpp"
#include "glimt/gradcheck.hpp"
#include "glimt/rng.hpp"

using namespace glimt;

TEST_CASE("filter means follow the grid formula", "[attention]") {
    // N=2, center 0, delta 2, W=5: grid straddles the image center pixel 2.
    std::vector<double> mu = filter_means(0.0, 2.0, 2, 5);
    REQUIRE(mu.size() == 2);
    REQUIRE(mu[0] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(mu[1] == Catch::Approx(3.0).margin(1e-12));

    // center -1 maps to pixel 0, +1 to pixel extent-1.
    REQUIRE(filter_means(-1.0, 1.0, 1, 9)[0] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(filter_means(1.0, 1.0, 1, 9)[0] == Catch::Approx(8.0).margin(1e-12));
}

TEST_CASE("single narrow filter concentrates on the center pixel", "[attention]") {
    Filterbank fb = build_filterbank({0.0, 0.0}, 1.0, 0.05, 1, 5, 5);
    for (std::size_t a = 0; a < 5; ++a) {
        const double expect = a == 2 ? 1.0 : 0.0;
        REQUIRE(fb.fx.at(0, a) == Catch::Approx(expect).margin(1e-6));
        REQUIRE(fb.fy.at(0, a) == Catch::Approx(expect).margin(1e-6));
    }
}

TEST_CASE("filterbank rows are non-negative and sum to one", "[attention]") {
    const std::size_t w = 11, h = 7;
    for (double cx : {-1.0, -0.3, 0.0, 0.7, 1.0}) {
        for (double cy : {-1.0, 0.2, 1.0}) {
            for (double delta : {0.1, 1.5, 2.0 * static_cast<double>(w)}) {
                for (double sigma : {0.1, 2.0, static_cast<double>(w)}) {
                    Filterbank fb = build_filterbank({cx, cy}, delta, sigma, 2, h, w);
                    for (std::size_t i = 0; i < 2; ++i) {
                        double sx = 0.0, sy = 0.0;
                        for (std::size_t a = 0; a < w; ++a) {
                            REQUIRE(fb.fx.at(i, a) >= 0.0);
                            sx += fb.fx.at(i, a);
                        }
                        for (std::size_t a = 0; a < h; ++a) {
                            REQUIRE(fb.fy.at(i, a) >= 0.0);
                            sy += fb.fy.at(i, a);
                        }
                        REQUIRE(sx == Catch::Approx(1.0).margin(1e-6));
                        REQUIRE(sy == Catch::Approx(1.0).margin(1e-6));
                    }
                }
            }
        }
    }
}

TEST_CASE("build_filterbank rejects non-positive spacing or width", "[attention]") {
    REQUIRE_THROWS_AS(build_filterbank({0.0, 0.0}, 0.0, 1.0, 2, 5, 5), invalid_argument);
    REQUIRE_THROWS_AS(build_filterbank({0.0, 0.0}, 1.0, -1.0, 2, 5, 5), invalid_argument);
}

TEST_CASE("reading a constant image returns gamma times the constant", "[attention]") {
    const double c = 0.37;
    Tensor image = Tensor::full({9, 9}, c);
    GlimpseParams p;
    p.center_x = 0.4;
    p.center_y = -0.8;
    p.delta = 3.0;
    p.sigma = 1.2;
    p.gamma = {2.5};
    Tensor r = read_glimpse(image, p, {1}, 2);
    REQUIRE(r.size() == 4);
    for (std::size_t i = 0; i < r.size(); ++i) {
        REQUIRE(r[i] == Catch::Approx(p.gamma[0] * c).margin(1e-6));
    }
}

TEST_CASE("reading lengths match the grid and scale configuration", "[attention]") {
    Tensor image = Tensor::full({12, 12}, 0.5);
    GlimpseParams p;
    p.delta = 2.0;
    p.sigma = 1.0;
    p.gamma = {1.0, 1.0};
    REQUIRE(read_glimpse(image, p, {1}, 2).size() == 4);
    REQUIRE(read_glimpse(image, p, {1, 2}, 2).size() == 8);

    // Three sequential single-scale reads consume 12 scalars in total.
    std::size_t total = 0;
    for (int t = 0; t < 3; ++t) total += read_glimpse(image, p, {1}, 2).size();
    REQUIRE(total == 12);
}

TEST_CASE("scaling one gamma scales exactly that scale's block", "[attention]") {
    Rng rng(404);
    Tensor image({10, 10});
    for (std::size_t i = 0; i < image.size(); ++i) image[i] = rng.uniform();
    GlimpseParams p;
    p.center_x = 0.2;
    p.center_y = -0.1;
    p.delta = 2.5;
    p.sigma = 1.5;
    p.gamma = {1.3, 0.7};
    Tensor base = read_glimpse(image, p, {1, 2}, 2);

    const double k = 3.0;
    GlimpseParams q = p;
    q.gamma[1] *= k;
    Tensor scaled = read_glimpse(image, q, {1, 2}, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        REQUIRE(scaled[i] == base[i]);
        REQUIRE(scaled[4 + i] == Catch::Approx(k * base[4 + i]).epsilon(1e-12));
    }
}

TEST_CASE("read_glimpse rejects an empty scale list", "[attention]") {
    Tensor image = Tensor::full({5, 5}, 0.5);
    GlimpseParams p;
    p.gamma = {1.0};
    REQUIRE_THROWS_AS(read_glimpse(image, p, {}, 2), invalid_argument);
}

TEST_CASE("decode_glimpse maps the zero latent to the reference glimpse", "[attention]") {
    GlimpseParams p = decode_glimpse(Tensor::zeros({6}), 5.0, 2.5, 2);
    REQUIRE(p.center_x == 0.0);
    REQUIRE(p.center_y == 0.0);
    REQUIRE(p.delta == Catch::Approx(5.0));
    REQUIRE(p.sigma == Catch::Approx(2.5));
    REQUIRE(p.gamma.size() == 2);
    REQUIRE(p.gamma[0] == Catch::Approx(1.0));
    REQUIRE(p.gamma[1] == Catch::Approx(1.0));
}

TEST_CASE("decode_glimpse doubles spacing for a log-two latent", "[attention]") {
    Tensor z = Tensor::zeros({5});
    z[2] = std::log(2.0);
    GlimpseParams p = decode_glimpse(z, 5.0, 2.5, 1);
    REQUIRE(p.delta == Catch::Approx(10.0));
}

TEST_CASE("decode_glimpse saturates and stays valid at extreme latents", "[attention]") {
    for (double big : {1e3, 1e30, 1e308, -1e308}) {
        Tensor z = Tensor::full({5}, big);
        GlimpseParams p = decode_glimpse(z, 5.0, 2.5, 1);
        REQUIRE(std::fabs(p.center_x) <= 1.0);
        REQUIRE(std::fabs(p.center_y) <= 1.0);
        REQUIRE(p.delta > 0.0);
        REQUIRE(p.sigma > 0.0);
        REQUIRE(std::isfinite(p.delta));
        REQUIRE(std::isfinite(p.sigma));
        for (double g : p.gamma) {
            REQUIRE(g >= 0.0);
            REQUIRE(std::isfinite(g));
        }
        REQUIRE_NOTHROW(p.validate());
    }
    REQUIRE(decode_glimpse(Tensor::full({5}, 1e308), 1.0, 1.0, 1).center_x ==
            Catch::Approx(1.0));
}

TEST_CASE("decode_glimpse rejects a wrong latent dimension", "[attention]") {
    REQUIRE_THROWS_AS(decode_glimpse(Tensor::zeros({4}), 1.0, 1.0, 1), invalid_argument);
    REQUIRE_THROWS_AS(decode_glimpse(Tensor::zeros({6}), 1.0, 1.0, 1), invalid_argument);
}

TEST_CASE("tape read_glimpse matches the value-level read", "[attention]") {
    Rng rng(77);
    Tensor image({8, 8});
    for (std::size_t i = 0; i < image.size(); ++i) image[i] = rng.uniform();
    GlimpseParams p;
    p.center_x = -0.3;
    p.center_y = 0.5;
    p.delta = 1.7;
    p.sigma = 0.9;
    p.gamma = {1.1, 0.4};
    Tensor expect = read_glimpse(image, p, {1, 2}, 2);

    Tape tape;
    GlimpseVars vars;
    vars.center_x = tape.leaf(Tensor::scalar(p.center_x));
    vars.center_y = tape.leaf(Tensor::scalar(p.center_y));
    vars.delta = tape.leaf(Tensor::scalar(p.delta));
    vars.sigma = tape.leaf(Tensor::scalar(p.sigma));
    vars.gamma = {tape.leaf(Tensor::scalar(p.gamma[0])), tape.leaf(Tensor::scalar(p.gamma[1]))};
    Var out = read_glimpse(tape, tape.leaf(image), vars, {1, 2}, 2);
    const Tensor& got = tape.value(out);
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        REQUIRE(got[i] == Catch::Approx(expect[i]).margin(1e-12));
    }
}

TEST_CASE("grid_means passes grad_check", "[attention][grad]") {
    Rng rng(501);
    for (int draw = 0; draw < 10; ++draw) {
        Tensor center = Tensor::scalar(rng.uniform(-0.9, 0.9));
        Tensor delta = Tensor::scalar(rng.uniform(0.5, 3.0));
        auto f = [](Tape& t, const std::vector<Var>& in) {
            return t.sum(t.mul(grid_means(t, in[0], in[1], 2, 7),
                               t.constant(Tensor::vector({0.3, -1.2}))));
        };
        GradCheckReport rep = grad_check(f, {{"center", center}, {"delta", delta}}, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("gaussian_rows passes grad_check", "[attention][grad]") {
    Rng rng(502);
    const std::size_t extent = 6;
    for (int draw = 0; draw < 10; ++draw) {
        Tensor mu({2});
        mu[0] = rng.uniform(-1.0, static_cast<double>(extent));
        mu[1] = rng.uniform(-1.0, static_cast<double>(extent));
        Tensor sigma = Tensor::scalar(rng.uniform(0.5, 2.5));
        Tensor weights({2 * extent});
        for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = rng.uniform(-1.0, 1.0);
        auto f = [&](Tape& t, const std::vector<Var>& in) {
            Var rows = gaussian_rows(t, in[0], in[1], extent);
            return t.sum(t.mul(t.reshape(rows, {2 * extent}), t.constant(weights)));
        };
        GradCheckReport rep = grad_check(f, {{"mu", mu}, {"sigma", sigma}}, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("read_glimpse passes grad_check in all arguments", "[attention][grad]") {
    Rng rng(503);
    const std::size_t h = 7, w = 7;
    for (int draw = 0; draw < 10; ++draw) {
        Tensor image({h, w});
        for (std::size_t i = 0; i < image.size(); ++i) image[i] = rng.uniform();
        Tensor cx = Tensor::scalar(rng.uniform(-0.8, 0.8));
        Tensor cy = Tensor::scalar(rng.uniform(-0.8, 0.8));
        Tensor delta = Tensor::scalar(rng.uniform(1.0, 3.0));
        Tensor sigma = Tensor::scalar(rng.uniform(0.7, 2.0));
        Tensor gamma({2});
        gamma[0] = rng.uniform(0.2, 2.0);
        gamma[1] = rng.uniform(0.2, 2.0);
        Tensor weights({8});
        for (std::size_t i = 0; i < 8; ++i) weights[i] = rng.uniform(-1.0, 1.0);
        auto f = [&](Tape& t, const std::vector<Var>& in) {
            GlimpseVars p;
            p.center_x = in[1];
            p.center_y = in[2];
            p.delta = in[3];
            p.sigma = in[4];
            p.gamma = {t.slice(in[5], 0, 1), t.slice(in[5], 1, 1)};
            Var r = read_glimpse(t, in[0], p, {1, 2}, 2);
            return t.sum(t.mul(r, t.constant(weights)));
        };
        GradCheckReport rep = grad_check(f,
                                         {{"image", image},
                                          {"cx", cx},
                                          {"cy", cy},
                                          {"delta", delta},
                                          {"sigma", sigma},
                                          {"gamma", gamma}},
                                         1e-5);
        REQUIRE(rep.max_rel_err < 1e-4);
    }
}

TEST_CASE("decode_glimpse feeding a read passes grad_check", "[attention][grad]") {
    Rng rng(504);
    const std::size_t h = 6, w = 6;
    Tensor image({h, w});
    for (std::size_t i = 0; i < image.size(); ++i) image[i] = rng.uniform();
    Tensor weights({4});
    for (std::size_t i = 0; i < 4; ++i) weights[i] = rng.uniform(-1.0, 1.0);
    for (int draw = 0; draw < 10; ++draw) {
        Tensor z({5});
        for (std::size_t i = 0; i < 5; ++i) z[i] = rng.uniform(-0.8, 0.8);
        auto f = [&](Tape& t, const std::vector<Var>& in) {
            GlimpseVars p = decode_glimpse(t, in[0], 1.5, 0.8, 1);
            Var r = read_glimpse(t, t.constant(image), p, {1}, 2);
            return t.sum(t.mul(r, t.constant(weights)));
        };
        GradCheckReport rep = grad_check(f, {{"z", z}}, 1e-5);
        REQUIRE(rep.max_rel_err < 1e-4);
    }
}
