#include <doctest.h>

#include <cmath>
#include <numeric>

#include "octenh/rldeconv.hpp"
#include "octenh/rng.hpp"

using namespace octenh;

namespace {

Psf three_tap() {
    Psf p;
    p.taps = {0.25, 0.5, 0.25};
    p.center_index = 1;
    p.pitch_z_um = 3.5;
    return p;
}

BFrame column(const std::vector<double>& v) {
    BFrame f(v.size(), 1, 3.5);
    f.data = v;
    return f;
}

} // namespace

TEST_SUITE("rldeconv") {

TEST_CASE("delta psf makes the first iterate the observation itself") {
    BFrame f(16, 6, 3.5);
    Rng rng(12);
    for (double& v : f.data) v = rng.uniform01() + 0.05;
    BFrame out = richardson_lucy(f, delta_psf(5, 3.5), 1);
    // H = identity: ratio = obs/max(obs,eps) = 1 elementwise, est unchanged
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(out.data[i] == f.data[i]);
}

TEST_CASE("all-zero frame is a fixed point") {
    BFrame f(12, 4, 3.5, 0.0);
    BFrame out = richardson_lucy(f, three_tap(), 10);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("50 iterations concentrate a blurred spike back to its bin") {
    // frozen oracle: signal [0,0,1,0,0] blurred by [0.25,0.5,0.25]
    BFrame obs = column({0.0, 0.25, 0.5, 0.25, 0.0});
    BFrame out = richardson_lucy(obs, three_tap(), 50);
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out.data[i] > out.data[argmax]) argmax = i;
    CHECK(argmax == 2);
    CHECK(out.data[2] == doctest::Approx(0.9999995474234359).epsilon(1e-12));
    CHECK(out.data[1] == doctest::Approx(2.262882820075059e-07).epsilon(1e-9));
    CHECK(out.data[3] == doctest::Approx(2.262882820075059e-07).epsilon(1e-9));
    CHECK(out.data[0] == 0.0);
    CHECK(out.data[4] == 0.0);
}

TEST_CASE("the poisson objective never increases along the iteration") {
    Rng rng(2024);
    Psf psf = three_tap();
    for (int inst = 0; inst < 8; ++inst) {
        BFrame truth(20, 3, 3.5);
        for (double& v : truth.data) v = rng.uniform01() < 0.7 ? 0.05 : rng.uniform01();
        BFrame obs = degrade(truth, psf);
        double prev = rl_poisson_objective(obs, obs, psf);
        for (std::size_t it = 1; it <= 50; ++it) {
            BFrame est = richardson_lucy(obs, psf, it);
            const double cur = rl_poisson_objective(obs, est, psf);
            CHECK(cur <= prev + 1e-9);
            prev = cur;
        }
    }
}

TEST_CASE("flux is preserved by every iteration") {
    Rng rng(7);
    Psf psf = three_tap();
    BFrame obs(24, 5, 3.5);
    for (double& v : obs.data) v = rng.uniform01();
    const double flux_in = std::accumulate(obs.data.begin(), obs.data.end(), 0.0);
    for (std::size_t iters : {1u, 5u, 20u}) {
        BFrame out = richardson_lucy(obs, psf, iters);
        const double flux_out = std::accumulate(out.data.begin(), out.data.end(), 0.0);
        CHECK(flux_out == doctest::Approx(flux_in).epsilon(1e-9));
        for (double v : out.data) CHECK(v >= 0.0);
    }
}

TEST_CASE("zero iterations are rejected") {
    BFrame obs = column({0.1, 0.2, 0.3, 0.2, 0.1});
    CHECK_THROWS_AS(richardson_lucy(obs, three_tap(), 0), InvariantViolation);
}

TEST_CASE("objective dimension mismatch throws") {
    BFrame a(8, 4, 1.0, 0.5);
    BFrame b(8, 5, 1.0, 0.5);
    CHECK_THROWS_AS(rl_poisson_objective(a, b, three_tap()), DimMismatch);
}

} // TEST_SUITE
