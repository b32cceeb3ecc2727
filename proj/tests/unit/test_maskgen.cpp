#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "octenh/maskgen.hpp"
#include "octenh/rng.hpp"
#include "octenh/simulate.hpp"

using namespace octenh;

namespace {

BFrame random_frame(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    BFrame f(rows, cols, 3.5);
    Rng rng(seed);
    for (double& v : f.data) v = rng.uniform01();
    return f;
}

// straight-line bilateral with the same boundary rules (replicate rows,
// circular cols), kept deliberately naive
BFrame bilateral_bruteforce(const BFrame& f, const BilateralParams& p) {
    const std::ptrdiff_t R = static_cast<std::ptrdiff_t>(f.rows());
    const std::ptrdiff_t C = static_cast<std::ptrdiff_t>(f.cols());
    const std::ptrdiff_t rad = static_cast<std::ptrdiff_t>(p.radius);
    BFrame out(f.rows(), f.cols(), f.pitch_z_um);
    for (std::ptrdiff_t i = 0; i < R; ++i)
        for (std::ptrdiff_t j = 0; j < C; ++j) {
            double num = 0.0, den = 0.0;
            const double fc = f.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            for (std::ptrdiff_t di = -rad; di <= rad; ++di)
                for (std::ptrdiff_t dj = -rad; dj <= rad; ++dj) {
                    std::ptrdiff_t si = i + di;
                    if (si < 0) si = 0;
                    if (si >= R) si = R - 1;
                    std::ptrdiff_t sj = ((j + dj) % C + C) % C;
                    const double v = f.at(static_cast<std::size_t>(si), static_cast<std::size_t>(sj));
                    const double w =
                        std::exp(-0.5 * static_cast<double>(di * di + dj * dj) /
                                 (p.sigma_spatial * p.sigma_spatial)) *
                        std::exp(-0.5 * (v - fc) * (v - fc) / (p.sigma_range * p.sigma_range));
                    num += w * v;
                    den += w;
                }
            out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = num / den;
        }
    return out;
}

// clean step phantom: 0 above `surface`, `amp` at and below it
BFrame step_frame(std::size_t rows, std::size_t cols, std::size_t surface, double amp) {
    BFrame f(rows, cols, 3.5);
    for (std::size_t r = surface; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) f.at(r, c) = amp;
    return f;
}

} // namespace

TEST_SUITE("maskgen") {

TEST_CASE("bilateral filter keeps a constant frame constant") {
    BFrame f(16, 12, 3.5, 0.37);
    BilateralParams p;
    BFrame g = bilateral_filter(f, p);
    for (double v : g.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-13));
}

TEST_CASE("bilateral filter matches a brute-force evaluation") {
    BFrame f = random_frame(11, 9, 404);
    BilateralParams p;
    p.sigma_spatial = 1.5;
    p.sigma_range = 0.25;
    p.radius = 3;
    BFrame a = bilateral_filter(f, p);
    BFrame b = bilateral_bruteforce(f, p);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) < 1e-12);
}

TEST_CASE("huge range sigma degenerates to a plain gaussian smoother") {
    BFrame f = random_frame(10, 10, 77);
    BilateralParams p;
    p.sigma_spatial = 2.0;
    p.sigma_range = 1e9;
    p.radius = 5;
    BFrame a = bilateral_filter(f, p);
    // gaussian-only oracle
    const std::ptrdiff_t R = 10, C = 10, rad = 5;
    for (std::ptrdiff_t i = 0; i < R; ++i)
        for (std::ptrdiff_t j = 0; j < C; ++j) {
            double num = 0.0, den = 0.0;
            for (std::ptrdiff_t di = -rad; di <= rad; ++di)
                for (std::ptrdiff_t dj = -rad; dj <= rad; ++dj) {
                    std::ptrdiff_t si = std::min<std::ptrdiff_t>(std::max<std::ptrdiff_t>(i + di, 0), R - 1);
                    std::ptrdiff_t sj = ((j + dj) % C + C) % C;
                    double w = std::exp(-0.5 * static_cast<double>(di * di + dj * dj) / 4.0);
                    num += w * f.at(static_cast<std::size_t>(si), static_cast<std::size_t>(sj));
                    den += w;
                }
            CHECK(std::abs(a.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) -
                           num / den) < 1e-9);
        }
}

TEST_CASE("bilateral parameter validation") {
    BFrame f(8, 8, 1.0, 0.5);
    BilateralParams p;
    p.sigma_spatial = 0.0;
    CHECK_THROWS_AS(bilateral_filter(f, p), InvariantViolation);
    p = BilateralParams{};
    p.radius = 2; // < ceil(2 * 3.0)
    CHECK_THROWS_AS(bilateral_filter(f, p), InvariantViolation);
    p = BilateralParams{};
    p.sigma_range = -0.1;
    CHECK_THROWS_AS(bilateral_filter(f, p), InvariantViolation);
}

TEST_CASE("axial gradient of a known ramp") {
    BFrame f(4, 2, 1.0);
    // column 0: 0, 1, 3, 2 -> grads 1, 2, 1, then copy row: 1
    f.at(0, 0) = 0;
    f.at(1, 0) = 1;
    f.at(2, 0) = 3;
    f.at(3, 0) = 2;
    BFrame g = axial_gradient(f);
    CHECK(g.at(0, 0) == 1.0);
    CHECK(g.at(1, 0) == 2.0);
    CHECK(g.at(2, 0) == 1.0);
    CHECK(g.at(3, 0) == 1.0); // last row copies the previous one
    CHECK(g.at(3, 1) == 0.0);
}

TEST_CASE("clean step is detected one row above the first tissue row") {
    const std::size_t surface = 20;
    BFrame f = step_frame(48, 24, surface, 0.6);
    BilateralParams p;
    Mask m = generate_mask(f, p, 3.0);
    m.validate();
    for (std::size_t c = 0; c < m.cols; ++c) {
        // the gradient crossing sits on the free-space side of the edge
        CHECK(m.surface_rows[c] == surface - 1);
        CHECK(m.at(surface - 2, c) == 0);
        CHECK(m.at(surface, c) == 1);
    }
    CHECK(m.missing_cols.empty());
}

TEST_CASE("speckled phantom surfaces are recovered within one pixel") {
    PhantomSpec spec;
    spec.rows = 64;
    spec.cols = 32;
    spec.free_space_rows = 18;
    spec.surface_wave_amp_px = 3.0;
    spec.surface_wave_period_cols = 16.0;
    spec.layers = {{0, 0.55}};
    spec.speckle_sigma = 0.4;
    spec.noise_floor_sigma = 0.005;
    spec.seed = 99;
    PhantomResult ph = make_phantom(spec);
    Mask m = generate_mask(ph.gt, BilateralParams{}, 3.0);
    for (std::size_t c = 0; c < m.cols; ++c) {
        const double diff = static_cast<double>(m.surface_rows[c]) -
                            static_cast<double>(ph.surface_rows[c]);
        CHECK(std::abs(diff) <= 1.0);
    }
}

TEST_CASE("frames without a surface raise NoSurfaceFound") {
    BFrame flat(32, 16, 3.5, 0.0);
    CHECK_THROWS_AS(generate_mask(flat, BilateralParams{}, 3.0), NoSurfaceFound);
    BFrame constant(32, 16, 3.5, 0.8); // no gradient anywhere either
    CHECK_THROWS_AS(generate_mask(constant, BilateralParams{}, 3.0), NoSurfaceFound);
}

TEST_CASE("tau must be positive") {
    BFrame f = step_frame(32, 8, 12, 0.5);
    CHECK_THROWS_AS(generate_mask(f, BilateralParams{}, 0.0), InvariantViolation);
    CHECK_THROWS_AS(generate_mask(f, BilateralParams{}, -3.0), InvariantViolation);
}

TEST_CASE("mask generation is exactly lateral-shift invariant") {
    PhantomSpec spec;
    spec.rows = 32;
    spec.cols = 16;
    spec.free_space_rows = 10;
    spec.surface_wave_amp_px = 2.0;
    spec.surface_wave_period_cols = 8.0;
    spec.layers = {{0, 0.6}};
    spec.speckle_sigma = 0.3;
    spec.seed = 5;
    BFrame f = make_phantom(spec).gt;
    Mask base = generate_mask(f, BilateralParams{}, 3.0);
    for (std::size_t dx : {1u, 5u, 15u}) {
        BFrame shifted = shift(f, ShiftTransform{0, dx});
        Mask ms = generate_mask(shifted, BilateralParams{}, 3.0);
        for (std::size_t c = 0; c < base.cols; ++c)
            CHECK(ms.surface_rows[(c + dx) % base.cols] == base.surface_rows[c]);
    }
}

TEST_CASE("foreground and background partition the frame") {
    BFrame f = random_frame(24, 12, 31);
    Mask m;
    m.rows = 24;
    m.cols = 12;
    m.values.assign(24 * 12, 0);
    m.surface_rows.assign(12, 0);
    Rng rng(8);
    for (std::size_t c = 0; c < 12; ++c) {
        m.surface_rows[c] = rng.uniform_index(24);
        for (std::size_t r = m.surface_rows[c]; r < 24; ++r) m.at(r, c) = 1;
    }
    m.validate();
    BFrame fg = mask_apply(f, m, true);
    BFrame bg = mask_apply(f, m, false);
    for (std::size_t i = 0; i < f.size(); ++i) {
        CHECK(fg.data[i] + bg.data[i] == f.data[i]);
        CHECK((fg.data[i] == 0.0 || bg.data[i] == 0.0));
    }
}

TEST_CASE("mask_apply rejects mismatched dims") {
    BFrame f = random_frame(8, 8, 1);
    Mask m;
    m.rows = 8;
    m.cols = 4;
    m.values.assign(32, 1);
    m.surface_rows.assign(4, 0);
    CHECK_THROWS_AS(mask_apply(f, m, true), DimMismatch);
}

TEST_CASE("mask pgm round trip preserves surfaces") {
    BFrame f = step_frame(32, 10, 9, 0.7);
    Mask m = generate_mask(f, BilateralParams{}, 3.0);
    const auto path = std::filesystem::temp_directory_path() / "octenh_mask_rt.pgm";
    write_mask_pgm(m, path);
    Mask r = read_mask_pgm(path);
    CHECK(r.rows == m.rows);
    CHECK(r.cols == m.cols);
    CHECK(r.values == m.values);
    CHECK(r.surface_rows == m.surface_rows);
    r.validate();
    std::filesystem::remove(path);
}

TEST_CASE("invalid mask layouts fail validation") {
    Mask m;
    m.rows = 4;
    m.cols = 1;
    m.values = {0, 1, 0, 1}; // not a single transition
    m.surface_rows = {1};
    CHECK_THROWS_AS(m.validate(), InvariantViolation);
    m.values = {0, 2, 1, 1};
    CHECK_THROWS_AS(m.validate(), InvariantViolation);
}

} // TEST_SUITE
