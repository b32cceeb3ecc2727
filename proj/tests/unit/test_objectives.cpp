#include <doctest.h>

#include <cmath>
#include <vector>

#include "octenh/net.hpp"
#include "octenh/objectives.hpp"
#include "octenh/rng.hpp"
#include "octenh/tensor.hpp"

using namespace octenh;

namespace {

Tensor<double> random_input(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Tensor<double> t(1, rows, cols);
    Rng rng(seed);
    for (double& v : t.v) v = 0.02 + 0.9 * rng.uniform01();
    return t;
}

Model<double> perturbed_model(std::uint64_t seed) {
    auto m = build_model<double>(1, 4, seed);
    Rng rng(seed + 1);
    for (double& p : m.params) p += 0.05 * (2.0 * rng.uniform01() - 1.0);
    return m;
}

Psf delta_psf() {
    Psf p;
    p.taps = {1.0};
    p.center_index = 0;
    return p;
}

Psf three_tap() {
    Psf p;
    p.taps = {0.2, 0.6, 0.2};
    p.center_index = 1;
    return p;
}

// tissue below row 2, free space above: the shape detected masks take
Tensor<double> band_mask(std::size_t rows, std::size_t cols, std::size_t surface) {
    Tensor<double> m(1, rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m.at(0, r, c) = r >= surface ? 1.0 : 0.0;
    return m;
}

// reference circular axial convolution, written out directly
Tensor<double> ref_degrade(const Tensor<double>& in, const Psf& psf) {
    Tensor<double> out(1, in.rows, in.cols);
    for (std::size_t r = 0; r < in.rows; ++r)
        for (std::size_t c = 0; c < in.cols; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < psf.taps.size(); ++j) {
                const std::ptrdiff_t off =
                    static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(psf.center_index);
                std::ptrdiff_t src = static_cast<std::ptrdiff_t>(r) - off;
                src %= static_cast<std::ptrdiff_t>(in.rows);
                if (src < 0) src += static_cast<std::ptrdiff_t>(in.rows);
                acc += psf.taps[j] * in.at(0, static_cast<std::size_t>(src), c);
            }
            out.at(0, r, c) = acc;
        }
    return out;
}

Tensor<double> ref_shift(const Tensor<double>& in, const ShiftTransform& t) {
    Tensor<double> out(1, in.rows, in.cols);
    for (std::size_t r = 0; r < in.rows; ++r)
        for (std::size_t c = 0; c < in.cols; ++c)
            out.at(0, (r + t.dz) % in.rows, (c + t.dx) % in.cols) = in.at(0, r, c);
    return out;
}

bool fd_close(double fd, double an, double rtol) {
    return std::abs(fd - an) < 1e-9 + rtol * std::max(std::abs(fd), std::abs(an));
}

} // namespace

TEST_SUITE("objectives") {

TEST_CASE("weight validation") {
    LossWeights all_zero{0.0, 0.0, 0.0};
    CHECK_THROWS_AS(all_zero.validate(), BadConfig);
    LossWeights negative{-1.0, 1.0, 0.0};
    CHECK_THROWS_AS(negative.validate(), BadConfig);
    LossWeights nan_w{1.0, std::nan(""), 0.0};
    CHECK_THROWS_AS(nan_w.validate(), BadConfig);
    LossWeights mc_only{1.0, 0.0, 0.0};
    CHECK_NOTHROW(mc_only.validate());
}

TEST_CASE("trivial configurations cost exactly zero") {
    auto identity = build_model<double>(2, 4, 5); // fresh model = identity map
    Tensor<double> x = random_input(8, 8, 6);
    Tensor<double> ones(1, 8, 8, 1.0);
    const Psf delta = delta_psf();

    auto mc = mc_loss(x, identity, delta, ones);
    CHECK(mc.value == 0.0);
    for (double g : mc.grads.g) CHECK(g == 0.0);

    ShiftBatch shifts;
    shifts.shifts = {{3, 2}, {0, 0}, {7, 5}};
    auto ei = ei_loss(x, identity, delta, shifts);
    CHECK(ei.value == 0.0);
    for (double g : ei.grads.g) CHECK(g == 0.0);

    // all-ones mask zeroes the free-space term for any model
    auto trained = perturbed_model(7);
    auto fs = fs_loss(x, trained, ones);
    CHECK(fs.value == 0.0);

    auto total = total_loss(x, identity, delta, &ones, &shifts, LossWeights{1.0, 1.0, 1.0});
    CHECK(total.value == 0.0);
    CHECK(total.l1 == 0.0);
    CHECK(total.l2 == 0.0);
    CHECK(total.l3 == 0.0);

    auto sup = supervised_loss(x, identity, x);
    CHECK(sup.value == 0.0);
}

TEST_CASE("loss values match reference formulas") {
    auto m = perturbed_model(11);
    Tensor<double> x = random_input(8, 8, 12);
    Tensor<double> mask = band_mask(8, 8, 3);
    const Psf psf = three_tap();
    const double P = static_cast<double>(x.size());

    Workspace<double> ws;
    Tensor<double> y = m.forward(x, ws);

    // measurement consistency
    {
        Tensor<double> hy = ref_degrade(y, psf);
        double acc = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double r = (x.v[k] - hy.v[k]) * mask.v[k];
            acc += r * r;
        }
        CHECK(mc_loss(x, m, psf, mask).value == doctest::Approx(acc / P).epsilon(1e-13));
    }

    // free space
    {
        double acc = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double q = y.v[k] * (1.0 - mask.v[k]);
            acc += q * q;
        }
        CHECK(fs_loss(x, m, mask).value == doctest::Approx(acc / P).epsilon(1e-13));
    }

    // equivariance, gradients flowing through both network evaluations
    {
        ShiftBatch shifts;
        shifts.shifts = {{2, 3}, {5, 0}};
        double total = 0.0;
        Workspace<double> ws2;
        for (const auto& t : shifts.shifts) {
            Tensor<double> a = ref_shift(y, t);
            Tensor<double> b = ref_degrade(a, psf);
            Tensor<double> c = m.forward(b, ws2);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) {
                const double e = a.v[k] - c.v[k];
                acc += e * e;
            }
            total += acc / P;
        }
        total /= static_cast<double>(shifts.shifts.size());
        CHECK(ei_loss(x, m, psf, shifts).value == doctest::Approx(total).epsilon(1e-13));
    }

    // supervised
    {
        Tensor<double> target = random_input(8, 8, 13);
        double acc = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double e = y.v[k] - target.v[k];
            acc += e * e;
        }
        CHECK(supervised_loss(x, m, target).value == doctest::Approx(acc / P).epsilon(1e-13));
    }
}

TEST_CASE("total is the weighted sum of its parts") {
    auto m = perturbed_model(21);
    Tensor<double> x = random_input(8, 8, 22);
    Tensor<double> mask = band_mask(8, 8, 2);
    const Psf psf = three_tap();
    ShiftBatch shifts;
    shifts.shifts = {{1, 1}, {6, 4}};
    LossWeights w{0.7, 1.3, 2.1};

    auto total = total_loss(x, m, psf, &mask, &shifts, w);
    auto mc = mc_loss(x, m, psf, mask);
    auto ei = ei_loss(x, m, psf, shifts);
    auto fs = fs_loss(x, m, mask);

    CHECK(total.l1 == doctest::Approx(mc.value).epsilon(1e-14));
    CHECK(total.l2 == doctest::Approx(ei.value).epsilon(1e-14));
    CHECK(total.l3 == doctest::Approx(fs.value).epsilon(1e-14));
    CHECK(total.value ==
          doctest::Approx(w.lambda1 * mc.value + w.lambda2 * ei.value + w.lambda3 * fs.value)
              .epsilon(1e-14));

    for (std::size_t i = 0; i < total.grads.g.size(); ++i) {
        const double want =
            w.lambda1 * mc.grads.g[i] + w.lambda2 * ei.grads.g[i] + w.lambda3 * fs.grads.g[i];
        CHECK(std::abs(total.grads.g[i] - want) <
              1e-14 + 1e-10 * std::max(std::abs(want), std::abs(total.grads.g[i])));
    }
}

TEST_CASE("zero-weight terms are skipped along with their preconditions") {
    auto m = perturbed_model(31);
    Tensor<double> x = random_input(8, 8, 32);
    Tensor<double> mask = band_mask(8, 8, 2);
    const Psf psf = three_tap();
    ShiftBatch shifts;
    shifts.shifts = {{2, 2}};

    // lambda2 = 0: no shift batch required
    auto mc_only = total_loss(x, m, psf, &mask, nullptr, LossWeights{1.0, 0.0, 0.0});
    CHECK(mc_only.l2 == 0.0);
    CHECK(mc_only.l3 == 0.0);
    CHECK(mc_only.value == doctest::Approx(mc_only.l1).epsilon(1e-15));

    // lambda1 = lambda3 = 0: no mask required
    const Tensor<double>* no_mask = nullptr;
    CHECK_NOTHROW(total_loss(x, m, psf, no_mask, &shifts, LossWeights{0.0, 1.0, 0.0}));

    // missing preconditions for active terms
    CHECK_THROWS_AS(total_loss(x, m, psf, no_mask, &shifts, LossWeights{1.0, 1.0, 0.0}),
                    BadConfig);
    CHECK_THROWS_AS(total_loss(x, m, psf, &mask, nullptr, LossWeights{1.0, 1.0, 0.0}), BadConfig);
    CHECK_THROWS_AS(total_loss(x, m, psf, no_mask, &shifts, LossWeights{0.0, 1.0, 1.0}),
                    BadConfig);

    ShiftBatch empty;
    CHECK_THROWS_AS(ei_loss(x, m, psf, empty), BadConfig);
}

TEST_CASE("input validation") {
    auto m = perturbed_model(41);
    Tensor<double> two_ch(2, 8, 8, 0.5);
    Tensor<double> mask = band_mask(8, 8, 2);
    CHECK_THROWS_AS(mc_loss(two_ch, m, three_tap(), mask), DimMismatch);
    Tensor<double> x = random_input(8, 8, 42);
    Tensor<double> small_mask = band_mask(8, 6, 2);
    CHECK_THROWS_AS(fs_loss(x, m, small_mask), DimMismatch);
    Tensor<double> target(1, 8, 6, 0.0);
    CHECK_THROWS_AS(supervised_loss(x, m, target), DimMismatch);
}

TEST_CASE("mask extremes reduce to plain means") {
    auto m = perturbed_model(51);
    Tensor<double> x = random_input(8, 8, 52);
    const Psf psf = three_tap();
    Tensor<double> ones(1, 8, 8, 1.0);
    Tensor<double> zeros(1, 8, 8, 0.0);

    Workspace<double> ws;
    Tensor<double> y = m.forward(x, ws);
    Tensor<double> hy = ref_degrade(y, psf);
    double mse = 0.0, meansq = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mse += (x.v[k] - hy.v[k]) * (x.v[k] - hy.v[k]);
        meansq += y.v[k] * y.v[k];
    }
    mse /= static_cast<double>(x.size());
    meansq /= static_cast<double>(x.size());

    CHECK(mc_loss(x, m, psf, ones).value == doctest::Approx(mse).epsilon(1e-13));
    CHECK(mc_loss(x, m, psf, zeros).value == 0.0);
    CHECK(fs_loss(x, m, zeros).value == doctest::Approx(meansq).epsilon(1e-13));
}

TEST_CASE("duplicated shifts do not change the equivariance value") {
    auto m = perturbed_model(61);
    Tensor<double> x = random_input(8, 8, 62);
    const Psf psf = three_tap();
    ShiftBatch one;
    one.shifts = {{3, 5}};
    ShiftBatch two;
    two.shifts = {{3, 5}, {3, 5}};
    CHECK(ei_loss(x, m, psf, one).value ==
          doctest::Approx(ei_loss(x, m, psf, two).value).epsilon(1e-15));
}

TEST_CASE("shift batches draw within bounds and reproducibly") {
    Rng a(99), b(99);
    ShiftBatch s1 = ShiftBatch::draw(16, 32, 24, a);
    ShiftBatch s2 = ShiftBatch::draw(16, 32, 24, b);
    REQUIRE(s1.shifts.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(s1.shifts[i].dz < 32);
        CHECK(s1.shifts[i].dx < 24);
        CHECK(s1.shifts[i].dz == s2.shifts[i].dz);
        CHECK(s1.shifts[i].dx == s2.shifts[i].dx);
    }
}

TEST_CASE("finite differences validate the combined gradient") {
    auto m = perturbed_model(71);
    Tensor<double> x = random_input(8, 8, 72);
    Tensor<double> mask = band_mask(8, 8, 3);
    const Psf psf = three_tap();
    ShiftBatch shifts;
    shifts.shifts = {{3, 2}, {0, 5}};
    LossWeights w{1.0, 2.0, 5.0};

    auto base = total_loss(x, m, psf, &mask, &shifts, w);
    const double h = 1e-6;
    const std::size_t n = m.param_count();
    for (std::size_t k = 0; k < 30; ++k) {
        const std::size_t idx = (k * 997) % n;
        const double saved = m.params[idx];
        m.params[idx] = saved + h;
        const double lp = total_loss(x, m, psf, &mask, &shifts, w).value;
        m.params[idx] = saved - h;
        const double lm = total_loss(x, m, psf, &mask, &shifts, w).value;
        m.params[idx] = saved;
        CHECK(fd_close((lp - lm) / (2.0 * h), base.grads.g[idx], 1e-5));
    }
}

TEST_CASE("finite differences validate the supervised gradient") {
    auto m = perturbed_model(81);
    Tensor<double> x = random_input(8, 8, 82);
    Tensor<double> target = random_input(8, 8, 83);
    auto base = supervised_loss(x, m, target);
    const double h = 1e-6;
    for (std::size_t k = 0; k < 12; ++k) {
        const std::size_t idx = (k * 499) % m.param_count();
        const double saved = m.params[idx];
        m.params[idx] = saved + h;
        const double lp = supervised_loss(x, m, target).value;
        m.params[idx] = saved - h;
        const double lm = supervised_loss(x, m, target).value;
        m.params[idx] = saved;
        CHECK(fd_close((lp - lm) / (2.0 * h), base.grads.g[idx], 1e-5));
    }
}

} // TEST_SUITE
