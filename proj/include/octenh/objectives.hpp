#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "octenh/errors.hpp"
#include "octenh/net.hpp"
#include "octenh/tensor.hpp"

namespace octenh {

struct LossWeights {
    double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 0.0;

    void validate() const {
        if (!(std::isfinite(lambda1) && std::isfinite(lambda2) && std::isfinite(lambda3)))
            throw BadConfig("loss weights must be finite");
        if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
            throw BadConfig("loss weights must be non-negative");
        if (lambda1 == 0 && lambda2 == 0 && lambda3 == 0)
            throw BadConfig("at least one loss weight must be positive");
    }
};

struct ShiftBatch {
    std::vector<ShiftTransform> shifts;

    static ShiftBatch draw(std::size_t g, std::size_t rows, std::size_t cols, Rng& rng) {
        ShiftBatch b;
        b.shifts.reserve(g);
        for (std::size_t i = 0; i < g; ++i)
            b.shifts.push_back({rng.uniform_index(rows), rng.uniform_index(cols)});
        return b;
    }
};

template <class T>
struct LossResult {
    double value = 0.0;
    GradStore<T> grads;
};

template <class T>
struct TotalLossResult {
    double value = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
    GradStore<T> grads;
};

namespace detail {

template <class T>
void check_loss_inputs(const Tensor<T>& input, const Tensor<T>* mask) {
    if (input.ch != 1) throw DimMismatch("loss input must have 1 channel");
    if (mask && !mask->same_dims(input)) throw DimMismatch("mask dims mismatch");
}

// Measurement consistency: mean over pixels of [(x - H(y)) . M]^2.
// Adds scale * d/dy to dLdy.
template <class T>
double mc_term(const Tensor<T>& x, const Tensor<T>& y, const Psf& psf, const Tensor<T>& mask,
               Tensor<T>& dLdy, double scale) {
    const double P = static_cast<double>(x.size());
    Tensor<T> hy = tensor_degrade(y, psf);
    Tensor<T> r(1, x.rows, x.cols);
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const T rr = (x.v[k] - hy.v[k]) * mask.v[k];
        r.v[k] = rr;
        acc += static_cast<double>(rr) * static_cast<double>(rr);
    }
    // d/d(Hy) = -2 r . M / P, then pull back through H
    const T c = static_cast<T>(-2.0 * scale / P);
    for (std::size_t k = 0; k < r.size(); ++k) r.v[k] = c * r.v[k] * mask.v[k];
    Tensor<T> back = tensor_degrade(r, psf, /*adjoint=*/true);
    for (std::size_t k = 0; k < dLdy.size(); ++k) dLdy.v[k] += back.v[k];
    return acc / P;
}

// Free-space penalty: mean over pixels of [y . (1 - M)]^2.
template <class T>
double fs_term(const Tensor<T>& y, const Tensor<T>& mask, Tensor<T>& dLdy, double scale) {
    const double P = static_cast<double>(y.size());
    double acc = 0.0;
    const T c = static_cast<T>(2.0 * scale / P);
    for (std::size_t k = 0; k < y.size(); ++k) {
        const T inv = T(1) - mask.v[k];
        const T q = y.v[k] * inv;
        acc += static_cast<double>(q) * static_cast<double>(q);
        dLdy.v[k] += c * q * inv;
    }
    return acc / P;
}

// Shift-equivariance term, averaged over the batch of shifts:
//   mean_g mean_pix [ T_g y - net(H(T_g y)) ]^2
// Gradients flow through both occurrences of the network; the second pass's
// parameter gradients land in `grads` (scaled), its input gradient is pulled
// back through H and T_g into dLdy.
template <class T>
double ei_term(const Model<T>& model, const Tensor<T>& y, const Psf& psf,
               const ShiftBatch& batch, Tensor<T>& dLdy, GradStore<T>& grads, double scale) {
    if (batch.shifts.empty()) throw BadConfig("shift batch must be non-empty");
    const double P = static_cast<double>(y.size());
    const double G = static_cast<double>(batch.shifts.size());
    double total = 0.0;
    Workspace<T> ws2;
    for (const ShiftTransform& t : batch.shifts) {
        Tensor<T> a = tensor_shift(y, t);
        Tensor<T> b = tensor_degrade(a, psf);
        const Tensor<T>& c = model.forward(b, ws2);
        Tensor<T> e(1, y.rows, y.cols);
        double acc = 0.0;
        for (std::size_t k = 0; k < e.size(); ++k) {
            e.v[k] = a.v[k] - c.v[k];
            acc += static_cast<double>(e.v[k]) * static_cast<double>(e.v[k]);
        }
        total += acc / P;

        const T cf = static_cast<T>(2.0 * scale / (P * G));
        Tensor<T> de(1, y.rows, y.cols); // d/da direct part and -d/dc
        for (std::size_t k = 0; k < e.size(); ++k) de.v[k] = cf * e.v[k];
        // through the second network evaluation
        Tensor<T> dc(1, y.rows, y.cols);
        for (std::size_t k = 0; k < e.size(); ++k) dc.v[k] = -de.v[k];
        Tensor<T> db;
        model.backward(ws2, dc, grads, &db);
        Tensor<T> da = tensor_degrade(db, psf, /*adjoint=*/true);
        for (std::size_t k = 0; k < da.size(); ++k) da.v[k] += de.v[k];
        Tensor<T> dy = tensor_shift_inverse(da, t);
        for (std::size_t k = 0; k < dLdy.size(); ++k) dLdy.v[k] += dy.v[k];
    }
    return total / G;
}

} // namespace detail

template <class T>
LossResult<T> mc_loss(const Tensor<T>& input, const Model<T>& model, const Psf& psf,
                      const Tensor<T>& mask) {
    detail::check_loss_inputs(input, &mask);
    LossResult<T> out;
    out.grads.reset(model.param_count());
    Workspace<T> ws;
    const Tensor<T>& y = model.forward(input, ws);
    Tensor<T> dLdy(1, input.rows, input.cols);
    out.value = detail::mc_term(input, y, psf, mask, dLdy, 1.0);
    model.backward(ws, dLdy, out.grads);
    return out;
}

template <class T>
LossResult<T> fs_loss(const Tensor<T>& input, const Model<T>& model, const Tensor<T>& mask) {
    detail::check_loss_inputs(input, &mask);
    LossResult<T> out;
    out.grads.reset(model.param_count());
    Workspace<T> ws;
    const Tensor<T>& y = model.forward(input, ws);
    Tensor<T> dLdy(1, input.rows, input.cols);
    out.value = detail::fs_term(y, mask, dLdy, 1.0);
    model.backward(ws, dLdy, out.grads);
    return out;
}

template <class T>
LossResult<T> ei_loss(const Tensor<T>& input, const Model<T>& model, const Psf& psf,
                      const ShiftBatch& shifts) {
    detail::check_loss_inputs<T>(input, nullptr);
    LossResult<T> out;
    out.grads.reset(model.param_count());
    Workspace<T> ws;
    const Tensor<T>& y = model.forward(input, ws);
    Tensor<T> dLdy(1, input.rows, input.cols);
    out.value = detail::ei_term(model, y, psf, shifts, dLdy, out.grads, 1.0);
    model.backward(ws, dLdy, out.grads);
    return out;
}

// Weighted sum sharing a single first forward pass. Terms with zero weight are
// skipped entirely, so their preconditions (mask, shifts) are not exercised.
template <class T>
TotalLossResult<T> total_loss(const Tensor<T>& input, const Model<T>& model, const Psf& psf,
                              const Tensor<T>* mask, const ShiftBatch* shifts,
                              const LossWeights& w) {
    w.validate();
    detail::check_loss_inputs(input, mask);
    TotalLossResult<T> out;
    out.grads.reset(model.param_count());
    Workspace<T> ws;
    const Tensor<T>& y = model.forward(input, ws);
    Tensor<T> dLdy(1, input.rows, input.cols);
    if (w.lambda1 > 0) {
        if (!mask) throw BadConfig("measurement-consistency loss needs a mask");
        out.l1 = detail::mc_term(input, y, psf, *mask, dLdy, w.lambda1);
    }
    if (w.lambda2 > 0) {
        if (!shifts) throw BadConfig("equivariance loss needs a shift batch");
        out.l2 = detail::ei_term(model, y, psf, *shifts, dLdy, out.grads, w.lambda2);
    }
    if (w.lambda3 > 0) {
        if (!mask) throw BadConfig("free-space loss needs a mask");
        out.l3 = detail::fs_term(y, *mask, dLdy, w.lambda3);
    }
    model.backward(ws, dLdy, out.grads);
    out.value = w.lambda1 * out.l1 + w.lambda2 * out.l2 + w.lambda3 * out.l3;
    return out;
}

// Supervised reference: mean squared error against a known target.
template <class T>
LossResult<T> supervised_loss(const Tensor<T>& input, const Model<T>& model,
                              const Tensor<T>& target) {
    if (!target.same_dims(input)) throw DimMismatch("target dims mismatch");
    LossResult<T> out;
    out.grads.reset(model.param_count());
    Workspace<T> ws;
    const Tensor<T>& y = model.forward(input, ws);
    const double P = static_cast<double>(input.size());
    Tensor<T> dLdy(1, input.rows, input.cols);
    double acc = 0.0;
    const T c = static_cast<T>(2.0 / P);
    for (std::size_t k = 0; k < y.size(); ++k) {
        const T e = y.v[k] - target.v[k];
        acc += static_cast<double>(e) * static_cast<double>(e);
        dLdy.v[k] = c * e;
    }
    out.value = acc / P;
    model.backward(ws, dLdy, out.grads);
    return out;
}

} // namespace octenh
