#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "octenh/errors.hpp"
#include "octenh/image.hpp"
#include "octenh/simulate.hpp"

namespace octenh {

// Dense CHW tensor used by the network and the losses. T is float for
// training speed, double for the oracle-grade tests.
template <class T>
struct Tensor {
    std::size_t ch = 0, rows = 0, cols = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(std::size_t ch_, std::size_t rows_, std::size_t cols_, T fill = T(0))
        : ch(ch_), rows(rows_), cols(cols_), v(ch_ * rows_ * cols_, fill) {}

    std::size_t size() const { return v.size(); }
    std::size_t plane_size() const { return rows * cols; }

    T* plane(std::size_t c) { return v.data() + c * plane_size(); }
    const T* plane(std::size_t c) const { return v.data() + c * plane_size(); }
    T* row(std::size_t c, std::size_t r) { return plane(c) + r * cols; }
    const T* row(std::size_t c, std::size_t r) const { return plane(c) + r * cols; }
    T& at(std::size_t c, std::size_t r, std::size_t col) { return v[(c * rows + r) * cols + col]; }
    T at(std::size_t c, std::size_t r, std::size_t col) const { return v[(c * rows + r) * cols + col]; }

    void assign_dims(std::size_t ch_, std::size_t rows_, std::size_t cols_) {
        ch = ch_;
        rows = rows_;
        cols = cols_;
        v.assign(ch_ * rows_ * cols_, T(0));
    }
    bool same_dims(const Tensor& o) const { return ch == o.ch && rows == o.rows && cols == o.cols; }
};

template <class T>
Tensor<T> tensor_from_frame(const BFrame& f) {
    Tensor<T> t(1, f.rows(), f.cols());
    for (std::size_t i = 0; i < f.size(); ++i) t.v[i] = static_cast<T>(f.data[i]);
    return t;
}

// clamps the vanishing negative rounding residue of the softplus head
template <class T>
BFrame frame_from_tensor(const Tensor<T>& t, double pitch_z_um) {
    if (t.ch != 1) throw DimMismatch("frame conversion needs a 1-channel tensor");
    BFrame f(t.rows, t.cols, pitch_z_um);
    for (std::size_t i = 0; i < f.size(); ++i)
        f.data[i] = std::max(0.0, static_cast<double>(t.v[i]));
    return f;
}

// circular roll by (dz, dx), per channel
template <class T>
Tensor<T> tensor_shift(const Tensor<T>& in, const ShiftTransform& t) {
    Tensor<T> out(in.ch, in.rows, in.cols);
    for (std::size_t c = 0; c < in.ch; ++c)
        for (std::size_t r = 0; r < in.rows; ++r) {
            const T* src = in.row(c, r);
            T* dst = out.row(c, (r + t.dz) % in.rows);
            if (t.dx == 0)
                std::copy(src, src + in.cols, dst);
            else
                for (std::size_t j = 0; j < in.cols; ++j) dst[(j + t.dx) % in.cols] = src[j];
        }
    return out;
}

template <class T>
Tensor<T> tensor_shift_inverse(const Tensor<T>& in, const ShiftTransform& t) {
    return tensor_shift(in, t.inverse_for(in.rows, in.cols));
}

// axial circular convolution and its adjoint, per channel
template <class T>
Tensor<T> tensor_degrade(const Tensor<T>& in, const Psf& psf, bool adjoint = false) {
    if (psf.support() > in.rows) throw KernelTooLarge("psf support exceeds tensor depth");
    Tensor<T> out(in.ch, in.rows, in.cols);
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(in.rows);
    const std::ptrdiff_t c0 = static_cast<std::ptrdiff_t>(psf.center_index);
    for (std::size_t c = 0; c < in.ch; ++c)
        for (std::ptrdiff_t r = 0; r < rows; ++r) {
            T* orow = out.row(c, static_cast<std::size_t>(r));
            for (std::size_t t = 0; t < psf.support(); ++t) {
                const T w = static_cast<T>(psf.taps[t]);
                if (w == T(0)) continue;
                std::ptrdiff_t off = static_cast<std::ptrdiff_t>(t) - c0;
                std::ptrdiff_t src = adjoint ? r + off : r - off;
                src %= rows;
                if (src < 0) src += rows;
                const T* irow = in.row(c, static_cast<std::size_t>(src));
                for (std::size_t j = 0; j < in.cols; ++j) orow[j] += w * irow[j];
            }
        }
    return out;
}

} // namespace octenh
