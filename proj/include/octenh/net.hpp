#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "octenh/errors.hpp"
#include "octenh/rng.hpp"
#include "octenh/tensor.hpp"

namespace octenh {

// Layer vocabulary of the residual encoder-decoder. Every layer reads the
// previous activation; concat/add/head layers additionally read an earlier
// activation through `skip_from` (index into the activation list, where 0 is
// the network input and i+1 is the output of layer i).
enum class LayerKind {
    Conv3x3,            // circular padding, stride 1, bias
    LeakyRelu,          // slope alpha on the negative side (alpha=0 gives plain relu)
    Down2,              // 2x2 mean pool
    Up2,                // 2x nearest-neighbour upsample
    SkipConcat,         // channel concat [current, skip]
    ResidualAdd,        // current + skip, same shape
    SoftplusResidualHead // y = softplus(softplus^-1(skip) + current), skip is the input frame
};

struct LayerSpec {
    LayerKind kind = LayerKind::Conv3x3;
    std::size_t in_ch = 0, out_ch = 0;
    double alpha = 0.0;
    std::ptrdiff_t skip_from = -1;
};

inline std::size_t conv3x3_param_count(std::size_t in_ch, std::size_t out_ch) {
    return 9 * in_ch * out_ch + out_ch;
}

template <class T>
struct Workspace {
    std::vector<Tensor<T>> acts; // acts[0] = input, acts[i+1] = layer i output
};

template <class T>
struct GradStore {
    std::vector<T> g;
    void reset(std::size_t n) { g.assign(n, T(0)); }
    void zero() { std::fill(g.begin(), g.end(), T(0)); }
};

namespace detail {

inline std::size_t wrap_idx(std::ptrdiff_t i, std::size_t n) {
    std::ptrdiff_t m = i % static_cast<std::ptrdiff_t>(n);
    if (m < 0) m += static_cast<std::ptrdiff_t>(n);
    return static_cast<std::size_t>(m);
}

// --- conv3x3, circular padding -------------------------------------------
// The column loop is split into the two wrap columns plus a contiguous
// interior run so the compiler can vectorise the hot path.

template <class T>
void conv3x3_forward(const Tensor<T>& in, Tensor<T>& out, const T* p,
                     std::size_t in_ch, std::size_t out_ch) {
    const std::size_t R = in.rows, C = in.cols;
    out.assign_dims(out_ch, R, C);
    const T* bias = p + 9 * in_ch * out_ch;
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        T* pl = out.plane(oc);
        std::fill(pl, pl + out.plane_size(), bias[oc]);
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
            const T* wk = p + (oc * in_ch + ic) * 9;
            for (std::size_t r = 0; r < R; ++r) {
                T* orow = out.row(oc, r);
                for (int dr = -1; dr <= 1; ++dr) {
                    const T* srow = in.row(ic, wrap_idx(static_cast<std::ptrdiff_t>(r) + dr, R));
                    for (int dc = -1; dc <= 1; ++dc) {
                        const T w = wk[(dr + 1) * 3 + (dc + 1)];
                        orow[0] += w * srow[wrap_idx(dc, C)];
                        if (C > 1) orow[C - 1] += w * srow[wrap_idx(static_cast<std::ptrdiff_t>(C) - 1 + dc, C)];
                        const T* s = srow + dc;
                        for (std::size_t c = 1; c + 1 < C; ++c) orow[c] += w * s[c];
                    }
                }
            }
        }
    }
}

template <class T>
void conv3x3_backward(const Tensor<T>& in, const Tensor<T>& g, const T* pw, T* dp,
                      Tensor<T>* din, std::size_t in_ch, std::size_t out_ch) {
    const std::size_t R = in.rows, C = in.cols;
    T* dbias = dp + 9 * in_ch * out_ch;
    // weight and bias gradients
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        T bacc = T(0);
        const T* gpl = g.plane(oc);
        for (std::size_t i = 0; i < g.plane_size(); ++i) bacc += gpl[i];
        dbias[oc] += bacc;
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
            T* dwk = dp + (oc * in_ch + ic) * 9;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    T acc = T(0);
                    for (std::size_t r = 0; r < R; ++r) {
                        const T* grow = g.row(oc, r);
                        const T* srow = in.row(ic, wrap_idx(static_cast<std::ptrdiff_t>(r) + dr, R));
                        acc += grow[0] * srow[wrap_idx(dc, C)];
                        if (C > 1) acc += grow[C - 1] * srow[wrap_idx(static_cast<std::ptrdiff_t>(C) - 1 + dc, C)];
                        const T* s = srow + dc;
                        T run = T(0);
                        for (std::size_t c = 1; c + 1 < C; ++c) run += grow[c] * s[c];
                        acc += run;
                    }
                    dwk[(dr + 1) * 3 + (dc + 1)] += acc;
                }
        }
    }
    if (!din) return;
    // input gradient: correlation of g with the kernel
    din->assign_dims(in_ch, R, C);
    for (std::size_t ic = 0; ic < in_ch; ++ic)
        for (std::size_t oc = 0; oc < out_ch; ++oc) {
            const T* wk = pw + (oc * in_ch + ic) * 9;
            for (std::size_t r = 0; r < R; ++r) {
                T* drow = din->row(ic, r);
                for (int dr = -1; dr <= 1; ++dr) {
                    const T* grow = g.row(oc, wrap_idx(static_cast<std::ptrdiff_t>(r) - dr, R));
                    for (int dc = -1; dc <= 1; ++dc) {
                        const T w = wk[(dr + 1) * 3 + (dc + 1)];
                        drow[0] += w * grow[wrap_idx(-dc, C)];
                        if (C > 1) drow[C - 1] += w * grow[wrap_idx(static_cast<std::ptrdiff_t>(C) - 1 - dc, C)];
                        const T* s = grow - dc;
                        for (std::size_t c = 1; c + 1 < C; ++c) drow[c] += w * s[c];
                    }
                }
            }
        }
}

} // namespace detail

template <class T>
class Model {
public:
    std::vector<LayerSpec> layers;
    std::vector<T> params;
    std::vector<std::size_t> param_offset; // per layer, size layers.size()+1
    std::size_t depth = 0, base_channels = 0;
    std::uint64_t seed = 0;

    std::size_t param_count() const { return params.size(); }

    void finalize_offsets() {
        param_offset.assign(layers.size() + 1, 0);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            std::size_t n = 0;
            if (layers[i].kind == LayerKind::Conv3x3)
                n = conv3x3_param_count(layers[i].in_ch, layers[i].out_ch);
            param_offset[i + 1] = param_offset[i] + n;
        }
        params.assign(param_offset.back(), T(0));
    }

    const Tensor<T>& forward(const Tensor<T>& x, Workspace<T>& ws) const {
        if (x.ch != 1) throw DimMismatch("network input must have 1 channel");
        const std::size_t div = std::size_t(1) << depth;
        if (depth > 0 && (x.rows % div != 0 || x.cols % div != 0))
            throw DimNotDivisible("input dims must be divisible by 2^depth (" +
                                  std::to_string(div) + "): got " + std::to_string(x.rows) +
                                  "x" + std::to_string(x.cols));
        ws.acts.resize(layers.size() + 1);
        ws.acts[0] = x;
        for (std::size_t i = 0; i < layers.size(); ++i)
            apply(i, ws.acts[i], skip_act(ws, i), ws.acts[i + 1]);
        return ws.acts.back();
    }

    // Reverse-mode pass. Accumulates parameter gradients into `grads` (callers
    // zero it when starting a fresh accumulation); optionally returns the
    // gradient w.r.t. the network input.
    void backward(const Workspace<T>& ws, const Tensor<T>& upstream, GradStore<T>& grads,
                  Tensor<T>* input_grad = nullptr) const {
        if (grads.g.size() != params.size()) throw DimMismatch("grad store size mismatch");
        if (!upstream.same_dims(ws.acts.back())) throw DimMismatch("upstream dims mismatch");
        std::vector<Tensor<T>> act_grad(ws.acts.size());
        act_grad.back() = upstream;
        for (std::size_t ii = layers.size(); ii-- > 0;) {
            const Tensor<T>& g = act_grad[ii + 1];
            if (g.size() == 0) continue; // no gradient reached this activation
            apply_backward(ii, ws, g, grads, act_grad);
        }
        if (input_grad) {
            if (act_grad[0].size() == 0) act_grad[0].assign_dims(1, ws.acts[0].rows, ws.acts[0].cols);
            *input_grad = std::move(act_grad[0]);
        }
    }

private:
    const Tensor<T>* skip_act(const Workspace<T>& ws, std::size_t i) const {
        if (layers[i].skip_from < 0) return nullptr;
        return &ws.acts[static_cast<std::size_t>(layers[i].skip_from)];
    }

    static void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
        if (dst.size() == 0) {
            dst = src;
            return;
        }
        for (std::size_t i = 0; i < dst.size(); ++i) dst.v[i] += src.v[i];
    }

    void apply(std::size_t i, const Tensor<T>& in, const Tensor<T>* skip, Tensor<T>& out) const {
        const LayerSpec& L = layers[i];
        const T* p = params.data() + param_offset[i];
        switch (L.kind) {
        case LayerKind::Conv3x3:
            detail::conv3x3_forward(in, out, p, L.in_ch, L.out_ch);
            break;
        case LayerKind::LeakyRelu: {
            out.assign_dims(in.ch, in.rows, in.cols);
            const T a = static_cast<T>(L.alpha);
            for (std::size_t k = 0; k < in.size(); ++k)
                out.v[k] = in.v[k] > T(0) ? in.v[k] : a * in.v[k];
            break;
        }
        case LayerKind::Down2: {
            if (in.rows % 2 != 0 || in.cols % 2 != 0) throw DimNotDivisible("pool needs even dims");
            out.assign_dims(in.ch, in.rows / 2, in.cols / 2);
            for (std::size_t c = 0; c < in.ch; ++c)
                for (std::size_t r = 0; r < out.rows; ++r) {
                    const T* r0 = in.row(c, 2 * r);
                    const T* r1 = in.row(c, 2 * r + 1);
                    T* orow = out.row(c, r);
                    for (std::size_t j = 0; j < out.cols; ++j)
                        orow[j] = (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]) * T(0.25);
                }
            break;
        }
        case LayerKind::Up2: {
            out.assign_dims(in.ch, in.rows * 2, in.cols * 2);
            for (std::size_t c = 0; c < in.ch; ++c)
                for (std::size_t r = 0; r < in.rows; ++r) {
                    const T* srow = in.row(c, r);
                    T* o0 = out.row(c, 2 * r);
                    T* o1 = out.row(c, 2 * r + 1);
                    for (std::size_t j = 0; j < in.cols; ++j)
                        o0[2 * j] = o0[2 * j + 1] = o1[2 * j] = o1[2 * j + 1] = srow[j];
                }
            break;
        }
        case LayerKind::SkipConcat: {
            if (!skip || skip->rows != in.rows || skip->cols != in.cols)
                throw DimMismatch("concat skip dims mismatch");
            out.assign_dims(in.ch + skip->ch, in.rows, in.cols);
            std::copy(in.v.begin(), in.v.end(), out.v.begin());
            std::copy(skip->v.begin(), skip->v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(in.size()));
            break;
        }
        case LayerKind::ResidualAdd: {
            if (!skip || !skip->same_dims(in)) throw DimMismatch("residual skip dims mismatch");
            out.assign_dims(in.ch, in.rows, in.cols);
            for (std::size_t k = 0; k < in.size(); ++k) out.v[k] = in.v[k] + skip->v[k];
            break;
        }
        case LayerKind::SoftplusResidualHead: {
            // y = softplus(softplus^-1(x) + d) for x >= 0, evaluated as
            // y = x + log1p(expm1(d)*u/(1+u)) with u = expm1(x); exact identity at d=0.
            if (!skip || !skip->same_dims(in)) throw DimMismatch("head skip dims mismatch");
            if (in.ch != 1) throw DimMismatch("head expects 1 channel");
            out.assign_dims(1, in.rows, in.cols);
            for (std::size_t k = 0; k < in.size(); ++k) {
                const T x = skip->v[k];
                const T d = in.v[k];
                const T u = std::expm1(x);
                const T s = std::expm1(d) * (u / (T(1) + u));
                out.v[k] = x + std::log1p(s);
            }
            break;
        }
        }
    }

    void apply_backward(std::size_t i, const Workspace<T>& ws, const Tensor<T>& g,
                        GradStore<T>& grads, std::vector<Tensor<T>>& act_grad) const {
        const LayerSpec& L = layers[i];
        const Tensor<T>& in = ws.acts[i];
        const Tensor<T>* skip = skip_act(ws, i);
        Tensor<T>& din_slot = act_grad[i];
        switch (L.kind) {
        case LayerKind::Conv3x3: {
            Tensor<T> din;
            detail::conv3x3_backward(in, g, params.data() + param_offset[i],
                                     grads.g.data() + param_offset[i], &din, L.in_ch, L.out_ch);
            accumulate(din_slot, din);
            break;
        }
        case LayerKind::LeakyRelu: {
            Tensor<T> din(in.ch, in.rows, in.cols);
            const T a = static_cast<T>(L.alpha);
            for (std::size_t k = 0; k < in.size(); ++k)
                din.v[k] = g.v[k] * (in.v[k] > T(0) ? T(1) : a);
            accumulate(din_slot, din);
            break;
        }
        case LayerKind::Down2: {
            Tensor<T> din(in.ch, in.rows, in.cols);
            for (std::size_t c = 0; c < in.ch; ++c)
                for (std::size_t r = 0; r < g.rows; ++r) {
                    const T* grow = g.row(c, r);
                    T* r0 = din.row(c, 2 * r);
                    T* r1 = din.row(c, 2 * r + 1);
                    for (std::size_t j = 0; j < g.cols; ++j) {
                        const T q = grow[j] * T(0.25);
                        r0[2 * j] += q;
                        r0[2 * j + 1] += q;
                        r1[2 * j] += q;
                        r1[2 * j + 1] += q;
                    }
                }
            accumulate(din_slot, din);
            break;
        }
        case LayerKind::Up2: {
            Tensor<T> din(in.ch, in.rows, in.cols);
            for (std::size_t c = 0; c < in.ch; ++c)
                for (std::size_t r = 0; r < in.rows; ++r) {
                    const T* g0 = g.row(c, 2 * r);
                    const T* g1 = g.row(c, 2 * r + 1);
                    T* drow = din.row(c, r);
                    for (std::size_t j = 0; j < in.cols; ++j)
                        drow[j] = g0[2 * j] + g0[2 * j + 1] + g1[2 * j] + g1[2 * j + 1];
                }
            accumulate(din_slot, din);
            break;
        }
        case LayerKind::SkipConcat: {
            Tensor<T> din(in.ch, in.rows, in.cols);
            std::copy(g.v.begin(), g.v.begin() + static_cast<std::ptrdiff_t>(in.size()), din.v.begin());
            accumulate(din_slot, din);
            Tensor<T> dskip(skip->ch, skip->rows, skip->cols);
            std::copy(g.v.begin() + static_cast<std::ptrdiff_t>(in.size()), g.v.end(), dskip.v.begin());
            accumulate(act_grad[static_cast<std::size_t>(L.skip_from)], dskip);
            break;
        }
        case LayerKind::ResidualAdd: {
            accumulate(din_slot, g);
            accumulate(act_grad[static_cast<std::size_t>(L.skip_from)], g);
            break;
        }
        case LayerKind::SoftplusResidualHead: {
            Tensor<T> dd(1, in.rows, in.cols);
            Tensor<T> dx(1, in.rows, in.cols);
            for (std::size_t k = 0; k < in.size(); ++k) {
                const T x = skip->v[k];
                const T d = in.v[k];
                const T u = std::expm1(x);
                const T f = u / (T(1) + u);
                const T s = std::expm1(d) * f;
                const T inv = T(1) / (T(1) + s);
                dd.v[k] = g.v[k] * std::exp(d) * f * inv;
                dx.v[k] = g.v[k] * (T(1) + std::expm1(d) / ((T(1) + u) * (T(1) + s)));
            }
            accumulate(din_slot, dd);
            accumulate(act_grad[static_cast<std::size_t>(L.skip_from)], dx);
            break;
        }
        }
    }
};

// Builds the residual encoder-decoder: stem conv, `depth` encoder levels
// (residual block + mean-pool + channel doubling), residual bottleneck,
// mirrored decoder with skip concats, and a zero-initialised softplus
// residual head so the fresh model is exactly the identity.
template <class T>
Model<T> build_model(std::size_t depth, std::size_t base_channels, std::uint64_t seed) {
    if (depth < 1 || depth > 4) throw BadConfig("depth must be in [1,4]");
    if (base_channels < 4 || base_channels > 64) throw BadConfig("base_channels must be in [4,64]");

    Model<T> m;
    m.depth = depth;
    m.base_channels = base_channels;
    m.seed = seed;

    auto act_index = [&]() { return static_cast<std::ptrdiff_t>(m.layers.size()); }; // index of NEXT output
    auto conv = [&](std::size_t ci, std::size_t co) {
        m.layers.push_back({LayerKind::Conv3x3, ci, co, 0.0, -1});
    };
    auto lrelu = [&](std::size_t c) { m.layers.push_back({LayerKind::LeakyRelu, c, c, 0.1, -1}); };

    auto res_block = [&](std::size_t c) {
        std::ptrdiff_t entry = act_index(); // activation feeding the block
        conv(c, c);
        lrelu(c);
        conv(c, c);
        m.layers.push_back({LayerKind::ResidualAdd, c, c, 0.0, entry});
        lrelu(c);
        return act_index(); // activation index of block output
    };

    conv(1, base_channels);
    lrelu(base_channels);

    std::vector<std::ptrdiff_t> enc_out(depth);
    std::size_t ch = base_channels;
    for (std::size_t d = 0; d < depth; ++d) {
        enc_out[d] = res_block(ch);
        m.layers.push_back({LayerKind::Down2, ch, ch, 0.0, -1});
        conv(ch, ch * 2);
        lrelu(ch * 2);
        ch *= 2;
    }
    res_block(ch);
    for (std::size_t d = depth; d-- > 0;) {
        m.layers.push_back({LayerKind::Up2, ch, ch, 0.0, -1});
        conv(ch, ch / 2);
        ch /= 2;
        lrelu(ch);
        m.layers.push_back({LayerKind::SkipConcat, ch, 2 * ch, 0.0, enc_out[d]});
        conv(2 * ch, ch);
        lrelu(ch);
        std::ptrdiff_t u = act_index();
        conv(ch, ch);
        m.layers.push_back({LayerKind::ResidualAdd, ch, ch, 0.0, u});
        lrelu(ch);
    }
    conv(ch, 1); // head conv stays zero-initialised
    m.layers.push_back({LayerKind::SoftplusResidualHead, 1, 1, 0.0, 0});

    m.finalize_offsets();

    // He-normal weights drawn in double so float and double models share the
    // same underlying values; biases and the head conv stay zero.
    Rng rng(seed);
    const std::size_t head_conv = m.layers.size() - 2;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& L = m.layers[i];
        if (L.kind != LayerKind::Conv3x3 || i == head_conv) continue;
        const double sd = std::sqrt(2.0 / (9.0 * static_cast<double>(L.in_ch)));
        T* w = m.params.data() + m.param_offset[i];
        for (std::size_t k = 0; k < 9 * L.in_ch * L.out_ch; ++k)
            w[k] = static_cast<T>(rng.gaussian() * sd);
    }
    return m;
}

inline std::size_t model_param_count(std::size_t depth, std::size_t base_channels) {
    std::size_t total = conv3x3_param_count(1, base_channels);
    std::size_t ch = base_channels;
    for (std::size_t d = 0; d < depth; ++d) {
        total += 2 * conv3x3_param_count(ch, ch);
        total += conv3x3_param_count(ch, 2 * ch);
        ch *= 2;
    }
    total += 2 * conv3x3_param_count(ch, ch);
    for (std::size_t d = 0; d < depth; ++d) {
        total += conv3x3_param_count(ch, ch / 2);
        ch /= 2;
        total += conv3x3_param_count(2 * ch, ch);
        total += conv3x3_param_count(ch, ch);
    }
    total += conv3x3_param_count(ch, 1);
    return total;
}

// ---------------------------------------------------------------------------
// Adam. Moments are kept in double regardless of T so a float training run
// survives checkpoint round trips bit-exactly.
template <class T>
struct AdamState {
    double lr = 5e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t t = 0;
    std::vector<double> m, v;

    void reset(std::size_t n) {
        t = 0;
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

template <class T>
void adam_step(Model<T>& model, const GradStore<T>& grads, AdamState<T>& st) {
    const std::size_t n = model.params.size();
    if (grads.g.size() != n) throw DimMismatch("gradient/parameter size mismatch");
    if (st.m.empty()) st.reset(n);
    else if (st.m.size() != n) throw DimMismatch("optimizer state size mismatch");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(static_cast<double>(grads.g[i])))
            throw NonFiniteGradient("non-finite gradient at parameter " + std::to_string(i));
    st.t += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(grads.g[i]);
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        model.params[i] = static_cast<T>(static_cast<double>(model.params[i]) -
                                         st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
}

// ---------------------------------------------------------------------------
// Checkpoint: precision-independent snapshot of a model (+ optional Adam
// state). Parameters are held in double; float models round-trip losslessly.
struct Checkpoint {
    std::uint32_t version = 1;
    std::size_t depth = 0, base_channels = 0;
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::string config_hash;
    std::vector<double> params;
    bool has_adam = false;
    double adam_lr = 5e-4;
    std::uint64_t adam_t = 0;
    std::vector<double> adam_m, adam_v;

    template <class T>
    Model<T> to_model() const {
        Model<T> m = build_model<T>(depth, base_channels, seed);
        if (params.size() != m.param_count()) throw BadCheckpoint("parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) m.params[i] = static_cast<T>(params[i]);
        return m;
    }

    template <class T>
    void restore_adam(AdamState<T>& st) const {
        if (!has_adam) throw BadCheckpoint("checkpoint has no optimizer state");
        st.lr = adam_lr;
        st.t = adam_t;
        st.m = adam_m;
        st.v = adam_v;
    }

    template <class T>
    static Checkpoint capture(const Model<T>& m, const AdamState<T>* adam, std::uint64_t epoch,
                              std::string config_hash) {
        Checkpoint c;
        c.depth = m.depth;
        c.base_channels = m.base_channels;
        c.seed = m.seed;
        c.epoch = epoch;
        c.config_hash = std::move(config_hash);
        c.params.resize(m.param_count());
        for (std::size_t i = 0; i < c.params.size(); ++i)
            c.params[i] = static_cast<double>(m.params[i]);
        if (adam) {
            c.has_adam = true;
            c.adam_lr = adam->lr;
            c.adam_t = adam->t;
            c.adam_m = adam->m;
            c.adam_v = adam->v;
        }
        return c;
    }
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace octenh
