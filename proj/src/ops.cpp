#include "ganlab/ops.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "ganlab/kernels.hpp"

namespace ganlab {

namespace {

void check_finite(const Tensor& t, const char* prim) {
    if (!kern::all_finite(t.data(), t.size()))
        throw NumericError(std::string(prim) +
                           ": non-finite values in output");
}

void check_same_shape(const char* prim, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(prim) + ": operand shapes " +
                         shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " must match");
}

void axpy(real_t* dst, const real_t* src, real_t k, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dst[i] += k * src[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    Tape* tp = active_tape();
    const int ia = tp ? tp->input_node(a) : -1;
    const int ib = tp ? tp->input_node(b) : -1;
    Tensor out = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    const real_t* pa = a.data();
    const real_t* pb = b.data();
    real_t* po = out.mutable_data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    check_finite(out, "add");
    if (ia >= 0 || ib >= 0)
        tp->record(out, [ia, ib, n](Tape& t, const real_t* g) {
            if (real_t* ga = t.grad_accum(ia)) axpy(ga, g, real_t(1), n);
            if (real_t* gb = t.grad_accum(ib)) axpy(gb, g, real_t(1), n);
        });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("subtract", a, b);
    Tape* tp = active_tape();
    const int ia = tp ? tp->input_node(a) : -1;
    const int ib = tp ? tp->input_node(b) : -1;
    Tensor out = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    const real_t* pa = a.data();
    const real_t* pb = b.data();
    real_t* po = out.mutable_data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    check_finite(out, "subtract");
    if (ia >= 0 || ib >= 0)
        tp->record(out, [ia, ib, n](Tape& t, const real_t* g) {
            if (real_t* ga = t.grad_accum(ia)) axpy(ga, g, real_t(1), n);
            if (real_t* gb = t.grad_accum(ib)) axpy(gb, g, real_t(-1), n);
        });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("multiply", a, b);
    Tape* tp = active_tape();
    const int ia = tp ? tp->input_node(a) : -1;
    const int ib = tp ? tp->input_node(b) : -1;
    Tensor out = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    const real_t* pa = a.data();
    const real_t* pb = b.data();
    real_t* po = out.mutable_data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    check_finite(out, "multiply");
    if (ia >= 0 || ib >= 0)
        tp->record(out, [ia, ib, a, b, n](Tape& t, const real_t* g) {
            if (real_t* ga = t.grad_accum(ia)) {
                const real_t* pb2 = b.data();
                for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
            }
            if (real_t* gb = t.grad_accum(ib)) {
                const real_t* pa2 = a.data();
                for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
            }
        });
    return out;
}

Tensor scale(const Tensor& a, real_t k) {
    Tape* tp = active_tape();
    const int ia = tp ? tp->input_node(a) : -1;
    Tensor out = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    const real_t* pa = a.data();
    real_t* po = out.mutable_data();
    for (int64_t i = 0; i < n; ++i) po[i] = k * pa[i];
    check_finite(out, "scalar-scale");
    if (ia >= 0)
        tp->record(out, [ia, k, n](Tape& t, const real_t* g) {
            if (real_t* ga = t.grad_accum(ia)) axpy(ga, g, k, n);
        });
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " +
                         shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tape* tp = active_tape();
    const int ia = tp ? tp->input_node(a) : -1;
    const int ib = tp ? tp->input_node(b) : -1;
    Tensor out = Tensor::zeros({m, n});
    kern::gemm<real_t>(a.data(), b.data(), out.mutable_data(), m, n, k, false);
    check_finite(out, "matmul");
    if (ia >= 0 || ib >= 0)
        tp->record(out, [ia, ib, a, b, m, n, k](Tape& t, const real_t* g) {
            if (real_t* ga = t.grad_accum(ia)) {
                std::vector<real_t> bt(static_cast<size_t>(n) * k);
                kern::transpose(b.data(), bt.data(), k, n);
                kern::gemm<real_t>(g, bt.data(), ga, m, k, n, true);
            }
            if (real_t* gb = t.grad_accum(ib)) {
                std::vector<real_t> at(static_cast<size_t>(k) * m);
                kern::transpose(a.data(), at.data(), m, k);
                kern::gemm<real_t>(at.data(), g, gb, k, n, m, true);
            }
        });
    return out;
}

namespace {

// dim-1 concat geometry shared by the 2-d and 4-d cases: `outer` rows, each
// row being `inner*dim1` contiguous values.
struct SplitGeom {
    int64_t outer, inner, da, db;
};

SplitGeom concat_geom(const char* prim, const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 4))
        throw ShapeError(std::string(prim) + ": ranks must be 2 or 4 and " +
                         "match, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    for (int i = 0; i < a.rank(); ++i)
        if (i != 1 && a.dim(i) != b.dim(i))
            throw ShapeError(std::string(prim) + ": shapes " +
                             shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) +
                             " differ outside dim 1");
    SplitGeom geo;
    geo.outer = a.dim(0);
    geo.inner = 1;
    for (int i = 2; i < a.rank(); ++i) geo.inner *= a.dim(i);
    geo.da = a.dim(1);
    geo.db = b.dim(1);
    return geo;
}

}  // namespace

Tensor concat_dim1(const Tensor& a, const Tensor& b) {
    const SplitGeom geo = concat_geom("channel-concat", a, b);
    Shape os = a.shape();
    os[1] = static_cast<int>(geo.da + geo.db);
    Tape* tp = active_tape();
    const int ia = tp ? tp->input_node(a) : -1;
    const int ib = tp ? tp->input_node(b) : -1;
    Tensor out = Tensor::zeros(os);
    const int64_t ra = geo.da * geo.inner, rb = geo.db * geo.inner;
    for (int64_t o = 0; o < geo.outer; ++o) {
        std::memcpy(out.mutable_data() + o * (ra + rb), a.data() + o * ra,
                    sizeof(real_t) * static_cast<size_t>(ra));
        std::memcpy(out.mutable_data() + o * (ra + rb) + ra, b.data() + o * rb,
                    sizeof(real_t) * static_cast<size_t>(rb));
    }
    check_finite(out, "channel-concat");
    if (ia >= 0 || ib >= 0)
        tp->record(out, [ia, ib, geo, ra, rb](Tape& t, const real_t* g) {
            real_t* ga = t.grad_accum(ia);
            real_t* gb = t.grad_accum(ib);
            for (int64_t o = 0; o < geo.outer; ++o) {
                const real_t* row = g + o * (ra + rb);
                if (ga) axpy(ga + o * ra, row, real_t(1), ra);
                if (gb) axpy(gb + o * rb, row + ra, real_t(1), rb);
            }
        });
    return out;
}

Tensor slice_dim1(const Tensor& x, int from, int count) {
    if (x.rank() != 2 && x.rank() != 4)
        throw ShapeError("slice: rank must be 2 or 4, got " +
                         shape_str(x.shape()));
    if (from < 0 || count <= 0 || from + count > x.dim(1))
        throw ShapeError("slice: range [" + std::to_string(from) + ", " +
                         std::to_string(from + count) + ") out of dim 1 of " +
                         shape_str(x.shape()));
    int64_t inner = 1;
    for (int i = 2; i < x.rank(); ++i) inner *= x.dim(i);
    const int64_t outer = x.dim(0);
    const int64_t rx = static_cast<int64_t>(x.dim(1)) * inner;
    const int64_t ro = static_cast<int64_t>(count) * inner;
    const int64_t off = static_cast<int64_t>(from) * inner;
    Shape os = x.shape();
    os[1] = count;
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(x) : -1;
    Tensor out = Tensor::zeros(os);
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out.mutable_data() + o * ro, x.data() + o * rx + off,
                    sizeof(real_t) * static_cast<size_t>(ro));
    check_finite(out, "slice");
    if (ix >= 0)
        tp->record(out, [ix, outer, rx, ro, off](Tape& t, const real_t* g) {
            if (real_t* gx = t.grad_accum(ix))
                for (int64_t o = 0; o < outer; ++o)
                    axpy(gx + o * rx + off, g + o * ro, real_t(1), ro);
        });
    return out;
}

namespace {

struct ConvDims {
    int batch, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
    int64_t k() const { return static_cast<int64_t>(cin) * kh * kw; }
    int64_t n() const { return static_cast<int64_t>(oh) * ow; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.rank() != 4 || w.rank() != 4)
        throw ShapeError("conv2d: input " + shape_str(x.shape()) +
                         " and kernel " + shape_str(w.shape()) +
                         " must be rank 4 (NCHW)");
    if (x.dim(1) != w.dim(1))
        throw ShapeError("conv2d: input channels of " + shape_str(x.shape()) +
                         " do not match kernel " + shape_str(w.shape()));
    if (stride != 1 && stride != 2)
        throw ShapeError("conv2d: stride must be 1 or 2");
    if (pad < 0) throw ShapeError("conv2d: negative padding");
    ConvDims d;
    d.batch = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = w.dim(0);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    d.stride = stride;
    d.pad = pad;
    if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw)
        throw ShapeError("conv2d: kernel " + shape_str(w.shape()) +
                         " larger than padded input " + shape_str(x.shape()));
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    return d;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride, int pad) {
    const ConvDims d = conv_dims(x, w, stride, pad);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.cout))
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) +
                         " must be (" + std::to_string(d.cout) + ")");
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(x) : -1;
    const int iw = tp ? tp->input_node(w) : -1;
    const int ib = (tp && bias.defined()) ? tp->input_node(bias) : -1;

    const int64_t kk = d.k(), nn = d.n();
    const bool pointwise =
        d.kh == 1 && d.kw == 1 && d.stride == 1 && d.pad == 0;
    Tensor out = Tensor::zeros({d.batch, d.cout, d.oh, d.ow});
    {
        thread_local std::vector<real_t> col;
        if (!pointwise) col.resize(static_cast<size_t>(kk * nn));
        for (int b = 0; b < d.batch; ++b) {
            const real_t* xb =
                x.data() + static_cast<int64_t>(b) * d.cin * d.h * d.w;
            const real_t* src = xb;
            if (!pointwise) {
                kern::im2col(xb, d.cin, d.h, d.w, d.kh, d.kw, d.stride, d.pad,
                             d.oh, d.ow, col.data());
                src = col.data();
            }
            real_t* ob = out.mutable_data() + static_cast<int64_t>(b) * d.cout * nn;
            kern::gemm<real_t>(w.data(), src, ob, d.cout, static_cast<int>(nn),
                               static_cast<int>(kk), false);
            if (bias.defined())
                for (int co = 0; co < d.cout; ++co) {
                    const real_t bv = bias.data()[co];
                    real_t* row = ob + static_cast<int64_t>(co) * nn;
                    for (int64_t i = 0; i < nn; ++i) row[i] += bv;
                }
        }
    }
    check_finite(out, "conv2d");

    if (ix >= 0 || iw >= 0 || ib >= 0)
        tp->record(out, [ix, iw, ib, x, w, d, kk, nn,
                         pointwise](Tape& t, const real_t* g) {
            real_t* gx = t.grad_accum(ix);
            real_t* gw = t.grad_accum(iw);
            real_t* gb = t.grad_accum(ib);
            std::vector<real_t> col, colt, wt, dcol;
            if (gw && !pointwise) col.resize(static_cast<size_t>(kk * nn));
            if (gw) colt.resize(static_cast<size_t>(kk * nn));
            if (gx) {
                wt.resize(static_cast<size_t>(kk) * d.cout);
                kern::transpose(w.data(), wt.data(), d.cout,
                                static_cast<int>(kk));
                if (!pointwise) dcol.resize(static_cast<size_t>(kk * nn));
            }
            for (int b = 0; b < d.batch; ++b) {
                const real_t* gout = g + static_cast<int64_t>(b) * d.cout * nn;
                const real_t* xb =
                    x.data() + static_cast<int64_t>(b) * d.cin * d.h * d.w;
                if (gw) {
                    const real_t* src = xb;
                    if (!pointwise) {
                        kern::im2col(xb, d.cin, d.h, d.w, d.kh, d.kw, d.stride,
                                     d.pad, d.oh, d.ow, col.data());
                        src = col.data();
                    }
                    kern::transpose(src, colt.data(), static_cast<int>(kk),
                                    static_cast<int>(nn));
                    kern::gemm<real_t>(gout, colt.data(), gw, d.cout,
                                       static_cast<int>(kk),
                                       static_cast<int>(nn), true);
                }
                if (gx) {
                    real_t* gxb =
                        gx + static_cast<int64_t>(b) * d.cin * d.h * d.w;
                    if (pointwise) {
                        kern::gemm<real_t>(wt.data(), gout, gxb,
                                           static_cast<int>(kk),
                                           static_cast<int>(nn), d.cout, true);
                    } else {
                        kern::gemm<real_t>(wt.data(), gout, dcol.data(),
                                           static_cast<int>(kk),
                                           static_cast<int>(nn), d.cout,
                                           false);
                        kern::col2im_add(dcol.data(), d.cin, d.h, d.w, d.kh,
                                         d.kw, d.stride, d.pad, d.oh, d.ow,
                                         gxb);
                    }
                }
                if (gb)
                    for (int co = 0; co < d.cout; ++co) {
                        const real_t* row = gout + static_cast<int64_t>(co) * nn;
                        real_t s = 0;
                        for (int64_t i = 0; i < nn; ++i) s += row[i];
                        gb[co] += s;
                    }
            }
        });
    return out;
}

Tensor nearest_upsample(const Tensor& x, int factor) {
    if (x.rank() != 4)
        throw ShapeError("nearest_upsample: input must be NCHW, got " +
                         shape_str(x.shape()));
    if (factor < 1) throw ShapeError("nearest_upsample: factor must be >= 1");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h * factor, ow = w * factor;
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(x) : -1;
    Tensor out = Tensor::zeros({b, c, oh, ow});
    const int64_t planes = static_cast<int64_t>(b) * c;
    for (int64_t p = 0; p < planes; ++p) {
        const real_t* sp = x.data() + p * h * w;
        real_t* dp = out.mutable_data() + p * static_cast<int64_t>(oh) * ow;
        for (int y = 0; y < oh; ++y) {
            const real_t* srow = sp + static_cast<int64_t>(y / factor) * w;
            real_t* drow = dp + static_cast<int64_t>(y) * ow;
            for (int xx = 0; xx < ow; ++xx) drow[xx] = srow[xx / factor];
        }
    }
    check_finite(out, "nearest_upsample");
    if (ix >= 0)
        tp->record(out, [ix, planes, h, w, oh, ow,
                         factor](Tape& t, const real_t* g) {
            real_t* gx = t.grad_accum(ix);
            if (!gx) return;
            for (int64_t p = 0; p < planes; ++p) {
                const real_t* gp = g + p * static_cast<int64_t>(oh) * ow;
                real_t* xp = gx + p * h * w;
                for (int y = 0; y < oh; ++y) {
                    const real_t* grow = gp + static_cast<int64_t>(y) * ow;
                    real_t* xrow = xp + static_cast<int64_t>(y / factor) * w;
                    for (int xx = 0; xx < ow; ++xx)
                        xrow[xx / factor] += grow[xx];
                }
            }
        });
    return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training) {
    if (x.rank() != 4)
        throw ShapeError("batch_norm: input must be NCHW, got " +
                         shape_str(x.shape()));
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 ||
        beta.dim(0) != c)
        throw ShapeError("batch_norm: affine shapes " +
                         shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " must be (" +
                         std::to_string(c) + ")");
    if (static_cast<int>(state.running_mean.size()) != c)
        throw ShapeError("batch_norm: state has " +
                         std::to_string(state.running_mean.size()) +
                         " channels, input has " + std::to_string(c));
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(x) : -1;
    const int ig = tp ? tp->input_node(gamma) : -1;
    const int ibt = tp ? tp->input_node(beta) : -1;

    const int64_t hw = static_cast<int64_t>(h) * w;
    const int64_t m = static_cast<int64_t>(b) * hw;
    std::vector<real_t> mean(c), invstd(c);
    if (training) {
        for (int ch = 0; ch < c; ++ch) {
            double s = 0, s2 = 0;
            for (int bb = 0; bb < b; ++bb) {
                const real_t* plane =
                    x.data() + (static_cast<int64_t>(bb) * c + ch) * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    const double v = plane[i];
                    s += v;
                    s2 += v * v;
                }
            }
            const double mu = s / static_cast<double>(m);
            double var = s2 / static_cast<double>(m) - mu * mu;
            if (var < 0) var = 0;
            mean[ch] = static_cast<real_t>(mu);
            invstd[ch] = static_cast<real_t>(
                1.0 / std::sqrt(var + static_cast<double>(kBatchNormEps)));
            state.running_mean[ch] =
                (1 - kBatchNormMomentum) * state.running_mean[ch] +
                kBatchNormMomentum * static_cast<real_t>(mu);
            state.running_var[ch] =
                (1 - kBatchNormMomentum) * state.running_var[ch] +
                kBatchNormMomentum * static_cast<real_t>(var);
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            mean[ch] = state.running_mean[ch];
            invstd[ch] = static_cast<real_t>(
                1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) +
                                static_cast<double>(kBatchNormEps)));
        }
    }

    Tensor out = Tensor::zeros(x.shape());
    for (int bb = 0; bb < b; ++bb)
        for (int ch = 0; ch < c; ++ch) {
            const real_t* sp =
                x.data() + (static_cast<int64_t>(bb) * c + ch) * hw;
            real_t* dp =
                out.mutable_data() + (static_cast<int64_t>(bb) * c + ch) * hw;
            const real_t sc = gamma.data()[ch] * invstd[ch];
            const real_t sh = beta.data()[ch] - mean[ch] * sc;
            for (int64_t i = 0; i < hw; ++i)
                dp[i] = sc * sp[i] + sh;
        }
    check_finite(out, "batch_norm");

    if (ix >= 0 || ig >= 0 || ibt >= 0)
        tp->record(out, [ix, ig, ibt, x, gamma, mean, invstd, b, c, hw, m,
                         training](Tape& t, const real_t* g) {
            real_t* gx = t.grad_accum(ix);
            real_t* gg = t.grad_accum(ig);
            real_t* gb = t.grad_accum(ibt);
            for (int ch = 0; ch < c; ++ch) {
                double s1 = 0, s2 = 0;
                for (int bb = 0; bb < b; ++bb) {
                    const int64_t off = (static_cast<int64_t>(bb) * c + ch) * hw;
                    const real_t* gp = g + off;
                    const real_t* xp = x.data() + off;
                    for (int64_t i = 0; i < hw; ++i) {
                        s1 += gp[i];
                        s2 += static_cast<double>(gp[i]) *
                              ((xp[i] - mean[ch]) * invstd[ch]);
                    }
                }
                if (gb) gb[ch] += static_cast<real_t>(s1);
                if (gg) gg[ch] += static_cast<real_t>(s2);
                if (gx) {
                    const real_t sc = gamma.data()[ch] * invstd[ch];
                    if (training) {
                        const real_t a1 = static_cast<real_t>(
                            s1 / static_cast<double>(m));
                        const real_t a2 = static_cast<real_t>(
                            s2 / static_cast<double>(m));
                        for (int bb = 0; bb < b; ++bb) {
                            const int64_t off =
                                (static_cast<int64_t>(bb) * c + ch) * hw;
                            const real_t* gp = g + off;
                            const real_t* xp = x.data() + off;
                            real_t* dp = gx + off;
                            for (int64_t i = 0; i < hw; ++i) {
                                const real_t xhat =
                                    (xp[i] - mean[ch]) * invstd[ch];
                                dp[i] += sc * (gp[i] - a1 - xhat * a2);
                            }
                        }
                    } else {
                        for (int bb = 0; bb < b; ++bb) {
                            const int64_t off =
                                (static_cast<int64_t>(bb) * c + ch) * hw;
                            const real_t* gp = g + off;
                            real_t* dp = gx + off;
                            for (int64_t i = 0; i < hw; ++i)
                                dp[i] += sc * gp[i];
                        }
                    }
                }
            }
        });
    return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* prim, const Tensor& x, Fwd fwd, Bwd bwd_factory) {
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(x) : -1;
    Tensor out = Tensor::zeros(x.shape());
    const int64_t n = x.size();
    const real_t* px = x.data();
    real_t* po = out.mutable_data();
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
    check_finite(out, prim);
    if (ix >= 0) tp->record(out, bwd_factory(ix, out, n));
    return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
    return unary_op(
        "relu", x, [](real_t v) { return v > 0 ? v : real_t(0); },
        [&x](int ix, const Tensor&, int64_t n) {
            return [ix, x, n](Tape& t, const real_t* g) {
                if (real_t* gx = t.grad_accum(ix)) {
                    const real_t* px = x.data();
                    for (int64_t i = 0; i < n; ++i)
                        if (px[i] > 0) gx[i] += g[i];
                }
            };
        });
}

Tensor leaky_relu(const Tensor& x) {
    return unary_op(
        "leaky_relu", x,
        [](real_t v) { return v > 0 ? v : kLeakySlope * v; },
        [&x](int ix, const Tensor&, int64_t n) {
            return [ix, x, n](Tape& t, const real_t* g) {
                if (real_t* gx = t.grad_accum(ix)) {
                    const real_t* px = x.data();
                    for (int64_t i = 0; i < n; ++i)
                        gx[i] += px[i] > 0 ? g[i] : kLeakySlope * g[i];
                }
            };
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        "sigmoid", x,
        [](real_t v) { return real_t(1) / (real_t(1) + std::exp(-v)); },
        [](int ix, const Tensor& y, int64_t n) {
            return [ix, y, n](Tape& t, const real_t* g) {
                if (real_t* gx = t.grad_accum(ix)) {
                    const real_t* py = y.data();
                    for (int64_t i = 0; i < n; ++i)
                        gx[i] += g[i] * py[i] * (real_t(1) - py[i]);
                }
            };
        });
}

Tensor tanh_op(const Tensor& x) {
    return unary_op(
        "tanh", x, [](real_t v) { return std::tanh(v); },
        [](int ix, const Tensor& y, int64_t n) {
            return [ix, y, n](Tape& t, const real_t* g) {
                if (real_t* gx = t.grad_accum(ix)) {
                    const real_t* py = y.data();
                    for (int64_t i = 0; i < n; ++i)
                        gx[i] += g[i] * (real_t(1) - py[i] * py[i]);
                }
            };
        });
}

Tensor log_op(const Tensor& x) {
    return unary_op(
        "log", x,
        [](real_t v) { return std::log(v < kLogClamp ? kLogClamp : v); },
        [&x](int ix, const Tensor&, int64_t n) {
            return [ix, x, n](Tape& t, const real_t* g) {
                if (real_t* gx = t.grad_accum(ix)) {
                    const real_t* px = x.data();
                    for (int64_t i = 0; i < n; ++i)
                        if (px[i] >= kLogClamp) gx[i] += g[i] / px[i];
                }
            };
        });
}

Tensor exp_op(const Tensor& x) {
    return unary_op(
        "exp", x, [](real_t v) { return std::exp(v); },
        [](int ix, const Tensor& y, int64_t n) {
            return [ix, y, n](Tape& t, const real_t* g) {
                if (real_t* gx = t.grad_accum(ix)) {
                    const real_t* py = y.data();
                    for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * py[i];
                }
            };
        });
}

Tensor sum_all(const Tensor& x) {
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(x) : -1;
    const int64_t n = x.size();
    double s = 0;
    const real_t* px = x.data();
    for (int64_t i = 0; i < n; ++i) s += px[i];
    Tensor out = Tensor::scalar(static_cast<real_t>(s));
    check_finite(out, "sum-reduce");
    if (ix >= 0)
        tp->record(out, [ix, n](Tape& t, const real_t* g) {
            if (real_t* gx = t.grad_accum(ix))
                for (int64_t i = 0; i < n; ++i) gx[i] += g[0];
        });
    return out;
}

Tensor mean_all(const Tensor& x) {
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(x) : -1;
    const int64_t n = x.size();
    double s = 0;
    const real_t* px = x.data();
    for (int64_t i = 0; i < n; ++i) s += px[i];
    Tensor out = Tensor::scalar(static_cast<real_t>(s / static_cast<double>(n)));
    check_finite(out, "mean-reduce");
    if (ix >= 0)
        tp->record(out, [ix, n](Tape& t, const real_t* g) {
            if (real_t* gx = t.grad_accum(ix)) {
                const real_t k = g[0] / static_cast<real_t>(n);
                for (int64_t i = 0; i < n; ++i) gx[i] += k;
            }
        });
    return out;
}

Tensor spatial_mean(const Tensor& x) {
    if (x.rank() != 4)
        throw ShapeError("mean-reduce(spatial): input must be NCHW, got " +
                         shape_str(x.shape()));
    const int b = x.dim(0), c = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(x) : -1;
    Tensor out = Tensor::zeros({b, c});
    for (int64_t p = 0; p < static_cast<int64_t>(b) * c; ++p) {
        const real_t* sp = x.data() + p * hw;
        double s = 0;
        for (int64_t i = 0; i < hw; ++i) s += sp[i];
        out.mutable_data()[p] = static_cast<real_t>(s / static_cast<double>(hw));
    }
    check_finite(out, "mean-reduce");
    if (ix >= 0)
        tp->record(out, [ix, b, c, hw](Tape& t, const real_t* g) {
            if (real_t* gx = t.grad_accum(ix))
                for (int64_t p = 0; p < static_cast<int64_t>(b) * c; ++p) {
                    const real_t k = g[p] / static_cast<real_t>(hw);
                    real_t* dp = gx + p * hw;
                    for (int64_t i = 0; i < hw; ++i) dp[i] += k;
                }
        });
    return out;
}

Tensor spatial_replicate(const Tensor& v, int m) {
    if (v.rank() != 2)
        throw ShapeError("spatial_replicate: input must be (B,D), got " +
                         shape_str(v.shape()));
    if (m < 1) throw ShapeError("spatial_replicate: extent must be >= 1");
    const int b = v.dim(0), d = v.dim(1);
    const int64_t mm = static_cast<int64_t>(m) * m;
    Tape* tp = active_tape();
    const int iv = tp ? tp->input_node(v) : -1;
    Tensor out = Tensor::zeros({b, d, m, m});
    for (int64_t p = 0; p < static_cast<int64_t>(b) * d; ++p) {
        const real_t val = v.data()[p];
        real_t* dp = out.mutable_data() + p * mm;
        for (int64_t i = 0; i < mm; ++i) dp[i] = val;
    }
    check_finite(out, "spatial_replicate");
    if (iv >= 0)
        tp->record(out, [iv, b, d, mm](Tape& t, const real_t* g) {
            if (real_t* gv = t.grad_accum(iv))
                for (int64_t p = 0; p < static_cast<int64_t>(b) * d; ++p) {
                    const real_t* gp = g + p * mm;
                    double s = 0;
                    for (int64_t i = 0; i < mm; ++i) s += gp[i];
                    gv[p] += static_cast<real_t>(s);
                }
        });
    return out;
}

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
        throw ShapeError("fully_connected: input " + shape_str(x.shape()) +
                         " does not match weight " + shape_str(w.shape()) +
                         " (expected (B,In) x (In,Out))");
    const int b = x.dim(0), in = x.dim(1), out_n = w.dim(1);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_n))
        throw ShapeError("fully_connected: bias " + shape_str(bias.shape()) +
                         " must be (" + std::to_string(out_n) + ")");
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(x) : -1;
    const int iw = tp ? tp->input_node(w) : -1;
    const int ib = (tp && bias.defined()) ? tp->input_node(bias) : -1;
    Tensor out = Tensor::zeros({b, out_n});
    kern::gemm<real_t>(x.data(), w.data(), out.mutable_data(), b, out_n, in,
                       false);
    if (bias.defined())
        for (int r = 0; r < b; ++r)
            for (int j = 0; j < out_n; ++j)
                out.mutable_data()[static_cast<int64_t>(r) * out_n + j] +=
                    bias.data()[j];
    check_finite(out, "fully_connected");
    if (ix >= 0 || iw >= 0 || ib >= 0)
        tp->record(out, [ix, iw, ib, x, w, b, in,
                         out_n](Tape& t, const real_t* g) {
            if (real_t* gx = t.grad_accum(ix)) {
                std::vector<real_t> wt(static_cast<size_t>(out_n) * in);
                kern::transpose(w.data(), wt.data(), in, out_n);
                kern::gemm<real_t>(g, wt.data(), gx, b, in, out_n, true);
            }
            if (real_t* gw = t.grad_accum(iw)) {
                std::vector<real_t> xt(static_cast<size_t>(in) * b);
                kern::transpose(x.data(), xt.data(), b, in);
                kern::gemm<real_t>(xt.data(), g, gw, in, out_n, b, true);
            }
            if (real_t* gb = t.grad_accum(ib))
                for (int r = 0; r < b; ++r)
                    for (int j = 0; j < out_n; ++j)
                        gb[j] += g[static_cast<int64_t>(r) * out_n + j];
        });
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
    Tape* tp = active_tape();
    const int ix = tp ? tp->input_node(x) : -1;
    Tensor out = Tensor::from(std::move(shape), x.values());
    const int64_t n = x.size();
    if (ix >= 0)
        tp->record(out, [ix, n](Tape& t, const real_t* g) {
            if (real_t* gx = t.grad_accum(ix)) axpy(gx, g, real_t(1), n);
        });
    return out;
}

Tensor flatten_batch(const Tensor& x) {
    return reshape(x, {x.dim(0), static_cast<int>(x.size() / x.dim(0))});
}

}  // namespace ganlab
