// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "selfpitch/dotprod.hpp"

namespace selfpitch::ad {

std::string Shape::str() const {
    std::string s = "(";
    for (int i = 0; i < rank; ++i) {
        s += std::to_string(d[std::size_t(i)]);
        if (i + 1 < rank) s += ",";
    }
    return s + ")";
}

const char* op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kConst: return "const";
        case Op::kAdd: return "add";
        case Op::kMul: return "mul";
        case Op::kDiv: return "div";
        case Op::kAffine: return "affine";
        case Op::kMatmul: return "matmul";
        case Op::kConv1d: return "conv1d";
        case Op::kRelu: return "relu";
        case Op::kSoftplus: return "softplus";
        case Op::kSin: return "sin";
        case Op::kExp: return "exp";
        case Op::kLog: return "log";
        case Op::kAbs: return "abs";
        case Op::kCumsum: return "cumsum";
        case Op::kSoftmax: return "softmax";
        case Op::kLogSoftmax: return "log_softmax";
        case Op::kCrossEntropy: return "cross_entropy";
        case Op::kHuber: return "huber";
        case Op::kRoll: return "roll";
        case Op::kRollRows: return "roll_rows";
        case Op::kUpsampleLinear: return "upsample_linear";
        case Op::kUpsampleNearest: return "upsample_nearest";
        case Op::kStftMag: return "stft_mag";
        case Op::kSum: return "sum";
        case Op::kMean: return "mean";
        case Op::kSumRows: return "sum_rows";
        case Op::kSumAxis0: return "sum_axis0";
        case Op::kChannelNorm: return "channel_norm";
    }
    return "?";
}

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " vs " + b.str());
}

template <typename Real>
Real stable_softplus(Real x) {
    if (x > Real(30)) return x;
    if (x < Real(-30)) return std::exp(x);
    return std::log1p(std::exp(x));
}

// vectorizable fixed-order sum (same lane pattern as dot8)
template <typename Real>
Real sum8(const Real* a, int n) {
    Real acc[8] = {Real(0), Real(0), Real(0), Real(0), Real(0), Real(0), Real(0), Real(0)};
    int i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) acc[j] += a[i + j];
    Real tail = Real(0);
    for (; i < n; ++i) tail += a[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <typename Real>
Real sigmoid(Real x) {
    if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

// index helpers for padded conv reads
inline int wrap_index(int pos, int len) {
    pos %= len;
    return pos < 0 ? pos + len : pos;
}

}  // namespace

template <typename Real>
StftPlan<Real> make_stft_plan(int fft_size, int hop) {
    if (fft_size < 8 || hop < 1) throw RangeError("stft plan: fft=" + std::to_string(fft_size));
    StftPlan<Real> plan;
    plan.fft = fft_size;
    plan.hop = hop;
    plan.bins = fft_size / 2 + 1;
    plan.cos_w.resize(std::size_t(plan.bins) * fft_size);
    plan.sin_w.resize(std::size_t(plan.bins) * fft_size);
    const double twopi = 2.0 * std::numbers::pi;
    std::vector<double> hann(static_cast<std::size_t>(fft_size), 0.0);
    for (int n = 0; n < fft_size; ++n)
        hann[std::size_t(n)] = 0.5 - 0.5 * std::cos(twopi * n / fft_size);
    for (int b = 0; b < plan.bins; ++b) {
        Real* cr = &plan.cos_w[std::size_t(b) * fft_size];
        Real* sr = &plan.sin_w[std::size_t(b) * fft_size];
        for (int n = 0; n < fft_size; ++n) {
            const double ang = twopi * b * n / fft_size;
            cr[n] = Real(hann[std::size_t(n)] * std::cos(ang));
            sr[n] = Real(hann[std::size_t(n)] * std::sin(ang));
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------
// graph inputs
// ---------------------------------------------------------------------------

template <typename Real>
typename Graph<Real>::Id Graph<Real>::leaf(Tensor<Real>& param) {
    Node n;
    n.op = Op::kLeaf;
    n.shape = param.shape;
    n.val = param.v;
    n.param = &param;
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::constant(Shape s, std::span<const Real> data) {
    if (int(data.size()) != s.numel())
        throw ShapeError("constant: " + std::to_string(data.size()) + " values for shape " + s.str());
    Node n;
    n.op = Op::kConst;
    n.shape = s;
    n.val.assign(data.begin(), data.end());
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::scalar(Real value) {
    Node n;
    n.op = Op::kConst;
    n.shape = make_shape(1);
    n.val = {value};
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename Real>
typename Graph<Real>::Id Graph<Real>::add(Id a, Id b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    const bool scalar_b = nb.shape.numel() == 1 && !(na.shape == nb.shape);
    if (!(na.shape == nb.shape) && !scalar_b) shape_fail("add", na.shape, nb.shape);
    Node n;
    n.op = Op::kAdd;
    n.shape = na.shape;
    n.a = a;
    n.b = b;
    n.val.resize(na.val.size());
    if (scalar_b) {
        const Real s = nb.val[0];
        for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = na.val[i] + s;
    } else {
        for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = na.val[i] + nb.val[i];
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::mul(Id a, Id b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.shape.numel() == 1 && nb.shape.numel() != 1) std::swap(a, b);
    const Node& xa = at(a);
    const Node& xb = at(b);
    const bool scalar_b = xb.shape.numel() == 1 && !(xa.shape == xb.shape);
    if (!(xa.shape == xb.shape) && !scalar_b) shape_fail("mul", xa.shape, xb.shape);
    Node n;
    n.op = Op::kMul;
    n.shape = xa.shape;
    n.a = a;
    n.b = b;
    n.val.resize(xa.val.size());
    if (scalar_b) {
        const Real s = xb.val[0];
        for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = xa.val[i] * s;
    } else {
        for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = xa.val[i] * xb.val[i];
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::div(Id a, Id b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    const bool scalar_b = nb.shape.numel() == 1 && !(na.shape == nb.shape);
    if (!(na.shape == nb.shape) && !scalar_b) shape_fail("div", na.shape, nb.shape);
    Node n;
    n.op = Op::kDiv;
    n.shape = na.shape;
    n.a = a;
    n.b = b;
    n.val.resize(na.val.size());
    if (scalar_b) {
        const Real s = nb.val[0];
        for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = na.val[i] / s;
    } else {
        for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = na.val[i] / nb.val[i];
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::affine(Id a, Real scale, Real shift) {
    const Node& na = at(a);
    Node n;
    n.op = Op::kAffine;
    n.shape = na.shape;
    n.a = a;
    n.p0 = scale;
    n.p1 = shift;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = scale * na.val[i] + shift;
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::relu(Id a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::kRelu;
    n.shape = na.shape;
    n.a = a;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = na.val[i] > Real(0) ? na.val[i] : Real(0);
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::softplus(Id a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::kSoftplus;
    n.shape = na.shape;
    n.a = a;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = stable_softplus(na.val[i]);
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::sin(Id a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::kSin;
    n.shape = na.shape;
    n.a = a;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::sin(na.val[i]);
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::exp(Id a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::kExp;
    n.shape = na.shape;
    n.a = a;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::exp(na.val[i]);
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::log(Id a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::kLog;
    n.shape = na.shape;
    n.a = a;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i) {
        if (!(na.val[i] > Real(0)))
            throw NumericError("log: non-positive input " + std::to_string(double(na.val[i])));
        n.val[i] = std::log(na.val[i]);
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::abs(Id a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::kAbs;
    n.shape = na.shape;
    n.a = a;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::abs(na.val[i]);
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::huber(Id a, Real delta) {
    if (!(delta > Real(0))) throw RangeError("huber: delta must be positive");
    const Node& na = at(a);
    Node n;
    n.op = Op::kHuber;
    n.shape = na.shape;
    n.a = a;
    n.p0 = delta;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i) {
        const Real r = na.val[i];
        const Real ar = std::abs(r);
        n.val[i] = ar <= delta ? Real(0.5) * r * r : delta * (ar - Real(0.5) * delta);
    }
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// matmul / conv / norm
// ---------------------------------------------------------------------------

template <typename Real>
typename Graph<Real>::Id Graph<Real>::matmul(Id a, Id b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.shape.rank != 2 || nb.shape.rank != 2 || na.shape.d[1] != nb.shape.d[0])
        shape_fail("matmul", na.shape, nb.shape);
    const int m = na.shape.d[0], k = na.shape.d[1], p = nb.shape.d[1];
    Node n;
    n.op = Op::kMatmul;
    n.shape = make_shape(m, p);
    n.a = a;
    n.b = b;
    n.val.assign(std::size_t(m) * p, Real(0));
    for (int i = 0; i < m; ++i) {
        const Real* arow = &na.val[std::size_t(i) * k];
        Real* orow = &n.val[std::size_t(i) * p];
        for (int t = 0; t < k; ++t) {
            const Real av = arow[t];
            const Real* brow = &nb.val[std::size_t(t) * p];
            for (int j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::conv1d(Id x, Id w, Id bias, int stride, int pad, int groups,
                                             PadMode mode) {
    const Node& nx = at(x);
    const Node& nw = at(w);
    if (nx.shape.rank != 3 || nw.shape.rank != 3) shape_fail("conv1d", nx.shape, nw.shape);
    const int N = nx.shape.d[0], Cin = nx.shape.d[1], L = nx.shape.d[2];
    const int Cout = nw.shape.d[0], Cg = nw.shape.d[1], K = nw.shape.d[2];
    if (groups < 1 || Cin % groups != 0 || Cout % groups != 0 || Cg != Cin / groups)
        throw ShapeError("conv1d: groups=" + std::to_string(groups) + " with x " + nx.shape.str() +
                         " w " + nw.shape.str());
    if (stride < 1) throw RangeError("conv1d: stride must be >= 1");
    const int Lo = (L + 2 * pad - K) / stride + 1;
    if (Lo < 1) throw ShapeError("conv1d: empty output for x " + nx.shape.str() + " k=" + std::to_string(K));
    if (bias >= 0 && !(at(bias).shape == make_shape(Cout)))
        shape_fail("conv1d bias", at(bias).shape, make_shape(Cout));

    Node n;
    n.op = Op::kConv1d;
    n.shape = make_shape(N, Cout, Lo);
    n.a = x;
    n.b = w;
    n.c = bias;
    n.i0 = stride;
    n.i1 = pad;
    n.i2 = groups;
    n.i3 = int(mode);
    n.val.assign(std::size_t(N) * Cout * Lo, Real(0));

    // Pre-padded input rows keep every tap loop on the interior fast path.
    const int ext_len = L + 2 * pad;
    std::vector<Real> ext(static_cast<std::size_t>(ext_len), Real(0));
    const int co_per_g = Cout / groups;
    for (int ni = 0; ni < N; ++ni) {
        for (int g = 0; g < groups; ++g) {
            for (int ci = 0; ci < Cg; ++ci) {
                const Real* xrow = &nx.val[(std::size_t(ni) * Cin + (g * Cg + ci)) * L];
                for (int i = 0; i < ext_len; ++i) {
                    const int pos = i - pad;
                    if (pos >= 0 && pos < L) ext[std::size_t(i)] = xrow[pos];
                    else if (mode == PadMode::kZero) ext[std::size_t(i)] = Real(0);
                    else if (mode == PadMode::kReplicate) ext[std::size_t(i)] = xrow[pos < 0 ? 0 : L - 1];
                    else ext[std::size_t(i)] = xrow[wrap_index(pos, L)];
                }
                for (int cg = 0; cg < co_per_g; ++cg) {
                    const int co = g * co_per_g + cg;
                    Real* orow = &n.val[(std::size_t(ni) * Cout + co) * Lo];
                    const Real* wrow = &nw.val[(std::size_t(co) * Cg + ci) * K];
                    for (int k = 0; k < K; ++k) {
                        const Real wv = wrow[k];
                        if (wv == Real(0)) continue;
                        const Real* xs = ext.data() + k;
                        if (stride == 1) {
                            for (int l = 0; l < Lo; ++l) orow[l] += wv * xs[l];
                        } else {
                            for (int l = 0; l < Lo; ++l) orow[l] += wv * xs[std::size_t(l) * stride];
                        }
                    }
                }
            }
        }
        if (bias >= 0) {
            const std::vector<Real>& bv = at(bias).val;
            for (int co = 0; co < Cout; ++co) {
                Real* orow = &n.val[(std::size_t(ni) * Cout + co) * Lo];
                const Real b = bv[std::size_t(co)];
                for (int l = 0; l < Lo; ++l) orow[l] += b;
            }
        }
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::channel_norm(Id x, Id gamma, Id beta, Real eps) {
    const Node& nx = at(x);
    if (nx.shape.rank != 3) throw ShapeError("channel_norm: need (N,C,L), got " + nx.shape.str());
    const int N = nx.shape.d[0], C = nx.shape.d[1], L = nx.shape.d[2];
    if (!(at(gamma).shape == make_shape(C))) shape_fail("channel_norm gamma", at(gamma).shape, make_shape(C));
    if (!(at(beta).shape == make_shape(C))) shape_fail("channel_norm beta", at(beta).shape, make_shape(C));

    Node n;
    n.op = Op::kChannelNorm;
    n.shape = nx.shape;
    n.a = x;
    n.b = gamma;
    n.c = beta;
    n.p0 = eps;
    n.val.resize(nx.val.size());
    n.saved.resize(std::size_t(N) * C * 2);  // per (n,c): mean, inv_std
    for (int ni = 0; ni < N; ++ni) {
        for (int c = 0; c < C; ++c) {
            const Real* xr = &nx.val[(std::size_t(ni) * C + c) * L];
            Real* yr = &n.val[(std::size_t(ni) * C + c) * L];
            const Real mean = sum8(xr, L) / Real(L);
            Real var;
            {
                Real acc[8] = {Real(0), Real(0), Real(0), Real(0),
                               Real(0), Real(0), Real(0), Real(0)};
                int l = 0;
                for (; l + 8 <= L; l += 8)
                    for (int j = 0; j < 8; ++j) {
                        const Real d = xr[l + j] - mean;
                        acc[j] += d * d;
                    }
                Real tail = Real(0);
                for (; l < L; ++l) {
                    const Real d = xr[l] - mean;
                    tail += d * d;
                }
                var = (((acc[0] + acc[1]) + (acc[2] + acc[3])) +
                       ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail) /
                      Real(L);
            }
            const Real inv = Real(1) / std::sqrt(var + eps);
            const Real gm = at(gamma).val[std::size_t(c)];
            const Real bt = at(beta).val[std::size_t(c)];
            for (int l = 0; l < L; ++l) yr[l] = gm * (xr[l] - mean) * inv + bt;
            n.saved[(std::size_t(ni) * C + c) * 2 + 0] = mean;
            n.saved[(std::size_t(ni) * C + c) * 2 + 1] = inv;
        }
    }
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// row-wise ops
// ---------------------------------------------------------------------------

template <typename Real>
typename Graph<Real>::Id Graph<Real>::cumsum(Id a) {
    const Node& na = at(a);
    const int rows = na.shape.rows(), K = na.shape.last();
    Node n;
    n.op = Op::kCumsum;
    n.shape = na.shape;
    n.a = a;
    n.val.resize(na.val.size());
    for (int r = 0; r < rows; ++r) {
        const Real* xr = &na.val[std::size_t(r) * K];
        Real* yr = &n.val[std::size_t(r) * K];
        Real acc = 0;
        for (int k = 0; k < K; ++k) {
            acc += xr[k];
            yr[k] = acc;
        }
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::softmax(Id a) {
    const Node& na = at(a);
    const int rows = na.shape.rows(), K = na.shape.last();
    Node n;
    n.op = Op::kSoftmax;
    n.shape = na.shape;
    n.a = a;
    n.val.resize(na.val.size());
    for (int r = 0; r < rows; ++r) {
        const Real* xr = &na.val[std::size_t(r) * K];
        Real* yr = &n.val[std::size_t(r) * K];
        Real mx = xr[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, xr[k]);
        Real den = 0;
        for (int k = 0; k < K; ++k) {
            yr[k] = std::exp(xr[k] - mx);
            den += yr[k];
        }
        const Real inv = Real(1) / den;
        for (int k = 0; k < K; ++k) yr[k] *= inv;
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::log_softmax(Id a) {
    const Node& na = at(a);
    const int rows = na.shape.rows(), K = na.shape.last();
    Node n;
    n.op = Op::kLogSoftmax;
    n.shape = na.shape;
    n.a = a;
    n.val.resize(na.val.size());
    for (int r = 0; r < rows; ++r) {
        const Real* xr = &na.val[std::size_t(r) * K];
        Real* yr = &n.val[std::size_t(r) * K];
        Real mx = xr[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, xr[k]);
        Real den = 0;
        for (int k = 0; k < K; ++k) den += std::exp(xr[k] - mx);
        const Real lse = mx + std::log(den);
        for (int k = 0; k < K; ++k) yr[k] = xr[k] - lse;
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::cross_entropy(Id logits, Id target) {
    const Node& ny = at(logits);
    const Node& nq = at(target);
    if (!(ny.shape == nq.shape)) shape_fail("cross_entropy", ny.shape, nq.shape);
    {
        // Targets are fixed distributions: reject graph paths that would want
        // gradients (detach upstream by materializing values as a constant).
        const Node& t = at(target);
        if (t.op != Op::kConst)
            throw ShapeError("cross_entropy: target must be a detached constant node");
    }
    const int rows = ny.shape.rows(), K = ny.shape.last();
    Node n;
    n.op = Op::kCrossEntropy;
    n.shape = make_shape(rows);
    n.a = logits;
    n.b = target;
    n.val.resize(std::size_t(rows));
    n.saved.resize(ny.val.size());  // softmax(logits)
    for (int r = 0; r < rows; ++r) {
        const Real* yr = &ny.val[std::size_t(r) * K];
        const Real* qr = &nq.val[std::size_t(r) * K];
        Real* pr = &n.saved[std::size_t(r) * K];
        Real mx = yr[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, yr[k]);
        Real den = 0;
        for (int k = 0; k < K; ++k) {
            pr[k] = std::exp(yr[k] - mx);
            den += pr[k];
        }
        const Real lse = mx + std::log(den);
        const Real invden = Real(1) / den;
        Real ce = 0;
        for (int k = 0; k < K; ++k) {
            pr[k] *= invden;
            ce += qr[k] * (lse - yr[k]);
        }
        n.val[std::size_t(r)] = ce;
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::roll(Id a, int delta) {
    const Node& na = at(a);
    const int rows = na.shape.rows(), K = na.shape.last();
    Node n;
    n.op = Op::kRoll;
    n.shape = na.shape;
    n.a = a;
    n.i0 = delta;
    n.val.resize(na.val.size());
    for (int r = 0; r < rows; ++r) {
        const Real* xr = &na.val[std::size_t(r) * K];
        Real* yr = &n.val[std::size_t(r) * K];
        for (int k = 0; k < K; ++k) yr[k] = xr[wrap_index(k - delta, K)];
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::roll_rows(Id a, std::span<const int> deltas) {
    const Node& na = at(a);
    const int rows = na.shape.rows(), K = na.shape.last();
    if (int(deltas.size()) != rows)
        throw ShapeError("roll_rows: " + std::to_string(deltas.size()) + " deltas for " +
                         std::to_string(rows) + " rows");
    Node n;
    n.op = Op::kRollRows;
    n.shape = na.shape;
    n.a = a;
    n.deltas.assign(deltas.begin(), deltas.end());
    n.val.resize(na.val.size());
    for (int r = 0; r < rows; ++r) {
        const Real* xr = &na.val[std::size_t(r) * K];
        Real* yr = &n.val[std::size_t(r) * K];
        const int d = n.deltas[std::size_t(r)];
        for (int k = 0; k < K; ++k) yr[k] = xr[wrap_index(k - d, K)];
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::sum_rows(Id a) {
    const Node& na = at(a);
    const int rows = na.shape.rows(), K = na.shape.last();
    Node n;
    n.op = Op::kSumRows;
    n.shape = make_shape(rows);
    n.a = a;
    n.val.assign(std::size_t(rows), Real(0));
    for (int r = 0; r < rows; ++r) {
        const Real* xr = &na.val[std::size_t(r) * K];
        Real acc = 0;
        for (int k = 0; k < K; ++k) acc += xr[k];
        n.val[std::size_t(r)] = acc;
    }
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// resampling
// ---------------------------------------------------------------------------

template <typename Real>
typename Graph<Real>::Id Graph<Real>::upsample_linear(Id a, int hop, int out_len) {
    if (hop < 1 || out_len < 1) throw RangeError("upsample_linear: hop/out_len must be positive");
    const Node& na = at(a);
    const int rows = na.shape.rows(), T = na.shape.last();
    Node n;
    n.op = Op::kUpsampleLinear;
    n.shape = na.shape;
    n.shape.d[std::size_t(std::max(0, n.shape.rank - 1))] = out_len;
    n.a = a;
    n.i0 = hop;
    n.i1 = out_len;
    n.val.resize(std::size_t(rows) * out_len);
    for (int r = 0; r < rows; ++r) {
        const Real* xr = &na.val[std::size_t(r) * T];
        Real* yr = &n.val[std::size_t(r) * out_len];
        for (int t = 0; t < out_len; ++t) {
            const int i = t / hop;
            if (i >= T - 1) {
                yr[t] = xr[T - 1];
            } else {
                const Real f = Real(t - i * hop) / Real(hop);
                yr[t] = (Real(1) - f) * xr[i] + f * xr[i + 1];
            }
        }
    }
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::upsample_nearest(Id a, int hop, int out_len) {
    if (hop < 1 || out_len < 1) throw RangeError("upsample_nearest: hop/out_len must be positive");
    const Node& na = at(a);
    const int rows = na.shape.rows(), T = na.shape.last();
    Node n;
    n.op = Op::kUpsampleNearest;
    n.shape = na.shape;
    n.shape.d[std::size_t(std::max(0, n.shape.rank - 1))] = out_len;
    n.a = a;
    n.i0 = hop;
    n.i1 = out_len;
    n.val.resize(std::size_t(rows) * out_len);
    for (int r = 0; r < rows; ++r) {
        const Real* xr = &na.val[std::size_t(r) * T];
        Real* yr = &n.val[std::size_t(r) * out_len];
        for (int t = 0; t < out_len; ++t) {
            int i = (t + hop / 2) / hop;  // nearest frame center
            if (i > T - 1) i = T - 1;
            yr[t] = xr[i];
        }
    }
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// spectral
// ---------------------------------------------------------------------------

template <typename Real>
typename Graph<Real>::Id Graph<Real>::stft_mag(Id a, const StftPlan<Real>& plan) {
    const Node& na = at(a);
    if (na.shape.rank != 1) throw ShapeError("stft_mag: need 1-D signal, got " + na.shape.str());
    const int L = na.shape.d[0];
    if (L < plan.fft)
        throw ShapeError("stft_mag: signal length " + std::to_string(L) + " < fft " +
                         std::to_string(plan.fft));
    const int nf = (L - plan.fft) / plan.hop + 1;
    const int nb = plan.bins;
    Node n;
    n.op = Op::kStftMag;
    n.shape = make_shape(nf, nb);
    n.a = a;
    n.plan = &plan;
    n.val.resize(std::size_t(nf) * nb);
    n.saved.resize(std::size_t(nf) * nb * 2);  // re, im interleaved
    constexpr Real kTiny = Real(1e-20);
    for (int f = 0; f < nf; ++f) {
        const Real* xw = &na.val[std::size_t(f) * plan.hop];
        for (int b = 0; b < nb; ++b) {
            const Real* cr = &plan.cos_w[std::size_t(b) * plan.fft];
            const Real* sr = &plan.sin_w[std::size_t(b) * plan.fft];
            Real re = 0, im = 0;
            dot8_dual(xw, cr, sr, plan.fft, re, im);
            const Real mag = std::sqrt(re * re + im * im + kTiny);
            n.val[std::size_t(f) * nb + b] = mag;
            n.saved[(std::size_t(f) * nb + b) * 2 + 0] = re;
            n.saved[(std::size_t(f) * nb + b) * 2 + 1] = im;
        }
    }
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename Real>
typename Graph<Real>::Id Graph<Real>::sum(Id a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::kSum;
    n.shape = make_shape(1);
    n.a = a;
    Real acc = 0;
    for (const Real v : na.val) acc += v;
    n.val = {acc};
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::mean(Id a) {
    const Node& na = at(a);
    Node n;
    n.op = Op::kMean;
    n.shape = make_shape(1);
    n.a = a;
    Real acc = 0;
    for (const Real v : na.val) acc += v;
    n.val = {acc / Real(na.val.size())};
    return push(std::move(n));
}

template <typename Real>
typename Graph<Real>::Id Graph<Real>::sum_axis0(Id a) {
    const Node& na = at(a);
    if (na.shape.rank != 2) throw ShapeError("sum_axis0: need 2-D input, got " + na.shape.str());
    const int A = na.shape.d[0], B = na.shape.d[1];
    Node n;
    n.op = Op::kSumAxis0;
    n.shape = make_shape(B);
    n.a = a;
    n.val.assign(std::size_t(B), Real(0));
    for (int i = 0; i < A; ++i) {
        const Real* xr = &na.val[std::size_t(i) * B];
        for (int j = 0; j < B; ++j) n.val[std::size_t(j)] += xr[j];
    }
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <typename Real>
void Graph<Real>::backward(Id root, bool free_buffers) {
    if (ran_backward_) throw NumericError("backward: graph already consumed");
    ran_backward_ = true;
    Node& rn = at(root);
    if (rn.shape.numel() != 1) throw ShapeError("backward: root must be scalar, got " + rn.shape.str());
    ensure_grad(rn);
    rn.grad[0] = Real(1);
    for (Id id = root; id >= 0; --id) {
        Node& n = at(id);
        if (!n.grad.empty()) backward_node(id);
        if (free_buffers && id != root) {
            n.val.clear();
            n.val.shrink_to_fit();
            n.grad.clear();
            n.grad.shrink_to_fit();
            n.saved.clear();
            n.saved.shrink_to_fit();
        }
    }
}

template <typename Real>
void Graph<Real>::backward_node(Id id) {
    Node& n = at(id);
    const std::vector<Real>& g = n.grad;
    switch (n.op) {
        case Op::kLeaf: {
            for (std::size_t i = 0; i < g.size(); ++i) n.param->g[i] += g[i];
            break;
        }
        case Op::kConst:
            break;
        case Op::kAdd: {
            Node& a = at(n.a);
            Node& b = at(n.b);
            if (a.op != Op::kConst) {
                ensure_grad(a);
                for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i];
            }
            if (b.op != Op::kConst) {
                ensure_grad(b);
                if (b.shape.numel() == 1 && !(b.shape == n.shape)) {
                    Real acc = 0;
                    for (const Real gv : g) acc += gv;
                    b.grad[0] += acc;
                } else {
                    for (std::size_t i = 0; i < g.size(); ++i) b.grad[i] += g[i];
                }
            }
            break;
        }
        case Op::kMul: {
            Node& a = at(n.a);
            Node& b = at(n.b);
            const bool scalar_b = b.shape.numel() == 1 && !(b.shape == n.shape);
            if (a.op != Op::kConst) {
                ensure_grad(a);
                if (scalar_b) {
                    const Real s = b.val[0];
                    for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * s;
                } else {
                    for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * b.val[i];
                }
            }
            if (b.op != Op::kConst) {
                ensure_grad(b);
                if (scalar_b) {
                    Real acc = 0;
                    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a.val[i];
                    b.grad[0] += acc;
                } else {
                    for (std::size_t i = 0; i < g.size(); ++i) b.grad[i] += g[i] * a.val[i];
                }
            }
            break;
        }
        case Op::kDiv: {
            Node& a = at(n.a);
            Node& b = at(n.b);
            const bool scalar_b = b.shape.numel() == 1 && !(b.shape == n.shape);
            if (a.op != Op::kConst) {
                ensure_grad(a);
                if (scalar_b) {
                    const Real inv = Real(1) / b.val[0];
                    for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * inv;
                } else {
                    for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] / b.val[i];
                }
            }
            if (b.op != Op::kConst) {
                ensure_grad(b);
                if (scalar_b) {
                    const Real inv2 = Real(1) / (b.val[0] * b.val[0]);
                    Real acc = 0;
                    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a.val[i];
                    b.grad[0] -= acc * inv2;
                } else {
                    for (std::size_t i = 0; i < g.size(); ++i)
                        b.grad[i] -= g[i] * a.val[i] / (b.val[i] * b.val[i]);
                }
            }
            break;
        }
        case Op::kAffine: {
            Node& a = at(n.a);
            if (a.op != Op::kConst) {
                ensure_grad(a);
                for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += n.p0 * g[i];
            }
            break;
        }
        case Op::kMatmul: {
            Node& a = at(n.a);
            Node& b = at(n.b);
            const int m = a.shape.d[0], k = a.shape.d[1], p = b.shape.d[1];
            if (a.op != Op::kConst) {
                ensure_grad(a);
                for (int i = 0; i < m; ++i) {
                    const Real* grow = &g[std::size_t(i) * p];
                    Real* arow = &a.grad[std::size_t(i) * k];
                    for (int t = 0; t < k; ++t) {
                        const Real* brow = &b.val[std::size_t(t) * p];
                        Real acc = 0;
                        for (int j = 0; j < p; ++j) acc += grow[j] * brow[j];
                        arow[t] += acc;
                    }
                }
            }
            if (b.op != Op::kConst) {
                ensure_grad(b);
                for (int i = 0; i < m; ++i) {
                    const Real* grow = &g[std::size_t(i) * p];
                    const Real* arow = &a.val[std::size_t(i) * k];
                    for (int t = 0; t < k; ++t) {
                        const Real av = arow[t];
                        Real* brow = &b.grad[std::size_t(t) * p];
                        for (int j = 0; j < p; ++j) brow[j] += av * grow[j];
                    }
                }
            }
            break;
        }
        case Op::kConv1d: {
            Node& x = at(n.a);
            Node& w = at(n.b);
            const int stride = n.i0, pad = n.i1, groups = n.i2;
            const PadMode mode = PadMode(n.i3);
            const int N = x.shape.d[0], Cin = x.shape.d[1], L = x.shape.d[2];
            const int Cout = w.shape.d[0], Cg = w.shape.d[1], K = w.shape.d[2];
            const int Lo = n.shape.d[2];
            const int co_per_g = Cout / groups;
            const bool need_x = x.op != Op::kConst;
            const bool need_w = w.op != Op::kConst;
            if (need_x) ensure_grad(x);
            if (need_w) ensure_grad(w);
            if (n.c >= 0 && at(n.c).op != Op::kConst) {
                Node& bn = at(n.c);
                ensure_grad(bn);
                for (int ni = 0; ni < N; ++ni)
                    for (int co = 0; co < Cout; ++co) {
                        const Real* grow = &g[(std::size_t(ni) * Cout + co) * Lo];
                        Real acc = 0;
                        for (int l = 0; l < Lo; ++l) acc += grow[l];
                        bn.grad[std::size_t(co)] += acc;
                    }
            }
            // extended rows as in the forward pass: interior-only tap loops,
            // boundary contributions folded back once per row
            const int ext_len = L + 2 * pad;
            std::vector<Real> ext(static_cast<std::size_t>(ext_len), Real(0));
            std::vector<Real> gext(static_cast<std::size_t>(ext_len), Real(0));
            for (int ni = 0; ni < N; ++ni) {
                for (int gi = 0; gi < groups; ++gi) {
                    for (int ci = 0; ci < Cg; ++ci) {
                        const std::size_t xbase = (std::size_t(ni) * Cin + (gi * Cg + ci)) * L;
                        if (need_w) {
                            const Real* xrow = &x.val[xbase];
                            for (int i = 0; i < ext_len; ++i) {
                                const int pos = i - pad;
                                if (pos >= 0 && pos < L) ext[std::size_t(i)] = xrow[pos];
                                else if (mode == PadMode::kZero) ext[std::size_t(i)] = Real(0);
                                else if (mode == PadMode::kReplicate)
                                    ext[std::size_t(i)] = xrow[pos < 0 ? 0 : L - 1];
                                else ext[std::size_t(i)] = xrow[wrap_index(pos, L)];
                            }
                        }
                        if (need_x) std::fill(gext.begin(), gext.end(), Real(0));
                        for (int cg = 0; cg < co_per_g; ++cg) {
                            const int co = gi * co_per_g + cg;
                            const Real* grow = &g[(std::size_t(ni) * Cout + co) * Lo];
                            const Real* wrow = &w.val[(std::size_t(co) * Cg + ci) * K];
                            Real* gwrow = need_w ? &w.grad[(std::size_t(co) * Cg + ci) * K] : nullptr;
                            if (stride == 1) {
                                for (int k = 0; k < K; ++k) {
                                    if (need_w) gwrow[k] += dot8(grow, ext.data() + k, Lo);
                                    if (need_x) {
                                        const Real wv = wrow[k];
                                        if (wv == Real(0)) continue;
                                        Real* gs = gext.data() + k;
                                        for (int l = 0; l < Lo; ++l) gs[l] += wv * grow[l];
                                    }
                                }
                            } else {
                                for (int k = 0; k < K; ++k) {
                                    if (need_w) {
                                        Real acc = 0;
                                        const Real* xs = ext.data() + k;
                                        for (int l = 0; l < Lo; ++l)
                                            acc += grow[l] * xs[std::size_t(l) * stride];
                                        gwrow[k] += acc;
                                    }
                                    if (need_x) {
                                        const Real wv = wrow[k];
                                        if (wv == Real(0)) continue;
                                        Real* gs = gext.data() + k;
                                        for (int l = 0; l < Lo; ++l)
                                            gs[std::size_t(l) * stride] += wv * grow[l];
                                    }
                                }
                            }
                        }
                        if (need_x) {
                            Real* gxrow = &x.grad[xbase];
                            for (int i = 0; i < ext_len; ++i) {
                                const Real gv = gext[std::size_t(i)];
                                if (gv == Real(0)) continue;
                                const int pos = i - pad;
                                if (pos >= 0 && pos < L) gxrow[pos] += gv;
                                else if (mode == PadMode::kZero) continue;
                                else if (mode == PadMode::kReplicate) gxrow[pos < 0 ? 0 : L - 1] += gv;
                                else gxrow[wrap_index(pos, L)] += gv;
                            }
                        }
                    }
                }
            }
            break;
        }
        case Op::kRelu: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (a.val[i] > Real(0)) a.grad[i] += g[i];
            break;
        }
        case Op::kSoftplus: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * sigmoid(a.val[i]);
            break;
        }
        case Op::kSin: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * std::cos(a.val[i]);
            break;
        }
        case Op::kExp: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * n.val[i];
            break;
        }
        case Op::kLog: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] / a.val[i];
            break;
        }
        case Op::kAbs: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (a.val[i] > Real(0)) a.grad[i] += g[i];
                else if (a.val[i] < Real(0)) a.grad[i] -= g[i];
            }
            break;
        }
        case Op::kHuber: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const Real delta = n.p0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const Real r = a.val[i];
                const Real dr = std::abs(r) <= delta ? r : (r > Real(0) ? delta : -delta);
                a.grad[i] += g[i] * dr;
            }
            break;
        }
        case Op::kCumsum: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const int rows = n.shape.rows(), K = n.shape.last();
            for (int r = 0; r < rows; ++r) {
                const Real* gr = &g[std::size_t(r) * K];
                Real* ar = &a.grad[std::size_t(r) * K];
                Real acc = 0;
                for (int k = K - 1; k >= 0; --k) {
                    acc += gr[k];
                    ar[k] += acc;
                }
            }
            break;
        }
        case Op::kSoftmax: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const int rows = n.shape.rows(), K = n.shape.last();
            for (int r = 0; r < rows; ++r) {
                const Real* pr = &n.val[std::size_t(r) * K];
                const Real* gr = &g[std::size_t(r) * K];
                Real* ar = &a.grad[std::size_t(r) * K];
                Real dot = 0;
                for (int k = 0; k < K; ++k) dot += gr[k] * pr[k];
                for (int k = 0; k < K; ++k) ar[k] += pr[k] * (gr[k] - dot);
            }
            break;
        }
        case Op::kLogSoftmax: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const int rows = n.shape.rows(), K = n.shape.last();
            for (int r = 0; r < rows; ++r) {
                const Real* lr = &n.val[std::size_t(r) * K];
                const Real* gr = &g[std::size_t(r) * K];
                Real* ar = &a.grad[std::size_t(r) * K];
                Real gsum = 0;
                for (int k = 0; k < K; ++k) gsum += gr[k];
                for (int k = 0; k < K; ++k) ar[k] += gr[k] - std::exp(lr[k]) * gsum;
            }
            break;
        }
        case Op::kCrossEntropy: {
            Node& y = at(n.a);
            Node& q = at(n.b);
            if (y.op == Op::kConst) break;
            ensure_grad(y);
            const int rows = y.shape.rows(), K = y.shape.last();
            for (int r = 0; r < rows; ++r) {
                const Real gr = g[std::size_t(r)];
                const Real* pr = &n.saved[std::size_t(r) * K];
                const Real* qr = &q.val[std::size_t(r) * K];
                Real* yr = &y.grad[std::size_t(r) * K];
                for (int k = 0; k < K; ++k) yr[k] += gr * (pr[k] - qr[k]);
            }
            break;
        }
        case Op::kRoll: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const int rows = n.shape.rows(), K = n.shape.last();
            for (int r = 0; r < rows; ++r) {
                const Real* gr = &g[std::size_t(r) * K];
                Real* ar = &a.grad[std::size_t(r) * K];
                for (int k = 0; k < K; ++k) ar[wrap_index(k - n.i0, K)] += gr[k];
            }
            break;
        }
        case Op::kRollRows: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const int rows = n.shape.rows(), K = n.shape.last();
            for (int r = 0; r < rows; ++r) {
                const Real* gr = &g[std::size_t(r) * K];
                Real* ar = &a.grad[std::size_t(r) * K];
                const int d = n.deltas[std::size_t(r)];
                for (int k = 0; k < K; ++k) ar[wrap_index(k - d, K)] += gr[k];
            }
            break;
        }
        case Op::kUpsampleLinear: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const int hop = n.i0, out_len = n.i1;
            const int rows = a.shape.rows(), T = a.shape.last();
            for (int r = 0; r < rows; ++r) {
                const Real* gr = &g[std::size_t(r) * out_len];
                Real* ar = &a.grad[std::size_t(r) * T];
                for (int t = 0; t < out_len; ++t) {
                    const int i = t / hop;
                    if (i >= T - 1) {
                        ar[T - 1] += gr[t];
                    } else {
                        const Real f = Real(t - i * hop) / Real(hop);
                        ar[i] += (Real(1) - f) * gr[t];
                        ar[i + 1] += f * gr[t];
                    }
                }
            }
            break;
        }
        case Op::kUpsampleNearest: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const int hop = n.i0, out_len = n.i1;
            const int rows = a.shape.rows(), T = a.shape.last();
            for (int r = 0; r < rows; ++r) {
                const Real* gr = &g[std::size_t(r) * out_len];
                Real* ar = &a.grad[std::size_t(r) * T];
                for (int t = 0; t < out_len; ++t) {
                    int i = (t + hop / 2) / hop;
                    if (i > T - 1) i = T - 1;
                    ar[i] += gr[t];
                }
            }
            break;
        }
        case Op::kStftMag: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const StftPlan<Real>& plan = *n.plan;
            const int nf = n.shape.d[0], nb = n.shape.d[1];
            for (int f = 0; f < nf; ++f) {
                Real* gx = &a.grad[std::size_t(f) * plan.hop];
                for (int b = 0; b < nb; ++b) {
                    const std::size_t idx = std::size_t(f) * nb + b;
                    const Real gv = g[idx];
                    if (gv == Real(0)) continue;
                    const Real re = n.saved[idx * 2 + 0];
                    const Real im = n.saved[idx * 2 + 1];
                    const Real inv_mag = Real(1) / n.val[idx];
                    const Real cre = gv * re * inv_mag;
                    const Real cim = gv * im * inv_mag;
                    const Real* cr = &plan.cos_w[std::size_t(b) * plan.fft];
                    const Real* sr = &plan.sin_w[std::size_t(b) * plan.fft];
                    for (int t = 0; t < plan.fft; ++t) gx[t] += cre * cr[t] + cim * sr[t];
                }
            }
            break;
        }
        case Op::kSum: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const Real gv = g[0];
            for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += gv;
            break;
        }
        case Op::kMean: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const Real gv = g[0] / Real(a.val.size());
            for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += gv;
            break;
        }
        case Op::kSumRows: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const int rows = a.shape.rows(), K = a.shape.last();
            for (int r = 0; r < rows; ++r) {
                const Real gv = g[std::size_t(r)];
                Real* ar = &a.grad[std::size_t(r) * K];
                for (int k = 0; k < K; ++k) ar[k] += gv;
            }
            break;
        }
        case Op::kSumAxis0: {
            Node& a = at(n.a);
            if (a.op == Op::kConst) break;
            ensure_grad(a);
            const int A = a.shape.d[0], B = a.shape.d[1];
            for (int i = 0; i < A; ++i) {
                Real* ar = &a.grad[std::size_t(i) * B];
                for (int j = 0; j < B; ++j) ar[j] += g[std::size_t(j)];
            }
            break;
        }
        case Op::kChannelNorm: {
            Node& x = at(n.a);
            Node& gm = at(n.b);
            Node& bt = at(n.c);
            const int N = x.shape.d[0], C = x.shape.d[1], L = x.shape.d[2];
            const bool need_x = x.op != Op::kConst;
            if (need_x) ensure_grad(x);
            const bool need_g = gm.op != Op::kConst;
            if (need_g) ensure_grad(gm);
            const bool need_b = bt.op != Op::kConst;
            if (need_b) ensure_grad(bt);
            for (int ni = 0; ni < N; ++ni) {
                for (int c = 0; c < C; ++c) {
                    const std::size_t base = (std::size_t(ni) * C + c) * L;
                    const Real mean = n.saved[(std::size_t(ni) * C + c) * 2 + 0];
                    const Real inv = n.saved[(std::size_t(ni) * C + c) * 2 + 1];
                    const Real gamma = gm.val[std::size_t(c)];
                    const Real* gr = &g[base];
                    const Real* xr = &x.val[base];
                    const Real gsum = sum8(gr, L);
                    Real gxdot = 0;
                    gxdot = dot8(gr, xr, L);
                    // sum g*yhat = inv * (dot(g,x) - mean * sum(g))
                    const Real gysum = inv * (gxdot - mean * gsum);
                    if (need_b) bt.grad[std::size_t(c)] += gsum;
                    if (need_g) gm.grad[std::size_t(c)] += gysum;
                    if (need_x) {
                        Real* axr = &x.grad[base];
                        const Real invL = Real(1) / Real(L);
                        for (int l = 0; l < L; ++l) {
                            const Real yhat = (xr[l] - mean) * inv;
                            axr[l] += gamma * inv * (gr[l] - gsum * invL - yhat * gysum * invL);
                        }
                    }
                }
            }
            break;
        }
    }
}

template <typename Real>
void Graph<Real>::check_finite(const std::string& context) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        for (const Real v : nodes_[i].val) {
            if (!std::isfinite(double(v)))
                throw NumericError(context + ": non-finite value in node " + std::to_string(i) + " (" +
                                   op_name(nodes_[i].op) + ")");
        }
    }
}

template struct StftPlan<float>;
template struct StftPlan<double>;
template StftPlan<float> make_stft_plan<float>(int, int);
template StftPlan<double> make_stft_plan<double>(int, int);
template class Graph<float>;
template class Graph<double>;

}  // namespace selfpitch::ad
