#pragma once

// Reverse-mode tape over dense tensors. A Tape instance records one forward
// pass; backward() walks the nodes in reverse creation order and accumulates
// into Parameter gradients. Single-threaded per instance; every op checks its
// output for NaN/Inf unless checking is disabled.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshrec/camera.hpp"
#include "meshrec/sampling.hpp"
#include "meshrec/sparse.hpp"
#include "meshrec/tensor.hpp"

namespace meshrec {

template <class Real>
struct Parameter {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;

    explicit Parameter(std::string n, Tensor<Real> v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { std::fill(grad.raw().begin(), grad.raw().end(), Real(0)); }
};

template <class Real>
class Tape {
public:
    using Id = int;

    explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

    const Tensor<Real>& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }

    // gradient of `id` after backward(); zero tensor if the node was never reached
    Tensor<Real> gradient(Id id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return n.grad.numel() == n.value.numel() ? n.grad : Tensor<Real>(n.value.shape());
    }

    Id constant(Tensor<Real> v) { return push(std::move(v), nullptr, "constant"); }

    Id param(Parameter<Real>& p) {
        const Id id = push(p.value, nullptr, "param");
        nodes_[static_cast<size_t>(id)].par = &p;
        return id;
    }

    // ---- elementwise -------------------------------------------------------

    Id add(Id a, Id b) {
        require(value(a).same_shape(value(b)), "add: shape mismatch");
        Tensor<Real> out = value(a);
        const Tensor<Real>& vb = value(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
        return push(std::move(out), [a, b](Tape& t, Id self) {
            t.accumulate(a, t.grad(self));
            t.accumulate(b, t.grad(self));
        }, "add");
    }

    Id sub(Id a, Id b) {
        require(value(a).same_shape(value(b)), "sub: shape mismatch");
        Tensor<Real> out = value(a);
        const Tensor<Real>& vb = value(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
        return push(std::move(out), [a, b](Tape& t, Id self) {
            t.accumulate(a, t.grad(self));
            Tensor<Real> gb = t.grad(self);
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] = -gb[i];
            t.accumulate(b, gb);
        }, "sub");
    }

    Id mul(Id a, Id b) {
        require(value(a).same_shape(value(b)), "mul: shape mismatch");
        Tensor<Real> out = value(a);
        const Tensor<Real>& vb = value(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
        return push(std::move(out), [a, b](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& va = t.value(a);
            const Tensor<Real>& vb2 = t.value(b);
            Tensor<Real> ga(va.shape()), gb(vb2.shape());
            for (int64_t i = 0; i < g.numel(); ++i) {
                ga[i] = g[i] * vb2[i];
                gb[i] = g[i] * va[i];
            }
            t.accumulate(a, ga);
            t.accumulate(b, gb);
        }, "mul");
    }

    Id scale(Id a, double c) {
        Tensor<Real> out = value(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<Real>(out[i] * c);
        return push(std::move(out), [a, c](Tape& t, Id self) {
            Tensor<Real> ga = t.grad(self);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] = static_cast<Real>(ga[i] * c);
            t.accumulate(a, ga);
        }, "scale");
    }

    Id relu(Id a) {
        Tensor<Real> out = value(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > Real(0) ? out[i] : Real(0);
        return push(std::move(out), [a](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& va = t.value(a);
            Tensor<Real> ga(va.shape());
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] = va[i] > Real(0) ? g[i] : Real(0);
            t.accumulate(a, ga);
        }, "relu");
    }

    Id abs_op(Id a) {
        Tensor<Real> out = value(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::abs(out[i]);
        return push(std::move(out), [a](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& va = t.value(a);
            Tensor<Real> ga(va.shape());
            for (int64_t i = 0; i < g.numel(); ++i)
                ga[i] = va[i] > Real(0) ? g[i] : (va[i] < Real(0) ? -g[i] : Real(0));
            t.accumulate(a, ga);
        }, "abs");
    }

    Id sqrt_op(Id a) {
        Tensor<Real> out = value(a);
        for (int64_t i = 0; i < out.numel(); ++i) {
            require(out[i] >= Real(0), "sqrt: negative input");
            out[i] = std::sqrt(out[i]);
        }
        return push(std::move(out), [a](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& y = t.value(self);
            Tensor<Real> ga(y.shape());
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] / (Real(2) * y[i]);
            t.accumulate(a, ga);
        }, "sqrt");
    }

    Id recip(Id a) {
        Tensor<Real> out = value(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = Real(1) / out[i];
        return push(std::move(out), [a](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& y = t.value(self);
            Tensor<Real> ga(y.shape());
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] = -g[i] * y[i] * y[i];
            t.accumulate(a, ga);
        }, "recip");
    }

    // ---- linear algebra ----------------------------------------------------

    Id matmul(Id a, Id b) {
        const Tensor<Real>& va = value(a);
        const Tensor<Real>& vb = value(b);
        require(va.ndim() == 2 && vb.ndim() == 2 && va.dim(1) == vb.dim(0),
                "matmul: shape mismatch");
        const int n = va.dim(0), k = va.dim(1), m = vb.dim(1);
        Tensor<Real> out({n, m});
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < k; ++p) {
                const Real aip = va(i, p);
                if (aip == Real(0)) continue;
                const Real* brow = vb.data() + static_cast<size_t>(p) * m;
                Real* orow = out.data() + static_cast<size_t>(i) * m;
                for (int j = 0; j < m; ++j) orow[j] += aip * brow[j];
            }
        return push(std::move(out), [a, b, n, k, m](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& va2 = t.value(a);
            const Tensor<Real>& vb2 = t.value(b);
            Tensor<Real> ga({n, k}), gb({k, m});
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    const Real gij = g(i, j);
                    if (gij == Real(0)) continue;
                    for (int p = 0; p < k; ++p) {
                        ga(i, p) += gij * vb2(p, j);
                        gb(p, j) += va2(i, p) * gij;
                    }
                }
            t.accumulate(a, ga);
            t.accumulate(b, gb);
        }, "matmul");
    }

    Id transpose(Id a) {
        const Tensor<Real>& va = value(a);
        require(va.ndim() == 2, "transpose: need 2D");
        const int n = va.dim(0), m = va.dim(1);
        Tensor<Real> out({m, n});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) out(j, i) = va(i, j);
        return push(std::move(out), [a, n, m](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            Tensor<Real> ga({n, m});
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) ga(i, j) = g(j, i);
            t.accumulate(a, ga);
        }, "transpose");
    }

    // X: [n,c], v: [c] or [1,c], broadcast over rows
    Id add_rowvec(Id x, Id v) {
        const Tensor<Real>& vx = value(x);
        const Tensor<Real>& vv = value(v);
        require(vx.ndim() == 2 && vv.numel() == vx.dim(1), "add_rowvec: shape mismatch");
        const int n = vx.dim(0), c = vx.dim(1);
        Tensor<Real> out = vx;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) out(i, j) += vv[j];
        return push(std::move(out), [x, v, n, c](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            t.accumulate(x, g);
            Tensor<Real> gv(t.value(v).shape());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) gv[j] += g(i, j);
            t.accumulate(v, gv);
        }, "add_rowvec");
    }

    Id mul_rowvec(Id x, Id v) {
        const Tensor<Real>& vx = value(x);
        const Tensor<Real>& vv = value(v);
        require(vx.ndim() == 2 && vv.numel() == vx.dim(1), "mul_rowvec: shape mismatch");
        const int n = vx.dim(0), c = vx.dim(1);
        Tensor<Real> out = vx;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) out(i, j) *= vv[j];
        return push(std::move(out), [x, v, n, c](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& vx2 = t.value(x);
            const Tensor<Real>& vv2 = t.value(v);
            Tensor<Real> gx(vx2.shape());
            Tensor<Real> gv(vv2.shape());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) {
                    gx(i, j) = g(i, j) * vv2[j];
                    gv[j] += g(i, j) * vx2(i, j);
                }
            t.accumulate(x, gx);
            t.accumulate(v, gv);
        }, "mul_rowvec");
    }

    // X: [n,c], s: [n,1], each row scaled by its entry
    Id mul_colvec(Id x, Id s) {
        const Tensor<Real>& vx = value(x);
        const Tensor<Real>& vs = value(s);
        require(vx.ndim() == 2 && vs.numel() == vx.dim(0), "mul_colvec: shape mismatch");
        const int n = vx.dim(0), c = vx.dim(1);
        Tensor<Real> out = vx;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) out(i, j) *= vs[i];
        return push(std::move(out), [x, s, n, c](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& vx2 = t.value(x);
            const Tensor<Real>& vs2 = t.value(s);
            Tensor<Real> gx(vx2.shape());
            Tensor<Real> gs(vs2.shape());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) {
                    gx(i, j) = g(i, j) * vs2[i];
                    gs[i] += g(i, j) * vx2(i, j);
                }
            t.accumulate(x, gx);
            t.accumulate(s, gs);
        }, "mul_colvec");
    }

    // ---- reductions / shape ------------------------------------------------

    Id row_sum(Id x) {
        const Tensor<Real>& vx = value(x);
        require(vx.ndim() == 2, "row_sum: need 2D");
        const int n = vx.dim(0), c = vx.dim(1);
        Tensor<Real> out({n, 1});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) out(i, 0) += vx(i, j);
        return push(std::move(out), [x, n, c](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            Tensor<Real> gx({n, c});
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) gx(i, j) = g(i, 0);
            t.accumulate(x, gx);
        }, "row_sum");
    }

    Id sum_all(Id x) {
        const Tensor<Real>& vx = value(x);
        Real s = 0;
        for (int64_t i = 0; i < vx.numel(); ++i) s += vx[i];
        Tensor<Real> out({1});
        out[0] = s;
        return push(std::move(out), [x](Tape& t, Id self) {
            const Real g = t.grad(self)[0];
            Tensor<Real> gx(t.value(x).shape());
            for (int64_t i = 0; i < gx.numel(); ++i) gx[i] = g;
            t.accumulate(x, gx);
        }, "sum_all");
    }

    Id mean_all(Id x) { return scale(sum_all(x), 1.0 / static_cast<double>(value(x).numel())); }

    Id mean_rows(Id x) {
        const Tensor<Real>& vx = value(x);
        require(vx.ndim() == 2, "mean_rows: need 2D");
        const int n = vx.dim(0), c = vx.dim(1);
        Tensor<Real> out({1, c});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) out(0, j) += vx(i, j) / static_cast<Real>(n);
        return push(std::move(out), [x, n, c](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            Tensor<Real> gx({n, c});
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) gx(i, j) = g(0, j) / static_cast<Real>(n);
            t.accumulate(x, gx);
        }, "mean_rows");
    }

    Id repeat_rows(Id x, int n) {
        const Tensor<Real>& vx = value(x);
        require(vx.ndim() == 2 && vx.dim(0) == 1, "repeat_rows: need [1,c]");
        const int c = vx.dim(1);
        Tensor<Real> out({n, c});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) out(i, j) = vx(0, j);
        return push(std::move(out), [x, n, c](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            Tensor<Real> gx({1, c});
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) gx(0, j) += g(i, j);
            t.accumulate(x, gx);
        }, "repeat_rows");
    }

    // idx entries may be -1: those output rows are zero and route no gradient
    Id gather_rows(Id x, std::vector<int> idx) {
        const Tensor<Real>& vx = value(x);
        require(vx.ndim() == 2, "gather_rows: need 2D");
        const int n = vx.dim(0), c = vx.dim(1);
        const int m = static_cast<int>(idx.size());
        Tensor<Real> out({m, c});
        for (int i = 0; i < m; ++i) {
            const int r = idx[static_cast<size_t>(i)];
            require(r >= -1 && r < n, "gather_rows: index out of range");
            if (r < 0) continue;
            for (int j = 0; j < c; ++j) out(i, j) = vx(r, j);
        }
        return push(std::move(out), [x, idx = std::move(idx), n, c](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            Tensor<Real> gx({n, c});
            for (size_t i = 0; i < idx.size(); ++i) {
                const int r = idx[i];
                if (r < 0) continue;
                for (int j = 0; j < c; ++j) gx(r, j) += g(static_cast<int>(i), j);
            }
            t.accumulate(x, gx);
        }, "gather_rows");
    }

    Id concat_cols(Id a, Id b) {
        const Tensor<Real>& va = value(a);
        const Tensor<Real>& vb = value(b);
        require(va.ndim() == 2 && vb.ndim() == 2 && va.dim(0) == vb.dim(0),
                "concat_cols: row mismatch");
        const int n = va.dim(0), ca = va.dim(1), cb = vb.dim(1);
        Tensor<Real> out({n, ca + cb});
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < ca; ++j) out(i, j) = va(i, j);
            for (int j = 0; j < cb; ++j) out(i, ca + j) = vb(i, j);
        }
        return push(std::move(out), [a, b, n, ca, cb](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            Tensor<Real> ga({n, ca}), gb({n, cb});
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < ca; ++j) ga(i, j) = g(i, j);
                for (int j = 0; j < cb; ++j) gb(i, j) = g(i, ca + j);
            }
            t.accumulate(a, ga);
            t.accumulate(b, gb);
        }, "concat_cols");
    }

    Id slice_cols(Id x, int lo, int hi) {
        const Tensor<Real>& vx = value(x);
        require(vx.ndim() == 2 && 0 <= lo && lo < hi && hi <= vx.dim(1), "slice_cols: bad range");
        const int n = vx.dim(0), c = vx.dim(1), m = hi - lo;
        Tensor<Real> out({n, m});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) out(i, j) = vx(i, lo + j);
        return push(std::move(out), [x, lo, n, c, m](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            Tensor<Real> gx({n, c});
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) gx(i, lo + j) = g(i, j);
            t.accumulate(x, gx);
        }, "slice_cols");
    }

    Id reshape(Id x, std::vector<int> shape) {
        Tensor<Real> out = value(x).reshaped(shape);
        return push(std::move(out), [x](Tape& t, Id self) {
            t.accumulate(x, t.grad(self).reshaped(t.value(x).shape()));
        }, "reshape");
    }

    Id softmax_rows(Id x) {
        const Tensor<Real>& vx = value(x);
        require(vx.ndim() == 2, "softmax_rows: need 2D");
        const int n = vx.dim(0), c = vx.dim(1);
        Tensor<Real> out({n, c});
        for (int i = 0; i < n; ++i) {
            Real mx = vx(i, 0);
            for (int j = 1; j < c; ++j) mx = std::max(mx, vx(i, j));
            Real z = 0;
            for (int j = 0; j < c; ++j) {
                out(i, j) = std::exp(vx(i, j) - mx);
                z += out(i, j);
            }
            for (int j = 0; j < c; ++j) out(i, j) /= z;
        }
        return push(std::move(out), [x, n, c](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& y = t.value(self);
            Tensor<Real> gx({n, c});
            for (int i = 0; i < n; ++i) {
                Real dot = 0;
                for (int j = 0; j < c; ++j) dot += g(i, j) * y(i, j);
                for (int j = 0; j < c; ++j) gx(i, j) = y(i, j) * (g(i, j) - dot);
            }
            t.accumulate(x, gx);
        }, "softmax_rows");
    }

    // ---- structured ops ----------------------------------------------------

    // S is captured by value; gradient is S^T * g
    Id spmm_op(SparseMatrix s, Id x) {
        Tensor<Real> out = spmm(s, value(x));
        return push(std::move(out), [s = std::move(s), x](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const int c = g.dim(1);
            Tensor<Real> gx({s.cols, c});
            for (const SparseTriplet& tr : s.triplets) {
                const Real v = static_cast<Real>(tr.value);
                const Real* gr = g.data() + static_cast<size_t>(tr.row) * c;
                Real* xr = gx.data() + static_cast<size_t>(tr.col) * c;
                for (int j = 0; j < c; ++j) xr[j] += v * gr[j];
            }
            t.accumulate(x, gx);
        }, "spmm");
    }

    // X: [h,w,ci], K: [kh,kw,ci,co], zero padding, cross-correlation
    Id conv2d(Id x, Id kernel, int stride, int pad) {
        const Tensor<Real>& vx = value(x);
        const Tensor<Real>& vk = value(kernel);
        require(vx.ndim() == 3 && vk.ndim() == 4 && vx.dim(2) == vk.dim(2),
                "conv2d: shape mismatch");
        require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
        const int h = vx.dim(0), w = vx.dim(1), ci = vx.dim(2);
        const int kh = vk.dim(0), kw = vk.dim(1), co = vk.dim(3);
        const int oh = (h + 2 * pad - kh) / stride + 1;
        const int ow = (w + 2 * pad - kw) / stride + 1;
        require(oh >= 1 && ow >= 1, "conv2d: empty output");
        Tensor<Real> out({oh, ow, co});
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ky = 0; ky < kh; ++ky) {
                    const int y = oy * stride + ky - pad;
                    if (y < 0 || y >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int xx = ox * stride + kx - pad;
                        if (xx < 0 || xx >= w) continue;
                        const Real* xr = vx.data() + (static_cast<size_t>(y) * w + xx) * ci;
                        const Real* kr = vk.data() + (static_cast<size_t>(ky) * kw + kx) * ci * co;
                        Real* orow = out.data() + (static_cast<size_t>(oy) * ow + ox) * co;
                        for (int c = 0; c < ci; ++c)
                            for (int o = 0; o < co; ++o) orow[o] += xr[c] * kr[c * co + o];
                    }
                }
        return push(std::move(out),
                    [x, kernel, stride, pad, h, w, ci, kh, kw, co, oh, ow](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& vx2 = t.value(x);
            const Tensor<Real>& vk2 = t.value(kernel);
            Tensor<Real> gx({h, w, ci}), gk({kh, kw, ci, co});
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    for (int ky = 0; ky < kh; ++ky) {
                        const int y = oy * stride + ky - pad;
                        if (y < 0 || y >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int xx = ox * stride + kx - pad;
                            if (xx < 0 || xx >= w) continue;
                            const Real* xr = vx2.data() + (static_cast<size_t>(y) * w + xx) * ci;
                            const Real* kr =
                                vk2.data() + (static_cast<size_t>(ky) * kw + kx) * ci * co;
                            Real* gxr = gx.data() + (static_cast<size_t>(y) * w + xx) * ci;
                            Real* gkr = gk.data() + (static_cast<size_t>(ky) * kw + kx) * ci * co;
                            const Real* gr = g.data() + (static_cast<size_t>(oy) * ow + ox) * co;
                            for (int c = 0; c < ci; ++c)
                                for (int o = 0; o < co; ++o) {
                                    gxr[c] += gr[o] * kr[c * co + o];
                                    gkr[c * co + o] += xr[c] * gr[o];
                                }
                        }
                    }
            t.accumulate(x, gx);
            t.accumulate(kernel, gk);
        }, "conv2d");
    }

    // bias over the channel dimension of a [h,w,c] map
    Id add_channel_bias(Id x, Id bias) {
        const Tensor<Real>& vx = value(x);
        const Tensor<Real>& vb = value(bias);
        require(vx.ndim() == 3 && vb.numel() == vx.dim(2), "add_channel_bias: shape mismatch");
        const int hw = vx.dim(0) * vx.dim(1), c = vx.dim(2);
        Tensor<Real> out = vx;
        for (int i = 0; i < hw; ++i)
            for (int j = 0; j < c; ++j) out[static_cast<int64_t>(i) * c + j] += vb[j];
        return push(std::move(out), [x, bias, hw, c](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            t.accumulate(x, g);
            Tensor<Real> gb(t.value(bias).shape());
            for (int i = 0; i < hw; ++i)
                for (int j = 0; j < c; ++j) gb[j] += g[static_cast<int64_t>(i) * c + j];
            t.accumulate(bias, gb);
        }, "add_channel_bias");
    }

    Id upsample2x(Id x) {
        const Tensor<Real>& vx = value(x);
        require(vx.ndim() == 3, "upsample2x: need [h,w,c]");
        const int h = vx.dim(0), w = vx.dim(1), c = vx.dim(2);
        Tensor<Real> out({2 * h, 2 * w, c});
        for (int y = 0; y < 2 * h; ++y)
            for (int x2 = 0; x2 < 2 * w; ++x2)
                for (int j = 0; j < c; ++j) out(y, x2, j) = vx(y / 2, x2 / 2, j);
        return push(std::move(out), [x, h, w, c](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            Tensor<Real> gx({h, w, c});
            for (int y = 0; y < 2 * h; ++y)
                for (int x2 = 0; x2 < 2 * w; ++x2)
                    for (int j = 0; j < c; ++j) gx(y / 2, x2 / 2, j) += g(y, x2, j);
            t.accumulate(x, gx);
        }, "upsample2x");
    }

    // map: [h,w,c], grid: [n,2]; border-clamped bilinear lookup with gradients
    // to the map and to the (unclamped) coordinates
    Id grid_sample(Id map, Id grid) {
        const Tensor<Real>& vm = value(map);
        const Tensor<Real>& vg = value(grid);
        require(vm.ndim() == 3 && vg.ndim() == 2 && vg.dim(1) == 2, "grid_sample: shape mismatch");
        const int h = vm.dim(0), w = vm.dim(1), c = vm.dim(2), n = vg.dim(0);
        Tensor<Real> out({n, c});
        for (int i = 0; i < n; ++i) {
            const auto bw = bilinear_at(vg, i, h, w);
            for (int j = 0; j < c; ++j)
                out(i, j) = static_cast<Real>(
                    (1 - bw.wy) * ((1 - bw.wx) * vm(bw.y0, bw.x0, j) + bw.wx * vm(bw.y0, bw.x1, j)) +
                    bw.wy * ((1 - bw.wx) * vm(bw.y1, bw.x0, j) + bw.wx * vm(bw.y1, bw.x1, j)));
        }
        return push(std::move(out), [map, grid, h, w, c, n](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& vm2 = t.value(map);
            const Tensor<Real>& vg2 = t.value(grid);
            Tensor<Real> gm({h, w, c}), gg({n, 2});
            for (int i = 0; i < n; ++i) {
                const auto bw = bilinear_at(vg2, i, h, w);
                double dwx = 0, dwy = 0;
                for (int j = 0; j < c; ++j) {
                    const double gij = g(i, j);
                    const double v00 = vm2(bw.y0, bw.x0, j), v01 = vm2(bw.y0, bw.x1, j);
                    const double v10 = vm2(bw.y1, bw.x0, j), v11 = vm2(bw.y1, bw.x1, j);
                    gm(bw.y0, bw.x0, j) += static_cast<Real>(gij * (1 - bw.wy) * (1 - bw.wx));
                    gm(bw.y0, bw.x1, j) += static_cast<Real>(gij * (1 - bw.wy) * bw.wx);
                    gm(bw.y1, bw.x0, j) += static_cast<Real>(gij * bw.wy * (1 - bw.wx));
                    gm(bw.y1, bw.x1, j) += static_cast<Real>(gij * bw.wy * bw.wx);
                    dwx += gij * ((1 - bw.wy) * (v01 - v00) + bw.wy * (v11 - v10));
                    dwy += gij * ((1 - bw.wx) * (v10 - v00) + bw.wx * (v11 - v01));
                }
                gg(i, 0) = static_cast<Real>(bw.grad_x ? dwx : 0.0);
                gg(i, 1) = static_cast<Real>(bw.grad_y ? dwy : 0.0);
            }
            t.accumulate(map, gm);
            t.accumulate(grid, gg);
        }, "grid_sample");
    }

    // V: [n,3] camera-frame points to pixel coordinates [n,2]
    Id project_points(Id vertices, Camera cam) {
        const Tensor<Real>& vv = value(vertices);
        require(vv.ndim() == 2 && vv.dim(1) == 3, "project_points: need [n,3]");
        const int n = vv.dim(0);
        Tensor<Real> out({n, 2});
        for (int i = 0; i < n; ++i) {
            const double z = vv(i, 2);
            if (z <= kMinDepth)
                throw std::runtime_error("project_points: non-positive depth at vertex " +
                                         std::to_string(i));
            out(i, 0) = static_cast<Real>(cam.fx * vv(i, 0) / z + cam.cx);
            out(i, 1) = static_cast<Real>(cam.fy * vv(i, 1) / z + cam.cy);
        }
        return push(std::move(out), [vertices, cam, n](Tape& t, Id self) {
            const Tensor<Real>& g = t.grad(self);
            const Tensor<Real>& vv2 = t.value(vertices);
            Tensor<Real> gv({n, 3});
            for (int i = 0; i < n; ++i) {
                const double x = vv2(i, 0), y = vv2(i, 1), z = vv2(i, 2);
                gv(i, 0) = static_cast<Real>(g(i, 0) * cam.fx / z);
                gv(i, 1) = static_cast<Real>(g(i, 1) * cam.fy / z);
                gv(i, 2) = static_cast<Real>(-g(i, 0) * cam.fx * x / (z * z) -
                                             g(i, 1) * cam.fy * y / (z * z));
            }
            t.accumulate(vertices, gv);
        }, "project_points");
    }

    Id detach(Id x) { return push(Tensor<Real>(value(x)), nullptr, "detach"); }

    // mean binary cross-entropy from logits, log-sum-exp form
    Id bce_with_logits(Id logits, Id targets) {
        const Tensor<Real>& vz = value(logits);
        const Tensor<Real>& vt = value(targets);
        require(vz.same_shape(vt), "bce_with_logits: shape mismatch");
        const int64_t n = vz.numel();
        double loss = 0;
        for (int64_t i = 0; i < n; ++i) {
            const double z = vz[i], t = vt[i];
            loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
        }
        Tensor<Real> out({1});
        out[0] = static_cast<Real>(loss / static_cast<double>(n));
        return push(std::move(out), [logits, targets, n](Tape& t, Id self) {
            const double g = t.grad(self)[0];
            const Tensor<Real>& vz2 = t.value(logits);
            const Tensor<Real>& vt2 = t.value(targets);
            Tensor<Real> gz(vz2.shape()), gt(vt2.shape());
            for (int64_t i = 0; i < n; ++i) {
                const double z = vz2[i];
                const double sig = 1.0 / (1.0 + std::exp(-z));
                gz[i] = static_cast<Real>(g * (sig - static_cast<double>(vt2[i])) /
                                          static_cast<double>(n));
                gt[i] = static_cast<Real>(-g * z / static_cast<double>(n));
            }
            t.accumulate(logits, gz);
            t.accumulate(targets, gt);
        }, "bce_with_logits");
    }

    // ---- backward ----------------------------------------------------------

    void backward(Id loss) {
        require(value(loss).numel() == 1, "backward: loss must be scalar");
        for (Node& n : nodes_) n.grad = Tensor<Real>();
        Node& ln = nodes_[static_cast<size_t>(loss)];
        ln.grad = Tensor<Real>(ln.value.shape());
        ln.grad[0] = Real(1);
        for (Id id = loss; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.grad.numel() == 0) continue;  // not reached from the loss
            if (n.back) n.back(*this, id);
            if (n.par) {
                for (int64_t i = 0; i < n.grad.numel(); ++i) n.par->grad[i] += n.grad[i];
            }
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad;
        std::function<void(Tape&, Id)> back;
        Parameter<Real>* par = nullptr;
    };

    static detail::BilinearWeights bilinear_at(const Tensor<Real>& grid, int i, int h, int w) {
        return detail::bilinear_weights(static_cast<double>(grid(i, 0)),
                                        static_cast<double>(grid(i, 1)), h, w);
    }

    const Tensor<Real>& grad(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }

    void accumulate(Id id, const Tensor<Real>& g) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.numel() == 0) n.grad = Tensor<Real>(n.value.shape());
        require(n.grad.same_shape(g), "backward: gradient shape mismatch");
        for (int64_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
    }

    void accumulate(Id id, Tensor<Real>&& g) { accumulate(id, static_cast<const Tensor<Real>&>(g)); }

    Id push(Tensor<Real> value, std::function<void(Tape&, Id)> back, const char* op) {
        if (check_finite_ && !value.all_finite())
            throw std::runtime_error(std::string("tape: non-finite output of ") + op);
        nodes_.push_back(Node{std::move(value), Tensor<Real>(), std::move(back), nullptr});
        return static_cast<Id>(nodes_.size() - 1);
    }

    static void require(bool cond, const char* msg) {
        if (!cond) throw std::invalid_argument(msg);
    }

    std::vector<Node> nodes_;
    bool check_finite_;
};

}  // namespace meshrec
