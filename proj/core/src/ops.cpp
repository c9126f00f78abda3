#include "palette/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace palette {

namespace blas {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        double* ci = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        double* ci = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += ai[p] * bj[p];
            }
            ci[j] += acc;
        }
    }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
    for (int p = 0; p < k; ++p) {
        const double* ap = a + static_cast<std::size_t>(p) * m;
        const double* bp = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double api = ap[i];
            if (api == 0.0) continue;
            double* ci = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                ci[j] += api * bp[j];
            }
        }
    }
}

}  // namespace blas

namespace {

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) {
        throw std::invalid_argument(std::string(op) + ": undefined tensor operand");
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.ndim() != 2) {
        throw std::invalid_argument(std::string(op) + ": expected a 2-D tensor, got " +
                                    shape_str(t.shape()));
    }
}

// x viewed as a matrix: 1-D tensors count as a single row.
void matrix_view(const Tensor& t, int& r, int& c, const char* op) {
    if (t.ndim() == 1) {
        r = 1;
        c = t.dim(0);
    } else if (t.ndim() == 2) {
        r = t.dim(0);
        c = t.dim(1);
    } else {
        throw std::invalid_argument(std::string(op) + ": expected a 1-D or 2-D tensor, got " +
                                    shape_str(t.shape()));
    }
}

double gauss_cdf(double x) { return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)); }

double gauss_pdf(double x) {
    static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

template <typename Fwd, typename Dfwd>
Tensor elementwise_unary(const Tensor& x, const char* /*name*/, Fwd f, Dfwd df) {
    std::vector<double> out(x.numel());
    const auto& xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(xd[i]);
    }
    return Tensor::make_op(x.shape(), std::move(out), {x}, [df](detail::Node& o) {
        Tensor& px = o.parents[0];
        if (!px.requires_grad()) return;
        auto& g = px.grad();
        const auto& xd = px.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += o.grad[i] * df(xd[i], o.data[i]);
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_defined(a, "add");
    require_defined(b, "add");
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& o) {
        for (int side = 0; side < 2; ++side) {
            Tensor& p = o.parents[side];
            if (!p.requires_grad()) continue;
            auto& g = p.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_defined(a, "sub");
    require_defined(b, "sub");
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
    return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& o) {
        Tensor& pa = o.parents[0];
        Tensor& pb = o.parents[1];
        if (pa.requires_grad()) {
            auto& g = pa.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (pb.requires_grad()) {
            auto& g = pb.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_defined(a, "mul");
    require_defined(b, "mul");
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& o) {
        Tensor& pa = o.parents[0];
        Tensor& pb = o.parents[1];
        if (pa.requires_grad()) {
            auto& g = pa.grad();
            const auto& bd = pb.data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bd[i];
        }
        if (pb.requires_grad()) {
            auto& g = pb.grad();
            const auto& ad = pa.data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ad[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    require_defined(a, "scale");
    std::vector<double> out(a.numel());
    const auto& ad = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * c;
    return Tensor::make_op(a.shape(), std::move(out), {a}, [c](detail::Node& o) {
        Tensor& p = o.parents[0];
        if (!p.requires_grad()) return;
        auto& g = p.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * c;
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    blas::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
    return Tensor::make_op({m, n}, std::move(out), {a, b}, [m, n, k](detail::Node& o) {
        Tensor& pa = o.parents[0];
        Tensor& pb = o.parents[1];
        if (pa.requires_grad()) {
            // dA += dC · Bᵀ
            blas::gemm_nt(m, k, n, o.grad.data(), pb.data().data(), pa.grad().data());
        }
        if (pb.requires_grad()) {
            // dB += Aᵀ · dC
            blas::gemm_tn(k, n, m, pa.data().data(), o.grad.data(), pb.grad().data());
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul_nt");
    require_defined(b, "matmul_nt");
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (k != b.dim(1)) {
        throw std::invalid_argument("matmul_nt: inner dimensions disagree: " +
                                    shape_str(a.shape()) + " x " + shape_str(b.shape()) + "ᵀ");
    }
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    blas::gemm_nt(m, n, k, a.data().data(), b.data().data(), out.data());
    return Tensor::make_op({m, n}, std::move(out), {a, b}, [m, n, k](detail::Node& o) {
        Tensor& pa = o.parents[0];
        Tensor& pb = o.parents[1];
        if (pa.requires_grad()) {
            // dA += dC · B
            blas::gemm_nn(m, k, n, o.grad.data(), pb.data().data(), pa.grad().data());
        }
        if (pb.requires_grad()) {
            // dB += dCᵀ · A
            blas::gemm_tn(n, k, m, o.grad.data(), pa.data().data(), pb.grad().data());
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w) {
    require_defined(x, "linear");
    require_defined(w, "linear");
    require_matrix(w, "linear");
    int l, din;
    matrix_view(x, l, din, "linear");
    const int dout = w.dim(0);
    if (w.dim(1) != din) {
        throw std::invalid_argument("linear: input width " + shape_str(x.shape()) +
                                    " does not match weight " + shape_str(w.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(l) * dout, 0.0);
    blas::gemm_nt(l, dout, din, x.data().data(), w.data().data(), out.data());
    std::vector<int> oshape = (x.ndim() == 1) ? std::vector<int>{dout} : std::vector<int>{l, dout};
    return Tensor::make_op(std::move(oshape), std::move(out), {x, w},
                           [l, din, dout](detail::Node& o) {
                               Tensor& px = o.parents[0];
                               Tensor& pw = o.parents[1];
                               if (px.requires_grad()) {
                                   // dX += dY · W
                                   blas::gemm_nn(l, din, dout, o.grad.data(), pw.data().data(),
                                                 px.grad().data());
                               }
                               if (pw.requires_grad()) {
                                   // dW += dYᵀ · X
                                   blas::gemm_tn(dout, din, l, o.grad.data(), px.data().data(),
                                                 pw.grad().data());
                               }
                           });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_defined(b, "linear");
    Tensor y = linear(x, w);
    const int dout = y.cols();
    if (b.ndim() != 1 || b.dim(0) != dout) {
        throw std::invalid_argument("linear: bias shape " + shape_str(b.shape()) +
                                    " does not match output width " + std::to_string(dout));
    }
    const int l = y.rows();
    std::vector<double> out = y.data();
    const auto& bd = b.data();
    for (int r = 0; r < l; ++r) {
        double* orow = out.data() + static_cast<std::size_t>(r) * dout;
        for (int c = 0; c < dout; ++c) orow[c] += bd[c];
    }
    return Tensor::make_op(y.shape(), std::move(out), {y, b}, [l, dout](detail::Node& o) {
        Tensor& py = o.parents[0];
        Tensor& pb = o.parents[1];
        if (py.requires_grad()) {
            auto& g = py.grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (pb.requires_grad()) {
            auto& g = pb.grad();
            for (int r = 0; r < l; ++r) {
                const double* grow = o.grad.data() + static_cast<std::size_t>(r) * dout;
                for (int c = 0; c < dout; ++c) g[c] += grow[c];
            }
        }
    });
}

Tensor softmax(const Tensor& v) {
    require_defined(v, "softmax");
    if (v.ndim() != 1 || v.dim(0) < 1) {
        throw std::invalid_argument("softmax: expected a non-empty vector, got " +
                                    shape_str(v.shape()));
    }
    const auto& vd = v.data();
    double mx = vd[0];
    for (double x : vd) {
        if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite input");
        mx = std::max(mx, x);
    }
    std::vector<double> out(vd.size());
    double z = 0.0;
    for (std::size_t i = 0; i < vd.size(); ++i) {
        out[i] = std::exp(vd[i] - mx);
        z += out[i];
    }
    for (double& x : out) x /= z;
    return Tensor::make_op(v.shape(), std::move(out), {v}, [](detail::Node& o) {
        Tensor& p = o.parents[0];
        if (!p.requires_grad()) return;
        auto& g = p.grad();
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += o.grad[i] * o.data[i];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.data[i] * (o.grad[i] - dot);
    });
}

Tensor softmax_rows(const Tensor& scores, const std::vector<std::uint8_t>& key_mask) {
    require_defined(scores, "softmax_rows");
    require_matrix(scores, "softmax_rows");
    const int q = scores.dim(0), k = scores.dim(1);
    if (!key_mask.empty()) {
        if (static_cast<int>(key_mask.size()) != k) {
            throw std::invalid_argument("softmax_rows: mask length " +
                                        std::to_string(key_mask.size()) +
                                        " does not match key count " + std::to_string(k));
        }
        bool any = false;
        for (auto m : key_mask) any = any || (m != 0);
        if (!any) throw std::invalid_argument("softmax_rows: all positions masked");
    }
    // Masked keys get -1e30 added pre-softmax; after max subtraction their
    // exponent underflows to exactly zero weight.
    constexpr double kMaskOffset = -1e30;
    std::vector<double> out(static_cast<std::size_t>(q) * k);
    const auto& sd = scores.data();
    for (int r = 0; r < q; ++r) {
        const double* srow = sd.data() + static_cast<std::size_t>(r) * k;
        double* orow = out.data() + static_cast<std::size_t>(r) * k;
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            const double s = srow[c] + ((!key_mask.empty() && !key_mask[c]) ? kMaskOffset : 0.0);
            orow[c] = s;
            mx = std::max(mx, s);
        }
        double z = 0.0;
        for (int c = 0; c < k; ++c) {
            orow[c] = std::exp(orow[c] - mx);
            z += orow[c];
        }
        for (int c = 0; c < k; ++c) orow[c] /= z;
    }
    return Tensor::make_op({q, k}, std::move(out), {scores}, [q, k](detail::Node& o) {
        Tensor& p = o.parents[0];
        if (!p.requires_grad()) return;
        auto& g = p.grad();
        for (int r = 0; r < q; ++r) {
            const std::size_t base = static_cast<std::size_t>(r) * k;
            double dot = 0.0;
            for (int c = 0; c < k; ++c) dot += o.grad[base + c] * o.data[base + c];
            for (int c = 0; c < k; ++c) {
                g[base + c] += o.data[base + c] * (o.grad[base + c] - dot);
            }
        }
    });
}

Tensor gelu(const Tensor& x) {
    require_defined(x, "gelu");
    return elementwise_unary(
        x, "gelu", [](double v) { return v * gauss_cdf(v); },
        [](double v, double) { return gauss_cdf(v) + v * gauss_pdf(v); });
}

Tensor tanh_act(const Tensor& x) {
    require_defined(x, "tanh_act");
    return elementwise_unary(
        x, "tanh_act", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid_act(const Tensor& x) {
    require_defined(x, "sigmoid_act");
    return elementwise_unary(
        x, "sigmoid_act", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_defined(x, "layer_norm");
    require_defined(gain, "layer_norm");
    require_defined(bias, "layer_norm");
    int rows, cols;
    matrix_view(x, rows, cols, "layer_norm");
    if (cols < 2) {
        throw std::invalid_argument("layer_norm: needs at least 2 features, got " +
                                    shape_str(x.shape()));
    }
    if (gain.ndim() != 1 || gain.dim(0) != cols || bias.ndim() != 1 || bias.dim(0) != cols) {
        throw std::invalid_argument("layer_norm: gain/bias must be vectors of length " +
                                    std::to_string(cols));
    }
    std::vector<double> out(x.numel());
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    const auto& xd = x.data();
    const auto& gd = gain.data();
    const auto& bd = bias.data();
    for (int r = 0; r < rows; ++r) {
        const double* xr = xd.data() + static_cast<std::size_t>(r) * cols;
        double* orow = out.data() + static_cast<std::size_t>(r) * cols;
        double mean = 0.0;
        for (int c = 0; c < cols; ++c) mean += xr[c];
        mean /= cols;
        double var = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double d = xr[c] - mean;
            var += d * d;
        }
        var /= cols;  // population variance
        const double s = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = s;
        for (int c = 0; c < cols; ++c) {
            orow[c] = gd[c] * (xr[c] - mean) * s + bd[c];
        }
    }
    return Tensor::make_op(
        x.shape(), std::move(out), {x, gain, bias},
        [rows, cols, inv_std = std::move(inv_std)](detail::Node& o) {
            Tensor& px = o.parents[0];
            Tensor& pg = o.parents[1];
            Tensor& pb = o.parents[2];
            const auto& xd = px.data();
            const auto& gd = pg.data();
            for (int r = 0; r < rows; ++r) {
                const std::size_t base = static_cast<std::size_t>(r) * cols;
                const double* xr = xd.data() + base;
                const double s = inv_std[static_cast<std::size_t>(r)];
                double mean = 0.0;
                for (int c = 0; c < cols; ++c) mean += xr[c];
                mean /= cols;
                // dxhat, and the two row reductions of the standard formula
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int c = 0; c < cols; ++c) {
                    const double xhat = (xr[c] - mean) * s;
                    const double dxhat = o.grad[base + c] * gd[c];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
                if (px.requires_grad()) {
                    auto& gx = px.grad();
                    for (int c = 0; c < cols; ++c) {
                        const double xhat = (xr[c] - mean) * s;
                        const double dxhat = o.grad[base + c] * gd[c];
                        gx[base + c] +=
                            s * (dxhat - sum_dxhat / cols - xhat * sum_dxhat_xhat / cols);
                    }
                }
                if (pg.requires_grad()) {
                    auto& gg = pg.grad();
                    for (int c = 0; c < cols; ++c) {
                        const double xhat = (xr[c] - mean) * s;
                        gg[c] += o.grad[base + c] * xhat;
                    }
                }
                if (pb.requires_grad()) {
                    auto& gb = pb.grad();
                    for (int c = 0; c < cols; ++c) gb[c] += o.grad[base + c];
                }
            }
        });
}

Tensor mul_cols(const Tensor& x, const Tensor& s) {
    require_defined(x, "mul_cols");
    require_defined(s, "mul_cols");
    int rows, cols;
    matrix_view(x, rows, cols, "mul_cols");
    if (s.ndim() != 1 || s.dim(0) != cols) {
        throw std::invalid_argument("mul_cols: scale shape " + shape_str(s.shape()) +
                                    " does not match width " + std::to_string(cols));
    }
    std::vector<double> out(x.numel());
    const auto& xd = x.data();
    const auto& sd = s.data();
    for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) out[base + c] = xd[base + c] * sd[c];
    }
    return Tensor::make_op(x.shape(), std::move(out), {x, s}, [rows, cols](detail::Node& o) {
        Tensor& px = o.parents[0];
        Tensor& ps = o.parents[1];
        if (px.requires_grad()) {
            auto& g = px.grad();
            const auto& sd = ps.data();
            for (int r = 0; r < rows; ++r) {
                const std::size_t base = static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) g[base + c] += o.grad[base + c] * sd[c];
            }
        }
        if (ps.requires_grad()) {
            auto& g = ps.grad();
            const auto& xd = px.data();
            for (int r = 0; r < rows; ++r) {
                const std::size_t base = static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) g[c] += o.grad[base + c] * xd[base + c];
            }
        }
    });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    require_defined(table, "gather_rows");
    require_matrix(table, "gather_rows");
    if (ids.empty()) {
        throw std::invalid_argument("gather_rows: empty id list");
    }
    const int v = table.dim(0), d = table.dim(1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v) {
            throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) +
                                    " out of range [0," + std::to_string(v) + ") at position " +
                                    std::to_string(i));
        }
    }
    const int l = static_cast<int>(ids.size());
    std::vector<double> out(static_cast<std::size_t>(l) * d);
    const auto& td = table.data();
    for (int r = 0; r < l; ++r) {
        const double* src = td.data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(r)]) * d;
        std::copy(src, src + d, out.data() + static_cast<std::size_t>(r) * d);
    }
    return Tensor::make_op({l, d}, std::move(out), {table}, [ids, d](detail::Node& o) {
        Tensor& p = o.parents[0];
        if (!p.requires_grad()) return;
        auto& g = p.grad();
        for (std::size_t r = 0; r < ids.size(); ++r) {
            double* dst = g.data() + static_cast<std::size_t>(ids[r]) * d;
            const double* src = o.grad.data() + r * d;
            for (int c = 0; c < d; ++c) dst[c] += src[c];
        }
    });
}

Tensor slice_cols(const Tensor& x, int offset, int len) {
    require_defined(x, "slice_cols");
    require_matrix(x, "slice_cols");
    const int rows = x.dim(0), cols = x.dim(1);
    if (offset < 0 || len <= 0 || offset + len > cols) {
        throw std::invalid_argument("slice_cols: slice [" + std::to_string(offset) + "," +
                                    std::to_string(offset + len) + ") outside width " +
                                    std::to_string(cols));
    }
    std::vector<double> out(static_cast<std::size_t>(rows) * len);
    const auto& xd = x.data();
    for (int r = 0; r < rows; ++r) {
        const double* src = xd.data() + static_cast<std::size_t>(r) * cols + offset;
        std::copy(src, src + len, out.data() + static_cast<std::size_t>(r) * len);
    }
    return Tensor::make_op({rows, len}, std::move(out), {x},
                           [rows, cols, offset, len](detail::Node& o) {
                               Tensor& p = o.parents[0];
                               if (!p.requires_grad()) return;
                               auto& g = p.grad();
                               for (int r = 0; r < rows; ++r) {
                                   double* dst = g.data() + static_cast<std::size_t>(r) * cols + offset;
                                   const double* src = o.grad.data() + static_cast<std::size_t>(r) * len;
                                   for (int c = 0; c < len; ++c) dst[c] += src[c];
                               }
                           });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_cols: no parts");
    }
    const int rows = parts[0].rows();
    int total = 0;
    for (const Tensor& p : parts) {
        require_defined(p, "concat_cols");
        require_matrix(p, "concat_cols");
        if (p.dim(0) != rows) {
            throw std::invalid_argument("concat_cols: row mismatch " + shape_str(p.shape()));
        }
        total += p.dim(1);
    }
    std::vector<double> out(static_cast<std::size_t>(rows) * total);
    std::vector<int> offsets;
    int off = 0;
    for (const Tensor& p : parts) {
        offsets.push_back(off);
        const int w = p.dim(1);
        const auto& pd = p.data();
        for (int r = 0; r < rows; ++r) {
            std::copy(pd.data() + static_cast<std::size_t>(r) * w,
                      pd.data() + static_cast<std::size_t>(r) * w + w,
                      out.data() + static_cast<std::size_t>(r) * total + off);
        }
        off += w;
    }
    return Tensor::make_op({rows, total}, std::move(out), parts,
                           [rows, total, offsets](detail::Node& o) {
                               for (std::size_t i = 0; i < o.parents.size(); ++i) {
                                   Tensor& p = o.parents[i];
                                   if (!p.requires_grad()) continue;
                                   const int w = p.dim(1);
                                   const int off = offsets[i];
                                   auto& g = p.grad();
                                   for (int r = 0; r < rows; ++r) {
                                       const double* src =
                                           o.grad.data() + static_cast<std::size_t>(r) * total + off;
                                       double* dst = g.data() + static_cast<std::size_t>(r) * w;
                                       for (int c = 0; c < w; ++c) dst[c] += src[c];
                                   }
                               }
                           });
}

Tensor row(const Tensor& x, int r) {
    require_defined(x, "row");
    require_matrix(x, "row");
    const int rows = x.dim(0), cols = x.dim(1);
    if (r < 0 || r >= rows) {
        throw std::out_of_range("row: index " + std::to_string(r) + " outside " +
                                shape_str(x.shape()));
    }
    const auto& xd = x.data();
    std::vector<double> out(xd.begin() + static_cast<std::size_t>(r) * cols,
                            xd.begin() + static_cast<std::size_t>(r + 1) * cols);
    return Tensor::make_op({1, cols}, std::move(out), {x}, [r, cols](detail::Node& o) {
        Tensor& p = o.parents[0];
        if (!p.requires_grad()) return;
        auto& g = p.grad();
        for (int c = 0; c < cols; ++c) g[static_cast<std::size_t>(r) * cols + c] += o.grad[c];
    });
}

Tensor sum(const Tensor& x) {
    require_defined(x, "sum");
    double total = 0.0;
    for (double v : x.data()) total += v;
    return Tensor::make_op({1}, {total}, {x}, [](detail::Node& o) {
        Tensor& p = o.parents[0];
        if (!p.requires_grad()) return;
        auto& g = p.grad();
        for (double& gi : g) gi += o.grad[0];
    });
}

Tensor pick(const Tensor& x, int flat_index) {
    require_defined(x, "pick");
    if (flat_index < 0 || static_cast<std::size_t>(flat_index) >= x.numel()) {
        throw std::out_of_range("pick: index " + std::to_string(flat_index) + " outside " +
                                shape_str(x.shape()));
    }
    return Tensor::make_op({1}, {x.data()[static_cast<std::size_t>(flat_index)]}, {x},
                           [flat_index](detail::Node& o) {
                               Tensor& p = o.parents[0];
                               if (!p.requires_grad()) return;
                               p.grad()[static_cast<std::size_t>(flat_index)] += o.grad[0];
                           });
}

Tensor cross_entropy_with_logits(const Tensor& logits, int label) {
    require_defined(logits, "cross_entropy");
    int rows, k;
    matrix_view(logits, rows, k, "cross_entropy");
    if (rows != 1) {
        throw std::invalid_argument("cross_entropy: expected a single row of logits, got " +
                                    shape_str(logits.shape()));
    }
    if (label < 0 || label >= k) {
        throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                                " outside [0," + std::to_string(k) + ")");
    }
    const auto& ld = logits.data();
    double mx = ld[0];
    for (double v : ld) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : ld) z += std::exp(v - mx);
    const double loss = std::log(z) + mx - ld[static_cast<std::size_t>(label)];
    return Tensor::make_op({1}, {loss}, {logits}, [label, k, mx, z](detail::Node& o) {
        Tensor& p = o.parents[0];
        if (!p.requires_grad()) return;
        auto& g = p.grad();
        const auto& ld = p.data();
        for (int c = 0; c < k; ++c) {
            const double soft = std::exp(ld[static_cast<std::size_t>(c)] - mx) / z;
            g[static_cast<std::size_t>(c)] +=
                o.grad[0] * (soft - (c == label ? 1.0 : 0.0));
        }
    });
}

Tensor squared_error(const Tensor& pred, double target) {
    require_defined(pred, "squared_error");
    if (pred.numel() != 1) {
        throw std::invalid_argument("squared_error: prediction must be scalar, got " +
                                    shape_str(pred.shape()));
    }
    const double diff = pred.data()[0] - target;
    return Tensor::make_op({1}, {diff * diff}, {pred}, [diff](detail::Node& o) {
        Tensor& p = o.parents[0];
        if (!p.requires_grad()) return;
        p.grad()[0] += o.grad[0] * 2.0 * diff;
    });
}

}  // namespace palette
