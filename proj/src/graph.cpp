#include "avstream/graph.h"

#include <cmath>
#include <memory>

#include "avstream/errors.h"
#include "avstream/parallel.h"

namespace avs {

namespace {
constexpr double kGeluA = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluB = 0.044715;
}  // namespace

VarId Graph::push(Tensor val, bool needs_grad, std::function<void()> back) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = grad_enabled_ && needs_grad;
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size() - 1);
}

Tensor& Graph::grad_buf(VarId id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Tensor(n.val.rows, n.val.cols);
    return n.grad;
}

VarId Graph::constant(Tensor t) { return push(std::move(t), false); }

VarId Graph::param(ParamTensor& p) {
    VarId id = push(p.value, true);
    nodes_[id].param = &p;
    nodes_[id].back = [this, id, pp = &p]() {
        if (pp->grad.size() == 0) pp->grad = Tensor(pp->value.rows, pp->value.cols);
        add_inplace(pp->grad, nodes_[id].grad);
    };
    return id;
}

VarId Graph::matmul(VarId a, VarId b) {
    Tensor out;
    avs::matmul(val(a), val(b), out);
    bool ng = needs_grad(a) || needs_grad(b);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a, b]() {
            const Tensor& g = nodes_[id].grad;
            if (needs_grad(a)) {
                Tensor ga;
                matmul_nt(g, val(b), ga);
                add_inplace(grad_buf(a), ga);
            }
            if (needs_grad(b)) matmul_tn(val(a), g, grad_buf(b), true);
        };
    return id;
}

VarId Graph::add(VarId a, VarId b) {
    if (!val(a).same_shape(val(b))) throw shape_error("add: shape mismatch");
    Tensor out = val(a);
    add_inplace(out, val(b));
    bool ng = needs_grad(a) || needs_grad(b);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a, b]() {
            const Tensor& g = nodes_[id].grad;
            if (needs_grad(a)) add_inplace(grad_buf(a), g);
            if (needs_grad(b)) add_inplace(grad_buf(b), g);
        };
    return id;
}

VarId Graph::sub(VarId a, VarId b) {
    if (!val(a).same_shape(val(b))) throw shape_error("sub: shape mismatch");
    Tensor out = val(a);
    add_inplace(out, val(b), -1.0);
    bool ng = needs_grad(a) || needs_grad(b);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a, b]() {
            const Tensor& g = nodes_[id].grad;
            if (needs_grad(a)) add_inplace(grad_buf(a), g);
            if (needs_grad(b)) add_inplace(grad_buf(b), g, -1.0);
        };
    return id;
}

VarId Graph::mul(VarId a, VarId b) {
    if (!val(a).same_shape(val(b))) throw shape_error("mul: shape mismatch");
    Tensor out = val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= val(b).data[i];
    bool ng = needs_grad(a) || needs_grad(b);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a, b]() {
            const Tensor& g = nodes_[id].grad;
            if (needs_grad(a)) {
                Tensor& ga = grad_buf(a);
                const Tensor& vb = val(b);
                for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
            }
            if (needs_grad(b)) {
                Tensor& gb = grad_buf(b);
                const Tensor& va = val(a);
                for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
            }
        };
    return id;
}

VarId Graph::scale(VarId a, double c) {
    Tensor out = val(a);
    for (auto& x : out.data) x *= c;
    bool ng = needs_grad(a);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a, c]() { add_inplace(grad_buf(a), nodes_[id].grad, c); };
    return id;
}

VarId Graph::add_scalar(VarId a, double c) {
    Tensor out = val(a);
    for (auto& x : out.data) x += c;
    bool ng = needs_grad(a);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a]() { add_inplace(grad_buf(a), nodes_[id].grad); };
    return id;
}

VarId Graph::add_rowvec(VarId x, VarId v) {
    const Tensor& xv = val(x);
    const Tensor& vv = val(v);
    if (vv.rows != 1 || vv.cols != xv.cols) throw shape_error("add_rowvec: bad bias shape");
    Tensor out = xv;
    for (size_t r = 0; r < out.rows; ++r)
        for (size_t c = 0; c < out.cols; ++c) out.at(r, c) += vv.at(0, c);
    bool ng = needs_grad(x) || needs_grad(v);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, v]() {
            const Tensor& g = nodes_[id].grad;
            if (needs_grad(x)) add_inplace(grad_buf(x), g);
            if (needs_grad(v)) {
                Tensor& gv = grad_buf(v);
                for (size_t r = 0; r < g.rows; ++r)
                    for (size_t c = 0; c < g.cols; ++c) gv.at(0, c) += g.at(r, c);
            }
        };
    return id;
}

VarId Graph::mul_rowvec(VarId x, VarId v) {
    const Tensor& xv = val(x);
    const Tensor& vv = val(v);
    if (vv.rows != 1 || vv.cols != xv.cols) throw shape_error("mul_rowvec: bad vector shape");
    Tensor out = xv;
    for (size_t r = 0; r < out.rows; ++r)
        for (size_t c = 0; c < out.cols; ++c) out.at(r, c) *= vv.at(0, c);
    bool ng = needs_grad(x) || needs_grad(v);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, v]() {
            const Tensor& g = nodes_[id].grad;
            if (needs_grad(x)) {
                Tensor& gx = grad_buf(x);
                const Tensor& vvv = val(v);
                for (size_t r = 0; r < g.rows; ++r)
                    for (size_t c = 0; c < g.cols; ++c) gx.at(r, c) += g.at(r, c) * vvv.at(0, c);
            }
            if (needs_grad(v)) {
                Tensor& gv = grad_buf(v);
                const Tensor& xvv = val(x);
                for (size_t r = 0; r < g.rows; ++r)
                    for (size_t c = 0; c < g.cols; ++c) gv.at(0, c) += g.at(r, c) * xvv.at(r, c);
            }
        };
    return id;
}

VarId Graph::linear(VarId x, VarId w, VarId b) {
    Tensor out;
    avs::matmul(val(x), val(w), out);
    const Tensor& bv = val(b);
    if (bv.rows != 1 || bv.cols != out.cols) throw shape_error("linear: bad bias shape");
    for (size_t r = 0; r < out.rows; ++r)
        for (size_t c = 0; c < out.cols; ++c) out.at(r, c) += bv.at(0, c);
    bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, w, b]() {
            const Tensor& g = nodes_[id].grad;
            if (needs_grad(x)) {
                Tensor gx;
                matmul_nt(g, val(w), gx);
                add_inplace(grad_buf(x), gx);
            }
            if (needs_grad(w)) matmul_tn(val(x), g, grad_buf(w), true);
            if (needs_grad(b)) {
                Tensor& gb = grad_buf(b);
                for (size_t r = 0; r < g.rows; ++r)
                    for (size_t c = 0; c < g.cols; ++c) gb.at(0, c) += g.at(r, c);
            }
        };
    return id;
}

VarId Graph::layer_norm(VarId x, double eps) {
    const Tensor& xv = val(x);
    Tensor out(xv.rows, xv.cols);
    std::vector<double> inv_sigma(xv.rows);
    const double n = static_cast<double>(xv.cols);
    for (size_t r = 0; r < xv.rows; ++r) {
        const double* xr = xv.row(r);
        double mu = 0.0;
        for (size_t c = 0; c < xv.cols; ++c) mu += xr[c];
        mu /= n;
        double var = 0.0;
        for (size_t c = 0; c < xv.cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = is;
        double* yr = out.row(r);
        for (size_t c = 0; c < xv.cols; ++c) yr[c] = (xr[c] - mu) * is;
    }
    bool ng = needs_grad(x);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, inv_sigma = std::move(inv_sigma), n]() {
            const Tensor& g = nodes_[id].grad;
            const Tensor& y = nodes_[id].val;
            Tensor& gx = grad_buf(x);
            for (size_t r = 0; r < g.rows; ++r) {
                const double* gr = g.row(r);
                const double* yr = y.row(r);
                double gmean = 0.0, gymean = 0.0;
                for (size_t c = 0; c < g.cols; ++c) {
                    gmean += gr[c];
                    gymean += gr[c] * yr[c];
                }
                gmean /= n;
                gymean /= n;
                double* gxr = gx.row(r);
                for (size_t c = 0; c < g.cols; ++c)
                    gxr[c] += inv_sigma[r] * (gr[c] - gmean - yr[c] * gymean);
            }
        };
    return id;
}

VarId Graph::gelu(VarId x) {
    const Tensor& xv = val(x);
    Tensor out(xv.rows, xv.cols);
    for (size_t i = 0; i < xv.data.size(); ++i) {
        const double v = xv.data[i];
        out.data[i] = 0.5 * v * (1.0 + std::tanh(kGeluA * (v + kGeluB * v * v * v)));
    }
    bool ng = needs_grad(x);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x]() {
            const Tensor& g = nodes_[id].grad;
            const Tensor& xin = val(x);
            Tensor& gx = grad_buf(x);
            for (size_t i = 0; i < g.data.size(); ++i) {
                const double v = xin.data[i];
                const double u = kGeluA * (v + kGeluB * v * v * v);
                const double th = std::tanh(u);
                const double d =
                    0.5 * (1.0 + th) +
                    0.5 * v * (1.0 - th * th) * kGeluA * (1.0 + 3.0 * kGeluB * v * v);
                gx.data[i] += g.data[i] * d;
            }
        };
    return id;
}

VarId Graph::tanh_op(VarId x) {
    Tensor out = val(x);
    for (auto& v : out.data) v = std::tanh(v);
    bool ng = needs_grad(x);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x]() {
            const Tensor& g = nodes_[id].grad;
            const Tensor& y = nodes_[id].val;
            Tensor& gx = grad_buf(x);
            for (size_t i = 0; i < g.data.size(); ++i)
                gx.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
        };
    return id;
}

VarId Graph::slice_rows(VarId x, size_t r0, size_t r1) {
    const Tensor& xv = val(x);
    if (r0 > r1 || r1 > xv.rows) throw shape_error("slice_rows: bad range");
    Tensor out(r1 - r0, xv.cols);
    std::copy(xv.row(r0), xv.row(r0) + out.size(), out.data.begin());
    bool ng = needs_grad(x);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, r0]() {
            const Tensor& g = nodes_[id].grad;
            Tensor& gx = grad_buf(x);
            for (size_t r = 0; r < g.rows; ++r)
                for (size_t c = 0; c < g.cols; ++c) gx.at(r0 + r, c) += g.at(r, c);
        };
    return id;
}

VarId Graph::concat_rows(const std::vector<VarId>& xs) {
    if (xs.empty()) throw shape_error("concat_rows: empty input");
    size_t rows = 0;
    const size_t cols = val(xs[0]).cols;
    bool ng = false;
    for (VarId x : xs) {
        if (val(x).cols != cols) throw shape_error("concat_rows: column mismatch");
        rows += val(x).rows;
        ng = ng || needs_grad(x);
    }
    Tensor out(rows, cols);
    size_t r = 0;
    for (VarId x : xs) {
        const Tensor& xv = val(x);
        std::copy(xv.data.begin(), xv.data.end(), out.row(r));
        r += xv.rows;
    }
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, xs]() {
            const Tensor& g = nodes_[id].grad;
            size_t r = 0;
            for (VarId x : xs) {
                const size_t nr = val(x).rows;
                if (needs_grad(x)) {
                    Tensor& gx = grad_buf(x);
                    for (size_t i = 0; i < nr; ++i)
                        for (size_t c = 0; c < g.cols; ++c) gx.at(i, c) += g.at(r + i, c);
                }
                r += nr;
            }
        };
    return id;
}

VarId Graph::select_row(VarId table, size_t r) { return slice_rows(table, r, r + 1); }

VarId Graph::tile_rows(VarId x, size_t times) {
    const Tensor& xv = val(x);
    Tensor out(xv.rows * times, xv.cols);
    for (size_t t = 0; t < times; ++t)
        std::copy(xv.data.begin(), xv.data.end(), out.row(t * xv.rows));
    bool ng = needs_grad(x);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, times]() {
            const Tensor& g = nodes_[id].grad;
            Tensor& gx = grad_buf(x);
            const size_t base = gx.rows;
            for (size_t t = 0; t < times; ++t)
                for (size_t r = 0; r < base; ++r)
                    for (size_t c = 0; c < g.cols; ++c) gx.at(r, c) += g.at(t * base + r, c);
        };
    return id;
}

VarId Graph::rope(VarId x, const RopeTable* table, long token0, int heads) {
    const Tensor& xv = val(x);
    const int hd = static_cast<int>(xv.cols) / heads;
    if (hd != table->head_dim) throw shape_error("rope: head_dim mismatch with table");
    if (token0 < 0 || static_cast<size_t>(token0) + xv.rows > table->rows())
        throw shape_error("rope: token range outside table");
    Tensor out = xv;
    for (size_t r = 0; r < out.rows; ++r)
        for (int h = 0; h < heads; ++h)
            apply_rope_inplace(*table, static_cast<size_t>(token0) + r, out.row(r) + h * hd);
    bool ng = needs_grad(x);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, table, token0, heads, hd]() {
            const Tensor& g = nodes_[id].grad;
            Tensor rot = g;  // Jacobian of a rotation is the inverse rotation
            for (size_t r = 0; r < rot.rows; ++r)
                for (int h = 0; h < heads; ++h)
                    apply_rope_inverse_inplace(*table, static_cast<size_t>(token0) + r,
                                               rot.row(r) + h * hd);
            add_inplace(grad_buf(x), rot);
        };
    return id;
}

VarId Graph::unit_norm_heads(VarId x, int heads, double eps) {
    const Tensor& xv = val(x);
    const size_t hd = xv.cols / heads;
    Tensor out = xv;
    for (size_t r = 0; r < out.rows; ++r)
        for (int h = 0; h < heads; ++h) {
            double* seg = out.row(r) + h * hd;
            double ss = eps;
            for (size_t j = 0; j < hd; ++j) ss += seg[j] * seg[j];
            const double inv = 1.0 / std::sqrt(ss);
            for (size_t j = 0; j < hd; ++j) seg[j] *= inv;
        }
    bool ng = needs_grad(x);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, x, heads, hd, eps]() {
            const Tensor& g = nodes_[id].grad;
            const Tensor& y = nodes_[id].val;
            const Tensor& xin = val(x);
            Tensor& gx = grad_buf(x);
            for (size_t r = 0; r < g.rows; ++r)
                for (int h = 0; h < heads; ++h) {
                    const double* xs = xin.row(r) + h * hd;
                    const double* ys = y.row(r) + h * hd;
                    const double* gs = g.row(r) + h * hd;
                    double ss = eps, dot = 0.0;
                    for (size_t j = 0; j < hd; ++j) {
                        ss += xs[j] * xs[j];
                        dot += ys[j] * gs[j];
                    }
                    const double inv = 1.0 / std::sqrt(ss);
                    double* gxs = gx.row(r) + h * hd;
                    for (size_t j = 0; j < hd; ++j) gxs[j] += inv * (gs[j] - ys[j] * dot);
                }
        };
    return id;
}

VarId Graph::attention(VarId q, VarId k, VarId v, MaskView mask, int heads,
                       bool reduced_precision, const ProbeRequest* probe) {
    const Tensor& qv = val(q);
    const Tensor& kv = val(k);
    const Tensor& vv = val(v);
    if (qv.cols != kv.cols || kv.rows != vv.rows || kv.cols != vv.cols)
        throw shape_error("attention: inconsistent q/k/v shapes");
    if (qv.cols % heads != 0) throw shape_error("attention: cols not divisible by heads");
    const size_t nq = qv.rows, nk = kv.rows, hd = qv.cols / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    bool ng = needs_grad(q) || needs_grad(k) || needs_grad(v);
    const bool keep_probs = ng || probe != nullptr;

    Tensor out(nq, qv.cols);
    // probs laid out [head][query][key]; zero where masked
    auto probs = keep_probs ? std::make_shared<std::vector<double>>(heads * nq * nk, 0.0)
                            : nullptr;

    parallel_for(nq, [&](size_t i) {
        std::vector<double> p(nk);
        for (int h = 0; h < heads; ++h) {
            const double* qrow = qv.row(i) + h * hd;
            // logits over visible keys
            double maxl = -INFINITY;
            for (size_t j = 0; j < nk; ++j) {
                if (!mask.visible(static_cast<long>(i), static_cast<long>(j))) {
                    p[j] = -INFINITY;
                    continue;
                }
                const double* krow = kv.row(j) + h * hd;
                double dot = 0.0;
                for (size_t c = 0; c < hd; ++c) dot += qrow[c] * krow[c];
                p[j] = dot * att_scale;
                if (p[j] > maxl) maxl = p[j];
            }
            double z = 0.0;
            if (reduced_precision) {
                // Half-precision softmax without the max-subtraction guard:
                // large logits overflow to inf and the row degenerates to
                // nan, reproducing low-precision softmax failures.
                for (size_t j = 0; j < nk; ++j) {
                    if (p[j] == -INFINITY) {
                        p[j] = 0.0;
                        continue;
                    }
                    p[j] = to_half_precision(std::exp(to_half_precision(p[j])));
                    z = to_half_precision(z + p[j]);
                }
                for (size_t j = 0; j < nk; ++j)
                    if (p[j] != 0.0 || z != z) p[j] = to_half_precision(p[j] / z);
            } else {
                for (size_t j = 0; j < nk; ++j) {
                    if (p[j] == -INFINITY) {
                        p[j] = 0.0;
                        continue;
                    }
                    p[j] = std::exp(p[j] - maxl);
                    z += p[j];
                }
                const double inv = 1.0 / z;
                for (size_t j = 0; j < nk; ++j) p[j] *= inv;
            }
            double* orow = out.row(i) + h * hd;
            for (size_t c = 0; c < hd; ++c) orow[c] = 0.0;
            for (size_t j = 0; j < nk; ++j) {
                if (p[j] == 0.0) continue;
                const double* vrow = vv.row(j) + h * hd;
                for (size_t c = 0; c < hd; ++c) orow[c] += p[j] * vrow[c];
            }
            if (probs)
                std::copy(p.begin(), p.end(), probs->begin() + (h * nq + i) * nk);
        }
    });

    if (probe != nullptr && probe->out != nullptr) {
        for (long row : probe->rows) {
            ProbeStat st;
            st.query_row = row;
            long vis = 0;
            for (size_t j = 0; j < nk; ++j)
                if (mask.visible(row, static_cast<long>(j))) ++vis;
            st.visible_keys = vis;
            double ent = 0.0, mx = 0.0;
            for (int h = 0; h < heads; ++h) {
                const double* p = probs->data() + (h * nq + row) * nk;
                for (size_t j = 0; j < nk; ++j) {
                    if (p[j] > 0.0) ent -= p[j] * std::log(p[j]);
                    if (p[j] > mx) mx = p[j];
                }
            }
            st.entropy = ent / heads;
            st.max_weight = mx;
            probe->out->push_back(st);
        }
    }

    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, q, k, v, heads, nq, nk, hd, att_scale, probs]() {
            const Tensor& g = nodes_[id].grad;
            const Tensor& qv2 = val(q);
            const Tensor& kv2 = val(k);
            const Tensor& vv2 = val(v);
            // d-logits buffer, same layout as probs
            std::vector<double> dl(heads * nq * nk, 0.0);
            const bool nq_grad = needs_grad(q);

            parallel_for(nq, [&](size_t i) {
                for (int h = 0; h < heads; ++h) {
                    const double* gout = g.row(i) + h * hd;
                    const double* p = probs->data() + (h * nq + i) * nk;
                    double* dli = dl.data() + (h * nq + i) * nk;
                    double srow = 0.0;
                    for (size_t j = 0; j < nk; ++j) {
                        if (p[j] == 0.0) continue;
                        const double* vrow = vv2.row(j) + h * hd;
                        double dp = 0.0;
                        for (size_t c = 0; c < hd; ++c) dp += gout[c] * vrow[c];
                        dli[j] = dp;
                        srow += p[j] * dp;
                    }
                    for (size_t j = 0; j < nk; ++j)
                        if (p[j] != 0.0) dli[j] = p[j] * (dli[j] - srow);
                }
            });

            if (nq_grad) {
                Tensor& gq = grad_buf(q);
                parallel_for(nq, [&](size_t i) {
                    for (int h = 0; h < heads; ++h) {
                        const double* dli = dl.data() + (h * nq + i) * nk;
                        double* gqrow = gq.row(i) + h * hd;
                        for (size_t j = 0; j < nk; ++j) {
                            if (dli[j] == 0.0) continue;
                            const double* krow = kv2.row(j) + h * hd;
                            const double w = dli[j] * att_scale;
                            for (size_t c = 0; c < hd; ++c) gqrow[c] += w * krow[c];
                        }
                    }
                });
            }
            if (needs_grad(k) || needs_grad(v)) {
                Tensor& gk = grad_buf(k);
                Tensor& gv = grad_buf(v);
                const bool wantk = needs_grad(k), wantv = needs_grad(v);
                parallel_for(nk, [&](size_t j) {
                    for (int h = 0; h < heads; ++h) {
                        double* gkrow = gk.row(j) + h * hd;
                        double* gvrow = gv.row(j) + h * hd;
                        for (size_t i = 0; i < nq; ++i) {
                            const double dlij = dl[(h * nq + i) * nk + j];
                            const double pij = (*probs)[(h * nq + i) * nk + j];
                            if (wantk && dlij != 0.0) {
                                const double* qrow = qv2.row(i) + h * hd;
                                const double w = dlij * att_scale;
                                for (size_t c = 0; c < hd; ++c) gkrow[c] += w * qrow[c];
                            }
                            if (wantv && pij != 0.0) {
                                const double* grow = g.row(i) + h * hd;
                                for (size_t c = 0; c < hd; ++c) gvrow[c] += pij * grow[c];
                            }
                        }
                    }
                });
            }
        };
    return id;
}

VarId Graph::mse(VarId a, VarId b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (!av.same_shape(bv)) throw shape_error("mse: shape mismatch");
    const double n = static_cast<double>(av.size());
    double s = 0.0;
    for (size_t i = 0; i < av.data.size(); ++i) {
        const double d = av.data[i] - bv.data[i];
        s += d * d;
    }
    Tensor out(1, 1);
    out.data[0] = n > 0 ? s / n : 0.0;
    bool ng = needs_grad(a) || needs_grad(b);
    VarId id = push(std::move(out), ng);
    if (ng)
        nodes_[id].back = [this, id, a, b, n]() {
            const double g = nodes_[id].grad.data[0] * 2.0 / n;
            const Tensor& av2 = val(a);
            const Tensor& bv2 = val(b);
            if (needs_grad(a)) {
                Tensor& ga = grad_buf(a);
                for (size_t i = 0; i < av2.data.size(); ++i)
                    ga.data[i] += g * (av2.data[i] - bv2.data[i]);
            }
            if (needs_grad(b)) {
                Tensor& gb = grad_buf(b);
                for (size_t i = 0; i < av2.data.size(); ++i)
                    gb.data[i] -= g * (av2.data[i] - bv2.data[i]);
            }
        };
    return id;
}

VarId Graph::stop_grad(VarId x) { return constant(val(x)); }

void Graph::backward(VarId loss) {
    if (val(loss).size() != 1) throw shape_error("backward: loss must be scalar");
    if (!nodes_[loss].needs_grad) return;
    grad_buf(loss).data[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
        n.back();
    }
}

}  // namespace avs
