#include "irgrid/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace irgrid::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

CMapMat map2d(const Eigen::ArrayXd& buf, const Shape& s) {
    return CMapMat(buf.data(), s[0], s[1]);
}

MapMat map2d(Eigen::ArrayXd& buf, const Shape& s) {
    return MapMat(buf.data(), s[0], s[1]);
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

Tensor Tensor::param(const Shape& shape, Eigen::ArrayXd data) {
    require(data.size() == shape_size(shape), "param: data does not match shape");
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(data);
    n->grad = Eigen::ArrayXd::Zero(n->value.size());
    n->requires_grad = true;
    return Tensor(std::move(n));
}

Tensor Tensor::constant(const Shape& shape, Eigen::ArrayXd data) {
    require(data.size() == shape_size(shape), "constant: data does not match shape");
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(data);
    return Tensor(std::move(n));
}

Tensor Tensor::constant_vec(const Vector& v) {
    Eigen::ArrayXd d = v.array();
    return constant({static_cast<int>(v.size()), 1}, std::move(d));
}

Tensor Tensor::constant_mat(const Matrix& m) {
    RowMat rm = m;
    Eigen::ArrayXd d = Eigen::Map<const Eigen::ArrayXd>(rm.data(), rm.size());
    return constant({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, std::move(d));
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    Eigen::ArrayXd d = Eigen::ArrayXd::Zero(shape_size(shape));
    return requires_grad ? param(shape, std::move(d)) : constant(shape, std::move(d));
}

double Tensor::scalar() const {
    require(size() == 1, "scalar() on tensor of shape " + shape_str(shape()));
    return node_->value(0);
}

Matrix Tensor::as_matrix() const {
    require(shape().size() == 2, "as_matrix() needs a 2-d tensor");
    return map2d(node_->value, shape());
}

Vector Tensor::as_vector() const {
    require(shape().size() == 1 || (shape().size() == 2 && shape()[1] == 1),
            "as_vector() needs shape {n} or {n,1}");
    return node_->value.matrix();
}

Tensor Tape::record(Shape shape, Eigen::ArrayXd value, std::vector<Tensor> inputs,
                    std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (n->requires_grad) {
        n->grad = Eigen::ArrayXd::Zero(n->value.size());
        n->backward_fn = std::move(backward_fn);
    }
    nodes_.push_back(n);
    return Tensor(std::move(n));
}

static void accum(const Tensor& t, const Eigen::ArrayXd& g) {
    if (t.requires_grad()) t.node()->grad += g;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        return record(a.shape(), a.value() + b.value(), {a, b}, [a, b](Node& out) {
            accum(a, out.grad);
            accum(b, out.grad);
        });
    }
    // row-broadcast bias: a {n,m} + b {m} or {1,m}
    require(a.shape().size() == 2 &&
                (b.shape() == Shape{a.shape()[1]} || b.shape() == Shape{1, a.shape()[1]}),
            "add: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int n = a.shape()[0], m = a.shape()[1];
    Eigen::ArrayXd out(a.value().size());
    for (int i = 0; i < n; ++i)
        out.segment(i * m, m) = a.value().segment(i * m, m) + b.value();
    return record(a.shape(), std::move(out), {a, b}, [a, b, n, m](Node& o) {
        accum(a, o.grad);
        if (b.requires_grad()) {
            for (int i = 0; i < n; ++i) b.node()->grad += o.grad.segment(i * m, m);
        }
    });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    return record(a.shape(), a.value() - b.value(), {a, b}, [a, b](Node& out) {
        accum(a, out.grad);
        accum(b, -out.grad);
    });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    return record(a.shape(), a.value() * b.value(), {a, b}, [a, b](Node& out) {
        accum(a, out.grad * b.value());
        accum(b, out.grad * a.value());
    });
}

Tensor Tape::scale(const Tensor& a, double k) {
    return record(a.shape(), a.value() * k, {a},
                  [a, k](Node& out) { accum(a, out.grad * k); });
}

Tensor Tape::add_scalar(const Tensor& a, double k) {
    return record(a.shape(), a.value() + k, {a}, [a](Node& out) { accum(a, out.grad); });
}

Tensor Tape::scale_by(const Tensor& a, const Tensor& s) {
    require(s.size() == 1, "scale_by: scalar tensor required");
    double k = s.value()(0);
    return record(a.shape(), a.value() * k, {a, s}, [a, s, k](Node& out) {
        accum(a, out.grad * k);
        if (s.requires_grad()) s.node()->grad(0) += (out.grad * a.value()).sum();
    });
}

Tensor Tape::abs(const Tensor& a) {
    return record(a.shape(), a.value().abs(), {a}, [a](Node& out) {
        accum(a, out.grad * a.value().sign());
    });
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[1] == b.shape()[0],
            "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    RowMat c = map2d(a.value(), a.shape()) * map2d(b.value(), b.shape());
    Eigen::ArrayXd out = Eigen::Map<Eigen::ArrayXd>(c.data(), c.size());
    return record({n, m}, std::move(out), {a, b}, [a, b, n, k, m](Node& o) {
        CMapMat gc(o.grad.data(), n, m);
        if (a.requires_grad()) {
            MapMat ga(a.node()->grad.data(), n, k);
            ga.noalias() += gc * map2d(b.value(), b.shape()).transpose();
        }
        if (b.requires_grad()) {
            MapMat gb(b.node()->grad.data(), k, m);
            gb.noalias() += map2d(a.value(), a.shape()).transpose() * gc;
        }
    });
}

Tensor Tape::relu(const Tensor& a) {
    return record(a.shape(), a.value().max(0.0), {a}, [a](Node& out) {
        accum(a, out.grad * (a.value() > 0.0).cast<double>());
    });
}

Tensor Tape::leaky_relu(const Tensor& a, double alpha) {
    Eigen::ArrayXd v = a.value().max(a.value() * alpha);
    return record(a.shape(), std::move(v), {a}, [a, alpha](Node& out) {
        Eigen::ArrayXd slope =
            (a.value() > 0.0).cast<double>() + alpha * (a.value() <= 0.0).cast<double>();
        accum(a, out.grad * slope);
    });
}

Tensor Tape::dropout(const Tensor& a, double p, bool training, std::uint64_t seed) {
    require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
    if (!training || p == 0.0) {
        return record(a.shape(), a.value(), {a}, [a](Node& out) { accum(a, out.grad); });
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Eigen::ArrayXd mask(a.size());
    const double keep = 1.0 - p;
    for (std::int64_t i = 0; i < a.size(); ++i) mask(i) = u01(rng) < keep ? 1.0 / keep : 0.0;
    auto mask_ptr = std::make_shared<Eigen::ArrayXd>(std::move(mask));
    return record(a.shape(), a.value() * (*mask_ptr), {a}, [a, mask_ptr](Node& out) {
        accum(a, out.grad * (*mask_ptr));
    });
}

Tensor Tape::sum(const Tensor& a) {
    Eigen::ArrayXd out(1);
    out(0) = a.value().sum();
    return record({1}, std::move(out), {a}, [a](Node& o) {
        if (a.requires_grad()) a.node()->grad += o.grad(0);
    });
}

Tensor Tape::mean(const Tensor& a) {
    require(a.size() > 0, "mean of empty tensor");
    Eigen::ArrayXd out(1);
    out(0) = a.value().mean();
    const double inv = 1.0 / static_cast<double>(a.size());
    return record({1}, std::move(out), {a, }, [a, inv](Node& o) {
        if (a.requires_grad()) a.node()->grad += o.grad(0) * inv;
    });
}

Tensor Tape::reshape(const Tensor& a, const Shape& shape) {
    require(shape_size(shape) == a.size(), "reshape: size mismatch");
    return record(shape, a.value(), {a}, [a](Node& out) { accum(a, out.grad); });
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
    require(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[0] == b.shape()[0],
            "concat_cols: need 2-d tensors with equal row count");
    const int n = a.shape()[0], ka = a.shape()[1], kb = b.shape()[1];
    Eigen::ArrayXd out(static_cast<std::int64_t>(n) * (ka + kb));
    for (int i = 0; i < n; ++i) {
        out.segment(static_cast<std::int64_t>(i) * (ka + kb), ka) = a.value().segment(i * ka, ka);
        out.segment(static_cast<std::int64_t>(i) * (ka + kb) + ka, kb) =
            b.value().segment(i * kb, kb);
    }
    return record({n, ka + kb}, std::move(out), {a, b}, [a, b, n, ka, kb](Node& o) {
        for (int i = 0; i < n; ++i) {
            if (a.requires_grad())
                a.node()->grad.segment(i * ka, ka) +=
                    o.grad.segment(static_cast<std::int64_t>(i) * (ka + kb), ka);
            if (b.requires_grad())
                b.node()->grad.segment(i * kb, kb) +=
                    o.grad.segment(static_cast<std::int64_t>(i) * (ka + kb) + ka, kb);
        }
    });
}

Tensor Tape::gather_rows(const Tensor& a, const std::vector<int>& idx) {
    require(a.shape().size() == 2, "gather_rows: 2-d tensor required");
    const int k = a.shape()[1], m = static_cast<int>(idx.size());
    for (int i : idx) require(i >= 0 && i < a.shape()[0], "gather_rows: index out of range");
    Eigen::ArrayXd out(static_cast<std::int64_t>(m) * k);
    for (int i = 0; i < m; ++i) out.segment(i * k, k) = a.value().segment(idx[i] * k, k);
    auto ix = std::make_shared<std::vector<int>>(idx);
    return record({m, k}, std::move(out), {a}, [a, ix, k](Node& o) {
        if (!a.requires_grad()) return;
        for (std::size_t i = 0; i < ix->size(); ++i)
            a.node()->grad.segment((*ix)[i] * k, k) += o.grad.segment(i * k, k);
    });
}

Tensor Tape::scatter_sum_rows(const Tensor& a, const std::vector<int>& idx, int n_out) {
    require(a.shape().size() == 2 && static_cast<int>(idx.size()) == a.shape()[0],
            "scatter_sum_rows: index per row required");
    const int k = a.shape()[1];
    for (int i : idx) require(i >= 0 && i < n_out, "scatter_sum_rows: index out of range");
    Eigen::ArrayXd out = Eigen::ArrayXd::Zero(static_cast<std::int64_t>(n_out) * k);
    for (std::size_t i = 0; i < idx.size(); ++i)
        out.segment(idx[i] * k, k) += a.value().segment(i * k, k);
    auto ix = std::make_shared<std::vector<int>>(idx);
    return record({n_out, k}, std::move(out), {a}, [a, ix, k](Node& o) {
        if (!a.requires_grad()) return;
        for (std::size_t i = 0; i < ix->size(); ++i)
            a.node()->grad.segment(i * k, k) += o.grad.segment((*ix)[i] * k, k);
    });
}

Tensor Tape::segment_softmax(const Tensor& logits, const std::vector<int>& seg, int n_seg) {
    require(logits.shape().size() == 2 && logits.shape()[1] == 1 &&
                static_cast<int>(seg.size()) == logits.shape()[0],
            "segment_softmax: logits must be {m,1} with one segment id per row");
    const int m = logits.shape()[0];
    std::vector<double> seg_max(n_seg, -std::numeric_limits<double>::infinity());
    for (int i = 0; i < m; ++i) seg_max[seg[i]] = std::max(seg_max[seg[i]], logits.value()(i));
    Eigen::ArrayXd e(m);
    std::vector<double> seg_sum(n_seg, 0.0);
    for (int i = 0; i < m; ++i) {
        e(i) = std::exp(logits.value()(i) - seg_max[seg[i]]);
        seg_sum[seg[i]] += e(i);
    }
    Eigen::ArrayXd out(m);
    for (int i = 0; i < m; ++i) out(i) = e(i) / seg_sum[seg[i]];
    auto sg = std::make_shared<std::vector<int>>(seg);
    return record({m, 1}, std::move(out), {logits}, [logits, sg, n_seg, m](Node& o) {
        if (!logits.requires_grad()) return;
        std::vector<double> dot(n_seg, 0.0);
        for (int i = 0; i < m; ++i) dot[(*sg)[i]] += o.grad(i) * o.value(i);
        for (int i = 0; i < m; ++i)
            logits.node()->grad(i) += o.value(i) * (o.grad(i) - dot[(*sg)[i]]);
    });
}

Tensor Tape::row_scale(const Tensor& a, const Tensor& s) {
    require(a.shape().size() == 2 && s.shape() == Shape{a.shape()[0], 1},
            "row_scale: scale must be {rows,1}");
    const int n = a.shape()[0], k = a.shape()[1];
    Eigen::ArrayXd out(a.value().size());
    for (int i = 0; i < n; ++i) out.segment(i * k, k) = a.value().segment(i * k, k) * s.value()(i);
    return record(a.shape(), std::move(out), {a, s}, [a, s, n, k](Node& o) {
        for (int i = 0; i < n; ++i) {
            if (a.requires_grad())
                a.node()->grad.segment(i * k, k) += o.grad.segment(i * k, k) * s.value()(i);
            if (s.requires_grad())
                s.node()->grad(i) +=
                    (o.grad.segment(i * k, k) * a.value().segment(i * k, k)).sum();
        }
    });
}

Tensor Tape::spmm(const Eigen::SparseMatrix<double>& s, const Tensor& a) {
    require(a.shape().size() == 2 && s.cols() == a.shape()[0],
            "spmm: dimension mismatch");
    const int n = static_cast<int>(s.rows()), k = a.shape()[1];
    RowMat y = s * map2d(a.value(), a.shape());
    Eigen::ArrayXd out = Eigen::Map<Eigen::ArrayXd>(y.data(), y.size());
    auto sp = std::make_shared<Eigen::SparseMatrix<double>>(s);
    return record({n, k}, std::move(out), {a}, [a, sp, n, k](Node& o) {
        if (!a.requires_grad()) return;
        CMapMat go(o.grad.data(), n, k);
        MapMat ga(a.node()->grad.data(), a.shape()[0], k);
        ga += sp->transpose() * go;
    });
}

namespace {

// Generic direct convolution on {C,H,W} with weight {O,C,k,k}.
struct ConvSpec {
    int k, stride, pad;
};

void conv_forward(const Eigen::ArrayXd& x, const Shape& xs, const Eigen::ArrayXd& w,
                  const Shape& ws, const Eigen::ArrayXd* b, ConvSpec cs, Eigen::ArrayXd& y,
                  int oh, int ow) {
    const int C = xs[0], H = xs[1], W = xs[2], O = ws[0];
    auto xat = [&](int c, int i, int j) { return x((c * H + i) * W + j); };
    auto wat = [&](int o, int c, int di, int dj) {
        return w(((o * C + c) * cs.k + di) * cs.k + dj);
    };
    for (int o = 0; o < O; ++o) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                double acc = b ? (*b)(o) : 0.0;
                for (int c = 0; c < C; ++c) {
                    for (int di = 0; di < cs.k; ++di) {
                        int ii = i * cs.stride + di - cs.pad;
                        if (ii < 0 || ii >= H) continue;
                        for (int dj = 0; dj < cs.k; ++dj) {
                            int jj = j * cs.stride + dj - cs.pad;
                            if (jj < 0 || jj >= W) continue;
                            acc += xat(c, ii, jj) * wat(o, c, di, dj);
                        }
                    }
                }
                y((o * oh + i) * ow + j) = acc;
            }
        }
    }
}

void conv_backward(const Eigen::ArrayXd& x, const Shape& xs, const Eigen::ArrayXd& w,
                   const Shape& ws, ConvSpec cs, const Eigen::ArrayXd& gy, int oh, int ow,
                   Eigen::ArrayXd* gx, Eigen::ArrayXd* gw, Eigen::ArrayXd* gb) {
    const int C = xs[0], H = xs[1], W = xs[2], O = ws[0];
    for (int o = 0; o < O; ++o) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                double g = gy((o * oh + i) * ow + j);
                if (gb) (*gb)(o) += g;
                for (int c = 0; c < C; ++c) {
                    for (int di = 0; di < cs.k; ++di) {
                        int ii = i * cs.stride + di - cs.pad;
                        if (ii < 0 || ii >= H) continue;
                        for (int dj = 0; dj < cs.k; ++dj) {
                            int jj = j * cs.stride + dj - cs.pad;
                            if (jj < 0 || jj >= W) continue;
                            if (gx) (*gx)((c * H + ii) * W + jj) +=
                                g * w(((o * C + c) * cs.k + di) * cs.k + dj);
                            if (gw) (*gw)(((o * C + c) * cs.k + di) * cs.k + dj) +=
                                g * x((c * H + ii) * W + jj);
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor Tape::conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.shape().size() == 3 && w.shape().size() == 4 && w.shape()[2] == 3 &&
                w.shape()[3] == 3 && w.shape()[1] == x.shape()[0] &&
                b.shape() == Shape{w.shape()[0]},
            "conv2d: expected x {C,H,W}, w {O,C,3,3}, b {O}; got x " + shape_str(x.shape()) +
                " w " + shape_str(w.shape()));
    const int O = w.shape()[0], H = x.shape()[1], W = x.shape()[2];
    ConvSpec cs{3, 1, 1};
    Eigen::ArrayXd y(static_cast<std::int64_t>(O) * H * W);
    Eigen::ArrayXd bv = b.value();
    conv_forward(x.value(), x.shape(), w.value(), w.shape(), &bv, cs, y, H, W);
    return record({O, H, W}, std::move(y), {x, w, b}, [x, w, b, cs, H, W](Node& o) {
        conv_backward(x.value(), x.shape(), w.value(), w.shape(), cs, o.grad, H, W,
                      x.requires_grad() ? &x.node()->grad : nullptr,
                      w.requires_grad() ? &w.node()->grad : nullptr,
                      b.requires_grad() ? &b.node()->grad : nullptr);
    });
}

Tensor Tape::conv2d_k2s2(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.shape().size() == 3 && w.shape().size() == 4 && w.shape()[2] == 2 &&
                w.shape()[3] == 2 && w.shape()[1] == x.shape()[0] &&
                b.shape() == Shape{w.shape()[0]} && x.shape()[1] % 2 == 0 &&
                x.shape()[2] % 2 == 0,
            "conv2d_k2s2: expected x {C,2h,2w}, w {O,C,2,2}, b {O}");
    const int O = w.shape()[0], oh = x.shape()[1] / 2, ow = x.shape()[2] / 2;
    ConvSpec cs{2, 2, 0};
    Eigen::ArrayXd y(static_cast<std::int64_t>(O) * oh * ow);
    Eigen::ArrayXd bv = b.value();
    conv_forward(x.value(), x.shape(), w.value(), w.shape(), &bv, cs, y, oh, ow);
    return record({O, oh, ow}, std::move(y), {x, w, b}, [x, w, b, cs, oh, ow](Node& o) {
        conv_backward(x.value(), x.shape(), w.value(), w.shape(), cs, o.grad, oh, ow,
                      x.requires_grad() ? &x.node()->grad : nullptr,
                      w.requires_grad() ? &w.node()->grad : nullptr,
                      b.requires_grad() ? &b.node()->grad : nullptr);
    });
}

Tensor Tape::conv_transpose2(const Tensor& x, const Tensor& w, const Tensor& b) {
    // Adjoint of conv2d_k2s2: x {I,h,w} with weight {I,O,2,2} -> {O,2h,2w}.
    require(x.shape().size() == 3 && w.shape().size() == 4 && w.shape()[0] == x.shape()[0] &&
                w.shape()[2] == 2 && w.shape()[3] == 2 && b.shape() == Shape{w.shape()[1]},
            "conv_transpose2: expected x {I,h,w}, w {I,O,2,2}, b {O}");
    const int I = x.shape()[0], h = x.shape()[1], wd = x.shape()[2], O = w.shape()[1];
    Eigen::ArrayXd y(static_cast<std::int64_t>(O) * 2 * h * 2 * wd);
    const int OH = 2 * h, OW = 2 * wd;
    for (int o = 0; o < O; ++o)
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(OH) * OW; ++p)
            y(o * OH * OW + p) = b.value()(o);
    auto wat = [&](int i, int o, int di, int dj) {
        return w.value()(((i * O + o) * 2 + di) * 2 + dj);
    };
    for (int i = 0; i < I; ++i)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < wd; ++c) {
                double xv = x.value()((i * h + r) * wd + c);
                for (int o = 0; o < O; ++o)
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj)
                            y((o * OH + 2 * r + di) * OW + 2 * c + dj) += xv * wat(i, o, di, dj);
            }
    return record({O, OH, OW}, std::move(y), {x, w, b}, [x, w, b, I, h, wd, O](Node& out) {
        const int OH = 2 * h, OW = 2 * wd;
        auto widx = [&](int i, int o, int di, int dj) { return ((i * O + o) * 2 + di) * 2 + dj; };
        if (b.requires_grad())
            for (int o = 0; o < O; ++o)
                for (std::int64_t p = 0; p < static_cast<std::int64_t>(OH) * OW; ++p)
                    b.node()->grad(o) += out.grad(o * OH * OW + p);
        for (int i = 0; i < I; ++i)
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < wd; ++c) {
                    double xv = x.value()((i * h + r) * wd + c);
                    for (int o = 0; o < O; ++o)
                        for (int di = 0; di < 2; ++di)
                            for (int dj = 0; dj < 2; ++dj) {
                                double g = out.grad((o * OH + 2 * r + di) * OW + 2 * c + dj);
                                if (x.requires_grad())
                                    x.node()->grad((i * h + r) * wd + c) +=
                                        g * w.value()(widx(i, o, di, dj));
                                if (w.requires_grad())
                                    w.node()->grad(widx(i, o, di, dj)) += g * xv;
                            }
                }
    });
}

Tensor Tape::maxpool2(const Tensor& x) {
    require(x.shape().size() == 3 && x.shape()[1] % 2 == 0 && x.shape()[2] % 2 == 0,
            "maxpool2: expected {C,2h,2w}, got " + shape_str(x.shape()));
    const int C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    const int oh = H / 2, ow = W / 2;
    Eigen::ArrayXd y(static_cast<std::int64_t>(C) * oh * ow);
    auto arg = std::make_shared<std::vector<std::int64_t>>(y.size());
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                double best = -std::numeric_limits<double>::infinity();
                std::int64_t bi = 0;
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj) {
                        std::int64_t idx = (static_cast<std::int64_t>(c) * H + 2 * i + di) * W +
                                           2 * j + dj;
                        if (x.value()(idx) > best) {
                            best = x.value()(idx);
                            bi = idx;
                        }
                    }
                y((c * oh + i) * ow + j) = best;
                (*arg)[(c * oh + i) * ow + j] = bi;
            }
    return record({C, oh, ow}, std::move(y), {x}, [x, arg](Node& o) {
        if (!x.requires_grad()) return;
        for (std::int64_t i = 0; i < o.grad.size(); ++i)
            x.node()->grad((*arg)[i]) += o.grad(i);
    });
}

Tensor Tape::upsample2(const Tensor& x) {
    require(x.shape().size() == 3, "upsample2: expected {C,h,w}");
    const int C = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    Eigen::ArrayXd y(static_cast<std::int64_t>(C) * 4 * h * w);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double v = x.value()((c * h + i) * w + j);
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj)
                        y((c * 2 * h + 2 * i + di) * 2 * w + 2 * j + dj) = v;
            }
    return record({C, 2 * h, 2 * w}, std::move(y), {x}, [x, C, h, w](Node& o) {
        if (!x.requires_grad()) return;
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    double g = 0.0;
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj)
                            g += o.grad((c * 2 * h + 2 * i + di) * 2 * w + 2 * j + dj);
                    x.node()->grad((c * h + i) * w + j) += g;
                }
    });
}

void Tape::backward(const Tensor& loss) {
    if (nodes_.empty())
        throw ValidationError("backward: tape already consumed; run a new forward pass");
    if (loss.size() != 1) throw ValidationError("backward: loss must be a scalar tensor");
    if (!loss.requires_grad())
        throw ValidationError("backward: loss does not depend on any tracked parameter");
    loss.node()->grad(0) = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
        if ((*it)->requires_grad && (*it)->backward_fn) (*it)->backward_fn(**it);
    nodes_.clear();  // a second backward without re-forward has nothing to walk
}

Tensor mae_loss(Tape& tape, const Tensor& pred, const std::vector<int>& idx,
                const Tensor& target) {
    Tensor sel = tape.gather_rows(pred, idx);
    return tape.mean(tape.abs(tape.sub(sel, target)));
}

void AdamState::zero_grad(std::vector<Tensor>& params) {
    for (auto& p : params) p.node()->grad.setZero();
}

void AdamState::step(std::vector<Tensor>& params) {
    if (m_.empty()) {
        for (auto& p : params) {
            m_.emplace_back(Eigen::ArrayXd::Zero(p.size()));
            v_.emplace_back(Eigen::ArrayXd::Zero(p.size()));
        }
    }
    if (m_.size() != params.size())
        throw ValidationError("adam_step: parameter count changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (p.node()->grad.size() != p.size())
            throw ValidationError("adam_step: gradient shape mismatch");
        if (cfg_.weight_decay > 0.0)
            p.value() -= cfg_.lr * cfg_.weight_decay * p.value();
        const auto& g = p.node()->grad;
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
        Eigen::ArrayXd mhat = m_[i] / bc1;
        Eigen::ArrayXd vhat = v_[i] / bc2;
        p.value() -= cfg_.lr * mhat / (vhat.sqrt() + cfg_.eps);
    }
}

}  // namespace irgrid::ad
