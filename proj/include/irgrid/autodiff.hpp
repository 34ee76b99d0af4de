#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "irgrid/common.hpp"
#include <Eigen/Sparse>

namespace irgrid::ad {

using Shape = std::vector<int>;

inline std::int64_t shape_size(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

struct Node {
    Shape shape;
    Eigen::ArrayXd value;  // flat, row-major
    Eigen::ArrayXd grad;
    bool requires_grad = false;
    std::function<void(Node&)> backward_fn;  // pulls grad into inputs

    double& at(std::int64_t i) { return value(i); }
    double at(std::int64_t i) const { return value(i); }
};

// Handle with shared ownership; parameters outlive the tape that used them.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor param(const Shape& shape, Eigen::ArrayXd data);
    static Tensor constant(const Shape& shape, Eigen::ArrayXd data);
    static Tensor constant_vec(const Vector& v);       // shape {n, 1}
    static Tensor constant_mat(const Matrix& m);       // shape {rows, cols}
    static Tensor zeros(const Shape& shape, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::int64_t size() const { return node_->value.size(); }
    const Eigen::ArrayXd& value() const { return node_->value; }
    Eigen::ArrayXd& value() { return node_->value; }
    const Eigen::ArrayXd& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    double scalar() const;
    Matrix as_matrix() const;  // 2-d tensors only
    Vector as_vector() const;  // {n} or {n,1}

    std::shared_ptr<Node> node() const { return node_; }
    bool valid() const { return node_ != nullptr; }

private:
    std::shared_ptr<Node> node_;
};

// Records every op for one forward pass; backward walks it in reverse
// creation order (a valid topological order by construction).
class Tape {
public:
    // elementwise / basic algebra
    Tensor add(const Tensor& a, const Tensor& b);       // same shape, or b row-broadcast {cols}
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);       // elementwise, same shape
    Tensor scale(const Tensor& a, double k);
    Tensor add_scalar(const Tensor& a, double k);
    Tensor scale_by(const Tensor& a, const Tensor& s);  // s is a scalar tensor
    Tensor abs(const Tensor& a);
    Tensor matmul(const Tensor& a, const Tensor& b);

    // activations / regularization
    Tensor relu(const Tensor& a);
    Tensor leaky_relu(const Tensor& a, double alpha);
    Tensor dropout(const Tensor& a, double p, bool training, std::uint64_t seed);

    // reductions / reshaping
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);
    Tensor reshape(const Tensor& a, const Shape& shape);
    Tensor concat_cols(const Tensor& a, const Tensor& b);

    // graph gather/scatter (rows of 2-d tensors)
    Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);
    Tensor scatter_sum_rows(const Tensor& a, const std::vector<int>& idx, int n_out);
    Tensor segment_softmax(const Tensor& logits, const std::vector<int>& seg, int n_seg);
    // rows of a scaled per-row by a {m,1} tensor
    Tensor row_scale(const Tensor& a, const Tensor& s);

    // fixed sparse left factor (no gradient through the matrix)
    Tensor spmm(const Eigen::SparseMatrix<double>& s, const Tensor& a);

    // image ops on {C,H,W}; weights {O,C,k,k}
    Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);   // k=3, stride 1, same pad
    Tensor conv2d_k2s2(const Tensor& x, const Tensor& w, const Tensor& b);  // k=2, stride 2
    Tensor conv_transpose2(const Tensor& x, const Tensor& w, const Tensor& b);  // k=2, stride 2, x2 upsample
    Tensor maxpool2(const Tensor& x);
    Tensor upsample2(const Tensor& x);  // nearest-neighbor x2

    void backward(const Tensor& loss);

    std::size_t n_nodes() const { return nodes_.size(); }

private:
    Tensor record(Shape shape, Eigen::ArrayXd value, std::vector<Tensor> inputs,
                  std::function<void(Node&)> backward_fn);
    std::vector<std::shared_ptr<Node>> nodes_;
};

// MAE over selected rows of pred {n,1} against target {m,1} constants.
Tensor mae_loss(Tape& tape, const Tensor& pred, const std::vector<int>& idx,
                const Tensor& target);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

class AdamState {
public:
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    // Decoupled weight decay (p -= lr*wd*p) then the bias-corrected Adam delta.
    void step(std::vector<Tensor>& params);
    void zero_grad(std::vector<Tensor>& params);

    int step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    int t_ = 0;
    std::vector<Eigen::ArrayXd> m_, v_;
};

}  // namespace irgrid::ad
