// Reverse-mode automatic differentiation over dense row-major-semantics
// matrices. Every value is a 2-D Eigen matrix; vectors are 1 x n rows and
// scalars are 1 x 1.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace vrkg {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Matrix& ensure_grad();
};

/// Handle to a node in the computation graph. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Matrix value, bool requires_grad = false);

    static Var scalar(double v);
    static Var row(std::span<const double> values);

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    Matrix& grad_ref() { return node_->ensure_grad(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double item() const;

    void zero_grad();

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    friend Var make_op(Matrix value, std::vector<Var> parents,
                       std::function<void(Node&)> backward_fn);

    std::shared_ptr<Node> node_;
};

/// Builds an op node. `backward_fn` receives the output node and must
/// accumulate into the parents' grads; it is dropped when no parent needs
/// gradients.
Var make_op(Matrix value, std::vector<Var> parents,
            std::function<void(Node&)> backward_fn);

/// Runs backpropagation from a 1 x 1 output. Gradients accumulate into
/// every reachable leaf that requires them.
void backward(const Var& loss);

// Arithmetic. `b` broadcasts when it is 1 x 1, 1 x cols or rows x 1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Constant sparse matrix times a differentiable dense matrix.
Var sparse_matmul(const SparseMatrix& a, const Var& b);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

// Pointwise.
Var tanh(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
/// log(max(a, floor)); the gradient is zero where the floor is active.
Var log(const Var& a, double floor = 0.0);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_rows(const Var& a);  // column sums, 1 x cols
Var sum_cols(const Var& a);  // row sums, rows x 1

/// Row-wise softmax. `additive_mask`, when non-empty, is added to the logits
/// (use -inf for blocked entries). Fully blocked rows produce zeros.
Var softmax_rows(const Var& a, const Matrix& additive_mask = Matrix());
Var log_softmax_rows(const Var& a);

// Shape.
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
/// Gathers rows by index; repeated indices accumulate in backward.
Var gather_rows(const Var& a, std::span<const int> indices);
Var element(const Var& a, Eigen::Index r, Eigen::Index c);
/// out(r, index[j]) += a(r, j), producing `width` columns.
Var scatter_add_cols(const Var& a, std::span<const int> index, Eigen::Index width);
/// Repeats a 1 x n row `times` times.
Var repeat_rows(const Var& a, Eigen::Index times);

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Value of `hard`, gradient of `relaxed` (straight-through estimator).
Var straight_through(const Var& relaxed, const Matrix& hard);
Var detach(const Var& a);

}  // namespace vrkg
