#include "vrkg/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace vrkg {

Matrix& Node::ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
        grad = Matrix::Zero(value.rows(), value.cols());
    }
    return grad;
}

Var::Var(Matrix value, bool requires_grad)
    : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Var Var::scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return Var(std::move(m));
}

Var Var::row(std::span<const double> values) {
    Matrix m(1, static_cast<Eigen::Index>(values.size()));
    for (size_t i = 0; i < values.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = values[i];
    return Var(std::move(m));
}

double Var::item() const {
    if (node_->value.size() != 1) {
        throw std::logic_error("item() on a non-scalar of shape " +
                               std::to_string(node_->value.rows()) + "x" +
                               std::to_string(node_->value.cols()));
    }
    return node_->value(0, 0);
}

void Var::zero_grad() {
    if (node_) node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

Var make_op(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(n));
}

void backward(const Var& loss) {
    if (loss.value().size() != 1) throw std::logic_error("backward() requires a scalar output");
    if (!loss.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS; graphs from long sequences get deep.
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad()(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() == n->value.size() && n->grad.size() > 0) {
            n->backward_fn(*n);
        }
    }
}

namespace {

Node& parent(Node& n, size_t i) { return *n.parents[i]; }

enum class Broadcast { Same, Scalar, Row, Col };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
    if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " and " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
}

Matrix expand(const Matrix& b, Broadcast k, Eigen::Index rows, Eigen::Index cols) {
    switch (k) {
        case Broadcast::Same: return b;
        case Broadcast::Scalar: return Matrix::Constant(rows, cols, b(0, 0));
        case Broadcast::Row: return b.replicate(rows, 1);
        case Broadcast::Col: return b.replicate(1, cols);
    }
    return b;
}

Matrix reduce(const Matrix& g, Broadcast k) {
    switch (k) {
        case Broadcast::Same: return g;
        case Broadcast::Scalar: return Matrix::Constant(1, 1, g.sum());
        case Broadcast::Row: return g.colwise().sum();
        case Broadcast::Col: return g.rowwise().sum();
    }
    return g;
}

void accumulate(Node& p, const Matrix& g) {
    if (p.requires_grad) p.ensure_grad() += g;
}

}  // namespace

Var add(const Var& a, const Var& b) {
    const auto k = broadcast_kind(a.value(), b.value(), "add");
    Matrix out = a.value() + expand(b.value(), k, a.rows(), a.cols());
    return make_op(std::move(out), {a, b}, [k](Node& n) {
        accumulate(parent(n, 0), n.grad);
        accumulate(parent(n, 1), reduce(n.grad, k));
    });
}

Var sub(const Var& a, const Var& b) {
    const auto k = broadcast_kind(a.value(), b.value(), "sub");
    Matrix out = a.value() - expand(b.value(), k, a.rows(), a.cols());
    return make_op(std::move(out), {a, b}, [k](Node& n) {
        accumulate(parent(n, 0), n.grad);
        accumulate(parent(n, 1), -reduce(n.grad, k));
    });
}

Var mul(const Var& a, const Var& b) {
    const auto k = broadcast_kind(a.value(), b.value(), "mul");
    Matrix bx = expand(b.value(), k, a.rows(), a.cols());
    Matrix out = a.value().cwiseProduct(bx);
    return make_op(std::move(out), {a, b}, [k, bx](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        accumulate(pa, n.grad.cwiseProduct(bx));
        if (pb.requires_grad) accumulate(pb, reduce(n.grad.cwiseProduct(pa.value), k));
    });
}

Var div(const Var& a, const Var& b) {
    const auto k = broadcast_kind(a.value(), b.value(), "div");
    Matrix bx = expand(b.value(), k, a.rows(), a.cols());
    Matrix out = a.value().cwiseQuotient(bx);
    return make_op(out, {a, b}, [k, bx, out](Node& n) {
        accumulate(parent(n, 0), n.grad.cwiseQuotient(bx));
        Node& pb = parent(n, 1);
        if (pb.requires_grad) {
            Matrix g = -n.grad.cwiseProduct(out).cwiseQuotient(bx);
            accumulate(pb, reduce(g, k));
        }
    });
}

Var neg(const Var& a) {
    return make_op(-a.value(), {a}, [](Node& n) { accumulate(parent(n, 0), -n.grad); });
}

Var scale(const Var& a, double s) {
    return make_op(a.value() * s, {a}, [s](Node& n) { accumulate(parent(n, 0), n.grad * s); });
}

Var add_scalar(const Var& a, double s) {
    Matrix out = a.value().array() + s;
    return make_op(std::move(out), {a}, [](Node& n) { accumulate(parent(n, 0), n.grad); });
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols()) +
                                    " and " + std::to_string(b.rows()) + " differ");
    }
    Matrix out = a.value() * b.value();
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        if (pa.requires_grad) pa.ensure_grad().noalias() += n.grad * pb.value.transpose();
        if (pb.requires_grad) pb.ensure_grad().noalias() += pa.value.transpose() * n.grad;
    });
}

Var transpose(const Var& a) {
    Matrix out = a.value().transpose();
    return make_op(std::move(out), {a},
                   [](Node& n) { accumulate(parent(n, 0), n.grad.transpose()); });
}

Var sparse_matmul(const SparseMatrix& a, const Var& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("sparse_matmul: inner dimensions differ");
    Matrix out = a * b.value();
    return make_op(std::move(out), {b}, [a](Node& n) {
        parent(n, 0).ensure_grad().noalias() += a.transpose() * n.grad;
    });
}

Var tanh(const Var& a) {
    Matrix out = a.value().array().tanh();
    return make_op(out, {a}, [out](Node& n) {
        accumulate(parent(n, 0), n.grad.cwiseProduct((1.0 - out.array().square()).matrix()));
    });
}

Var relu(const Var& a) {
    Matrix out = a.value().cwiseMax(0.0);
    return make_op(out, {a}, [](Node& n) {
        Matrix mask = (parent(n, 0).value.array() > 0.0).cast<double>();
        accumulate(parent(n, 0), n.grad.cwiseProduct(mask));
    });
}

Var sigmoid(const Var& a) {
    Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    return make_op(out, {a}, [out](Node& n) {
        Matrix d = (out.array() * (1.0 - out.array())).matrix();
        accumulate(parent(n, 0), n.grad.cwiseProduct(d));
    });
}

Var exp(const Var& a) {
    Matrix out = a.value().array().exp();
    return make_op(out, {a}, [out](Node& n) { accumulate(parent(n, 0), n.grad.cwiseProduct(out)); });
}

Var log(const Var& a, double floor) {
    const Matrix& x = a.value();
    Matrix out = x.cwiseMax(floor).array().log();
    return make_op(std::move(out), {a}, [floor](Node& n) {
        const Matrix& xv = parent(n, 0).value;
        Matrix g(xv.rows(), xv.cols());
        for (Eigen::Index i = 0; i < xv.size(); ++i) {
            g(i) = xv(i) > floor ? n.grad(i) / xv(i) : 0.0;
        }
        accumulate(parent(n, 0), g);
    });
}

Var sum(const Var& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return make_op(std::move(out), {a}, [](Node& n) {
        const Matrix& v = parent(n, 0).value;
        accumulate(parent(n, 0), Matrix::Constant(v.rows(), v.cols(), n.grad(0, 0)));
    });
}

Var mean(const Var& a) {
    const double count = static_cast<double>(a.value().size());
    if (count == 0) throw std::invalid_argument("mean of an empty matrix");
    return scale(sum(a), 1.0 / count);
}

Var sum_rows(const Var& a) {
    Matrix out = a.value().colwise().sum();
    return make_op(std::move(out), {a}, [](Node& n) {
        accumulate(parent(n, 0), n.grad.replicate(parent(n, 0).value.rows(), 1));
    });
}

Var sum_cols(const Var& a) {
    Matrix out = a.value().rowwise().sum();
    return make_op(std::move(out), {a}, [](Node& n) {
        accumulate(parent(n, 0), n.grad.replicate(1, parent(n, 0).value.cols()));
    });
}

Var softmax_rows(const Var& a, const Matrix& additive_mask) {
    Matrix logits = a.value();
    const bool masked = additive_mask.size() > 0;
    if (masked) {
        if (additive_mask.rows() != logits.rows() || additive_mask.cols() != logits.cols()) {
            throw std::invalid_argument("softmax_rows: mask shape mismatch");
        }
        logits += additive_mask;
    }
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        if (!std::isfinite(mx)) {
            out.row(r).setZero();
            continue;
        }
        auto e = (logits.row(r).array() - mx).exp();
        out.row(r) = e / e.sum();
    }
    return make_op(out, {a}, [out](Node& n) {
        Matrix g(out.rows(), out.cols());
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            const double dot = n.grad.row(r).dot(out.row(r));
            g.row(r) = out.row(r).cwiseProduct((n.grad.row(r).array() - dot).matrix());
        }
        accumulate(parent(n, 0), g);
    });
}

Var log_softmax_rows(const Var& a) {
    const Matrix& x = a.value();
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mx = x.row(r).maxCoeff();
        const double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
        out.row(r) = x.row(r).array() - lse;
    }
    return make_op(out, {a}, [out](Node& n) {
        Matrix g(out.rows(), out.cols());
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            const double gs = n.grad.row(r).sum();
            g.row(r) = n.grad.row(r).array() - out.row(r).array().exp() * gs;
        }
        accumulate(parent(n, 0), g);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.middleCols(off, p.cols()) = p.value();
        offsets.push_back(off);
        off += p.cols();
    }
    return make_op(std::move(out), parts, [offsets](Node& n) {
        for (size_t i = 0; i < n.parents.size(); ++i) {
            Node& p = *n.parents[i];
            if (p.requires_grad) p.ensure_grad() += n.grad.middleCols(offsets[i], p.value.cols());
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw std::invalid_argument("concat_rows: column count mismatch");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.middleRows(off, p.rows()) = p.value();
        offsets.push_back(off);
        off += p.rows();
    }
    return make_op(std::move(out), parts, [offsets](Node& n) {
        for (size_t i = 0; i < n.parents.size(); ++i) {
            Node& p = *n.parents[i];
            if (p.requires_grad) p.ensure_grad() += n.grad.middleRows(offsets[i], p.value.rows());
        }
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) {
        throw std::out_of_range("slice_cols out of range");
    }
    Matrix out = a.value().middleCols(start, count);
    return make_op(std::move(out), {a}, [start, count](Node& n) {
        Node& p = parent(n, 0);
        p.ensure_grad().middleCols(start, count) += n.grad;
    });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) {
        throw std::out_of_range("slice_rows out of range");
    }
    Matrix out = a.value().middleRows(start, count);
    return make_op(std::move(out), {a}, [start, count](Node& n) {
        Node& p = parent(n, 0);
        p.ensure_grad().middleRows(start, count) += n.grad;
    });
}

Var gather_rows(const Var& a, std::span<const int> indices) {
    std::vector<int> idx(indices.begin(), indices.end());
    Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= a.rows()) throw std::out_of_range("gather_rows index");
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
    }
    return make_op(std::move(out), {a}, [idx](Node& n) {
        Matrix& g = parent(n, 0).ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    });
}

Var element(const Var& a, Eigen::Index r, Eigen::Index c) {
    Matrix out(1, 1);
    out(0, 0) = a.value()(r, c);
    return make_op(std::move(out), {a}, [r, c](Node& n) {
        parent(n, 0).ensure_grad()(r, c) += n.grad(0, 0);
    });
}

Var scatter_add_cols(const Var& a, std::span<const int> index, Eigen::Index width) {
    if (static_cast<Eigen::Index>(index.size()) != a.cols()) {
        throw std::invalid_argument("scatter_add_cols: index length must equal column count");
    }
    std::vector<int> idx(index.begin(), index.end());
    Matrix out = Matrix::Zero(a.rows(), width);
    for (size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] < 0 || idx[j] >= width) throw std::out_of_range("scatter_add_cols index");
        out.col(idx[j]) += a.value().col(static_cast<Eigen::Index>(j));
    }
    return make_op(std::move(out), {a}, [idx](Node& n) {
        Matrix& g = parent(n, 0).ensure_grad();
        for (size_t j = 0; j < idx.size(); ++j) g.col(static_cast<Eigen::Index>(j)) += n.grad.col(idx[j]);
    });
}

Var repeat_rows(const Var& a, Eigen::Index times) {
    if (a.rows() != 1) throw std::invalid_argument("repeat_rows expects a single row");
    Matrix out = a.value().replicate(times, 1);
    return make_op(std::move(out), {a}, [](Node& n) {
        accumulate(parent(n, 0), n.grad.colwise().sum());
    });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps) {
    const Matrix& x = a.value();
    const Eigen::Index d = x.cols();
    Matrix xhat(x.rows(), d);
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
    }
    Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
    out.array().rowwise() += beta.value().row(0).array();
    return make_op(std::move(out), {a, gamma, beta}, [xhat, inv_std, d](Node& n) {
        Node& px = parent(n, 0);
        Node& pg = parent(n, 1);
        Node& pb = parent(n, 2);
        if (pg.requires_grad) pg.ensure_grad() += n.grad.cwiseProduct(xhat).colwise().sum();
        if (pb.requires_grad) pb.ensure_grad() += n.grad.colwise().sum();
        if (px.requires_grad) {
            Matrix dxhat = n.grad.array().rowwise() * pg.value.row(0).array();
            Matrix g(xhat.rows(), d);
            for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                const double m1 = dxhat.row(r).mean();
                const double m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(d);
                g.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
            }
            px.ensure_grad() += g;
        }
    });
}

Var straight_through(const Var& relaxed, const Matrix& hard) {
    if (hard.rows() != relaxed.rows() || hard.cols() != relaxed.cols()) {
        throw std::invalid_argument("straight_through: shape mismatch");
    }
    return make_op(hard, {relaxed}, [](Node& n) { accumulate(parent(n, 0), n.grad); });
}

Var detach(const Var& a) { return Var(a.value(), false); }

}  // namespace vrkg
