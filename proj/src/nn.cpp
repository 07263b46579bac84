#include "vrkg/nn.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace vrkg {

std::string to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::Encoder: return "encoder";
        case ParamGroup::Graph: return "graph";
        case ParamGroup::Other: return "other";
        case ParamGroup::Generator: return "generator";
    }
    return "other";
}

ParamGroup param_group_from_string(const std::string& s) {
    if (s == "encoder") return ParamGroup::Encoder;
    if (s == "graph") return ParamGroup::Graph;
    if (s == "other") return ParamGroup::Other;
    if (s == "generator") return ParamGroup::Generator;
    throw std::invalid_argument("unknown parameter group '" + s + "'");
}

Var ParameterStore::create(const std::string& name, Matrix init, ParamGroup group) {
    if (params_.count(name)) throw std::logic_error("duplicate parameter '" + name + "'");
    Var v(std::move(init), true);
    params_.emplace(name, Parameter{v, group});
    return v;
}

const Var& ParameterStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return it->second.var;
}

void ParameterStore::zero_grad() {
    for (auto& [_, p] : params_) p.var.zero_grad();
}

size_t ParameterStore::scalar_count() const {
    size_t n = 0;
    for (const auto& [_, p] : params_) n += static_cast<size_t>(p.var.value().size());
    return n;
}

void ParameterStore::copy_prefix(const std::string& from_prefix, const std::string& to_prefix) {
    for (auto& [name, p] : params_) {
        if (name.rfind(from_prefix, 0) != 0) continue;
        const std::string target = to_prefix + name.substr(from_prefix.size());
        auto it = params_.find(target);
        if (it == params_.end()) throw std::out_of_range("no parameter '" + target + "'");
        it->second.var.mutable_value() = p.var.value();
    }
}

uint64_t ParameterStore::fingerprint(const std::vector<ParamGroup>& groups) const {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, p] : params_) {
        bool selected = false;
        for (auto g : groups) selected = selected || g == p.group;
        if (!selected) continue;
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        const Matrix& m = p.var.value();
        const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
        for (size_t i = 0; i < static_cast<size_t>(m.size()) * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    // Fill in row-major order so the draw sequence does not depend on storage.
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return m;
}

Matrix xavier_init(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    return uniform_init(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

Linear::Linear(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
               ParamGroup group, std::mt19937_64& rng, bool bias) {
    weight_ = store.create(name + ".weight", xavier_init(in, out, rng), group);
    if (bias) bias_ = store.create(name + ".bias", Matrix::Zero(1, out), group);
}

Var Linear::operator()(const Var& x) const {
    Var y = matmul(x, weight_);
    if (bias_) y = add(y, *bias_);
    return y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, Eigen::Index dim,
                     ParamGroup group) {
    gamma_ = store.create(name + ".gamma", Matrix::Ones(1, dim), group);
    beta_ = store.create(name + ".beta", Matrix::Zero(1, dim), group);
}

Var LayerNorm::operator()(const Var& x) const { return layer_norm_rows(x, gamma_, beta_); }

Embedding::Embedding(ParameterStore& store, const std::string& name, Eigen::Index count,
                     Eigen::Index dim, ParamGroup group, std::mt19937_64& rng, double bound) {
    table_ = store.create(name, uniform_init(count, dim, bound, rng), group);
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name,
                                       Eigen::Index dim, int heads, ParamGroup group,
                                       std::mt19937_64& rng)
    : heads_(heads), dim_(dim) {
    if (heads <= 0 || dim % heads != 0) {
        throw std::invalid_argument("attention width " + std::to_string(dim) +
                                    " is not divisible by " + std::to_string(heads) + " heads");
    }
    q_ = Linear(store, name + ".q", dim, dim, group, rng);
    k_ = Linear(store, name + ".k", dim, dim, group, rng);
    v_ = Linear(store, name + ".v", dim, dim, group, rng);
    o_ = Linear(store, name + ".o", dim, dim, group, rng);
}

Matrix attention_mask(Eigen::Index queries, Eigen::Index keys, bool causal,
                      const std::vector<bool>& key_valid) {
    const double ninf = -std::numeric_limits<double>::infinity();
    Matrix mask = Matrix::Zero(queries, keys);
    // Queries align with the last `queries` keys when the counts differ.
    const Eigen::Index shift = keys - queries;
    for (Eigen::Index i = 0; i < queries; ++i) {
        for (Eigen::Index j = 0; j < keys; ++j) {
            const bool blocked_pad = !key_valid.empty() && !key_valid[static_cast<size_t>(j)];
            const bool blocked_future = causal && j > i + shift;
            if (blocked_pad || blocked_future) mask(i, j) = ninf;
        }
    }
    return mask;
}

Var MultiHeadAttention::operator()(const Var& query, const Var& key, const Var& value, bool causal,
                                   const std::vector<bool>& key_valid) const {
    Var q = q_(query);
    Var k = k_(key);
    Var v = v_(value);
    const Eigen::Index head_dim = dim_ / heads_;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const bool need_mask = causal || !key_valid.empty();
    Matrix mask;
    if (need_mask) mask = attention_mask(query.rows(), key.rows(), causal, key_valid);

    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(heads_));
    for (int h = 0; h < heads_; ++h) {
        Var qh = slice_cols(q, h * head_dim, head_dim);
        Var kh = slice_cols(k, h * head_dim, head_dim);
        Var vh = slice_cols(v, h * head_dim, head_dim);
        Var scores = scale(matmul(qh, transpose(kh)), inv_scale);
        Var weights = softmax_rows(scores, mask);
        outs.push_back(matmul(weights, vh));
    }
    Var joined = heads_ == 1 ? outs.front() : concat_cols(outs);
    return o_(joined);
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, Eigen::Index dim,
                         Eigen::Index hidden, ParamGroup group, std::mt19937_64& rng) {
    in_ = Linear(store, name + ".in", dim, hidden, group, rng);
    out_ = Linear(store, name + ".out", hidden, dim, group, rng);
}

}  // namespace vrkg
