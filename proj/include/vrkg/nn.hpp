// Parameter registry and the small set of layers shared by the encoder,
// the refactor networks and the decoder.
#pragma once

#include "vrkg/tensor.hpp"

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace vrkg {

/// Optimizer parameter groups; each has its own learning rate.
enum class ParamGroup { Encoder, Graph, Other, Generator };

std::string to_string(ParamGroup g);
ParamGroup param_group_from_string(const std::string& s);

struct Parameter {
    Var var;
    ParamGroup group = ParamGroup::Other;
};

/// Named, ordered collection of trainable tensors. Iteration order is the
/// lexicographic order of names, which fixes optimizer and checkpoint order.
class ParameterStore {
public:
    Var create(const std::string& name, Matrix init, ParamGroup group);

    const Var& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }
    const std::map<std::string, Parameter>& all() const { return params_; }
    std::map<std::string, Parameter>& all() { return params_; }

    void zero_grad();
    size_t scalar_count() const;

    /// Copies values of every parameter whose name starts with `from_prefix`
    /// into the parameter with the prefix replaced by `to_prefix`.
    void copy_prefix(const std::string& from_prefix, const std::string& to_prefix);

    /// FNV-1a hash over the raw bytes of the selected groups.
    uint64_t fingerprint(const std::vector<ParamGroup>& groups) const;

private:
    std::map<std::string, Parameter> params_;
};

/// Uniform(-bound, bound) initializer.
Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng);
/// Xavier/Glorot uniform initializer.
Matrix xavier_init(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

class Linear {
public:
    Linear() = default;
    Linear(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
           ParamGroup group, std::mt19937_64& rng, bool bias = true);

    Var operator()(const Var& x) const;

    const Var& weight() const { return weight_; }
    const std::optional<Var>& bias() const { return bias_; }

private:
    Var weight_;
    std::optional<Var> bias_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(ParameterStore& store, const std::string& name, Eigen::Index dim, ParamGroup group);
    Var operator()(const Var& x) const;

private:
    Var gamma_;
    Var beta_;
};

class Embedding {
public:
    Embedding() = default;
    Embedding(ParameterStore& store, const std::string& name, Eigen::Index count, Eigen::Index dim,
              ParamGroup group, std::mt19937_64& rng, double bound);
    Var operator()(std::span<const int> ids) const { return gather_rows(table_, ids); }
    const Var& table() const { return table_; }

private:
    Var table_;
};

/// Multi-head scaled dot-product attention with input/output projections.
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParameterStore& store, const std::string& name, Eigen::Index dim, int heads,
                       ParamGroup group, std::mt19937_64& rng);

    /// `key_valid` marks usable key rows (empty = all valid). With `causal`,
    /// query i only sees keys 0..i.
    Var operator()(const Var& query, const Var& key, const Var& value, bool causal = false,
                   const std::vector<bool>& key_valid = {}) const;

    int heads() const { return heads_; }
    const Linear& q_proj() const { return q_; }
    const Linear& k_proj() const { return k_; }
    const Linear& v_proj() const { return v_; }
    const Linear& out_proj() const { return o_; }

private:
    Linear q_, k_, v_, o_;
    int heads_ = 1;
    Eigen::Index dim_ = 0;
};

class FeedForward {
public:
    FeedForward() = default;
    FeedForward(ParameterStore& store, const std::string& name, Eigen::Index dim,
                Eigen::Index hidden, ParamGroup group, std::mt19937_64& rng);
    Var operator()(const Var& x) const { return out_(relu(in_(x))); }

private:
    Linear in_, out_;
};

/// Additive attention mask: 0 where allowed, -inf where blocked.
Matrix attention_mask(Eigen::Index queries, Eigen::Index keys, bool causal,
                      const std::vector<bool>& key_valid);

}  // namespace vrkg
