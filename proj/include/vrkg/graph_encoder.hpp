// Relational graph convolution over the incomplete graph and the
// self-attentive pre-recommendation head used to pretrain it.
#pragma once

#include "vrkg/config.hpp"
#include "vrkg/corpus.hpp"
#include "vrkg/nn.hpp"

#include <vector>

namespace vrkg {

/// Per-relation row-normalized adjacency. Relation r carries messages
/// head -> tail; relation r + R carries the inverse direction.
std::vector<SparseMatrix> relation_adjacency(const KnowledgeGraph& kg);

class GraphEncoder {
public:
    GraphEncoder() = default;
    GraphEncoder(ParameterStore& store, const Config& config, const KnowledgeGraph& kg,
                 std::mt19937_64& rng);

    /// |E| x ent_dim entity representations. Each layer computes
    ///   H' = H W_self + b + sum_r mean_{j in N_r(i)} H_j W_r
    /// with ReLU between layers and no activation after the last one.
    Var encode(const KnowledgeGraph& kg) const;
    Matrix encode_entities(const KnowledgeGraph& kg) const { return encode(kg).value(); }

    const Var& base() const { return base_; }
    int layers() const { return static_cast<int>(self_.size()); }
    const Var& attention_weight() const { return att_w_; }
    const Var& attention_bias() const { return att_b_; }

private:
    Var base_;
    std::vector<Linear> self_;
    std::vector<std::vector<Linear>> relation_;
    Var att_w_;  // d_att x ent_dim
    Var att_b_;  // d_att x 1
    size_t relation_count_ = 0;
};

struct UserAttention {
    Var user;     // 1 x ent_dim
    Var weights;  // 1 x n, on the simplex
};

/// a = softmax(b^T tanh(W_a N)), u = N a, where the rows of `mentioned` are
/// the stacked entity representations. An empty mention list yields u = 0
/// and an empty weight vector.
UserAttention user_self_attention(const Var& mentioned, const Var& att_w, const Var& att_b);
UserAttention user_self_attention(const std::vector<EntityId>& mentioned, const Var& embeddings,
                                  const GraphEncoder& encoder);

/// softmax(u^T e_i) over the listed item rows, 1 x |items|.
Var pre_rec_distribution(const Var& user, const Var& embeddings, const std::vector<EntityId>& items);
/// Mean over targets of -log dist(target); `target_columns` index into the
/// item list. Throws std::invalid_argument for an empty target list.
Var pre_rec_loss(const Var& dist, const std::vector<int>& target_columns, double clamp_eps = 1e-10);

}  // namespace vrkg
