#include "vrkg/graph_encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace vrkg {

std::vector<SparseMatrix> relation_adjacency(const KnowledgeGraph& kg) {
    const auto n = static_cast<Eigen::Index>(kg.entity_count());
    const size_t r_count = kg.relation_count();
    std::vector<std::vector<Eigen::Triplet<double>>> entries(2 * r_count);
    std::vector<std::vector<int>> degree(2 * r_count, std::vector<int>(static_cast<size_t>(n), 0));
    for (const auto& t : kg.triples()) {
        const auto fwd = static_cast<size_t>(t.relation);
        const auto inv = fwd + r_count;
        ++degree[fwd][static_cast<size_t>(t.tail)];
        ++degree[inv][static_cast<size_t>(t.head)];
    }
    for (const auto& t : kg.triples()) {
        const auto fwd = static_cast<size_t>(t.relation);
        const auto inv = fwd + r_count;
        entries[fwd].emplace_back(t.tail, t.head, 1.0 / degree[fwd][static_cast<size_t>(t.tail)]);
        entries[inv].emplace_back(t.head, t.tail, 1.0 / degree[inv][static_cast<size_t>(t.head)]);
    }
    std::vector<SparseMatrix> out;
    out.reserve(entries.size());
    for (auto& e : entries) {
        SparseMatrix m(n, n);
        m.setFromTriplets(e.begin(), e.end());
        out.push_back(std::move(m));
    }
    return out;
}

GraphEncoder::GraphEncoder(ParameterStore& store, const Config& config, const KnowledgeGraph& kg,
                           std::mt19937_64& rng)
    : relation_count_(kg.relation_count()) {
    const Eigen::Index d = config.ent_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    base_ = store.create("graph.base",
                         uniform_init(static_cast<Eigen::Index>(kg.entity_count()), d, bound, rng),
                         ParamGroup::Graph);
    for (int l = 0; l < config.rgcn_layers; ++l) {
        const std::string p = "graph.layer" + std::to_string(l);
        self_.emplace_back(store, p + ".self", d, d, ParamGroup::Graph, rng);
        std::vector<Linear> rel;
        for (size_t r = 0; r < 2 * relation_count_; ++r) {
            rel.emplace_back(store, p + ".rel" + std::to_string(r), d, d, ParamGroup::Graph, rng, false);
        }
        relation_.push_back(std::move(rel));
    }
    const Eigen::Index da = config.effective_att_dim();
    att_w_ = store.create("graph.att.weight", xavier_init(da, d, rng), ParamGroup::Graph);
    att_b_ = store.create("graph.att.bias", xavier_init(da, 1, rng), ParamGroup::Graph);
}

Var GraphEncoder::encode(const KnowledgeGraph& kg) const {
    if (kg.relation_count() != relation_count_ ||
        static_cast<Eigen::Index>(kg.entity_count()) != base_.rows()) {
        throw std::invalid_argument("graph does not match the encoder's entity/relation tables");
    }
    const auto adj = relation_adjacency(kg);
    Var h = base_;
    for (size_t l = 0; l < self_.size(); ++l) {
        Var out = self_[l](h);
        for (size_t r = 0; r < adj.size(); ++r) {
            if (adj[r].nonZeros() == 0) continue;
            out = add(out, relation_[l][r](sparse_matmul(adj[r], h)));
        }
        h = l + 1 < self_.size() ? relu(out) : out;
    }
    return h;
}

UserAttention user_self_attention(const Var& mentioned, const Var& att_w, const Var& att_b) {
    if (mentioned.rows() == 0) {
        return {Var(Matrix::Zero(1, mentioned.cols())), Var(Matrix(1, 0))};
    }
    Var hidden = tanh(matmul(mentioned, transpose(att_w)));  // n x d_att
    Var logits = transpose(matmul(hidden, att_b));            // 1 x n
    Var weights = softmax_rows(logits);
    return {matmul(weights, mentioned), weights};
}

UserAttention user_self_attention(const std::vector<EntityId>& mentioned, const Var& embeddings,
                                  const GraphEncoder& encoder) {
    if (mentioned.empty()) return {Var(Matrix::Zero(1, embeddings.cols())), Var(Matrix(1, 0))};
    return user_self_attention(gather_rows(embeddings, mentioned), encoder.attention_weight(),
                               encoder.attention_bias());
}

Var pre_rec_distribution(const Var& user, const Var& embeddings, const std::vector<EntityId>& items) {
    if (items.empty()) throw std::invalid_argument("pre_rec_distribution needs at least one item");
    Var item_rows = gather_rows(embeddings, items);
    return softmax_rows(matmul(user, transpose(item_rows)));
}

Var pre_rec_loss(const Var& dist, const std::vector<int>& target_columns, double clamp_eps) {
    if (target_columns.empty()) throw std::invalid_argument("pre_rec_loss needs at least one target");
    std::vector<Var> terms;
    for (int c : target_columns) terms.push_back(neg(log(element(dist, 0, c), clamp_eps)));
    return scale(sum(concat_cols(terms)), 1.0 / static_cast<double>(terms.size()));
}

}  // namespace vrkg
