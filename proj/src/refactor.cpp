#include "vrkg/refactor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vrkg {

Var fuse(const Var& e_h, const Var& e_t, const Var& d, const Var& w_o) {
    if (e_h.cols() != e_t.cols() || e_h.cols() != d.cols() || e_h.rows() != e_t.rows()) {
        throw std::invalid_argument("fuse: head, tail and context dimensions differ");
    }
    if (w_o.rows() != 7 * e_h.cols()) throw std::invalid_argument("fuse: W_o must have 7*d rows");
    Var dd = d.rows() == e_h.rows() ? d : repeat_rows(d, e_h.rows());
    Var ht = mul(e_h, e_t);
    Var f = concat_cols({e_h, e_t, dd, ht, mul(e_t, dd), mul(e_h, dd), mul(ht, dd)});
    return matmul(f, w_o);
}

RefactorNet::RefactorNet(ParameterStore& store, const std::string& prefix, const Config& config,
                         std::mt19937_64& rng) {
    const Eigen::Index d = config.ent_dim;
    ctx_proj_ = Linear(store, prefix + ".ctx_proj", config.ctx_dim, d, ParamGroup::Other, rng);
    w_o_ = store.create(prefix + ".w_o", xavier_init(7 * d, 7 * d, rng), ParamGroup::Other);
    hidden_ = Linear(store, prefix + ".mlp.hidden", 7 * d, config.effective_mlp_hidden(),
                     ParamGroup::Other, rng);
    output_ = Linear(store, prefix + ".mlp.out", config.effective_mlp_hidden(), 2, ParamGroup::Other, rng);
}

Var RefactorNet::fuse(const Var& e_h, const Var& e_t, const Var& projected_context) const {
    return vrkg::fuse(e_h, e_t, projected_context, w_o_);
}

Var RefactorNet::logits(const Var& fused) const { return output_(tanh(hidden_(fused))); }

Var RefactorNet::distribution(const Var& fused) const { return softmax_rows(logits(fused)); }

Var RefactorNet::forward(const Var& e_h, const Var& e_t, const Var& context) const {
    return distribution(fuse(e_h, e_t, project_context(context)));
}

RelationDistribution to_relation(const Matrix& dist, Eigen::Index row) {
    return {dist(row, 0), dist(row, 1)};
}

std::vector<RelationDistribution> to_relations(const Matrix& dist) {
    std::vector<RelationDistribution> out;
    out.reserve(static_cast<size_t>(dist.rows()));
    for (Eigen::Index r = 0; r < dist.rows(); ++r) out.push_back(to_relation(dist, r));
    return out;
}

Matrix gumbel_noise(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    constexpr double tiny = 1e-20;
    Matrix g(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            const double u = std::max(unif(rng), tiny);
            g(r, c) = -std::log(-std::log(u) + tiny);
        }
    return g;
}

Var sample_gumbel_with_noise(const Var& dist, const Matrix& noise, double tau, bool hard,
                             double clamp_eps) {
    if (tau <= 0.0) throw std::invalid_argument("Gumbel temperature must be positive");
    Var perturbed = add(log(dist, clamp_eps), Var(noise));
    Var relaxed = softmax_rows(scale(perturbed, 1.0 / tau));
    if (!hard) return relaxed;
    Matrix onehot = Matrix::Zero(relaxed.rows(), relaxed.cols());
    for (Eigen::Index r = 0; r < relaxed.rows(); ++r) {
        Eigen::Index best = 0;
        relaxed.value().row(r).maxCoeff(&best);
        onehot(r, best) = 1.0;
    }
    return straight_through(relaxed, onehot);
}

Var sample_gumbel(const Var& dist, double tau, bool hard, std::mt19937_64& rng, double clamp_eps) {
    return sample_gumbel_with_noise(dist, gumbel_noise(dist.rows(), dist.cols(), rng), tau, hard,
                                    clamp_eps);
}

int argmax_sample(const RelationDistribution& d) { return d.p_connect >= d.p_not ? 1 : 0; }

std::vector<int> argmax_bits(const Matrix& dist) {
    std::vector<int> bits;
    bits.reserve(static_cast<size_t>(dist.rows()));
    for (Eigen::Index r = 0; r < dist.rows(); ++r) bits.push_back(argmax_sample(to_relation(dist, r)));
    return bits;
}

SampledSubgraph sample_subgraph(const std::vector<std::pair<EntityId, EntityId>>& pairs,
                                const Var& dist, SampleMode mode, double tau,
                                std::mt19937_64& rng, double clamp_eps) {
    SampledSubgraph s;
    s.pairs = pairs;
    s.mode = mode;
    switch (mode) {
        case SampleMode::GumbelRelaxed: s.weights = sample_gumbel(dist, tau, false, rng, clamp_eps); break;
        case SampleMode::GumbelHard: s.weights = sample_gumbel(dist, tau, true, rng, clamp_eps); break;
        case SampleMode::Argmax: {
            const auto bits = argmax_bits(dist.value());
            Matrix onehot = Matrix::Zero(dist.rows(), 2);
            for (size_t i = 0; i < bits.size(); ++i) onehot(static_cast<Eigen::Index>(i), bits[i] ? 0 : 1) = 1.0;
            s.weights = Var(onehot);
            break;
        }
    }
    const Matrix& w = s.weights.value();
    for (Eigen::Index r = 0; r < w.rows(); ++r) s.bits.push_back(w(r, 0) >= w(r, 1) ? 1 : 0);
    return s;
}

std::vector<int> original_labels(const KnowledgeGraph& kg,
                                 const std::vector<std::pair<EntityId, EntityId>>& pairs) {
    std::vector<int> labels;
    labels.reserve(pairs.size());
    for (auto [h, t] : pairs) labels.push_back(kg.connected(h, t) ? 1 : 0);
    return labels;
}

Var reg_loss(const Var& prior, const Var& posterior, const std::vector<int>& labels, double clamp_eps) {
    if (prior.rows() != static_cast<Eigen::Index>(labels.size()) || posterior.rows() != prior.rows()) {
        throw std::invalid_argument("reg_loss: pair counts differ");
    }
    if (labels.empty()) return Var::scalar(0.0);
    // One-hot selector: column 0 for connected pairs, column 1 otherwise.
    Matrix select = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), 2);
    for (size_t i = 0; i < labels.size(); ++i) select(static_cast<Eigen::Index>(i), labels[i] ? 0 : 1) = 1.0;
    Var sel(select);
    Var lp = sum(mul(log(prior, clamp_eps), sel));
    Var lq = sum(mul(log(posterior, clamp_eps), sel));
    return neg(add(lp, lq));
}

Var kl_term(const Var& posterior, const Var& prior, double clamp_eps) {
    if (posterior.rows() != prior.rows() || posterior.cols() != prior.cols()) {
        throw std::invalid_argument("kl_term: distribution shapes differ");
    }
    if (posterior.rows() == 0) return Var::scalar(0.0);
    return sum(mul(posterior, sub(log(posterior, clamp_eps), log(prior, clamp_eps))));
}

double subgraph_log_prob(const Matrix& dist, const std::vector<int>& bits, double clamp_eps) {
    if (static_cast<Eigen::Index>(bits.size()) != dist.rows()) {
        throw std::invalid_argument("subgraph_log_prob: bit count differs from pair count");
    }
    double total = 0.0;
    for (size_t i = 0; i < bits.size(); ++i) {
        const double p = dist(static_cast<Eigen::Index>(i), bits[i] ? 0 : 1);
        total += std::log(std::max(p, clamp_eps));
    }
    return total;
}

}  // namespace vrkg
