// Prior and approximate-posterior relation refactor networks. Each maps an
// (e_h, e_t, context) triple to a two-class distribution over
// {connected, not connected}; column 0 of every distribution matrix is
// p(connected).
#pragma once

#include "vrkg/config.hpp"
#include "vrkg/corpus.hpp"
#include "vrkg/nn.hpp"

#include <random>
#include <utility>
#include <vector>

namespace vrkg {

struct RelationDistribution {
    double p_connect = 0.5;
    double p_not = 0.5;
};

/// m = [f1; f2; f3] W_o with f1 = [e_h; e_t; d], f2 = [e_h*e_t; e_t*d; e_h*d],
/// f3 = e_h*e_t*d. Rows are pairs; `d` is 1 x ent_dim (already projected)
/// or one row per pair. W_o is 7 ent_dim x 7 ent_dim without bias.
Var fuse(const Var& e_h, const Var& e_t, const Var& d, const Var& w_o);

class RefactorNet {
public:
    RefactorNet() = default;
    /// `prefix` is "prior" or "posterior".
    RefactorNet(ParameterStore& store, const std::string& prefix, const Config& config,
                std::mt19937_64& rng);

    /// 1 x ctx_dim -> 1 x ent_dim.
    Var project_context(const Var& context) const { return ctx_proj_(context); }
    Var fuse(const Var& e_h, const Var& e_t, const Var& projected_context) const;
    /// Two-layer perceptron (tanh hidden) followed by a row softmax, P x 2.
    Var distribution(const Var& fused) const;
    Var logits(const Var& fused) const;

    /// Full path from entity rows and the raw context vector.
    Var forward(const Var& e_h, const Var& e_t, const Var& context) const;

    const Var& w_o() const { return w_o_; }
    const Linear& hidden() const { return hidden_; }
    const Linear& output() const { return output_; }

private:
    Linear ctx_proj_;
    Var w_o_;
    Linear hidden_;
    Linear output_;
};

RelationDistribution to_relation(const Matrix& dist, Eigen::Index row);
std::vector<RelationDistribution> to_relations(const Matrix& dist);

enum class SampleMode { GumbelRelaxed, GumbelHard, Argmax };

struct SampledSubgraph {
    std::vector<std::pair<EntityId, EntityId>> pairs;
    Var weights;             // P x 2; column 0 is the connected weight
    std::vector<int> bits;   // argmax of each row of the sample
    SampleMode mode = SampleMode::GumbelHard;

    /// Column 0 of `weights` as a P x 1 differentiable column.
    Var connect_weights() const { return slice_cols(weights, 0, 1); }
};

/// y = softmax((log p + g) / tau) per row with Gumbel noise g. With `hard`
/// the value is the one-hot argmax and gradients follow y.
Var sample_gumbel(const Var& dist, double tau, bool hard, std::mt19937_64& rng,
                  double clamp_eps = 1e-10);
/// Same with caller-provided noise (P x 2), for reproducible gradient checks.
Var sample_gumbel_with_noise(const Var& dist, const Matrix& noise, double tau, bool hard,
                             double clamp_eps = 1e-10);
Matrix gumbel_noise(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// 1 iff p_connect >= p_not.
int argmax_sample(const RelationDistribution& d);
std::vector<int> argmax_bits(const Matrix& dist);

SampledSubgraph sample_subgraph(const std::vector<std::pair<EntityId, EntityId>>& pairs,
                                const Var& dist, SampleMode mode, double tau,
                                std::mt19937_64& rng, double clamp_eps = 1e-10);

/// p_org labels: 1 when the graph links the pair.
std::vector<int> original_labels(const KnowledgeGraph& kg,
                                 const std::vector<std::pair<EntityId, EntityId>>& pairs);

/// sum_pairs KL(p_org || prior) + KL(p_org || posterior); with one-hot p_org
/// each term is -log p(labelled class), clamped at `clamp_eps`.
Var reg_loss(const Var& prior, const Var& posterior, const std::vector<int>& labels,
             double clamp_eps = 1e-10);
/// sum_pairs KL(q || p) over the two classes.
Var kl_term(const Var& posterior, const Var& prior, double clamp_eps = 1e-10);

/// log of the product of per-pair probabilities of the given bits.
double subgraph_log_prob(const Matrix& dist, const std::vector<int>& bits, double clamp_eps = 1e-10);

}  // namespace vrkg
