// User representation from the inferred subgraph, the mixed item
// distribution, the recommendation objective and ELBO diagnostics.
#pragma once

#include "vrkg/config.hpp"
#include "vrkg/corpus.hpp"
#include "vrkg/tensor.hpp"

#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace vrkg {

/// e_u = sum over pairs of weight(pair) * e_tail(pair). `connect_weights`
/// is P x 1 and `tail_rows` P x d; an empty pair set gives the zero vector
/// of width `dim`.
Var user_representation(const Var& connect_weights, const Var& tail_rows, Eigen::Index dim);

/// score(i) = alpha softmax(e_u . e_i) + (1 - alpha) mass(i) / Z_rec, where
/// mass(i) sums the connect weights of pairs whose tail is item i and Z_rec
/// sums mass over all items. When Z_rec is zero only the softmax is used.
/// Returns 1 x |items|.
Var recommend_scores(const Var& user, const Var& item_rows, const Var& connect_weights,
                     const std::vector<EntityId>& pair_tails, const std::vector<EntityId>& items,
                     double alpha);

/// Mean over targets of log score(target), clamped at `clamp_eps`.
Var target_log_likelihood(const Var& scores, const std::vector<int>& target_columns,
                          double clamp_eps = 1e-10);

/// beta * (-mean log score(target)) + gamma * kl + lambda * reg.
Var rec_loss(const Var& scores, const std::vector<int>& target_columns, const Var& kl,
             const Var& reg, const Config& config);

/// log P(I_t | subgraph) for a hard assignment of the candidate pairs.
using SubgraphLikelihood = std::function<double(const std::vector<int>& bits)>;

/// E_q[log P(I_t | G)] - sum_pairs KL(q || p), with the expectation taken by
/// enumerating all 2^P subgraphs under the factorized posterior (P <= 24).
double elbo_exact(const Matrix& posterior, const Matrix& prior, const SubgraphLikelihood& loglik,
                  double clamp_eps = 1e-10);
/// Same bound with the expectation replaced by an n-sample average of exact
/// categorical draws from q.
double elbo_monte_carlo(const Matrix& posterior, const Matrix& prior, const SubgraphLikelihood& loglik,
                        int n_samples, std::mt19937_64& rng, double clamp_eps = 1e-10);

/// Top-m items by score, ties broken by ascending entity id; m is clamped
/// to the item count.
std::vector<EntityId> rank_items(const RowVector& scores, const std::vector<EntityId>& items, int m);

/// Column of each target within `items`; targets not in the list are dropped.
std::vector<int> item_columns(const std::vector<EntityId>& items, const std::vector<EntityId>& targets);

}  // namespace vrkg
