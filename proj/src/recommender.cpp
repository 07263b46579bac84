#include "vrkg/recommender.hpp"

#include "vrkg/refactor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vrkg {

Var user_representation(const Var& connect_weights, const Var& tail_rows, Eigen::Index dim) {
    if (connect_weights.rows() == 0) return Var(Matrix::Zero(1, dim));
    if (connect_weights.rows() != tail_rows.rows()) {
        throw std::invalid_argument("user_representation: weight and tail counts differ");
    }
    return matmul(transpose(connect_weights), tail_rows);
}

Var recommend_scores(const Var& user, const Var& item_rows, const Var& connect_weights,
                     const std::vector<EntityId>& pair_tails, const std::vector<EntityId>& items,
                     double alpha) {
    if (items.empty()) throw std::invalid_argument("recommend_scores needs at least one item");
    Var preference = softmax_rows(matmul(user, transpose(item_rows)));
    if (pair_tails.empty()) return preference;

    std::vector<int> item_pos;
    std::vector<int> columns;
    for (size_t p = 0; p < pair_tails.size(); ++p) {
        auto it = std::lower_bound(items.begin(), items.end(), pair_tails[p]);
        if (it != items.end() && *it == pair_tails[p]) {
            item_pos.push_back(static_cast<int>(p));
            columns.push_back(static_cast<int>(it - items.begin()));
        }
    }
    if (item_pos.empty()) return preference;
    Var item_weights = gather_rows(connect_weights, item_pos);  // k x 1
    Var mass = scatter_add_cols(transpose(item_weights), columns,
                                static_cast<Eigen::Index>(items.size()));
    Var z = sum(mass);
    if (z.item() <= 0.0) return preference;
    return add(scale(preference, alpha), scale(div(mass, z), 1.0 - alpha));
}

Var target_log_likelihood(const Var& scores, const std::vector<int>& target_columns, double clamp_eps) {
    if (target_columns.empty()) throw std::invalid_argument("no target items");
    std::vector<Var> terms;
    for (int c : target_columns) terms.push_back(log(element(scores, 0, c), clamp_eps));
    return scale(sum(concat_cols(terms)), 1.0 / static_cast<double>(terms.size()));
}

Var rec_loss(const Var& scores, const std::vector<int>& target_columns, const Var& kl,
             const Var& reg, const Config& config) {
    Var nll = neg(target_log_likelihood(scores, target_columns, config.clamp_eps));
    return add(add(scale(nll, config.beta), scale(kl, config.gamma)), scale(reg, config.lambda));
}

namespace {

double pair_kl(const Matrix& q, const Matrix& p, double eps) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < q.rows(); ++r)
        for (Eigen::Index c = 0; c < 2; ++c) {
            const double qv = q(r, c);
            if (qv > 0.0) total += qv * (std::log(std::max(qv, eps)) - std::log(std::max(p(r, c), eps)));
        }
    return total;
}

}  // namespace

double elbo_exact(const Matrix& posterior, const Matrix& prior, const SubgraphLikelihood& loglik,
                  double clamp_eps) {
    const auto pairs = static_cast<int>(posterior.rows());
    if (pairs > 24) throw std::invalid_argument("elbo_exact: too many pairs to enumerate");
    double expected = 0.0;
    std::vector<int> bits(static_cast<size_t>(pairs));
    for (uint64_t mask = 0; mask < (uint64_t{1} << pairs); ++mask) {
        double q = 1.0;
        for (int i = 0; i < pairs; ++i) {
            bits[static_cast<size_t>(i)] = (mask >> i) & 1U ? 1 : 0;
            q *= posterior(i, bits[static_cast<size_t>(i)] ? 0 : 1);
        }
        if (q == 0.0) continue;
        expected += q * loglik(bits);
    }
    return expected - pair_kl(posterior, prior, clamp_eps);
}

double elbo_monte_carlo(const Matrix& posterior, const Matrix& prior, const SubgraphLikelihood& loglik,
                        int n_samples, std::mt19937_64& rng, double clamp_eps) {
    if (n_samples <= 0) throw std::invalid_argument("elbo_monte_carlo: n_samples must be positive");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double total = 0.0;
    std::vector<int> bits(static_cast<size_t>(posterior.rows()));
    for (int s = 0; s < n_samples; ++s) {
        for (Eigen::Index r = 0; r < posterior.rows(); ++r) {
            bits[static_cast<size_t>(r)] = unif(rng) < posterior(r, 0) ? 1 : 0;
        }
        total += loglik(bits);
    }
    return total / n_samples - pair_kl(posterior, prior, clamp_eps);
}

std::vector<EntityId> rank_items(const RowVector& scores, const std::vector<EntityId>& items, int m) {
    if (m < 1) throw std::invalid_argument("rank_items: m must be >= 1");
    if (scores.size() != static_cast<Eigen::Index>(items.size())) {
        throw std::invalid_argument("rank_items: score count differs from item count");
    }
    std::vector<size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const double sa = scores(static_cast<Eigen::Index>(a));
        const double sb = scores(static_cast<Eigen::Index>(b));
        return sa != sb ? sa > sb : items[a] < items[b];
    });
    const size_t n = std::min(order.size(), static_cast<size_t>(m));
    std::vector<EntityId> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(items[order[i]]);
    return out;
}

std::vector<int> item_columns(const std::vector<EntityId>& items, const std::vector<EntityId>& targets) {
    std::vector<int> cols;
    for (EntityId t : targets) {
        auto it = std::lower_bound(items.begin(), items.end(), t);
        if (it != items.end() && *it == t) cols.push_back(static_cast<int>(it - items.begin()));
    }
    return cols;
}

}  // namespace vrkg
