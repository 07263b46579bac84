#include "vrkg/subgraph_select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vrkg {

std::vector<double> mi_scores(const CooccurrenceStats& stats) {
    if (stats.unit_count <= 0) throw std::invalid_argument("mi_scores needs at least one counting unit");
    const auto n = static_cast<double>(stats.unit_count);
    std::vector<double> scores(stats.entity_count.size(), 0.0);
    // pair_count iterates (e, e_h) in ascending order, so every score sums its
    // terms in ascending e_h order.
    for (const auto& [key, joint] : stats.pair_count) {
        const auto [e, eh] = key;
        if (joint <= 0) continue;
        const auto count_h = static_cast<double>(stats.entity_count[static_cast<size_t>(eh)]);
        const auto count_e = static_cast<double>(stats.entity_count[static_cast<size_t>(e)]);
        const double p_cond = static_cast<double>(joint) / count_h;
        const double p_head = count_h / n;
        const double p_e = count_e / n;
        scores[static_cast<size_t>(e)] += p_cond * p_head * std::log(p_cond / p_e);
    }
    return scores;
}

namespace {

std::vector<bool> occurring(const CooccurrenceStats& stats) {
    std::vector<bool> out(stats.entity_count.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = stats.entity_count[i] > 0;
    return out;
}

}  // namespace

MiRanking::MiRanking(const CooccurrenceStats& stats)
    : MiRanking(stats.unit_count > 0 ? mi_scores(stats)
                                     : std::vector<double>(stats.entity_count.size(), 0.0),
                occurring(stats)) {}

MiRanking::MiRanking(std::vector<double> scores, std::vector<bool> occurs)
    : scores_(std::move(scores)), occurs_(std::move(occurs)) {
    if (scores_.size() != occurs_.size()) throw std::invalid_argument("MiRanking: size mismatch");
    for (size_t i = 0; i < scores_.size(); ++i)
        if (occurs_[i]) order_.push_back(static_cast<EntityId>(i));
    std::stable_sort(order_.begin(), order_.end(), [this](EntityId a, EntityId b) {
        const double sa = scores_[static_cast<size_t>(a)];
        const double sb = scores_[static_cast<size_t>(b)];
        return sa != sb ? sa > sb : a < b;
    });
}

std::vector<EntityId> MiRanking::top_k(int k) const {
    const size_t n = std::min(order_.size(), static_cast<size_t>(std::max(k, 0)));
    return {order_.begin(), order_.begin() + static_cast<long>(n)};
}

void MiRanking::save(const std::string& path, const KnowledgeGraph& kg) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    char buf[64];
    for (size_t i = 0; i < scores_.size(); ++i) {
        if (!occurs_[i]) continue;
        std::snprintf(buf, sizeof buf, "%.17g", scores_[i]);
        out << kg.key(static_cast<EntityId>(i)) << '\t' << buf << '\n';
    }
}

MiRanking MiRanking::load(const std::string& path, const KnowledgeGraph& kg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<double> scores(kg.entity_count(), 0.0);
    std::vector<bool> occurs(kg.entity_count(), false);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path, lineno, "expected entity<TAB>score");
        auto id = kg.find_key(line.substr(0, tab));
        if (!id) throw DanglingIdError(path + ":" + std::to_string(lineno) + ": unknown entity");
        try {
            scores[static_cast<size_t>(*id)] = std::stod(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw ParseError(path, lineno, "bad score");
        }
        occurs[static_cast<size_t>(*id)] = true;
    }
    return MiRanking(std::move(scores), std::move(occurs));
}

std::string to_string(TailSource s) {
    switch (s) {
        case TailSource::MiTopK: return "mi_topk";
        case TailSource::KgNeighbor: return "kg_neighbor";
        case TailSource::Both: return "both";
    }
    return "mi_topk";
}

std::vector<TailEntity> select_tail_entities(const std::vector<EntityId>& heads,
                                             const MiRanking& ranking, const KnowledgeGraph& kg,
                                             int k) {
    std::vector<TailEntity> tails;
    std::vector<int> position(kg.entity_count(), -1);
    for (EntityId e : ranking.top_k(k)) {
        position[static_cast<size_t>(e)] = static_cast<int>(tails.size());
        tails.push_back({e, TailSource::MiTopK});
    }
    for (EntityId h : heads) {
        for (EntityId nb : kg.neighbors(h)) {
            const int pos = position[static_cast<size_t>(nb)];
            if (pos < 0) {
                position[static_cast<size_t>(nb)] = static_cast<int>(tails.size());
                tails.push_back({nb, TailSource::KgNeighbor});
            } else if (tails[static_cast<size_t>(pos)].source == TailSource::MiTopK) {
                tails[static_cast<size_t>(pos)].source = TailSource::Both;
            }
        }
    }
    return tails;
}

CandidatePairs candidate_pairs(const std::vector<EntityId>& heads, const std::vector<TailEntity>& tails) {
    CandidatePairs out;
    out.heads = heads;
    out.tails = tails;
    if (heads.empty()) return out;
    for (EntityId h : heads)
        for (const auto& t : tails)
            if (t.id != h) out.pairs.emplace_back(h, t.id);
    return out;
}

CandidatePairs build_candidates(const std::vector<EntityId>& heads, const MiRanking& ranking,
                                const KnowledgeGraph& kg, int k) {
    if (heads.empty()) return {};
    return candidate_pairs(heads, select_tail_entities(heads, ranking, kg, k));
}

CandidatePairs build_candidates(const TurnExample& example, const MiRanking& ranking,
                                const KnowledgeGraph& kg, int k) {
    return build_candidates(example.context_entities(), ranking, kg, k);
}

}  // namespace vrkg
