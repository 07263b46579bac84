// Support of the dialogue-specific subgraph: head entities from the
// context, tail entities from a corpus-level mutual-information ranking
// plus the heads' graph neighbors.
#pragma once

#include "vrkg/corpus.hpp"

#include <string>
#include <utility>
#include <vector>

namespace vrkg {

/// P_c(e) = sum_{e_h != e} P(e|e_h) P(e_h) log(P(e|e_h) / P(e)), with
/// probabilities read from the counts. Pairs that never co-occur add
/// nothing. Requires stats.unit_count > 0.
std::vector<double> mi_scores(const CooccurrenceStats& stats);

/// Corpus-level ranking, computed once. Entities that never occur are not
/// eligible for the top-k.
class MiRanking {
public:
    MiRanking() = default;
    explicit MiRanking(const CooccurrenceStats& stats);
    MiRanking(std::vector<double> scores, std::vector<bool> occurs);

    /// Highest scores first, ties by ascending id.
    std::vector<EntityId> top_k(int k) const;

    const std::vector<double>& scores() const { return scores_; }
    const std::vector<bool>& occurs() const { return occurs_; }

    /// TSV cache: `entity_key<TAB>score` for every occurring entity.
    void save(const std::string& path, const KnowledgeGraph& kg) const;
    static MiRanking load(const std::string& path, const KnowledgeGraph& kg);

private:
    std::vector<double> scores_;
    std::vector<bool> occurs_;
    std::vector<EntityId> order_;
};

enum class TailSource { MiTopK, KgNeighbor, Both };
std::string to_string(TailSource s);

struct TailEntity {
    EntityId id;
    TailSource source;
};

/// Top-k MI entities in rank order, then graph neighbors of the heads that
/// are not already listed.
std::vector<TailEntity> select_tail_entities(const std::vector<EntityId>& heads,
                                             const MiRanking& ranking, const KnowledgeGraph& kg,
                                             int k);

struct CandidatePairs {
    std::vector<EntityId> heads;
    std::vector<TailEntity> tails;
    std::vector<std::pair<EntityId, EntityId>> pairs;  // head-major, self-pairs removed

    bool empty() const { return pairs.empty(); }
};

CandidatePairs candidate_pairs(const std::vector<EntityId>& heads, const std::vector<TailEntity>& tails);

/// Heads = context entities; tails and pairs as above.
CandidatePairs build_candidates(const TurnExample& example, const MiRanking& ranking,
                                const KnowledgeGraph& kg, int k);
CandidatePairs build_candidates(const std::vector<EntityId>& heads, const MiRanking& ranking,
                                const KnowledgeGraph& kg, int k);

}  // namespace vrkg
