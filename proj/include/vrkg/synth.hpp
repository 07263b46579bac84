// Small planted corpus for overfit and smoke tests: 10 films, 10 actors,
// 10 genres, 30 planted edges of which a fraction is withheld from the
// observed graph, and two four-turn dialogues per film with one
// recommendation each.
#pragma once

#include "vrkg/config.hpp"
#include "vrkg/corpus.hpp"

#include <string>
#include <utility>
#include <vector>

namespace vrkg {

struct SyntheticCorpus {
    KnowledgeGraph full;
    KnowledgeGraph observed;  // full minus the withheld edges
    std::vector<std::pair<EntityId, EntityId>> withheld;
    std::string dialogues_jsonl;
    std::vector<Dialogue> dialogues;  // parsed against `observed`
};

/// Withheld edges are drawn with `seed`; everything else is fixed.
SyntheticCorpus make_synthetic_corpus(uint64_t seed = 7, double withhold_fraction = 0.3);

/// Small dimensions and epoch counts that let the fixture overfit quickly.
Config fixture_config();

/// Writes `<dir>/kg.tsv`, `<dir>/kg.entities.tsv`, `<dir>/withheld.tsv`,
/// `<dir>/dialogues.jsonl` and `<dir>/config.json` (data paths point at the
/// written files). Returns the config path.
std::string write_synthetic_corpus(const SyntheticCorpus& corpus, const std::string& dir, Config config);

void write_kg_tsv(const KnowledgeGraph& kg, const std::string& triples_path, const std::string& entities_path);

/// Reads `head_key<TAB>tail_key` lines.
std::vector<std::pair<EntityId, EntityId>> load_edge_list(const std::string& path, const KnowledgeGraph& kg);

}  // namespace vrkg
