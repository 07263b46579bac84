// Recall@m for recommendation; Distinct-n and recall-oriented ROUGE for
// generation.
#pragma once

#include "vrkg/corpus.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace vrkg {

using TokenList = std::vector<std::string>;

/// Fraction of (example, gold item) pairs whose gold item is in the first m
/// entries of that example's ranking. Examples without gold items are
/// skipped; with nothing to count the result is 0.
double recall_at_k(const std::vector<std::vector<EntityId>>& rankings,
                   const std::vector<std::vector<EntityId>>& gold_sets, int m);

/// Unique n-grams over total n-grams, pooled across all responses. An empty
/// pool gives 0.
double distinct_n(const std::vector<TokenList>& responses, int n);

struct RougeScores {
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
};

/// Recall of reference n-grams (clipped counts) and LCS recall, averaged over
/// examples. Empty references are skipped; for ROUGE-2 a reference without
/// bigrams is skipped as well.
RougeScores rouge_scores(const std::vector<TokenList>& generated, const std::vector<TokenList>& references);

/// Longest common subsequence length.
size_t lcs_length(const TokenList& a, const TokenList& b);

struct EvalReport {
    std::map<int, double> recall;    // m in {1, 10, 50}
    std::map<int, double> distinct;  // n in {3, 4}
    std::map<std::string, double> rouge;  // "1", "2", "l"
    size_t example_count = 0;
    size_t rec_example_count = 0;
    size_t gen_example_count = 0;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
    /// Checks keys, ranges and types of a serialized report; returns the
    /// problems found.
    static std::vector<std::string> validate(const nlohmann::json& j);
    bool operator==(const EvalReport&) const = default;
};

/// Line-delimited files shared with the evaluation pipeline.
struct RankingRecord {
    std::string example_id;
    std::vector<std::string> items;  // entity keys, best first
    std::vector<double> scores;
    std::vector<std::string> gold;
};
struct GenerationRecord {
    std::string example_id;
    TokenList tokens;
    TokenList reference;
};

void write_rankings(const std::string& path, const std::vector<RankingRecord>& records);
std::vector<RankingRecord> read_rankings(const std::string& path);
void write_generations(const std::string& path, const std::vector<GenerationRecord>& records);
std::vector<GenerationRecord> read_generations(const std::string& path);

/// Report from the two files alone.
EvalReport report_from_records(const std::vector<RankingRecord>& rankings,
                               const std::vector<GenerationRecord>& generations);

}  // namespace vrkg
