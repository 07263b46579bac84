#include "vrkg/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace vrkg {

double recall_at_k(const std::vector<std::vector<EntityId>>& rankings,
                   const std::vector<std::vector<EntityId>>& gold_sets, int m) {
    if (m < 1) throw std::invalid_argument("recall_at_k: m must be >= 1");
    if (rankings.size() != gold_sets.size()) throw std::invalid_argument("recall_at_k: size mismatch");
    size_t hits = 0;
    size_t total = 0;
    for (size_t i = 0; i < rankings.size(); ++i) {
        const auto& r = rankings[i];
        const auto top_end = r.begin() + static_cast<long>(std::min(r.size(), static_cast<size_t>(m)));
        for (EntityId g : gold_sets[i]) {
            ++total;
            if (std::find(r.begin(), top_end, g) != top_end) ++hits;
        }
    }
    return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

namespace {

std::map<TokenList, size_t> ngram_counts(const TokenList& tokens, int n) {
    std::map<TokenList, size_t> counts;
    const auto un = static_cast<size_t>(n);
    for (size_t i = 0; i + un <= tokens.size(); ++i) {
        ++counts[TokenList(tokens.begin() + static_cast<long>(i), tokens.begin() + static_cast<long>(i + un))];
    }
    return counts;
}

// Clipped recall of reference n-grams; negative when the reference has none.
double ngram_recall(const TokenList& gen, const TokenList& ref, int n) {
    const auto ref_counts = ngram_counts(ref, n);
    if (ref_counts.empty()) return -1.0;
    const auto gen_counts = ngram_counts(gen, n);
    size_t overlap = 0;
    size_t total = 0;
    for (const auto& [g, c] : ref_counts) {
        total += c;
        auto it = gen_counts.find(g);
        if (it != gen_counts.end()) overlap += std::min(c, it->second);
    }
    return static_cast<double>(overlap) / static_cast<double>(total);
}

}  // namespace

double distinct_n(const std::vector<TokenList>& responses, int n) {
    if (n < 1) throw std::invalid_argument("distinct_n: n must be >= 1");
    std::set<TokenList> unique;
    size_t total = 0;
    for (const auto& r : responses) {
        for (const auto& [g, c] : ngram_counts(r, n)) {
            unique.insert(g);
            total += c;
        }
    }
    return total ? static_cast<double>(unique.size()) / static_cast<double>(total) : 0.0;
}

size_t lcs_length(const TokenList& a, const TokenList& b) {
    std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

RougeScores rouge_scores(const std::vector<TokenList>& generated, const std::vector<TokenList>& references) {
    if (generated.size() != references.size()) throw std::invalid_argument("rouge_scores: size mismatch");
    double s1 = 0, s2 = 0, sl = 0;
    size_t n1 = 0, n2 = 0, nl = 0;
    for (size_t i = 0; i < generated.size(); ++i) {
        const auto& ref = references[i];
        if (ref.empty()) continue;
        s1 += ngram_recall(generated[i], ref, 1);
        ++n1;
        const double r2 = ngram_recall(generated[i], ref, 2);
        if (r2 >= 0.0) {
            s2 += r2;
            ++n2;
        }
        sl += static_cast<double>(lcs_length(generated[i], ref)) / static_cast<double>(ref.size());
        ++nl;
    }
    RougeScores out;
    out.rouge1 = n1 ? s1 / static_cast<double>(n1) : 0.0;
    out.rouge2 = n2 ? s2 / static_cast<double>(n2) : 0.0;
    out.rougeL = nl ? sl / static_cast<double>(nl) : 0.0;
    return out;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["recall"] = nlohmann::json::object();
    for (auto [m, v] : recall) j["recall"][std::to_string(m)] = v;
    j["distinct"] = nlohmann::json::object();
    for (auto [n, v] : distinct) j["distinct"][std::to_string(n)] = v;
    j["rouge"] = nlohmann::json::object();
    for (const auto& [k, v] : rouge) j["rouge"][k] = v;
    j["example_count"] = example_count;
    j["rec_example_count"] = rec_example_count;
    j["gen_example_count"] = gen_example_count;
    return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    const auto problems = validate(j);
    if (!problems.empty()) throw std::invalid_argument("invalid eval report: " + problems.front());
    EvalReport r;
    for (const auto& [k, v] : j.at("recall").items()) r.recall[std::stoi(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("distinct").items()) r.distinct[std::stoi(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("rouge").items()) r.rouge[k] = v.get<double>();
    r.example_count = j.at("example_count").get<size_t>();
    r.rec_example_count = j.at("rec_example_count").get<size_t>();
    r.gen_example_count = j.at("gen_example_count").get<size_t>();
    return r;
}

std::vector<std::string> EvalReport::validate(const nlohmann::json& j) {
    std::vector<std::string> problems;
    if (!j.is_object()) return {"report is not an object"};
    auto check_map = [&](const char* name, const std::vector<std::string>& keys) {
        if (!j.contains(name) || !j[name].is_object()) {
            problems.push_back(std::string("missing object '") + name + "'");
            return;
        }
        for (const auto& k : keys) {
            if (!j[name].contains(k)) {
                problems.push_back(std::string(name) + " lacks key '" + k + "'");
                continue;
            }
            const auto& v = j[name][k];
            if (!v.is_number()) problems.push_back(std::string(name) + "." + k + " is not a number");
            else if (v.get<double>() < 0.0 || v.get<double>() > 1.0)
                problems.push_back(std::string(name) + "." + k + " outside [0,1]");
        }
        if (j[name].size() != keys.size()) problems.push_back(std::string(name) + " has unexpected keys");
    };
    check_map("recall", {"1", "10", "50"});
    check_map("distinct", {"3", "4"});
    check_map("rouge", {"1", "2", "l"});
    for (const char* k : {"example_count", "rec_example_count", "gen_example_count"}) {
        if (!j.contains(k) || !j[k].is_number_unsigned()) problems.push_back(std::string(k) + " is not a count");
    }
    return problems;
}

void write_rankings(const std::string& path, const std::vector<RankingRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (const auto& r : records) {
        nlohmann::json j{{"example_id", r.example_id}, {"items", r.items}, {"scores", r.scores}, {"gold", r.gold}};
        out << j.dump() << '\n';
    }
}

std::vector<RankingRecord> read_rankings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<RankingRecord> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            RankingRecord r;
            r.example_id = j.at("example_id").get<std::string>();
            r.items = j.at("items").get<std::vector<std::string>>();
            r.scores = j.value("scores", std::vector<double>{});
            r.gold = j.at("gold").get<std::vector<std::string>>();
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path, lineno, e.what());
        }
    }
    return out;
}

void write_generations(const std::string& path, const std::vector<GenerationRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (const auto& r : records) {
        nlohmann::json j{{"example_id", r.example_id}, {"tokens", r.tokens}, {"reference", r.reference}};
        out << j.dump() << '\n';
    }
}

std::vector<GenerationRecord> read_generations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<GenerationRecord> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            GenerationRecord r;
            r.example_id = j.at("example_id").get<std::string>();
            r.tokens = j.at("tokens").get<TokenList>();
            r.reference = j.value("reference", TokenList{});
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path, lineno, e.what());
        }
    }
    return out;
}

EvalReport report_from_records(const std::vector<RankingRecord>& rankings,
                               const std::vector<GenerationRecord>& generations) {
    EvalReport report;
    std::vector<std::vector<EntityId>> ranked, gold;
    // Keys are interned locally so the recall code can stay on integer ids.
    std::map<std::string, EntityId> ids;
    auto intern = [&](const std::string& k) {
        auto [it, fresh] = ids.emplace(k, static_cast<EntityId>(ids.size()));
        return it->second;
    };
    for (const auto& r : rankings) {
        if (r.gold.empty()) continue;
        std::vector<EntityId> rk, gd;
        for (const auto& k : r.items) rk.push_back(intern(k));
        for (const auto& k : r.gold) gd.push_back(intern(k));
        ranked.push_back(std::move(rk));
        gold.push_back(std::move(gd));
    }
    for (int m : {1, 10, 50}) report.recall[m] = recall_at_k(ranked, gold, m);
    report.rec_example_count = ranked.size();

    std::vector<TokenList> gen, ref;
    for (const auto& g : generations) {
        gen.push_back(g.tokens);
        ref.push_back(g.reference);
    }
    for (int n : {3, 4}) report.distinct[n] = distinct_n(gen, n);
    const auto rouge = rouge_scores(gen, ref);
    report.rouge["1"] = rouge.rouge1;
    report.rouge["2"] = rouge.rouge2;
    report.rouge["l"] = rouge.rougeL;
    report.gen_example_count = gen.size();

    std::set<std::string> all;
    for (const auto& r : rankings) all.insert(r.example_id);
    for (const auto& g : generations) all.insert(g.example_id);
    report.example_count = all.size();
    return report;
}

}  // namespace vrkg
