#include "vrkg/corpus.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace vrkg {

EntityId KnowledgeGraph::add_entity(const std::string& key, const std::string& name, bool is_item) {
    if (by_key_.count(key)) throw std::invalid_argument("duplicate entity id '" + key + "'");
    const auto id = static_cast<EntityId>(names_.size());
    keys_.push_back(key);
    names_.push_back(name);
    item_flags_.push_back(is_item);
    if (is_item) items_.push_back(id);
    by_key_.emplace(key, id);
    // First declaration wins when two entities normalize to the same name.
    by_name_.emplace(normalize_name(name), id);
    adjacency_.emplace_back();
    return id;
}

RelationId KnowledgeGraph::add_relation(const std::string& name) {
    auto it = relation_ids_.find(name);
    if (it != relation_ids_.end()) return it->second;
    const auto id = static_cast<RelationId>(relations_.size());
    relations_.push_back(name);
    relation_ids_.emplace(name, id);
    return id;
}

bool KnowledgeGraph::add_triple(EntityId head, RelationId relation, EntityId tail) {
    if (!valid(head) || !valid(tail)) throw DanglingIdError("triple references an unknown entity");
    if (relation < 0 || static_cast<size_t>(relation) >= relations_.size()) {
        throw DanglingIdError("triple references an unknown relation");
    }
    Triple t{head, relation, tail};
    if (!triple_set_.emplace(t, true).second) return false;
    triples_.push_back(t);
    auto link = [this](EntityId a, EntityId b) {
        auto& adj = adjacency_[static_cast<size_t>(a)];
        auto pos = std::lower_bound(adj.begin(), adj.end(), b);
        if (pos == adj.end() || *pos != b) adj.insert(pos, b);
    };
    if (head != tail) {
        link(head, tail);
        link(tail, head);
    }
    return true;
}

bool KnowledgeGraph::add_triple(const std::string& head_key, const std::string& relation,
                                const std::string& tail_key) {
    auto h = find_key(head_key);
    if (!h) throw DanglingIdError("unknown entity '" + head_key + "'");
    auto t = find_key(tail_key);
    if (!t) throw DanglingIdError("unknown entity '" + tail_key + "'");
    return add_triple(*h, add_relation(relation), *t);
}

std::optional<EntityId> KnowledgeGraph::find_key(const std::string& key) const {
    auto it = by_key_.find(key);
    if (it == by_key_.end()) return std::nullopt;
    return it->second;
}

std::optional<EntityId> KnowledgeGraph::find_name(const std::string& name) const {
    auto it = by_name_.find(normalize_name(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(const std::string& name) const {
    auto it = relation_ids_.find(name);
    if (it == relation_ids_.end()) return std::nullopt;
    return it->second;
}

bool KnowledgeGraph::connected(EntityId a, EntityId b) const {
    if (!valid(a) || !valid(b)) return false;
    const auto& adj = adjacency_[static_cast<size_t>(a)];
    return std::binary_search(adj.begin(), adj.end(), b);
}

KnowledgeGraph KnowledgeGraph::without_edges(
    const std::vector<std::pair<EntityId, EntityId>>& edges) const {
    std::set<std::pair<EntityId, EntityId>> drop;
    for (auto [a, b] : edges) {
        drop.emplace(a, b);
        drop.emplace(b, a);
    }
    KnowledgeGraph out;
    for (size_t i = 0; i < names_.size(); ++i) out.add_entity(keys_[i], names_[i], item_flags_[i]);
    for (const auto& r : relations_) out.add_relation(r);
    for (const auto& t : triples_) {
        if (!drop.count({t.head, t.tail})) out.add_triple(t.head, t.relation, t.tail);
    }
    return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, '\t')) out.push_back(cur);
    if (!line.empty() && line.back() == '\t') out.emplace_back();
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

bool skip_line(const std::string& line) {
    return line.empty() || line[0] == '#';
}

bool parse_flag(const std::string& s, bool& out) {
    if (s == "1" || s == "true" || s == "True") {
        out = true;
        return true;
    }
    if (s == "0" || s == "false" || s == "False") {
        out = false;
        return true;
    }
    return false;
}

void load_entity_table(KnowledgeGraph& kg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open entity file '" + path + "'");
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (skip_line(line)) continue;
        auto cols = split_tabs(line);
        if (cols.size() != 3) throw ParseError(path, lineno, "expected id<TAB>name<TAB>is_item");
        bool is_item = false;
        if (!parse_flag(cols[2], is_item)) throw ParseError(path, lineno, "bad is_item flag '" + cols[2] + "'");
        if (cols[0].empty()) throw ParseError(path, lineno, "empty entity id");
        try {
            kg.add_entity(cols[0], cols[1], is_item);
        } catch (const std::invalid_argument& e) {
            throw ParseError(path, lineno, e.what());
        }
    }
}

KnowledgeGraph load_tsv(const std::string& path, const std::string& entities_path) {
    KnowledgeGraph kg;
    std::string sidecar = entities_path;
    if (sidecar.empty()) {
        std::filesystem::path p(path);
        sidecar = (p.parent_path() / (p.stem().string() + ".entities.tsv")).string();
    }
    load_entity_table(kg, sidecar);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open triple file '" + path + "'");
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (skip_line(line)) continue;
        auto cols = split_tabs(line);
        if (cols.size() != 3) throw ParseError(path, lineno, "expected head<TAB>relation<TAB>tail");
        try {
            kg.add_triple(cols[0], cols[1], cols[2]);
        } catch (const DanglingIdError& e) {
            throw DanglingIdError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return kg;
}

KnowledgeGraph load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path, 0, e.what());
    }
    KnowledgeGraph kg;
    try {
        for (const auto& e : j.at("entities")) {
            kg.add_entity(e.at("id").get<std::string>(), e.at("name").get<std::string>(),
                          e.value("is_item", false));
        }
        size_t idx = 0;
        for (const auto& t : j.at("triples")) {
            ++idx;
            if (!t.is_array() || t.size() != 3) {
                throw ParseError(path, idx, "triple must be [head, relation, tail]");
            }
            kg.add_triple(t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, 0, e.what());
    }
    return kg;
}

}  // namespace

KnowledgeGraph load_kg(const std::string& path, KgFormat format, const std::string& entities_path) {
    return format == KgFormat::TripleTsv ? load_tsv(path, entities_path) : load_json(path);
}

KgFormat kg_format_from_path(const std::string& path) {
    return std::filesystem::path(path).extension() == ".json" ? KgFormat::TripleJson
                                                              : KgFormat::TripleTsv;
}

std::string to_string(Speaker s) { return s == Speaker::User ? "user" : "recommender"; }

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c < 128 && std::ispunct(c)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::string normalize_name(const std::string& text) {
    std::string out;
    for (const auto& tok : tokenize(text)) {
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

EntityLinker::EntityLinker(const KnowledgeGraph& kg) {
    for (EntityId e = 0; e < static_cast<EntityId>(kg.entity_count()); ++e) {
        const auto toks = tokenize(kg.name(e));
        if (toks.empty()) continue;
        names_.emplace(normalize_name(kg.name(e)), e);
        max_tokens_ = std::max(max_tokens_, toks.size());
    }
}

std::vector<EntityId> EntityLinker::link(const std::vector<std::string>& tokens) const {
    std::vector<EntityId> found;
    size_t i = 0;
    while (i < tokens.size()) {
        bool matched = false;
        const size_t longest = std::min(max_tokens_, tokens.size() - i);
        for (size_t len = longest; len >= 1 && !matched; --len) {
            std::string span;
            for (size_t k = 0; k < len; ++k) {
                if (k) span.push_back(' ');
                span += tokens[i + k];
            }
            auto it = names_.find(span);
            if (it != names_.end()) {
                if (std::find(found.begin(), found.end(), it->second) == found.end()) {
                    found.push_back(it->second);
                }
                i += len;
                matched = true;
            }
        }
        if (!matched) ++i;
    }
    return found;
}

LoadedDialogues parse_dialogues(const std::string& jsonl, const KnowledgeGraph& kg,
                                const std::string& source) {
    LoadedDialogues out;
    EntityLinker linker(kg);
    std::istringstream in(jsonl);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(source, lineno, e.what());
        }
        Dialogue d;
        try {
            d.id = j.at("dialogue_id").is_string() ? j.at("dialogue_id").get<std::string>()
                                                   : j.at("dialogue_id").dump();
            const auto& turns = j.at("turns");
            if (!turns.is_array() || turns.empty()) throw ParseError(source, lineno, "empty dialogue '" + d.id + "'");
            for (const auto& turn : turns) {
                Utterance u;
                const auto speaker = turn.at("speaker").get<std::string>();
                if (speaker == "user" || speaker == "seeker") u.speaker = Speaker::User;
                else if (speaker == "recommender") u.speaker = Speaker::Recommender;
                else throw ParseError(source, lineno, "unknown speaker label '" + speaker + "'");
                u.tokens = tokenize(turn.at("text").get<std::string>());
                if (u.tokens.empty()) throw ParseError(source, lineno, "empty utterance in '" + d.id + "'");
                if (turn.contains("entities")) {
                    for (const auto& ref : turn.at("entities")) {
                        const auto s = ref.is_string() ? ref.get<std::string>() : ref.dump();
                        auto id = kg.find_key(s);
                        if (!id) id = kg.find_name(s);
                        if (!id) {
                            out.warnings.push_back(source + ":" + std::to_string(lineno) +
                                                   ": entity '" + s + "' not in knowledge graph");
                            spdlog::warn("{}", out.warnings.back());
                            continue;
                        }
                        if (std::find(u.entities.begin(), u.entities.end(), *id) == u.entities.end()) {
                            u.entities.push_back(*id);
                        }
                    }
                }
                for (EntityId e : linker.link(u.tokens)) {
                    if (std::find(u.entities.begin(), u.entities.end(), e) == u.entities.end()) {
                        u.entities.push_back(e);
                    }
                }
                d.utterances.push_back(std::move(u));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(source, lineno, e.what());
        }
        out.dialogues.push_back(std::move(d));
    }
    return out;
}

LoadedDialogues load_dialogues(const std::string& path, const KnowledgeGraph& kg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dialogue file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_dialogues(buf.str(), kg, path);
}

std::vector<EntityId> TurnExample::context_entities() const {
    std::vector<EntityId> out;
    for (const auto& u : context)
        for (EntityId e : u.entities)
            if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
    return out;
}

std::vector<TurnExample> build_examples(const std::vector<Dialogue>& dialogues,
                                        const KnowledgeGraph& kg) {
    std::vector<TurnExample> out;
    for (const auto& d : dialogues) {
        for (size_t t = 1; t < d.utterances.size(); ++t) {
            const auto& u = d.utterances[t];
            if (u.speaker != Speaker::Recommender) continue;
            TurnExample ex;
            ex.dialogue_id = d.id;
            ex.turn_index = static_cast<int>(t) + 1;
            ex.context.assign(d.utterances.begin(), d.utterances.begin() + static_cast<long>(t));
            for (EntityId e : u.entities) {
                if (kg.is_item(e) &&
                    std::find(ex.target_items.begin(), ex.target_items.end(), e) == ex.target_items.end()) {
                    ex.target_items.push_back(e);
                }
            }
            ex.gold_response = u;
            out.push_back(std::move(ex));
        }
    }
    return out;
}

long long CooccurrenceStats::pair(EntityId e, EntityId eh) const {
    auto it = pair_count.find({e, eh});
    return it == pair_count.end() ? 0 : it->second;
}

CooccurrenceStats count_cooccurrence(const std::vector<TurnExample>& examples, size_t entity_count) {
    CooccurrenceStats s;
    s.entity_count.assign(entity_count, 0);
    for (const auto& ex : examples) {
        std::set<EntityId> occurring;
        for (const auto& u : ex.context) occurring.insert(u.entities.begin(), u.entities.end());
        occurring.insert(ex.gold_response.entities.begin(), ex.gold_response.entities.end());
        ++s.unit_count;
        for (EntityId e : occurring) {
            if (e < 0 || static_cast<size_t>(e) >= entity_count) {
                throw std::out_of_range("entity id outside the entity table");
            }
            ++s.entity_count[static_cast<size_t>(e)];
        }
        for (EntityId a : occurring)
            for (EntityId b : occurring)
                if (a != b) ++s.pair_count[{a, b}];
    }
    return s;
}

Vocabulary::Vocabulary() {
    tokens_ = {"<pad>", "<unk>", "<s>", "</s>", "<sep>"};
    for (size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& token_lists, size_t limit) {
    std::unordered_map<std::string, long long> freq;
    for (const auto& list : token_lists)
        for (const auto& t : list) ++freq[t];
    std::vector<std::pair<std::string, long long>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [tok, _] : ranked) {
        if (v.size() >= limit) break;
        if (v.ids_.count(tok)) continue;
        v.ids_.emplace(tok, static_cast<int>(v.tokens_.size()));
        v.tokens_.push_back(tok);
    }
    return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    if (tokens.size() < kReserved) throw std::invalid_argument("vocabulary is missing reserved tokens");
    for (int i = 0; i < kReserved; ++i) {
        if (tokens[static_cast<size_t>(i)] != v.tokens_[static_cast<size_t>(i)]) {
            throw std::invalid_argument("vocabulary reserved tokens out of place");
        }
    }
    for (size_t i = kReserved; i < tokens.size(); ++i) {
        if (!v.ids_.emplace(tokens[i], static_cast<int>(i)).second) {
            throw std::invalid_argument("duplicate vocabulary token '" + tokens[i] + "'");
        }
        v.tokens_.push_back(tokens[i]);
    }
    return v;
}

int Vocabulary::index(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(index(t));
    return out;
}

std::vector<std::vector<std::string>> vocabulary_sources(const std::vector<Dialogue>& dialogues,
                                                         const KnowledgeGraph& kg) {
    std::vector<std::vector<std::string>> out;
    for (const auto& d : dialogues)
        for (const auto& u : d.utterances) out.push_back(u.tokens);
    for (EntityId e = 0; e < static_cast<EntityId>(kg.entity_count()); ++e) out.push_back(tokenize(kg.name(e)));
    return out;
}

}  // namespace vrkg
