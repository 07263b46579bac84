// Knowledge graph and dialogue ingestion, entity linking, turn-level
// example construction and co-occurrence statistics.
#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vrkg {

/// Dense entity index, assigned in declaration order.
using EntityId = int;
using RelationId = int;

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& file, size_t line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    size_t line() const { return line_; }

private:
    size_t line_;
};

class DanglingIdError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Triple {
    EntityId head;
    RelationId relation;
    EntityId tail;
    auto operator<=>(const Triple&) const = default;
};

class KnowledgeGraph {
public:
    EntityId add_entity(const std::string& key, const std::string& name, bool is_item);
    RelationId add_relation(const std::string& name);
    /// Returns false when the triple was already present.
    bool add_triple(EntityId head, RelationId relation, EntityId tail);
    /// Resolves keys; throws DanglingIdError for unknown entities.
    bool add_triple(const std::string& head_key, const std::string& relation,
                    const std::string& tail_key);

    size_t entity_count() const { return names_.size(); }
    size_t relation_count() const { return relations_.size(); }
    const std::vector<Triple>& triples() const { return triples_; }

    const std::string& name(EntityId e) const { return names_.at(static_cast<size_t>(e)); }
    const std::string& key(EntityId e) const { return keys_.at(static_cast<size_t>(e)); }
    const std::string& relation_name(RelationId r) const { return relations_.at(static_cast<size_t>(r)); }
    bool is_item(EntityId e) const { return item_flags_.at(static_cast<size_t>(e)); }
    bool valid(EntityId e) const { return e >= 0 && static_cast<size_t>(e) < names_.size(); }
    /// Item entity ids, ascending.
    const std::vector<EntityId>& items() const { return items_; }

    std::optional<EntityId> find_key(const std::string& key) const;
    /// Lookup by normalized surface name.
    std::optional<EntityId> find_name(const std::string& name) const;
    std::optional<RelationId> find_relation(const std::string& name) const;

    /// Undirected neighbors, ascending and unique.
    const std::vector<EntityId>& neighbors(EntityId e) const { return adjacency_.at(static_cast<size_t>(e)); }
    /// True when any triple links the two entities in either direction.
    bool connected(EntityId a, EntityId b) const;

    /// Returns a copy without the listed undirected edges (every triple
    /// between a withheld pair is dropped).
    KnowledgeGraph without_edges(const std::vector<std::pair<EntityId, EntityId>>& edges) const;

private:
    std::vector<std::string> keys_;
    std::vector<std::string> names_;
    std::vector<bool> item_flags_;
    std::vector<EntityId> items_;
    std::unordered_map<std::string, EntityId> by_key_;
    std::unordered_map<std::string, EntityId> by_name_;
    std::vector<std::string> relations_;
    std::unordered_map<std::string, RelationId> relation_ids_;
    std::vector<Triple> triples_;
    std::map<Triple, bool> triple_set_;
    std::vector<std::vector<EntityId>> adjacency_;
};

enum class KgFormat { TripleTsv, TripleJson };

/// TSV: `head<TAB>relation<TAB>tail` per line, entities declared in a
/// sidecar `id<TAB>name<TAB>is_item` file. JSON: one object with
/// `entities` ([{id, name, is_item}]) and `triples` ([[head, relation, tail]]).
/// Blank lines and lines starting with '#' are ignored in TSV files.
KnowledgeGraph load_kg(const std::string& path, KgFormat format,
                       const std::string& entities_path = "");
KgFormat kg_format_from_path(const std::string& path);

enum class Speaker { User, Recommender };
std::string to_string(Speaker s);

struct Utterance {
    Speaker speaker = Speaker::User;
    std::vector<std::string> tokens;
    std::vector<EntityId> entities;
};

struct Dialogue {
    std::string id;
    std::vector<Utterance> utterances;
};

struct LoadedDialogues {
    std::vector<Dialogue> dialogues;
    std::vector<std::string> warnings;
};

/// Lowercases and splits on whitespace; ASCII punctuation becomes its own token.
std::vector<std::string> tokenize(const std::string& text);
/// Lowercased tokens joined by single spaces.
std::string normalize_name(const std::string& text);

/// Finds KG surface names in a token sequence (longest match first, left to
/// right). Results are in order of first mention and unique.
class EntityLinker {
public:
    explicit EntityLinker(const KnowledgeGraph& kg);
    std::vector<EntityId> link(const std::vector<std::string>& tokens) const;

private:
    std::unordered_map<std::string, EntityId> names_;
    size_t max_tokens_ = 0;
};

/// Line-delimited JSON, one dialogue per line:
/// {"dialogue_id": str, "turns": [{"speaker": "user"|"recommender", "text": str,
///  "entities": [key or name, ...]}]}. Listed entities are resolved by key
/// and then by normalized name; unresolved ones produce a warning. Surface
/// names found in the text are linked as well.
LoadedDialogues load_dialogues(const std::string& path, const KnowledgeGraph& kg);
LoadedDialogues parse_dialogues(const std::string& jsonl, const KnowledgeGraph& kg,
                                const std::string& source = "<memory>");

struct TurnExample {
    std::string dialogue_id;
    int turn_index = 0;  // 1-based index of the response utterance
    std::vector<Utterance> context;
    std::vector<EntityId> target_items;
    Utterance gold_response;

    std::string example_id() const { return dialogue_id + "#" + std::to_string(turn_index); }
    /// Entities mentioned in the context, in order of first mention.
    std::vector<EntityId> context_entities() const;
};

/// One example per recommender utterance at position t >= 2.
std::vector<TurnExample> build_examples(const std::vector<Dialogue>& dialogues,
                                        const KnowledgeGraph& kg);

struct CooccurrenceStats {
    long long unit_count = 0;
    std::vector<long long> entity_count;
    /// (e, e_h) -> number of units containing both; only e != e_h stored.
    std::map<std::pair<EntityId, EntityId>, long long> pair_count;

    long long pair(EntityId e, EntityId eh) const;
};

/// Counting unit: one TurnExample; an entity occurs if mentioned in the
/// context or the response.
CooccurrenceStats count_cooccurrence(const std::vector<TurnExample>& examples,
                                     size_t entity_count);

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kStart = 2;
    static constexpr int kEnd = 3;
    static constexpr int kSep = 4;
    static constexpr int kReserved = 5;

    Vocabulary();
    /// Most frequent tokens first (ties alphabetical), capped at `limit`
    /// entries including the reserved ones.
    static Vocabulary build(const std::vector<std::vector<std::string>>& token_lists, size_t limit);
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

    int index(const std::string& token) const;
    const std::string& token(int index) const { return tokens_.at(static_cast<size_t>(index)); }
    size_t size() const { return tokens_.size(); }
    bool contains(const std::string& token) const { return ids_.count(token) > 0; }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

/// Token lists used to build the generation vocabulary: every utterance of
/// every dialogue plus every entity surface name.
std::vector<std::vector<std::string>> vocabulary_sources(const std::vector<Dialogue>& dialogues,
                                                         const KnowledgeGraph& kg);

}  // namespace vrkg
