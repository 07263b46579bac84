#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

using namespace vrkg;

namespace {

void write(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

KnowledgeGraph movie_kg() {
    KnowledgeGraph kg;
    kg.add_entity("m1", "Wonder Woman", true);
    kg.add_entity("m2", "Night Harbor", true);
    kg.add_entity("p1", "Gal Gadot", false);
    kg.add_relation("starring");
    kg.add_triple("m1", "starring", "p1");
    return kg;
}

Utterance utt(Speaker s, std::vector<EntityId> ents = {}) {
    Utterance u;
    u.speaker = s;
    u.tokens = {"x"};
    u.entities = std::move(ents);
    return u;
}

}  // namespace

TEST(KnowledgeGraph, EmptyTripleFileKeepsDeclaredEntities) {
    const auto dir = vrkg::testing::temp_dir("kg_empty");
    write(dir + "/kg.tsv", "");
    write(dir + "/ents.tsv", "a\tA\t1\nb\tB\t0\nc\tC\t0\n");
    const auto kg = load_kg(dir + "/kg.tsv", KgFormat::TripleTsv, dir + "/ents.tsv");
    EXPECT_EQ(kg.entity_count(), 3u);
    EXPECT_TRUE(kg.triples().empty());
    for (EntityId e = 0; e < 3; ++e) EXPECT_TRUE(kg.neighbors(e).empty());
}

TEST(KnowledgeGraph, DuplicateTriplesAreStoredOnce) {
    const auto dir = vrkg::testing::temp_dir("kg_dup");
    write(dir + "/kg.tsv", "a\tr1\tb\n# comment\n\na\tr1\tb\n");
    write(dir + "/ents.tsv", "a\tA\t1\nb\tB\t0\n");
    const auto kg = load_kg(dir + "/kg.tsv", KgFormat::TripleTsv, dir + "/ents.tsv");
    EXPECT_EQ(kg.triples().size(), 1u);
}

TEST(KnowledgeGraph, ChainAdjacency) {
    KnowledgeGraph kg;
    for (const char* k : {"a", "b", "c", "d", "e"}) kg.add_entity(k, k, false);
    kg.add_relation("next");
    kg.add_triple("a", "next", "b");
    kg.add_triple("b", "next", "c");
    kg.add_triple("c", "next", "d");
    kg.add_triple("d", "next", "e");
    EXPECT_EQ(kg.neighbors(2), (std::vector<EntityId>{1, 3}));
    EXPECT_TRUE(kg.connected(3, 2));
    EXPECT_FALSE(kg.connected(0, 2));
}

TEST(KnowledgeGraph, JsonFormatAndDanglingIds) {
    const auto dir = vrkg::testing::temp_dir("kg_json");
    write(dir + "/kg.json",
          R"({"entities": [{"id": "a", "name": "A", "is_item": true}, {"id": "b", "name": "B", "is_item": false}],
              "triples": [["a", "r", "b"]]})");
    const auto kg = load_kg(dir + "/kg.json", kg_format_from_path(dir + "/kg.json"));
    EXPECT_EQ(kg.items(), std::vector<EntityId>{0});
    EXPECT_EQ(kg.triples().size(), 1u);
    KnowledgeGraph g = movie_kg();
    EXPECT_THROW(g.add_triple("m1", "starring", "nobody"), DanglingIdError);
}

TEST(KnowledgeGraph, MalformedTsvReportsLine) {
    const auto dir = vrkg::testing::temp_dir("kg_bad");
    write(dir + "/kg.tsv", "a\tr1\tb\nbroken line\n");
    write(dir + "/ents.tsv", "a\tA\t1\nb\tB\t0\n");
    try {
        load_kg(dir + "/kg.tsv", KgFormat::TripleTsv, dir + "/ents.tsv");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(KnowledgeGraph, WithoutEdgesDropsBothDirections) {
    KnowledgeGraph kg = movie_kg();
    kg.add_triple(2, 0, 0);
    const auto cut = kg.without_edges({{0, 2}});
    EXPECT_TRUE(cut.triples().empty());
    EXPECT_EQ(cut.entity_count(), 3u);
}

TEST(Dialogues, LinksKnownItemByName) {
    const auto kg = movie_kg();
    const std::string line =
        R"({"dialogue_id": "x", "turns": [{"speaker": "user", "text": "I loved Wonder Woman"},)"
        R"( {"speaker": "recommender", "text": "try something", "entities": []}]})";
    const auto loaded = parse_dialogues(line, kg);
    ASSERT_EQ(loaded.dialogues.size(), 1u);
    EXPECT_EQ(loaded.dialogues[0].utterances[0].entities, std::vector<EntityId>{0});
    EXPECT_TRUE(loaded.warnings.empty());
}

TEST(Dialogues, UnknownEntityWarns) {
    const auto kg = movie_kg();
    const std::string line =
        R"({"dialogue_id": "x", "turns": [{"speaker": "user", "text": "I loved Zardoz", "entities": ["Zardoz"]}]})";
    const auto loaded = parse_dialogues(line, kg);
    ASSERT_EQ(loaded.dialogues.size(), 1u);
    EXPECT_TRUE(loaded.dialogues[0].utterances[0].entities.empty());
    EXPECT_FALSE(loaded.warnings.empty());
}

TEST(Dialogues, SyntheticFixtureCounts) {
    const auto c = make_synthetic_corpus();
    ASSERT_EQ(c.dialogues.size(), 20u);
    // Recount tokens straight from the raw text.
    size_t expected = 0, got = 0;
    std::istringstream in(c.dialogues_jsonl);
    std::string line;
    while (std::getline(in, line)) {
        const auto d = nlohmann::json::parse(line);
        for (const auto& t : d["turns"]) {
            std::istringstream words(t["text"].get<std::string>());
            std::string w;
            while (words >> w) ++expected;
        }
    }
    for (const auto& d : c.dialogues)
        for (const auto& u : d.utterances) got += u.tokens.size();
    EXPECT_EQ(got, expected);
    EXPECT_EQ(c.withheld.size(), 9u);
    EXPECT_EQ(c.full.triples().size(), 30u);
    EXPECT_EQ(c.observed.triples().size(), 21u);
    EXPECT_EQ(c.full.entity_count(), 30u);
    EXPECT_EQ(c.full.items().size(), 10u);
}

TEST(Tokenize, PunctuationAndCase) {
    EXPECT_EQ(tokenize("Hi, I LOVED it!"), (std::vector<std::string>{"hi", ",", "i", "loved", "it", "!"}));
    EXPECT_EQ(normalize_name("  Wonder   Woman "), "wonder woman");
}

TEST(EntityLinker, LongestMatchFirstUnique) {
    KnowledgeGraph kg;
    kg.add_entity("a", "Star", false);
    kg.add_entity("b", "Star Wars", true);
    EntityLinker linker(kg);
    EXPECT_EQ(linker.link(tokenize("star wars and star wars and star")), (std::vector<EntityId>{1, 0}));
}

TEST(Examples, SingleUtteranceGivesNone) {
    Dialogue d{"d", {utt(Speaker::User)}};
    EXPECT_TRUE(build_examples({d}, movie_kg()).empty());
}

TEST(Examples, TwoRecommenderTurns) {
    Dialogue d{"d", {utt(Speaker::User), utt(Speaker::Recommender, {0}), utt(Speaker::User), utt(Speaker::Recommender, {1})}};
    const auto ex = build_examples({d}, movie_kg());
    ASSERT_EQ(ex.size(), 2u);
    EXPECT_EQ(ex[0].context.size(), 1u);
    EXPECT_EQ(ex[1].context.size(), 3u);
    EXPECT_EQ(ex[0].target_items, std::vector<EntityId>{0});
    EXPECT_EQ(ex[1].target_items, std::vector<EntityId>{1});
    EXPECT_EQ(ex[1].example_id(), "d#4");
    EXPECT_EQ(build_examples({d}, movie_kg())[1].example_id(), ex[1].example_id());
}

TEST(Examples, NonItemMentionsAreNotTargets) {
    Dialogue d{"d", {utt(Speaker::User), utt(Speaker::Recommender, {2})}};
    const auto ex = build_examples({d}, movie_kg());
    ASSERT_EQ(ex.size(), 1u);
    EXPECT_TRUE(ex[0].target_items.empty());
}

TEST(Examples, ContextEntitiesInFirstMentionOrder) {
    TurnExample ex;
    ex.context = {utt(Speaker::User, {2, 0}), utt(Speaker::Recommender, {1, 2})};
    EXPECT_EQ(ex.context_entities(), (std::vector<EntityId>{2, 0, 1}));
}

TEST(Cooccurrence, EmptyAndHandCounted) {
    const auto empty = count_cooccurrence({}, 3);
    EXPECT_EQ(empty.unit_count, 0);
    EXPECT_EQ(empty.entity_count, (std::vector<long long>{0, 0, 0}));
    EXPECT_TRUE(empty.pair_count.empty());

    TurnExample ab, a;
    ab.context = {utt(Speaker::User, {0, 1})};
    a.context = {utt(Speaker::User, {0})};
    const auto s = count_cooccurrence({ab, a}, 2);
    EXPECT_EQ(s.unit_count, 2);
    EXPECT_EQ(s.entity_count[0], 2);
    EXPECT_EQ(s.entity_count[1], 1);
    EXPECT_EQ(s.pair(1, 0), 1);
    EXPECT_EQ(s.pair(0, 0), 0);
}

TEST(Cooccurrence, PairCountsBoundedByEntityCounts) {
    const auto c = make_synthetic_corpus();
    const auto ex = build_examples(c.dialogues, c.observed);
    const auto s = count_cooccurrence(ex, c.observed.entity_count());
    for (const auto& [k, v] : s.pair_count) {
        EXPECT_GE(v, 0);
        EXPECT_LE(v, std::min(s.entity_count[static_cast<size_t>(k.first)], s.entity_count[static_cast<size_t>(k.second)]));
    }
}

TEST(Vocabulary, ReservedFrequencyAndCap) {
    const auto v = Vocabulary::build({{"b", "a", "b", "c"}, {"c", "b"}}, 7);
    EXPECT_EQ(v.size(), 7u);
    EXPECT_EQ(v.token(Vocabulary::kReserved), "b");
    EXPECT_EQ(v.token(Vocabulary::kReserved + 1), "c");
    EXPECT_EQ(v.index("a"), Vocabulary::kUnk);
    for (size_t i = Vocabulary::kReserved; i < v.size(); ++i)
        EXPECT_EQ(static_cast<size_t>(v.index(v.token(static_cast<int>(i)))), i);
}
