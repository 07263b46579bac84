#include "vrkg/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace vrkg {

namespace {

const char* const kFilms[] = {"Wonder Woman", "Night Harbor", "Iron Meadow",  "Silent Orbit", "Glass River",
                              "Crimson Atlas", "Hollow Crown", "Quiet Storm", "Velvet Engine", "Lantern Bay"};
const char* const kActors[] = {"Ada Lyle",   "Bruno Kess", "Cora Vance", "Dev Marsh",  "Elio Brandt",
                               "Fay Ormond", "Gus Tamber", "Hana Rook",  "Ivo Pellan", "Juno Saric"};
const char* const kGenres[] = {"superhero", "noir",    "western", "space opera", "romance",
                               "heist",     "fantasy", "thriller", "steampunk",  "mystery"};

std::string key_of(const char* prefix, int i) {
    std::ostringstream s;
    s << prefix << i;
    return s.str();
}

std::string lower(const std::string& s) { return normalize_name(s); }

}  // namespace

SyntheticCorpus make_synthetic_corpus(uint64_t seed, double withhold_fraction) {
    SyntheticCorpus c;
    KnowledgeGraph& g = c.full;
    for (int i = 0; i < 10; ++i) g.add_entity(key_of("film", i), kFilms[i], true);
    for (int i = 0; i < 10; ++i) g.add_entity(key_of("actor", i), kActors[i], false);
    for (int i = 0; i < 10; ++i) g.add_entity(key_of("genre", i), kGenres[i], false);
    auto film = [](int i) { return static_cast<EntityId>(i % 10); };
    auto actor = [](int i) { return static_cast<EntityId>(10 + i % 10); };
    auto genre = [](int i) { return static_cast<EntityId>(20 + i % 10); };
    const RelationId starring = g.add_relation("starring");
    const RelationId in_genre = g.add_relation("genre");
    const RelationId sequel = g.add_relation("sequel");
    std::vector<std::pair<EntityId, EntityId>> edges;
    for (int i = 0; i < 10; ++i) {
        g.add_triple(film(i), starring, actor(i));
        g.add_triple(film(i), in_genre, genre(i));
        g.add_triple(film(i), sequel, film(i + 1));
        edges.emplace_back(film(i), actor(i));
        edges.emplace_back(film(i), genre(i));
        edges.emplace_back(film(i), film(i + 1));
    }

    std::mt19937_64 rng(seed);
    std::shuffle(edges.begin(), edges.end(), rng);
    const auto n_withheld = static_cast<size_t>(std::lround(withhold_fraction * static_cast<double>(edges.size())));
    c.withheld.assign(edges.begin(), edges.begin() + static_cast<long>(n_withheld));
    std::sort(c.withheld.begin(), c.withheld.end());
    c.observed = g.without_edges(c.withheld);

    std::ostringstream jsonl;
    auto turn = [](const char* speaker, const std::string& text, std::vector<std::string> ents) {
        return nlohmann::json{{"speaker", speaker}, {"text", text}, {"entities", std::move(ents)}};
    };
    // One recommendation per dialogue, so no pair needed for one turn has to
    // be switched off for a later turn of the same dialogue.
    for (int i = 0; i < 10; ++i) {
        const std::string f = kFilms[i];
        const std::string next = kFilms[(i + 1) % 10];
        const std::string a = lower(kActors[i]);
        const std::string ge = kGenres[i];
        nlohmann::json d1{{"dialogue_id", "d" + std::to_string(2 * i)},
                          {"turns",
                           {turn("user", "hi ! i like " + a + " and " + ge + " movies", {key_of("actor", i), key_of("genre", i)}),
                            turn("recommender", "you should watch " + f + " .", {key_of("film", i)}),
                            turn("user", "thanks , i will", {}),
                            turn("recommender", "enjoy the show !", {})}}};
        nlohmann::json d2{{"dialogue_id", "d" + std::to_string(2 * i + 1)},
                          {"turns",
                           {turn("user", "i loved " + f + " , what came after it ?", {key_of("film", i)}),
                            turn("recommender", "try " + next + " , the sequel .", {key_of("film", (i + 1) % 10)}),
                            turn("user", "great , thanks", {}),
                            turn("recommender", "have fun !", {})}}};
        jsonl << d1.dump() << '\n' << d2.dump() << '\n';
    }
    c.dialogues_jsonl = jsonl.str();
    c.dialogues = parse_dialogues(c.dialogues_jsonl, c.observed, "synthetic").dialogues;
    return c;
}

Config fixture_config() {
    Config c;
    c.ent_dim = 16;
    c.ctx_dim = 32;
    c.mlp_hidden = 32;
    c.max_ctx_len = 64;
    c.encoder_layers = 1;
    c.encoder_heads = 2;
    c.decoder_layers = 2;
    c.decoder_heads = 2;
    c.vocab_size = 1000;
    c.k_tail = 40;
    // Single hard samples give the target pair a huge likelihood gradient
    // whenever it is sampled off; clipping keeps that from stalling Adam.
    c.gamma = 1.0;
    c.grad_clip = 3.0;
    c.pre_epochs = 30;
    c.reg_epochs = 0;
    c.rec_epochs = 200;
    c.gen_epochs = 60;
    c.warmup_steps = 400;
    c.gen_lr_factor = 0.5;
    c.max_len = 20;
    c.seed = 42;
    return c;
}

void write_kg_tsv(const KnowledgeGraph& kg, const std::string& triples_path, const std::string& entities_path) {
    std::ofstream ent(entities_path);
    if (!ent) throw std::runtime_error("cannot write '" + entities_path + "'");
    for (size_t e = 0; e < kg.entity_count(); ++e) {
        const auto id = static_cast<EntityId>(e);
        ent << kg.key(id) << '\t' << kg.name(id) << '\t' << (kg.is_item(id) ? 1 : 0) << '\n';
    }
    std::ofstream tri(triples_path);
    if (!tri) throw std::runtime_error("cannot write '" + triples_path + "'");
    for (const auto& t : kg.triples()) {
        tri << kg.key(t.head) << '\t' << kg.relation_name(t.relation) << '\t' << kg.key(t.tail) << '\n';
    }
}

std::string write_synthetic_corpus(const SyntheticCorpus& corpus, const std::string& dir, Config config) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path root = fs::absolute(dir);
    write_kg_tsv(corpus.observed, (root / "kg.tsv").string(), (root / "kg.entities.tsv").string());
    {
        std::ofstream w(root / "withheld.tsv");
        for (auto [h, t] : corpus.withheld) w << corpus.full.key(h) << '\t' << corpus.full.key(t) << '\n';
    }
    {
        std::ofstream d(root / "dialogues.jsonl");
        d << corpus.dialogues_jsonl;
    }
    config.data.kg = (root / "kg.tsv").string();
    config.data.entities = (root / "kg.entities.tsv").string();
    config.data.train = (root / "dialogues.jsonl").string();
    config.data.valid = config.data.train;
    config.data.test = config.data.train;
    const auto path = (root / "config.json").string();
    std::ofstream c(path);
    c << config.to_json().dump(2) << '\n';
    return path;
}

std::vector<std::pair<EntityId, EntityId>> load_edge_list(const std::string& path, const KnowledgeGraph& kg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<std::pair<EntityId, EntityId>> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path, lineno, "expected head<TAB>tail");
        const auto h = kg.find_key(line.substr(0, tab));
        const auto t = kg.find_key(line.substr(tab + 1));
        if (!h || !t) throw DanglingIdError(path + ":" + std::to_string(lineno) + ": unknown entity");
        out.emplace_back(*h, *t);
    }
    return out;
}

}  // namespace vrkg
