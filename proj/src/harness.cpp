#include "vrkg/harness.hpp"

#include <spdlog/spdlog.h>

#include <filesystem>

namespace vrkg {

Workspace load_workspace(const Config& config) {
    config.validate();
    if (config.data.kg.empty()) throw std::invalid_argument("config names no graph file (data.kg)");
    Workspace ws;
    ws.config = config;
    ws.kg = load_kg(config.data.kg, kg_format_from_path(config.data.kg), config.data.entities);
    if (config.data.train.empty()) throw std::invalid_argument("config names no training split (data.train)");
    auto loaded = load_dialogues(config.data.train, ws.kg);
    for (const auto& w : loaded.warnings) spdlog::warn("{}", w);
    ws.dialogues = std::move(loaded.dialogues);
    ws.examples = build_examples(ws.dialogues, ws.kg);
    spdlog::info("loaded {} entities, {} triples, {} dialogues, {} examples", ws.kg.entity_count(),
                 ws.kg.triples().size(), ws.dialogues.size(), ws.examples.size());
    return ws;
}

std::vector<TurnExample> load_split(const Config& config, const KnowledgeGraph& kg, const std::string& split) {
    std::string path;
    if (split == "train") path = config.data.train;
    else if (split == "valid") path = config.data.valid;
    else if (split == "test") path = config.data.test;
    else throw std::invalid_argument("unknown split '" + split + "' (expected train, valid or test)");
    if (path.empty()) throw std::invalid_argument("config names no file for split '" + split + "'");
    auto loaded = load_dialogues(path, kg);
    for (const auto& w : loaded.warnings) spdlog::warn("{}", w);
    return build_examples(loaded.dialogues, kg);
}

std::unique_ptr<Model> initialize_model(const Workspace& ws, const std::string& mi_cache) {
    std::vector<std::vector<std::string>> sources = vocabulary_sources(ws.dialogues, ws.kg);
    Vocabulary vocab = Vocabulary::build(sources, static_cast<size_t>(ws.config.vocab_size));
    MiRanking ranking;
    if (!mi_cache.empty() && std::filesystem::exists(mi_cache)) {
        ranking = MiRanking::load(mi_cache, ws.kg);
        spdlog::info("read MI ranking from {}", mi_cache);
    } else {
        ranking = MiRanking(count_cooccurrence(ws.examples, ws.kg.entity_count()));
        if (!mi_cache.empty()) ranking.save(mi_cache, ws.kg);
    }
    return std::make_unique<Model>(ws.config, ws.kg, std::move(vocab), std::move(ranking));
}

}  // namespace vrkg
