// The full parameter bundle plus training progress, and its checkpoint
// format.
#pragma once

#include "vrkg/config.hpp"
#include "vrkg/context_encoder.hpp"
#include "vrkg/corpus.hpp"
#include "vrkg/generator.hpp"
#include "vrkg/graph_encoder.hpp"
#include "vrkg/optim.hpp"
#include "vrkg/refactor.hpp"
#include "vrkg/subgraph_select.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace vrkg {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Epochs completed per training phase.
struct Progress {
    int pre = 0;  // pre-recommendation
    int reg = 0;  // refactor pretraining
    int rec = 0;
    int gen = 0;
    bool operator==(const Progress&) const = default;
};

class Model {
public:
    /// Parameters are initialized from config.seed in a fixed order.
    Model(Config config, KnowledgeGraph kg, Vocabulary vocab, MiRanking ranking);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    Config config;
    KnowledgeGraph kg;
    Vocabulary vocab;
    MiRanking ranking;

    ParameterStore store;
    ContextEncoder encoder;
    GraphEncoder graph;
    RefactorNet prior;
    RefactorNet posterior;
    Generator generator;

    /// Completed stages, in order: "pretrain", "rec", "gen".
    std::vector<std::string> stages;
    Progress progress;
    std::map<std::string, Adam> optimizers;
    std::mt19937_64 rng;

    bool has_stage(const std::string& stage) const;
    void mark_stage(const std::string& stage);

    nlohmann::json to_json() const;
    void save(const std::string& path) const;
    /// `kg` must carry the same entity keys as the checkpoint.
    static std::unique_ptr<Model> from_json(const nlohmann::json& j, KnowledgeGraph kg);
    /// Loads the graph named by the embedded config unless one is given.
    static std::unique_ptr<Model> load(const std::string& path);
    static std::unique_ptr<Model> load(const std::string& path, KnowledgeGraph kg);
};

/// Embedded config of a checkpoint without building the model.
Config checkpoint_config(const std::string& path);

}  // namespace vrkg
