// Data loading shared by the CLI subcommands and the tests.
#pragma once

#include "vrkg/model.hpp"

#include <memory>
#include <string>
#include <vector>

namespace vrkg {

struct Workspace {
    Config config;
    KnowledgeGraph kg;
    std::vector<Dialogue> dialogues;    // training split
    std::vector<TurnExample> examples;  // training split
};

/// Loads the graph and the training split named in the config.
Workspace load_workspace(const Config& config);

/// Turn examples of `split` ("train", "valid" or "test").
std::vector<TurnExample> load_split(const Config& config, const KnowledgeGraph& kg, const std::string& split);

/// Vocabulary and MI ranking from the training data, then a freshly
/// initialized model. When `mi_cache` names an existing file the ranking
/// is read from it; otherwise it is computed and, if a path is given,
/// written there.
std::unique_ptr<Model> initialize_model(const Workspace& ws, const std::string& mi_cache = "");

}  // namespace vrkg
