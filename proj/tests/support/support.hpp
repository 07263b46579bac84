// Independent oracles and fixtures shared by the unit and acceptance tests.
#pragma once

#include "vrkg/corpus.hpp"
#include "vrkg/harness.hpp"
#include "vrkg/model.hpp"
#include "vrkg/service.hpp"
#include "vrkg/synth.hpp"
#include "vrkg/tensor.hpp"

#include <array>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace vrkg::testing {

struct GradCheck {
    std::string name;
    // Norm-wise, with a 1e-4 floor so exactly-zero gradients compare absolutely.
    double rel_error = 0.0;
    size_t entries = 0;
};

/// Central differences against backward() for each named leaf. `loss` must
/// rebuild the graph from the current leaf values. With `max_entries` > 0 at
/// most that many evenly spaced entries per tensor are perturbed.
std::vector<GradCheck> check_gradients(const std::function<Var()>& loss,
                                       const std::vector<std::pair<std::string, Var>>& params,
                                       double h = 1e-6, size_t max_entries = 0);

/// Largest error in a check list.
double worst(const std::vector<GradCheck>& checks);

/// Mutual information by nested loops over raw counting units.
std::vector<double> mi_oracle(const std::vector<std::vector<EntityId>>& units, size_t entity_count);

/// Entities of each counting unit the way the corpus module defines them.
std::vector<std::vector<EntityId>> counting_units(const std::vector<TurnExample>& examples);

double recall_oracle(const std::vector<std::vector<EntityId>>& rankings,
                     const std::vector<std::vector<EntityId>>& gold, int m);
double distinct_oracle(const std::vector<std::vector<std::string>>& responses, int n);
/// ROUGE-1, ROUGE-2, ROUGE-L recall; LCS by subsequence enumeration, so keep
/// generations short.
std::array<double, 3> rouge_oracle(const std::vector<std::vector<std::string>>& generated,
                                   const std::vector<std::vector<std::string>>& references);

/// Synthetic corpus plus the training examples and a fresh model.
struct Fixture {
    SyntheticCorpus corpus;
    Workspace workspace;
    std::unique_ptr<Model> model;
};

Fixture make_fixture(const Config& config);

/// fixture_config() shrunk further for gradient checks and fast unit tests.
Config tiny_config();

struct HttpReply {
    int status = 0;
    nlohmann::json body;
};

/// Chat routes served on an ephemeral localhost port for the lifetime of
/// the object.
class LocalServer {
public:
    explicit LocalServer(ChatService& service);
    ~LocalServer();
    LocalServer(const LocalServer&) = delete;
    LocalServer& operator=(const LocalServer&) = delete;
    int port() const { return port_; }
    HttpReply post(const std::string& path, const std::string& body) const;
    HttpReply get(const std::string& path) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

/// Fresh directory under the system temp dir.
std::string temp_dir(const std::string& tag);

}  // namespace vrkg::testing
