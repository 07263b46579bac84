// Training stages, evaluation and the per-turn inference path shared by
// the CLI and the chat service.
#pragma once

#include "vrkg/metrics.hpp"
#include "vrkg/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace vrkg {

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StageOrderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RecMode {
    Train,  // posterior weights (sampled or probabilities per config)
    Eval,   // prior probabilities
};

struct RecPass {
    CandidatePairs candidates;
    Var context;    // 1 x ctx_dim
    Var prior;      // P x 2
    Var posterior;  // P x 2; unset in Eval mode
    Var weights;    // P x 1 connect weights used for e_u
    Var user;       // 1 x ent_dim
    Var scores;     // 1 x |items|
    std::vector<int> prior_bits;
    std::vector<EntityId> pair_tails;
};

/// Subgraph inference and item scoring for one context. `targets` is needed
/// in Train mode (posterior input) and ignored otherwise.
RecPass run_recommender(const Model& model, const Var& entities, const std::vector<Utterance>& context,
                        const std::vector<EntityId>& heads, const std::vector<EntityId>& targets,
                        RecMode mode, std::mt19937_64& rng);

/// Tails the prior connects to some head under argmax, in tail order.
std::vector<EntityId> filtered_tails(const RecPass& pass);

/// Decoder inputs from frozen components; `entities` is the encoded graph.
DecoderInput decoder_input(const Model& model, const Matrix& entities, const std::vector<Utterance>& context,
                           const std::vector<EntityId>& heads, const RecPass& pass);

struct EpochStats {
    std::string phase;
    int epoch = 0;  // 1-based, cumulative within the phase
    double loss = 0.0;
    double nll = 0.0;
    double kl = 0.0;
    double reg = 0.0;
    size_t examples = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Pre-recommendation pretraining followed by refactor pretraining, each
/// resumed up to config.pre_epochs / config.reg_epochs.
std::vector<EpochStats> run_pretrain(Model& model, const std::vector<TurnExample>& examples,
                                     const EpochCallback& on_epoch = {});
/// Recommendation fine-tuning up to config.rec_epochs.
std::vector<EpochStats> run_train_rec(Model& model, const std::vector<TurnExample>& examples,
                                      const EpochCallback& on_epoch = {});
/// Decoder training up to config.gen_epochs with every other group frozen.
/// Throws StageOrderError unless the recommendation stage is complete.
std::vector<EpochStats> run_train_gen(Model& model, const std::vector<TurnExample>& examples,
                                      const EpochCallback& on_epoch = {});

struct DecodeOptions {
    DecodeMode mode = DecodeMode::Greedy;
    int beam_width = 1;
    int max_len = 30;
    int rank_depth = 50;
};

struct EvalOutputs {
    EvalReport report;
    std::vector<RankingRecord> rankings;
    std::vector<GenerationRecord> generations;
};

EvalOutputs evaluate(const Model& model, const std::vector<TurnExample>& examples, const DecodeOptions& options,
                     bool generate = true);

/// exp of the mean teacher-forced token cross-entropy.
double perplexity(const Model& model, const std::vector<TurnExample>& examples);

struct EdgeRecovery {
    size_t withheld = 0;
    size_t observed = 0;   // withheld edges seen as a candidate pair at least once
    size_t recovered = 0;  // mean prior p_connect > 0.5
    std::vector<double> mean_p;  // per withheld edge; negative when never observed

    double fraction() const { return withheld ? static_cast<double>(recovered) / static_cast<double>(withheld) : 0.0; }
};

/// For each withheld edge: the mean prior p_connect of the pair (mentioned
/// endpoint, recommended endpoint) over the examples in which one endpoint is
/// a context entity and the other is a target item. The prior is conditioned
/// on the dialogue, so the edge is scored in the dialogues it bears on.
EdgeRecovery edge_recovery(const Model& model, const std::vector<TurnExample>& examples,
                           const std::vector<std::pair<EntityId, EntityId>>& withheld);

/// Examples with at least one target item.
std::vector<TurnExample> rec_examples(const std::vector<TurnExample>& examples);

}  // namespace vrkg
