// Knowledge-enhanced transformer decoder with a copy mechanism.
#pragma once

#include "vrkg/config.hpp"
#include "vrkg/corpus.hpp"
#include "vrkg/nn.hpp"

#include <random>
#include <vector>

namespace vrkg {

/// Raw entity representations (ent_dim wide). Either matrix may have zero
/// rows.
struct KnowledgeMatrices {
    Matrix heads;
    Matrix tails;
};

/// Everything the decoder reads besides its own prefix.
struct DecoderInput {
    Matrix context;                   // L x width encoder states
    std::vector<bool> context_valid;  // empty = all valid
    KnowledgeMatrices knowledge;
    std::vector<int> sources;         // copy source token ids
};

/// Token prefix and per-layer outputs C^1..C^L of one decode pass.
struct DecoderState {
    std::vector<int> prefix;
    std::vector<Matrix> layers;
};

enum class DecodeMode { Greedy, Beam };
DecodeMode decode_mode_from_string(const std::string& s);

/// output(w) = gate gen(w) + (1 - gate) sum_{s : source_s = w} copy(s), row
/// by row. `gen_dist` is n x V, `copy_weights` n x S, `gate` n x 1. With no
/// sources the generation distribution is returned unchanged.
Var copy_mix(const Var& gen_dist, const Var& copy_weights, const std::vector<int>& source_ids,
             const Var& gate);

/// -(1/|U|) sum_j log dist(j, gold_j), clamped at `clamp_eps`.
Var gen_loss(const Var& dists, const std::vector<int>& gold, double clamp_eps = 1e-10);

/// Context tokens plus tail-name tokens, with `<pad>`, `<s>`, `</s>` and
/// `<sep>` dropped. Order is preserved; duplicates are kept.
std::vector<int> copy_source_ids(const std::vector<int>& context_ids, const std::vector<EntityId>& tails,
                                 const KnowledgeGraph& kg, const Vocabulary& vocab);

class Generator {
public:
    struct Layer {
        MultiHeadAttention self_attn;
        LayerNorm self_norm;
        MultiHeadAttention head_attn;
        LayerNorm head_norm;
        MultiHeadAttention tail_attn;
        LayerNorm tail_norm;
        MultiHeadAttention ctx_attn;
        LayerNorm ctx_norm;
        FeedForward ffn;
        LayerNorm ffn_norm;
    };

    Generator() = default;
    Generator(ParameterStore& store, const Config& config, size_t vocab_size, std::mt19937_64& rng);

    /// ent_dim rows -> width rows; zero rows stay zero rows.
    Var project_knowledge(const Matrix& rows) const;

    /// One decoder block. Each attention sublayer is residual + LayerNorm;
    /// self-attention is causal; an empty key matrix skips its sublayer.
    Var decode_layer(size_t l, const Var& c_prev, const Var& heads, const Var& tails, const Var& context,
                     const std::vector<bool>& context_valid = {}) const;

    /// Token plus position embeddings of the prefix.
    Var embed(const std::vector<int>& prefix) const;
    /// Outputs of every layer for the prefix; back() is C^L.
    std::vector<Var> decode(const std::vector<int>& prefix, const DecoderInput& input) const;

    Var generation_distribution(const Var& states) const;
    Var copy_weights(const Var& states, const std::vector<int>& source_ids) const;
    Var gate(const Var& states) const;
    /// Per-position vocabulary distributions after copy_mix, n x V.
    Var output_distributions(const Var& states, const std::vector<int>& source_ids) const;

    /// Teacher-forced distributions for `<s>` + gold[0..n-2] predicting gold.
    Var forward(const std::vector<int>& prefix, const DecoderInput& input) const;
    /// Mean token cross-entropy of `gold` (which should end with `</s>`).
    Var loss(const std::vector<int>& gold, const DecoderInput& input, double clamp_eps = 1e-10) const;

    /// Stops at `</s>` (not emitted) or after `max_len` tokens. Beam search
    /// ranks by total log-probability; ties go to the smaller token sequence.
    std::vector<int> generate(const DecoderInput& input, int max_len, DecodeMode mode,
                              int beam_width = 1) const;

    DecoderState trace(const std::vector<int>& prefix, const DecoderInput& input) const;

    const Layer& layer(size_t l) const { return layers_.at(l); }
    size_t layer_count() const { return layers_.size(); }
    Eigen::Index width() const { return width_; }
    size_t vocab_size() const { return vocab_size_; }
    int max_positions() const { return max_positions_; }

private:
    Embedding tokens_;
    Embedding positions_;
    Linear ent_proj_;
    std::vector<Layer> layers_;
    Linear out_;
    Linear copy_proj_;
    Linear gate_;
    Eigen::Index width_ = 0;
    size_t vocab_size_ = 0;
    int max_positions_ = 0;
};

/// Gold decoder targets: response tokens truncated to `max_tokens`, then
/// `</s>`.
std::vector<int> response_targets(const Utterance& response, const Vocabulary& vocab, int max_tokens);
/// `<s>` followed by every target but the last.
std::vector<int> teacher_prefix(const std::vector<int>& targets);

}  // namespace vrkg
