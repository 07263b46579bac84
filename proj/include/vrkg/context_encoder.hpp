// Transformer encoder over the dialogue context. Produces the prior
// condition vector, the posterior condition vector (context + target item
// words) and the token matrix read by the decoder.
#pragma once

#include "vrkg/config.hpp"
#include "vrkg/corpus.hpp"
#include "vrkg/nn.hpp"

#include <vector>

namespace vrkg {

enum class ContextRole { Prior, Posterior };

struct ContextVector {
    RowVector values;
    ContextRole role = ContextRole::Prior;
};

struct TokenMatrix {
    Matrix values;          // L x ctx_dim, padded rows are zero
    std::vector<bool> mask; // true for real tokens
};

/// `<s>` followed by the utterances joined with `<sep>`, keeping the most
/// recent `max_len - 1` tokens.
std::vector<int> context_token_ids(const std::vector<Utterance>& context, const Vocabulary& vocab,
                                   int max_len);
/// `<s>` context `<sep>` item-words; the context part is truncated from the
/// front so the item words always fit.
std::vector<int> context_target_token_ids(const std::vector<Utterance>& context,
                                          const std::vector<std::string>& item_words,
                                          const Vocabulary& vocab, int max_len);

class ContextEncoder {
public:
    ContextEncoder() = default;
    ContextEncoder(ParameterStore& store, const Config& config, size_t vocab_size,
                   std::mt19937_64& rng);

    /// Differentiable forward pass. Rows at positions where `valid` is false
    /// are excluded as attention keys and zeroed in the output.
    Var forward(const std::vector<int>& ids, const std::vector<bool>& valid = {}) const;
    /// First-position state of forward(ids), 1 x ctx_dim.
    Var pooled(const std::vector<int>& ids) const;

    ContextVector encode_context(const std::vector<Utterance>& context, const Vocabulary& vocab) const;
    /// Throws std::out_of_range for an unknown item.
    ContextVector encode_context_with_target(const std::vector<Utterance>& context, EntityId item,
                                             const KnowledgeGraph& kg, const Vocabulary& vocab) const;
    /// `pad_to` > L appends padding rows.
    TokenMatrix encode_tokens(const std::vector<Utterance>& context, const Vocabulary& vocab,
                              int pad_to = 0) const;

    int max_len() const { return max_len_; }
    Eigen::Index dim() const { return dim_; }

private:
    struct Layer {
        MultiHeadAttention attn;
        LayerNorm norm1;
        FeedForward ffn;
        LayerNorm norm2;
    };

    Embedding tokens_;
    Embedding positions_;
    std::vector<Layer> layers_;
    int max_len_ = 0;
    Eigen::Index dim_ = 0;
};

/// Item surface words joined for the posterior input; multiple targets are
/// separated by `<sep>`.
std::vector<std::string> target_words(const std::vector<EntityId>& items, const KnowledgeGraph& kg);

}  // namespace vrkg
