#include "vrkg/context_encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace vrkg {

namespace {

std::vector<int> flatten_context(const std::vector<Utterance>& context, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (size_t i = 0; i < context.size(); ++i) {
        if (i) ids.push_back(Vocabulary::kSep);
        for (const auto& t : context[i].tokens) ids.push_back(vocab.index(t));
    }
    return ids;
}

std::vector<int> keep_suffix(const std::vector<int>& ids, size_t n) {
    if (ids.size() <= n) return ids;
    return {ids.end() - static_cast<long>(n), ids.end()};
}

}  // namespace

std::vector<int> context_token_ids(const std::vector<Utterance>& context, const Vocabulary& vocab,
                                   int max_len) {
    std::vector<int> out{Vocabulary::kStart};
    const auto body = keep_suffix(flatten_context(context, vocab), static_cast<size_t>(max_len - 1));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

std::vector<int> context_target_token_ids(const std::vector<Utterance>& context,
                                          const std::vector<std::string>& item_words,
                                          const Vocabulary& vocab, int max_len) {
    std::vector<int> item = vocab.encode(item_words);
    const size_t room = static_cast<size_t>(max_len - 2);
    if (item.size() > room) item.resize(room);
    std::vector<int> out{Vocabulary::kStart};
    const auto body = keep_suffix(flatten_context(context, vocab), room - item.size());
    out.insert(out.end(), body.begin(), body.end());
    out.push_back(Vocabulary::kSep);
    out.insert(out.end(), item.begin(), item.end());
    return out;
}

std::vector<std::string> target_words(const std::vector<EntityId>& items, const KnowledgeGraph& kg) {
    std::vector<std::string> out;
    for (size_t i = 0; i < items.size(); ++i) {
        if (!kg.valid(items[i])) throw std::out_of_range("unknown item id " + std::to_string(items[i]));
        if (i) out.push_back("<sep>");
        for (auto& t : tokenize(kg.name(items[i]))) out.push_back(std::move(t));
    }
    return out;
}

ContextEncoder::ContextEncoder(ParameterStore& store, const Config& config, size_t vocab_size,
                               std::mt19937_64& rng)
    : max_len_(config.max_ctx_len), dim_(config.ctx_dim) {
    if (config.encoder == EncoderKind::Pretrained) {
        throw std::runtime_error(
            "pretrained encoder weights are not bundled with this build; set encoder=tiny");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim_));
    tokens_ = Embedding(store, "encoder.tokens", static_cast<Eigen::Index>(vocab_size), dim_,
                        ParamGroup::Encoder, rng, bound);
    positions_ = Embedding(store, "encoder.positions", max_len_, dim_, ParamGroup::Encoder, rng, bound);
    for (int l = 0; l < config.encoder_layers; ++l) {
        const std::string p = "encoder.layer" + std::to_string(l);
        Layer layer;
        layer.attn = MultiHeadAttention(store, p + ".attn", dim_, config.encoder_heads, ParamGroup::Encoder, rng);
        layer.norm1 = LayerNorm(store, p + ".norm1", dim_, ParamGroup::Encoder);
        layer.ffn = FeedForward(store, p + ".ffn", dim_, dim_ * config.ffn_mult, ParamGroup::Encoder, rng);
        layer.norm2 = LayerNorm(store, p + ".norm2", dim_, ParamGroup::Encoder);
        layers_.push_back(std::move(layer));
    }
}

Var ContextEncoder::forward(const std::vector<int>& ids, const std::vector<bool>& valid) const {
    if (ids.empty()) throw std::invalid_argument("encoder input is empty");
    if (static_cast<int>(ids.size()) > max_len_) {
        throw std::invalid_argument("encoder input longer than max_ctx_len");
    }
    std::vector<int> pos(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) pos[i] = static_cast<int>(i);
    Var h = add(tokens_(ids), positions_(pos));
    for (const auto& layer : layers_) {
        h = layer.norm1(add(h, layer.attn(h, h, h, false, valid)));
        h = layer.norm2(add(h, layer.ffn(h)));
    }
    if (!valid.empty()) {
        Matrix keep(static_cast<Eigen::Index>(ids.size()), 1);
        for (size_t i = 0; i < ids.size(); ++i) keep(static_cast<Eigen::Index>(i), 0) = valid[i] ? 1.0 : 0.0;
        h = mul(h, Var(keep));
    }
    return h;
}

Var ContextEncoder::pooled(const std::vector<int>& ids) const { return slice_rows(forward(ids), 0, 1); }

ContextVector ContextEncoder::encode_context(const std::vector<Utterance>& context,
                                             const Vocabulary& vocab) const {
    return {pooled(context_token_ids(context, vocab, max_len_)).value().row(0), ContextRole::Prior};
}

ContextVector ContextEncoder::encode_context_with_target(const std::vector<Utterance>& context,
                                                         EntityId item, const KnowledgeGraph& kg,
                                                         const Vocabulary& vocab) const {
    const auto ids = context_target_token_ids(context, target_words({item}, kg), vocab, max_len_);
    return {pooled(ids).value().row(0), ContextRole::Posterior};
}

TokenMatrix ContextEncoder::encode_tokens(const std::vector<Utterance>& context,
                                          const Vocabulary& vocab, int pad_to) const {
    auto ids = context_token_ids(context, vocab, max_len_);
    const size_t real = ids.size();
    const size_t total = std::max(real, static_cast<size_t>(std::min(pad_to, max_len_)));
    std::vector<bool> valid(total, true);
    for (size_t i = real; i < total; ++i) {
        ids.push_back(Vocabulary::kPad);
        valid[i] = false;
    }
    TokenMatrix out;
    out.values = forward(ids, total > real ? valid : std::vector<bool>{}).value();
    out.mask = valid;
    return out;
}

}  // namespace vrkg
