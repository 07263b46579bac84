#include "vrkg/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vrkg {

DecodeMode decode_mode_from_string(const std::string& s) {
    if (s == "greedy") return DecodeMode::Greedy;
    if (s == "beam") return DecodeMode::Beam;
    throw std::invalid_argument("unknown decode mode '" + s + "' (expected greedy or beam)");
}

Var copy_mix(const Var& gen_dist, const Var& copy_weights, const std::vector<int>& source_ids,
             const Var& gate) {
    if (source_ids.empty()) return gen_dist;
    if (copy_weights.cols() != static_cast<Eigen::Index>(source_ids.size())) {
        throw std::invalid_argument("copy_mix: copy weights and sources differ in length");
    }
    Var copied = scatter_add_cols(copy_weights, source_ids, gen_dist.cols());
    Var keep = gate;
    Var rest = add_scalar(neg(gate), 1.0);
    return add(mul(gen_dist, keep), mul(copied, rest));
}

Var gen_loss(const Var& dists, const std::vector<int>& gold, double clamp_eps) {
    if (gold.empty()) throw std::invalid_argument("gen_loss: empty response");
    if (dists.rows() != static_cast<Eigen::Index>(gold.size())) {
        throw std::invalid_argument("gen_loss: one distribution per gold token required");
    }
    Matrix select = Matrix::Zero(dists.rows(), dists.cols());
    for (size_t j = 0; j < gold.size(); ++j) select(static_cast<Eigen::Index>(j), gold[j]) = 1.0;
    Var picked = sum_cols(mul(dists, Var(select)));
    return scale(sum(log(picked, clamp_eps)), -1.0 / static_cast<double>(gold.size()));
}

std::vector<int> copy_source_ids(const std::vector<int>& context_ids, const std::vector<EntityId>& tails,
                                 const KnowledgeGraph& kg, const Vocabulary& vocab) {
    auto special = [](int id) {
        return id == Vocabulary::kPad || id == Vocabulary::kStart || id == Vocabulary::kEnd ||
               id == Vocabulary::kSep;
    };
    std::vector<int> out;
    for (int id : context_ids)
        if (!special(id)) out.push_back(id);
    for (EntityId t : tails)
        for (const auto& tok : tokenize(kg.name(t))) out.push_back(vocab.index(tok));
    return out;
}

Generator::Generator(ParameterStore& store, const Config& config, size_t vocab_size, std::mt19937_64& rng)
    : width_(config.ctx_dim),
      vocab_size_(vocab_size),
      max_positions_(std::max(config.max_len, config.max_ctx_len) + 2) {
    const auto g = ParamGroup::Generator;
    const double bound = 1.0 / std::sqrt(static_cast<double>(width_));
    tokens_ = Embedding(store, "decoder.tokens", static_cast<Eigen::Index>(vocab_size), width_, g, rng, bound);
    positions_ = Embedding(store, "decoder.positions", max_positions_, width_, g, rng, bound);
    ent_proj_ = Linear(store, "decoder.ent_proj", config.ent_dim, width_, g, rng);
    for (int l = 0; l < config.decoder_layers; ++l) {
        const std::string p = "decoder.layer" + std::to_string(l);
        const int h = config.decoder_heads;
        Layer layer;
        layer.self_attn = MultiHeadAttention(store, p + ".self_attn", width_, h, g, rng);
        layer.self_norm = LayerNorm(store, p + ".self_norm", width_, g);
        layer.head_attn = MultiHeadAttention(store, p + ".head_attn", width_, h, g, rng);
        layer.head_norm = LayerNorm(store, p + ".head_norm", width_, g);
        layer.tail_attn = MultiHeadAttention(store, p + ".tail_attn", width_, h, g, rng);
        layer.tail_norm = LayerNorm(store, p + ".tail_norm", width_, g);
        layer.ctx_attn = MultiHeadAttention(store, p + ".ctx_attn", width_, h, g, rng);
        layer.ctx_norm = LayerNorm(store, p + ".ctx_norm", width_, g);
        layer.ffn = FeedForward(store, p + ".ffn", width_, width_ * config.ffn_mult, g, rng);
        layer.ffn_norm = LayerNorm(store, p + ".ffn_norm", width_, g);
        layers_.push_back(std::move(layer));
    }
    out_ = Linear(store, "decoder.out", width_, static_cast<Eigen::Index>(vocab_size), g, rng);
    copy_proj_ = Linear(store, "decoder.copy_proj", width_, width_, g, rng, false);
    gate_ = Linear(store, "decoder.gate", width_, 1, g, rng);
}

Var Generator::project_knowledge(const Matrix& rows) const {
    if (rows.rows() == 0) return Var(Matrix(0, width_));
    return ent_proj_(Var(rows));
}

Var Generator::decode_layer(size_t l, const Var& c_prev, const Var& heads, const Var& tails,
                            const Var& context, const std::vector<bool>& context_valid) const {
    const Layer& L = layers_.at(l);
    Var a = L.self_norm(add(c_prev, L.self_attn(c_prev, c_prev, c_prev, true)));
    if (heads.rows() > 0) a = L.head_norm(add(a, L.head_attn(a, heads, heads)));
    if (tails.rows() > 0) a = L.tail_norm(add(a, L.tail_attn(a, tails, tails)));
    if (context.rows() > 0) a = L.ctx_norm(add(a, L.ctx_attn(a, context, context, false, context_valid)));
    return L.ffn_norm(add(a, L.ffn(a)));
}

Var Generator::embed(const std::vector<int>& prefix) const {
    if (prefix.empty()) throw std::invalid_argument("decoder prefix is empty");
    if (static_cast<int>(prefix.size()) > max_positions_) {
        throw std::invalid_argument("decoder prefix longer than the position table");
    }
    std::vector<int> pos(prefix.size());
    for (size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    return add(tokens_(prefix), positions_(pos));
}

std::vector<Var> Generator::decode(const std::vector<int>& prefix, const DecoderInput& input) const {
    Var heads = project_knowledge(input.knowledge.heads);
    Var tails = project_knowledge(input.knowledge.tails);
    Var context(input.context);
    std::vector<Var> outs;
    Var c = embed(prefix);
    for (size_t l = 0; l < layers_.size(); ++l) {
        c = decode_layer(l, c, heads, tails, context, input.context_valid);
        outs.push_back(c);
    }
    if (outs.empty()) outs.push_back(c);
    return outs;
}

Var Generator::generation_distribution(const Var& states) const { return softmax_rows(out_(states)); }

Var Generator::copy_weights(const Var& states, const std::vector<int>& source_ids) const {
    Var src = tokens_(source_ids);
    return softmax_rows(matmul(copy_proj_(states), transpose(src)));
}

Var Generator::gate(const Var& states) const { return sigmoid(gate_(states)); }

Var Generator::output_distributions(const Var& states, const std::vector<int>& source_ids) const {
    Var gen = generation_distribution(states);
    if (source_ids.empty()) return gen;
    return copy_mix(gen, copy_weights(states, source_ids), source_ids, gate(states));
}

Var Generator::forward(const std::vector<int>& prefix, const DecoderInput& input) const {
    return output_distributions(decode(prefix, input).back(), input.sources);
}

Var Generator::loss(const std::vector<int>& gold, const DecoderInput& input, double clamp_eps) const {
    return gen_loss(forward(teacher_prefix(gold), input), gold, clamp_eps);
}

namespace {

struct Beam {
    std::vector<int> tokens;  // without the leading <s>
    std::vector<int> path;    // tokens plus a final </s>, used for tie-breaking
    double logp = 0.0;
    bool finished = false;
};

bool beam_before(const Beam& a, const Beam& b) {
    if (a.logp != b.logp) return a.logp > b.logp;
    return a.path < b.path;
}

}  // namespace

std::vector<int> Generator::generate(const DecoderInput& input, int max_len, DecodeMode mode,
                                     int beam_width) const {
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    max_len = std::min(max_len, max_positions_ - 1);
    const int width = mode == DecodeMode::Greedy ? 1 : beam_width;
    if (width < 1) throw std::invalid_argument("beam width must be >= 1");

    auto last_row = [&](const std::vector<int>& tokens) {
        std::vector<int> prefix{Vocabulary::kStart};
        prefix.insert(prefix.end(), tokens.begin(), tokens.end());
        Var dist = forward(prefix, input);
        return RowVector(dist.value().row(dist.rows() - 1));
    };

    if (mode == DecodeMode::Greedy) {
        std::vector<int> out;
        for (int step = 0; step < max_len; ++step) {
            const RowVector row = last_row(out);
            Eigen::Index best = 0;
            for (Eigen::Index i = 1; i < row.size(); ++i)
                if (row(i) > row(best)) best = i;
            if (best == Vocabulary::kEnd) break;
            out.push_back(static_cast<int>(best));
        }
        return out;
    }

    std::vector<Beam> beams{Beam{}};
    for (int step = 0; step < max_len; ++step) {
        std::vector<Beam> next;
        bool expanded = false;
        for (const auto& b : beams) {
            if (b.finished) {
                next.push_back(b);
                continue;
            }
            expanded = true;
            const RowVector row = last_row(b.tokens);
            for (Eigen::Index i = 0; i < row.size(); ++i) {
                Beam c = b;
                c.logp += std::log(std::max(row(i), std::numeric_limits<double>::min()));
                c.path.push_back(static_cast<int>(i));
                if (i == Vocabulary::kEnd) c.finished = true;
                else c.tokens.push_back(static_cast<int>(i));
                next.push_back(std::move(c));
            }
        }
        if (!expanded) break;
        const size_t keep = std::min(next.size(), static_cast<size_t>(width));
        std::partial_sort(next.begin(), next.begin() + static_cast<long>(keep), next.end(), beam_before);
        next.resize(keep);
        beams = std::move(next);
    }
    return beams.front().tokens;
}

DecoderState Generator::trace(const std::vector<int>& prefix, const DecoderInput& input) const {
    DecoderState s;
    s.prefix = prefix;
    for (const auto& v : decode(prefix, input)) s.layers.push_back(v.value());
    return s;
}

std::vector<int> response_targets(const Utterance& response, const Vocabulary& vocab, int max_tokens) {
    std::vector<int> out = vocab.encode(response.tokens);
    if (max_tokens >= 0 && static_cast<int>(out.size()) > max_tokens) out.resize(static_cast<size_t>(max_tokens));
    out.push_back(Vocabulary::kEnd);
    return out;
}

std::vector<int> teacher_prefix(const std::vector<int>& targets) {
    std::vector<int> prefix{Vocabulary::kStart};
    if (!targets.empty()) prefix.insert(prefix.end(), targets.begin(), targets.end() - 1);
    return prefix;
}

}  // namespace vrkg
