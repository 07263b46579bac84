#include "vrkg/pipeline.hpp"

#include "vrkg/recommender.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vrkg {

RecPass run_recommender(const Model& model, const Var& entities, const std::vector<Utterance>& context,
                        const std::vector<EntityId>& heads, const std::vector<EntityId>& targets,
                        RecMode mode, std::mt19937_64& rng) {
    const Config& cfg = model.config;
    RecPass pass;
    pass.candidates = build_candidates(heads, model.ranking, model.kg, cfg.k_tail);
    pass.context = model.encoder.pooled(context_token_ids(context, model.vocab, cfg.max_ctx_len));

    const auto& pairs = pass.candidates.pairs;
    std::vector<int> head_rows, tail_rows;
    for (auto [h, t] : pairs) {
        head_rows.push_back(h);
        tail_rows.push_back(t);
        pass.pair_tails.push_back(t);
    }
    const auto& items = model.kg.items();
    Var item_rows = gather_rows(entities, items);

    Var tails_e;
    if (!pairs.empty()) {
        Var heads_e = gather_rows(entities, head_rows);
        tails_e = gather_rows(entities, tail_rows);
        pass.prior = model.prior.forward(heads_e, tails_e, pass.context);
        pass.prior_bits = argmax_bits(pass.prior.value());
        if (mode == RecMode::Train) {
            const auto words = target_words(targets, model.kg);
            Var ctx_star = model.encoder.pooled(context_target_token_ids(context, words, model.vocab, cfg.max_ctx_len));
            pass.posterior = model.posterior.forward(heads_e, tails_e, ctx_star);
            if (cfg.rec_weighting == RecWeighting::Sample) {
                pass.weights = slice_cols(sample_gumbel(pass.posterior, cfg.tau, cfg.gumbel_hard, rng, cfg.clamp_eps), 0, 1);
            } else {
                pass.weights = slice_cols(pass.posterior, 0, 1);
            }
        } else {
            pass.weights = slice_cols(pass.prior, 0, 1);
        }
    } else {
        pass.prior = Var(Matrix(0, 2));
        pass.posterior = Var(Matrix(0, 2));
        pass.weights = Var(Matrix(0, 1));
        tails_e = Var(Matrix(0, cfg.ent_dim));
    }
    pass.user = user_representation(pass.weights, tails_e, cfg.ent_dim);
    pass.scores = recommend_scores(pass.user, item_rows, pass.weights, pass.pair_tails, items, cfg.alpha);
    return pass;
}

std::vector<EntityId> filtered_tails(const RecPass& pass) {
    std::vector<EntityId> out;
    for (size_t i = 0; i < pass.prior_bits.size(); ++i) {
        if (!pass.prior_bits[i]) continue;
        const EntityId t = pass.candidates.pairs[i].second;
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    // Keep tail-list order so the decoder input does not depend on pair order.
    std::vector<EntityId> ordered;
    for (const auto& t : pass.candidates.tails)
        if (std::find(out.begin(), out.end(), t.id) != out.end()) ordered.push_back(t.id);
    return ordered;
}

namespace {

Matrix rows_of(const Matrix& m, const std::vector<EntityId>& ids, Eigen::Index cols) {
    Matrix out(static_cast<Eigen::Index>(ids.size()), cols);
    for (size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(ids[i]);
    return out;
}

}  // namespace

DecoderInput decoder_input(const Model& model, const Matrix& entities, const std::vector<Utterance>& context,
                           const std::vector<EntityId>& heads, const RecPass& pass) {
    DecoderInput in;
    const auto ids = context_token_ids(context, model.vocab, model.config.max_ctx_len);
    in.context = model.encoder.forward(ids).value();
    const auto tails = filtered_tails(pass);
    in.knowledge.heads = rows_of(entities, heads, entities.cols());
    in.knowledge.tails = rows_of(entities, tails, entities.cols());
    in.sources = copy_source_ids(ids, tails, model.kg, model.vocab);
    return in;
}

std::vector<TurnExample> rec_examples(const std::vector<TurnExample>& examples) {
    std::vector<TurnExample> out;
    for (const auto& e : examples)
        if (!e.target_items.empty()) out.push_back(e);
    return out;
}

namespace {

void check_finite(double v, const std::string& phase, int epoch, const TurnExample& ex, const std::string& part) {
    if (!std::isfinite(v)) {
        throw TrainingDiverged(phase + " epoch " + std::to_string(epoch) + ": non-finite " + part + " (" +
                               std::to_string(v) + ") on example " + ex.example_id());
    }
}

struct StepResult {
    Var loss;
    double nll = 0.0;
    double kl = 0.0;
    double reg = 0.0;
};

using StepFn = std::function<StepResult(const TurnExample&, const Var& entities)>;

// Shared epoch loop: shuffle with the model RNG, accumulate a batch, one
// optimizer step per batch.
std::vector<EpochStats> run_phase(Model& model, const std::string& phase, int& done, int target,
                                  const std::vector<TurnExample>& data, const StepFn& step,
                                  const std::function<std::map<ParamGroup, double>(const Adam&)>& rates,
                                  const EpochCallback& on_epoch, bool needs_graph = true) {
    std::vector<EpochStats> trace;
    if (data.empty() || done >= target) return trace;
    Adam& opt = model.optimizers.try_emplace(phase, Adam(Adam::Options{0.9, 0.999, 1e-8, model.config.grad_clip}))
                    .first->second;
    const auto batch = static_cast<size_t>(std::max(model.config.batch_size, 1));
    std::vector<size_t> order(data.size());
    while (done < target) {
        const int epoch = done + 1;
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), model.rng);
        EpochStats stats;
        stats.phase = phase;
        stats.epoch = epoch;
        for (size_t start = 0; start < order.size(); start += batch) {
            const size_t end = std::min(order.size(), start + batch);
            model.store.zero_grad();
            Var entities = needs_graph ? model.graph.encode(model.kg) : Var();
            std::vector<Var> losses;
            for (size_t i = start; i < end; ++i) {
                const TurnExample& ex = data[order[i]];
                StepResult r = step(ex, entities);
                check_finite(r.loss.item(), phase, epoch, ex, "loss");
                stats.loss += r.loss.item();
                stats.nll += r.nll;
                stats.kl += r.kl;
                stats.reg += r.reg;
                ++stats.examples;
                losses.push_back(r.loss);
            }
            Var total = losses.size() == 1 ? losses.front()
                                           : scale(sum(concat_cols(losses)), 1.0 / static_cast<double>(losses.size()));
            backward(total);
            opt.step(model.store, rates(opt));
        }
        const auto n = static_cast<double>(std::max<size_t>(stats.examples, 1));
        stats.loss /= n;
        stats.nll /= n;
        stats.kl /= n;
        stats.reg /= n;
        done = epoch;
        spdlog::debug("{} epoch {}: loss {:.6f} nll {:.6f} kl {:.6f} reg {:.6f}", phase, epoch, stats.loss,
                      stats.nll, stats.kl, stats.reg);
        if (on_epoch) on_epoch(stats);
        trace.push_back(stats);
    }
    return trace;
}

Var pre_rec_term(const Model& model, const TurnExample& ex, const Var& entities) {
    const auto heads = ex.context_entities();
    const auto att = user_self_attention(heads, entities, model.graph);
    const auto dist = pre_rec_distribution(att.user, entities, model.kg.items());
    return pre_rec_loss(dist, item_columns(model.kg.items(), ex.target_items), model.config.clamp_eps);
}

std::vector<TurnExample> with_heads(const std::vector<TurnExample>& examples) {
    std::vector<TurnExample> out;
    for (const auto& e : rec_examples(examples))
        if (!e.context_entities().empty()) out.push_back(e);
    return out;
}

}  // namespace

std::vector<EpochStats> run_pretrain(Model& model, const std::vector<TurnExample>& examples,
                                     const EpochCallback& on_epoch) {
    const Config& cfg = model.config;
    const auto data = with_heads(examples);
    auto trace = run_phase(
        model, "pre", model.progress.pre, cfg.pre_epochs, data,
        [&](const TurnExample& ex, const Var& entities) {
            StepResult r;
            r.loss = pre_rec_term(model, ex, entities);
            r.nll = r.loss.item();
            return r;
        },
        [&](const Adam&) { return std::map<ParamGroup, double>{{ParamGroup::Graph, cfg.lr_rgcn}}; }, on_epoch);

    auto reg_trace = run_phase(
        model, "reg", model.progress.reg, cfg.reg_epochs, data,
        [&](const TurnExample& ex, const Var& entities) {
            StepResult r;
            Var pre = pre_rec_term(model, ex, entities);
            const auto cand = build_candidates(ex, model.ranking, model.kg, cfg.k_tail);
            r.nll = pre.item();
            if (cand.empty()) {
                r.loss = pre;
                return r;
            }
            std::vector<int> hr, tr;
            for (auto [h, t] : cand.pairs) {
                hr.push_back(h);
                tr.push_back(t);
            }
            Var he = gather_rows(entities, hr);
            Var te = gather_rows(entities, tr);
            Var d = model.encoder.pooled(context_token_ids(ex.context, model.vocab, cfg.max_ctx_len));
            Var ds = model.encoder.pooled(context_target_token_ids(
                ex.context, target_words(ex.target_items, model.kg), model.vocab, cfg.max_ctx_len));
            Var p = model.prior.forward(he, te, d);
            Var q = model.posterior.forward(he, te, ds);
            Var reg = reg_loss(p, q, original_labels(model.kg, cand.pairs), cfg.clamp_eps);
            r.reg = reg.item();
            r.loss = add(pre, reg);
            return r;
        },
        [&](const Adam&) {
            return std::map<ParamGroup, double>{{ParamGroup::Encoder, cfg.lr_encoder},
                                                {ParamGroup::Graph, cfg.lr_rgcn},
                                                {ParamGroup::Other, cfg.lr_other}};
        },
        on_epoch);
    trace.insert(trace.end(), reg_trace.begin(), reg_trace.end());
    model.mark_stage("pretrain");
    return trace;
}

std::vector<EpochStats> run_train_rec(Model& model, const std::vector<TurnExample>& examples,
                                      const EpochCallback& on_epoch) {
    const Config& cfg = model.config;
    if (!model.has_stage("pretrain")) spdlog::warn("training the recommender without a pretraining stage");
    const auto data = rec_examples(examples);
    auto trace = run_phase(
        model, "rec", model.progress.rec, cfg.rec_epochs, data,
        [&](const TurnExample& ex, const Var& entities) {
            StepResult r;
            RecPass pass = run_recommender(model, entities, ex.context, ex.context_entities(), ex.target_items,
                                           RecMode::Train, model.rng);
            const auto cols = item_columns(model.kg.items(), ex.target_items);
            Var kl = kl_term(pass.posterior, pass.prior, cfg.clamp_eps);
            Var reg = reg_loss(pass.prior, pass.posterior, original_labels(model.kg, pass.candidates.pairs),
                               cfg.clamp_eps);
            r.loss = rec_loss(pass.scores, cols, kl, reg, cfg);
            r.nll = -target_log_likelihood(pass.scores, cols, cfg.clamp_eps).item();
            r.kl = kl.item();
            r.reg = reg.item();
            return r;
        },
        [&](const Adam&) {
            return std::map<ParamGroup, double>{{ParamGroup::Encoder, cfg.lr_encoder},
                                                {ParamGroup::Graph, cfg.lr_rgcn},
                                                {ParamGroup::Other, cfg.lr_other}};
        },
        on_epoch);
    model.mark_stage("rec");
    return trace;
}

namespace {

struct GenExample {
    DecoderInput input;
    std::vector<int> targets;
};

std::vector<GenExample> prepare_generation(const Model& model, const std::vector<TurnExample>& examples) {
    const Matrix entities = model.graph.encode_entities(model.kg);
    const Var ent(entities);
    std::mt19937_64 unused(0);
    std::vector<GenExample> out;
    for (const auto& ex : examples) {
        if (ex.gold_response.tokens.empty()) continue;
        const auto heads = ex.context_entities();
        RecPass pass = run_recommender(model, ent, ex.context, heads, {}, RecMode::Eval, unused);
        out.push_back({decoder_input(model, entities, ex.context, heads, pass),
                       response_targets(ex.gold_response, model.vocab, model.config.max_len)});
    }
    return out;
}

}  // namespace

std::vector<EpochStats> run_train_gen(Model& model, const std::vector<TurnExample>& examples,
                                      const EpochCallback& on_epoch) {
    if (!model.has_stage("rec")) {
        throw StageOrderError("generator training needs a checkpoint that completed the recommendation stage");
    }
    const Config& cfg = model.config;
    const auto prepared = prepare_generation(model, examples);
    // Index the prepared inputs by position in a parallel example list so the
    // shared loop can shuffle them.
    std::vector<TurnExample> data;
    std::map<std::string, size_t> index;
    for (const auto& ex : examples) {
        if (ex.gold_response.tokens.empty()) continue;
        index[ex.example_id()] = data.size();
        data.push_back(ex);
    }
    const WarmupSchedule schedule{cfg.gen_lr_factor, cfg.warmup_steps, cfg.ctx_dim};
    auto trace = run_phase(
        model, "gen", model.progress.gen, cfg.gen_epochs, data,
        [&](const TurnExample& ex, const Var&) {
            const auto& g = prepared[index.at(ex.example_id())];
            StepResult r;
            r.loss = model.generator.loss(g.targets, g.input, cfg.clamp_eps);
            r.nll = r.loss.item();
            return r;
        },
        [&](const Adam& opt) {
            return std::map<ParamGroup, double>{{ParamGroup::Generator, schedule.rate(opt.steps() + 1)}};
        },
        on_epoch, false);
    model.mark_stage("gen");
    return trace;
}

EvalOutputs evaluate(const Model& model, const std::vector<TurnExample>& examples, const DecodeOptions& options,
                     bool generate) {
    EvalOutputs out;
    const Matrix entities = model.graph.encode_entities(model.kg);
    const Var ent(entities);
    std::mt19937_64 unused(0);
    const auto& items = model.kg.items();
    for (const auto& ex : examples) {
        const auto heads = ex.context_entities();
        RecPass pass = run_recommender(model, ent, ex.context, heads, {}, RecMode::Eval, unused);
        if (!ex.target_items.empty()) {
            const RowVector scores = pass.scores.value().row(0);
            const auto ranked = rank_items(scores, items, options.rank_depth);
            RankingRecord rec;
            rec.example_id = ex.example_id();
            for (EntityId e : ranked) {
                rec.items.push_back(model.kg.key(e));
                const auto col = std::lower_bound(items.begin(), items.end(), e) - items.begin();
                rec.scores.push_back(scores(col));
            }
            for (EntityId g : ex.target_items) rec.gold.push_back(model.kg.key(g));
            out.rankings.push_back(std::move(rec));
        }
        if (generate && !ex.gold_response.tokens.empty()) {
            const auto input = decoder_input(model, entities, ex.context, heads, pass);
            const auto ids = model.generator.generate(input, options.max_len, options.mode, options.beam_width);
            GenerationRecord g;
            g.example_id = ex.example_id();
            for (int id : ids) g.tokens.push_back(model.vocab.token(id));
            g.reference = ex.gold_response.tokens;
            out.generations.push_back(std::move(g));
        }
    }
    out.report = report_from_records(out.rankings, out.generations);
    out.report.example_count = examples.size();
    return out;
}

double perplexity(const Model& model, const std::vector<TurnExample>& examples) {
    const auto prepared = prepare_generation(model, examples);
    double nll = 0.0;
    size_t tokens = 0;
    for (const auto& g : prepared) {
        nll += model.generator.loss(g.targets, g.input, model.config.clamp_eps).item() *
               static_cast<double>(g.targets.size());
        tokens += g.targets.size();
    }
    return tokens ? std::exp(nll / static_cast<double>(tokens)) : 1.0;
}

EdgeRecovery edge_recovery(const Model& model, const std::vector<TurnExample>& examples,
                           const std::vector<std::pair<EntityId, EntityId>>& withheld) {
    EdgeRecovery r;
    r.withheld = withheld.size();
    std::vector<double> total(withheld.size(), 0.0);
    std::vector<size_t> count(withheld.size(), 0);
    const Var ent(model.graph.encode_entities(model.kg));
    std::mt19937_64 unused(0);
    for (const auto& ex : examples) {
        const auto heads = ex.context_entities();
        if (heads.empty() || ex.target_items.empty()) continue;
        RecPass pass = run_recommender(model, ent, ex.context, heads, {}, RecMode::Eval, unused);
        const Matrix& p = pass.prior.value();
        auto is_target = [&](EntityId e) {
            return std::find(ex.target_items.begin(), ex.target_items.end(), e) != ex.target_items.end();
        };
        for (size_t i = 0; i < pass.candidates.pairs.size(); ++i) {
            const auto [h, t] = pass.candidates.pairs[i];
            if (!is_target(t)) continue;
            for (size_t w = 0; w < withheld.size(); ++w) {
                const auto [a, b] = withheld[w];
                if ((h == a && t == b) || (h == b && t == a)) {
                    total[w] += p(static_cast<Eigen::Index>(i), 0);
                    ++count[w];
                }
            }
        }
    }
    for (size_t w = 0; w < withheld.size(); ++w) {
        if (!count[w]) {
            r.mean_p.push_back(-1.0);
            continue;
        }
        ++r.observed;
        const double m = total[w] / static_cast<double>(count[w]);
        r.mean_p.push_back(m);
        if (m > 0.5) ++r.recovered;
    }
    return r;
}

}  // namespace vrkg
