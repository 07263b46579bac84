// Command-line driver: training stages, evaluation, the HTTP chat service
// and a terminal chat.
#include "vrkg/harness.hpp"
#include "vrkg/pipeline.hpp"
#include "vrkg/service.hpp"
#include "vrkg/synth.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace vrkg;

namespace {

struct Options {
    std::string config;
    std::optional<uint64_t> seed;
    std::string kg;
    std::string dialogues;
    std::string checkpoint;
    std::string out;
    std::string split = "test";
    std::string mode = "greedy";
    int beam_width = 0;
    int max_len = 0;
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string session_log;
    std::string mi_cache;
    std::string rankings;
    std::string generations;
    std::string withheld;
    std::optional<int> pre_epochs, reg_epochs, rec_epochs, gen_epochs;
    bool verbose = false;
};

void apply_epochs(Config& c, const Options& o) {
    if (o.pre_epochs) c.pre_epochs = *o.pre_epochs;
    if (o.reg_epochs) c.reg_epochs = *o.reg_epochs;
    if (o.rec_epochs) c.rec_epochs = *o.rec_epochs;
    if (o.gen_epochs) c.gen_epochs = *o.gen_epochs;
}

Config read_config(const Options& o) {
    Config c = o.config.empty() ? Config{} : Config::load(o.config);
    if (o.seed) c.seed = *o.seed;
    if (!o.kg.empty()) {
        c.data.kg = o.kg;
        c.data.entities.clear();
    }
    if (!o.dialogues.empty()) c.data.train = o.dialogues;
    apply_epochs(c, o);
    return c;
}

// Loads the checkpoint; a --config given alongside it only supplies epoch
// targets (the architecture always comes from the checkpoint).
std::unique_ptr<Model> open_checkpoint(const Options& o) {
    if (o.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
    std::unique_ptr<Model> model;
    if (!o.kg.empty()) {
        model = Model::load(o.checkpoint, load_kg(o.kg, kg_format_from_path(o.kg), ""));
    } else {
        model = Model::load(o.checkpoint);
    }
    if (!o.config.empty()) {
        const Config c = Config::load(o.config);
        model->config.pre_epochs = c.pre_epochs;
        model->config.reg_epochs = c.reg_epochs;
        model->config.rec_epochs = c.rec_epochs;
        model->config.gen_epochs = c.gen_epochs;
    }
    if (!o.dialogues.empty()) model->config.data.train = o.dialogues;
    apply_epochs(model->config, o);
    return model;
}

std::vector<TurnExample> training_examples(const Model& model) {
    if (model.config.data.train.empty()) throw std::invalid_argument("no training dialogues configured");
    return load_split(model.config, model.kg, "train");
}

void log_epoch(const EpochStats& s) {
    spdlog::info("{} epoch {}: loss {:.5f} (nll {:.5f}, kl {:.5f}, reg {:.5f})", s.phase, s.epoch, s.loss, s.nll,
                 s.kl, s.reg);
}

std::string output_path(const Options& o, const std::string& fallback) {
    return o.out.empty() ? fallback : o.out;
}

int cmd_pretrain(const Options& o) {
    std::unique_ptr<Model> model;
    std::vector<TurnExample> examples;
    if (!o.checkpoint.empty()) {
        model = open_checkpoint(o);
        examples = training_examples(*model);
    } else {
        Workspace ws = load_workspace(read_config(o));
        model = initialize_model(ws, o.mi_cache);
        examples = std::move(ws.examples);
    }
    run_pretrain(*model, examples, log_epoch);
    const auto path = output_path(o, "pretrain.ckpt.json");
    model->save(path);
    spdlog::info("wrote {}", path);
    return 0;
}

int cmd_train_rec(const Options& o) {
    auto model = open_checkpoint(o);
    run_train_rec(*model, training_examples(*model), log_epoch);
    const auto path = output_path(o, "rec.ckpt.json");
    model->save(path);
    spdlog::info("wrote {}", path);
    return 0;
}

int cmd_train_gen(const Options& o) {
    auto model = open_checkpoint(o);
    run_train_gen(*model, training_examples(*model), log_epoch);
    const auto path = output_path(o, "gen.ckpt.json");
    model->save(path);
    spdlog::info("wrote {}", path);
    return 0;
}

DecodeOptions decode_options(const Options& o, const Config& c) {
    DecodeOptions d;
    d.mode = decode_mode_from_string(o.mode);
    d.beam_width = o.beam_width > 0 ? o.beam_width : c.beam_width;
    d.max_len = o.max_len > 0 ? o.max_len : c.max_len;
    return d;
}

int cmd_eval(const Options& o) {
    auto model = open_checkpoint(o);
    const auto examples = load_split(model->config, model->kg, o.split);
    const auto outputs = evaluate(*model, examples, decode_options(o, model->config), model->has_stage("gen"));
    const fs::path dir = output_path(o, "eval");
    fs::create_directories(dir);
    write_rankings((dir / "rankings.jsonl").string(), outputs.rankings);
    write_generations((dir / "generations.jsonl").string(), outputs.generations);
    std::ofstream((dir / "report.json").string()) << outputs.report.to_json().dump(2) << '\n';
    std::cout << outputs.report.to_json().dump(2) << '\n';
    if (model->has_stage("gen")) spdlog::info("perplexity {:.4f}", perplexity(*model, examples));
    if (!o.withheld.empty()) {
        const auto rec = edge_recovery(*model, examples, load_edge_list(o.withheld, model->kg));
        nlohmann::json j{{"withheld", rec.withheld}, {"observed", rec.observed}, {"recovered", rec.recovered},
                         {"fraction", rec.fraction()}, {"mean_p_connect", rec.mean_p}};
        std::ofstream((dir / "edge_recovery.json").string()) << j.dump(2) << '\n';
        std::cout << j.dump() << '\n';
    }
    return 0;
}

int cmd_score(const Options& o) {
    std::vector<RankingRecord> rankings;
    std::vector<GenerationRecord> generations;
    if (!o.rankings.empty()) rankings = read_rankings(o.rankings);
    if (!o.generations.empty()) generations = read_generations(o.generations);
    const auto report = report_from_records(rankings, generations);
    const auto text = report.to_json().dump(2);
    if (!o.out.empty()) std::ofstream(o.out) << text << '\n';
    std::cout << text << '\n';
    return 0;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

int cmd_serve(const Options& o) {
    auto model = open_checkpoint(o);
    ChatService service(*model, decode_options(o, model->config), o.session_log);
    httplib::Server server;
    mount_routes(server, service);
    if (!server.bind_to_port(o.host, o.port)) {
        spdlog::error("cannot bind {}:{}", o.host, o.port);
        return 3;
    }
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    spdlog::info("serving on http://{}:{}", o.host, o.port);
    server.listen_after_bind();
    return 0;
}

int cmd_chat(const Options& o) {
    auto model = open_checkpoint(o);
    ChatService service(*model, decode_options(o, model->config), o.session_log);
    const auto id = service.create_session();
    std::cout << "session " << id << " (empty line quits)\n";
    std::string line;
    while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
        if (line.empty()) break;
        try {
            const auto reply = service.message(id, line);
            std::cout << reply["response_text"].get<std::string>() << '\n';
            for (const auto& r : reply["recommendations"]) {
                std::cout << "  * " << r["name"].get<std::string>() << "  " << r["score"].get<double>() << '\n';
            }
        } catch (const std::invalid_argument& e) {
            std::cout << "(" << e.what() << ")\n";
        }
    }
    return 0;
}

int cmd_synth(const Options& o) {
    const auto corpus = make_synthetic_corpus(o.seed.value_or(7));
    Config c = fixture_config();
    const auto path = write_synthetic_corpus(corpus, output_path(o, "fixture"), c);
    std::cout << path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conversational recommender with variational subgraph reasoning"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Config JSON")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Override the config seed");
        sub->add_option("--kg", o.kg, "Override the graph file");
        sub->add_option("--dialogues", o.dialogues, "Override the training dialogues");
        sub->add_option("--checkpoint", o.checkpoint, "Input checkpoint");
        sub->add_option("--out", o.out, "Output path");
        sub->add_flag("-v,--verbose", o.verbose, "Debug logging");
    };
    auto epochs = [&](CLI::App* sub) {
        sub->add_option("--pre-epochs", o.pre_epochs);
        sub->add_option("--reg-epochs", o.reg_epochs);
        sub->add_option("--rec-epochs", o.rec_epochs);
        sub->add_option("--gen-epochs", o.gen_epochs);
    };
    auto decoding = [&](CLI::App* sub) {
        sub->add_option("--mode", o.mode, "greedy or beam")->check(CLI::IsMember({"greedy", "beam"}));
        sub->add_option("--beam-width", o.beam_width)->check(CLI::PositiveNumber);
        sub->add_option("--max-len", o.max_len)->check(CLI::PositiveNumber);
    };

    auto* pretrain = app.add_subcommand("pretrain", "Pre-recommendation and refactor pretraining");
    common(pretrain);
    epochs(pretrain);
    pretrain->add_option("--mi-cache", o.mi_cache, "MI ranking cache (TSV)");
    auto* rec = app.add_subcommand("train-rec", "Recommendation training");
    common(rec);
    epochs(rec);
    auto* gen = app.add_subcommand("train-gen", "Response generator training");
    common(gen);
    epochs(gen);
    auto* eval = app.add_subcommand("eval", "Rankings, generations and metrics for a split");
    common(eval);
    decoding(eval);
    eval->add_option("--withheld", o.withheld, "Edge list for the recovery check")->check(CLI::ExistingFile);
    eval->add_option("--split", o.split)->check(CLI::IsMember({"train", "valid", "test"}));
    auto* score = app.add_subcommand("score", "Metrics from rankings/generations files");
    score->add_option("--rankings", o.rankings)->check(CLI::ExistingFile);
    score->add_option("--generations", o.generations)->check(CLI::ExistingFile);
    score->add_option("--out", o.out);
    auto* serve = app.add_subcommand("serve", "HTTP chat service");
    common(serve);
    decoding(serve);
    serve->add_option("--port", o.port)->check(CLI::Range(1, 65535));
    serve->add_option("--host", o.host);
    serve->add_option("--session-log", o.session_log, "Append-only session log");
    auto* chat = app.add_subcommand("chat", "Chat in the terminal");
    common(chat);
    decoding(chat);
    chat->add_option("--session-log", o.session_log);
    auto* synth = app.add_subcommand("synth", "Write the planted fixture corpus and config");
    synth->add_option("--out", o.out, "Directory");
    synth->add_option("--seed", o.seed);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*pretrain) return cmd_pretrain(o);
        if (*rec) return cmd_train_rec(o);
        if (*gen) return cmd_train_gen(o);
        if (*eval) return cmd_eval(o);
        if (*score) return cmd_score(o);
        if (*serve) return cmd_serve(o);
        if (*chat) return cmd_chat(o);
        if (*synth) return cmd_synth(o);
    } catch (const StageOrderError& e) {
        spdlog::error("{}", e.what());
        return 4;
    } catch (const TrainingDiverged& e) {
        spdlog::error("training diverged: {}", e.what());
        return 5;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
