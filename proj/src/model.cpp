#include "vrkg/model.hpp"

#include "vrkg/serialization.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace vrkg {

namespace {

// Parameters and training randomness use separate streams so that adding a
// module does not shift the training sequence.
constexpr uint64_t kTrainStream = 0x9e3779b97f4a7c15ULL;

std::mt19937_64 init_rng(uint64_t seed) { return std::mt19937_64(seed); }

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint '" + path + "' is not valid JSON: " + e.what());
    }
}

}  // namespace

Model::Model(Config cfg, KnowledgeGraph graph_in, Vocabulary vocab_in, MiRanking ranking_in)
    : config(std::move(cfg)),
      kg(std::move(graph_in)),
      vocab(std::move(vocab_in)),
      ranking(std::move(ranking_in)),
      rng(config.seed ^ kTrainStream) {
    config.validate();
    if (ranking.scores().size() != kg.entity_count()) {
        throw std::invalid_argument("MI ranking does not match the entity count");
    }
    auto r = init_rng(config.seed);
    encoder = ContextEncoder(store, config, vocab.size(), r);
    graph = GraphEncoder(store, config, kg, r);
    prior = RefactorNet(store, "prior", config, r);
    posterior = RefactorNet(store, "posterior", config, r);
    generator = Generator(store, config, vocab.size(), r);
}

bool Model::has_stage(const std::string& stage) const {
    return std::find(stages.begin(), stages.end(), stage) != stages.end();
}

void Model::mark_stage(const std::string& stage) {
    if (!has_stage(stage)) stages.push_back(stage);
}

nlohmann::json Model::to_json() const {
    nlohmann::json j;
    j["format"] = "vrkg-checkpoint";
    j["version"] = kCheckpointVersion;
    j["config"] = config.to_json();
    j["stages"] = stages;
    j["progress"] = {{"pre", progress.pre}, {"reg", progress.reg}, {"rec", progress.rec}, {"gen", progress.gen}};
    j["vocab"] = vocab.tokens();
    std::vector<std::string> keys;
    for (size_t e = 0; e < kg.entity_count(); ++e) keys.push_back(kg.key(static_cast<EntityId>(e)));
    j["entities"] = keys;
    j["relations"] = kg.relation_count();
    std::vector<bool> occurs = ranking.occurs();
    j["mi"] = {{"scores", ranking.scores()}, {"occurs", occurs}};
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, p] : store.all()) {
        params[name] = {{"group", to_string(p.group)}, {"value", matrix_to_json(p.var.value())}};
    }
    j["params"] = std::move(params);
    nlohmann::json opt = nlohmann::json::object();
    for (const auto& [name, a] : optimizers) opt[name] = a.state();
    j["optimizers"] = std::move(opt);
    std::ostringstream rs;
    rs << rng;
    j["rng"] = rs.str();
    return j;
}

void Model::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
        out << to_json().dump();
        if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw CheckpointError("cannot move checkpoint into place at '" + path + "'");
    }
}

std::unique_ptr<Model> Model::from_json(const nlohmann::json& j, KnowledgeGraph kg) {
    try {
        if (j.value("format", "") != "vrkg-checkpoint") throw CheckpointError("not a checkpoint file");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
        }
        const auto keys = j.at("entities").get<std::vector<std::string>>();
        if (keys.size() != kg.entity_count()) {
            throw CheckpointError("checkpoint has " + std::to_string(keys.size()) + " entities, graph has " +
                                  std::to_string(kg.entity_count()));
        }
        for (size_t e = 0; e < keys.size(); ++e) {
            if (keys[e] != kg.key(static_cast<EntityId>(e))) {
                throw CheckpointError("entity " + std::to_string(e) + " is '" + kg.key(static_cast<EntityId>(e)) +
                                      "' in the graph but '" + keys[e] + "' in the checkpoint");
            }
        }
        if (j.at("relations").get<size_t>() != kg.relation_count()) {
            throw CheckpointError("relation count differs between checkpoint and graph");
        }
        Config config = Config::from_json(j.at("config"));
        Vocabulary vocab = Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>());
        MiRanking ranking(j.at("mi").at("scores").get<std::vector<double>>(),
                          j.at("mi").at("occurs").get<std::vector<bool>>());
        auto model = std::make_unique<Model>(config, std::move(kg), std::move(vocab), std::move(ranking));

        const auto& params = j.at("params");
        if (params.size() != model->store.all().size()) {
            throw CheckpointError("checkpoint has " + std::to_string(params.size()) + " parameters, model has " +
                                  std::to_string(model->store.all().size()));
        }
        for (auto& [name, p] : model->store.all()) {
            if (!params.contains(name)) throw CheckpointError("missing parameter '" + name + "'");
            Matrix v = matrix_from_json(params[name].at("value"));
            if (v.rows() != p.var.rows() || v.cols() != p.var.cols()) {
                throw CheckpointError("shape mismatch for parameter '" + name + "'");
            }
            p.var.mutable_value() = std::move(v);
        }
        model->stages = j.at("stages").get<std::vector<std::string>>();
        const auto& pr = j.at("progress");
        model->progress = {pr.at("pre").get<int>(), pr.at("reg").get<int>(), pr.at("rec").get<int>(),
                           pr.at("gen").get<int>()};
        for (const auto& [name, state] : j.at("optimizers").items()) {
            Adam a;
            a.load_state(state);
            model->optimizers[name] = std::move(a);
        }
        std::istringstream rs(j.at("rng").get<std::string>());
        rs >> model->rng;
        if (!rs) throw CheckpointError("corrupt RNG state");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

std::unique_ptr<Model> Model::load(const std::string& path, KnowledgeGraph kg) {
    return from_json(read_json(path), std::move(kg));
}

std::unique_ptr<Model> Model::load(const std::string& path) {
    const auto j = read_json(path);
    Config config;
    try {
        config = Config::from_json(j.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint config unreadable: ") + e.what());
    }
    if (config.data.kg.empty()) throw CheckpointError("checkpoint config names no graph file");
    return from_json(j, load_kg(config.data.kg, kg_format_from_path(config.data.kg), config.data.entities));
}

Config checkpoint_config(const std::string& path) {
    const auto j = read_json(path);
    try {
        return Config::from_json(j.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint config unreadable: ") + e.what());
    }
}

}  // namespace vrkg
