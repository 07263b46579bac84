#include "vrkg/config.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace vrkg {

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("invalid config: " + what);
}

}  // namespace

void Config::validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    require(beta >= 0.0 && gamma >= 0.0 && lambda >= 0.0, "beta, gamma and lambda must be >= 0");
    require(k_tail >= 0, "k_tail must be >= 0");
    require(ent_dim > 0 && ctx_dim > 0, "dimensions must be positive");
    require(rgcn_layers >= 1, "rgcn_layers must be >= 1");
    require(max_ctx_len >= 2, "max_ctx_len must be >= 2");
    require(encoder_layers >= 1 && decoder_layers >= 1, "layer counts must be >= 1");
    require(encoder_heads >= 1 && ctx_dim % encoder_heads == 0,
            "ctx_dim must be divisible by encoder_heads");
    require(decoder_heads >= 1 && ctx_dim % decoder_heads == 0,
            "ctx_dim must be divisible by decoder_heads");
    require(ffn_mult >= 1, "ffn_mult must be >= 1");
    require(vocab_size >= 6, "vocab_size must leave room for reserved tokens");
    require(tau > 0.0, "tau must be > 0");
    require(clamp_eps > 0.0 && clamp_eps < 1e-3, "clamp_eps must lie in (0, 1e-3)");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(pre_epochs >= 0 && reg_epochs >= 0 && rec_epochs >= 0 && gen_epochs >= 0,
            "epoch counts must be >= 0");
    require(warmup_steps >= 1, "warmup_steps must be >= 1");
    require(max_len >= 1 && beam_width >= 1 && top_n >= 1, "decoding sizes must be >= 1");
}

nlohmann::json Config::to_json() const {
    return {
        {"alpha", alpha},
        {"beta", beta},
        {"gamma", gamma},
        {"lambda", lambda},
        {"k_tail", k_tail},
        {"ent_dim", ent_dim},
        {"ctx_dim", ctx_dim},
        {"att_dim", att_dim},
        {"mlp_hidden", mlp_hidden},
        {"rgcn_layers", rgcn_layers},
        {"max_ctx_len", max_ctx_len},
        {"encoder", encoder == EncoderKind::Tiny ? "tiny" : "pretrained"},
        {"encoder_layers", encoder_layers},
        {"encoder_heads", encoder_heads},
        {"decoder_layers", decoder_layers},
        {"decoder_heads", decoder_heads},
        {"ffn_mult", ffn_mult},
        {"vocab_size", vocab_size},
        {"lr_encoder", lr_encoder},
        {"lr_rgcn", lr_rgcn},
        {"lr_other", lr_other},
        {"gen_lr_factor", gen_lr_factor},
        {"warmup_steps", warmup_steps},
        {"grad_clip", grad_clip},
        {"batch_size", batch_size},
        {"pre_epochs", pre_epochs},
        {"reg_epochs", reg_epochs},
        {"rec_epochs", rec_epochs},
        {"gen_epochs", gen_epochs},
        {"tau", tau},
        {"gumbel_hard", gumbel_hard},
        {"rec_weighting", rec_weighting == RecWeighting::Sample ? "sample" : "probability"},
        {"clamp_eps", clamp_eps},
        {"seed", seed},
        {"max_len", max_len},
        {"beam_width", beam_width},
        {"top_n", top_n},
        {"data",
         {{"kg", data.kg},
          {"entities", data.entities},
          {"train", data.train},
          {"valid", data.valid},
          {"test", data.test}}},
    };
}

Config Config::from_json(const nlohmann::json& j) {
    Config c;
    const Config defaults;
    const auto known = defaults.to_json();
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    }
    read(j, "alpha", c.alpha);
    read(j, "beta", c.beta);
    read(j, "gamma", c.gamma);
    read(j, "lambda", c.lambda);
    read(j, "k_tail", c.k_tail);
    read(j, "ent_dim", c.ent_dim);
    read(j, "ctx_dim", c.ctx_dim);
    read(j, "att_dim", c.att_dim);
    read(j, "mlp_hidden", c.mlp_hidden);
    read(j, "rgcn_layers", c.rgcn_layers);
    read(j, "max_ctx_len", c.max_ctx_len);
    if (j.contains("encoder")) {
        const auto e = j.at("encoder").get<std::string>();
        if (e == "tiny") c.encoder = EncoderKind::Tiny;
        else if (e == "pretrained") c.encoder = EncoderKind::Pretrained;
        else throw std::invalid_argument("encoder must be 'tiny' or 'pretrained'");
    }
    read(j, "encoder_layers", c.encoder_layers);
    read(j, "encoder_heads", c.encoder_heads);
    read(j, "decoder_layers", c.decoder_layers);
    read(j, "decoder_heads", c.decoder_heads);
    read(j, "ffn_mult", c.ffn_mult);
    read(j, "vocab_size", c.vocab_size);
    read(j, "lr_encoder", c.lr_encoder);
    read(j, "lr_rgcn", c.lr_rgcn);
    read(j, "lr_other", c.lr_other);
    read(j, "gen_lr_factor", c.gen_lr_factor);
    read(j, "warmup_steps", c.warmup_steps);
    read(j, "grad_clip", c.grad_clip);
    read(j, "batch_size", c.batch_size);
    read(j, "pre_epochs", c.pre_epochs);
    read(j, "reg_epochs", c.reg_epochs);
    read(j, "rec_epochs", c.rec_epochs);
    read(j, "gen_epochs", c.gen_epochs);
    read(j, "tau", c.tau);
    read(j, "gumbel_hard", c.gumbel_hard);
    if (j.contains("rec_weighting")) {
        const auto w = j.at("rec_weighting").get<std::string>();
        if (w == "sample") c.rec_weighting = RecWeighting::Sample;
        else if (w == "probability") c.rec_weighting = RecWeighting::Probability;
        else throw std::invalid_argument("rec_weighting must be 'sample' or 'probability'");
    }
    read(j, "clamp_eps", c.clamp_eps);
    read(j, "seed", c.seed);
    read(j, "max_len", c.max_len);
    read(j, "beam_width", c.beam_width);
    read(j, "top_n", c.top_n);
    if (j.contains("data")) {
        const auto& d = j.at("data");
        read(d, "kg", c.data.kg);
        read(d, "entities", c.data.entities);
        read(d, "train", c.data.train);
        read(d, "valid", c.data.valid);
        read(d, "test", c.data.test);
    }
    c.validate();
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("config '" + path + "': " + e.what());
    }
    Config c = from_json(j);
    // Relative data paths resolve against the config file's directory.
    const auto base = std::filesystem::path(path).parent_path();
    for (std::string* p : {&c.data.kg, &c.data.entities, &c.data.train, &c.data.valid, &c.data.test}) {
        if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
    }
    return c;
}

}  // namespace vrkg
