// Model, optimization and data settings. Defaults are the published
// hyperparameters; desk-scale fixtures override the dimensions.
#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>

namespace vrkg {

enum class EncoderKind { Tiny, Pretrained };
/// How the recommender weights tail entities during training: one hard
/// straight-through Gumbel sample, or the posterior probabilities directly.
enum class RecWeighting { Sample, Probability };

struct DataPaths {
    std::string kg;        // triples (TSV or JSON)
    std::string entities;  // sidecar entity table for TSV graphs
    std::string train;
    std::string valid;
    std::string test;
};

struct Config {
    // Objective weights.
    double alpha = 0.1;
    double beta = 1.0;
    double gamma = 10.0;
    double lambda = 0.0025;

    // Subgraph support.
    int k_tail = 40;

    // Dimensions.
    int ent_dim = 128;
    int ctx_dim = 768;
    int att_dim = 0;     // 0 -> ent_dim
    int mlp_hidden = 0;  // 0 -> 2 * ent_dim
    int rgcn_layers = 1;
    int max_ctx_len = 256;
    EncoderKind encoder = EncoderKind::Tiny;
    int encoder_layers = 2;
    int encoder_heads = 4;
    int decoder_layers = 2;
    int decoder_heads = 4;
    int ffn_mult = 2;
    int vocab_size = 23929;

    // Optimization.
    double lr_encoder = 1e-5;
    double lr_rgcn = 5e-4;
    double lr_other = 1e-3;
    double gen_lr_factor = 0.5;
    long long warmup_steps = 2000;
    double grad_clip = 0.0;
    int batch_size = 1;
    int pre_epochs = 10;
    int reg_epochs = 10;
    int rec_epochs = 10;
    int gen_epochs = 10;

    // Latent sampling.
    double tau = 0.5;
    bool gumbel_hard = true;
    RecWeighting rec_weighting = RecWeighting::Sample;
    double clamp_eps = 1e-10;
    uint64_t seed = 42;

    // Decoding.
    int max_len = 30;
    int beam_width = 1;
    int top_n = 5;

    DataPaths data;

    int effective_att_dim() const { return att_dim > 0 ? att_dim : ent_dim; }
    int effective_mlp_hidden() const { return mlp_hidden > 0 ? mlp_hidden : 2 * ent_dim; }

    /// Throws std::invalid_argument when a value is out of range.
    void validate() const;

    nlohmann::json to_json() const;
    /// Unknown keys are rejected; missing keys keep their defaults.
    static Config from_json(const nlohmann::json& j);
    static Config load(const std::string& path);
};

}  // namespace vrkg
