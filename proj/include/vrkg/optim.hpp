#pragma once

#include "vrkg/nn.hpp"

#include <json.hpp>

#include <map>
#include <string>

namespace vrkg {

/// Adam with one learning rate per parameter group. Groups missing from
/// the rate table are frozen.
class Adam {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double clip_norm = 0.0;  // 0 disables clipping
    };

    Adam() = default;
    explicit Adam(Options opts) : opts_(opts) {}

    void step(ParameterStore& store, const std::map<ParamGroup, double>& rates);

    long long steps() const { return t_; }

    nlohmann::json state() const;
    void load_state(const nlohmann::json& j);

private:
    Options opts_{};
    long long t_ = 0;
    std::map<std::string, Matrix> m_;
    std::map<std::string, Matrix> v_;
};

/// Inverse-square-root schedule with linear warm-up:
/// rate(step) = factor * width^-0.5 * min(step^-0.5, step * warmup^-1.5).
/// The maximum is reached at step == warmup.
struct WarmupSchedule {
    double factor = 0.5;
    long long warmup = 2000;
    long long width = 768;

    double rate(long long step) const;
};

}  // namespace vrkg
