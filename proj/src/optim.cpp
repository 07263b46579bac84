#include "vrkg/optim.hpp"

#include "vrkg/serialization.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace vrkg {

void Adam::step(ParameterStore& store, const std::map<ParamGroup, double>& rates) {
    ++t_;
    double scale = 1.0;
    if (opts_.clip_norm > 0.0) {
        double sq = 0.0;
        for (auto& [name, p] : store.all()) {
            if (!rates.count(p.group) || p.var.grad().size() == 0) continue;
            sq += p.var.grad().squaredNorm();
        }
        const double norm = std::sqrt(sq);
        if (norm > opts_.clip_norm) scale = opts_.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : store.all()) {
        auto rate_it = rates.find(p.group);
        if (rate_it == rates.end()) continue;
        const Matrix& raw = p.var.grad();
        if (raw.size() == 0) continue;
        Matrix g = raw * scale;
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.size() == 0) {
            m = Matrix::Zero(g.rows(), g.cols());
            v = Matrix::Zero(g.rows(), g.cols());
        }
        m = opts_.beta1 * m + (1.0 - opts_.beta1) * g;
        v = opts_.beta2 * v + (1.0 - opts_.beta2) * g.cwiseProduct(g);
        Matrix& w = p.var.mutable_value();
        const double lr = rate_it->second;
        w.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opts_.eps);
    }
}

nlohmann::json Adam::state() const {
    nlohmann::json j;
    j["t"] = t_;
    j["options"] = {{"beta1", opts_.beta1}, {"beta2", opts_.beta2}, {"eps", opts_.eps}, {"clip_norm", opts_.clip_norm}};
    nlohmann::json m = nlohmann::json::object();
    nlohmann::json v = nlohmann::json::object();
    for (const auto& [name, mat] : m_) m[name] = matrix_to_json(mat);
    for (const auto& [name, mat] : v_) v[name] = matrix_to_json(mat);
    j["m"] = std::move(m);
    j["v"] = std::move(v);
    return j;
}

void Adam::load_state(const nlohmann::json& j) {
    t_ = j.at("t").get<long long>();
    if (j.contains("options")) {
        const auto& o = j.at("options");
        opts_ = {o.at("beta1").get<double>(), o.at("beta2").get<double>(), o.at("eps").get<double>(),
                 o.at("clip_norm").get<double>()};
    }
    m_.clear();
    v_.clear();
    for (const auto& [name, mat] : j.at("m").items()) m_[name] = matrix_from_json(mat);
    for (const auto& [name, mat] : j.at("v").items()) v_[name] = matrix_from_json(mat);
}

double WarmupSchedule::rate(long long step) const {
    const double s = static_cast<double>(std::max<long long>(step, 1));
    const double w = static_cast<double>(std::max<long long>(warmup, 1));
    return factor * std::pow(static_cast<double>(width), -0.5) *
           std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

}  // namespace vrkg
