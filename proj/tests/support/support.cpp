#include "support.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>

#include <httplib.h>
#include <thread>
#include <unistd.h>

namespace vrkg::testing {

std::vector<GradCheck> check_gradients(const std::function<Var()>& loss,
                                       const std::vector<std::pair<std::string, Var>>& params, double h,
                                       size_t max_entries) {
    for (auto [name, p] : params) p.zero_grad();
    backward(loss());
    std::vector<GradCheck> out;
    for (auto [name, p] : params) {
        const Eigen::Index n = p.value().size();
        Matrix analytic = p.grad().size() == n ? p.grad() : Matrix::Zero(p.rows(), p.cols());
        std::vector<Eigen::Index> picks;
        const auto limit = static_cast<Eigen::Index>(max_entries);
        if (max_entries == 0 || n <= limit) {
            for (Eigen::Index i = 0; i < n; ++i) picks.push_back(i);
        } else {
            for (Eigen::Index j = 0; j < limit; ++j) picks.push_back(j * n / limit);
        }
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (Eigen::Index i : picks) {
            double& x = p.mutable_value().data()[i];
            const double saved = x;
            x = saved + h;
            const double up = loss().item();
            x = saved - h;
            const double down = loss().item();
            x = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic.data()[i];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-4});
        out.push_back({name, std::sqrt(diff2) / denom, picks.size()});
    }
    return out;
}

double worst(const std::vector<GradCheck>& checks) {
    double w = 0.0;
    for (const auto& c : checks) w = std::max(w, c.rel_error);
    return w;
}

std::vector<double> mi_oracle(const std::vector<std::vector<EntityId>>& units, size_t entity_count) {
    const double n = static_cast<double>(units.size());
    auto has = [](const std::vector<EntityId>& u, EntityId e) { return std::find(u.begin(), u.end(), e) != u.end(); };
    std::vector<double> out(entity_count, 0.0);
    for (size_t e = 0; e < entity_count; ++e) {
        double count_e = 0;
        for (const auto& u : units) count_e += has(u, static_cast<EntityId>(e)) ? 1 : 0;
        for (size_t h = 0; h < entity_count; ++h) {
            if (h == e) continue;
            double count_h = 0, joint = 0;
            for (const auto& u : units) {
                const bool in_h = has(u, static_cast<EntityId>(h));
                count_h += in_h ? 1 : 0;
                joint += in_h && has(u, static_cast<EntityId>(e)) ? 1 : 0;
            }
            if (joint == 0) continue;
            const double p_cond = joint / count_h;
            out[e] += p_cond * (count_h / n) * std::log(p_cond / (count_e / n));
        }
    }
    return out;
}

std::vector<std::vector<EntityId>> counting_units(const std::vector<TurnExample>& examples) {
    std::vector<std::vector<EntityId>> units;
    for (const auto& ex : examples) {
        std::vector<EntityId> u;
        for (const auto& utt : ex.context) u.insert(u.end(), utt.entities.begin(), utt.entities.end());
        u.insert(u.end(), ex.gold_response.entities.begin(), ex.gold_response.entities.end());
        units.push_back(u);
    }
    return units;
}

double recall_oracle(const std::vector<std::vector<EntityId>>& rankings,
                     const std::vector<std::vector<EntityId>>& gold, int m) {
    int hits = 0, total = 0;
    for (size_t i = 0; i < rankings.size(); ++i) {
        for (EntityId g : gold[i]) {
            ++total;
            for (int r = 0; r < m && r < static_cast<int>(rankings[i].size()); ++r) {
                if (rankings[i][static_cast<size_t>(r)] == g) {
                    ++hits;
                    break;
                }
            }
        }
    }
    return total ? static_cast<double>(hits) / total : 0.0;
}

namespace {

using Gram = std::vector<std::string>;

std::vector<Gram> grams(const std::vector<std::string>& t, int n) {
    std::vector<Gram> out;
    for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) out.emplace_back(t.begin() + i, t.begin() + i + n);
    return out;
}

int count_of(const std::vector<Gram>& list, const Gram& g) {
    int c = 0;
    for (const auto& x : list) c += x == g ? 1 : 0;
    return c;
}

bool is_subsequence(const std::vector<std::string>& sub, const std::vector<std::string>& of) {
    size_t j = 0;
    for (size_t i = 0; i < of.size() && j < sub.size(); ++i)
        if (of[i] == sub[j]) ++j;
    return j == sub.size();
}

size_t lcs_brute(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    size_t best = 0;
    const size_t masks = size_t{1} << a.size();
    for (size_t m = 0; m < masks; ++m) {
        std::vector<std::string> sub;
        for (size_t i = 0; i < a.size(); ++i)
            if (m >> i & 1) sub.push_back(a[i]);
        if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
    }
    return best;
}

// Clipped overlap over distinct reference n-grams; -1 when there are none.
double recall_n(const std::vector<std::string>& gen, const std::vector<std::string>& ref, int n) {
    const auto rg = grams(ref, n);
    if (rg.empty()) return -1.0;
    const auto gg = grams(gen, n);
    std::vector<Gram> seen;
    int overlap = 0;
    for (const auto& g : rg) {
        if (count_of(seen, g)) continue;
        seen.push_back(g);
        overlap += std::min(count_of(rg, g), count_of(gg, g));
    }
    return static_cast<double>(overlap) / static_cast<double>(rg.size());
}

}  // namespace

double distinct_oracle(const std::vector<std::vector<std::string>>& responses, int n) {
    std::vector<Gram> all, unique;
    for (const auto& r : responses)
        for (auto& g : grams(r, n)) all.push_back(g);
    for (const auto& g : all)
        if (!count_of(unique, g)) unique.push_back(g);
    return all.empty() ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(all.size());
}

std::array<double, 3> rouge_oracle(const std::vector<std::vector<std::string>>& generated,
                                   const std::vector<std::vector<std::string>>& references) {
    double s1 = 0, s2 = 0, sl = 0;
    int n1 = 0, n2 = 0, nl = 0;
    for (size_t i = 0; i < generated.size(); ++i) {
        const auto& ref = references[i];
        if (ref.empty()) continue;
        s1 += recall_n(generated[i], ref, 1);
        ++n1;
        const double r2 = recall_n(generated[i], ref, 2);
        if (r2 >= 0) {
            s2 += r2;
            ++n2;
        }
        sl += static_cast<double>(lcs_brute(generated[i], ref)) / static_cast<double>(ref.size());
        ++nl;
    }
    return {n1 ? s1 / n1 : 0.0, n2 ? s2 / n2 : 0.0, nl ? sl / nl : 0.0};
}

Fixture make_fixture(const Config& config) {
    Fixture f;
    f.corpus = make_synthetic_corpus();
    f.workspace.config = config;
    f.workspace.kg = f.corpus.observed;
    f.workspace.dialogues = f.corpus.dialogues;
    f.workspace.examples = build_examples(f.corpus.dialogues, f.corpus.observed);
    f.model = initialize_model(f.workspace);
    return f;
}

Config tiny_config() {
    Config c = fixture_config();
    c.ent_dim = 6;
    c.ctx_dim = 8;
    c.mlp_hidden = 8;
    c.max_ctx_len = 24;
    c.encoder_heads = 2;
    c.decoder_heads = 2;
    c.k_tail = 3;
    c.pre_epochs = 2;
    c.reg_epochs = 1;
    c.rec_epochs = 2;
    c.gen_epochs = 2;
    c.warmup_steps = 20;
    c.max_len = 8;
    return c;
}

struct LocalServer::Impl {
    httplib::Server server;
    std::thread thread;
};

LocalServer::LocalServer(ChatService& service) : impl_(std::make_unique<Impl>()) {
    mount_routes(impl_->server, service);
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
    if (port_ < 0) throw std::runtime_error("cannot bind a local port");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

LocalServer::~LocalServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

namespace {

HttpReply to_reply(const httplib::Result& r) {
    if (!r) throw std::runtime_error("HTTP request failed: " + httplib::to_string(r.error()));
    HttpReply out;
    out.status = r->status;
    out.body = nlohmann::json::parse(r->body);
    return out;
}

}  // namespace

HttpReply LocalServer::post(const std::string& path, const std::string& body) const {
    httplib::Client client("127.0.0.1", port_);
    return to_reply(client.Post(path, body, "application/json"));
}

HttpReply LocalServer::get(const std::string& path) const {
    httplib::Client client("127.0.0.1", port_);
    return to_reply(client.Get(path));
}

std::string temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("vrkg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace vrkg::testing
