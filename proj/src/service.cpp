#include "vrkg/service.hpp"

#include "vrkg/recommender.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>

namespace vrkg {

ChatService::ChatService(const Model& model, DecodeOptions options, std::string log_path)
    : model_(model),
      options_(options),
      entities_(model.graph.encode_entities(model.kg)),
      linker_(model.kg),
      salt_(std::random_device{}()) {
    if (log_path.empty()) return;
    if (std::filesystem::exists(log_path)) replay(log_path);
    log_.open(log_path, std::ios::app);
    if (!log_) throw std::runtime_error("cannot open session log '" + log_path + "'");
}

std::string ChatService::insert(std::string id) {
    std::lock_guard lock(sessions_mutex_);
    if (id.empty()) {
        char buf[40];
        do {
            std::snprintf(buf, sizeof buf, "s%08llx%04llx", static_cast<unsigned long long>(salt_ & 0xffffffffULL),
                          static_cast<unsigned long long>(++counter_));
            id = buf;
        } while (sessions_.count(id));
    }
    auto slot = std::make_shared<Slot>();
    slot->session.id = id;
    sessions_[id] = std::move(slot);
    return id;
}

std::string ChatService::create_session() {
    const std::string id = insert("");
    append_log({{"event", "create"}, {"session_id", id}});
    return id;
}

std::shared_ptr<ChatService::Slot> ChatService::find(const std::string& id) const {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw SessionNotFound("no session '" + id + "'");
    return it->second;
}

nlohmann::json ChatService::message(const std::string& session_id, const std::string& text) {
    auto slot = find(session_id);
    if (tokenize(text).empty()) throw std::invalid_argument("message text is empty");
    std::lock_guard lock(slot->mutex);
    auto out = respond(slot->session, text);
    append_log({{"event", "message"}, {"session_id", session_id}, {"text", text}});
    return out;
}

nlohmann::json ChatService::respond(Session& s, const std::string& text) const {
    Utterance user;
    user.speaker = Speaker::User;
    user.tokens = tokenize(text);
    user.entities = linker_.link(user.tokens);
    s.history.push_back(user);
    s.texts.push_back(text);
    for (EntityId e : user.entities)
        if (std::find(s.entities.begin(), s.entities.end(), e) == s.entities.end()) s.entities.push_back(e);

    std::mt19937_64 unused(0);
    const Var ent(entities_);
    RecPass pass = run_recommender(model_, ent, s.history, s.entities, {}, RecMode::Eval, unused);

    s.subgraph.clear();
    const Matrix& p = pass.prior.value();
    for (size_t i = 0; i < pass.candidates.pairs.size(); ++i) {
        const auto [h, t] = pass.candidates.pairs[i];
        s.subgraph.push_back({h, t, p(static_cast<Eigen::Index>(i), 0), pass.prior_bits[i] == 1});
    }
    const auto& items = model_.kg.items();
    const RowVector scores = pass.scores.value().row(0);
    s.recommendations.clear();
    for (EntityId e : rank_items(scores, items, model_.config.top_n)) {
        const auto col = std::lower_bound(items.begin(), items.end(), e) - items.begin();
        s.recommendations.push_back({e, scores(col)});
    }

    const auto input = decoder_input(model_, entities_, s.history, s.entities, pass);
    const auto ids = model_.generator.generate(input, options_.max_len, options_.mode, options_.beam_width);
    Utterance reply;
    reply.speaker = Speaker::Recommender;
    std::string response;
    for (int id : ids) {
        reply.tokens.push_back(model_.vocab.token(id));
        if (!response.empty()) response += ' ';
        response += reply.tokens.back();
    }
    reply.entities = linker_.link(reply.tokens);
    s.history.push_back(reply);
    s.texts.push_back(response);
    for (EntityId e : reply.entities)
        if (std::find(s.entities.begin(), s.entities.end(), e) == s.entities.end()) s.entities.push_back(e);
    return payload(s, response);
}

nlohmann::json ChatService::payload(const Session& s, const std::string& response) const {
    const auto& kg = model_.kg;
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : s.recommendations) {
        recs.push_back({{"item_id", kg.key(r.item)}, {"name", kg.name(r.item)}, {"score", r.score}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : s.subgraph) {
        edges.push_back({{"head", kg.key(e.head)},
                         {"tail", kg.key(e.tail)},
                         {"head_name", kg.name(e.head)},
                         {"tail_name", kg.name(e.tail)},
                         {"p_connect", e.p_connect},
                         {"connected", e.connected}});
    }
    return {{"response_text", response}, {"recommendations", std::move(recs)}, {"subgraph", std::move(edges)}};
}

nlohmann::json ChatService::session(const std::string& session_id) const {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mutex);
    const Session& s = slot->session;
    const auto& kg = model_.kg;
    nlohmann::json history = nlohmann::json::array();
    for (size_t i = 0; i < s.history.size(); ++i) {
        std::vector<std::string> ents;
        for (EntityId e : s.history[i].entities) ents.push_back(kg.key(e));
        history.push_back({{"speaker", to_string(s.history[i].speaker)}, {"text", s.texts[i]}, {"entities", ents}});
    }
    std::vector<std::string> ents;
    for (EntityId e : s.entities) ents.push_back(kg.key(e));
    nlohmann::json out = payload(s, s.texts.empty() ? "" : s.texts.back());
    out.erase("response_text");
    out["session_id"] = s.id;
    out["history"] = std::move(history);
    out["entities"] = std::move(ents);
    return out;
}

nlohmann::json ChatService::health() const {
    return {{"status", "ok"},
            {"stages", model_.stages},
            {"entities", model_.kg.entity_count()},
            {"items", model_.kg.items().size()},
            {"sessions", session_count()}};
}

size_t ChatService::session_count() const {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
}

void ChatService::append_log(const nlohmann::json& event) {
    std::lock_guard lock(log_mutex_);
    if (!log_.is_open()) return;
    log_ << event.dump() << '\n';
    log_.flush();
}

void ChatService::replay(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    size_t lineno = 0, events = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json ev;
        try {
            ev = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            spdlog::warn("{}:{}: skipping unreadable session log line", path, lineno);
            continue;
        }
        const std::string kind = ev.value("event", "");
        const std::string id = ev.value("session_id", "");
        if (kind == "create") {
            insert(id);
        } else if (kind == "message") {
            auto slot = find(id);
            respond(slot->session, ev.value("text", ""));
        }
        ++events;
    }
    spdlog::info("replayed {} session events from {}", events, path);
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

}  // namespace

void mount_routes(httplib::Server& server, ChatService& service) {
    server.Post("/session", [&service](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"session_id", service.create_session()}});
    });
    server.Post(R"(/session/([^/]+)/message)", [&service](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
            return send_error(res, 400, "request body is not valid JSON");
        }
        if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
            return send_error(res, 400, "expected {\"text\": string}");
        }
        try {
            send_json(res, 200, service.message(req.matches[1], body["text"].get<std::string>()));
        } catch (const SessionNotFound& e) {
            send_error(res, 404, e.what());
        } catch (const std::invalid_argument& e) {
            send_error(res, 400, e.what());
        }
    });
    server.Get(R"(/session/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        try {
            send_json(res, 200, service.session(req.matches[1]));
        } catch (const SessionNotFound& e) {
            send_error(res, 404, e.what());
        }
    });
    server.Get("/health", [&service](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, service.health());
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        } catch (...) {
            send_error(res, 500, "internal error");
        }
    });
}

}  // namespace vrkg
