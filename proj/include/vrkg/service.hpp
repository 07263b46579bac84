// Chat sessions over a trained model, and their HTTP routes.
#pragma once

#include "vrkg/pipeline.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace vrkg {

class SessionNotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SubgraphEdge {
    EntityId head = 0;
    EntityId tail = 0;
    double p_connect = 0.0;
    bool connected = false;
};

struct Recommendation {
    EntityId item = 0;
    double score = 0.0;
};

struct Session {
    std::string id;
    std::vector<Utterance> history;
    std::vector<std::string> texts;     // raw text per utterance
    std::vector<EntityId> entities;     // linked so far, first mention order
    std::vector<SubgraphEdge> subgraph; // last inferred
    std::vector<Recommendation> recommendations;
};

class ChatService {
public:
    /// `log_path` empty disables persistence. An existing log is replayed.
    ChatService(const Model& model, DecodeOptions options, std::string log_path = "");

    std::string create_session();
    /// Throws SessionNotFound, or std::invalid_argument for empty text.
    nlohmann::json message(const std::string& session_id, const std::string& text);
    nlohmann::json session(const std::string& session_id) const;
    nlohmann::json health() const;

    size_t session_count() const;

private:
    struct Slot {
        std::mutex mutex;
        Session session;
    };

    std::shared_ptr<Slot> find(const std::string& id) const;
    std::string insert(std::string id);
    nlohmann::json respond(Session& s, const std::string& text) const;
    nlohmann::json payload(const Session& s, const std::string& response) const;
    void append_log(const nlohmann::json& event);
    void replay(const std::string& path);

    const Model& model_;
    DecodeOptions options_;
    Matrix entities_;
    EntityLinker linker_;

    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
    uint64_t counter_ = 0;
    uint64_t salt_ = 0;

    std::mutex log_mutex_;
    std::ofstream log_;
};

/// POST /session, POST /session/{id}/message, GET /session/{id}, GET /health.
void mount_routes(httplib::Server& server, ChatService& service);

}  // namespace vrkg
