#pragma once

// Experiment service: serves maze trials to a browser client, records clicks and path choices
// with server timestamps, and exports participant logs in the trial_log format.
//
// Ground truth lives server-side only. Every state change is appended to a per-session
// JSON-lines event log, which is replayed on startup.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mcrl/io.hpp"

namespace mcrl::service {

using json = io::json;
namespace fs = std::filesystem;

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    fs::path data_dir = "data";
    int trials_per_session = 120;
    bool hide_fees = true;
    std::map<std::string, EnvConfig> configs{{"default", EnvConfig{}}};
    std::optional<fs::path> static_dir;
};

/// Reads a service config file; relative env-config paths resolve against the file's directory.
inline ServiceConfig service_config_from_json(const json& j, const fs::path& base_dir = {}) {
    ServiceConfig c;
    c.host = io::detail::get_or<std::string>(j, "host", c.host);
    c.port = io::detail::get_or(j, "port", c.port);
    if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
    c.trials_per_session = io::detail::get_or(j, "trials_per_session", c.trials_per_session);
    c.hide_fees = io::detail::get_or(j, "hide_fees", c.hide_fees);
    if (j.contains("static_dir")) c.static_dir = j.at("static_dir").get<std::string>();
    if (j.contains("configs")) {
        c.configs.clear();
        for (const auto& [name, v] : j.at("configs").items()) {
            if (v.is_string()) {
                fs::path p = v.get<std::string>();
                if (p.is_relative()) p = base_dir / p;
                c.configs[name] = io::load_env(p);
            } else {
                c.configs[name] = io::env_from_json(v);
            }
        }
    }
    require(!c.configs.empty(), "service config needs at least one environment config");
    require(c.trials_per_session >= 1, "trials_per_session must be >= 1");
    require(c.port >= 0 && c.port <= 65535, "port out of range");
    return c;
}

/// MCRL_PORT and MCRL_DATA_DIR override the file values.
inline void apply_env_overrides(ServiceConfig& c) {
    if (const char* p = std::getenv("MCRL_PORT"); p && *p) {
        try {
            c.port = std::stoi(p);
        } catch (const std::logic_error&) {
            throw ValidationError("MCRL_PORT is not a number");
        }
        require(c.port >= 0 && c.port <= 65535, "MCRL_PORT out of range");
    }
    if (const char* d = std::getenv("MCRL_DATA_DIR"); d && *d) c.data_dir = d;
}

/// An error with the HTTP status it maps to.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, const std::string& msg) : std::runtime_error(msg), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

inline std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

/// Mean score of the resource-rational strategy, estimated on a fixed set of trials.
inline double rr_expected_score(const EnvConfig& env, int trials = 20000) {
    const FeatureContext ctx(env);
    const RsslState rr = RsslState::initial({0.0, 1.0, 1.0, 0.0}, {StrategyId::resource_rational});
    Rng rng(0x5eed);
    double total = 0.0;
    for (int t = 0; t < trials; ++t) total += rssl_sample_episode(rr, generate_trial(env, rng), t, ctx, rng).log.score;
    return total / trials;
}

inline json structure_json() {
    json nodes = json::array();
    for (NodeId n = 0; n < maze::kNodes; ++n) {
        json e{{"id", n}, {"level", maze::level_of(n)}};
        e["parent"] = n == kStartNode ? json(nullptr) : json(maze::parent_of(n));
        e["branch"] = n == kStartNode ? json(nullptr) : json(maze::branch_of(n));
        nodes.push_back(std::move(e));
    }
    return json{{"branches", maze::kBranches}, {"nodes", nodes}};
}

class ExperimentService {
public:
    explicit ExperimentService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
        fs::create_directories(sessions_dir());
        for (const auto& [name, env] : cfg_.configs) hint_[name] = rr_expected_score(env, 4000);
        load_existing();
    }

    const ServiceConfig& config() const { return cfg_; }

    json health() const {
        std::shared_lock lock(map_mu_);
        return json{{"status", "ok"}, {"sessions", sessions_.size()}};
    }

    json create_session(const json& req) {
        if (!req.is_object()) throw ServiceError(400, "request body must be a JSON object");
        const std::string config = req.value("config", std::string("default"));
        const auto it = cfg_.configs.find(config);
        if (it == cfg_.configs.end()) throw ServiceError(404, "unknown config '" + config + "'");
        auto s = std::make_shared<Session>();
        s->participant_id = req.value("participant_id", std::string());
        s->metadata = req.value("metadata", json::object());
        s->config = config;
        s->env = it->second;
        s->trial_count = cfg_.trials_per_session;
        s->seed = std::random_device{}() ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32);
        {
            std::unique_lock lock(map_mu_);
            do s->id = random_id();
            while (sessions_.count(s->id));
            if (s->participant_id.empty()) s->participant_id = s->id;
            sessions_[s->id] = s;
        }
        std::lock_guard g(s->mu);
        append(*s, {{"event", "session_created"},
                    {"t_ms", now_ms()},
                    {"session_id", s->id},
                    {"participant_id", s->participant_id},
                    {"metadata", s->metadata},
                    {"config", s->config},
                    {"env", io::to_json(s->env)},
                    {"trial_count", s->trial_count},
                    {"seed", s->seed}});
        start_trial(*s);
        const auto& r = s->env.rewards;
        return json{{"session_id", s->id},
                    {"participant_id", s->participant_id},
                    {"trial_count", s->trial_count},
                    {"reward_min", r.reward_min},
                    {"reward_max", r.reward_max},
                    {"optimal_score_hint", hint_.at(config)},
                    {"fees_hidden", cfg_.hide_fees},
                    {"structure", structure_json()},
                    {"trial", descriptor(*s)}};
    }

    json get_trial(const std::string& id) {
        auto s = find(id);
        std::lock_guard g(s->mu);
        return descriptor(*s);
    }

    json record_click(const std::string& id, const json& req) {
        auto s = find(id);
        std::lock_guard g(s->mu);
        check_active(*s, req);
        const NodeId node = int_field(req, "node");
        if (!maze::is_valid_node(node)) throw ServiceError(400, "invalid node id " + std::to_string(node));
        auto& cur = s->current;
        if (std::find(cur.clicks.begin(), cur.clicks.end(), node) != cur.clicks.end())
            throw ServiceError(409, "node " + std::to_string(node) + " is already revealed");
        const int value = cur.ground_truth.values[node];
        const int fee = cur.ground_truth.click_cost(node);
        const std::int64_t t = now_ms();
        append(*s, {{"event", "click"}, {"t_ms", t}, {"trial_index", cur.trial_index}, {"node", node}});
        apply_click_event(*s, node, t);
        json resp{{"trial_index", cur.trial_index}, {"node", node}, {"value", value}, {"clicks", cur.clicks}};
        if (!cfg_.hide_fees) resp["fee"] = fee;
        return resp;
    }

    json record_choice(const std::string& id, const json& req) {
        auto s = find(id);
        std::lock_guard g(s->mu);
        check_active(*s, req);
        std::vector<NodeId> path;
        try {
            if (req.contains("path")) {
                path = normalize_path(req.at("path").get<std::vector<NodeId>>());
            } else if (req.contains("outer")) {
                const NodeId o = req.at("outer").get<int>();
                if (!maze::is_valid_node(o) || !maze::is_leaf(o)) throw ValidationError("outer must be an outer node id");
                path = full_path(maze::path_of_leaf(o));
            } else {
                throw ServiceError(400, "choice needs 'path' or 'outer'");
            }
        } catch (const ValidationError& e) {
            throw ServiceError(400, std::string("invalid path: ") + e.what());
        } catch (const json::exception& e) {
            throw ServiceError(400, std::string("invalid path: ") + e.what());
        }
        const int trial = s->current.trial_index;
        const int score = compute_score(s->current.ground_truth, s->current.clicks, path);
        append(*s, {{"event", "choice"}, {"t_ms", now_ms()}, {"trial_index", trial}, {"path", path}, {"score", score}});
        apply_choice_event(*s, path);
        json resp{{"trial_index", trial}, {"trial_score", score}, {"path", path}, {"score_to_date", s->score_to_date}};
        if (s->completed()) {
            resp["completed"] = true;
            resp["summary"] = summary(*s);
        } else {
            start_trial(*s);
            resp["completed"] = false;
            resp["next_trial"] = descriptor(*s);
        }
        return resp;
    }

    /// Logs of the listed sessions, finalized trials first; an unfinished trial with clicks is
    /// exported with terminated = false. Trials of unfinished sessions carry partial = true.
    json export_logs(const std::vector<std::string>& ids) {
        json out = json::array();
        for (const auto& id : ids) {
            auto s = find(id);
            std::lock_guard g(s->mu);
            const bool partial = !s->completed();
            for (std::size_t i = 0; i < s->logs.size(); ++i) {
                TrialLog l = s->logs[i];
                l.partial = partial;
                json j = io::to_json(l);
                j["session_id"] = s->id;
                j["displayed_score"] = s->displayed[i];
                out.push_back(std::move(j));
            }
            if (partial && !s->current.clicks.empty()) {
                TrialLog l = s->current;
                l.terminated = false;
                l.partial = true;
                l.score = compute_score(l.ground_truth, l.clicks, {});
                json j = io::to_json(l);
                j["session_id"] = s->id;
                out.push_back(std::move(j));
            }
        }
        return out;
    }

    std::vector<std::string> session_ids() const {
        std::shared_lock lock(map_mu_);
        std::vector<std::string> ids;
        for (const auto& [id, s] : sessions_) ids.push_back(id);
        return ids;
    }

private:
    struct Session {
        std::mutex mu;
        std::string id, participant_id, config;
        json metadata = json::object();
        EnvConfig env;
        int trial_count = 0;
        std::uint64_t seed = 0;
        std::vector<TrialLog> logs;   // finalized trials
        std::vector<int> displayed;   // score returned to the client per finalized trial
        TrialLog current;
        bool active = false;          // a trial is open
        int score_to_date = 0;

        bool completed() const { return static_cast<int>(logs.size()) >= trial_count; }
    };

    fs::path sessions_dir() const { return cfg_.data_dir / "sessions"; }
    fs::path events_path(const Session& s) const { return sessions_dir() / (s.id + ".jsonl"); }

    static std::string random_id() {
        static thread_local std::mt19937_64 gen{std::random_device{}()};
        static const char* hex = "0123456789abcdef";
        std::string id;
        for (int i = 0; i < 24; ++i) id += hex[gen() % 16];
        return id;
    }

    static int int_field(const json& req, const char* key) {
        if (!req.is_object() || !req.contains(key) || !req.at(key).is_number_integer())
            throw ServiceError(400, std::string("request needs integer field '") + key + "'");
        return req.at(key).get<int>();
    }

    std::shared_ptr<Session> find(const std::string& id) const {
        std::shared_lock lock(map_mu_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + id + "'");
        return it->second;
    }

    void check_active(const Session& s, const json& req) const {
        if (s.completed()) throw ServiceError(409, "session is complete");
        const int t = int_field(req, "trial_index");
        if (t != s.current.trial_index)
            throw ServiceError(409, "stale trial index " + std::to_string(t) + " (current trial is " +
                                        std::to_string(s.current.trial_index) + ")");
        if (!s.active) throw ServiceError(409, "trial is already finalized");
    }

    void append(const Session& s, const json& event) const {
        std::ofstream out(events_path(s), std::ios::app | std::ios::binary);
        if (!out) throw ServiceError(500, "cannot write the session event log");
        out << event.dump() << '\n';
        out.flush();
    }

    void start_trial(Session& s) {
        const int t = static_cast<int>(s.logs.size());
        const TrialGroundTruth truth = generate_trial(s.env, derive_seed(s.seed, static_cast<std::uint64_t>(t)));
        append(s, {{"event", "trial_started"}, {"t_ms", now_ms()}, {"trial_index", t}, {"ground_truth", io::to_json(truth)}});
        open_trial(s, t, truth);
    }

    static void open_trial(Session& s, int t, const TrialGroundTruth& truth) {
        s.current = TrialLog{};
        s.current.participant_id = s.participant_id;
        s.current.trial_index = t;
        s.current.ground_truth = truth;
        s.active = true;
    }

    static void apply_click_event(Session& s, NodeId node, std::int64_t t) {
        s.current.clicks.push_back(node);
        s.current.click_timestamps_ms.push_back(t);
    }

    static void apply_choice_event(Session& s, const std::vector<NodeId>& path) {
        s.current.terminated = true;
        s.current.chosen_path = path;
        s.current.score = compute_score(s.current.ground_truth, s.current.clicks, path);
        s.score_to_date += s.current.score;
        s.displayed.push_back(s.current.score);
        s.logs.push_back(s.current);
        s.active = false;
    }

    json descriptor(const Session& s) const {
        if (s.completed()) return json{{"completed", true}, {"summary", summary(s)}};
        json revealed = json::object();
        int fees = 0;
        for (NodeId c : s.current.clicks) {
            revealed[std::to_string(c)] = s.current.ground_truth.values[c];
            fees += s.current.ground_truth.click_cost(c);
        }
        json d{{"completed", false},
               {"session_id", s.id},
               {"trial_index", s.current.trial_index},
               {"trial_number", s.current.trial_index + 1},
               {"trial_count", s.trial_count},
               {"revealed", revealed},
               {"clicks", s.current.clicks},
               {"score_to_date", s.score_to_date},
               {"reward_min", s.env.rewards.reward_min},
               {"reward_max", s.env.rewards.reward_max}};
        if (!cfg_.hide_fees) {
            d["fees_this_trial"] = fees;
            d["click_cost_by_level"] = s.env.click_cost_by_level;
        }
        return d;
    }

    static json summary(const Session& s) {
        return json{{"trials", s.logs.size()}, {"total_score", s.score_to_date}};
    }

    void load_existing() {
        for (const auto& entry : fs::directory_iterator(sessions_dir())) {
            if (entry.path().extension() != ".jsonl") continue;
            auto s = std::make_shared<Session>();
            std::ifstream in(entry.path());
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                json e;
                try {
                    e = json::parse(line);
                } catch (const json::exception&) {
                    break;  // torn final line after a crash
                }
                const std::string ev = e.at("event").get<std::string>();
                if (ev == "session_created") {
                    s->id = e.at("session_id").get<std::string>();
                    s->participant_id = e.at("participant_id").get<std::string>();
                    s->metadata = e.value("metadata", json::object());
                    s->config = e.at("config").get<std::string>();
                    s->env = io::env_from_json(e.at("env"));
                    s->trial_count = e.at("trial_count").get<int>();
                    s->seed = e.at("seed").get<std::uint64_t>();
                } else if (ev == "trial_started") {
                    open_trial(*s, e.at("trial_index").get<int>(), io::ground_truth_from_json(e.at("ground_truth"), "event log"));
                } else if (ev == "click") {
                    apply_click_event(*s, e.at("node").get<int>(), e.at("t_ms").get<std::int64_t>());
                } else if (ev == "choice") {
                    apply_choice_event(*s, e.at("path").get<std::vector<NodeId>>());
                }
            }
            if (s->id.empty()) continue;
            if (!s->completed() && !s->active) start_trial(*s);
            sessions_[s->id] = s;
        }
    }

    ServiceConfig cfg_;
    std::map<std::string, double> hint_;
    mutable std::shared_mutex map_mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace mcrl::service
