#pragma once

// File formats: JSON documents for configs, logs, specs and results; small CSV tables.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "mcrl/fitting.hpp"
#include "mcrl/metamdp.hpp"
#include "mcrl/selection.hpp"
#include "mcrl/stats.hpp"

namespace mcrl::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a sibling temporary and renames it over `path`.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw ValidationError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline json parse_json(std::string_view text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(what + ": " + e.what());
    }
}

inline json read_json(const fs::path& path) { return parse_json(read_file(path), path.string()); }

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Shortest round-trip decimal form; non-finite values print as nan / inf / -inf.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ValidationError("not a number: '" + s + "'");
    return v;
}

// JSON has no infinities; they are written as null and read back as -inf.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double number_or_neg_inf(const json& j) {
    return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

namespace detail {

template <class T>
T get_field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(where + ": field '" + key + "': " + e.what());
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("field '") + key + "': " + e.what());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Environment and logs

inline json to_json(const EnvConfig& env) {
    const auto& r = env.rewards;
    return json{{"immediate_support_positive", r.immediate_support_positive},
                {"immediate_support_negative", r.immediate_support_negative},
                {"middle_support", r.middle_support},
                {"nontarget_outer_support", r.nontarget_outer_support},
                {"target_outer_values", {r.target_outer_values.first, r.target_outer_values.second}},
                {"reward_min", r.reward_min},
                {"reward_max", r.reward_max},
                {"click_cost_by_level", env.click_cost_by_level}};
}

/// Missing fields keep their defaults, so `{}` is the default environment.
inline EnvConfig env_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("env_config must be a JSON object");
    EnvConfig env;
    auto& r = env.rewards;
    r.immediate_support_positive = detail::get_or(j, "immediate_support_positive", r.immediate_support_positive);
    r.immediate_support_negative = detail::get_or(j, "immediate_support_negative", r.immediate_support_negative);
    r.middle_support = detail::get_or(j, "middle_support", r.middle_support);
    r.nontarget_outer_support = detail::get_or(j, "nontarget_outer_support", r.nontarget_outer_support);
    if (j.contains("target_outer_values")) {
        const auto v = detail::get_field<std::vector<int>>(j, "target_outer_values", "env_config");
        require(v.size() == 2, "env_config: target_outer_values must have two entries");
        r.target_outer_values = {v[0], v[1]};
    }
    r.reward_min = detail::get_or(j, "reward_min", r.reward_min);
    r.reward_max = detail::get_or(j, "reward_max", r.reward_max);
    if (j.contains("click_cost_by_level")) {
        const auto c = detail::get_field<std::vector<int>>(j, "click_cost_by_level", "env_config");
        require(c.size() == 3, "env_config: click_cost_by_level must have three entries");
        std::copy(c.begin(), c.end(), env.click_cost_by_level.begin());
    }
    env.validate();
    return env;
}

inline EnvConfig load_env(const fs::path& path) { return env_from_json(read_json(path)); }

inline json to_json(const TrialGroundTruth& t) {
    return json{{"config_id", t.config_id},
                {"values", t.values},
                {"target_branch", t.target_branch},
                {"click_cost_by_level", t.click_cost_by_level}};
}

inline TrialGroundTruth ground_truth_from_json(const json& j, const std::string& where) {
    TrialGroundTruth t;
    t.config_id = detail::get_field<int>(j, "config_id", where);
    require(t.config_id >= 1 && t.config_id <= maze::kConfigs, where + ": config_id must lie in 1..6");
    const auto values = detail::get_field<std::vector<int>>(j, "values", where);
    require(values.size() == maze::kNodes, where + ": values must list one entry per node id 0..12");
    std::copy(values.begin(), values.end(), t.values.begin());
    require(t.values[0] == 0, where + ": the start node carries no value");
    t.target_branch = detail::get_field<int>(j, "target_branch", where);
    require(t.target_branch >= 0 && t.target_branch < maze::kBranches, where + ": target_branch out of range");
    if (j.contains("click_cost_by_level")) {
        const auto c = detail::get_field<std::vector<int>>(j, "click_cost_by_level", where);
        require(c.size() == 3, where + ": click_cost_by_level must have three entries");
        std::copy(c.begin(), c.end(), t.click_cost_by_level.begin());
    }
    return t;
}

inline json to_json(const TrialLog& log) {
    return json{{"participant_id", log.participant_id},
                {"trial_index", log.trial_index},
                {"ground_truth", to_json(log.ground_truth)},
                {"clicks", log.clicks},
                {"terminated", log.terminated},
                {"chosen_path", log.chosen_path},
                {"score", log.score},
                {"click_timestamps_ms", log.click_timestamps_ms},
                {"partial", log.partial}};
}

inline TrialLog trial_log_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": trial log must be a JSON object");
    TrialLog log;
    log.participant_id = detail::get_field<std::string>(j, "participant_id", where);
    log.trial_index = detail::get_field<int>(j, "trial_index", where);
    const std::string w = where + " trial " + std::to_string(log.trial_index);
    if (!j.contains("ground_truth")) throw ValidationError(w + ": missing field 'ground_truth'");
    log.ground_truth = ground_truth_from_json(j.at("ground_truth"), w);
    log.clicks = detail::get_field<std::vector<NodeId>>(j, "clicks", w);
    log.terminated = detail::get_field<bool>(j, "terminated", w);
    log.chosen_path = detail::get_or(j, "chosen_path", std::vector<NodeId>{});
    log.score = detail::get_field<int>(j, "score", w);
    log.click_timestamps_ms = detail::get_or(j, "click_timestamps_ms", std::vector<std::int64_t>{});
    log.partial = detail::get_or(j, "partial", false);
    require(log.click_timestamps_ms.empty() || log.click_timestamps_ms.size() == log.clicks.size(),
            w + ": click_timestamps_ms must be empty or match clicks");
    validate_log(log);
    if (log.terminated)
        require(log.score == compute_score(log.ground_truth, log.clicks, log.chosen_path),
                w + ": score does not equal the path sum minus click fees");
    return log;
}

inline json to_json(const std::vector<TrialLog>& logs) {
    json a = json::array();
    for (const auto& l : logs) a.push_back(to_json(l));
    return a;
}

inline std::vector<TrialLog> trial_logs_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw ValidationError(where + ": trial_log file must be a JSON array");
    std::vector<TrialLog> logs;
    for (const auto& e : j) logs.push_back(trial_log_from_json(e, where));
    return logs;
}

inline std::vector<TrialLog> load_trial_logs(const fs::path& path) {
    return trial_logs_from_json(read_json(path), path.string());
}

/// Splits a mixed log array into per-participant sequences ordered by trial index.
inline std::map<std::string, std::vector<TrialLog>> group_by_participant(std::vector<TrialLog> logs) {
    std::map<std::string, std::vector<TrialLog>> out;
    for (auto& l : logs) out[l.participant_id].push_back(std::move(l));
    for (auto& [p, v] : out)
        std::stable_sort(v.begin(), v.end(), [](const TrialLog& a, const TrialLog& b) { return a.trial_index < b.trial_index; });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Feature catalog

inline json feature_catalog_json() {
    json entries = json::array();
    const auto& cat = feature_catalog();
    for (int i = 0; i < kFeatureCount; ++i)
        entries.push_back({{"index", i},
                           {"name", cat[i].name},
                           {"group", to_string(cat[i].group)},
                           {"applies_to", to_string(cat[i].applies_to)}});
    return json{{"version", kFeatureCatalogVersion}, {"entries", entries}};
}

// ---------------------------------------------------------------------------------------------
// Model specs

inline std::string_view to_string(HabitScale h) { return h == HabitScale::counts ? "counts" : "rates"; }
inline std::string_view to_string(FeatureScaling s) { return s == FeatureScaling::none ? "none" : "range"; }

inline HabitScale parse_habit_scale(const std::string& s) {
    if (s == "counts") return HabitScale::counts;
    if (s == "rates") return HabitScale::rates;
    throw ValidationError("unknown habit_scale '" + s + "'");
}

inline FeatureScaling parse_feature_scaling(const std::string& s) {
    if (s == "none") return FeatureScaling::none;
    if (s == "range") return FeatureScaling::range;
    throw ValidationError("unknown feature_scaling '" + s + "'");
}

inline json strategy_set_json(const std::vector<StrategyId>& set) {
    json a = json::array();
    for (StrategyId s : set) a.push_back(to_string(s));
    return a;
}

inline std::vector<StrategyId> strategy_set_from_json(const json& j) {
    const json& list = j.is_object() ? j.at("strategies") : j;
    if (!list.is_array() || list.empty()) throw ValidationError("strategy set must be a non-empty array of names");
    std::vector<StrategyId> out;
    for (const auto& e : list) out.push_back(parse_strategy(e.get<std::string>()));
    return out;
}

inline json to_json(const ModelSpec& s) {
    json j;
    j["kind"] = to_string(s.kind);
    j["mask_version"] = kFeatureCatalogVersion;
    if (s.kind == ModelKind::rssl) {
        const RsslParams p = s.rssl.params();
        j["hyperparameters"] = {{"raw",
                                 {{"prior_mean", s.rssl.prior_mean},
                                  {"raw_prior_sd", s.rssl.raw_prior_sd},
                                  {"raw_noise_sd", s.rssl.raw_noise_sd},
                                  {"raw_lapse", s.rssl.raw_lapse}}},
                                {"transformed",
                                 {{"prior_mean", p.prior_mean},
                                  {"prior_var", p.prior_var},
                                  {"noise_var", p.noise_var},
                                  {"lapse", p.lapse}}}};
        j["strategy_set"] = strategy_set_json(s.strategies);
        return j;
    }
    const PolicyParams p = policy_params(s);
    json raw{{"learning_rate", s.reinforce.raw_learning_rate},
             {"gamma", s.reinforce.raw_gamma},
             {"temperature", s.reinforce.raw_temperature}};
    json tr{{"alpha", p.alpha}, {"gamma", p.gamma}, {"tau", p.tau}};
    j["hyperparameters"] = {{"raw", raw}, {"transformed", tr}};
    json w = json::object();
    const auto& cat = feature_catalog();
    for (int i = 0; i < kFeatureCount; ++i)
        if (p.mask[i]) w[std::string(cat[i].name)] = s.reinforce.weights[i];
    j["weights"] = w;
    j["credit_mode"] = to_string(s.credit_mode);
    j["terminal_reward"] = to_string(s.terminal_reward);
    j["frozen_lapse"] = s.frozen_lapse;
    j["habit_scale"] = to_string(s.habit_scale);
    j["feature_scaling"] = to_string(s.feature_scaling);
    return j;
}

/// `base_dir` resolves a relative "strategy_set_file". Hyperparameters are read from the raw
/// section; the transformed section is informational.
inline ModelSpec model_spec_from_json(const json& j, const fs::path& base_dir = {}) {
    if (!j.is_object()) throw ValidationError("model_spec must be a JSON object");
    const auto kind = parse_model_kind(detail::get_field<std::string>(j, "kind", "model_spec"));
    ModelSpec s = default_model_spec(kind);
    if (j.contains("mask_version"))
        require(j.at("mask_version").get<std::string>() == kFeatureCatalogVersion,
                "model_spec: mask_version does not match this build's feature catalog");
    const json raw = j.contains("hyperparameters") ? j.at("hyperparameters").value("raw", json::object()) : json::object();
    if (kind == ModelKind::rssl) {
        s.rssl.prior_mean = detail::get_or(raw, "prior_mean", s.rssl.prior_mean);
        s.rssl.raw_prior_sd = detail::get_or(raw, "raw_prior_sd", s.rssl.raw_prior_sd);
        s.rssl.raw_noise_sd = detail::get_or(raw, "raw_noise_sd", s.rssl.raw_noise_sd);
        s.rssl.raw_lapse = detail::get_or(raw, "raw_lapse", s.rssl.raw_lapse);
        if (j.contains("strategy_set")) s.strategies = strategy_set_from_json(j.at("strategy_set"));
        if (j.contains("strategy_set_file")) {
            fs::path f = j.at("strategy_set_file").get<std::string>();
            if (f.is_relative()) f = base_dir / f;
            s.strategies = strategy_set_from_json(read_json(f));
        }
        RsslState::initial(s.rssl.params(), s.strategies);  // validates
        return s;
    }
    s.reinforce.raw_learning_rate = detail::get_or(raw, "learning_rate", s.reinforce.raw_learning_rate);
    s.reinforce.raw_gamma = detail::get_or(raw, "gamma", s.reinforce.raw_gamma);
    s.reinforce.raw_temperature = detail::get_or(raw, "temperature", s.reinforce.raw_temperature);
    if (j.contains("weights")) {
        const json& w = j.at("weights");
        require(w.is_object(), "model_spec: weights must map feature names to numbers");
        s.reinforce.weights.fill(0.0);
        for (const auto& [name, v] : w.items()) {
            const int i = feature_index(name);
            if (i < 0) throw ValidationError("model_spec: unknown feature '" + name + "'");
            s.reinforce.weights[i] = v.get<double>();
        }
    }
    s.credit_mode = parse_credit_mode(detail::get_or<std::string>(j, "credit_mode", std::string(to_string(s.credit_mode))));
    s.terminal_reward =
        parse_terminal_reward(detail::get_or<std::string>(j, "terminal_reward", std::string(to_string(s.terminal_reward))));
    s.frozen_lapse = detail::get_or(j, "frozen_lapse", s.frozen_lapse);
    require(s.frozen_lapse >= 0.0 && s.frozen_lapse < 1.0, "model_spec: frozen_lapse must lie in [0, 1)");
    s.habit_scale = parse_habit_scale(detail::get_or<std::string>(j, "habit_scale", std::string(to_string(s.habit_scale))));
    s.feature_scaling =
        parse_feature_scaling(detail::get_or<std::string>(j, "feature_scaling", std::string(to_string(s.feature_scaling))));
    return s;
}

inline ModelSpec load_model_spec(const fs::path& path) {
    return model_spec_from_json(read_json(path), path.parent_path());
}

// ---------------------------------------------------------------------------------------------
// Fit results

/// Trace entries keep every log-likelihood; candidates are stored for improving entries
/// (enough to restart from any incumbent) unless `full_trace` is set.
inline json to_json(const FitResult& r, bool full_trace = false) {
    json trace = json::array();
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& t : r.trace) {
        json e{{"iteration", t.iteration}, {"loglik", finite_or_null(t.value)}, {"best_so_far", finite_or_null(t.best_so_far)}};
        if (full_trace || t.iteration == 0 || t.value > best) e["candidate"] = t.candidate;
        best = std::max(best, t.value);
        trace.push_back(std::move(e));
    }
    json params = json::object();
    for (std::size_t i = 0; i < r.parameter_names.size(); ++i) params[r.parameter_names[i]] = r.parameters[i];
    return json{{"participant_id", r.participant_id},
                {"model", to_string(r.kind)},
                {"log_likelihood", finite_or_null(r.log_likelihood)},
                {"n_observations", r.n_observations},
                {"k_params", r.k_params},
                {"bic", finite_or_null(r.bic)},
                {"seed", r.seed},
                {"optimizer", to_string(r.optimizer)},
                {"budget", r.budget},
                {"parameters", params},
                {"model_spec", to_json(r.spec)},
                {"trace", trace}};
}

inline FitResult fit_result_from_json(const json& j, const std::string& where) {
    FitResult r;
    r.participant_id = detail::get_field<std::string>(j, "participant_id", where);
    r.kind = parse_model_kind(detail::get_field<std::string>(j, "model", where));
    r.log_likelihood = number_or_neg_inf(j.at("log_likelihood"));
    r.n_observations = detail::get_field<long long>(j, "n_observations", where);
    r.k_params = detail::get_field<int>(j, "k_params", where);
    r.bic = j.at("bic").is_null() ? std::numeric_limits<double>::infinity() : j.at("bic").get<double>();
    r.seed = detail::get_field<std::uint64_t>(j, "seed", where);
    r.optimizer = parse_optimizer(detail::get_field<std::string>(j, "optimizer", where));
    r.budget = detail::get_field<int>(j, "budget", where);
    for (const auto& [name, v] : j.at("parameters").items()) {
        r.parameter_names.push_back(name);
        r.parameters.push_back(v.get<double>());
    }
    r.spec = model_spec_from_json(j.at("model_spec"));
    for (const auto& e : j.at("trace")) {
        TraceEntry t;
        t.iteration = e.at("iteration").get<int>();
        t.value = number_or_neg_inf(e.at("loglik"));
        t.best_so_far = number_or_neg_inf(e.at("best_so_far"));
        if (e.contains("candidate")) t.candidate = e.at("candidate").get<std::vector<double>>();
        r.trace.push_back(std::move(t));
    }
    return r;
}

// ---------------------------------------------------------------------------------------------
// Meta-MDP specs and solver reports

inline json to_json(const metamdp::MetaMdpSpec& spec) {
    json scenarios = json::array();
    for (const auto& s : spec.prior.scenarios()) {
        json nodes = json::array();
        for (const auto& d : s.nodes) nodes.push_back({{"values", d.values}, {"probs", d.probs}});
        scenarios.push_back({{"weight", s.weight}, {"nodes", nodes}});
    }
    return json{{"parent", spec.parent}, {"cost", spec.cost}, {"state_cap", spec.state_cap}, {"scenarios", scenarios}};
}

/// Either a general tree spec, or {"maze": env_config} for the three-branch maze.
inline metamdp::MetaMdpSpec metamdp_spec_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("metamdp_spec must be a JSON object");
    const double cap = detail::get_or(j, "state_cap", metamdp::kDefaultStateCap);
    if (j.contains("maze")) return metamdp::maze_spec(env_from_json(j.at("maze")), cap);
    metamdp::MetaMdpSpec spec;
    spec.parent = detail::get_field<std::vector<int>>(j, "parent", "metamdp_spec");
    spec.cost = detail::get_field<std::vector<double>>(j, "cost", "metamdp_spec");
    spec.state_cap = cap;
    std::vector<Scenario> scenarios;
    if (!j.contains("scenarios") || !j.at("scenarios").is_array())
        throw ValidationError("metamdp_spec: missing 'scenarios' array");
    for (const auto& sj : j.at("scenarios")) {
        Scenario s;
        s.weight = detail::get_or(sj, "weight", 1.0);
        for (const auto& nj : sj.at("nodes")) {
            DiscreteDistribution d;
            d.values = detail::get_field<std::vector<int>>(nj, "values", "metamdp_spec node");
            d.probs = detail::get_field<std::vector<double>>(nj, "probs", "metamdp_spec node");
            require(!d.values.empty() && d.values.size() == d.probs.size(), "metamdp_spec: node values/probs mismatch");
            double total = 0.0;
            for (double p : d.probs) {
                require(p >= 0.0, "metamdp_spec: negative probability");
                total += p;
            }
            require(std::abs(total - 1.0) < 1e-9, "metamdp_spec: node probabilities must sum to 1");
            s.nodes.push_back(std::move(d));
        }
        scenarios.push_back(std::move(s));
    }
    spec.prior = MixturePrior(std::move(scenarios));
    spec.validate();
    return spec;
}

struct SolverReport {
    double value = 0.0;
    std::size_t states = 0;
    double runtime_ms = 0.0;
    std::string policy_digest;
    double bellman_residual = 0.0;
    std::optional<metamdp::ConformanceReport> conformance;
    std::optional<double> rr_value;
    std::vector<std::pair<std::string, double>> strategy_values;
};

inline json to_json(const SolverReport& r) {
    json j{{"value", r.value},
           {"states", r.states},
           {"runtime_ms", r.runtime_ms},
           {"policy_digest", r.policy_digest},
           {"bellman_residual", r.bellman_residual}};
    if (r.conformance) {
        j["rr_conformance"] = {{"sequences", r.conformance->sequences},
                               {"adaptive", r.conformance->adaptive},
                               {"all_adaptive", r.conformance->all_adaptive()},
                               {"violations", r.conformance->violations},
                               {"summary", r.conformance->summary()}};
    }
    if (r.rr_value) {
        j["rr_policy_value"] = *r.rr_value;
        j["rr_value_gap"] = r.value - *r.rr_value;
    }
    if (!r.strategy_values.empty()) {
        json s = json::object();
        for (const auto& [name, v] : r.strategy_values) s[name] = v;
        j["strategy_values"] = s;
    }
    return j;
}

// ---------------------------------------------------------------------------------------------
// Tables

/// Column-named table; cells are kept as text so CSV and JSON emitters agree.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) {
        require(row.size() == columns.size(), "table row has the wrong number of cells");
        rows.push_back(std::move(row));
    }
    std::size_t column(const std::string& name) const {
        const auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) throw ValidationError("table has no column '" + name + "'");
        return static_cast<std::size_t>(it - columns.begin());
    }
};

inline std::string cell(double v) { return format_double(v); }
inline std::string cell(long long v) { return std::to_string(v); }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(std::size_t v) { return std::to_string(v); }
inline std::string cell(const std::string& v) { return v; }
inline std::string cell(std::string_view v) { return std::string(v); }
inline std::string cell(const char* v) { return v; }

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string to_csv(const Table& t) {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += csv_escape(cells[i]);
        }
        out += '\n';
    };
    line(t.columns);
    for (const auto& r : t.rows) line(r);
    return out;
}

inline Table parse_csv(std::string_view text, const std::string& where) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> rec;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = any = true;
        } else if (c == ',') {
            rec.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                rec.push_back(std::move(field));
                records.push_back(std::move(rec));
            }
            rec.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw ValidationError(where + ": unterminated quoted field");
    if (any || !field.empty()) {
        rec.push_back(std::move(field));
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw ValidationError(where + ": empty CSV");
    Table t;
    t.columns = records.front();
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].size() != t.columns.size())
            throw ValidationError(where + ": row " + std::to_string(i + 1) + " has " + std::to_string(records[i].size()) +
                                  " cells, expected " + std::to_string(t.columns.size()));
        t.rows.push_back(std::move(records[i]));
    }
    return t;
}

/// Rows as objects; cells that parse as numbers become numbers.
inline json to_json(const Table& t) {
    json a = json::array();
    for (const auto& r : t.rows) {
        json o = json::object();
        for (std::size_t i = 0; i < r.size(); ++i) {
            double v = 0.0;
            const auto res = std::from_chars(r[i].data(), r[i].data() + r[i].size(), v);
            if (!r[i].empty() && res.ec == std::errc() && res.ptr == r[i].data() + r[i].size())
                o[t.columns[i]] = v;
            else if (r[i] == "nan" || r[i] == "inf" || r[i] == "-inf")
                o[t.columns[i]] = nullptr;
            else
                o[t.columns[i]] = r[i];
        }
        a.push_back(std::move(o));
    }
    return json{{"columns", t.columns}, {"rows", a}};
}

inline Table table_from_json(const json& j) {
    Table t;
    t.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& o : j.at("rows")) {
        std::vector<std::string> row;
        for (const auto& c : t.columns) {
            const json& v = o.at(c);
            if (v.is_string()) row.push_back(v.get<std::string>());
            else if (v.is_null()) row.push_back("nan");
            else if (v.is_number_integer()) row.push_back(std::to_string(v.get<long long>()));
            else row.push_back(format_double(v.get<double>()));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

enum class Format { csv, json };

inline Format parse_format(const std::string& s) {
    if (s == "csv") return Format::csv;
    if (s == "json") return Format::json;
    throw ValidationError("unknown format '" + s + "' (expected csv or json)");
}

inline std::string extension(Format f) { return f == Format::csv ? ".csv" : ".json"; }

inline std::string render(const Table& t, Format f) { return f == Format::csv ? to_csv(t) : dump(to_json(t)); }

inline Table load_table(const fs::path& path) {
    const std::string text = read_file(path);
    if (path.extension() == ".json") return table_from_json(parse_json(text, path.string()));
    return parse_csv(text, path.string());
}

// ---------------------------------------------------------------------------------------------
// Domain tables

inline Table curves_table(const std::vector<stats::CurveRow>& rows) {
    Table t{{"trial", "n", "mean_score", "ci_lo", "ci_hi", "adaptive_prop", "adaptive_ci_lo", "adaptive_ci_hi"}, {}};
    for (const auto& r : rows)
        t.add({cell(r.trial), cell(r.n), cell(r.mean_score), cell(r.ci_lo), cell(r.ci_hi), cell(r.adaptive_prop),
               cell(r.adaptive_ci_lo), cell(r.adaptive_ci_hi)});
    return t;
}

inline std::vector<stats::CurveRow> curves_from_table(const Table& t) {
    std::vector<stats::CurveRow> out;
    const auto tr = t.column("trial"), ms = t.column("mean_score"), ad = t.column("adaptive_prop");
    for (const auto& r : t.rows) {
        stats::CurveRow c;
        c.trial = std::stoi(r[tr]);
        c.mean_score = parse_double(r[ms]);
        c.adaptive_prop = parse_double(r[ad]);
        auto opt = [&](const char* name, double& field) {
            if (std::find(t.columns.begin(), t.columns.end(), name) != t.columns.end()) field = parse_double(r[t.column(name)]);
        };
        double n = 0.0;
        opt("n", n);
        c.n = static_cast<std::size_t>(n);
        opt("ci_lo", c.ci_lo);
        opt("ci_hi", c.ci_hi);
        opt("adaptive_ci_lo", c.adaptive_ci_lo);
        opt("adaptive_ci_hi", c.adaptive_ci_hi);
        out.push_back(c);
    }
    return out;
}

inline Table fit_manifest_table(const std::vector<FitManifestRow>& rows) {
    Table t{{"participant", "model", "loglik", "k", "n", "bic", "wall_time"}, {}};
    for (const auto& r : rows)
        t.add({r.participant, r.model, cell(r.loglik), cell(r.k), cell(r.n), cell(r.bic), cell(r.wall_time)});
    return t;
}

inline std::vector<FitManifestRow> fit_manifest_from_table(const Table& t, const std::string& where = "fit manifest") {
    std::vector<FitManifestRow> out;
    const auto p = t.column("participant"), m = t.column("model"), ll = t.column("loglik"), k = t.column("k"),
               n = t.column("n"), b = t.column("bic");
    const bool has_wall = std::find(t.columns.begin(), t.columns.end(), "wall_time") != t.columns.end();
    for (const auto& r : t.rows) {
        FitManifestRow row;
        row.participant = r[p];
        row.model = std::string(to_string(parse_model_kind(r[m])));
        try {
            row.loglik = parse_double(r[ll]);
            row.k = std::stoi(r[k]);
            row.n = std::stoll(r[n]);
            row.bic = parse_double(r[b]);
            if (has_wall) row.wall_time = parse_double(r[t.column("wall_time")]);
        } catch (const std::logic_error&) {
            throw ValidationError(where + ": malformed numeric cell for participant " + row.participant);
        }
        out.push_back(std::move(row));
    }
    return out;
}

inline FitManifestRow manifest_row(const FitResult& r) {
    return {r.participant_id, std::string(to_string(r.kind)), r.log_likelihood, r.k_params, r.n_observations, r.bic,
            r.wall_time_s};
}

/// Mirrors the family / r / phi layout of a BMS results table.
inline Table bms_table(const BmsResult& r) {
    Table t{{"level", "family", "alpha", "r", "phi", "phi_mc_se"}, {}};
    for (std::size_t k = 0; k < r.families.size(); ++k)
        t.add({cell(r.level), r.families[k], cell(r.alpha[k]), cell(r.r[k]), cell(r.phi[k]), cell(r.phi_mc_se[k])});
    return t;
}

inline json to_json(const BmsResult& r, std::size_t participants) {
    json fams = json::array();
    for (std::size_t k = 0; k < r.families.size(); ++k)
        fams.push_back({{"family", r.families[k]},
                        {"alpha", r.alpha[k]},
                        {"r", r.r[k]},
                        {"phi", r.phi[k]},
                        {"phi_mc_se", r.phi_mc_se[k]}});
    return json{{"level", r.level},
                {"participants", participants},
                {"iterations", r.iterations},
                {"mc_draws", r.mc_draws},
                {"evidence", "-BIC/2"},
                {"families", fams}};
}

inline Table mann_kendall_table(const std::vector<std::pair<std::string, stats::MannKendallResult>>& rows) {
    Table t{{"series", "n", "S", "variance", "z", "p"}, {}};
    for (const auto& [name, r] : rows) t.add({name, cell(r.n), cell(r.S), cell(r.variance), cell(r.z), cell(r.p)});
    return t;
}

inline Table regression_table(const std::string& model, const std::vector<stats::RegressionTerm>& terms) {
    Table t{{"model", "term", "coef", "std_err", "stat", "p", "ci_lo", "ci_hi"}, {}};
    for (const auto& r : terms)
        t.add({model, r.name, cell(r.coef), cell(r.std_err), cell(r.stat), cell(r.p), cell(r.ci_lo), cell(r.ci_hi)});
    return t;
}

}  // namespace mcrl::io
