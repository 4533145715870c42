#pragma once

// Subcommand implementations behind the mcrl command-line tool. Each returns the run manifest
// it wrote; errors surface as ValidationError / IncompleteInputError.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "mcrl/digest.hpp"
#include "mcrl/io.hpp"
#include "mcrl/model.hpp"

namespace mcrl::cli {

using io::json;
namespace fs = std::filesystem;

/// Relative paths are taken relative to $MCRL_DATA_ROOT when it is set.
inline fs::path resolve(const fs::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    if (const char* root = std::getenv("MCRL_DATA_ROOT"); root && *root) return fs::path(root) / p;
    return p;
}

inline std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    return out.empty() ? "_" : out;
}

/// Record of one invocation. Outputs are listed with SHA-256 digests; timing is kept apart
/// from everything that is hashed.
class RunManifest {
public:
    explicit RunManifest(std::string command, fs::path out_dir)
        : command_(std::move(command)), out_dir_(std::move(out_dir)), t0_(std::chrono::steady_clock::now()) {}

    void arg(const std::string& k, json v) { args_[k] = std::move(v); }
    void seed(const std::string& k, std::uint64_t v) { seeds_[k] = v; }

    void input(const fs::path& p) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::recursive_directory_iterator(p))
                if (e.is_regular_file()) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) inputs_[f.string()] = sha256_file(f.string());
        } else {
            inputs_[p.string()] = sha256_file(p.string());
        }
    }

    /// Writes `content` atomically under the output directory and records its digest.
    void write(const fs::path& rel, std::string_view content) {
        io::write_file_atomic(out_dir_ / rel, content);
        std::lock_guard g(mu_);
        outputs_[rel.generic_string()] = sha256_hex(content);
    }

    void note_existing(const fs::path& rel) {
        std::lock_guard g(mu_);
        outputs_[rel.generic_string()] = sha256_file((out_dir_ / rel).string());
    }

    const std::map<std::string, std::string>& outputs() const { return outputs_; }

    json finish() {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        json outs = json::array();
        for (const auto& [p, h] : outputs_) outs.push_back({{"path", p}, {"sha256", h}});
        json ins = json::array();
        for (const auto& [p, h] : inputs_) ins.push_back({{"path", p}, {"sha256", h}});
        json m{{"command", command_},
               {"arguments", args_},
               {"seeds", seeds_},
               {"inputs", ins},
               {"outputs", outs},
               {"timing", {{"wall_time_s", wall}}}};
        io::write_file_atomic(out_dir_ / "manifest.json", io::dump(m));
        return m;
    }

private:
    std::string command_;
    fs::path out_dir_;
    std::chrono::steady_clock::time_point t0_;
    json args_ = json::object();
    std::map<std::string, std::uint64_t> seeds_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
    std::mutex mu_;
};

inline void progress(const std::string& msg) { std::cerr << msg << "\n"; }

/// A model spec argument is either a model_spec.json path or a bare model kind name.
inline ModelSpec load_model_argument(const std::string& arg) {
    const fs::path p = resolve(arg);
    if (fs::exists(p)) return io::load_model_spec(p);
    try {
        return default_model_spec(parse_model_kind(arg));
    } catch (const ValidationError&) {
        throw ValidationError("model spec '" + arg + "' is neither a readable file nor a model kind");
    }
}

inline EnvConfig load_env_argument(const std::string& arg) { return arg.empty() ? EnvConfig{} : io::load_env(resolve(arg)); }

inline std::vector<std::pair<std::string, stats::MannKendallResult>> curve_trends(const std::string& prefix,
                                                                               const std::vector<stats::CurveRow>& rows) {
    std::vector<double> adaptive, score;
    for (const auto& r : rows) {
        adaptive.push_back(r.adaptive_prop);
        score.push_back(r.mean_score);
    }
    std::vector<std::pair<std::string, stats::MannKendallResult>> out;
    if (rows.size() < 3) return out;
    out.emplace_back(prefix + "adaptive_prop", stats::mann_kendall(adaptive));
    out.emplace_back(prefix + "mean_score", stats::mann_kendall(score));
    return out;
}

// ---------------------------------------------------------------------------------------------
// simulate

struct SimulateOptions {
    std::string model_spec;
    std::string env_config;
    int runs = 200;
    int trials = 120;
    std::uint64_t seed = 0;
    fs::path out;
    io::Format format = io::Format::csv;
    bool write_logs = true;
    int threads = 1;
    std::string id_prefix = "run";  // participant ids are prefix + run number
};

inline json simulate(const SimulateOptions& o) {
    const ModelSpec spec = load_model_argument(o.model_spec);
    const EnvConfig env = load_env_argument(o.env_config);
    const fs::path out = resolve(o.out);
    require(!out.empty(), "simulate needs --out");
    RunManifest m("simulate", out);
    if (fs::exists(resolve(o.model_spec))) m.input(resolve(o.model_spec));
    if (!o.env_config.empty()) m.input(resolve(o.env_config));
    m.arg("model_spec", o.model_spec);
    m.arg("env_config", o.env_config);
    m.arg("runs", o.runs);
    m.arg("trials", o.trials);
    m.arg("format", o.format == io::Format::csv ? "csv" : "json");
    m.arg("id_prefix", o.id_prefix);
    m.seed("seed", o.seed);
    m.write("model_spec.json", io::dump(io::to_json(spec)));
    m.write("env_config.json", io::dump(io::to_json(env)));
    const auto sim = run_simulation(spec, env, o.runs, o.trials, o.seed, o.write_logs, o.threads, o.id_prefix);
    m.write("curves" + io::extension(o.format), io::render(io::curves_table(sim.rows), o.format));
    m.write("trend" + io::extension(o.format), io::render(io::mann_kendall_table(curve_trends("", sim.rows)), o.format));
    if (o.write_logs) {
        for (std::size_t r = 0; r < sim.runs.size(); ++r) {
            char name[32];
            std::snprintf(name, sizeof name, "logs/run%04zu.json", r);
            m.write(name, io::dump(io::to_json(sim.runs[r])));
        }
    }
    return m.finish();
}

// ---------------------------------------------------------------------------------------------
// certify

struct CertifyOptions {
    std::string spec;  // metamdp_spec.json; empty = reduced maze
    fs::path out;
    io::Format format = io::Format::json;
    bool strategy_values = true;
};

inline io::SolverReport certify_report(const metamdp::MetaMdpSpec& spec, bool with_strategies) {
    const auto sol = metamdp::solve(spec);
    io::SolverReport rep;
    rep.value = sol.value;
    rep.states = sol.states;
    rep.runtime_ms = sol.runtime_ms;
    rep.policy_digest = sol.digest;
    rep.bellman_residual = metamdp::bellman_residual(spec, sol);
    if (spec.node_count() == maze::kNodes) {
        rep.conformance = metamdp::rr_conformance(spec, sol);
        rep.rr_value = metamdp::policy_value(spec, metamdp::strategy_policy(StrategyId::resource_rational));
        if (with_strategies)
            for (StrategyId s : kDefaultStrategySet)
                rep.strategy_values.emplace_back(std::string(to_string(s)),
                                                 metamdp::policy_value(spec, metamdp::strategy_policy(s)));
    }
    return rep;
}

inline json certify(const CertifyOptions& o) {
    const fs::path out = resolve(o.out);
    require(!out.empty(), "certify needs --out");
    RunManifest m("certify", out);
    metamdp::MetaMdpSpec spec;
    if (o.spec.empty()) {
        spec = metamdp::reduced_maze_spec();
    } else {
        m.input(resolve(o.spec));
        spec = io::metamdp_spec_from_json(io::read_json(resolve(o.spec)));
    }
    m.arg("spec", o.spec.empty() ? json("reduced_maze") : json(o.spec));
    m.write("metamdp_spec.json", io::dump(io::to_json(spec)));
    const auto rep = certify_report(spec, o.strategy_values);
    json report = io::to_json(rep);
    report.erase("runtime_ms");  // timing goes to the manifest so the report stays byte-stable
    m.write("solver_report.json", io::dump(report));
    if (!rep.strategy_values.empty()) {
        io::Table t{{"strategy", "policy_value", "gap_to_optimal"}, {}};
        for (const auto& [name, v] : rep.strategy_values) t.add({name, io::cell(v), io::cell(rep.value - v)});
        m.write("strategy_values" + io::extension(o.format), io::render(t, o.format));
    }
    json man = m.finish();
    man["solver_runtime_ms"] = rep.runtime_ms;
    man["summary"] = rep.conformance ? rep.conformance->summary() : std::string("value ") + io::format_double(rep.value);
    return man;
}

// ---------------------------------------------------------------------------------------------
// fit

struct FitCommandOptions {
    fs::path logs_dir;
    std::string models = "all";
    int budget = 3000;
    OptimizerKind optimizer = OptimizerKind::parzen_estimator;
    std::uint64_t seed = 0;
    fs::path out;
    std::string env_config;
    io::Format format = io::Format::csv;
    int threads = 1;
};

inline std::vector<ModelKind> parse_model_list(const std::string& s) {
    if (s == "all") return {kAllModelKinds.begin(), kAllModelKinds.end()};
    std::vector<ModelKind> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(parse_model_kind(item));
    require(!out.empty(), "--models lists no models");
    return out;
}

/// Every participant found in the *.json trial-log files of `dir` (or in a single file).
inline std::map<std::string, std::vector<TrialLog>> load_participants(const fs::path& dir) {
    std::vector<fs::path> files;
    if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    } else if (fs::is_regular_file(dir)) {
        files.push_back(dir);
    } else {
        throw ValidationError("logs path " + dir.string() + " does not exist");
    }
    std::sort(files.begin(), files.end());
    std::map<std::string, std::vector<TrialLog>> out;
    for (const auto& f : files) {
        for (auto& [pid, logs] : io::group_by_participant(io::load_trial_logs(f))) {
            if (out.count(pid)) throw ValidationError("participant " + pid + " appears in more than one file");
            validate_sequence(logs);
            out[pid] = std::move(logs);
        }
    }
    if (out.empty()) throw IncompleteInputError("no participant logs found in " + dir.string());
    return out;
}

inline std::uint64_t fit_seed(std::uint64_t base, const std::string& participant, ModelKind kind) {
    return derive_seed(base, participant + "/" + std::string(to_string(kind)));
}

inline json fit(const FitCommandOptions& o) {
    const fs::path out = resolve(o.out);
    require(!out.empty(), "fit needs --out");
    require(o.budget >= 1, "--budget must be >= 1");
    const auto participants = load_participants(resolve(o.logs_dir));
    const auto models = parse_model_list(o.models);
    const EnvConfig env = load_env_argument(o.env_config);
    RunManifest m("fit", out);
    m.input(resolve(o.logs_dir));
    m.arg("logs_dir", o.logs_dir.string());
    m.arg("models", o.models);
    m.arg("budget", o.budget);
    m.arg("optimizer", to_string(o.optimizer));
    m.seed("seed", o.seed);

    struct Job {
        std::string participant;
        ModelKind kind;
    };
    std::vector<Job> jobs;
    for (const auto& [pid, logs] : participants)
        for (ModelKind k : models) jobs.push_back({pid, k});
    std::vector<FitManifestRow> rows(jobs.size());
    std::vector<char> done(jobs.size(), 0);
    std::mutex mu;
    const std::string manifest_name = "fit_manifest" + io::extension(o.format);
    auto write_manifest = [&] {
        std::vector<FitManifestRow> finished;
        for (std::size_t i = 0; i < jobs.size(); ++i)
            if (done[i]) finished.push_back(rows[i]);
        m.write(manifest_name, io::render(io::fit_manifest_table(finished), o.format));
    };
    // Finished fits recorded by an earlier run keep their manifest row (and wall time).
    std::map<std::pair<std::string, std::string>, FitManifestRow> previous;
    if (fs::exists(out / manifest_name))
        for (auto& r : io::fit_manifest_from_table(io::load_table(out / manifest_name))) previous[{r.participant, r.model}] = r;

    int skipped = 0;
    parallel_for(static_cast<int>(jobs.size()), o.threads, [&](int i) {
        const Job& job = jobs[i];
        const std::string model(to_string(job.kind));
        const fs::path rel = fs::path("fits") / (sanitize(job.participant) + "__" + model + ".json");
        const std::uint64_t seed = fit_seed(o.seed, job.participant, job.kind);
        if (fs::exists(out / rel)) {
            try {
                const FitResult prev = io::fit_result_from_json(io::read_json(out / rel), (out / rel).string());
                if (prev.seed == seed && prev.budget == o.budget && prev.optimizer == o.optimizer &&
                    prev.participant_id == job.participant) {
                    FitManifestRow row = io::manifest_row(prev);
                    if (const auto it = previous.find({job.participant, model}); it != previous.end())
                        row.wall_time = it->second.wall_time;
                    std::lock_guard g(mu);
                    m.note_existing(rel);
                    rows[i] = row;
                    done[i] = 1;
                    ++skipped;
                    return;
                }
            } catch (const std::exception&) {
                // unreadable or stale result: refit
            }
        }
        FitOptions fo;
        fo.optimizer = o.optimizer;
        fo.budget = o.budget;
        fo.seed = seed;
        ParticipantData local(participants.at(job.participant), env);
        const FitResult r = fit_participant(job.kind, local, fo);
        m.write(rel, io::dump(io::to_json(r)));
        std::lock_guard g(mu);
        rows[i] = io::manifest_row(r);
        done[i] = 1;
        write_manifest();
        progress("fit " + job.participant + " " + model + " loglik " + io::format_double(r.log_likelihood) + " bic " +
                 io::format_double(r.bic));
    });
    write_manifest();
    json man = m.finish();
    man["skipped"] = skipped;
    return man;
}

// ---------------------------------------------------------------------------------------------
// select

struct SelectOptions {
    fs::path manifest;
    std::vector<int> levels{1, 2, 3};
    fs::path out;
    io::Format format = io::Format::csv;
    int mc_draws = 100000;
    std::uint64_t seed = 0;
};

inline json select(const SelectOptions& o) {
    const fs::path out = resolve(o.out);
    require(!out.empty(), "select needs --out");
    const auto rows = io::fit_manifest_from_table(io::load_table(resolve(o.manifest)), resolve(o.manifest).string());
    require(!rows.empty(), "fit manifest has no rows");
    RunManifest m("select", out);
    m.input(resolve(o.manifest));
    m.arg("manifest", o.manifest.string());
    m.arg("levels", o.levels);
    m.arg("mc_draws", o.mc_draws);
    m.seed("seed", o.seed);
    json results = json::object();
    for (int level : o.levels) {
        const BmsInput in = bms_input_from_manifest(rows, level);
        const BmsResult r = bms(in, o.mc_draws, derive_seed(o.seed, static_cast<std::uint64_t>(level)));
        const std::string base = "bms_level" + std::to_string(level);
        m.write(base + ".json", io::dump(io::to_json(r, in.participants.size())));
        if (o.format == io::Format::csv) m.write(base + ".csv", io::to_csv(io::bms_table(r)));
        results[std::to_string(level)] = io::to_json(r, in.participants.size());
    }
    const auto best = group_by_best_bic(rows, all_model_names());
    io::Table g{{"participant", "best_model", "bic"}, {}};
    for (const auto& [p, model] : best) {
        double b = 0.0;
        for (const auto& r : rows)
            if (r.participant == p && r.model == model) b = r.bic;
        g.add({p, model, io::cell(b)});
    }
    m.write("grouping" + io::extension(o.format), io::render(g, o.format));
    json man = m.finish();
    man["results"] = results;
    return man;
}

// ---------------------------------------------------------------------------------------------
// analyze

enum class Grouping { best_bic, all_nodes_first_trial };

inline Grouping parse_grouping(const std::string& s) {
    if (s == "best_bic") return Grouping::best_bic;
    if (s == "all_nodes_first_trial") return Grouping::all_nodes_first_trial;
    throw ValidationError("unknown grouping '" + s + "' (expected best_bic or all_nodes_first_trial)");
}

struct AnalyzeOptions {
    fs::path input;     // logs directory / file, or a curves table
    fs::path fits;      // optional fit manifest for best-BIC grouping
    Grouping grouping = Grouping::best_bic;
    fs::path out;
    io::Format format = io::Format::csv;
};

/// Group label per participant. Without a fit manifest everyone is in "all"; with the
/// all-nodes split, the habit group (or "all") is divided by first-trial behaviour.
inline std::map<std::string, std::string> assign_groups(const std::map<std::string, std::vector<TrialLog>>& participants,
                                                        const std::vector<FitManifestRow>* fits, Grouping grouping) {
    std::map<std::string, std::string> best;
    if (fits) {
        std::set<std::string> present;
        for (const auto& r : *fits) present.insert(r.model);
        best = group_by_best_bic(*fits, {present.begin(), present.end()});
    }
    std::map<std::string, std::string> out;
    for (const auto& [pid, logs] : participants) {
        std::string g = "all";
        if (fits) {
            const auto it = best.find(pid);
            g = it == best.end() ? "unfitted" : it->second;
        }
        if (grouping == Grouping::all_nodes_first_trial && (g == "all" || g == "mental_habit"))
            g += stats::examined_all_nodes_first_trial(logs) ? ":all_nodes_first_trial" : ":other";
        out[pid] = g;
    }
    return out;
}

inline json analyze(const AnalyzeOptions& o) {
    const fs::path out = resolve(o.out);
    require(!out.empty(), "analyze needs --out");
    const fs::path input = resolve(o.input);
    RunManifest m("analyze", out);
    m.input(input);
    m.arg("input", o.input.string());
    m.arg("grouping", o.grouping == Grouping::best_bic ? "best_bic" : "all_nodes_first_trial");
    const std::string ext = io::extension(o.format);
    std::vector<std::pair<std::string, stats::MannKendallResult>> trends;

    bool curves_input = false;
    if (fs::is_regular_file(input)) {
        if (input.extension() != ".json") {
            curves_input = true;
        } else {
            const json j = io::read_json(input);
            curves_input = j.is_object() && j.contains("columns");
        }
    }
    if (curves_input) {
        const auto rows = io::curves_from_table(io::load_table(input));
        trends = curve_trends("", rows);
        m.write("trends" + ext, io::render(io::mann_kendall_table(trends), o.format));
        return m.finish();
    }

    const auto participants = load_participants(input);
    std::vector<FitManifestRow> fit_rows;
    if (!o.fits.empty()) {
        m.input(resolve(o.fits));
        fit_rows = io::fit_manifest_from_table(io::load_table(resolve(o.fits)));
    }
    const auto groups = assign_groups(participants, o.fits.empty() ? nullptr : &fit_rows, o.grouping);

    io::Table pt{{"participant", "group", "trials", "examined_all_nodes_first_trial", "adaptive_trials", "mean_score"}, {}};
    std::map<std::string, std::vector<std::vector<TrialLog>>> by_group;
    for (const auto& [pid, logs] : participants) {
        int adaptive = 0;
        double total = 0.0;
        for (const auto& l : logs) {
            adaptive += classify_adaptive(l) ? 1 : 0;
            total += l.score;
        }
        pt.add({pid, groups.at(pid), io::cell(logs.size()), stats::examined_all_nodes_first_trial(logs) ? "true" : "false",
                io::cell(adaptive), io::cell(total / static_cast<double>(logs.size()))});
        by_group[groups.at(pid)].push_back(logs);
    }
    m.write("participants" + ext, io::render(pt, o.format));

    std::vector<std::vector<TrialLog>> everyone;
    for (const auto& [pid, logs] : participants) everyone.push_back(logs);
    std::map<std::string, std::vector<stats::CurveRow>> group_curves;
    group_curves["all"] = stats::curves(everyone);
    for (const auto& [g, members] : by_group)
        if (g != "all") group_curves[g] = stats::curves(members);
    for (const auto& [g, rows] : group_curves) {
        m.write("curves_" + sanitize(g) + ext, io::render(io::curves_table(rows), o.format));
        for (auto& t : curve_trends(g + ":", rows)) trends.push_back(std::move(t));
    }
    m.write("trends" + ext, io::render(io::mann_kendall_table(trends), o.format));

    // Logistic trend of the adaptive flag, pooled and per participant, for each group.
    io::Table logit{{"model", "term", "coef", "std_err", "stat", "p", "ci_lo", "ci_hi"}, {}};
    io::Table per{{"participant", "group", "intercept", "slope", "slope_p", "error"}, {}};
    auto flags_of = [](const std::vector<TrialLog>& logs) {
        std::vector<int> f;
        for (const auto& l : logs) f.push_back(classify_adaptive(l) ? 1 : 0);
        return f;
    };
    std::map<std::string, std::vector<std::string>> members;
    for (const auto& [pid, g] : groups) members[g].push_back(pid);
    members["all"].clear();
    for (const auto& [pid, g] : groups) members["all"].push_back(pid);
    for (const auto& [g, pids] : members) {
        std::vector<std::vector<int>> flags;
        for (const auto& p : pids) flags.push_back(flags_of(participants.at(p)));
        try {
            const auto r = stats::pooled_logistic_trend(flags);
            for (const auto& row : io::regression_table("pooled:" + g, r.terms).rows) logit.add(row);
        } catch (const ValidationError& e) {
            logit.add({"pooled:" + g, "error", "nan", "nan", "nan", "nan", "nan", "nan"});
        }
        if (g == "all") {
            const auto pp = stats::per_participant_logistic_trend(flags);
            for (std::size_t i = 0; i < pp.size(); ++i) {
                if (pp[i].fit)
                    per.add({pids[i], groups.at(pids[i]), io::cell(pp[i].fit->terms[0].coef), io::cell(pp[i].fit->terms[1].coef),
                             io::cell(pp[i].fit->terms[1].p), ""});
                else
                    per.add({pids[i], groups.at(pids[i]), "nan", "nan", "nan", pp[i].error});
            }
        }
    }
    m.write("logistic" + ext, io::render(logit, o.format));
    m.write("logistic_participants" + ext, io::render(per, o.format));

    // Pooled OLS (approximation of a mixed-effects trend model) across groups.
    std::map<std::string, std::vector<double>> prop, score;
    for (const auto& [g, rows] : group_curves) {
        if (g == "all") continue;
        for (const auto& r : rows) {
            prop[g].push_back(r.adaptive_prop);
            score[g].push_back(r.mean_score);
        }
    }
    io::Table reg{{"model", "term", "coef", "std_err", "stat", "p", "ci_lo", "ci_hi"}, {}};
    if (prop.size() >= 2) {
        for (const auto& [name, series] : {std::pair{"pooled_ols_approx:adaptive_prop", &prop},
                                           std::pair{"pooled_ols_approx:mean_score", &score}}) {
            try {
                const auto r = stats::pooled_trend_regression(*series);
                for (const auto& row : io::regression_table(name, r.terms).rows) reg.add(row);
            } catch (const ValidationError& e) {
                reg.add({name, "error", "nan", "nan", "nan", "nan", "nan", "nan"});
            }
        }
    }
    m.write("regression" + ext, io::render(reg, o.format));
    return m.finish();
}

// ---------------------------------------------------------------------------------------------
// catalog

inline json catalog(const fs::path& out_dir, io::Format format) {
    const fs::path out = resolve(out_dir);
    require(!out.empty(), "catalog needs --out");
    RunManifest m("catalog", out);
    const json cat = io::feature_catalog_json();
    m.write("feature_catalog.json", io::dump(cat));
    if (format == io::Format::csv) {
        io::Table t{{"index", "name", "group", "applies_to"}, {}};
        for (const auto& e : cat.at("entries"))
            t.add({io::cell(e.at("index").get<int>()), e.at("name").get<std::string>(), e.at("group").get<std::string>(),
                   e.at("applies_to").get<std::string>()});
        m.write("feature_catalog.csv", io::to_csv(t));
    }
    return m.finish();
}

}  // namespace mcrl::cli
