#pragma once

// Model specifications and batch simulation of simulated participants.

#include <atomic>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mcrl/discovery_params.hpp"
#include "mcrl/policy.hpp"
#include "mcrl/rng.hpp"
#include "mcrl/rssl.hpp"
#include "mcrl/stats.hpp"

namespace mcrl {

struct ModelSpec {
    ModelKind kind = ModelKind::hybrid_reinforce;
    ReinforceHyper reinforce;
    RsslHyper rssl;
    CreditMode credit_mode = CreditMode::immediate;
    TerminalReward terminal_reward = TerminalReward::realized;
    double frozen_lapse = kDefaultFrozenLapse;
    HabitScale habit_scale = HabitScale::rates;
    FeatureScaling feature_scaling = FeatureScaling::range;
    std::vector<StrategyId> strategies{kDefaultStrategySet.begin(), kDefaultStrategySet.end()};
};

inline PolicyParams policy_params(const ModelSpec& spec) {
    PolicyParams p = make_model(spec.kind, spec.reinforce, spec.credit_mode);
    p.terminal_reward = spec.terminal_reward;
    if (p.frozen) p.lapse = spec.frozen_lapse;
    return p;
}

inline FeatureContext feature_context(const EnvConfig& env, const ModelSpec& spec) {
    return FeatureContext(env, spec.habit_scale, spec.feature_scaling);
}

/// Reference hyperparameters for each model kind; frozen kinds reuse the model-free weights.
inline ModelSpec default_model_spec(ModelKind kind) {
    ModelSpec s;
    s.kind = kind;
    s.reinforce = kind == ModelKind::hybrid_reinforce ? hybrid_discovery_hyper() : model_free_discovery_hyper();
    return s;
}

struct SimulatedParticipant {
    std::vector<TrialLog> logs;
    double log_prob = 0.0;  // sum of the generator's own step log-probabilities
    PolicyParams final_params;
};

inline SimulatedParticipant simulate_participant(const ModelSpec& spec, const EnvConfig& env, int n_trials,
                                                 std::uint64_t seed, const std::string& participant_id = "sim") {
    require(n_trials >= 1, "n_trials must be >= 1");
    Rng rng(seed);
    SimulatedParticipant out;
    const FeatureContext ctx = feature_context(env, spec);
    if (spec.kind == ModelKind::rssl) {
        RsslState state = RsslState::initial(spec.rssl.params(), spec.strategies);
        for (int t = 0; t < n_trials; ++t) {
            const auto truth = generate_trial(env, rng);
            auto ep = rssl_sample_episode(state, truth, t, ctx, rng);
            ep.log.participant_id = participant_id;
            out.log_prob += ep.log_prob;
            state = rssl_update(state, ep.strategy, ep.log.score);
            out.logs.push_back(std::move(ep.log));
        }
        return out;
    }
    PolicyParams p = policy_params(spec);
    BeliefState belief;
    for (int t = 0; t < n_trials; ++t) {
        const auto truth = generate_trial(env, rng);
        Episode ep = sample_episode(p, truth, belief, ctx, rng);
        ep.log.participant_id = participant_id;
        for (const auto& s : ep.trajectory.steps) out.log_prob += s.log_prob;
        if (!p.frozen) p = reinforce_update(p, ep.trajectory);
        belief = commit_trial(belief, ep.log);
        out.logs.push_back(std::move(ep.log));
    }
    out.final_params = p;
    return out;
}

struct SimulationResult {
    std::vector<stats::CurveRow> rows;
    std::vector<std::vector<TrialLog>> runs;  // kept only when requested
};

/// Runs `n_tasks` independent jobs on up to `threads` workers; each job writes only its own slot.
template <class F>
void parallel_for(int n_tasks, int threads, F&& job) {
    threads = std::max(1, std::min(threads, n_tasks));
    if (threads == 1) {
        for (int i = 0; i < n_tasks; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (int i; (i = next++) < n_tasks;) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard g(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

inline int default_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

/// Independent replicates seeded by derive_seed(seed, run); per-trial aggregation with 95% CIs.
/// Results do not depend on `threads`.
inline SimulationResult run_simulation(const ModelSpec& spec, const EnvConfig& env, int n_runs, int n_trials,
                                       std::uint64_t seed, bool keep_logs = false, int threads = 1,
                                       const std::string& id_prefix = "run") {
    require(n_runs >= 1 && n_trials >= 1, "n_runs and n_trials must be >= 1");
    std::vector<std::vector<double>> scores(n_runs);
    std::vector<std::vector<int>> adaptive(n_runs);
    SimulationResult out;
    if (keep_logs) out.runs.resize(n_runs);
    parallel_for(n_runs, threads, [&](int r) {
        auto sim = simulate_participant(spec, env, n_trials, derive_seed(seed, static_cast<std::uint64_t>(r)),
                                        id_prefix + std::to_string(r));
        for (const auto& log : sim.logs) {
            scores[r].push_back(log.score);
            adaptive[r].push_back(classify_adaptive(log) ? 1 : 0);
        }
        if (keep_logs) out.runs[r] = std::move(sim.logs);
    });
    out.rows = stats::curves(scores, adaptive);
    return out;
}

}  // namespace mcrl
