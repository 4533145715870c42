#pragma once

// Maximum-likelihood fitting of the models to a participant's click sequences.
//
// Beliefs (including the habitual counters) are determined by the participant's own clicks, so the
// feature matrices of every step are computed once per participant and reused by every candidate.

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mcrl/model.hpp"
#include "mcrl/optimize.hpp"

namespace mcrl {

inline double bic(double loglik, int k, long long n) {
    if (n < 1) throw ValidationError("bic: n_observations must be >= 1");
    if (k < 0) throw ValidationError("bic: k must be >= 0");
    return static_cast<double>(k) * std::log(static_cast<double>(n)) - 2.0 * loglik;
}

/// Every predicted event: each click plus the termination of each finished trial.
inline long long count_observations(const std::vector<TrialLog>& logs) {
    long long n = 0;
    for (const auto& l : logs) n += static_cast<long long>(l.clicks.size()) + (l.terminated ? 1 : 0);
    return n;
}

inline void validate_sequence(const std::vector<TrialLog>& logs) {
    for (std::size_t i = 0; i < logs.size(); ++i) {
        validate_log(logs[i]);
        if (logs[i].trial_index != static_cast<int>(i))
            throw ValidationError("participant " + logs[i].participant_id + ": trial " + std::to_string(i) +
                                  " has trial_index " + std::to_string(logs[i].trial_index) +
                                  " (logs must be ordered and complete from 0)");
    }
}

// ---------------------------------------------------------------------------------------------
// Replay caches

struct ReplayStep {
    std::size_t n_ops = 0;
    std::size_t chosen = 0;
    double reward_realized = 0.0;
    double reward_expected = 0.0;  // differs from realized only on the terminal step
    std::vector<double> f;         // n_ops x kFeatureCount, row-major
};

struct ReplayTrial {
    std::vector<ReplayStep> steps;
    bool terminated = true;
};

struct SoftmaxReplay {
    HabitScale habit_scale = HabitScale::rates;
    FeatureScaling scaling = FeatureScaling::range;
    std::vector<ReplayTrial> trials;
};

inline SoftmaxReplay build_softmax_replay(const std::vector<TrialLog>& logs, const FeatureContext& ctx) {
    validate_sequence(logs);
    SoftmaxReplay r;
    r.habit_scale = ctx.habit_scale;
    r.scaling = ctx.scaling;
    BeliefState belief;
    for (const auto& log : logs) {
        ReplayTrial trial;
        trial.terminated = log.terminated;
        BeliefState b = belief;
        std::vector<NodeId> seq = log.clicks;
        if (log.terminated) seq.push_back(kTerminate);
        for (NodeId op : seq) {
            const OperationFeatures opf = compute_all_features(b, ctx);
            ReplayStep step;
            step.n_ops = opf.ops.size();
            step.chosen = static_cast<std::size_t>(std::find(opf.ops.begin(), opf.ops.end(), op) - opf.ops.begin());
            require(step.chosen < step.n_ops, "operation not available during replay");
            step.f.reserve(step.n_ops * kFeatureCount);
            for (const auto& fv : opf.features) step.f.insert(step.f.end(), fv.begin(), fv.end());
            if (op == kTerminate) {
                const auto path = normalize_path(log.chosen_path);
                double realized = 0.0;
                for (NodeId n : path)
                    if (n != kStartNode) realized += log.ground_truth.values[n];
                const auto ev = path_expected_values(b.observed, ctx.prior.condition(b.observed));
                step.reward_realized = realized;
                step.reward_expected = ev[maze::path_of_leaf(path[3])];
            } else {
                step.reward_realized = step.reward_expected = -static_cast<double>(log.ground_truth.click_cost(op));
                b = apply_click(b, op, log.ground_truth).belief;
            }
            trial.steps.push_back(std::move(step));
        }
        belief = commit_trial(belief, log);
        r.trials.push_back(std::move(trial));
    }
    return r;
}

struct RsslReplayTrial {
    std::vector<std::vector<double>> p;  // [strategy][step]: strategy's probability of the observed op
    std::vector<double> n_ops;           // [step]
    double score = 0.0;
};

struct RsslReplay {
    std::vector<StrategyId> strategies;
    std::vector<RsslReplayTrial> trials;
};

inline RsslReplay build_rssl_replay(const std::vector<TrialLog>& logs, const std::vector<StrategyId>& set, int reward_max = 50) {
    validate_sequence(logs);
    RsslReplay r;
    r.strategies = set;
    for (const auto& log : logs) {
        RsslReplayTrial t;
        t.score = log.score;
        t.p.assign(set.size(), {});
        Observations obs{};
        std::vector<NodeId> seq = log.clicks;
        if (log.terminated) seq.push_back(kTerminate);
        for (NodeId op : seq) {
            BeliefState tmp;
            tmp.observed = obs;
            const auto ops = available_operations(tmp);
            const std::size_t idx = static_cast<std::size_t>(std::find(ops.begin(), ops.end(), op) - ops.begin());
            require(idx < ops.size(), "operation not available during replay");
            t.n_ops.push_back(static_cast<double>(ops.size()));
            for (std::size_t s = 0; s < set.size(); ++s) t.p[s].push_back(strategy_probabilities(set[s], obs, reward_max)[idx]);
            if (op != kTerminate) obs[op] = log.ground_truth.values[op];
        }
        r.trials.push_back(std::move(t));
    }
    return r;
}

/// Replay caches of one participant, built lazily per feature configuration.
struct ParticipantData {
    std::string participant_id;
    std::vector<TrialLog> logs;
    EnvConfig env;
    long long n_observations = 0;
    std::vector<SoftmaxReplay> softmax;  // one per (habit scale, scaling) in use
    std::optional<RsslReplay> rssl;

    ParticipantData(std::vector<TrialLog> l, EnvConfig e = {}) : logs(std::move(l)), env(std::move(e)) {
        if (logs.empty()) throw IncompleteInputError("participant has no trials");
        validate_sequence(logs);
        participant_id = logs.front().participant_id;
        n_observations = count_observations(logs);
    }

    const SoftmaxReplay& softmax_replay(HabitScale h, FeatureScaling s) {
        for (const auto& r : softmax)
            if (r.habit_scale == h && r.scaling == s) return r;
        softmax.push_back(build_softmax_replay(logs, FeatureContext(env, h, s)));
        return softmax.back();
    }

    const RsslReplay& rssl_replay(const std::vector<StrategyId>& set) {
        if (!rssl || rssl->strategies != set) rssl = build_rssl_replay(logs, set, env.rewards.reward_max);
        return *rssl;
    }
};

// ---------------------------------------------------------------------------------------------
// Likelihoods

/// Teacher-forced log-likelihood of a softmax model: the parameters follow the Reinforce update
/// along the participant's own trajectory.
inline double softmax_loglikelihood(const PolicyParams& start, const SoftmaxReplay& replay) {
    FeatureVector w = start.weights;
    std::vector<int> active;
    for (int j = 0; j < kFeatureCount; ++j)
        if (start.mask[j]) active.push_back(j);
    const bool learning = !start.frozen && start.alpha != 0.0;
    // Same operation order as the generator's policy and update code, so that replaying a
    // simulated log reproduces its step probabilities to the last bit.
    const double tau = start.tau;
    std::vector<double> q, rewards;
    FeatureVector delta;
    double ll = 0.0;
    for (const auto& trial : replay.trials) {
        delta.fill(0.0);
        std::vector<double> credit;
        if (learning && trial.terminated) {
            rewards.clear();
            for (const auto& s : trial.steps)
                rewards.push_back(start.terminal_reward == TerminalReward::realized ? s.reward_realized : s.reward_expected);
            credit = step_credits(rewards, start.gamma, start.credit_mode);
        }
        double discount = 1.0;
        for (std::size_t t = 0; t < trial.steps.size(); ++t) {
            const auto& st = trial.steps[t];
            q.assign(st.n_ops, 0.0);
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < st.n_ops; ++i) {
                const double* row = st.f.data() + i * kFeatureCount;
                double acc = 0.0;
                for (int j : active) acc += w[j] * row[j];
                q[i] = acc / tau;
                m = std::max(m, q[i]);
            }
            double z = 0.0;
            for (double x : q) z += std::exp(x - m);
            const double lse = m + std::log(z);
            double lp = q[st.chosen] - lse;
            if (start.lapse > 0.0) lp = std::log((1.0 - start.lapse) * std::exp(lp) + start.lapse / static_cast<double>(st.n_ops));
            ll += lp;
            if (credit.empty()) continue;
            const double scale = discount * credit[t];
            discount *= start.gamma;
            if (scale == 0.0) continue;
            for (double& x : q) x = std::exp(x - lse);
            const double* chosen = st.f.data() + st.chosen * kFeatureCount;
            for (int j : active) {
                double expect = 0.0;
                for (std::size_t i = 0; i < st.n_ops; ++i) expect += q[i] * st.f[i * kFeatureCount + j];
                delta[j] += scale * ((chosen[j] - expect) / tau);
            }
        }
        if (!credit.empty())
            for (int j : active) w[j] += start.alpha * delta[j];
    }
    return ll;
}

inline double rssl_replay_loglikelihood(const RsslParams& params, const RsslReplay& replay,
                                        SelectionMethod method = SelectionMethod::quadrature, int mc_draws = 2000,
                                        std::uint64_t seed = 0) {
    RsslState state = RsslState::initial(params, replay.strategies);
    Rng rng(seed);
    double total = 0.0;
    const std::size_t S = replay.strategies.size();
    std::vector<double> ll(S), joint(S);
    for (const auto& trial : replay.trials) {
        for (std::size_t s = 0; s < S; ++s) {
            double acc = 0.0;
            for (std::size_t t = 0; t < trial.n_ops.size(); ++t) {
                const double p = (1.0 - params.lapse) * trial.p[s][t] + params.lapse / trial.n_ops[t];
                acc += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
            }
            ll[s] = acc;
        }
        const auto sel = rssl_selection_probabilities(state, method, mc_draws, rng);
        for (std::size_t s = 0; s < S; ++s)
            joint[s] = sel[s] > 0.0 ? std::log(sel[s]) + ll[s] : -std::numeric_limits<double>::infinity();
        total += log_sum_exp(joint);
        state = rssl_update(state, map_strategy(sel, ll), trial.score);
    }
    return total;
}

inline double sequence_loglikelihood(const ModelSpec& spec, ParticipantData& data) {
    if (spec.kind == ModelKind::rssl)
        return rssl_replay_loglikelihood(spec.rssl.params(), data.rssl_replay(spec.strategies));
    return softmax_loglikelihood(policy_params(spec), data.softmax_replay(spec.habit_scale, spec.feature_scaling));
}

/// Sum over trials and steps of ln P(observed op | replayed belief, current parameters).
inline double sequence_loglikelihood(const ModelSpec& spec, const std::vector<TrialLog>& logs, const EnvConfig& env = {}) {
    ParticipantData data(logs, env);
    return sequence_loglikelihood(spec, data);
}

// ---------------------------------------------------------------------------------------------
// Parameter spaces

struct SearchBoxes {
    double weight_lo = -40.0, weight_hi = 40.0;
    double raw_learning_rate_lo = -12.0, raw_learning_rate_hi = 0.0;
    double raw_gamma_lo = -6.0, raw_gamma_hi = 6.0;
    double raw_temperature_lo = -3.0, raw_temperature_hi = 3.0;
    double rssl_prior_mean_lo = -60.0, rssl_prior_mean_hi = 60.0;
    double rssl_raw_prior_sd_lo = -0.7, rssl_raw_prior_sd_hi = 4.6;  // sd in [0.5, 100]
    double rssl_raw_noise_sd_lo = 0.0, rssl_raw_noise_sd_hi = 5.3;   // sd in [1, 200]
    double rssl_raw_lapse_lo = -7.0, rssl_raw_lapse_hi = 0.0;        // lapse in [0.001, 0.5]
};

/// Free parameters of one model kind and their mapping onto a ModelSpec.
struct ParameterSpace {
    ModelKind kind = ModelKind::hybrid_reinforce;
    std::vector<std::string> names;
    Box box;
    std::vector<int> weight_features;  // catalog index of each leading weight dimension

    static ParameterSpace for_model(ModelKind kind, const SearchBoxes& b = {}) {
        ParameterSpace ps;
        ps.kind = kind;
        auto add = [&ps](std::string name, double lo, double hi) {
            ps.names.push_back(std::move(name));
            ps.box.lo.push_back(lo);
            ps.box.hi.push_back(hi);
        };
        if (kind == ModelKind::rssl) {
            add("prior_mean", b.rssl_prior_mean_lo, b.rssl_prior_mean_hi);
            add("raw_prior_sd", b.rssl_raw_prior_sd_lo, b.rssl_raw_prior_sd_hi);
            add("raw_noise_sd", b.rssl_raw_noise_sd_lo, b.rssl_raw_noise_sd_hi);
            add("raw_lapse", b.rssl_raw_lapse_lo, b.rssl_raw_lapse_hi);
            return ps;
        }
        const FeatureMask mask = mask_for_variant(variant_of(kind));
        for (int j = 0; j < kFeatureCount; ++j) {
            if (!mask[j]) continue;
            ps.weight_features.push_back(j);
            add("w:" + std::string(feature_catalog()[j].name), b.weight_lo, b.weight_hi);
        }
        if (is_learning_softmax(kind)) {
            add("raw_learning_rate", b.raw_learning_rate_lo, b.raw_learning_rate_hi);
            add("raw_gamma", b.raw_gamma_lo, b.raw_gamma_hi);
        }
        add("raw_temperature", b.raw_temperature_lo, b.raw_temperature_hi);
        return ps;
    }

    int k() const { return static_cast<int>(names.size()); }

    ModelSpec to_spec(const std::vector<double>& theta, const ModelSpec& base) const {
        require(theta.size() == names.size(), "parameter vector has the wrong dimension");
        ModelSpec s = base;
        s.kind = kind;
        if (kind == ModelKind::rssl) {
            s.rssl = {theta[0], theta[1], theta[2], theta[3]};
            return s;
        }
        s.reinforce.weights.fill(0.0);
        std::size_t i = 0;
        for (int j : weight_features) s.reinforce.weights[j] = theta[i++];
        if (is_learning_softmax(kind)) {
            s.reinforce.raw_learning_rate = theta[i++];
            s.reinforce.raw_gamma = theta[i++];
        }
        s.reinforce.raw_temperature = theta[i++];
        return s;
    }

    std::vector<double> from_spec(const ModelSpec& s) const {
        std::vector<double> theta;
        if (kind == ModelKind::rssl) return {s.rssl.prior_mean, s.rssl.raw_prior_sd, s.rssl.raw_noise_sd, s.rssl.raw_lapse};
        for (int j : weight_features) theta.push_back(s.reinforce.weights[j]);
        if (is_learning_softmax(kind)) {
            theta.push_back(s.reinforce.raw_learning_rate);
            theta.push_back(s.reinforce.raw_gamma);
        }
        theta.push_back(s.reinforce.raw_temperature);
        return theta;
    }
};

/// Default starting candidates: the reference hyperparameter sets for the softmax models,
/// the default RSSL hyperparameters otherwise.
inline std::vector<std::vector<double>> default_initial_candidates(const ParameterSpace& ps) {
    if (ps.kind == ModelKind::rssl) {
        ModelSpec s;
        s.kind = ModelKind::rssl;
        return {ps.from_spec(s)};
    }
    std::vector<std::vector<double>> out;
    for (ModelKind source : {ModelKind::hybrid_reinforce, ModelKind::model_free_reinforce}) {
        ModelSpec s = default_model_spec(source);
        s.kind = ps.kind;
        auto theta = ps.box.clamp(ps.from_spec(s));
        if (std::find(out.begin(), out.end(), theta) == out.end()) out.push_back(std::move(theta));
    }
    if (ps.kind != ModelKind::hybrid_reinforce) std::swap(out.front(), out.back());
    return out;
}

struct FitOptions {
    OptimizerKind optimizer = OptimizerKind::parzen_estimator;
    int budget = 3000;
    std::uint64_t seed = 0;
    SearchBoxes boxes;
    ModelSpec base;  // non-searched settings (credit mode, feature scaling, strategy set, ...)
    bool use_default_initial = true;
    std::vector<std::vector<double>> initial;
};

struct FitResult {
    std::string participant_id;
    ModelKind kind = ModelKind::hybrid_reinforce;
    std::vector<std::string> parameter_names;
    std::vector<double> parameters;  // raw, in parameter_names order
    ModelSpec spec;
    double log_likelihood = 0.0;
    long long n_observations = 0;
    int k_params = 0;
    double bic = 0.0;
    std::vector<TraceEntry> trace;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::parzen_estimator;
    int budget = 0;
    double wall_time_s = 0.0;
};

inline FitResult fit_participant(ModelKind kind, ParticipantData& data, const FitOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    const ParameterSpace ps = ParameterSpace::for_model(kind, opt.boxes);
    ModelSpec base = opt.base;
    base.kind = kind;
    OptimizerOptions oo;
    oo.kind = opt.optimizer;
    oo.budget = opt.budget;
    oo.seed = opt.seed;
    oo.initial = opt.initial;
    if (opt.use_default_initial)
        for (auto& x : default_initial_candidates(ps)) oo.initial.push_back(std::move(x));
    const Objective f = [&](const std::vector<double>& theta) { return sequence_loglikelihood(ps.to_spec(theta, base), data); };
    const OptimizeResult r = maximize(f, ps.box, oo);

    FitResult out;
    out.participant_id = data.participant_id;
    out.kind = kind;
    out.parameter_names = ps.names;
    out.parameters = r.best;
    out.spec = ps.to_spec(r.best, base);
    out.log_likelihood = r.best_value;
    out.n_observations = data.n_observations;
    out.k_params = ps.k();
    out.bic = bic(out.log_likelihood, out.k_params, out.n_observations);
    out.trace = r.trace;
    out.seed = opt.seed;
    out.optimizer = opt.optimizer;
    out.budget = opt.budget;
    out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

inline FitResult fit_participant(ModelKind kind, const std::vector<TrialLog>& logs, const FitOptions& opt,
                                 const EnvConfig& env = {}) {
    if (logs.empty()) throw IncompleteInputError("fit_participant: empty logs");
    ParticipantData data(logs, env);
    return fit_participant(kind, data, opt);
}

}  // namespace mcrl
