#pragma once

// Softmax meta-policies over the feature catalog and the Reinforce weight update.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mcrl/env.hpp"
#include "mcrl/features.hpp"

namespace mcrl {

enum class ModelKind { hybrid_reinforce, model_free_reinforce, mental_habit, non_learning, rssl };

inline constexpr std::array<ModelKind, 5> kAllModelKinds{ModelKind::hybrid_reinforce, ModelKind::model_free_reinforce,
                                                         ModelKind::mental_habit, ModelKind::non_learning,
                                                         ModelKind::rssl};

inline std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::hybrid_reinforce: return "hybrid_reinforce";
        case ModelKind::model_free_reinforce: return "model_free_reinforce";
        case ModelKind::mental_habit: return "mental_habit";
        case ModelKind::non_learning: return "non_learning";
        case ModelKind::rssl: return "rssl";
    }
    return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
    for (ModelKind k : kAllModelKinds)
        if (to_string(k) == s) return k;
    throw ValidationError("unknown model kind '" + std::string(s) + "'");
}

inline bool is_softmax_model(ModelKind k) { return k != ModelKind::rssl; }
inline bool is_learning_softmax(ModelKind k) {
    return k == ModelKind::hybrid_reinforce || k == ModelKind::model_free_reinforce;
}

inline FeatureVariant variant_of(ModelKind k) {
    switch (k) {
        case ModelKind::hybrid_reinforce: return FeatureVariant::hybrid;
        case ModelKind::non_learning: return FeatureVariant::non_learning;
        default: return FeatureVariant::model_free;
    }
}

/// Which reward multiplies each step's score function in the update.
enum class CreditMode {
    immediate,    // r_meta(b_t, c_t), the update as literally written
    return_to_go  // discounted sum of the remaining meta rewards
};

/// Meta reward of the terminal step.
enum class TerminalReward { realized, expected };

inline std::string_view to_string(CreditMode m) { return m == CreditMode::immediate ? "immediate" : "return_to_go"; }
inline CreditMode parse_credit_mode(std::string_view s) {
    if (s == "immediate") return CreditMode::immediate;
    if (s == "return_to_go") return CreditMode::return_to_go;
    throw ValidationError("unknown credit_mode '" + std::string(s) + "'");
}
inline std::string_view to_string(TerminalReward m) { return m == TerminalReward::realized ? "realized" : "expected"; }
inline TerminalReward parse_terminal_reward(std::string_view s) {
    if (s == "realized") return TerminalReward::realized;
    if (s == "expected") return TerminalReward::expected;
    throw ValidationError("unknown terminal_reward '" + std::string(s) + "'");
}

/// Hyperparameters in the unconstrained ("raw") space that fitting searches over.
///   alpha = exp(raw_learning_rate), tau = exp(raw_temperature), gamma = logistic(raw_gamma)
struct ReinforceHyper {
    double raw_learning_rate = -9.0;
    double raw_gamma = 0.0;
    double raw_temperature = 0.0;
    FeatureVector weights{};

    static double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
    double alpha() const { return std::exp(raw_learning_rate); }
    double gamma() const { return logistic(raw_gamma); }
    double tau() const { return std::exp(raw_temperature); }
};

struct PolicyParams {
    FeatureVector weights{};
    double alpha = 0.0;
    double gamma = 1.0;
    double tau = 1.0;
    FeatureMask mask = mask_for_variant(FeatureVariant::hybrid);
    CreditMode credit_mode = CreditMode::immediate;
    TerminalReward terminal_reward = TerminalReward::realized;
    bool frozen = false;
    double lapse = 0.0;  // mixture weight of a uniform choice among available operations

    void apply_mask() {
        for (int j = 0; j < kFeatureCount; ++j)
            if (!mask[j]) weights[j] = 0.0;
    }
};

/// Lapse used by the frozen models (and as their likelihood floor).
inline constexpr double kDefaultFrozenLapse = 0.05;

inline PolicyParams make_model(ModelKind kind, const ReinforceHyper& hyper,
                               CreditMode credit = CreditMode::immediate) {
    if (!is_softmax_model(kind)) throw ValidationError("make_model: " + std::string(to_string(kind)) + " is not a softmax model");
    PolicyParams p;
    p.mask = mask_for_variant(variant_of(kind));
    p.weights = hyper.weights;
    p.apply_mask();
    p.tau = hyper.tau();
    p.credit_mode = credit;
    if (is_learning_softmax(kind)) {
        p.alpha = hyper.alpha();
        p.gamma = hyper.gamma();
        p.frozen = false;
    } else {
        p.alpha = 0.0;
        p.gamma = 1.0;
        p.frozen = true;
        p.lapse = kDefaultFrozenLapse;
    }
    return p;
}

inline double dot_masked(const PolicyParams& p, const FeatureVector& f) {
    double q = 0.0;
    for (int j = 0; j < kFeatureCount; ++j)
        if (p.mask[j]) q += p.weights[j] * f[j];
    return q;
}

inline std::vector<double> q_values(const PolicyParams& p, const OperationFeatures& opf) {
    std::vector<double> q(opf.ops.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = dot_masked(p, opf.features[i]);
    return q;
}

/// Q value of every available operation in `belief`.
inline std::map<NodeId, double> q_values(const PolicyParams& p, const BeliefState& belief, const FeatureContext& ctx) {
    const OperationFeatures opf = compute_all_features(belief, ctx);
    const auto q = q_values(p, opf);
    std::map<NodeId, double> out;
    for (std::size_t i = 0; i < q.size(); ++i) out[opf.ops[i]] = q[i];
    return out;
}

/// log softmax(q / tau) with max subtraction.
inline std::vector<double> log_softmax(const std::vector<double>& q, double tau) {
    require(tau > 0.0, "temperature must be positive");
    double m = -std::numeric_limits<double>::infinity();
    for (double x : q) m = std::max(m, x / tau);
    double z = 0.0;
    for (double x : q) z += std::exp(x / tau - m);
    const double lz = m + std::log(z);
    std::vector<double> out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i] / tau - lz;
    return out;
}

inline std::vector<double> softmax(const std::vector<double>& q, double tau) {
    auto lp = log_softmax(q, tau);
    for (double& x : lp) x = std::exp(x);
    return lp;
}

inline std::vector<double> click_probabilities(const PolicyParams& p, const OperationFeatures& opf) {
    return softmax(q_values(p, opf), p.tau);
}

inline std::map<NodeId, double> click_probabilities(const PolicyParams& p, const BeliefState& belief,
                                                    const FeatureContext& ctx) {
    const OperationFeatures opf = compute_all_features(belief, ctx);
    const auto pr = click_probabilities(p, opf);
    std::map<NodeId, double> out;
    for (std::size_t i = 0; i < pr.size(); ++i) out[opf.ops[i]] = pr[i];
    return out;
}

/// Log-probabilities of the behaviour policy: softmax mixed with the lapse.
inline std::vector<double> action_log_probabilities(const PolicyParams& p, const OperationFeatures& opf) {
    auto lp = log_softmax(q_values(p, opf), p.tau);
    if (p.lapse > 0.0) {
        const double floor = p.lapse / static_cast<double>(lp.size());
        for (double& x : lp) x = std::log((1.0 - p.lapse) * std::exp(x) + floor);
    }
    return lp;
}

/// Score function: d/dw ln pi(c|b) = (f(c) - E_pi[f]) / tau on active coordinates.
inline FeatureVector grad_log_prob(const PolicyParams& p, const OperationFeatures& opf, std::size_t chosen) {
    const auto pr = click_probabilities(p, opf);
    FeatureVector g{};
    for (int j = 0; j < kFeatureCount; ++j) {
        if (!p.mask[j]) continue;
        double expect = 0.0;
        for (std::size_t i = 0; i < pr.size(); ++i) expect += pr[i] * opf.features[i][j];
        g[j] = (opf.features[chosen][j] - expect) / p.tau;
    }
    return g;
}

struct EpisodeStep {
    OperationFeatures options;
    std::size_t chosen = 0;
    NodeId op = kTerminate;
    double meta_reward = 0.0;
    double log_prob = 0.0;  // under the behaviour policy at sampling time
};

struct EpisodeTrajectory {
    std::vector<EpisodeStep> steps;
    double external_return = 0.0;
};

struct Episode {
    EpisodeTrajectory trajectory;
    TrialLog log;
    BeliefState final_belief;  // before commit_trial
};

/// Rolls out one trial: samples operations until ⊥ (or no click remains), then acts.
inline Episode sample_episode(const PolicyParams& p, const TrialGroundTruth& truth, const BeliefState& belief_in,
                              const FeatureContext& ctx, Rng& rng) {
    Episode ep;
    BeliefState b = belief_in;
    b.observed = {};
    b.click_history.clear();
    while (true) {
        EpisodeStep step;
        step.options = compute_all_features(b, ctx);
        const auto lp = action_log_probabilities(p, step.options);
        std::vector<double> pr(lp.size());
        for (std::size_t i = 0; i < lp.size(); ++i) pr[i] = std::exp(lp[i]);
        std::discrete_distribution<std::size_t> dist(pr.begin(), pr.end());
        step.chosen = pr.size() == 1 ? 0 : dist(rng);
        step.op = step.options.ops[step.chosen];
        step.log_prob = lp[step.chosen];
        if (step.op == kTerminate) {
            const TerminationOutcome t = terminate_and_act(b, truth, ctx.prior, rng);
            ep.trajectory.external_return = t.external_return;
            step.meta_reward = p.terminal_reward == TerminalReward::realized ? t.external_return : t.expected_return;
            ep.trajectory.steps.push_back(std::move(step));
            ep.log.chosen_path = t.chosen_path;
            break;
        }
        auto outcome = apply_click(b, step.op, truth);
        step.meta_reward = outcome.meta_reward;
        b = std::move(outcome.belief);
        ep.trajectory.steps.push_back(std::move(step));
    }
    ep.log.trial_index = belief_in.trial_index;
    ep.log.ground_truth = truth;
    ep.log.clicks = b.click_history;
    ep.log.terminated = true;
    ep.log.score = compute_score(truth, ep.log.clicks, ep.log.chosen_path);
    ep.final_belief = std::move(b);
    return ep;
}

/// Per-step credit: r_t (immediate) or sum_{t'>=t} gamma^(t'-t) r_t' (return to go).
inline std::vector<double> step_credits(const std::vector<double>& rewards, double gamma, CreditMode mode) {
    std::vector<double> credit(rewards);
    if (mode == CreditMode::return_to_go)
        for (std::size_t t = rewards.size(); t-- > 1;) credit[t - 1] = rewards[t - 1] + gamma * credit[t];
    return credit;
}

/// w <- w + alpha * sum_t gamma^(t-1) * credit_t * grad ln pi(c_t | b_t)
inline PolicyParams reinforce_update(const PolicyParams& p, const EpisodeTrajectory& traj) {
    if (p.frozen) throw ValidationError("reinforce_update called on frozen parameters");
    PolicyParams next = p;
    if (p.alpha == 0.0 || traj.steps.empty()) return next;
    std::vector<double> rewards;
    for (const auto& s : traj.steps) rewards.push_back(s.meta_reward);
    const auto credit = step_credits(rewards, p.gamma, p.credit_mode);
    FeatureVector delta{};
    double discount = 1.0;
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const double scale = discount * credit[t];
        discount *= p.gamma;
        if (scale == 0.0) continue;
        const FeatureVector g = grad_log_prob(p, traj.steps[t].options, traj.steps[t].chosen);
        for (int j = 0; j < kFeatureCount; ++j) delta[j] += scale * g[j];
    }
    for (int j = 0; j < kFeatureCount; ++j)
        if (p.mask[j]) next.weights[j] += p.alpha * delta[j];
    next.apply_mask();
    return next;
}

}  // namespace mcrl
