#pragma once

// Rational strategy selection learning: Thompson sampling over a fixed library of planning
// strategies, each carrying a normal posterior over its expected return.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mcrl/env.hpp"
#include "mcrl/features.hpp"

namespace mcrl {

enum class StrategyId {
    resource_rational,
    no_clicking,
    all_nodes,
    breadth_first,
    depth_first,
    outer_first,
    positive_immediate_both_outers,
    immediates_only,
    random_1,
    random_2,
    random_3,
    random_6,
};

inline constexpr std::array<StrategyId, 12> kDefaultStrategySet{
    StrategyId::resource_rational, StrategyId::no_clicking,   StrategyId::all_nodes,
    StrategyId::breadth_first,     StrategyId::depth_first,   StrategyId::outer_first,
    StrategyId::positive_immediate_both_outers, StrategyId::immediates_only, StrategyId::random_1,
    StrategyId::random_2,          StrategyId::random_3,      StrategyId::random_6,
};

inline std::string_view to_string(StrategyId s) {
    switch (s) {
        case StrategyId::resource_rational: return "resource_rational";
        case StrategyId::no_clicking: return "no_clicking";
        case StrategyId::all_nodes: return "all_nodes";
        case StrategyId::breadth_first: return "breadth_first";
        case StrategyId::depth_first: return "depth_first";
        case StrategyId::outer_first: return "outer_first";
        case StrategyId::positive_immediate_both_outers: return "positive_immediate_both_outers";
        case StrategyId::immediates_only: return "immediates_only";
        case StrategyId::random_1: return "random_1";
        case StrategyId::random_2: return "random_2";
        case StrategyId::random_3: return "random_3";
        case StrategyId::random_6: return "random_6";
    }
    return "?";
}

inline StrategyId parse_strategy(std::string_view s) {
    for (StrategyId id : kDefaultStrategySet)
        if (to_string(id) == s) return id;
    throw ValidationError("unknown strategy '" + std::string(s) + "'");
}

namespace detail {

/// Uniform distribution over `targets` (subset of ops), or ⊥ if empty.
inline std::vector<double> uniform_over(const std::vector<NodeId>& ops, const std::vector<NodeId>& targets) {
    std::vector<double> p(ops.size(), 0.0);
    if (targets.empty()) {
        p[0] = 1.0;
        return p;
    }
    const double w = 1.0 / static_cast<double>(targets.size());
    for (std::size_t i = 0; i < ops.size(); ++i)
        if (std::find(targets.begin(), targets.end(), ops[i]) != targets.end()) p[i] = w;
    return p;
}

/// Branch identified as holding the positive immediate, or -1.
inline int inferred_target(const Observations& obs) {
    int negatives = 0;
    int unseen = -1;
    for (int b = 0; b < maze::kBranches; ++b) {
        const auto& v = obs[maze::immediate(b)];
        if (!v) {
            unseen = b;
            continue;
        }
        if (*v > 0) return b;
        ++negatives;
    }
    return negatives == maze::kBranches - 1 ? unseen : -1;
}

inline std::vector<NodeId> unobserved_where(const Observations& obs, auto pred) {
    std::vector<NodeId> out;
    for (NodeId n = 1; n <= maze::kRevealable; ++n)
        if (!obs[n] && pred(n)) out.push_back(n);
    return out;
}

}  // namespace detail

/// Distribution of strategy `s` over available_operations(obs) (⊥ first, ascending ids).
inline std::vector<double> strategy_probabilities(StrategyId s, const Observations& obs, int reward_max = 50) {
    BeliefState tmp;
    tmp.observed = obs;
    const auto ops = available_operations(tmp);
    int clicks = 0;
    for (NodeId n = 1; n <= maze::kRevealable; ++n) clicks += obs[n].has_value();
    auto any = [](NodeId) { return true; };

    switch (s) {
        case StrategyId::no_clicking: return detail::uniform_over(ops, {});
        case StrategyId::all_nodes: return detail::uniform_over(ops, detail::unobserved_where(obs, any));
        case StrategyId::immediates_only:
            return detail::uniform_over(ops, detail::unobserved_where(obs, [](NodeId n) { return maze::level_of(n) == 1; }));
        case StrategyId::breadth_first:
            for (int level = 1; level <= 3; ++level) {
                auto t = detail::unobserved_where(obs, [level](NodeId n) { return maze::level_of(n) == level; });
                if (!t.empty()) return detail::uniform_over(ops, t);
            }
            return detail::uniform_over(ops, {});
        case StrategyId::depth_first: {
            // Finish any started branch top-down before opening a fresh one.
            std::vector<NodeId> t;
            for (int b = 0; b < maze::kBranches; ++b) {
                const auto nodes = detail::unobserved_where(obs, [b](NodeId n) { return maze::branch_of(n) == b; });
                if (nodes.empty() || nodes.size() == 4) continue;
                const int top = maze::level_of(nodes.front());
                for (NodeId n : nodes)
                    if (maze::level_of(n) == top) t.push_back(n);
            }
            if (t.empty())
                for (int b = 0; b < maze::kBranches; ++b)
                    if (!obs[maze::immediate(b)]) t.push_back(maze::immediate(b));
            return detail::uniform_over(ops, t);
        }
        case StrategyId::outer_first: {
            for (NodeId n = 1; n <= maze::kRevealable; ++n)
                if (obs[n] && maze::is_leaf(n) && *obs[n] >= reward_max) return detail::uniform_over(ops, {});
            return detail::uniform_over(ops, detail::unobserved_where(obs, [](NodeId n) { return maze::is_leaf(n); }));
        }
        case StrategyId::resource_rational:
        case StrategyId::positive_immediate_both_outers: {
            const int target = detail::inferred_target(obs);
            if (target < 0)
                return detail::uniform_over(ops, detail::unobserved_where(obs, [](NodeId n) { return maze::level_of(n) == 1; }));
            const NodeId o0 = maze::outer(target, 0), o1 = maze::outer(target, 1);
            if (s == StrategyId::resource_rational && (obs[o0] || obs[o1])) return detail::uniform_over(ops, {});
            std::vector<NodeId> t;
            if (!obs[o0]) t.push_back(o0);
            if (!obs[o1]) t.push_back(o1);
            return detail::uniform_over(ops, t);
        }
        case StrategyId::random_1:
        case StrategyId::random_2:
        case StrategyId::random_3:
        case StrategyId::random_6: {
            const int k = s == StrategyId::random_1 ? 1 : s == StrategyId::random_2 ? 2 : s == StrategyId::random_3 ? 3 : 6;
            if (clicks >= k) return detail::uniform_over(ops, {});
            return detail::uniform_over(ops, detail::unobserved_where(obs, any));
        }
    }
    return detail::uniform_over(ops, {});
}

struct NormalPosterior {
    double mean = 0.0;
    double var = 1.0;
    bool operator==(const NormalPosterior&) const = default;
};

/// Natural-scale RSSL parameters.
struct RsslParams {
    double prior_mean = 0.0;
    double prior_var = 100.0;
    double noise_var = 400.0;
    double lapse = 0.05;
};

/// Raw (search-space) RSSL hyperparameters: prior sd and noise sd on log scale, lapse on logit.
struct RsslHyper {
    double prior_mean = 0.0;
    double raw_prior_sd = std::log(10.0);
    double raw_noise_sd = std::log(20.0);
    double raw_lapse = -2.944439;  // logit(0.05)

    RsslParams params() const {
        const double sd0 = std::exp(raw_prior_sd);
        const double sd = std::exp(raw_noise_sd);
        return {prior_mean, sd0 * sd0, sd * sd, 1.0 / (1.0 + std::exp(-raw_lapse))};
    }
};

struct RsslState {
    std::vector<StrategyId> strategies;
    std::vector<NormalPosterior> posterior;
    double noise_var = 400.0;
    double lapse = 0.05;

    static RsslState initial(const RsslParams& p, std::vector<StrategyId> set = {kDefaultStrategySet.begin(),
                                                                               kDefaultStrategySet.end()}) {
        require(!set.empty(), "RSSL needs at least one strategy");
        require(p.prior_var > 0.0 && p.noise_var > 0.0, "RSSL variances must be positive");
        require(p.lapse >= 0.0 && p.lapse < 1.0, "RSSL lapse must lie in [0, 1)");
        RsslState s;
        s.posterior.assign(set.size(), {p.prior_mean, p.prior_var});
        s.strategies = std::move(set);
        s.noise_var = p.noise_var;
        s.lapse = p.lapse;
        return s;
    }
};

/// Thompson sampling: one draw per posterior, argmax (lowest index on ties).
inline std::size_t rssl_select(const RsslState& state, Rng& rng) {
    if (state.posterior.empty()) throw ValidationError("rssl_select: empty strategy set");
    std::normal_distribution<double> z(0.0, 1.0);
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < state.posterior.size(); ++i) {
        const double v = state.posterior[i].mean + std::sqrt(state.posterior[i].var) * z(rng);
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    return best;
}

inline std::size_t rssl_select(const RsslState& state, std::uint64_t seed) {
    Rng rng(seed);
    return rssl_select(state, rng);
}

/// Conjugate normal update with known observation noise.
inline RsslState rssl_update(const RsslState& state, std::size_t strategy, double observed_return) {
    if (strategy >= state.posterior.size()) throw ValidationError("rssl_update: invalid strategy index");
    RsslState next = state;
    auto& post = next.posterior[strategy];
    const double prec = 1.0 / post.var + 1.0 / state.noise_var;
    post.mean = (post.mean / post.var + observed_return / state.noise_var) / prec;
    post.var = 1.0 / prec;
    return next;
}

/// Thompson selection frequencies by Monte Carlo.
inline std::vector<double> selection_probabilities_mc(const RsslState& state, int draws, Rng& rng) {
    require(draws >= 1, "need at least one draw");
    std::vector<double> freq(state.posterior.size(), 0.0);
    for (int d = 0; d < draws; ++d) freq[rssl_select(state, rng)] += 1.0;
    for (double& f : freq) f /= draws;
    return freq;
}

namespace detail {

/// ln Phi(u), tabulated with linear interpolation (absolute error < 1e-5); asymptotic tail below -38.
inline double log_normal_cdf(double u) {
    constexpr double lo = -38.0, hi = 8.5, step = 1.0 / 256.0;
    static const std::vector<double> table = [] {
        std::vector<double> t;
        for (double v = lo; v <= hi + step; v += step) t.push_back(std::log(0.5 * std::erfc(-v / std::numbers::sqrt2)));
        return t;
    }();
    if (u >= hi) return 0.0;
    if (u < lo) return -0.5 * u * u - std::log(-u) - 0.5 * std::log(2.0 * std::numbers::pi);
    const double pos = (u - lo) / step;
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return table[i] + frac * (table[i + 1] - table[i]);
}

}  // namespace detail

/// Thompson selection probabilities by quadrature: P(s wins) = E_z[prod_j Phi((mu_s + sd_s z - mu_j)/sd_j)].
/// Strategies with identical posteriors are grouped so the cost scales with distinct posteriors.
inline std::vector<double> selection_probabilities_quadrature(const RsslState& state) {
    const auto& post = state.posterior;
    std::vector<NormalPosterior> groups;
    std::vector<int> count;
    std::vector<std::size_t> group_of(post.size());
    for (std::size_t i = 0; i < post.size(); ++i) {
        auto it = std::find(groups.begin(), groups.end(), post[i]);
        if (it == groups.end()) {
            groups.push_back(post[i]);
            count.push_back(0);
            it = groups.end() - 1;
        }
        group_of[i] = static_cast<std::size_t>(it - groups.begin());
        ++count[group_of[i]];
    }
    const std::size_t g = groups.size();
    std::vector<double> member(g, 0.0);
    if (g == 1) {
        member[0] = 1.0 / count[0];
    } else {
        // Trapezoid rule in z; factors are visited highest mean first so negligible points exit early.
        constexpr double h = 0.5;
        constexpr int half = 14;  // z in [-7, 7]
        constexpr double kNegligible = -60.0;
        std::vector<double> sd(g), inv_sd(g);
        std::vector<std::size_t> order(g);
        for (std::size_t k = 0; k < g; ++k) {
            sd[k] = std::sqrt(groups[k].var);
            inv_sd[k] = 1.0 / sd[k];
            order[k] = k;
        }
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return groups[a].mean > groups[b].mean; });
        for (std::size_t k = 0; k < g; ++k) {
            double acc = 0.0;
            for (int i = -half; i <= half; ++i) {
                const double z = i * h;
                const double x = groups[k].mean + sd[k] * z;
                double lp = -0.5 * z * z;
                for (std::size_t j : order) {
                    const int m = j == k ? count[j] - 1 : count[j];
                    if (m == 0) continue;
                    const double u = (x - groups[j].mean) * inv_sd[j];
                    if (u > 8.5) continue;  // Phi(u) = 1 to double precision
                    lp += m * detail::log_normal_cdf(u);
                    if (lp < kNegligible) break;
                }
                if (lp >= kNegligible) acc += std::exp(lp);
            }
            member[k] = acc * h / std::sqrt(2.0 * std::numbers::pi);
        }
    }
    std::vector<double> p(post.size());
    double total = 0.0;
    for (std::size_t i = 0; i < post.size(); ++i) total += (p[i] = member[group_of[i]]);
    if (total > 0.0)
        for (double& x : p) x /= total;
    return p;
}

enum class SelectionMethod { monte_carlo, quadrature };

/// ln P(clicks, ⊥ | strategy) for every strategy, with the lapse mixture at each step.
inline std::vector<double> strategy_log_likelihoods(const RsslState& state, const TrialLog& log, int reward_max = 50) {
    validate_log(log);
    std::vector<double> ll(state.strategies.size(), 0.0);
    Observations obs{};
    std::vector<NodeId> seq = log.clicks;
    seq.push_back(kTerminate);
    for (NodeId op : seq) {
        BeliefState tmp;
        tmp.observed = obs;
        const auto ops = available_operations(tmp);
        const std::size_t idx = static_cast<std::size_t>(std::find(ops.begin(), ops.end(), op) - ops.begin());
        const double floor = state.lapse / static_cast<double>(ops.size());
        for (std::size_t s = 0; s < state.strategies.size(); ++s) {
            const double p = (1.0 - state.lapse) * strategy_probabilities(state.strategies[s], obs, reward_max)[idx] + floor;
            ll[s] += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
        }
        if (op != kTerminate) obs[op] = log.ground_truth.values[op];
    }
    return ll;
}

inline std::vector<double> rssl_selection_probabilities(const RsslState& state, SelectionMethod method,
                                                        int mc_draws, Rng& rng) {
    return method == SelectionMethod::quadrature ? selection_probabilities_quadrature(state)
                                                 : selection_probabilities_mc(state, mc_draws, rng);
}

/// P(clicks of one trial) = sum_s P(select s) * prod_t [(1-eps) P_s(c_t|b_t) + eps/|A_t|].
inline double rssl_likelihood(const RsslState& state, const TrialLog& log, SelectionMethod method = SelectionMethod::monte_carlo,
                              int mc_draws = 4000, std::uint64_t seed = 0) {
    Rng rng(seed);
    const auto sel = rssl_selection_probabilities(state, method, mc_draws, rng);
    const auto ll = strategy_log_likelihoods(state, log);
    double p = 0.0;
    for (std::size_t s = 0; s < sel.size(); ++s) p += sel[s] * std::exp(ll[s]);
    return p;
}

/// Index of the strategy with the highest posterior responsibility for a trial (lowest index on ties).
inline std::size_t map_strategy(const std::vector<double>& selection, const std::vector<double>& loglik) {
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < selection.size(); ++s) {
        const double v = selection[s] > 0.0 ? std::log(selection[s]) + loglik[s] : -std::numeric_limits<double>::infinity();
        if (v > best_v) {
            best_v = v;
            best = s;
        }
    }
    return best;
}

inline double log_sum_exp(const std::vector<double>& x) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

/// Replays a participant: per trial, scores the clicks under the current selection
/// probabilities, then updates the responsibility-maximizing strategy with the trial's score.
inline double rssl_sequence_loglikelihood(const RsslParams& params, const std::vector<TrialLog>& logs,
                                          SelectionMethod method = SelectionMethod::quadrature, int mc_draws = 2000,
                                          std::uint64_t seed = 0,
                                          const std::vector<StrategyId>& set = {kDefaultStrategySet.begin(),
                                                                                kDefaultStrategySet.end()}) {
    RsslState state = RsslState::initial(params, set);
    Rng rng(seed);
    double total = 0.0;
    for (const auto& log : logs) {
        const auto sel = rssl_selection_probabilities(state, method, mc_draws, rng);
        const auto ll = strategy_log_likelihoods(state, log);
        std::vector<double> joint(sel.size());
        for (std::size_t s = 0; s < sel.size(); ++s)
            joint[s] = sel[s] > 0.0 ? std::log(sel[s]) + ll[s] : -std::numeric_limits<double>::infinity();
        total += log_sum_exp(joint);
        state = rssl_update(state, map_strategy(sel, ll), log.score);
    }
    return total;
}

struct RsslEpisode {
    std::size_t strategy = 0;
    TrialLog log;
    double log_prob = 0.0;  // ln P(clicks | selected strategy)
};

/// One trial: Thompson-select a strategy, run it with lapses, act, and score.
inline RsslEpisode rssl_sample_episode(const RsslState& state, const TrialGroundTruth& truth, int trial_index,
                                       const FeatureContext& ctx, Rng& rng) {
    RsslEpisode ep;
    ep.strategy = rssl_select(state, rng);
    const StrategyId s = state.strategies[ep.strategy];
    BeliefState b;
    while (true) {
        const auto ops = available_operations(b);
        auto p = strategy_probabilities(s, b.observed, ctx.env.rewards.reward_max);
        for (double& x : p) x = (1.0 - state.lapse) * x + state.lapse / static_cast<double>(ops.size());
        std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
        const std::size_t i = ops.size() == 1 ? 0 : dist(rng);
        ep.log_prob += std::log(p[i]);
        if (ops[i] == kTerminate) break;
        b = apply_click(b, ops[i], truth).belief;
    }
    const auto t = terminate_and_act(b, truth, ctx.prior, rng);
    ep.log.trial_index = trial_index;
    ep.log.ground_truth = truth;
    ep.log.clicks = b.click_history;
    ep.log.terminated = true;
    ep.log.chosen_path = t.chosen_path;
    ep.log.score = compute_score(truth, ep.log.clicks, ep.log.chosen_path);
    return ep;
}

}  // namespace mcrl
