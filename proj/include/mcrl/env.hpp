#pragma once

// Three-branch Mouselab maze: trial generation, belief bookkeeping, scoring and the
// adaptive-strategy classifier.
//
// Node layout (branch-major):
//
//            /- 3       branch 0: 1 -> 2 -> {3, 4}
//   0 - 1 - 2           branch 1: 5 -> 6 -> {7, 8}
//            \- 4       branch 2: 9 -> 10 -> {11, 12}
//
// Level 1 nodes are the "immediate" nodes, level 2 "middle", level 3 "outer".

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcrl/error.hpp"
#include "mcrl/prior.hpp"
#include "mcrl/rng.hpp"

namespace mcrl {

using NodeId = int;

/// Clicks are node ids 1..12; the start node can never be clicked, so id 0 doubles as the
/// termination operation.
inline constexpr NodeId kTerminate = 0;
inline constexpr NodeId kStartNode = 0;

namespace maze {

inline constexpr int kBranches = 3;
inline constexpr int kNodes = 13;  // start + 12 revealable
inline constexpr int kRevealable = 12;
inline constexpr int kPaths = 6;
inline constexpr int kConfigs = 6;

constexpr bool is_valid_node(NodeId n) { return n >= 1 && n <= kRevealable; }
constexpr int branch_of(NodeId n) { return (n - 1) / 4; }
/// 0 for the start node, otherwise 1 (immediate), 2 (middle) or 3 (outer).
constexpr int level_of(NodeId n) {
    if (n == kStartNode) return 0;
    const int k = (n - 1) % 4;
    return k == 0 ? 1 : (k == 1 ? 2 : 3);
}
constexpr NodeId immediate(int branch) { return 1 + 4 * branch; }
constexpr NodeId middle(int branch) { return 2 + 4 * branch; }
constexpr NodeId outer(int branch, int which) { return 3 + 4 * branch + which; }
constexpr NodeId parent_of(NodeId n) {
    switch (level_of(n)) {
        case 1: return kStartNode;
        case 2: return immediate(branch_of(n));
        case 3: return middle(branch_of(n));
        default: return -1;
    }
}
constexpr bool is_leaf(NodeId n) { return level_of(n) == 3; }

/// Paths are indexed branch * 2 + which_outer; each lists immediate, middle, outer.
constexpr std::array<NodeId, 3> path_nodes(int path) {
    const int b = path / 2;
    return {immediate(b), middle(b), outer(b, path % 2)};
}
constexpr int path_of_leaf(NodeId leaf) { return 2 * branch_of(leaf) + (leaf - outer(branch_of(leaf), 0)); }

constexpr bool on_path(NodeId n, int path) {
    const auto p = path_nodes(path);
    return p[0] == n || p[1] == n || p[2] == n;
}

/// Children of `n` within the maze (start's children are the immediates).
inline std::vector<NodeId> children_of(NodeId n) {
    switch (level_of(n)) {
        case 0: return {immediate(0), immediate(1), immediate(2)};
        case 1: return {middle(branch_of(n))};
        case 2: return {outer(branch_of(n), 0), outer(branch_of(n), 1)};
        default: return {};
    }
}

/// All descendants ("successors") of `n`.
inline std::vector<NodeId> descendants_of(NodeId n) {
    std::vector<NodeId> out;
    std::vector<NodeId> stack = children_of(n);
    while (!stack.empty()) {
        const NodeId m = stack.back();
        stack.pop_back();
        out.push_back(m);
        for (NodeId c : children_of(m)) stack.push_back(c);
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Revealable ancestors of `n` (the start node is excluded).
inline std::vector<NodeId> ancestors_of(NodeId n) {
    std::vector<NodeId> out;
    for (NodeId p = parent_of(n); p > 0; p = parent_of(p)) out.push_back(p);
    return out;
}

}  // namespace maze

/// Value supports of the generative maze model. Non-target supports are artifact defaults.
struct RewardConfig {
    std::vector<int> immediate_support_positive{1, 2, 3, 4, 5};
    std::vector<int> immediate_support_negative{-5, -4, -3, -2, -1};
    std::vector<int> middle_support{-10, -5, 5, 10};
    std::vector<int> nontarget_outer_support{-20, -10, 10, 20};
    std::pair<int, int> target_outer_values{50, -50};
    int reward_min = -50;
    int reward_max = 50;

    void validate() const {
        require(!immediate_support_positive.empty() && !immediate_support_negative.empty() &&
                    !middle_support.empty() && !nontarget_outer_support.empty(),
                "reward supports must be non-empty");
        for (int v : immediate_support_positive) require(v > 0, "positive immediate support must be > 0");
        for (int v : immediate_support_negative) require(v < 0, "negative immediate support must be < 0");
        require(reward_min <= reward_max, "reward_min > reward_max");
        auto in_range = [&](int v) { return v >= reward_min && v <= reward_max; };
        for (const auto* s : {&immediate_support_positive, &immediate_support_negative, &middle_support,
                              &nontarget_outer_support})
            for (int v : *s) require(in_range(v), "support value outside [reward_min, reward_max]");
        require(in_range(target_outer_values.first) && in_range(target_outer_values.second),
                "target outer values outside [reward_min, reward_max]");
    }
};

/// Environment file contents: reward model plus per-level click fees.
struct EnvConfig {
    RewardConfig rewards;
    std::array<int, 3> click_cost_by_level{1, 3, 30};

    void validate() const {
        rewards.validate();
        for (int c : click_cost_by_level) require(c >= 0, "click costs must be non-negative");
    }
};

struct TrialGroundTruth {
    int config_id = 1;
    std::array<int, maze::kNodes> values{};  // values[0] (start) is always 0
    int target_branch = 0;
    std::array<int, 3> click_cost_by_level{1, 3, 30};

    int click_cost(NodeId n) const { return click_cost_by_level[maze::level_of(n) - 1]; }
};

/// Target branch and whether the first outer of that branch holds the first target value.
constexpr std::pair<int, bool> decode_config(int config_id) {
    return {(config_id - 1) / 2, (config_id - 1) % 2 == 0};
}

inline TrialGroundTruth generate_trial(const EnvConfig& env, Rng& rng, std::optional<int> config_id = {}) {
    if (config_id) require(*config_id >= 1 && *config_id <= maze::kConfigs, "config_id must be in 1..6");
    const RewardConfig& rc = env.rewards;
    auto pick = [&](const std::vector<int>& s) { return s[uniform_index(rng, s.size())]; };

    TrialGroundTruth t;
    t.config_id = config_id ? *config_id : 1 + static_cast<int>(uniform_index(rng, maze::kConfigs));
    t.click_cost_by_level = env.click_cost_by_level;
    const auto [target, first_high] = decode_config(t.config_id);
    t.target_branch = target;
    for (int b = 0; b < maze::kBranches; ++b) {
        t.values[maze::immediate(b)] =
            pick(b == target ? rc.immediate_support_positive : rc.immediate_support_negative);
        t.values[maze::middle(b)] = pick(rc.middle_support);
        if (b == target) {
            t.values[maze::outer(b, 0)] = first_high ? rc.target_outer_values.first : rc.target_outer_values.second;
            t.values[maze::outer(b, 1)] = first_high ? rc.target_outer_values.second : rc.target_outer_values.first;
        } else {
            t.values[maze::outer(b, 0)] = pick(rc.nontarget_outer_support);
            t.values[maze::outer(b, 1)] = pick(rc.nontarget_outer_support);
        }
    }
    return t;
}

inline TrialGroundTruth generate_trial(const EnvConfig& env, std::uint64_t seed, std::optional<int> config_id = {}) {
    Rng rng(seed);
    return generate_trial(env, rng, config_id);
}

/// The generative model as a mixture over the six configurations.
inline MixturePrior maze_prior(const RewardConfig& rc) {
    std::vector<Scenario> scenarios;
    for (int id = 1; id <= maze::kConfigs; ++id) {
        const auto [target, first_high] = decode_config(id);
        Scenario s;
        s.weight = 1.0;
        s.nodes.assign(maze::kNodes, DiscreteDistribution::point(0));
        for (int b = 0; b < maze::kBranches; ++b) {
            s.nodes[maze::immediate(b)] = DiscreteDistribution::uniform(
                b == target ? rc.immediate_support_positive : rc.immediate_support_negative);
            s.nodes[maze::middle(b)] = DiscreteDistribution::uniform(rc.middle_support);
            if (b == target) {
                const int hi = rc.target_outer_values.first;
                const int lo = rc.target_outer_values.second;
                s.nodes[maze::outer(b, 0)] = DiscreteDistribution::point(first_high ? hi : lo);
                s.nodes[maze::outer(b, 1)] = DiscreteDistribution::point(first_high ? lo : hi);
            } else {
                s.nodes[maze::outer(b, 0)] = DiscreteDistribution::uniform(rc.nontarget_outer_support);
                s.nodes[maze::outer(b, 1)] = DiscreteDistribution::uniform(rc.nontarget_outer_support);
            }
        }
        scenarios.push_back(std::move(s));
    }
    return MixturePrior(std::move(scenarios));
}

/// Observation counts accumulated over committed trials (habitual state).
struct CrossTrialCounters {
    std::array<int, maze::kNodes> node{};
    std::array<int, maze::kBranches> branch{};
    std::array<int, 3> level{};
    int total_clicks = 0;
    int trials = 0;
    std::array<double, maze::kNodes> value_sum{};
    std::array<double, maze::kNodes> value_sq_sum{};

    bool operator==(const CrossTrialCounters&) const = default;
};

using Observations = std::array<std::optional<int>, maze::kNodes>;

struct BeliefState {
    Observations observed{};
    std::vector<NodeId> click_history;
    CrossTrialCounters counters;
    int trial_index = 0;

    bool is_observed(NodeId n) const { return observed[n].has_value(); }
    int observed_count() const { return static_cast<int>(click_history.size()); }
};

/// ⊥ first, then unobserved nodes in ascending id order.
inline std::vector<NodeId> available_operations(const BeliefState& belief) {
    std::vector<NodeId> ops{kTerminate};
    for (NodeId n = 1; n <= maze::kRevealable; ++n)
        if (!belief.is_observed(n)) ops.push_back(n);
    return ops;
}

struct ClickOutcome {
    BeliefState belief;
    double meta_reward = 0.0;
};

inline ClickOutcome apply_click(const BeliefState& belief, NodeId node, const TrialGroundTruth& truth) {
    require(maze::is_valid_node(node), "invalid node id " + std::to_string(node));
    require(!belief.is_observed(node), "node " + std::to_string(node) + " is already observed");
    ClickOutcome out{belief, -static_cast<double>(truth.click_cost(node))};
    out.belief.observed[node] = truth.values[node];
    out.belief.click_history.push_back(node);
    return out;
}

/// Expected value of every path: observed nodes contribute their value, unobserved ones
/// their posterior mean.
inline std::array<double, maze::kPaths> path_expected_values(const Observations& observed, const Posterior& post) {
    std::array<double, maze::kPaths> ev{};
    for (int p = 0; p < maze::kPaths; ++p)
        for (NodeId n : maze::path_nodes(p)) ev[p] += observed[n] ? static_cast<double>(*observed[n]) : post.mean(n);
    return ev;
}

struct TerminationOutcome {
    std::vector<NodeId> chosen_path;  // start, immediate, middle, outer
    double external_return = 0.0;     // realized path sum
    double expected_return = 0.0;     // belief-expected path sum
};

inline std::vector<NodeId> full_path(int path) {
    const auto p = maze::path_nodes(path);
    return {kStartNode, p[0], p[1], p[2]};
}

/// Picks a maximum-expected-value path, breaking ties uniformly at random.
inline TerminationOutcome terminate_and_act(const BeliefState& belief, const TrialGroundTruth& truth,
                                            const MixturePrior& prior, Rng& rng) {
    const Posterior post = prior.condition(belief.observed);
    const auto ev = path_expected_values(belief.observed, post);
    const double best = *std::max_element(ev.begin(), ev.end());
    std::vector<int> ties;
    for (int p = 0; p < maze::kPaths; ++p)
        if (ev[p] >= best - 1e-9) ties.push_back(p);
    const int chosen = ties.size() == 1 ? ties.front() : ties[uniform_index(rng, ties.size())];
    TerminationOutcome out;
    out.chosen_path = full_path(chosen);
    out.expected_return = ev[chosen];
    for (NodeId n : maze::path_nodes(chosen)) out.external_return += truth.values[n];
    return out;
}

inline TerminationOutcome terminate_and_act(const BeliefState& belief, const TrialGroundTruth& truth,
                                            const MixturePrior& prior, std::uint64_t seed) {
    Rng rng(seed);
    return terminate_and_act(belief, truth, prior, rng);
}

struct TrialLog {
    std::string participant_id;
    int trial_index = 0;
    TrialGroundTruth ground_truth;
    std::vector<NodeId> clicks;
    bool terminated = true;
    std::vector<NodeId> chosen_path;
    int score = 0;
    std::vector<std::int64_t> click_timestamps_ms;  // empty for simulated logs
    bool partial = false;

    bool operator==(const TrialLog&) const = default;
};

inline bool operator==(const TrialGroundTruth& a, const TrialGroundTruth& b) {
    return a.config_id == b.config_id && a.values == b.values && a.target_branch == b.target_branch &&
           a.click_cost_by_level == b.click_cost_by_level;
}

/// Score identity: path sum minus the fees of every click.
inline int compute_score(const TrialGroundTruth& truth, std::span<const NodeId> clicks,
                         std::span<const NodeId> chosen_path) {
    int score = 0;
    for (NodeId n : chosen_path)
        if (n != kStartNode) score += truth.values[n];
    for (NodeId c : clicks) score -= truth.click_cost(c);
    return score;
}

/// Accepts [0, i, m, o] or [i, m, o]; returns the normalized 4-node form.
inline std::vector<NodeId> normalize_path(std::span<const NodeId> path) {
    std::vector<NodeId> p(path.begin(), path.end());
    if (p.size() == 3) p.insert(p.begin(), kStartNode);
    require(p.size() == 4 && p[0] == kStartNode, "path must run start -> immediate -> middle -> outer");
    require(maze::level_of(p[1]) == 1 && p[1] != kStartNode && maze::is_valid_node(p[1]), "path must start with an immediate node");
    require(p[2] == maze::middle(maze::branch_of(p[1])), "path middle node does not follow its immediate");
    require(maze::is_valid_node(p[3]) && maze::is_leaf(p[3]) && maze::parent_of(p[3]) == p[2],
            "path outer node does not follow its middle");
    return p;
}

inline void validate_log(const TrialLog& log) {
    std::array<bool, maze::kNodes> seen{};
    for (NodeId c : log.clicks) {
        require(maze::is_valid_node(c), "log " + log.participant_id + " trial " + std::to_string(log.trial_index) +
                                            ": invalid node id " + std::to_string(c));
        require(!seen[c], "log " + log.participant_id + " trial " + std::to_string(log.trial_index) +
                              ": duplicate click on node " + std::to_string(c));
        seen[c] = true;
    }
    if (log.terminated) normalize_path(log.chosen_path);
}

// ---------------------------------------------------------------------------------------------
// Adaptive-strategy classification

/// Length of the longest prefix of `clicks` that follows the resource-rational decision tree:
/// immediates (no repeats) until the positive branch is seen or inferred, then one outer node
/// of that branch.
inline int rr_consistent_prefix(std::span<const NodeId> clicks, std::span<const int> values) {
    int negatives = 0;
    int target = -1;
    std::array<bool, maze::kBranches> immediate_seen{};
    for (std::size_t i = 0; i < clicks.size(); ++i) {
        const NodeId c = clicks[i];
        if (target < 0) {
            if (!maze::is_valid_node(c) || maze::level_of(c) != 1) return static_cast<int>(i);
            const int b = maze::branch_of(c);
            if (immediate_seen[b]) return static_cast<int>(i);
            immediate_seen[b] = true;
            if (values[c] > 0) {
                target = b;
            } else if (++negatives == 2) {
                for (int k = 0; k < maze::kBranches; ++k)
                    if (!immediate_seen[k]) target = k;
            }
        } else {
            const bool ok = maze::is_valid_node(c) && maze::is_leaf(c) && maze::branch_of(c) == target;
            return static_cast<int>(i) + (ok ? 1 : 0);
        }
    }
    return static_cast<int>(clicks.size());
}

inline bool classify_adaptive(std::span<const NodeId> clicks, std::span<const int> values, bool terminated) {
    if (!terminated || clicks.empty()) return false;
    if (rr_consistent_prefix(clicks, values) != static_cast<int>(clicks.size())) return false;
    const NodeId last = clicks.back();
    return maze::is_valid_node(last) && maze::is_leaf(last);
}

inline bool classify_adaptive(const TrialLog& log) {
    return classify_adaptive(log.clicks, log.ground_truth.values, log.terminated);
}

/// Folds a finished trial into the habitual counters and resets the per-trial state.
inline BeliefState commit_trial(const BeliefState& belief, const TrialLog& log) {
    if (log.trial_index != belief.trial_index)
        throw ValidationError("trial index mismatch: belief at " + std::to_string(belief.trial_index) +
                              ", log at " + std::to_string(log.trial_index));
    BeliefState next;
    next.counters = belief.counters;
    auto& k = next.counters;
    for (NodeId c : log.clicks) {
        require(maze::is_valid_node(c), "invalid node id in log");
        ++k.node[c];
        ++k.branch[maze::branch_of(c)];
        ++k.level[maze::level_of(c) - 1];
        ++k.total_clicks;
        const double v = log.ground_truth.values[c];
        k.value_sum[c] += v;
        k.value_sq_sum[c] += v * v;
    }
    ++k.trials;
    next.trial_index = belief.trial_index + 1;
    return next;
}

}  // namespace mcrl
