#pragma once

// The 63-entry feature catalog f(b, c) over belief states and candidate operations.
//
// Names match the keys used in weight files so that weights can be loaded by name.

#include <array>
#include <bitset>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcrl/env.hpp"

namespace mcrl {

inline constexpr int kFeatureCount = 63;
using FeatureVector = std::array<double, kFeatureCount>;
using FeatureMask = std::bitset<kFeatureCount>;

enum class FeatureGroup {
    pavlovian,
    model_free_heuristic,
    mental_effort_avoidance,
    satisficing_stopping,
    model_based_metareasoning,
    habitual,
    constant
};

enum class AppliesTo { click, termination, both };

struct FeatureInfo {
    std::string_view name;
    FeatureGroup group;
    AppliesTo applies_to;
};

/// Catalog indices. Order is part of the weight-file format (catalog version below).
enum class Feature : int {
    // pavlovian
    best_expected,
    best_largest,
    is_successor_highest,
    max_expected_return,
    max_immediate_successor,
    max_successor,
    most_promising,
    parent_value,
    // model-free / structural heuristics
    ancestor_count,
    depth_count,
    immediate_successor_count,
    is_pos_ancestor_leaf,
    parent_observed,
    previous_observed_successor,
    siblings_count,
    sq_successor_count,
    successor_count,
    depth,
    observed_height,
    is_leaf,
    is_root,
    first_level,
    second_level,
    third_level,
    is_previous_successor_negative,
    num_clicks_adaptive,
    // mental-effort avoidance
    termination_constant,
    avoid_first_level,
    avoid_second_level,
    avoid_third_level,
    // satisficing, pruning and stopping
    hs_0,
    hs_8,
    hs_16,
    hs_24,
    hs_32,
    hs_40,
    hs_48,
    hp_0,
    hp_m8,
    hp_m24,
    hp_m48,
    soft_satisficing,
    soft_pruning,
    are_max_paths_observed,
    is_max_path_observed,
    is_positive_observed,
    is_previous_max,
    single_path_completion,
    all_roots_observed,
    all_leaf_nodes_observed,
    positive_root_leaves_termination,
    termination_after_observing_positive_inner_and_one_outer,
    // model-based metareasoning
    get_level_observed_std,
    max_uncertainty,
    second_most_promising,
    successor_uncertainty,
    trial_level_std,
    uncertainty,
    // habitual
    click_count,
    branch_count,
    level_count,
    count_observed_node_branch,
    // constant
    constant,
};

inline constexpr std::string_view kFeatureCatalogVersion = "mcrl-features-v1";

inline constexpr std::array<double, 7> kSatisficingThresholds{0, 8, 16, 24, 32, 40, 48};
inline constexpr std::array<double, 4> kPruningThresholds{0, -8, -24, -48};
// Expected values are sums of posterior means; ties at a threshold count as not exceeding it.
inline constexpr double kThresholdTolerance = 1e-9;

inline const std::array<FeatureInfo, kFeatureCount>& feature_catalog() {
    using G = FeatureGroup;
    using A = AppliesTo;
    static const std::array<FeatureInfo, kFeatureCount> catalog{{
        {"best_expected", G::pavlovian, A::click},
        {"best_largest", G::pavlovian, A::click},
        {"is_successor_highest", G::pavlovian, A::click},
        {"max_expected_return", G::pavlovian, A::click},
        {"max_immediate_successor", G::pavlovian, A::click},
        {"max_successor", G::pavlovian, A::click},
        {"most_promising", G::pavlovian, A::click},
        {"parent_value", G::pavlovian, A::click},
        {"ancestor_count", G::model_free_heuristic, A::click},
        {"depth_count", G::model_free_heuristic, A::click},
        {"immediate_successor_count", G::model_free_heuristic, A::click},
        {"is_pos_ancestor_leaf", G::model_free_heuristic, A::click},
        {"parent_observed", G::model_free_heuristic, A::click},
        {"previous_observed_successor", G::model_free_heuristic, A::click},
        {"siblings_count", G::model_free_heuristic, A::click},
        {"sq_successor_count", G::model_free_heuristic, A::click},
        {"successor_count", G::model_free_heuristic, A::click},
        {"depth", G::model_free_heuristic, A::click},
        {"observed_height", G::model_free_heuristic, A::click},
        {"is_leaf", G::model_free_heuristic, A::click},
        {"is_root", G::model_free_heuristic, A::click},
        {"first_level", G::model_free_heuristic, A::click},
        {"second_level", G::model_free_heuristic, A::click},
        {"third_level", G::model_free_heuristic, A::click},
        {"is_previous_successor_negative", G::model_free_heuristic, A::click},
        {"num_clicks_adaptive", G::model_free_heuristic, A::click},
        {"termination_constant", G::mental_effort_avoidance, A::click},
        {"avoid_first_level", G::mental_effort_avoidance, A::click},
        {"avoid_second_level", G::mental_effort_avoidance, A::click},
        {"avoid_third_level", G::mental_effort_avoidance, A::click},
        {"hs_0", G::satisficing_stopping, A::click},
        {"hs_8", G::satisficing_stopping, A::click},
        {"hs_16", G::satisficing_stopping, A::click},
        {"hs_24", G::satisficing_stopping, A::click},
        {"hs_32", G::satisficing_stopping, A::click},
        {"hs_40", G::satisficing_stopping, A::click},
        {"hs_48", G::satisficing_stopping, A::click},
        {"hp_0", G::satisficing_stopping, A::click},
        {"hp_-8", G::satisficing_stopping, A::click},
        {"hp_-24", G::satisficing_stopping, A::click},
        {"hp_-48", G::satisficing_stopping, A::click},
        {"soft_satisficing", G::satisficing_stopping, A::termination},
        {"soft_pruning", G::satisficing_stopping, A::click},
        {"are_max_paths_observed", G::satisficing_stopping, A::click},
        {"is_max_path_observed", G::satisficing_stopping, A::click},
        {"is_positive_observed", G::satisficing_stopping, A::click},
        {"is_previous_max", G::satisficing_stopping, A::click},
        {"single_path_completion", G::satisficing_stopping, A::click},
        {"all_roots_observed", G::satisficing_stopping, A::click},
        {"all_leaf_nodes_observed", G::satisficing_stopping, A::click},
        {"positive_root_leaves_termination", G::satisficing_stopping, A::both},
        {"termination_after_observing_positive_inner_and_one_outer", G::satisficing_stopping, A::both},
        {"get_level_observed_std", G::model_based_metareasoning, A::click},
        {"max_uncertainty", G::model_based_metareasoning, A::click},
        {"second_most_promising", G::model_based_metareasoning, A::click},
        {"successor_uncertainty", G::model_based_metareasoning, A::click},
        {"trial_level_std", G::model_based_metareasoning, A::click},
        {"uncertainty", G::model_based_metareasoning, A::click},
        {"click_count", G::habitual, A::click},
        {"branch_count", G::habitual, A::click},
        {"level_count", G::habitual, A::click},
        {"count_observed_node_branch", G::habitual, A::click},
        {"constant", G::constant, A::both},
    }};
    return catalog;
}

constexpr int index_of(Feature f) { return static_cast<int>(f); }

/// Catalog index of `name`, or -1.
inline int feature_index(std::string_view name) {
    const auto& cat = feature_catalog();
    for (int i = 0; i < kFeatureCount; ++i)
        if (cat[i].name == name) return i;
    return -1;
}

inline std::string_view to_string(FeatureGroup g) {
    switch (g) {
        case FeatureGroup::pavlovian: return "pavlovian";
        case FeatureGroup::model_free_heuristic: return "model_free_heuristic";
        case FeatureGroup::mental_effort_avoidance: return "mental_effort_avoidance";
        case FeatureGroup::satisficing_stopping: return "satisficing_stopping";
        case FeatureGroup::model_based_metareasoning: return "model_based_metareasoning";
        case FeatureGroup::habitual: return "habitual";
        case FeatureGroup::constant: return "constant";
    }
    return "?";
}

inline std::string_view to_string(AppliesTo a) {
    switch (a) {
        case AppliesTo::click: return "click";
        case AppliesTo::termination: return "termination";
        case AppliesTo::both: return "both";
    }
    return "?";
}

enum class FeatureVariant { hybrid, model_free, non_learning };

inline FeatureMask mask_for_variant(FeatureVariant variant) {
    FeatureMask mask;
    const auto& cat = feature_catalog();
    for (int i = 0; i < kFeatureCount; ++i) {
        const FeatureGroup g = cat[i].group;
        bool on = true;
        if (variant != FeatureVariant::hybrid && g == FeatureGroup::model_based_metareasoning) on = false;
        if (variant == FeatureVariant::non_learning && g == FeatureGroup::habitual) on = false;
        mask[i] = on;
    }
    return mask;
}

/// How habitual counters enter the features.
enum class HabitScale {
    counts,  // raw cross-trial counts
    rates    // counts divided by the number of committed trials
};

/// Whether raw feature values are divided by a fixed per-feature range.
enum class FeatureScaling { none, range };

FeatureVector feature_ranges(const EnvConfig& env, const MixturePrior& prior);

/// Everything features need besides the belief: the environment and its generative model.
struct FeatureContext {
    EnvConfig env;
    MixturePrior prior;
    std::array<double, maze::kNodes> marginal_std{};
    HabitScale habit_scale = HabitScale::rates;
    FeatureScaling scaling = FeatureScaling::range;
    FeatureVector range{};  // divisor per feature when scaling == range

    FeatureContext() : FeatureContext(EnvConfig{}) {}
    explicit FeatureContext(EnvConfig e, HabitScale habits = HabitScale::rates,
                            FeatureScaling scale = FeatureScaling::range)
        : env(std::move(e)), prior(maze_prior(env.rewards)), habit_scale(habits), scaling(scale) {
        const Posterior p = prior.unconditioned();
        for (NodeId n = 1; n <= maze::kRevealable; ++n) marginal_std[n] = std::sqrt(p.variance(n));
        range = feature_ranges(env, prior);
    }
};

/// Belief-level quantities shared by the features of every operation in one belief state.
struct BeliefSummary {
    std::array<double, maze::kNodes> mean{};
    std::array<double, maze::kNodes> stddev{};
    std::array<double, maze::kPaths> path_ev{};
    std::array<double, maze::kPaths> path_uncertainty{};
    double max_ev = 0.0;
    std::optional<double> second_ev;
    std::array<double, 4> level_observed_std{};  // indexed by level
    NodeId last_click = -1;
    int rr_prefix = 0;
    bool positive_observed = false;
    bool max_value_observed = false;
    bool previous_max = false;
    bool complete_path_observed = false;
    bool all_roots_observed = false;
    bool all_leaves_observed = false;
    bool max_paths_observed = false;
    bool positive_root_leaves = false;
    bool positive_inner_and_outer = false;
};

inline BeliefSummary summarize(const BeliefState& b, const FeatureContext& ctx) {
    BeliefSummary s;
    const Posterior post = ctx.prior.condition(b.observed);
    const int rmax = ctx.env.rewards.reward_max;
    for (NodeId n = 1; n <= maze::kRevealable; ++n) {
        if (b.observed[n]) {
            s.mean[n] = *b.observed[n];
            s.stddev[n] = 0.0;
        } else {
            s.mean[n] = post.mean(n);
            s.stddev[n] = std::sqrt(post.variance(n));
        }
    }
    for (int p = 0; p < maze::kPaths; ++p) {
        double var = 0.0;
        for (NodeId n : maze::path_nodes(p)) {
            s.path_ev[p] += s.mean[n];
            var += s.stddev[n] * s.stddev[n];
        }
        s.path_uncertainty[p] = std::sqrt(var);
    }
    s.max_ev = *std::max_element(s.path_ev.begin(), s.path_ev.end());
    for (double ev : s.path_ev)
        if (ev < s.max_ev - 1e-9 && (!s.second_ev || ev > *s.second_ev)) s.second_ev = ev;

    for (int level = 1; level <= 3; ++level) {
        double sum = 0.0, sq = 0.0;
        int k = 0;
        for (NodeId n = 1; n <= maze::kRevealable; ++n)
            if (maze::level_of(n) == level && b.observed[n]) {
                sum += *b.observed[n];
                sq += static_cast<double>(*b.observed[n]) * *b.observed[n];
                ++k;
            }
        if (k >= 2) {
            const double m = sum / k;
            s.level_observed_std[level] = std::sqrt(std::max(0.0, sq / k - m * m));
        }
    }

    std::array<int, maze::kNodes> values{};
    for (NodeId n = 1; n <= maze::kRevealable; ++n) values[n] = b.observed[n].value_or(0);
    s.rr_prefix = rr_consistent_prefix(b.click_history, values);
    if (!b.click_history.empty()) {
        s.last_click = b.click_history.back();
        s.previous_max = *b.observed[s.last_click] == rmax;
    }

    s.all_roots_observed = true;
    s.all_leaves_observed = true;
    for (NodeId n = 1; n <= maze::kRevealable; ++n) {
        const bool obs = b.observed[n].has_value();
        if (obs && *b.observed[n] > 0) s.positive_observed = true;
        if (obs && *b.observed[n] == rmax) s.max_value_observed = true;
        if (maze::level_of(n) == 1 && !obs) s.all_roots_observed = false;
        if (maze::is_leaf(n) && !obs) s.all_leaves_observed = false;
    }
    for (int p = 0; p < maze::kPaths; ++p) {
        bool full = true;
        for (NodeId n : maze::path_nodes(p)) full = full && b.observed[n].has_value();
        s.complete_path_observed = s.complete_path_observed || full;
    }

    // Max observed outer value; all max-valued observed outers must have fully observed paths.
    std::optional<int> best_leaf;
    for (NodeId n = 1; n <= maze::kRevealable; ++n)
        if (maze::is_leaf(n) && b.observed[n] && (!best_leaf || *b.observed[n] > *best_leaf)) best_leaf = *b.observed[n];
    if (best_leaf) {
        s.max_paths_observed = true;
        for (NodeId n = 1; n <= maze::kRevealable; ++n) {
            if (!maze::is_leaf(n) || !b.observed[n] || *b.observed[n] != *best_leaf) continue;
            for (NodeId a : maze::ancestors_of(n)) s.max_paths_observed = s.max_paths_observed && b.observed[a].has_value();
        }
    }

    bool any_positive_root = false;
    bool leaves_covered = true;
    for (int br = 0; br < maze::kBranches; ++br) {
        const NodeId root = maze::immediate(br);
        if (!b.observed[root] || *b.observed[root] <= 0) continue;
        any_positive_root = true;
        const bool o0 = b.observed[maze::outer(br, 0)].has_value();
        const bool o1 = b.observed[maze::outer(br, 1)].has_value();
        leaves_covered = leaves_covered && o0 && o1;
        s.positive_inner_and_outer = s.positive_inner_and_outer || o0 || o1;
    }
    s.positive_root_leaves = any_positive_root && leaves_covered;
    return s;
}

namespace detail {

inline double habit_value(int count, const BeliefState& b, const FeatureContext& ctx) {
    if (ctx.habit_scale == HabitScale::counts) return count;
    return b.counters.trials > 0 ? static_cast<double>(count) / b.counters.trials : 0.0;
}

inline int observed_height(const BeliefState& b, NodeId n) {
    int h = 0;
    for (NodeId c : maze::children_of(n))
        if (b.observed[c]) h = std::max(h, 1 + observed_height(b, c));
    return h;
}

/// Termination-condition encoding: when the condition holds clicking is discouraged,
/// otherwise termination is.
inline double stopping_condition(bool holds, bool is_click) {
    if (holds) return is_click ? -1.0 : 0.0;
    return is_click ? 0.0 : -1.0;
}

}  // namespace detail

/// Unscaled feature values.
inline FeatureVector compute_raw_features(const BeliefSummary& s, const BeliefState& b, NodeId op,
                                          const FeatureContext& ctx) {
    FeatureVector f{};
    auto set = [&f](Feature k, double v) { f[index_of(k)] = v; };
    const bool click = op != kTerminate;

    set(Feature::constant, 1.0);
    set(Feature::positive_root_leaves_termination, detail::stopping_condition(s.positive_root_leaves, click));
    set(Feature::termination_after_observing_positive_inner_and_one_outer,
        detail::stopping_condition(s.positive_inner_and_outer, click));
    if (!click) {
        set(Feature::soft_satisficing, s.max_ev);
        return f;
    }

    const NodeId n = op;
    const int level = maze::level_of(n);
    const int branch = maze::branch_of(n);
    const NodeId parent = maze::parent_of(n);
    const auto desc = maze::descendants_of(n);
    const auto kids = maze::children_of(n);
    const auto anc = maze::ancestors_of(n);

    // Paths through n and the nodes they contain.
    double best_ev = -std::numeric_limits<double>::infinity();
    double best_unc = 0.0;
    bool on_best = false;
    bool on_second = false;
    std::optional<int> largest;
    for (int p = 0; p < maze::kPaths; ++p) {
        if (!maze::on_path(n, p)) continue;
        best_ev = std::max(best_ev, s.path_ev[p]);
        best_unc = std::max(best_unc, s.path_uncertainty[p]);
        on_best = on_best || s.path_ev[p] >= s.max_ev - 1e-9;
        on_second = on_second || (s.second_ev && std::abs(s.path_ev[p] - *s.second_ev) <= 1e-9);
        for (NodeId m : maze::path_nodes(p))
            if (b.observed[m] && (!largest || *b.observed[m] > *largest)) largest = *b.observed[m];
    }

    std::optional<int> max_child, max_desc;
    int child_obs = 0, desc_obs = 0;
    bool desc_highest = false;
    double desc_unc = 0.0;
    for (NodeId d : desc) {
        desc_unc += s.stddev[d];
        if (!b.observed[d]) continue;
        ++desc_obs;
        if (!max_desc || *b.observed[d] > *max_desc) max_desc = *b.observed[d];
        if (*b.observed[d] == ctx.env.rewards.reward_max) desc_highest = true;
    }
    for (NodeId c : kids)
        if (b.observed[c]) {
            ++child_obs;
            if (!max_child || *b.observed[c] > *max_child) max_child = *b.observed[c];
        }

    int anc_obs = 0;
    bool positive_ancestor = false;
    for (NodeId a : anc)
        if (b.observed[a]) {
            ++anc_obs;
            positive_ancestor = positive_ancestor || *b.observed[a] > 0;
        }

    int same_depth = 0;
    int siblings = 0;
    for (NodeId m = 1; m <= maze::kRevealable; ++m) {
        if (!b.observed[m]) continue;
        if (maze::level_of(m) == level) ++same_depth;
        if (m != n && maze::parent_of(m) == parent) ++siblings;
    }

    const bool parent_obs = parent != kStartNode && b.observed[parent].has_value();
    const bool last_is_desc =
        s.last_click > 0 && std::find(desc.begin(), desc.end(), s.last_click) != desc.end();
    const bool last_is_child =
        s.last_click > 0 && std::find(kids.begin(), kids.end(), s.last_click) != kids.end();

    set(Feature::best_expected, best_ev);
    set(Feature::best_largest, largest.value_or(0));
    set(Feature::is_successor_highest, desc_highest ? 1.0 : 0.0);
    set(Feature::max_expected_return, s.max_ev);
    set(Feature::max_immediate_successor, max_child.value_or(0));
    set(Feature::max_successor, max_desc.value_or(0));
    set(Feature::most_promising, on_best ? 1.0 : 0.0);
    set(Feature::parent_value, parent_obs ? *b.observed[parent] : 0.0);

    set(Feature::ancestor_count, anc_obs);
    set(Feature::depth_count, same_depth);
    set(Feature::immediate_successor_count, child_obs);
    set(Feature::is_pos_ancestor_leaf, maze::is_leaf(n) && positive_ancestor ? 1.0 : 0.0);
    set(Feature::parent_observed, parent_obs ? 1.0 : 0.0);
    set(Feature::previous_observed_successor, last_is_desc ? 1.0 : 0.0);
    set(Feature::siblings_count, siblings);
    set(Feature::sq_successor_count, static_cast<double>(desc_obs) * desc_obs);
    set(Feature::successor_count, desc_obs);
    set(Feature::depth, level);
    set(Feature::observed_height, detail::observed_height(b, n));
    set(Feature::is_leaf, maze::is_leaf(n) ? 1.0 : 0.0);
    set(Feature::is_root, level == 1 ? 1.0 : 0.0);
    set(Feature::first_level, level == 1 ? 1.0 : 0.0);
    set(Feature::second_level, level == 2 ? 1.0 : 0.0);
    set(Feature::third_level, level == 3 ? 1.0 : 0.0);
    set(Feature::is_previous_successor_negative, last_is_child && *b.observed[s.last_click] < 0 ? 1.0 : 0.0);
    set(Feature::num_clicks_adaptive, s.rr_prefix);

    set(Feature::termination_constant, 1.0);
    set(Feature::avoid_first_level, level == 1 ? -1.0 : 0.0);
    set(Feature::avoid_second_level, level == 2 ? -1.0 : 0.0);
    set(Feature::avoid_third_level, level == 3 ? -1.0 : 0.0);

    for (std::size_t i = 0; i < kSatisficingThresholds.size(); ++i)
        f[index_of(Feature::hs_0) + static_cast<int>(i)] = s.max_ev > kSatisficingThresholds[i] + kThresholdTolerance ? -1.0 : 0.0;
    for (std::size_t i = 0; i < kPruningThresholds.size(); ++i)
        f[index_of(Feature::hp_0) + static_cast<int>(i)] = s.max_ev < kPruningThresholds[i] - kThresholdTolerance ? -1.0 : 0.0;
    set(Feature::soft_pruning, std::min(0.0, best_ev));
    set(Feature::are_max_paths_observed, s.max_paths_observed ? -1.0 : 0.0);
    set(Feature::is_max_path_observed, s.max_value_observed ? -1.0 : 0.0);
    set(Feature::is_positive_observed, s.positive_observed ? -1.0 : 0.0);
    set(Feature::is_previous_max, s.previous_max ? -1.0 : 0.0);
    set(Feature::single_path_completion, s.complete_path_observed ? -1.0 : 0.0);
    set(Feature::all_roots_observed, s.all_roots_observed ? -1.0 : 0.0);
    set(Feature::all_leaf_nodes_observed, s.all_leaves_observed ? -1.0 : 0.0);

    set(Feature::get_level_observed_std, s.level_observed_std[level]);
    set(Feature::max_uncertainty, best_unc);
    set(Feature::second_most_promising, on_second ? 1.0 : 0.0);
    set(Feature::successor_uncertainty, desc_unc);
    {
        const int k = b.counters.node[n];
        double sd = ctx.marginal_std[n];
        if (k >= 2) {
            const double m = b.counters.value_sum[n] / k;
            sd = std::sqrt(std::max(0.0, b.counters.value_sq_sum[n] / k - m * m));
        }
        set(Feature::trial_level_std, sd);
    }
    set(Feature::uncertainty, s.stddev[n]);

    set(Feature::click_count, detail::habit_value(b.counters.total_clicks, b, ctx));
    set(Feature::branch_count, detail::habit_value(b.counters.branch[branch], b, ctx));
    set(Feature::level_count, detail::habit_value(b.counters.level[level - 1], b, ctx));
    set(Feature::count_observed_node_branch, detail::habit_value(b.counters.node[n], b, ctx));
    return f;
}

/// Extent of every feature under the environment: value features by the largest attainable
/// magnitude, uncertainty features by their prior value, counts by their maximum.
inline FeatureVector feature_ranges(const EnvConfig& env, const MixturePrior& prior) {
    const RewardConfig& rc = env.rewards;
    auto max_abs = [](const std::vector<int>& s) {
        int m = 0;
        for (int v : s) m = std::max(m, std::abs(v));
        return static_cast<double>(m);
    };
    const double node_bound = std::max(std::abs(rc.reward_min), std::abs(rc.reward_max));
    const double outer_bound = std::max({max_abs(rc.nontarget_outer_support), std::abs(rc.target_outer_values.first) * 1.0,
                                         std::abs(rc.target_outer_values.second) * 1.0});
    const double path_bound = std::max(max_abs(rc.immediate_support_positive), max_abs(rc.immediate_support_negative)) +
                              max_abs(rc.middle_support) + outer_bound;
    const Posterior post = prior.unconditioned();
    double node_sd = 0.0, succ_sd = 0.0, path_sd = 0.0;
    for (NodeId n = 1; n <= maze::kRevealable; ++n) {
        node_sd = std::max(node_sd, std::sqrt(post.variance(n)));
        double s = 0.0;
        for (NodeId d : maze::descendants_of(n)) s += std::sqrt(post.variance(d));
        succ_sd = std::max(succ_sd, s);
    }
    for (int p = 0; p < maze::kPaths; ++p) {
        double v = 0.0;
        for (NodeId n : maze::path_nodes(p)) v += post.variance(n);
        path_sd = std::max(path_sd, std::sqrt(v));
    }

    FeatureVector r;
    r.fill(1.0);
    auto set = [&r](Feature f, double v) { r[index_of(f)] = v > 0.0 ? v : 1.0; };
    for (Feature f : {Feature::best_expected, Feature::max_expected_return, Feature::soft_satisficing, Feature::soft_pruning})
        set(f, path_bound);
    for (Feature f : {Feature::best_largest, Feature::max_immediate_successor, Feature::max_successor, Feature::parent_value})
        set(f, node_bound);
    set(Feature::ancestor_count, 2);
    set(Feature::depth_count, 6);
    set(Feature::immediate_successor_count, 2);
    set(Feature::siblings_count, 2);
    set(Feature::successor_count, 3);
    set(Feature::sq_successor_count, 9);
    set(Feature::depth, 3);
    set(Feature::observed_height, 2);
    set(Feature::num_clicks_adaptive, 4);
    set(Feature::get_level_observed_std, node_bound);
    set(Feature::max_uncertainty, path_sd);
    set(Feature::successor_uncertainty, succ_sd);
    set(Feature::trial_level_std, node_sd);
    set(Feature::uncertainty, node_sd);
    set(Feature::click_count, maze::kRevealable);
    set(Feature::branch_count, 4);
    set(Feature::level_count, 6);
    set(Feature::count_observed_node_branch, 1);
    return r;
}

inline FeatureVector scaled(FeatureVector f, const FeatureContext& ctx) {
    if (ctx.scaling == FeatureScaling::range)
        for (int j = 0; j < kFeatureCount; ++j) f[j] /= ctx.range[j];
    return f;
}

inline FeatureVector compute_features(const BeliefState& b, NodeId op, const FeatureContext& ctx) {
    require(op == kTerminate || (maze::is_valid_node(op) && !b.is_observed(op)),
            "operation " + std::to_string(op) + " is not available");
    return scaled(compute_raw_features(summarize(b, ctx), b, op, ctx), ctx);
}

/// Features of every available operation, in available_operations() order.
struct OperationFeatures {
    std::vector<NodeId> ops;
    std::vector<FeatureVector> features;
};

inline OperationFeatures compute_all_features(const BeliefState& b, const FeatureContext& ctx) {
    OperationFeatures out;
    out.ops = available_operations(b);
    const BeliefSummary s = summarize(b, ctx);
    out.features.reserve(out.ops.size());
    for (NodeId op : out.ops) out.features.push_back(scaled(compute_raw_features(s, b, op, ctx), ctx));
    return out;
}

}  // namespace mcrl
