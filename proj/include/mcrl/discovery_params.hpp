#pragma once

// Hyperparameters (raw space) under which the Reinforce learners discover the adaptive
// strategy from scratch. Features missing from a list start at weight 0.

#include <string_view>
#include <utility>

#include "mcrl/policy.hpp"

namespace mcrl {

namespace detail {

struct NamedWeight {
    std::string_view name;
    double value;
};

inline constexpr NamedWeight kHybridDiscoveryWeights[] = {
    {"all_leaf_nodes_observed", -24.185},
    {"all_roots_observed", -0.899},
    {"ancestor_count", 4.083},
    {"are_max_paths_observed", 1.896},
    {"avoid_first_level", 7.710},
    {"avoid_second_level", 0.837},
    {"avoid_third_level", -2.231},
    {"best_expected", -0.162},
    {"best_largest", 0.310},
    {"branch_count", -3.621},
    {"click_count", -7.801},
    {"constant", 6.277},
    {"count_observed_node_branch", 12.507},
    {"depth", -0.745},
    {"depth_count", -9.795},
    {"first_level", 1.058},
    {"get_level_observed_std", 1.104},
    {"hp_-24", 11.334},
    {"hp_-48", -1.320},
    {"hp_-8", 4.223},
    {"hp_0", -1.484},
    {"hs_0", 4.838},
    {"hs_16", -0.539},
    {"hs_24", 1.375},
    {"hs_32", 9.734},
    {"hs_40", 0.087},
    {"hs_48", 6.504},
    {"hs_8", -2.794},
    {"immediate_successor_count", -1.099},
    {"is_leaf", 20.615},
    {"is_max_path_observed", -5.304},
    {"is_pos_ancestor_leaf", -0.406},
    {"is_positive_observed", 0.096},
    {"is_previous_max", 3.762},
    {"is_previous_successor_negative", 0.678},
    {"is_root", 0.405},
    {"is_successor_highest", -0.007},
    {"level_count", -5.227},
    {"max_expected_return", 10.966},
    {"max_immediate_successor", 15.501},
    {"max_successor", 2.349},
    {"max_uncertainty", 0.210},
    {"most_promising", 1.926},
    {"num_clicks_adaptive", 1.029},
    {"observed_height", 0.734},
    {"parent_observed", -17.009},
    {"parent_value", -19.719},
    {"positive_root_leaves_termination", 16.189},
    {"previous_observed_successor", -0.727},
    {"second_level", -3.947},
    {"second_most_promising", -3.747},
    {"siblings_count", -0.260},
    {"single_path_completion", -1.075},
    {"soft_pruning", 8.520},
    {"soft_satisficing", 6.448},
    {"sq_successor_count", 5.950},
    {"successor_count", 13.358},
    {"successor_uncertainty", -8.152},
    {"termination_after_observing_positive_inner_and_one_outer", -19.781},
    {"termination_constant", -15.968},
    {"third_level", 11.377},
    {"trial_level_std", -7.485},
    {"uncertainty", -6.814},
};

inline constexpr NamedWeight kModelFreeDiscoveryWeights[] = {
    {"all_leaf_nodes_observed", -4.803},
    {"all_roots_observed", 13.337},
    {"ancestor_count", 9.967},
    {"are_max_paths_observed", 3.965},
    {"avoid_second_level", 18.046},
    {"avoid_third_level", -5.468},
    {"best_expected", -0.967},
    {"best_largest", 1.042},
    {"branch_count", 2.481},
    {"click_count", -12.353},
    {"constant", 0.385},
    {"count_observed_node_branch", 10.712},
    {"depth", -0.228},
    {"depth_count", 6.843},
    {"first_level", -1.147},
    {"hp_-24", 36.165},
    {"hp_-48", 1.531},
    {"hp_-8", 17.811},
    {"hp_0", 1.316},
    {"hs_0", 22.722},
    {"hs_16", -2.981},
    {"hs_24", 4.315},
    {"hs_32", -9.353},
    {"hs_40", 0.212},
    {"hs_48", 4.486},
    {"hs_8", -12.569},
    {"immediate_successor_count", -7.819},
    {"is_leaf", 31.170},
    {"is_max_path_observed", 0.571},
    {"is_pos_ancestor_leaf", 0.134},
    {"is_positive_observed", 17.585},
    {"is_previous_max", -5.603},
    {"is_previous_successor_negative", 2.420},
    {"is_root", -4.010},
    {"is_successor_highest", -0.549},
    {"level_count", 0.499},
    {"max_expected_return", 15.971},
    {"max_immediate_successor", -8.241},
    {"max_successor", -0.333},
    {"most_promising", -18.115},
    {"num_clicks_adaptive", -6.537},
    {"observed_height", -2.520},
    {"parent_observed", -4.105},
    {"parent_value", -34.131},
    {"positive_root_leaves_termination", 0.895},
    {"previous_observed_successor", -2.621},
    {"second_level", 23.600},
    {"second_most_promising", -3.218},
    {"siblings_count", 1.062},
    {"single_path_completion", -3.151},
    {"soft_pruning", 24.239},
    {"soft_satisficing", -9.083},
    {"sq_successor_count", -0.936},
    {"successor_count", -9.804},
    {"termination_after_observing_positive_inner_and_one_outer", 9.072},
    {"termination_constant", -0.168},
    {"third_level", -12.978},
};

template <std::size_t N>
FeatureVector weights_from(const NamedWeight (&list)[N]) {
    FeatureVector w{};
    for (const auto& nw : list) {
        const int i = feature_index(nw.name);
        if (i < 0) throw std::logic_error("unknown feature in weight table: " + std::string(nw.name));
        w[i] = nw.value;
    }
    return w;
}

}  // namespace detail

inline ReinforceHyper hybrid_discovery_hyper() {
    ReinforceHyper h;
    h.raw_gamma = -0.011;
    h.raw_temperature = -0.600;
    h.raw_learning_rate = -9.580;
    h.weights = detail::weights_from(detail::kHybridDiscoveryWeights);
    return h;
}

inline ReinforceHyper model_free_discovery_hyper() {
    ReinforceHyper h;
    h.raw_gamma = -0.038;
    h.raw_temperature = -0.963;
    h.raw_learning_rate = -10.220;
    h.weights = detail::weights_from(detail::kModelFreeDiscoveryWeights);
    return h;
}

}  // namespace mcrl
