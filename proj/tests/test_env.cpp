#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "mcrl/model.hpp"

using namespace mcrl;

namespace {

BeliefState observe(const TrialGroundTruth& t, std::initializer_list<NodeId> nodes) {
    BeliefState b;
    for (NodeId n : nodes) b = apply_click(b, n, t).belief;
    return b;
}

}  // namespace

TEST(Maze, StructureIsThreeBranchesOfOneOneTwo) {
    int immediates = 0, middles = 0, outers = 0;
    for (NodeId n = 1; n <= maze::kRevealable; ++n) {
        const int l = maze::level_of(n);
        immediates += l == 1;
        middles += l == 2;
        outers += l == 3;
        if (l == 3) {
            EXPECT_EQ(maze::level_of(maze::parent_of(n)), 2);
            EXPECT_EQ(maze::level_of(maze::parent_of(maze::parent_of(n))), 1);
        }
    }
    EXPECT_EQ(immediates, 3);
    EXPECT_EQ(middles, 3);
    EXPECT_EQ(outers, 6);
    EXPECT_EQ(EnvConfig{}.click_cost_by_level, (std::array<int, 3>{1, 3, 30}));
}

TEST(GenerateTrial, InvariantsHoldForEverySeedAndConfig) {
    const EnvConfig env;
    for (int config = 1; config <= 6; ++config) {
        for (std::uint64_t seed = 0; seed < 10000; ++seed) {
            const auto t = generate_trial(env, seed, config);
            ASSERT_EQ(t.config_id, config);
            int positive = 0;
            for (int b = 0; b < 3; ++b) positive += t.values[maze::immediate(b)] > 0;
            ASSERT_EQ(positive, 1);
            ASSERT_GT(t.values[maze::immediate(t.target_branch)], 0);
            std::multiset<int> outers{t.values[maze::outer(t.target_branch, 0)], t.values[maze::outer(t.target_branch, 1)]};
            ASSERT_EQ(outers, (std::multiset<int>{50, -50}));
            for (NodeId n = 1; n <= 12; ++n) {
                ASSERT_GE(t.values[n], env.rewards.reward_min);
                ASSERT_LE(t.values[n], env.rewards.reward_max);
            }
        }
    }
}

TEST(GenerateTrial, ConfigDeterminesTargetAndPlacement) {
    for (int config = 1; config <= 6; ++config) {
        const auto t = generate_trial(EnvConfig{}, 7, config);
        EXPECT_EQ(t.target_branch, (config - 1) / 2);
        EXPECT_EQ(t.values[maze::outer(t.target_branch, 0)] == 50, (config - 1) % 2 == 0);
    }
}

TEST(GenerateTrial, ConfigOutOfRangeIsRejected) {
    EXPECT_THROW(generate_trial(EnvConfig{}, 1, 0), ValidationError);
    EXPECT_THROW(generate_trial(EnvConfig{}, 1, 7), ValidationError);
}

TEST(GenerateTrial, SameSeedSameValues) {
    EXPECT_EQ(generate_trial(EnvConfig{}, 42, 1).values, generate_trial(EnvConfig{}, 42, 1).values);
    EXPECT_EQ(generate_trial(EnvConfig{}, 42).values, generate_trial(EnvConfig{}, 42).values);
}

TEST(GenerateTrial, UnspecifiedConfigCoversAllSix) {
    std::set<int> seen;
    for (std::uint64_t s = 0; s < 200; ++s) seen.insert(generate_trial(EnvConfig{}, s).config_id);
    EXPECT_EQ(seen.size(), 6u);
}

TEST(AvailableOperations, CountsAndContents) {
    const auto t = generate_trial(EnvConfig{}, 3, 1);
    BeliefState b;
    EXPECT_EQ(available_operations(b).size(), 13u);
    b = apply_click(b, 5, t).belief;
    const auto ops = available_operations(b);
    EXPECT_EQ(ops.size(), 12u);
    EXPECT_EQ(ops.front(), kTerminate);
    EXPECT_EQ(std::count(ops.begin(), ops.end(), 5), 0);
    for (NodeId n = 1; n <= 12; ++n)
        if (!b.is_observed(n)) b = apply_click(b, n, t).belief;
    EXPECT_EQ(available_operations(b), std::vector<NodeId>{kTerminate});
}

TEST(ApplyClick, FeesByLevelAndRevealedValue) {
    const auto t = generate_trial(EnvConfig{}, 11, 2);
    const auto c1 = apply_click(BeliefState{}, 1, t);
    EXPECT_EQ(c1.meta_reward, -1.0);
    EXPECT_EQ(*c1.belief.observed[1], t.values[1]);
    EXPECT_EQ(apply_click(BeliefState{}, 2, t).meta_reward, -3.0);
    EXPECT_EQ(apply_click(BeliefState{}, 3, t).meta_reward, -30.0);
    EXPECT_EQ(c1.belief.counters, CrossTrialCounters{});
}

TEST(ApplyClick, RepeatAndInvalidAreErrors) {
    const auto t = generate_trial(EnvConfig{}, 11, 2);
    const auto b = apply_click(BeliefState{}, 4, t).belief;
    EXPECT_THROW(apply_click(b, 4, t), ValidationError);
    EXPECT_THROW(apply_click(b, 0, t), ValidationError);
    EXPECT_THROW(apply_click(b, 13, t), ValidationError);
}

TEST(TerminateAndAct, FullyObservedPicksBestRealizedPath) {
    const FeatureContext ctx;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto t = generate_trial(ctx.env, s);
        BeliefState b;
        for (NodeId n = 1; n <= 12; ++n) b = apply_click(b, n, t).belief;
        const auto r = terminate_and_act(b, t, ctx.prior, s);
        int best = -1000;
        for (int p = 0; p < 6; ++p) {
            int sum = 0;
            for (NodeId n : maze::path_nodes(p)) sum += t.values[n];
            best = std::max(best, sum);
        }
        EXPECT_EQ(r.external_return, best);
    }
}

TEST(TerminateAndAct, ObservedPositiveBranchAndFiftyIsChosen) {
    const FeatureContext ctx;
    const auto t = generate_trial(ctx.env, 5, 3);  // target branch 1, +50 on node 7
    ASSERT_EQ(t.values[7], 50);
    const auto b = observe(t, {5, 7});
    // Hand oracle: the observed path is immediate + E[middle] + 50 = v5 + 0 + 50; every other
    // path has expected value at most E[negative immediate] + 0 + E[outer] < 0, and the sibling
    // outer on branch 1 is known to be -50.
    const auto post = ctx.prior.condition(b.observed);
    const auto ev = path_expected_values(b.observed, post);
    EXPECT_NEAR(ev[2], t.values[5] + 0.0 + 50.0, 1e-12);
    EXPECT_NEAR(ev[3], t.values[5] + 0.0 - 50.0, 1e-12);
    for (int p : {0, 1, 4, 5}) EXPECT_NEAR(ev[p], -3.0 + 0.0 + 0.0, 1e-12);
    const auto r = terminate_and_act(b, t, ctx.prior, 1);
    EXPECT_EQ(r.chosen_path, (std::vector<NodeId>{0, 5, 6, 7}));
    EXPECT_EQ(r.external_return, t.values[5] + t.values[6] + 50);
}

TEST(TerminateAndAct, EmptyBeliefSpreadsOverAllPaths) {
    const FeatureContext ctx;
    const auto t = generate_trial(ctx.env, 9, 1);
    std::map<int, int> counts;
    for (std::uint64_t s = 0; s < 6000; ++s) counts[maze::path_of_leaf(terminate_and_act(BeliefState{}, t, ctx.prior, s).chosen_path[3])]++;
    ASSERT_EQ(counts.size(), 6u);
    for (const auto& [p, c] : counts) EXPECT_NEAR(c / 6000.0, 1.0 / 6.0, 0.03);
}

TEST(ClassifyAdaptive, Examples) {
    const auto t = generate_trial(EnvConfig{}, 1, 1);  // target branch 0, +50 on node 3
    const auto& v = t.values;
    EXPECT_TRUE(classify_adaptive(std::vector<NodeId>{1, 3}, v, true));
    EXPECT_FALSE(classify_adaptive(std::vector<NodeId>{}, v, true));
    EXPECT_FALSE(classify_adaptive(std::vector<NodeId>{1, 2, 3}, v, true));
    EXPECT_FALSE(classify_adaptive(std::vector<NodeId>{1, 3, 4}, v, true));
    EXPECT_FALSE(classify_adaptive(std::vector<NodeId>{1, 5, 3}, v, true));  // third-party immediate after identification
    EXPECT_TRUE(classify_adaptive(std::vector<NodeId>{5, 9, 4}, v, true));   // inferred from two negatives
    EXPECT_FALSE(classify_adaptive(std::vector<NodeId>{1, 3}, v, false));
}

// Brute-force oracle: the RR decision tree over every immediate ordering, against every click
// sequence of up to four distinct nodes.
TEST(ClassifyAdaptive, AcceptsExactlyTheDecisionTreeSequences) {
    for (int config = 1; config <= 6; ++config) {
        const auto t = generate_trial(EnvConfig{}, 100 + config, config);
        std::set<std::vector<NodeId>> tree;
        std::vector<int> order{0, 1, 2};
        do {
            std::vector<NodeId> seq;
            int negatives = 0, target = -1;
            for (int b : order) {
                seq.push_back(maze::immediate(b));
                if (t.values[maze::immediate(b)] > 0) {
                    target = b;
                    break;
                }
                if (++negatives == 2) {
                    target = 3 - order[0] - order[1];
                    break;
                }
            }
            for (int w = 0; w < 2; ++w) {
                auto s = seq;
                s.push_back(maze::outer(target, w));
                tree.insert(s);
            }
        } while (std::next_permutation(order.begin(), order.end()));

        std::vector<NodeId> seq;
        std::function<void()> rec = [&] {
            const bool expected = tree.count(seq) > 0;
            ASSERT_EQ(classify_adaptive(seq, t.values, true), expected) << "config " << config;
            if (seq.size() == 4) return;
            for (NodeId n = 1; n <= 12; ++n) {
                if (std::find(seq.begin(), seq.end(), n) != seq.end()) continue;
                seq.push_back(n);
                rec();
                seq.pop_back();
            }
        };
        rec();
        // Longer sequences never qualify.
        Rng rng(config);
        for (int k = 0; k < 500; ++k) {
            std::vector<NodeId> s(12);
            std::iota(s.begin(), s.end(), 1);
            std::shuffle(s.begin(), s.end(), rng);
            s.resize(5 + k % 8);
            EXPECT_FALSE(classify_adaptive(s, t.values, true));
        }
    }
}

TEST(CommitTrial, CountersAccumulate) {
    const auto t = generate_trial(EnvConfig{}, 2, 4);
    TrialLog log;
    log.trial_index = 0;
    log.ground_truth = t;
    log.clicks = {5, 6, 7};
    BeliefState b = commit_trial(BeliefState{}, log);
    EXPECT_EQ(b.counters.branch[1], 3);
    EXPECT_EQ(b.counters.total_clicks, 3);
    EXPECT_EQ(b.counters.level, (std::array<int, 3>{1, 1, 1}));
    EXPECT_EQ(b.trial_index, 1);
    EXPECT_TRUE(b.click_history.empty());

    TrialLog empty;
    empty.trial_index = 1;
    empty.ground_truth = t;
    const BeliefState b2 = commit_trial(b, empty);
    EXPECT_EQ(b2.counters.total_clicks, 3);
    EXPECT_EQ(b2.trial_index, 2);

    TrialLog more = log;
    more.trial_index = 2;
    more.clicks = {5, 1};
    const BeliefState b3 = commit_trial(b2, more);
    EXPECT_EQ(b3.counters.node[5], 2);
    EXPECT_EQ(b3.counters.total_clicks, 5);
    EXPECT_EQ(b3.counters.branch[1], 4);
}

TEST(CommitTrial, IndexMismatchIsError) {
    TrialLog log;
    log.trial_index = 3;
    EXPECT_THROW(commit_trial(BeliefState{}, log), ValidationError);
}

TEST(Episode, ScoreIdentityAndBeliefInvariants) {
    const FeatureContext ctx;
    Rng rng(5);
    std::normal_distribution<double> z(0.0, 3.0);
    for (int k = 0; k < 200; ++k) {
        PolicyParams p;
        for (auto& w : p.weights) w = z(rng);
        p.tau = 2.0;
        const auto t = generate_trial(ctx.env, rng);
        const Episode ep = sample_episode(p, t, BeliefState{}, ctx, rng);
        double meta = 0.0;
        for (std::size_t i = 0; i + 1 < ep.trajectory.steps.size(); ++i) meta += ep.trajectory.steps[i].meta_reward;
        EXPECT_DOUBLE_EQ(ep.log.score, ep.trajectory.external_return + meta);
        EXPECT_EQ(ep.log.score, compute_score(t, ep.log.clicks, ep.log.chosen_path));
        std::set<NodeId> distinct(ep.log.clicks.begin(), ep.log.clicks.end());
        EXPECT_EQ(distinct.size(), ep.log.clicks.size());
        for (NodeId n = 1; n <= 12; ++n)
            EXPECT_EQ(ep.final_belief.is_observed(n), distinct.count(n) > 0);
        EXPECT_EQ(available_operations(ep.final_belief).size(), 13 - ep.log.clicks.size());
    }
}

TEST(NormalizePath, AcceptsBothFormsRejectsBroken) {
    EXPECT_EQ(normalize_path(std::vector<NodeId>{1, 2, 3}), (std::vector<NodeId>{0, 1, 2, 3}));
    EXPECT_EQ(normalize_path(std::vector<NodeId>{0, 9, 10, 12}), (std::vector<NodeId>{0, 9, 10, 12}));
    EXPECT_THROW(normalize_path(std::vector<NodeId>{1, 6, 7}), ValidationError);
    EXPECT_THROW(normalize_path(std::vector<NodeId>{1, 2}), ValidationError);
    EXPECT_THROW(normalize_path(std::vector<NodeId>{0, 1, 2, 7}), ValidationError);
}
