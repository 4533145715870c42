#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "mcrl/model.hpp"

using namespace mcrl;

namespace {

PolicyParams random_params(Rng& rng, FeatureVariant variant = FeatureVariant::hybrid) {
    std::normal_distribution<double> z(0.0, 2.0);
    PolicyParams p;
    p.mask = mask_for_variant(variant);
    for (auto& w : p.weights) w = z(rng);
    p.apply_mask();
    p.tau = std::exp(std::normal_distribution<double>(0.0, 0.5)(rng));
    return p;
}

BeliefState random_belief(Rng& rng, const TrialGroundTruth& t) {
    std::vector<NodeId> nodes(12);
    std::iota(nodes.begin(), nodes.end(), 1);
    std::shuffle(nodes.begin(), nodes.end(), rng);
    BeliefState b;
    const std::size_t k = uniform_index(rng, 12);
    for (std::size_t i = 0; i < k; ++i) b = apply_click(b, nodes[i], t).belief;
    return b;
}

}  // namespace

TEST(Softmax, NormalizedAndShiftInvariant) {
    const std::vector<double> q{1.0, -2.0, 3.5, 0.0};
    const auto p = softmax(q, 0.7);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-15);
    std::vector<double> shifted = q;
    for (double& x : shifted) x += 1000.0;
    const auto p2 = softmax(shifted, 0.7);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], p2[i], 1e-12);
}

TEST(Softmax, HandValues) {
    // softmax([0, ln 3] / 1) = [1/4, 3/4]
    const auto p = softmax({0.0, std::log(3.0)}, 1.0);
    EXPECT_NEAR(p[0], 0.25, 1e-15);
    EXPECT_NEAR(p[1], 0.75, 1e-15);
    // Temperature 2 halves the logits: [1 / (1 + sqrt 3), sqrt 3 / (1 + sqrt 3)]
    const auto p2 = softmax({0.0, std::log(3.0)}, 2.0);
    EXPECT_NEAR(p2[0], 1.0 / (1.0 + std::sqrt(3.0)), 1e-15);
    EXPECT_THROW(softmax({0.0}, 0.0), ValidationError);
}

TEST(Softmax, ExtremeTemperaturesStayFinite) {
    const std::vector<double> q{1.0, 2.0, 3.0};
    for (double tau : {1e-8, 1e8}) {
        const auto lp = log_softmax(q, tau);
        for (double x : lp) EXPECT_TRUE(std::isfinite(x));
    }
    EXPECT_NEAR(softmax(q, 1e-8)[2], 1.0, 1e-12);
    EXPECT_NEAR(softmax(q, 1e8)[0], 1.0 / 3.0, 1e-6);
}

TEST(Policy, ClickProbabilitiesSumToOneAndCoverOperations) {
    const FeatureContext ctx;
    Rng rng(1);
    for (int k = 0; k < 100; ++k) {
        const auto t = generate_trial(ctx.env, rng);
        const auto b = random_belief(rng, t);
        const auto p = random_params(rng);
        const auto pr = click_probabilities(p, b, ctx);
        EXPECT_EQ(pr.size(), available_operations(b).size());
        double s = 0.0;
        for (const auto& [op, x] : pr) s += x;
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Policy, MaskedWeightsDoNotAffectQ) {
    const FeatureContext ctx;
    Rng rng(2);
    const auto t = generate_trial(ctx.env, rng);
    const auto b = random_belief(rng, t);
    PolicyParams p = random_params(rng, FeatureVariant::model_free);
    const auto q1 = q_values(p, b, ctx);
    for (int j = 0; j < kFeatureCount; ++j)
        if (!p.mask[j]) p.weights[j] = 1e6;
    const auto q2 = q_values(p, b, ctx);
    EXPECT_EQ(q1, q2);
}

TEST(Policy, LapseMixesUniform) {
    OperationFeatures opf;
    opf.ops = {0, 1, 2};
    opf.features.assign(3, FeatureVector{});
    opf.features[1][0] = 100.0;
    PolicyParams p;
    p.weights[0] = 1.0;
    p.lapse = 0.3;
    const auto lp = action_log_probabilities(p, opf);
    EXPECT_NEAR(std::exp(lp[0]), 0.1, 1e-12);
    EXPECT_NEAR(std::exp(lp[1]), 0.7 + 0.1, 1e-12);
}

// Analytic score function against central finite differences of ln pi.
TEST(Policy, GradientMatchesFiniteDifferences) {
    const FeatureContext ctx;
    Rng rng(3);
    for (int k = 0; k < 60; ++k) {
        const auto t = generate_trial(ctx.env, rng);
        const auto b = random_belief(rng, t);
        const auto opf = compute_all_features(b, ctx);
        PolicyParams p = random_params(rng);
        const std::size_t chosen = uniform_index(rng, opf.ops.size());
        const FeatureVector g = grad_log_prob(p, opf, chosen);
        for (int j = 0; j < kFeatureCount; ++j) {
            const double h = 1e-5;
            PolicyParams hi = p, lo = p;
            hi.weights[j] += h;
            lo.weights[j] -= h;
            const double fd = (log_softmax(q_values(hi, opf), p.tau)[chosen] - log_softmax(q_values(lo, opf), p.tau)[chosen]) /
                              (2 * h);
            ASSERT_NEAR(g[j], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "feature " << j;
        }
    }
}

TEST(StepCredits, ImmediateAndReturnToGo) {
    const std::vector<double> r{-1, -3, 20};
    EXPECT_EQ(step_credits(r, 0.5, CreditMode::immediate), r);
    const auto rtg = step_credits(r, 0.5, CreditMode::return_to_go);
    EXPECT_DOUBLE_EQ(rtg[2], 20);
    EXPECT_DOUBLE_EQ(rtg[1], -3 + 0.5 * 20);
    EXPECT_DOUBLE_EQ(rtg[0], -1 + 0.5 * 7);
}

// One-step hand check: w' = w + alpha * credit * (f(c) - E f) / tau.
TEST(ReinforceUpdate, HandValue) {
    OperationFeatures opf;
    opf.ops = {0, 1};
    opf.features.assign(2, FeatureVector{});
    opf.features[0][0] = 1.0;
    PolicyParams p;
    p.alpha = 0.1;
    p.gamma = 1.0;
    EpisodeTrajectory traj;
    EpisodeStep s;
    s.options = opf;
    s.chosen = 0;
    s.meta_reward = 10.0;
    traj.steps.push_back(s);
    const auto next = reinforce_update(p, traj);
    // Uniform policy: E f_0 = 0.5, gradient 0.5.
    EXPECT_NEAR(next.weights[0], 0.1 * 10.0 * 0.5, 1e-12);
    EXPECT_EQ(next.weights[1], 0.0);
}

TEST(ReinforceUpdate, DiscountAppliesPerStep) {
    OperationFeatures opf;
    opf.ops = {0, 1};
    opf.features.assign(2, FeatureVector{});
    opf.features[0][0] = 1.0;
    PolicyParams p;
    p.alpha = 1.0;
    p.gamma = 0.5;
    EpisodeTrajectory traj;
    for (double r : {2.0, 4.0}) {
        EpisodeStep s;
        s.options = opf;
        s.chosen = 0;
        s.meta_reward = r;
        traj.steps.push_back(s);
    }
    // 1 * 2 * 0.5 + 0.5 * 4 * 0.5
    EXPECT_NEAR(reinforce_update(p, traj).weights[0], 1.0 + 1.0, 1e-12);
}

TEST(ReinforceUpdate, FrozenIsRejected) {
    PolicyParams p = make_model(ModelKind::non_learning, model_free_discovery_hyper());
    EXPECT_TRUE(p.frozen);
    EXPECT_DOUBLE_EQ(p.lapse, kDefaultFrozenLapse);
    EXPECT_THROW(reinforce_update(p, EpisodeTrajectory{}), ValidationError);
}

TEST(MakeModel, MasksAndTransforms) {
    const auto h = hybrid_discovery_hyper();
    const auto p = make_model(ModelKind::hybrid_reinforce, h);
    EXPECT_NEAR(p.alpha, std::exp(h.raw_learning_rate), 1e-15);
    EXPECT_NEAR(p.gamma, 1.0 / (1.0 + std::exp(-h.raw_gamma)), 1e-15);
    EXPECT_NEAR(p.tau, std::exp(h.raw_temperature), 1e-15);
    EXPECT_EQ(p.mask.count(), 63u);
    EXPECT_EQ(make_model(ModelKind::model_free_reinforce, h).mask.count(), 57u);
    EXPECT_EQ(make_model(ModelKind::mental_habit, h).mask.count(), 57u);
    EXPECT_EQ(make_model(ModelKind::non_learning, h).mask.count(), 53u);
    EXPECT_THROW(make_model(ModelKind::rssl, h), ValidationError);
}

TEST(SampleEpisode, SameSeedSameEpisode) {
    const FeatureContext ctx;
    const auto p = make_model(ModelKind::hybrid_reinforce, hybrid_discovery_hyper());
    const auto t = generate_trial(ctx.env, 10);
    Rng a(5), b(5);
    EXPECT_EQ(sample_episode(p, t, BeliefState{}, ctx, a).log, sample_episode(p, t, BeliefState{}, ctx, b).log);
}
