#include <cmath>
#include <limits>

#include <unistd.h>

#include <gtest/gtest.h>

#include "mcrl/io.hpp"

using namespace mcrl;
using namespace mcrl::io;

TEST(Numbers, FormatDoubleRoundTrips) {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const double v = std::normal_distribution<double>(0.0, 1e3)(rng) * std::pow(10.0, static_cast<int>(uniform_index(rng, 20)) - 10);
        EXPECT_EQ(parse_double(format_double(v)), v);
    }
    EXPECT_EQ(format_double(NAN), "nan");
    EXPECT_EQ(format_double(INFINITY), "inf");
    EXPECT_EQ(format_double(-INFINITY), "-inf");
    EXPECT_TRUE(std::isnan(parse_double("nan")));
    EXPECT_EQ(parse_double("-inf"), -INFINITY);
    EXPECT_THROW(parse_double("1.5x"), ValidationError);
    EXPECT_THROW(parse_double(""), ValidationError);
}

TEST(Env, RoundTrip) {
    EnvConfig env;
    env.click_cost_by_level = {2, 4, 8};
    const EnvConfig back = env_from_json(to_json(env));
    EXPECT_EQ(back.click_cost_by_level, env.click_cost_by_level);
    EXPECT_EQ(to_json(back), to_json(env));
}

TEST(TrialLogs, RoundTripPreservesOrderAndTimestamps) {
    auto sim = simulate_participant(default_model_spec(ModelKind::hybrid_reinforce), EnvConfig{}, 12, 3, "p3");
    for (auto& l : sim.logs)
        for (std::size_t i = 0; i < l.clicks.size(); ++i) l.click_timestamps_ms.push_back(1000 + 17 * static_cast<std::int64_t>(i));
    sim.logs.back().partial = true;
    const auto back = trial_logs_from_json(parse_json(dump(to_json(sim.logs)), "mem"), "mem");
    EXPECT_EQ(back, sim.logs);
}

TEST(TrialLogs, RejectsInconsistentRecords) {
    auto sim = simulate_participant(default_model_spec(ModelKind::non_learning), EnvConfig{}, 3, 4, "p");
    json j = to_json(sim.logs);
    json bad_score = j;
    bad_score[0]["score"] = bad_score[0]["score"].get<int>() + 1;
    EXPECT_THROW(trial_logs_from_json(bad_score, "x"), ValidationError);
    json missing = j;
    missing[1].erase("ground_truth");
    EXPECT_THROW(trial_logs_from_json(missing, "x"), ValidationError);
    json stamps = j;
    stamps[0]["click_timestamps_ms"] = json::array({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14});
    EXPECT_THROW(trial_logs_from_json(stamps, "x"), ValidationError);
    EXPECT_THROW(trial_logs_from_json(json::object(), "x"), ValidationError);
}

TEST(TrialLogs, GroupByParticipantOrdersTrials) {
    auto a = simulate_participant(default_model_spec(ModelKind::non_learning), EnvConfig{}, 4, 1, "a").logs;
    auto b = simulate_participant(default_model_spec(ModelKind::non_learning), EnvConfig{}, 3, 2, "b").logs;
    std::vector<TrialLog> mixed{a[2], b[1], a[0], b[0], a[3], b[2], a[1]};
    const auto g = group_by_participant(mixed);
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g.at("a"), a);
    EXPECT_EQ(g.at("b"), b);
}

TEST(ModelSpecs, RoundTripEveryKind) {
    Rng rng(2);
    for (ModelKind k : kAllModelKinds) {
        ModelSpec s = default_model_spec(k);
        s.reinforce.raw_learning_rate = -2.25;
        s.reinforce.raw_temperature = 0.125;
        for (double& w : s.reinforce.weights)
            if (w != 0.0) w += uniform01(rng);
        s.rssl.prior_mean = 7.5;
        s.credit_mode = CreditMode::return_to_go;
        const json j = to_json(s);
        const ModelSpec back = model_spec_from_json(parse_json(dump(j), "mem"));
        EXPECT_EQ(to_json(back), j) << to_string(k);
        EXPECT_EQ(back.kind, k);
    }
    EXPECT_THROW(model_spec_from_json(json{{"model", "nope"}}), ValidationError);
}

TEST(FitResults, RoundTripWithSparseTrace) {
    const auto sim = simulate_participant(default_model_spec(ModelKind::rssl), EnvConfig{}, 8, 5, "q");
    FitOptions opt;
    opt.optimizer = OptimizerKind::random_search;
    opt.budget = 20;
    const FitResult r = fit_participant(ModelKind::rssl, sim.logs, opt);
    const json j = to_json(r);
    const FitResult back = fit_result_from_json(parse_json(dump(j), "mem"), "mem");
    EXPECT_EQ(back.participant_id, r.participant_id);
    EXPECT_EQ(back.parameters, r.parameters);
    EXPECT_EQ(back.parameter_names, r.parameter_names);
    EXPECT_EQ(back.log_likelihood, r.log_likelihood);
    EXPECT_EQ(back.bic, r.bic);
    ASSERT_EQ(back.trace.size(), r.trace.size());
    double best = -INFINITY;
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        EXPECT_EQ(back.trace[i].value, r.trace[i].value);
        const bool stored = i == 0 || r.trace[i].value > best;
        EXPECT_EQ(!back.trace[i].candidate.empty(), stored) << i;
        if (stored) {
            EXPECT_EQ(back.trace[i].candidate, r.trace[i].candidate);
        }
        best = std::max(best, r.trace[i].value);
    }
    EXPECT_EQ(fit_result_from_json(to_json(r, true), "mem").trace.back().candidate, r.trace.back().candidate);
}

TEST(MetaMdpSpecs, RoundTrip) {
    const auto spec = metamdp::reduced_maze_spec();
    const auto back = metamdp_spec_from_json(parse_json(dump(to_json(spec)), "mem"));
    // Mixture weights are renormalised on load, so compare them to within rounding.
    const auto& a = spec.prior.scenarios();
    const auto& b = back.prior.scenarios();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(b[i].weight, a[i].weight, 1e-15);
        EXPECT_EQ(b[i].nodes, a[i].nodes);
    }
    EXPECT_EQ(back.parent, spec.parent);
    EXPECT_EQ(back.cost, spec.cost);
    EXPECT_EQ(metamdp::solve(back).digest, metamdp::solve(spec).digest);
    json bad = to_json(spec);
    bad["scenarios"][0]["nodes"][1]["probs"][0] = 0.9;
    EXPECT_THROW(metamdp_spec_from_json(bad), ValidationError);
    const auto maze = metamdp_spec_from_json(json{{"maze", to_json(EnvConfig{})}});
    EXPECT_EQ(maze.node_count(), maze::kNodes);
}

TEST(Tables, CsvQuotingRoundTrip) {
    Table t{{"name", "value", "note"}, {}};
    t.add({"plain", "1.5", ""});
    t.add({"with,comma", "nan", "say \"hi\""});
    t.add({"multi\nline", "-inf", "x"});
    const std::string csv = to_csv(t);
    const Table back = parse_csv(csv, "mem");
    EXPECT_EQ(back.columns, t.columns);
    EXPECT_EQ(back.rows, t.rows);
    EXPECT_EQ(to_csv(back), csv);
    EXPECT_THROW(parse_csv("a,b\n1\n", "mem"), ValidationError);
    EXPECT_THROW(parse_csv("a\n\"open\n", "mem"), ValidationError);
    EXPECT_THROW(t.add({"short"}), ValidationError);
    EXPECT_THROW(t.column("missing"), ValidationError);
}

TEST(Tables, JsonRenderingKeepsCells) {
    Table t{{"id", "x"}, {}};
    t.add({"a", "2"});
    t.add({"b", "0.25"});
    t.add({"c", "nan"});
    const Table back = table_from_json(parse_json(render(t, Format::json), "mem"));
    EXPECT_EQ(back.rows, t.rows);
}

TEST(Tables, FitManifestRoundTrip) {
    std::vector<FitManifestRow> rows{{"p1", "rssl", -12.5, 4, 30, 38.6, 0.5},
                                     {"p1", "non_learning", -INFINITY, 54, 30, INFINITY, 1.0}};
    for (Format f : {Format::csv, Format::json}) {
        const std::string text = render(fit_manifest_table(rows), f);
        const Table t = f == Format::csv ? parse_csv(text, "m") : table_from_json(parse_json(text, "m"));
        const auto back = fit_manifest_from_table(t);
        ASSERT_EQ(back.size(), 2u);
        EXPECT_EQ(back[0].loglik, -12.5);
        EXPECT_EQ(back[0].k, 4);
        EXPECT_EQ(back[1].model, "non_learning");
        if (f == Format::csv) {
            EXPECT_EQ(back[1].bic, INFINITY);
        }
    }
    Table broken = fit_manifest_table(rows);
    broken.rows[0][2] = "abc";
    EXPECT_THROW(fit_manifest_from_table(broken), ValidationError);
}

TEST(Files, AtomicWriteAndRead) {
    const auto dir = fs::temp_directory_path() / ("mcrl_io_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    write_file_atomic(dir / "a.json", "{\"k\": 1}\n");
    EXPECT_EQ(read_json(dir / "a.json").at("k"), 1);
    EXPECT_THROW(read_file(dir / "missing.json"), ValidationError);
    write_file_atomic(dir / "bad.json", "{");
    EXPECT_THROW(read_json(dir / "bad.json"), ValidationError);
    fs::remove_all(dir);
}

TEST(Catalog, FeatureCatalogListsEveryFeature) {
    const json c = feature_catalog_json().at("entries");
    ASSERT_EQ(c.size(), static_cast<std::size_t>(kFeatureCount));
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(c[i].at("index"), i);
        EXPECT_TRUE(c[i].contains("name") && c[i].contains("group") && c[i].contains("applies_to"));
    }
}
