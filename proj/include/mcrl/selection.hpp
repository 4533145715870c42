#pragma once

// Random-effects Bayesian model selection at the family level, and best-BIC grouping.

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "mcrl/policy.hpp"
#include "mcrl/rng.hpp"
#include "mcrl/rssl.hpp"

namespace mcrl {

struct ModelFamily {
    std::string name;
    std::vector<std::string> models;
};

/// The three aggregation levels: learning vs not; Reinforce vs habit vs RSSL; hybrid vs model-free.
inline std::vector<ModelFamily> level_families(int level) {
    switch (level) {
        case 1:
            return {{"learning", {"hybrid_reinforce", "model_free_reinforce", "mental_habit", "rssl"}},
                    {"non_learning", {"non_learning"}}};
        case 2:
            return {{"reinforce", {"hybrid_reinforce", "model_free_reinforce"}},
                    {"mental_habit", {"mental_habit"}},
                    {"rssl", {"rssl"}}};
        case 3:
            return {{"hybrid_reinforce", {"hybrid_reinforce"}}, {"model_free_reinforce", {"model_free_reinforce"}}};
        default: throw ValidationError("BMS level must be 1, 2 or 3");
    }
}

struct BmsInput {
    std::vector<std::string> participants;
    std::vector<std::string> models;               // columns of log_evidence
    std::vector<std::vector<double>> log_evidence;  // participants x models
    std::vector<ModelFamily> families;
    int level = 0;
};

struct BmsResult {
    int level = 0;
    std::vector<std::string> families;
    std::vector<double> alpha;
    std::vector<double> r;
    std::vector<double> phi;
    std::vector<double> phi_mc_se;
    int iterations = 0;
    int mc_draws = 0;
};

/// Family log evidence: log-sum-exp of the member evidences minus ln(family size).
inline std::vector<std::vector<double>> family_log_evidence(const BmsInput& in) {
    std::vector<std::vector<double>> out;
    for (const auto& row : in.log_evidence) {
        require(row.size() == in.models.size(), "evidence row length does not match the model list");
        std::vector<double> fam;
        for (const auto& f : in.families) {
            std::vector<double> member;
            for (const auto& m : f.models) {
                const auto it = std::find(in.models.begin(), in.models.end(), m);
                if (it == in.models.end()) throw IncompleteInputError("family " + f.name + " needs model " + m);
                member.push_back(row[static_cast<std::size_t>(it - in.models.begin())]);
            }
            fam.push_back(log_sum_exp(member) - std::log(static_cast<double>(member.size())));
        }
        out.push_back(std::move(fam));
    }
    return out;
}

inline void validate_families(const BmsInput& in) {
    std::set<std::string> seen;
    for (const auto& f : in.families)
        for (const auto& m : f.models)
            if (!seen.insert(m).second) throw ValidationError("model " + m + " belongs to more than one family");
}

inline BmsResult bms(const BmsInput& in, int mc_draws = 100000, std::uint64_t seed = 0, double alpha0 = 1.0,
                     double tol = 1e-6, int max_iter = 10000) {
    if (in.log_evidence.empty()) throw ValidationError("bms needs at least one participant");
    if (in.families.size() < 2) throw ValidationError("bms needs at least two families");
    require(mc_draws >= 1, "bms needs at least one Monte Carlo draw");
    validate_families(in);
    for (const auto& row : in.log_evidence)
        for (double v : row)
            if (!std::isfinite(v)) throw ValidationError("bms: non-finite log evidence");
    const auto L = family_log_evidence(in);
    const std::size_t K = in.families.size();
    BmsResult res;
    res.level = in.level;
    for (const auto& f : in.families) res.families.push_back(f.name);
    std::vector<double> alpha(K, alpha0), u(K);
    for (res.iterations = 1; res.iterations <= max_iter; ++res.iterations) {
        double a0 = 0.0;
        for (double a : alpha) a0 += a;
        std::vector<double> next(K, alpha0);
        for (const auto& row : L) {
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) {
                u[k] = row[k] + boost::math::digamma(alpha[k]) - boost::math::digamma(a0);
                m = std::max(m, u[k]);
            }
            double z = 0.0;
            for (double& x : u) z += (x = std::exp(x - m));
            for (std::size_t k = 0; k < K; ++k) next[k] += u[k] / z;
        }
        double delta = 0.0;
        for (std::size_t k = 0; k < K; ++k) delta = std::max(delta, std::abs(next[k] - alpha[k]));
        alpha = next;
        if (delta < tol) break;
    }
    res.alpha = alpha;
    double a0 = 0.0;
    for (double a : alpha) a0 += a;
    for (double a : alpha) res.r.push_back(a / a0);

    // Exceedance probabilities from Dirichlet draws (normalized gammas; argmax is scale-free).
    Rng rng(seed);
    std::vector<std::gamma_distribution<double>> gam;
    for (double a : alpha) gam.emplace_back(a, 1.0);
    std::vector<double> wins(K, 0.0);
    for (int d = 0; d < mc_draws; ++d) {
        std::size_t best = 0;
        double best_v = -1.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double g = gam[k](rng);
            if (g > best_v) {
                best_v = g;
                best = k;
            }
        }
        wins[best] += 1.0;
    }
    res.mc_draws = mc_draws;
    for (double w : wins) {
        const double p = w / mc_draws;
        res.phi.push_back(p);
        res.phi_mc_se.push_back(std::sqrt(p * (1.0 - p) / mc_draws));
    }
    return res;
}

// ---------------------------------------------------------------------------------------------
// Fit manifests

struct FitManifestRow {
    std::string participant;
    std::string model;
    double loglik = 0.0;
    int k = 0;
    long long n = 0;
    double bic = 0.0;
    double wall_time = 0.0;
};

/// Evidence matrix (default -BIC/2) over the models of one level; every fit must be present.
inline BmsInput bms_input_from_manifest(const std::vector<FitManifestRow>& rows, int level) {
    BmsInput in;
    in.level = level;
    in.families = level_families(level);
    for (const auto& f : in.families)
        for (const auto& m : f.models) in.models.push_back(m);
    std::map<std::string, std::map<std::string, double>> by_participant;
    for (const auto& r : rows) by_participant[r.participant][r.model] = -0.5 * r.bic;
    for (const auto& [p, fits] : by_participant) {
        std::vector<double> row;
        for (const auto& m : in.models) {
            const auto it = fits.find(m);
            if (it == fits.end()) throw IncompleteInputError("participant " + p + " has no fit for model " + m);
            row.push_back(it->second);
        }
        in.participants.push_back(p);
        in.log_evidence.push_back(std::move(row));
    }
    return in;
}

/// Lowest BIC per participant; ties go to fewer parameters, then to the lexicographically first model.
inline std::map<std::string, std::string> group_by_best_bic(const std::vector<FitManifestRow>& rows,
                                                            const std::vector<std::string>& required_models) {
    std::map<std::string, std::vector<const FitManifestRow*>> by_participant;
    for (const auto& r : rows) by_participant[r.participant].push_back(&r);
    std::map<std::string, std::string> out;
    for (const auto& [p, fits] : by_participant) {
        for (const auto& m : required_models)
            if (std::none_of(fits.begin(), fits.end(), [&](const FitManifestRow* r) { return r->model == m; }))
                throw IncompleteInputError("participant " + p + " has no fit for model " + m);
        const FitManifestRow* best = nullptr;
        for (const FitManifestRow* r : fits) {
            if (!best || r->bic < best->bic || (r->bic == best->bic && (r->k < best->k || (r->k == best->k && r->model < best->model))))
                best = r;
        }
        out[p] = best->model;
    }
    return out;
}

inline std::vector<std::string> all_model_names() {
    std::vector<std::string> out;
    for (ModelKind k : kAllModelKinds) out.emplace_back(to_string(k));
    return out;
}

}  // namespace mcrl
