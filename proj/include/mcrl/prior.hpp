#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "mcrl/error.hpp"

namespace mcrl {

/// Finite distribution over integer node values.
struct DiscreteDistribution {
    std::vector<int> values;
    std::vector<double> probs;

    static DiscreteDistribution uniform(std::vector<int> support) {
        require(!support.empty(), "empty value support");
        DiscreteDistribution d;
        d.probs.assign(support.size(), 1.0 / static_cast<double>(support.size()));
        d.values = std::move(support);
        return d;
    }

    static DiscreteDistribution point(int value) { return {{value}, {1.0}}; }

    bool operator==(const DiscreteDistribution&) const = default;

    double prob(int v) const {
        double p = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i)
            if (values[i] == v) p += probs[i];
        return p;
    }

    double mean() const {
        double m = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) m += probs[i] * values[i];
        return m;
    }

    double second_moment() const {
        double m = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i)
            m += probs[i] * static_cast<double>(values[i]) * values[i];
        return m;
    }

    double variance() const {
        const double m = mean();
        return std::max(0.0, second_moment() - m * m);
    }
};

/// One latent configuration: node values are independent given the scenario.
struct Scenario {
    double weight = 1.0;
    std::vector<DiscreteDistribution> nodes;  // indexed by node id
};

class MixturePrior;

/// Posterior over scenarios after conditioning on a set of observed node values.
class Posterior {
public:
    Posterior(const MixturePrior& prior, std::vector<double> weights)
        : prior_(&prior), weights_(std::move(weights)) {}

    const std::vector<double>& scenario_weights() const { return weights_; }
    double prob(int node, int value) const;
    double mean(int node) const;
    double variance(int node) const;

private:
    const MixturePrior* prior_;
    std::vector<double> weights_;
};

/// Mixture over scenarios; the generative model of node values.
class MixturePrior {
public:
    MixturePrior() = default;
    explicit MixturePrior(std::vector<Scenario> scenarios) : scenarios_(std::move(scenarios)) {
        require(!scenarios_.empty(), "mixture prior needs at least one scenario");
        double total = 0.0;
        for (const auto& s : scenarios_) {
            require(s.nodes.size() == scenarios_.front().nodes.size(), "scenario node count mismatch");
            require(s.weight >= 0.0, "negative scenario weight");
            total += s.weight;
        }
        require(total > 0.0, "scenario weights sum to zero");
        for (auto& s : scenarios_) s.weight /= total;
    }

    const std::vector<Scenario>& scenarios() const { return scenarios_; }
    std::size_t node_count() const { return scenarios_.empty() ? 0 : scenarios_.front().nodes.size(); }

    /// Conditions on `observed` (nullopt = unobserved). If no scenario is consistent with the
    /// observations the unconditioned weights are returned.
    Posterior condition(std::span<const std::optional<int>> observed) const {
        std::vector<double> w(scenarios_.size());
        double total = 0.0;
        for (std::size_t s = 0; s < scenarios_.size(); ++s) {
            double p = scenarios_[s].weight;
            for (std::size_t n = 0; n < observed.size() && p > 0.0; ++n)
                if (observed[n]) p *= scenarios_[s].nodes[n].prob(*observed[n]);
            w[s] = p;
            total += p;
        }
        if (total <= 0.0) {
            for (std::size_t s = 0; s < scenarios_.size(); ++s) w[s] = scenarios_[s].weight;
        } else {
            for (double& x : w) x /= total;
        }
        return Posterior(*this, std::move(w));
    }

    Posterior unconditioned() const {
        std::vector<double> w;
        for (const auto& s : scenarios_) w.push_back(s.weight);
        return Posterior(*this, std::move(w));
    }

    /// Every value node `n` can take under some scenario, ascending.
    std::vector<int> support(int node) const {
        std::vector<int> values;
        for (const auto& s : scenarios_)
            for (std::size_t i = 0; i < s.nodes[node].values.size(); ++i)
                if (s.nodes[node].probs[i] > 0.0) values.push_back(s.nodes[node].values[i]);
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        return values;
    }

private:
    std::vector<Scenario> scenarios_;
};

inline double Posterior::prob(int node, int value) const {
    double p = 0.0;
    const auto& sc = prior_->scenarios();
    for (std::size_t s = 0; s < sc.size(); ++s)
        if (weights_[s] > 0.0) p += weights_[s] * sc[s].nodes[node].prob(value);
    return p;
}

inline double Posterior::mean(int node) const {
    double m = 0.0;
    const auto& sc = prior_->scenarios();
    for (std::size_t s = 0; s < sc.size(); ++s)
        if (weights_[s] > 0.0) m += weights_[s] * sc[s].nodes[node].mean();
    return m;
}

inline double Posterior::variance(int node) const {
    double m = 0.0;
    double m2 = 0.0;
    const auto& sc = prior_->scenarios();
    for (std::size_t s = 0; s < sc.size(); ++s) {
        if (weights_[s] <= 0.0) continue;
        m += weights_[s] * sc[s].nodes[node].mean();
        m2 += weights_[s] * sc[s].nodes[node].second_moment();
    }
    return std::max(0.0, m2 - m * m);
}

}  // namespace mcrl
