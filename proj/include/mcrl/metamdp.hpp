#pragma once

// Exact backward induction over the belief space of a tree-structured meta-level MDP.
// A belief is the tuple of observed values; it is encoded in mixed radix with digit
// 0 = unobserved and k+1 = k-th support value, so the memo tables are dense arrays.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mcrl/digest.hpp"
#include "mcrl/env.hpp"
#include "mcrl/prior.hpp"
#include "mcrl/rssl.hpp"

namespace mcrl::metamdp {

using Obs = std::vector<std::optional<int>>;

inline constexpr double kDefaultStateCap = 5e7;
inline constexpr double kTieTolerance = 1e-9;

struct MetaMdpSpec {
    std::vector<int> parent;  // parent[0] = -1; node 0 is the known root
    MixturePrior prior;       // distributions of every node, root included
    std::vector<double> cost; // click cost per node (cost[0] unused)
    double state_cap = kDefaultStateCap;

    int node_count() const { return static_cast<int>(parent.size()); }

    std::vector<int> children(int n) const {
        std::vector<int> c;
        for (int m = 0; m < node_count(); ++m)
            if (parent[m] == n) c.push_back(m);
        return c;
    }

    /// Root-to-leaf paths, root excluded.
    std::vector<std::vector<int>> paths() const {
        std::vector<std::vector<int>> out;
        for (int n = 1; n < node_count(); ++n) {
            if (!children(n).empty()) continue;
            std::vector<int> p;
            for (int m = n; m > 0; m = parent[m]) p.insert(p.begin(), m);
            out.push_back(std::move(p));
        }
        return out;
    }

    void validate() const {
        require(node_count() >= 2, "meta-MDP needs a root and at least one node");
        require(parent[0] == -1, "node 0 must be the root (parent -1)");
        for (int n = 1; n < node_count(); ++n)
            require(parent[n] >= 0 && parent[n] < n, "parents must precede their children");
        require(prior.node_count() == parent.size(), "prior node count does not match the structure");
        require(cost.size() == parent.size(), "cost vector does not match the structure");
        for (int n = 1; n < node_count(); ++n) require(cost[n] >= 0.0, "click costs must be non-negative");
        require(state_cap >= 1.0, "state cap must be positive");
    }

    /// Number of encodable beliefs, prod_n (|support_n| + 1).
    double belief_space_size() const {
        double size = 1.0;
        for (int n = 1; n < node_count(); ++n) size *= static_cast<double>(prior.support(n).size() + 1);
        return size;
    }
};

/// Belief encoding and the quantities shared by the solver and the policy evaluator.
class BeliefSpace {
public:
    explicit BeliefSpace(const MetaMdpSpec& spec) : spec_(&spec) {
        spec.validate();
        const double size = spec.belief_space_size();
        if (size > spec.state_cap)
            throw ValidationError("belief space of " + std::to_string(size) + " states exceeds the cap of " +
                                  std::to_string(spec.state_cap));
        size_ = static_cast<std::size_t>(size);
        const int N = spec.node_count();
        const auto& sc = spec.prior.scenarios();
        supports_.resize(N);
        radix_.assign(N, 0);
        std::size_t mult = 1;
        for (int n = 1; n < N; ++n) {
            supports_[n] = spec.prior.support(n);
            radix_[n] = mult;
            mult *= supports_[n].size() + 1;
        }
        prob_.assign(sc.size(), std::vector<std::vector<double>>(N));
        mean_.assign(sc.size(), std::vector<double>(N, 0.0));
        for (std::size_t s = 0; s < sc.size(); ++s)
            for (int n = 0; n < N; ++n) {
                mean_[s][n] = sc[s].nodes[n].mean();
                for (int v : supports_[n]) prob_[s][n].push_back(sc[s].nodes[n].prob(v));
            }
        root_value_ = spec.prior.unconditioned().mean(0);
        paths_ = spec.paths();
    }

    const MetaMdpSpec& spec() const { return *spec_; }
    std::size_t size() const { return size_; }
    int nodes() const { return spec_->node_count(); }
    std::size_t scenarios() const { return mean_.size(); }
    const std::vector<int>& support(int n) const { return supports_[n]; }
    std::size_t radix(int n) const { return radix_[n]; }
    double prob(std::size_t s, int n, std::size_t k) const { return prob_[s][n][k]; }

    std::vector<double> prior_weights() const {
        std::vector<double> w;
        for (const auto& s : spec_->prior.scenarios()) w.push_back(s.weight);
        return w;
    }

    /// Best path expectation given observations (`digit` per node) and unnormalized scenario weights.
    double term_value(const std::vector<int>& digit, const std::vector<double>& w) const {
        double W = 0.0;
        for (double x : w) W += x;
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& p : paths_) {
            double v = root_value_;
            for (int n : p) {
                if (digit[n] > 0) {
                    v += supports_[n][digit[n] - 1];
                } else {
                    double m = 0.0;
                    for (std::size_t s = 0; s < w.size(); ++s) m += w[s] * mean_[s][n];
                    v += m / W;
                }
            }
            best = std::max(best, v);
        }
        return best;
    }

    std::size_t encode(const Obs& obs) const {
        require(static_cast<int>(obs.size()) == nodes(), "observation vector has the wrong length");
        std::size_t code = 0;
        for (int n = 1; n < nodes(); ++n) {
            if (!obs[n]) continue;
            const auto it = std::find(supports_[n].begin(), supports_[n].end(), *obs[n]);
            require(it != supports_[n].end(), "value " + std::to_string(*obs[n]) + " outside node " + std::to_string(n) + "'s support");
            code += static_cast<std::size_t>(it - supports_[n].begin() + 1) * radix_[n];
        }
        return code;
    }

    Obs to_obs(const std::vector<int>& digit) const {
        Obs o(nodes());
        for (int n = 1; n < nodes(); ++n)
            if (digit[n] > 0) o[n] = supports_[n][digit[n] - 1];
        return o;
    }

private:
    const MetaMdpSpec* spec_;
    std::size_t size_ = 0;
    std::vector<std::vector<int>> supports_;
    std::vector<std::size_t> radix_;
    std::vector<std::vector<std::vector<double>>> prob_;  // [scenario][node][support index]
    std::vector<std::vector<double>> mean_;               // [scenario][node]
    double root_value_ = 0.0;
    std::vector<std::vector<int>> paths_;
};

struct Solution {
    double value = 0.0;
    std::size_t states = 0;  // reachable beliefs visited
    double runtime_ms = 0.0;
    std::string digest;      // SHA-256 over (belief code, action) in code order
    std::vector<double> V;   // NaN for unvisited codes
    std::vector<int> action; // -1 for unvisited codes; 0 = terminate

    /// Optimal action at a belief given by observed values.
    int action_at(const BeliefSpace& space, const Obs& obs) const {
        const std::size_t code = space.encode(obs);
        if (action[code] < 0) throw ValidationError("belief was not reached by the solver");
        return action[code];
    }
};

/// Optimal meta-policy and value. Ties are broken toward ⊥, then toward the lowest node id.
inline Solution solve(const MetaMdpSpec& spec) {
    const auto t0 = std::chrono::steady_clock::now();
    const BeliefSpace space(spec);
    const int N = space.nodes();
    Solution sol;
    sol.V.assign(space.size(), std::numeric_limits<double>::quiet_NaN());
    sol.action.assign(space.size(), -1);
    std::vector<int> digit(N, 0);
    std::vector<std::vector<double>> buf(N + 1, std::vector<double>(space.scenarios()));

    std::function<double(std::size_t, int, const std::vector<double>&)> value =
        [&](std::size_t code, int depth, const std::vector<double>& w) -> double {
        if (!std::isnan(sol.V[code])) return sol.V[code];
        double W = 0.0;
        for (double x : w) W += x;
        double best = space.term_value(digit, w);
        int act = kTerminate;
        for (int n = 1; n < N; ++n) {
            if (digit[n] != 0) continue;
            double q = -spec.cost[n];
            auto& child = buf[depth + 1];
            for (std::size_t k = 0; k < space.support(n).size(); ++k) {
                double pk = 0.0;
                for (std::size_t s = 0; s < w.size(); ++s) pk += (child[s] = w[s] * space.prob(s, n, k));
                if (pk <= 0.0) continue;
                digit[n] = static_cast<int>(k) + 1;
                // deeper calls only write buf[depth + 2] and beyond
                q += pk / W * value(code + (k + 1) * space.radix(n), depth + 1, child);
                digit[n] = 0;
            }
            if (q > best + kTieTolerance) {
                best = q;
                act = n;
            }
        }
        sol.V[code] = best;
        sol.action[code] = act;
        ++sol.states;
        return best;
    };
    sol.value = value(0, 0, space.prior_weights());

    Sha256 h;
    for (std::size_t code = 0; code < sol.action.size(); ++code) {
        if (sol.action[code] < 0) continue;
        const std::uint64_t c = code;
        const std::int32_t a = sol.action[code];
        h.update(&c, sizeof c).update(&a, sizeof a);
    }
    sol.digest = h.hex();
    sol.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return sol;
}

/// A Markov policy over observations: (operation, probability) pairs, operation 0 = terminate.
using Policy = std::function<std::vector<std::pair<int, double>>(const Obs&)>;

/// Exact expected score (path value minus click costs) of `policy` by forward enumeration.
inline double policy_value(const MetaMdpSpec& spec, const Policy& policy) {
    const BeliefSpace space(spec);
    const int N = space.nodes();
    std::vector<double> memo(space.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<int> digit(N, 0);
    std::function<double(std::size_t, const std::vector<double>&)> eval = [&](std::size_t code,
                                                                              const std::vector<double>& w) -> double {
        if (!std::isnan(memo[code])) return memo[code];
        double W = 0.0;
        for (double x : w) W += x;
        const auto choice = policy(space.to_obs(digit));
        if (choice.empty()) throw ValidationError("policy undefined at a reachable belief");
        double total = 0.0, mass = 0.0;
        for (const auto& [op, pr] : choice) {
            if (pr == 0.0) continue;
            mass += pr;
            if (op == kTerminate) {
                total += pr * space.term_value(digit, w);
                continue;
            }
            if (op < 1 || op >= N || digit[op] != 0)
                throw ValidationError("policy chose unavailable operation " + std::to_string(op));
            double q = -spec.cost[op];
            for (std::size_t k = 0; k < space.support(op).size(); ++k) {
                std::vector<double> cw(w.size());
                double pk = 0.0;
                for (std::size_t s = 0; s < w.size(); ++s) pk += (cw[s] = w[s] * space.prob(s, op, k));
                if (pk <= 0.0) continue;
                digit[op] = static_cast<int>(k) + 1;
                q += pk / W * eval(code + (k + 1) * space.radix(op), cw);
                digit[op] = 0;
            }
            total += pr * q;
        }
        require(std::abs(mass - 1.0) < 1e-9, "policy probabilities must sum to 1");
        memo[code] = total;
        return total;
    };
    return eval(0, space.prior_weights());
}

inline Policy deterministic_policy(const BeliefSpace& space, const Solution& sol) {
    return [&space, &sol](const Obs& o) { return std::vector<std::pair<int, double>>{{sol.action_at(space, o), 1.0}}; };
}

inline Policy never_click_policy() {
    return [](const Obs&) { return std::vector<std::pair<int, double>>{{kTerminate, 1.0}}; };
}

// ---------------------------------------------------------------------------------------------
// The maze as a meta-MDP

inline MetaMdpSpec maze_spec(const EnvConfig& env, double state_cap = kDefaultStateCap) {
    MetaMdpSpec spec;
    spec.parent.assign(maze::kNodes, -1);
    spec.cost.assign(maze::kNodes, 0.0);
    for (NodeId n = 1; n <= maze::kRevealable; ++n) {
        spec.parent[n] = maze::parent_of(n);
        spec.cost[n] = env.click_cost_by_level[maze::level_of(n) - 1];
    }
    spec.prior = maze_prior(env.rewards);
    spec.state_cap = state_cap;
    return spec;
}

/// Reduced supports that keep the sign structure and the +/-50 outer nodes.
inline EnvConfig reduced_maze_env() {
    EnvConfig env;
    env.rewards.immediate_support_positive = {3};
    env.rewards.immediate_support_negative = {-3};
    env.rewards.middle_support = {-10, 10};
    env.rewards.nontarget_outer_support = {-20, 20};
    return env;
}

inline MetaMdpSpec reduced_maze_spec() { return maze_spec(reduced_maze_env()); }

/// Adapts an RSSL strategy (defined on the 13-node maze) to a meta-MDP policy.
inline Policy strategy_policy(StrategyId id, int reward_max = 50) {
    return [id, reward_max](const Obs& o) {
        Observations obs{};
        for (std::size_t n = 0; n < obs.size() && n < o.size(); ++n) obs[n] = o[n];
        BeliefState tmp;
        tmp.observed = obs;
        const auto ops = available_operations(tmp);
        const auto p = strategy_probabilities(id, obs, reward_max);
        std::vector<std::pair<int, double>> out;
        for (std::size_t i = 0; i < ops.size(); ++i)
            if (p[i] > 0.0) out.emplace_back(ops[i], p[i]);
        return out;
    };
}

struct ConformanceReport {
    std::size_t sequences = 0;  // distinct (value realization, click sequence) leaves of the policy tree
    std::size_t adaptive = 0;
    std::vector<std::string> violations;  // up to 10 offending sequences

    bool all_adaptive() const { return sequences > 0 && adaptive == sequences; }

    std::string summary() const {
        std::string s = std::to_string(adaptive) + "/" + std::to_string(sequences) +
                        " optimal click sequences follow the resource-rational decision tree";
        for (const auto& v : violations) s += "\n  not adaptive: " + v;
        return s;
    }
};

/// Enumerates every click sequence the solved policy can produce on the maze and classifies each.
inline ConformanceReport rr_conformance(const MetaMdpSpec& spec, const Solution& sol) {
    require(spec.node_count() == maze::kNodes, "conformance is defined for the 13-node maze");
    const BeliefSpace space(spec);
    ConformanceReport rep;
    std::vector<int> digit(maze::kNodes, 0);
    std::vector<NodeId> clicks;
    std::function<void(std::size_t, const std::vector<double>&)> walk = [&](std::size_t code, const std::vector<double>& w) {
        const int a = sol.action[code];
        require(a >= 0, "solution does not cover a reachable belief");
        if (a == kTerminate) {
            std::array<int, maze::kNodes> values{};
            for (int n = 1; n < maze::kNodes; ++n)
                if (digit[n] > 0) values[n] = space.support(n)[digit[n] - 1];
            ++rep.sequences;
            if (classify_adaptive(clicks, values, true)) {
                ++rep.adaptive;
            } else if (rep.violations.size() < 10) {
                std::string s;
                for (NodeId c : clicks) s += std::to_string(c) + "(" + std::to_string(values[c]) + ") ";
                rep.violations.push_back(s.empty() ? "<no clicks>" : s);
            }
            return;
        }
        for (std::size_t k = 0; k < space.support(a).size(); ++k) {
            std::vector<double> cw(w.size());
            double pk = 0.0;
            for (std::size_t s = 0; s < w.size(); ++s) pk += (cw[s] = w[s] * space.prob(s, a, k));
            if (pk <= 0.0) continue;
            digit[a] = static_cast<int>(k) + 1;
            clicks.push_back(a);
            walk(code + (k + 1) * space.radix(a), cw);
            clicks.pop_back();
            digit[a] = 0;
        }
    };
    walk(0, space.prior_weights());
    return rep;
}

/// max |V(b) - max(term(b), max_c Q(b,c))| over every visited belief.
inline double bellman_residual(const MetaMdpSpec& spec, const Solution& sol) {
    const BeliefSpace space(spec);
    const int N = space.nodes();
    double worst = 0.0;
    std::vector<int> digit(N);
    for (std::size_t code = 0; code < sol.V.size(); ++code) {
        if (sol.action[code] < 0) continue;
        std::size_t rest = code;
        for (int n = N - 1; n >= 1; --n) {
            digit[n] = static_cast<int>(rest / space.radix(n));
            rest %= space.radix(n);
        }
        std::vector<double> w = space.prior_weights();
        for (int n = 1; n < N; ++n)
            if (digit[n] > 0)
                for (std::size_t s = 0; s < w.size(); ++s) w[s] *= space.prob(s, n, digit[n] - 1);
        double W = 0.0;
        for (double x : w) W += x;
        double best = space.term_value(digit, w);
        for (int n = 1; n < N; ++n) {
            if (digit[n] != 0) continue;
            double q = -spec.cost[n];
            for (std::size_t k = 0; k < space.support(n).size(); ++k) {
                double pk = 0.0;
                for (std::size_t s = 0; s < w.size(); ++s) pk += w[s] * space.prob(s, n, k);
                if (pk <= 0.0) continue;
                const std::size_t child = code + (k + 1) * space.radix(n);
                require(!std::isnan(sol.V[child]), "child belief missing from solution");
                q += pk / W * sol.V[child];
            }
            best = std::max(best, q);
        }
        worst = std::max(worst, std::abs(best - sol.V[code]));
    }
    return worst;
}

}  // namespace mcrl::metamdp
