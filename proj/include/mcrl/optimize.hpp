#pragma once

// Derivative-free maximizers over a box. All are seeded and record every evaluation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mcrl/error.hpp"
#include "mcrl/rng.hpp"

namespace mcrl {

enum class OptimizerKind { random_search, coarse_to_fine, parzen_estimator };

inline std::string_view to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::random_search: return "random_search";
        case OptimizerKind::coarse_to_fine: return "coarse_to_fine";
        case OptimizerKind::parzen_estimator: return "parzen_estimator";
    }
    return "?";
}

inline OptimizerKind parse_optimizer(std::string_view s) {
    for (OptimizerKind k : {OptimizerKind::random_search, OptimizerKind::coarse_to_fine, OptimizerKind::parzen_estimator})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown optimizer '" + std::string(s) + "'");
}

struct Box {
    std::vector<double> lo, hi;
    std::size_t dim() const { return lo.size(); }
    double width(std::size_t j) const { return hi[j] - lo[j]; }
    std::vector<double> clamp(std::vector<double> x) const {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::clamp(x[j], lo[j], hi[j]);
        return x;
    }
};

struct TraceEntry {
    int iteration = 0;
    std::vector<double> candidate;
    double value = 0.0;
    double best_so_far = 0.0;
};

struct OptimizeResult {
    std::vector<double> best;
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<TraceEntry> trace;
};

using Objective = std::function<double(const std::vector<double>&)>;

namespace detail {

class Recorder {
public:
    Recorder(const Objective& f, int budget, OptimizeResult& out) : f_(f), budget_(budget), out_(out) {}
    bool exhausted() const { return static_cast<int>(out_.trace.size()) >= budget_; }
    double eval(const std::vector<double>& x) {
        double v = f_(x);
        if (std::isnan(v)) v = -std::numeric_limits<double>::infinity();
        if (out_.trace.empty() || v > out_.best_value) {
            out_.best_value = v;
            out_.best = x;
        }
        out_.trace.push_back({static_cast<int>(out_.trace.size()), x, v, out_.best_value});
        return v;
    }

private:
    const Objective& f_;
    int budget_;
    OptimizeResult& out_;
};

inline std::vector<double> sample_box(const Box& box, Rng& rng) {
    std::vector<double> x(box.dim());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = box.lo[j] + box.width(j) * uniform01(rng);
    return x;
}

inline void run_random(const Box& box, Recorder& rec, Rng& rng) {
    while (!rec.exhausted()) rec.eval(sample_box(box, rng));
}

/// Coordinate pattern search from the incumbent, halving the step after each unproductive sweep;
/// restarts the step schedule once it bottoms out.
inline void run_coarse_to_fine(const Box& box, Recorder& rec, OptimizeResult& out, Rng& rng) {
    if (out.trace.empty()) rec.eval(sample_box(box, rng));
    std::vector<std::size_t> order(box.dim());
    std::iota(order.begin(), order.end(), 0);
    double frac = 0.25;
    while (!rec.exhausted()) {
        std::shuffle(order.begin(), order.end(), rng);
        bool improved = false;
        for (std::size_t j : order) {
            for (double sign : {1.0, -1.0}) {
                if (rec.exhausted()) return;
                std::vector<double> x = out.best;
                x[j] = std::clamp(x[j] + sign * frac * box.width(j), box.lo[j], box.hi[j]);
                if (x[j] == out.best[j]) continue;
                const double before = out.best_value;
                rec.eval(x);
                if (out.best_value > before) {
                    improved = true;
                    break;
                }
            }
        }
        if (!improved) frac = frac < 1e-4 ? 0.25 : frac * 0.5;
    }
}

/// Tree-structured Parzen estimator with a factorized (per-coordinate) density model.
inline void run_parzen(const Box& box, Recorder& rec, OptimizeResult& out, Rng& rng, int startup, int candidates) {
    while (!rec.exhausted() && static_cast<int>(out.trace.size()) < startup) rec.eval(sample_box(box, rng));
    const std::size_t d = box.dim();
    std::normal_distribution<double> z(0.0, 1.0);
    while (!rec.exhausted()) {
        std::vector<std::size_t> idx(out.trace.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return out.trace[a].value > out.trace[b].value; });
        const std::size_t n = idx.size();
        const std::size_t n_good = std::min<std::size_t>(25, std::max<std::size_t>(1, (n + 9) / 10));
        const std::size_t n_bad = std::min<std::size_t>(200, n - n_good);
        std::vector<const std::vector<double>*> good, bad;
        for (std::size_t i = 0; i < n_good; ++i) good.push_back(&out.trace[idx[i]].candidate);
        for (std::size_t i = n - n_bad; i < n; ++i) bad.push_back(&out.trace[idx[i]].candidate);

        std::vector<double> bw_good(d), bw_bad(d);
        auto bandwidth = [&](const std::vector<const std::vector<double>*>& pts, std::size_t j) {
            double m = 0.0, s = 0.0;
            for (auto* p : pts) m += (*p)[j];
            m /= static_cast<double>(pts.size());
            for (auto* p : pts) s += ((*p)[j] - m) * ((*p)[j] - m);
            const double sd = pts.size() > 1 ? std::sqrt(s / static_cast<double>(pts.size() - 1)) : box.width(j);
            return std::max(0.01 * box.width(j), 1.06 * sd * std::pow(static_cast<double>(pts.size()), -0.2));
        };
        for (std::size_t j = 0; j < d; ++j) {
            bw_good[j] = bandwidth(good, j);
            bw_bad[j] = bad.empty() ? box.width(j) : bandwidth(bad, j);
        }
        // log density of a Gaussian mixture over `pts` (plus a uniform prior component)
        auto log_density = [&](const std::vector<const std::vector<double>*>& pts, const std::vector<double>& bw,
                               std::size_t j, double x) {
            const double prior = 1.0 / box.width(j);
            double acc = prior;
            for (auto* p : pts) {
                const double u = (x - (*p)[j]) / bw[j];
                acc += std::exp(-0.5 * u * u) / (bw[j] * 2.5066282746310002);
            }
            return std::log(acc / static_cast<double>(pts.size() + 1));
        };

        std::vector<double> best_x;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < candidates; ++c) {
            std::vector<double> x(d);
            double score = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const auto* centre = good[uniform_index(rng, good.size())];
                x[j] = std::clamp((*centre)[j] + bw_good[j] * z(rng), box.lo[j], box.hi[j]);
                score += log_density(good, bw_good, j, x[j]);
                if (!bad.empty()) score -= log_density(bad, bw_bad, j, x[j]);
            }
            if (score > best_score) {
                best_score = score;
                best_x = std::move(x);
            }
        }
        rec.eval(best_x);
    }
}

}  // namespace detail

struct OptimizerOptions {
    OptimizerKind kind = OptimizerKind::parzen_estimator;
    int budget = 3000;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> initial;  // evaluated first, in order, counting toward the budget
    int parzen_startup = 20;
    int parzen_candidates = 16;
};

/// Maximizes `f` over `box`.
inline OptimizeResult maximize(const Objective& f, const Box& box, const OptimizerOptions& opt) {
    require(opt.budget >= 1, "optimizer budget must be >= 1");
    require(box.dim() >= 1 && box.lo.size() == box.hi.size(), "optimizer box is malformed");
    for (std::size_t j = 0; j < box.dim(); ++j) require(box.lo[j] < box.hi[j], "optimizer box has an empty side");
    OptimizeResult out;
    detail::Recorder rec(f, opt.budget, out);
    Rng rng(opt.seed);
    for (const auto& x0 : opt.initial) {
        if (rec.exhausted()) break;
        require(x0.size() == box.dim(), "initial candidate has the wrong dimension");
        rec.eval(box.clamp(x0));
    }
    switch (opt.kind) {
        case OptimizerKind::random_search: detail::run_random(box, rec, rng); break;
        case OptimizerKind::coarse_to_fine: detail::run_coarse_to_fine(box, rec, out, rng); break;
        case OptimizerKind::parzen_estimator:
            detail::run_parzen(box, rec, out, rng, std::max<int>(opt.parzen_startup, static_cast<int>(opt.initial.size())),
                               opt.parzen_candidates);
            break;
    }
    return out;
}

}  // namespace mcrl
