#ifndef VOXALIGN_OPTIM_HPP
#define VOXALIGN_OPTIM_HPP

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "voxalign/errors.hpp"

namespace voxalign {

/// Objective callback: fills grad (same length as x) and returns the value.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

enum class StopReason { step_tolerance, max_iterations, gradient_tolerance, bound_active };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::step_tolerance: return "step_tolerance";
        case StopReason::max_iterations: return "max_iterations";
        case StopReason::gradient_tolerance: return "gradient_tolerance";
        default: return "bound_active";
    }
}

struct IterationRecord {
    int iteration = 0;
    double value = 0.0;
    double step = 0.0;
    double gradient_norm = 0.0;
    bool accepted = true;
};

struct OptimizerTrace {
    std::vector<IterationRecord> iterations;
    StopReason stop_reason = StopReason::max_iterations;
    double initial_value = 0.0;
    double final_value = 0.0;

    /// Line-oriented log: "iter <i> value <v> step <s> grad <g> [rejected]".
    std::string to_log() const {
        std::ostringstream os;
        os.precision(12);
        for (const auto& r : iterations) {
            os << "iter " << r.iteration << " value " << r.value << " step " << r.step << " grad "
               << r.gradient_norm;
            if (!r.accepted) os << " rejected";
            os << '\n';
        }
        os << "stop " << to_string(stop_reason) << '\n';
        return os.str();
    }
};

struct OptimResult {
    std::vector<double> x;
    double value = 0.0;
    OptimizerTrace trace;
};

namespace detail {

inline double check_finite(double v, std::span<const double> g) {
    if (!std::isfinite(v)) throw non_finite_objective("optim: objective value is not finite");
    for (const double x : g)
        if (!std::isfinite(x)) throw non_finite_objective("optim: objective gradient is not finite");
    return v;
}

}  // namespace detail

struct RsgdOptions {
    double initial_step = 2.0;   // in scaled parameter space
    double min_step = 1e-3;
    double relaxation = 0.5;     // step multiplier on direction reversal or rejection
    int max_iterations = 200;
    double min_gradient_norm = 1e-12;
};

/// Regular-step gradient descent in a scaled parameter space (y = scales .* x).
/// Steps along the normalized negative gradient with a fixed step length;
/// the step is relaxed whenever the gradient direction reverses or a
/// candidate fails to decrease the objective, and only strictly decreasing
/// candidates are accepted.
inline OptimResult rsgd_minimize(const Objective& objective, std::span<const double> x0,
                                 std::span<const double> scales, const RsgdOptions& opt = {}) {
    const std::size_t n = x0.size();
    if (scales.size() != n) throw error("rsgd: scales length mismatch");
    for (const double s : scales)
        if (!(s > 0.0)) throw error("rsgd: scales must be positive");

    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> grad(n), cand(n), cand_grad(n), dir(n, 0.0);

    double value = detail::check_finite(objective(x, grad), grad);

    OptimResult res;
    res.trace.initial_value = value;

    auto scaled_gradient_norm = [&](const std::vector<double>& g) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double gi = g[i] / scales[i];
            s += gi * gi;
        }
        return std::sqrt(s);
    };

    double step = opt.initial_step;
    bool have_dir = false;
    int it = 0;
    StopReason reason = StopReason::max_iterations;
    for (; it < opt.max_iterations; ++it) {
        const double gnorm = scaled_gradient_norm(grad);
        if (gnorm < opt.min_gradient_norm) {
            reason = StopReason::gradient_tolerance;
            break;
        }
        if (step < opt.min_step) {
            reason = StopReason::step_tolerance;
            break;
        }
        // Candidate along the normalized scaled steepest descent direction.
        std::vector<double> new_dir(n);
        for (std::size_t i = 0; i < n; ++i) new_dir[i] = -(grad[i] / scales[i]) / gnorm;
        double flip = 0.0;
        if (have_dir)
            for (std::size_t i = 0; i < n; ++i) flip += new_dir[i] * dir[i];
        if (have_dir && flip < 0.0) step *= opt.relaxation;
        if (step < opt.min_step) {
            reason = StopReason::step_tolerance;
            break;
        }

        for (std::size_t i = 0; i < n; ++i) cand[i] = x[i] + step * new_dir[i] / scales[i];
        const double cand_value = detail::check_finite(objective(cand, cand_grad), cand_grad);

        IterationRecord rec;
        rec.iteration = it;
        rec.value = cand_value;
        rec.step = step;
        rec.gradient_norm = gnorm;
        rec.accepted = cand_value < value;
        res.trace.iterations.push_back(rec);

        if (rec.accepted) {
            x = cand;
            value = cand_value;
            grad = cand_grad;
            dir = new_dir;
            have_dir = true;
        } else {
            step *= opt.relaxation;
        }
    }
    res.trace.stop_reason = reason;
    res.trace.final_value = value;
    res.x = std::move(x);
    res.value = value;
    return res;
}

struct LbfgsbOptions {
    int memory = 10;
    int max_iterations = 100;
    double pg_tolerance = 1e-7;       // infinity norm of the projected gradient step
    double f_rel_tolerance = 1e-10;   // relative decrease considered stagnation
    double armijo_c1 = 1e-4;
    int max_backtracks = 50;
};

/// Limited-memory BFGS with box bounds handled by gradient projection: the
/// quasi-Newton direction is backtracked along the projection arc
/// P(x + a d), so every iterate is feasible and every accepted step
/// strictly decreases the objective.
inline OptimResult lbfgsb_minimize(const Objective& objective, std::span<const double> x0,
                                   std::span<const double> lower, std::span<const double> upper,
                                   const LbfgsbOptions& opt = {}) {
    const std::size_t n = x0.size();
    if (lower.size() != n || upper.size() != n) throw error("lbfgsb: bounds length mismatch");
    for (std::size_t i = 0; i < n; ++i)
        if (lower[i] > upper[i]) throw error("lbfgsb: lower bound exceeds upper bound");

    auto project = [&](std::vector<double>& v) {
        for (std::size_t i = 0; i < n; ++i) v[i] = std::min(std::max(v[i], lower[i]), upper[i]);
    };

    std::vector<double> x(x0.begin(), x0.end());
    project(x);
    std::vector<double> grad(n), cand(n), cand_grad(n);
    double value = detail::check_finite(objective(x, grad), grad);

    OptimResult res;
    res.trace.initial_value = value;

    struct Pair {
        std::vector<double> s, y;
        double rho;
    };
    std::deque<Pair> history;

    auto projected_gradient_norm = [&]() {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double step = std::min(std::max(x[i] - grad[i], lower[i]), upper[i]) - x[i];
            m = std::max(m, std::abs(step));
        }
        return m;
    };
    auto any_bound_active = [&]() {
        for (std::size_t i = 0; i < n; ++i)
            if (x[i] <= lower[i] + 1e-12 || x[i] >= upper[i] - 1e-12) return true;
        return false;
    };

    auto two_loop_direction = [&](std::vector<double>& d) {
        d.assign(grad.begin(), grad.end());
        std::vector<double> alpha(history.size());
        for (std::size_t h = history.size(); h-- > 0;) {
            const auto& p = history[h];
            double a = 0.0;
            for (std::size_t i = 0; i < n; ++i) a += p.s[i] * d[i];
            a *= p.rho;
            alpha[h] = a;
            for (std::size_t i = 0; i < n; ++i) d[i] -= a * p.y[i];
        }
        if (!history.empty()) {
            const auto& last = history.back();
            double sy = 0.0, yy = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                sy += last.s[i] * last.y[i];
                yy += last.y[i] * last.y[i];
            }
            const double gamma = sy / std::max(yy, 1e-300);
            for (double& di : d) di *= gamma;
        }
        for (std::size_t h = 0; h < history.size(); ++h) {
            const auto& p = history[h];
            double b = 0.0;
            for (std::size_t i = 0; i < n; ++i) b += p.y[i] * d[i];
            b *= p.rho;
            const double a = alpha[h];
            for (std::size_t i = 0; i < n; ++i) d[i] += (a - b) * p.s[i];
        }
        for (double& di : d) di = -di;
    };

    int it = 0;
    StopReason reason = StopReason::max_iterations;
    bool made_progress = false;
    std::vector<double> d(n);
    for (; it < opt.max_iterations; ++it) {
        const double pg = projected_gradient_norm();
        if (pg <= opt.pg_tolerance) {
            reason = any_bound_active() ? StopReason::bound_active : StopReason::gradient_tolerance;
            break;
        }

        two_loop_direction(d);
        double gd = 0.0;
        for (std::size_t i = 0; i < n; ++i) gd += grad[i] * d[i];
        if (!(gd < 0.0)) {
            history.clear();
            for (std::size_t i = 0; i < n; ++i) d[i] = -grad[i];
        }

        // Backtracking Armijo search along the projection arc.
        double alpha = 1.0;
        bool accepted = false;
        double cand_value = value;
        int bt = 0;
        for (; bt < opt.max_backtracks; ++bt) {
            for (std::size_t i = 0; i < n; ++i) cand[i] = x[i] + alpha * d[i];
            project(cand);
            double gdx = 0.0;  // g^T (P(x + a d) - x): the realized displacement
            double disp = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                gdx += grad[i] * (cand[i] - x[i]);
                disp = std::max(disp, std::abs(cand[i] - x[i]));
            }
            if (disp == 0.0) break;  // fully constrained along this direction
            cand_value = detail::check_finite(objective(cand, cand_grad), cand_grad);
            if (cand_value <= value + opt.armijo_c1 * gdx && cand_value < value) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }

        IterationRecord rec;
        rec.iteration = it;
        rec.value = accepted ? cand_value : value;
        rec.step = alpha;
        rec.gradient_norm = pg;
        rec.accepted = accepted;
        res.trace.iterations.push_back(rec);

        if (!accepted) {
            if (!history.empty()) {
                // Retry from steepest descent before giving up.
                history.clear();
                continue;
            }
            if (made_progress) {
                reason = StopReason::step_tolerance;
                break;
            }
            throw line_search_failure("lbfgsb: no decrease along steepest descent");
        }

        Pair p;
        p.s.resize(n);
        p.y.resize(n);
        double sy = 0.0, ss = 0.0, yy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            p.s[i] = cand[i] - x[i];
            p.y[i] = cand_grad[i] - grad[i];
            sy += p.s[i] * p.y[i];
            ss += p.s[i] * p.s[i];
            yy += p.y[i] * p.y[i];
        }
        const double f_prev = value;
        x = cand;
        grad = cand_grad;
        value = cand_value;
        made_progress = true;
        if (sy > 1e-10 * std::sqrt(ss) * std::sqrt(yy)) {
            p.rho = 1.0 / sy;
            history.push_back(std::move(p));
            if (int(history.size()) > opt.memory) history.pop_front();
        }
        if (std::abs(f_prev - value) <= opt.f_rel_tolerance * std::max(1.0, std::abs(f_prev))) {
            reason = StopReason::step_tolerance;
            ++it;
            break;
        }
    }

    res.trace.stop_reason = reason;
    res.trace.final_value = value;
    res.x = std::move(x);
    res.value = value;
    return res;
}

}  // namespace voxalign

#endif  // VOXALIGN_OPTIM_HPP
