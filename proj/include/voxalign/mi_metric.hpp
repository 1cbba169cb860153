#ifndef VOXALIGN_MI_METRIC_HPP
#define VOXALIGN_MI_METRIC_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "voxalign/errors.hpp"
#include "voxalign/interpolation.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/transforms.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

/// Fixed-space sample positions with their fixed-image intensities, drawn
/// once and reused for every metric evaluation within a stage.
struct SampleSet {
    struct Sample {
        WorldPoint point;
        double fixed_value;
    };
    std::vector<Sample> samples;
    std::uint64_t seed = 0;

    std::size_t count() const { return samples.size(); }
};

/// Uniform random voxel centers without replacement, deterministic under
/// the seed (partial Fisher-Yates over the voxel indices).
inline SampleSet draw_samples_count(const Volume& fixed, std::size_t count, std::uint64_t seed) {
    const std::size_t n = fixed.voxel_count();
    if (count < 1 || count > n) throw error("samples: count must be in [1, voxel_count]");

    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    SplitMix64 rng(seed);
    SampleSet out;
    out.seed = seed;
    out.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + std::size_t(rng.bounded(std::uint64_t(n - i)));
        std::swap(idx[i], idx[j]);
        const std::uint32_t q = idx[i];
        const int x = int(q % std::uint32_t(fixed.dims[0]));
        const int y = int((q / std::uint32_t(fixed.dims[0])) % std::uint32_t(fixed.dims[1]));
        const int z = int(q / (std::uint32_t(fixed.dims[0]) * std::uint32_t(fixed.dims[1])));
        out.samples.push_back({fixed.index_to_world(Index3{x, y, z}), fixed.data[q]});
    }
    return out;
}

/// fraction in (0, 1]; the sample count is floor(fraction * voxel_count).
inline SampleSet draw_samples(const Volume& fixed, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) throw error("samples: fraction must be in (0, 1]");
    const std::size_t n = fixed.voxel_count();
    const std::size_t count = std::max<std::size_t>(1, std::size_t(std::floor(fraction * double(n))));
    return draw_samples_count(fixed, std::min(count, n), seed);
}

enum class ParzenKernel { box, cubic_bspline };

struct MetricOptions {
    int bins = 50;
    ParzenKernel fixed_kernel = ParzenKernel::box;
    ParzenKernel moving_kernel = ParzenKernel::cubic_bspline;
    Interp interpolation = Interp::cubic_bspline;
    /// Intensity windows; when absent they are frozen at construction from
    /// the volume extrema padded by range_padding * span on each side.
    std::optional<std::pair<double, double>> fixed_range;
    std::optional<std::pair<double, double>> moving_range;
    double range_padding = 0.01;
    /// Evaluation throws too_few_samples when fewer than this fraction of
    /// the sample set maps inside the moving volume.
    double min_used_fraction = 0.25;
    int threads = 1;
};

/// Parzen-smoothed joint and marginal densities over one evaluation.
struct JointHistogram {
    int bins = 0;
    std::pair<double, double> fixed_range{0, 0};
    std::pair<double, double> moving_range{0, 0};
    std::vector<double> joint;  // bins x bins, row-major, rows = fixed bins
    std::vector<double> marginal_fixed;
    std::vector<double> marginal_moving;
};

struct MetricValue {
    double value = 0.0;  // -MI; minimized by the optimizers
    double mutual_information = 0.0;
    double h_fixed = 0.0;
    double h_moving = 0.0;
    double h_joint = 0.0;
    std::vector<double> gradient;  // d(-MI)/d parameters; empty if not requested
    long samples_used = 0;
};

/// Mutual information between a fixed and a transformed moving volume
/// (Mattes formulation): box Parzen window on the fixed axis, cubic
/// B-spline window on the moving axis, one fixed spatial sample set, and
/// an exact analytic gradient with respect to the transform parameters
/// through the moving-kernel derivative, the moving-image spatial gradient
/// and the transform Jacobian.
class MutualInformationMetric {
public:
    MutualInformationMetric(const Volume& fixed, const Volume& moving, MetricOptions opt = {})
        : fixed_(&fixed), moving_(&moving), opt_(std::move(opt)) {
        if (opt_.bins < 2) throw error("metric: bins must be >= 2");
        if (opt_.moving_kernel == ParzenKernel::cubic_bspline && opt_.bins < 6)
            throw error("metric: cubic moving kernel needs >= 6 bins");
        fixed_range_ = opt_.fixed_range ? *opt_.fixed_range : padded_range(fixed);
        moving_range_ = opt_.moving_range ? *opt_.moving_range : padded_range(moving);
        if (opt_.interpolation == Interp::cubic_bspline)
            cubic_ = std::make_unique<CubicBSplineInterpolator>(moving);
        else
            linear_ = std::make_unique<LinearInterpolator>(moving);
    }

    const std::pair<double, double>& fixed_range() const { return fixed_range_; }
    const std::pair<double, double>& moving_range() const { return moving_range_; }

    MetricValue evaluate(const Transform& t, const SampleSet& samples, bool with_gradient = true,
                         JointHistogram* histogram_out = nullptr) const {
        const std::size_t n_total = samples.count();
        if (n_total == 0) throw error("metric: empty sample set");
        const int nb = opt_.bins;

        // Pass 1: per-sample moving intensity (+ gradient), histogram.
        struct SampleEval {
            double u = 0.0;  // moving-axis Parzen coordinate
            Vec3 grad;       // moving image spatial gradient at the mapped point
            std::int32_t fixed_bin = -1;
            bool used = false;
        };
        std::vector<SampleEval> evals(n_total);
        std::vector<double> joint(std::size_t(nb) * nb, 0.0);

        const std::size_t block = 4096;
        const std::size_t n_blocks = (n_total + block - 1) / block;
        std::vector<std::vector<double>> block_joint(n_blocks);

        auto run_block = [&](std::size_t b) {
            auto& local = block_joint[b];
            local.assign(std::size_t(nb) * nb, 0.0);
            const std::size_t lo = b * block, hi = std::min(n_total, lo + block);
            for (std::size_t k = lo; k < hi; ++k) {
                const auto& s = samples.samples[k];
                const WorldPoint mapped = t.apply(s.point);
                double mv;
                Vec3 mg;
                if (with_gradient && opt_.moving_kernel == ParzenKernel::cubic_bspline) {
                    const auto r = cubic_ ? cubic_->value_and_gradient(mapped)
                                          : linear_->value_and_gradient(mapped);
                    if (!r) continue;
                    mv = r->value;
                    mg = r->gradient;
                } else {
                    const auto r = cubic_ ? cubic_->value(mapped) : linear_->value(mapped);
                    if (!r) continue;
                    mv = *r;
                    mg = {};
                }
                SampleEval e;
                e.used = true;
                e.fixed_bin = fixed_bin(s.fixed_value);
                e.grad = mg;
                if (opt_.moving_kernel == ParzenKernel::box) {
                    const int mb = box_bin(mv, moving_range_);
                    local[std::size_t(e.fixed_bin) * nb + std::size_t(mb)] += 1.0;
                    e.u = double(mb);
                } else {
                    e.u = moving_parzen_coord(mv);
                    const int j0 = int(std::floor(e.u));
                    double* row = local.data() + std::size_t(e.fixed_bin) * nb;
                    for (int a = -1; a <= 2; ++a)
                        row[std::size_t(j0 + a)] += cubic_bspline(e.u - double(j0 + a));
                }
                evals[k] = e;
            }
        };
        for_blocks(n_blocks, run_block);
        for (std::size_t b = 0; b < n_blocks; ++b)
            for (std::size_t i = 0; i < joint.size(); ++i) joint[i] += block_joint[b][i];

        long used = 0;
        for (const auto& e : evals) used += e.used ? 1 : 0;
        if (used < long(std::ceil(opt_.min_used_fraction * double(n_total))))
            throw too_few_samples("metric: only " + std::to_string(used) + " of " +
                                  std::to_string(n_total) + " samples map inside the moving volume");

        const double inv_n = 1.0 / double(used);
        for (double& p : joint) p *= inv_n;

        std::vector<double> pf(std::size_t(nb), 0.0), pm(std::size_t(nb), 0.0);
        for (int i = 0; i < nb; ++i)
            for (int j = 0; j < nb; ++j) {
                const double p = joint[std::size_t(i) * nb + std::size_t(j)];
                pf[std::size_t(i)] += p;
                pm[std::size_t(j)] += p;
            }

        MetricValue out;
        out.samples_used = used;
        out.h_fixed = entropy(pf);
        out.h_moving = entropy(pm);
        out.h_joint = entropy(joint);
        out.mutual_information = std::max(0.0, out.h_fixed + out.h_moving - out.h_joint);
        out.value = -out.mutual_information;

        if (histogram_out) {
            histogram_out->bins = nb;
            histogram_out->fixed_range = fixed_range_;
            histogram_out->moving_range = moving_range_;
            histogram_out->joint = joint;
            histogram_out->marginal_fixed = pf;
            histogram_out->marginal_moving = pm;
        }

        if (!with_gradient) return out;
        out.gradient.assign(std::size_t(t.parameter_count()), 0.0);
        if (opt_.moving_kernel == ParzenKernel::box) return out;  // piecewise-constant density

        // log(P(i,j) / Pm(j)) wherever the joint mass is positive.
        std::vector<double> log_ratio(joint.size(), 0.0);
        for (int i = 0; i < nb; ++i)
            for (int j = 0; j < nb; ++j) {
                const double p = joint[std::size_t(i) * nb + std::size_t(j)];
                if (p > 0.0)
                    log_ratio[std::size_t(i) * nb + std::size_t(j)] =
                        std::log(p / pm[std::size_t(j)]);
            }

        // Pass 2: chain rule. d(-MI)/d theta =
        //   -(1/n) sum_k sum_j beta'(u_k - j) log_ratio(b_k, j) du/dm grad_m^T dT/dtheta.
        const double du_dm = moving_parzen_scale();
        std::vector<std::vector<double>> block_grad(n_blocks);
        auto grad_block = [&](std::size_t b) {
            auto& g = block_grad[b];
            g.assign(out.gradient.size(), 0.0);
            const std::size_t lo = b * block, hi = std::min(n_total, lo + block);
            for (std::size_t k = lo; k < hi; ++k) {
                const auto& e = evals[k];
                if (!e.used) continue;
                const int j0 = int(std::floor(e.u));
                const double* lr = log_ratio.data() + std::size_t(e.fixed_bin) * nb;
                double c = 0.0;
                for (int a = -1; a <= 2; ++a)
                    c += cubic_bspline_derivative(e.u - double(j0 + a)) * lr[std::size_t(j0 + a)];
                const double f = -inv_n * du_dm * c;
                if (f == 0.0) continue;
                t.accumulate_parameter_gradient(samples.samples[k].point, e.grad * f, g);
            }
        };
        for_blocks(n_blocks, grad_block);
        for (std::size_t b = 0; b < n_blocks; ++b)
            for (std::size_t i = 0; i < out.gradient.size(); ++i) out.gradient[i] += block_grad[b][i];
        return out;
    }

private:
    std::pair<double, double> padded_range(const Volume& v) const {
        auto [lo, hi] = v.intensity_range();
        if (!(hi > lo)) hi = lo + 1.0;
        const double pad = opt_.range_padding * (hi - lo);
        return {lo - pad, hi + pad};
    }

    int fixed_bin(double v) const { return box_bin(v, fixed_range_); }

    int box_bin(double v, const std::pair<double, double>& range) const {
        const double width = (range.second - range.first) / double(opt_.bins);
        int b = int(std::floor((v - range.first) / width));
        return std::min(std::max(b, 0), opt_.bins - 1);
    }

    /// Continuous coordinate on the moving Parzen axis: the intensity range
    /// maps onto [1, bins-3] so the 4-bin kernel support always stays inside
    /// the table.
    double moving_parzen_coord(double v) const {
        const double u = 1.0 + (v - moving_range_.first) * moving_parzen_scale();
        return std::min(std::max(u, 1.0), double(opt_.bins - 3));
    }
    double moving_parzen_scale() const {
        return double(opt_.bins - 4) / (moving_range_.second - moving_range_.first);
    }

    static double entropy(const std::vector<double>& p) {
        double h = 0.0;
        for (const double x : p)
            if (x > 0.0) h -= x * std::log(x);
        return h;
    }

    // Fixed block partition with in-order reduction keeps results
    // bit-identical for any thread count.
    template <typename Fn>
    void for_blocks(std::size_t n_blocks, Fn&& fn) const {
        const int threads = std::max(1, opt_.threads);
        if (threads == 1 || n_blocks <= 1) {
            for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
            return;
        }
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        const int n_workers = int(std::min<std::size_t>(std::size_t(threads), n_blocks));
        pool.reserve(std::size_t(n_workers));
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t b = next.fetch_add(1);
                    if (b >= n_blocks) return;
                    fn(b);
                }
            });
        for (auto& th : pool) th.join();
    }

    const Volume* fixed_;
    const Volume* moving_;
    MetricOptions opt_;
    std::pair<double, double> fixed_range_, moving_range_;
    std::unique_ptr<CubicBSplineInterpolator> cubic_;
    std::unique_ptr<LinearInterpolator> linear_;
};

}  // namespace voxalign

#endif  // VOXALIGN_MI_METRIC_HPP
