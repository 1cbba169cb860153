#ifndef VOXALIGN_EM_CLUSTER_HPP
#define VOXALIGN_EM_CLUSTER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "voxalign/errors.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

/// Two-component 1-D Gaussian mixture over intensities, means ascending.
struct GaussianMixture2 {
    double weight[2]{0.5, 0.5};
    double mean[2]{0.0, 1.0};
    double variance[2]{1.0, 1.0};
    double variance_floor = 0.0;
};

/// Binary foreground labels on the geometry of the source volume.
struct ForegroundMask {
    Index3 dims;
    Vec3 spacing;
    Vec3 origin;
    Mat3 direction;
    std::vector<std::uint8_t> labels;

    std::size_t count_foreground() const {
        std::size_t n = 0;
        for (const auto l : labels) n += l;
        return n;
    }
    bool same_geometry(const Volume& v) const {
        return dims == v.dims && labels.size() == v.voxel_count();
    }
};

struct EmFitResult {
    GaussianMixture2 mixture;
    std::vector<double> log_likelihood;  // one entry per iteration
    int iterations = 0;
    bool converged = false;
};

namespace detail {

struct WeightedBins {
    std::vector<double> value;  // within-bin mean intensity
    std::vector<double> count;
    double total = 0.0;
};

inline WeightedBins bin_intensities(const Volume& v, int n_bins) {
    const auto [lo, hi] = v.intensity_range();
    if (!(hi > lo)) throw degenerate_input("em: constant volume");
    const double scale = double(n_bins) / (hi - lo);
    std::vector<double> sum(std::size_t(n_bins), 0.0), cnt(std::size_t(n_bins), 0.0);
    for (const double x : v.data) {
        int b = int((x - lo) * scale);
        b = std::min(std::max(b, 0), n_bins - 1);
        sum[std::size_t(b)] += x;
        cnt[std::size_t(b)] += 1.0;
    }
    WeightedBins out;
    for (int b = 0; b < n_bins; ++b) {
        if (cnt[std::size_t(b)] > 0.0) {
            out.value.push_back(sum[std::size_t(b)] / cnt[std::size_t(b)]);
            out.count.push_back(cnt[std::size_t(b)]);
            out.total += cnt[std::size_t(b)];
        }
    }
    return out;
}

inline double log_gaussian(double x, double mean, double variance) {
    const double d = x - mean;
    return -0.5 * (d * d / variance + std::log(variance) + 1.8378770664093453);  // log(2 pi)
}

/// Weighted percentile of binned data (values ascending).
inline double percentile(const WeightedBins& bins, double frac) {
    const double target = frac * bins.total;
    double acc = 0.0;
    for (std::size_t i = 0; i < bins.value.size(); ++i) {
        acc += bins.count[i];
        if (acc >= target) return bins.value[i];
    }
    return bins.value.back();
}

}  // namespace detail

/// Two-class EM over the intensity histogram. Deterministic initialization
/// (means at the 25th/75th percentiles, equal weights, global variance);
/// stops when the relative log-likelihood change drops below tol. The
/// log-likelihood is checked to be non-decreasing every iteration.
inline EmFitResult fit_em(const Volume& v, int max_iterations = 200, double tol = 1e-7,
                          int histogram_bins = 1024) {
    const auto bins = detail::bin_intensities(v, histogram_bins);
    if (bins.value.size() < 2) throw degenerate_input("em: fewer than 2 distinct intensities");

    const auto [lo, hi] = v.intensity_range();
    const double floor_sigma = 1e-3 * (hi - lo);
    const double var_floor = floor_sigma * floor_sigma;

    double global_mean = 0.0;
    for (std::size_t i = 0; i < bins.value.size(); ++i) global_mean += bins.value[i] * bins.count[i];
    global_mean /= bins.total;
    double global_var = 0.0;
    for (std::size_t i = 0; i < bins.value.size(); ++i) {
        const double d = bins.value[i] - global_mean;
        global_var += d * d * bins.count[i];
    }
    global_var = std::max(global_var / bins.total, var_floor);

    GaussianMixture2 g;
    g.variance_floor = var_floor;
    g.weight[0] = g.weight[1] = 0.5;
    g.mean[0] = detail::percentile(bins, 0.25);
    g.mean[1] = detail::percentile(bins, 0.75);
    if (g.mean[1] <= g.mean[0]) g.mean[1] = g.mean[0] + floor_sigma;
    g.variance[0] = g.variance[1] = global_var;

    EmFitResult res;
    const std::size_t nb = bins.value.size();
    std::vector<double> resp(nb);  // responsibility of component 1

    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iterations; ++it) {
        // E-step with the current parameters; accumulate the data
        // log-likelihood at the same time.
        double ll = 0.0;
        for (std::size_t i = 0; i < nb; ++i) {
            const double l0 = std::log(g.weight[0]) + detail::log_gaussian(bins.value[i], g.mean[0], g.variance[0]);
            const double l1 = std::log(g.weight[1]) + detail::log_gaussian(bins.value[i], g.mean[1], g.variance[1]);
            const double m = std::max(l0, l1);
            const double s = std::exp(l0 - m) + std::exp(l1 - m);
            ll += bins.count[i] * (m + std::log(s));
            resp[i] = std::exp(l1 - m) / s;
        }
        res.log_likelihood.push_back(ll);
        res.iterations = it + 1;

        if (it > 0) {
            if (ll < prev_ll - 1e-9 * (1.0 + std::abs(prev_ll)))
                throw error("em: log-likelihood decreased");
            if (std::abs(ll - prev_ll) < tol * (1.0 + std::abs(prev_ll))) {
                res.converged = true;
                break;
            }
        }
        prev_ll = ll;

        // M-step.
        double n1 = 0.0, n0 = 0.0, s1 = 0.0, s0 = 0.0;
        for (std::size_t i = 0; i < nb; ++i) {
            const double c1 = resp[i] * bins.count[i];
            const double c0 = (1.0 - resp[i]) * bins.count[i];
            n1 += c1;
            n0 += c0;
            s1 += c1 * bins.value[i];
            s0 += c0 * bins.value[i];
        }
        n0 = std::max(n0, 1e-12);
        n1 = std::max(n1, 1e-12);
        g.mean[0] = s0 / n0;
        g.mean[1] = s1 / n1;
        double v0 = 0.0, v1 = 0.0;
        for (std::size_t i = 0; i < nb; ++i) {
            const double d0 = bins.value[i] - g.mean[0];
            const double d1 = bins.value[i] - g.mean[1];
            v0 += (1.0 - resp[i]) * bins.count[i] * d0 * d0;
            v1 += resp[i] * bins.count[i] * d1 * d1;
        }
        g.variance[0] = std::max(v0 / n0, var_floor);
        g.variance[1] = std::max(v1 / n1, var_floor);
        g.weight[0] = n0 / bins.total;
        g.weight[1] = n1 / bins.total;
    }

    if (g.mean[0] > g.mean[1]) {
        std::swap(g.mean[0], g.mean[1]);
        std::swap(g.variance[0], g.variance[1]);
        std::swap(g.weight[0], g.weight[1]);
    }
    res.mixture = g;
    return res;
}

/// Posterior probability that an intensity belongs to the higher-mean
/// component, by Bayes' rule on the two fitted Gaussians.
inline double foreground_posterior(const GaussianMixture2& g, double value) {
    const double l0 = std::log(g.weight[0]) + detail::log_gaussian(value, g.mean[0], g.variance[0]);
    const double l1 = std::log(g.weight[1]) + detail::log_gaussian(value, g.mean[1], g.variance[1]);
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    return e1 / (e0 + e1);
}

/// Labels a voxel foreground iff the posterior of the higher-mean component
/// exceeds 1/2. Both imaging modalities here have dark backgrounds, so the
/// bright component is the subject.
inline ForegroundMask classify_foreground(const Volume& v, const GaussianMixture2& g) {
    ForegroundMask m;
    m.dims = v.dims;
    m.spacing = v.spacing;
    m.origin = v.origin;
    m.direction = v.direction;
    m.labels.resize(v.voxel_count());
    for (std::size_t i = 0; i < v.data.size(); ++i)
        m.labels[i] = foreground_posterior(g, v.data[i]) > 0.5 ? 1 : 0;
    return m;
}

}  // namespace voxalign

#endif  // VOXALIGN_EM_CLUSTER_HPP
