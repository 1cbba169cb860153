#include <catch2/catch_amalgamated.hpp>

#include "voxalign/em_cluster.hpp"

#include "support/helpers.hpp"

using namespace voxalign;

namespace {

// Two-Gaussian synthetic volume; the generating parameters are the oracle.
Volume mixture_volume(double w0, double m0, double s0, double m1, double s1, std::size_t n,
                      std::uint64_t seed) {
    Volume v(Index3{100, 100, int(n / 10000)}, Vec3{1, 1, 1});
    SplitMix64 rng(seed);
    for (auto& x : v.data)
        x = rng.next_double() < w0 ? rng.normal(m0, s0) : rng.normal(m1, s1);
    return v;
}

}  // namespace

TEST_CASE("em recovers well-separated mixture parameters") {
    const Volume v = mixture_volume(0.7, 10.0, 1.0, 100.0, 5.0, 100000, 4242);
    const EmFitResult fit = fit_em(v);
    CHECK(fit.converged);
    CHECK(std::abs(fit.mixture.mean[0] - 10.0) < 0.5);
    CHECK(std::abs(fit.mixture.mean[1] - 100.0) < 0.5);
    CHECK(std::abs(fit.mixture.weight[0] - 0.7) < 0.02);
    CHECK(std::abs(fit.mixture.weight[1] - 0.3) < 0.02);
    CHECK(std::abs(fit.mixture.weight[0] + fit.mixture.weight[1] - 1.0) < 1e-12);

    // Monotone log-likelihood, every iteration.
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
        CHECK(fit.log_likelihood[i] >=
              fit.log_likelihood[i - 1] - 1e-9 * (1.0 + std::abs(fit.log_likelihood[i - 1])));
}

TEST_CASE("em separates two distinct constants") {
    Volume v(Index3{10, 10, 2}, Vec3{1, 1, 1});
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = (i % 3 == 0) ? 0.0 : 1.0;
    const EmFitResult fit = fit_em(v);
    CHECK(std::abs(fit.mixture.mean[0] - 0.0) < 1e-6);
    CHECK(std::abs(fit.mixture.mean[1] - 1.0) < 1e-6);
    CHECK(fit.mixture.variance[0] == Catch::Approx(fit.mixture.variance_floor));
    CHECK(fit.mixture.variance[1] == Catch::Approx(fit.mixture.variance_floor));
}

TEST_CASE("em rejects constant volumes") {
    Volume v(Index3{8, 8, 2}, Vec3{1, 1, 1});
    for (auto& x : v.data) x = 5.0;
    CHECK_THROWS_AS(fit_em(v), degenerate_input);
}

TEST_CASE("classification follows the closed-form posterior") {
    GaussianMixture2 g;
    g.weight[0] = 0.6;
    g.weight[1] = 0.4;
    g.mean[0] = 0.0;
    g.mean[1] = 10.0;
    g.variance[0] = 4.0;
    g.variance[1] = 9.0;

    auto posterior_oracle = [&](double x) {
        const double p0 = g.weight[0] / std::sqrt(2 * 3.14159265358979323846 * g.variance[0]) *
                          std::exp(-0.5 * (x - g.mean[0]) * (x - g.mean[0]) / g.variance[0]);
        const double p1 = g.weight[1] / std::sqrt(2 * 3.14159265358979323846 * g.variance[1]) *
                          std::exp(-0.5 * (x - g.mean[1]) * (x - g.mean[1]) / g.variance[1]);
        return p1 / (p0 + p1);
    };

    Volume v(Index3{41, 1, 1}, Vec3{1, 1, 1});
    for (int i = 0; i < 41; ++i) v.data[std::size_t(i)] = -5.0 + 0.5 * i;
    const ForegroundMask mask = classify_foreground(v, g);
    REQUIRE(mask.same_geometry(v));
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const double p = posterior_oracle(v.data[i]);
        CHECK(foreground_posterior(g, v.data[i]) == Catch::Approx(p).margin(1e-12));
        CHECK(int(mask.labels[i]) == (p > 0.5 ? 1 : 0));
    }

    // Low mean -> background, high mean -> foreground.
    CHECK(foreground_posterior(g, g.mean[0]) < 0.5);
    CHECK(foreground_posterior(g, g.mean[1]) > 0.5);
}

TEST_CASE("classification is invariant under increasing affine intensity remaps") {
    const Volume v = mixture_volume(0.5, 20.0, 2.0, 60.0, 4.0, 20000, 99);
    const auto fit = fit_em(v);
    const ForegroundMask base = classify_foreground(v, fit.mixture);

    Volume remapped = v;
    for (auto& x : remapped.data) x = 3.0 * x + 17.0;
    const auto fit2 = fit_em(remapped);
    const ForegroundMask other = classify_foreground(remapped, fit2.mixture);

    std::size_t diff = 0;
    for (std::size_t i = 0; i < base.labels.size(); ++i) diff += base.labels[i] != other.labels[i];
    // Identical up to histogram-bin edge effects.
    CHECK(double(diff) / double(base.labels.size()) < 1e-3);
}
