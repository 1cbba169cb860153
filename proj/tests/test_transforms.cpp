#include <catch2/catch_amalgamated.hpp>

#include "voxalign/transforms.hpp"

#include "support/helpers.hpp"

using namespace voxalign;

namespace {

// Dense finite-difference Jacobian d apply / d parameters, the oracle for
// the analytic entries.
std::vector<double> fd_jacobian(Transform& t, const WorldPoint& p, double h = 1e-6) {
    const int n = t.parameter_count();
    std::vector<double> params(static_cast<std::size_t>(n));
    t.get_parameters(params);
    std::vector<double> jac(std::size_t(3 * n), 0.0);
    for (int c = 0; c < n; ++c) {
        std::vector<double> plus = params, minus = params;
        plus[std::size_t(c)] += h;
        minus[std::size_t(c)] -= h;
        t.set_parameters(plus);
        const WorldPoint fp = t.apply(p);
        t.set_parameters(minus);
        const WorldPoint fm = t.apply(p);
        for (int r = 0; r < 3; ++r) jac[std::size_t(r * n + c)] = (fp[r] - fm[r]) / (2 * h);
    }
    t.set_parameters(params);
    return jac;
}

std::vector<double> dense_from_entries(const Transform& t, const WorldPoint& p) {
    const int n = t.parameter_count();
    std::vector<double> jac(std::size_t(3 * n), 0.0);
    for (const auto& e : t.parameter_jacobian(p)) jac[std::size_t(e.row * n + e.col)] += e.value;
    return jac;
}

}  // namespace

TEST_CASE("affine apply and parameter round trip") {
    const Mat3 m = Mat3::axis_rotation(2, 0.3) * Mat3::diagonal(Vec3{1.1, 0.9, 1.0});
    AffineTransform t(m, Vec3{4, -2, 1}, Vec3{10, 10, 5});

    // apply(x) = M (x - c) + c + offset, exactly.
    const WorldPoint p{13, 7, 2};
    const WorldPoint expect = m * (p - Vec3{10, 10, 5}) + Vec3{10, 10, 5} + Vec3{4, -2, 1};
    CHECK((t.apply(p) - expect).norm() == 0.0);

    std::vector<double> params(12);
    t.get_parameters(params);
    AffineTransform u;
    u.set_parameters(params);
    std::vector<double> back(12);
    u.get_parameters(back);
    CHECK(back == params);

    // Identity affine maps points to themselves.
    CHECK((AffineTransform::identity().apply(p) - p).norm() == 0.0);
}

TEST_CASE("affine inverse is exact") {
    SplitMix64 rng(71);
    const Mat3 m = vxt::random_rotation(rng) * Mat3::diagonal(Vec3{1.07, 0.93, 1.02});
    const AffineTransform t(m, Vec3{3, 1, -2}, Vec3{5, 5, 5});
    const AffineTransform inv = t.inverse();
    for (int k = 0; k < 50; ++k) {
        const WorldPoint p{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20)};
        CHECK((inv.apply(t.apply(p)) - p).norm() < 1e-12);
    }
}

TEST_CASE("affine jacobian: translation block and finite differences") {
    AffineTransform t(Mat3::axis_rotation(0, 0.2), Vec3{1, 2, 3}, Vec3{4, 4, 4});
    const WorldPoint p{7, -3, 9};

    const auto dense = dense_from_entries(t, p);
    // Translation columns form the identity block.
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(dense[std::size_t(r * 12 + 9 + c)] == (r == c ? 1.0 : 0.0));

    const auto fd = fd_jacobian(t, p);
    for (std::size_t i = 0; i < fd.size(); ++i)
        CHECK(dense[i] == Catch::Approx(fd[i]).margin(1e-6));
}

TEST_CASE("bspline zero coefficients give the identity map") {
    const BSplineTransform t(Index3{5, 5, 5}, Vec3{0, 0, 0}, Vec3{40, 40, 14});
    SplitMix64 rng(5);
    for (int k = 0; k < 100; ++k) {
        const WorldPoint p{rng.uniform(-5, 45), rng.uniform(-5, 45), rng.uniform(-5, 19)};
        CHECK((t.apply(p) - p).norm() == 0.0);  // inside and outside the domain
    }
    CHECK(t.parameter_count() == 3 * 8 * 8 * 8);
}

TEST_CASE("bspline single control point matches the direct tensor sum") {
    BSplineTransform t(Index3{4, 4, 4}, Vec3{0, 0, 0}, Vec3{40, 40, 40});
    const Index3 cd = t.control_dims();
    const Index3 node{3, 2, 4};
    const std::size_t idx =
        std::size_t(node[0]) + std::size_t(cd[0]) * (std::size_t(node[1]) + std::size_t(cd[1]) * node[2]);
    t.coefficients()[idx] = Vec3{2.0, -1.0, 0.5};

    // Brute-force oracle: sum beta(u - j) over every lattice node.
    auto oracle = [&](const WorldPoint& p) {
        Vec3 d;
        for (int kz = 0; kz < cd[2]; ++kz)
            for (int ky = 0; ky < cd[1]; ++ky)
                for (int kx = 0; kx < cd[0]; ++kx) {
                    const std::size_t q =
                        std::size_t(kx) + std::size_t(cd[0]) * (std::size_t(ky) + std::size_t(cd[1]) * kz);
                    const Vec3 u{(p[0] - 0.0) / 10.0, (p[1] - 0.0) / 10.0, (p[2] - 0.0) / 10.0};
                    const double w = cubic_bspline(u[0] - double(kx - 1)) *
                                     cubic_bspline(u[1] - double(ky - 1)) *
                                     cubic_bspline(u[2] - double(kz - 1));
                    d += t.coefficients()[q] * w;
                }
        return d;
    };

    SplitMix64 rng(9);
    for (int k = 0; k < 60; ++k) {
        const WorldPoint p{rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(0, 40)};
        CHECK((t.apply(p) - p - oracle(p)).norm() < 1e-12);
    }

    // At the node's own position the displacement is the coefficient times
    // the central tensor weight sum over the overlapping nodes; with a
    // single active node it is coefficient * beta(0)^3.
    const Vec3 np = t.control_position(node);
    const double central = cubic_bspline(0.0);
    CHECK((t.apply(np) - np - Vec3{2.0, -1.0, 0.5} * (central * central * central)).norm() < 1e-12);
}

TEST_CASE("bspline displacement weights form a partition of unity") {
    BSplineTransform t(Index3{5, 4, 3}, Vec3{-10, 0, 5}, Vec3{30, 36, 23});
    // Constant coefficients c shift every domain point by exactly c.
    for (auto& c : t.coefficients()) c = Vec3{1.5, -2.0, 0.75};
    SplitMix64 rng(13);
    for (int k = 0; k < 200; ++k) {
        const WorldPoint p{rng.uniform(-10, 30), rng.uniform(0, 36), rng.uniform(5, 23)};
        CHECK((t.apply(p) - p - Vec3{1.5, -2.0, 0.75}).norm() < 1e-12);
    }
}

TEST_CASE("bspline jacobian matches finite differences and direct weights") {
    BSplineTransform t(Index3{3, 3, 3}, Vec3{0, 0, 0}, Vec3{30, 30, 30});
    SplitMix64 rng(21);
    for (auto& c : t.coefficients())
        c = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};

    const WorldPoint p{11.3, 7.8, 22.1};
    const auto entries = t.parameter_jacobian(p);
    CHECK(entries.size() == 192);  // 64 support nodes x 3 components

    const auto dense = dense_from_entries(t, p);
    const auto fd = fd_jacobian(t, p);
    const int n = t.parameter_count();
    for (int i = 0; i < 3 * n; ++i) CHECK(dense[std::size_t(i)] == Catch::Approx(fd[std::size_t(i)]).margin(1e-6));

    // accumulate_parameter_gradient is weight^T J.
    const Vec3 w{0.3, -1.2, 2.0};
    std::vector<double> acc(std::size_t(n), 0.0);
    t.accumulate_parameter_gradient(p, w, acc);
    for (int c = 0; c < n; ++c) {
        double expect = 0.0;
        for (int r = 0; r < 3; ++r) expect += w[r] * dense[std::size_t(r * n + c)];
        CHECK(acc[std::size_t(c)] == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("grid refinement: zero stays zero, representable fields are exact") {
    const Vec3 dmin{0, 0, 0}, dmax{50, 40, 30};
    BSplineTransform zero(Index3{5, 5, 5}, dmin, dmax);
    const auto rz = zero.refine(Index3{6, 6, 6});
    CHECK(rz.rms_error < 1e-12);
    for (const auto& c : rz.transform.coefficients()) CHECK(c.norm() < 1e-10);

    // Parameter counts across the 5 -> 6 refinement.
    CHECK(zero.parameter_count() == 1536);
    CHECK(rz.transform.parameter_count() == 2187);

    // An affine displacement field is representable on any cubic grid:
    // coefficients at the node positions reproduce it exactly.
    BSplineTransform aff(Index3{5, 5, 5}, dmin, dmax);
    const Mat3 a = Mat3::from_rows(Vec3{0.01, 0.002, 0}, Vec3{-0.003, 0.02, 0.001}, Vec3{0, 0.004, -0.01});
    const Vec3 b{0.5, -0.25, 0.125};
    {
        const Index3 cd = aff.control_dims();
        std::size_t q = 0;
        for (int kz = 0; kz < cd[2]; ++kz)
            for (int ky = 0; ky < cd[1]; ++ky)
                for (int kx = 0; kx < cd[0]; ++kx, ++q) {
                    const Vec3 pos = aff.control_position(Index3{kx, ky, kz});
                    aff.coefficients()[q] = a * pos + b;
                }
    }
    const auto rr = aff.refine(Index3{6, 6, 6});
    CHECK(rr.rms_error < 1e-8);
    CHECK(rr.max_error < 1e-8);
    SplitMix64 rng(31);
    for (int k = 0; k < 100; ++k) {
        const WorldPoint p{rng.uniform(0, 50), rng.uniform(0, 40), rng.uniform(0, 30)};
        CHECK((rr.transform.apply(p) - aff.apply(p)).norm() < 1e-8);
    }

    // General fields are approximated; the reported error bounds the probe error.
    BSplineTransform gen(Index3{5, 5, 5}, dmin, dmax);
    for (auto& c : gen.coefficients())
        c = Vec3{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const auto rg = gen.refine(Index3{6, 6, 6});
    CHECK(rg.rms_error < rg.max_error + 1e-15);
    CHECK(rg.max_error < 2.0);  // same scale as the field itself
}

TEST_CASE("composition applies local then global") {
    SplitMix64 rng(41);
    const AffineTransform g(vxt::random_rotation(rng) * Mat3::diagonal(Vec3{1.02, 0.98, 1.0}),
                            Vec3{1, -2, 3}, Vec3{10, 10, 10});
    BSplineTransform l(Index3{4, 4, 4}, Vec3{0, 0, 0}, Vec3{20, 20, 20});
    for (auto& c : l.coefficients())
        c = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};

    const CompositeTransform comp = compose(g, l);
    for (int k = 0; k < 100; ++k) {
        const WorldPoint p{rng.uniform(0, 20), rng.uniform(0, 20), rng.uniform(0, 20)};
        CHECK((comp.apply(p) - g.apply(l.apply(p))).norm() < 1e-12);
    }

    // identity o identity = identity; identity global -> equals local.
    const CompositeTransform id = compose(AffineTransform::identity(), BSplineTransform(Index3{1, 1, 1}, Vec3{0, 0, 0}, Vec3{1, 1, 1}));
    const WorldPoint p{0.3, 0.4, 0.5};
    CHECK((id.apply(p) - p).norm() == 0.0);
    const CompositeTransform gl = compose(AffineTransform::identity(), l);
    CHECK((gl.apply(p) - l.apply(p)).norm() == 0.0);

    // Composite parameter gradient equals the chain rule through the affine.
    const auto fd = fd_jacobian(const_cast<CompositeTransform&>(comp), WorldPoint{7.7, 8.8, 9.9});
    const auto dense = dense_from_entries(comp, WorldPoint{7.7, 8.8, 9.9});
    for (std::size_t i = 0; i < fd.size(); ++i)
        CHECK(dense[i] == Catch::Approx(fd[i]).margin(1e-6));
}
