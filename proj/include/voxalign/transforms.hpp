#ifndef VOXALIGN_TRANSFORMS_HPP
#define VOXALIGN_TRANSFORMS_HPP

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "voxalign/errors.hpp"
#include "voxalign/interpolation.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

/// One nonzero of the 3 x n_parameters Jacobian d apply / d parameters.
struct JacobianEntry {
    int row;   // output coordinate, 0..2
    int col;   // parameter index
    double value;
};

/// Spatial map from fixed-image world space to moving-image world space
/// (pull-back convention: resampling evaluates the moving image at
/// apply(fixed point)).
class Transform {
public:
    virtual ~Transform() = default;

    virtual WorldPoint apply(const WorldPoint& p) const = 0;
    virtual int parameter_count() const = 0;
    virtual void get_parameters(std::span<double> out) const = 0;
    virtual void set_parameters(std::span<const double> in) = 0;

    /// Accumulates weight^T * (d apply(p) / d parameters) into grad.
    virtual void accumulate_parameter_gradient(const WorldPoint& p, const Vec3& weight,
                                               std::span<double> grad) const = 0;

    /// Exact analytic Jacobian with respect to the parameters, as a sparse
    /// entry list (dense transforms simply list every entry).
    virtual std::vector<JacobianEntry> parameter_jacobian(const WorldPoint& p) const = 0;

    virtual std::unique_ptr<Transform> clone() const = 0;
};

/// 12-DOF affine map: apply(x) = matrix * (x - center) + center + offset.
/// Parameters are the 9 matrix entries (row-major) followed by the offset;
/// the center is fixed configuration, not a parameter.
class AffineTransform final : public Transform {
public:
    AffineTransform() = default;
    AffineTransform(const Mat3& matrix, const Vec3& offset, const Vec3& center = {})
        : matrix_(matrix), offset_(offset), center_(center) {}

    static AffineTransform identity() { return AffineTransform(); }
    static AffineTransform translation(const Vec3& t) { return AffineTransform(Mat3::identity(), t); }

    const Mat3& matrix() const { return matrix_; }
    const Vec3& offset() const { return offset_; }
    const Vec3& center() const { return center_; }

    WorldPoint apply(const WorldPoint& p) const override {
        return matrix_ * (p - center_) + center_ + offset_;
    }

    int parameter_count() const override { return 12; }

    void get_parameters(std::span<double> out) const override {
        for (int i = 0; i < 9; ++i) out[std::size_t(i)] = matrix_.m[std::size_t(i)];
        for (int i = 0; i < 3; ++i) out[std::size_t(9 + i)] = offset_[i];
    }
    void set_parameters(std::span<const double> in) override {
        for (int i = 0; i < 9; ++i) matrix_.m[std::size_t(i)] = in[std::size_t(i)];
        for (int i = 0; i < 3; ++i) offset_[i] = in[std::size_t(9 + i)];
    }

    void accumulate_parameter_gradient(const WorldPoint& p, const Vec3& weight,
                                       std::span<double> grad) const override {
        const Vec3 q = p - center_;
        for (int r = 0; r < 3; ++r) {
            for (int j = 0; j < 3; ++j) grad[std::size_t(3 * r + j)] += weight[r] * q[j];
            grad[std::size_t(9 + r)] += weight[r];
        }
    }

    std::vector<JacobianEntry> parameter_jacobian(const WorldPoint& p) const override {
        const Vec3 q = p - center_;
        std::vector<JacobianEntry> out;
        out.reserve(12);
        for (int r = 0; r < 3; ++r) {
            for (int j = 0; j < 3; ++j) out.push_back({r, 3 * r + j, q[j]});
            out.push_back({r, 9 + r, 1.0});
        }
        return out;
    }

    std::unique_ptr<Transform> clone() const override { return std::make_unique<AffineTransform>(*this); }

    /// Exact closed-form inverse (same center).
    AffineTransform inverse() const {
        const Mat3 mi = matrix_.inverse();
        return AffineTransform(mi, (mi * offset_) * -1.0, center_);
    }

    /// Equivalent center-free form: apply(x) = matrix * x + folded offset.
    Vec3 folded_offset() const { return center_ + offset_ - matrix_ * center_; }

private:
    Mat3 matrix_ = Mat3::identity();
    Vec3 offset_;
    Vec3 center_;
};

/// Cubic B-spline free-form deformation over a fixed-space box domain.
///
/// The control lattice has (cells + 3) points per axis; lattice index j sits
/// at domain_min + (j - 1) * cell_size, so the lattice overhangs the domain
/// by one cell on every side and the 4-tap support is complete everywhere
/// inside. Zero coefficients give the identity; points outside the domain
/// are mapped with zero displacement.
class BSplineTransform final : public Transform {
public:
    BSplineTransform() : cells_{1, 1, 1} { init_storage(); }

    BSplineTransform(Index3 cells, Vec3 domain_min, Vec3 domain_max) : cells_(cells) {
        for (int a = 0; a < 3; ++a) {
            if (cells[a] < 1) throw error("bspline: cells must be >= 1 per axis");
            double extent = domain_max[a] - domain_min[a];
            if (!(extent > 1e-9)) extent = 1.0;  // degenerate axis: arbitrary unit cell
            cell_size_[a] = extent / double(cells[a]);
        }
        domain_min_ = domain_min;
        init_storage();
    }

    /// Grid covering the volume's world bounding box (voxel centers).
    static BSplineTransform for_domain(const Volume& fixed, Index3 cells) {
        const auto [lo, hi] = fixed.world_bounds();
        return BSplineTransform(cells, lo, hi);
    }

    Index3 cells() const { return cells_; }
    Index3 control_dims() const { return {cells_[0] + 3, cells_[1] + 3, cells_[2] + 3}; }
    Vec3 domain_min() const { return domain_min_; }
    Vec3 cell_size() const { return cell_size_; }
    /// World position of control point with storage index (i,j,k).
    Vec3 control_position(const Index3& s) const {
        return domain_min_ + cell_size_.cwise_mul(Vec3{double(s[0] - 1), double(s[1] - 1), double(s[2] - 1)});
    }
    std::size_t control_count() const { return std::size_t(control_dims().product()); }
    const std::vector<Vec3>& coefficients() const { return coef_; }
    std::vector<Vec3>& coefficients() { return coef_; }

    Vec3 displacement(const WorldPoint& p) const {
        Support s;
        if (!support(p, s)) return {0, 0, 0};
        Vec3 d;
        for_each_support(s, [&](std::size_t idx, double w) { d += coef_[idx] * w; });
        return d;
    }

    WorldPoint apply(const WorldPoint& p) const override { return p + displacement(p); }

    int parameter_count() const override { return int(3 * control_count()); }

    // Parameter layout: all x displacements, then all y, then all z.
    void get_parameters(std::span<double> out) const override {
        const std::size_t n = control_count();
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) out[std::size_t(c) * n + i] = coef_[i][c];
    }
    void set_parameters(std::span<const double> in) override {
        const std::size_t n = control_count();
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) coef_[i][c] = in[std::size_t(c) * n + i];
    }

    void accumulate_parameter_gradient(const WorldPoint& p, const Vec3& weight,
                                       std::span<double> grad) const override {
        Support s;
        if (!support(p, s)) return;
        const std::size_t n = control_count();
        for_each_support(s, [&](std::size_t idx, double w) {
            grad[idx] += weight[0] * w;
            grad[n + idx] += weight[1] * w;
            grad[2 * n + idx] += weight[2] * w;
        });
    }

    std::vector<JacobianEntry> parameter_jacobian(const WorldPoint& p) const override {
        std::vector<JacobianEntry> out;
        Support s;
        if (!support(p, s)) return out;
        out.reserve(192);
        const std::size_t n = control_count();
        for_each_support(s, [&](std::size_t idx, double w) {
            for (int c = 0; c < 3; ++c) out.push_back({c, int(std::size_t(c) * n + idx), w});
        });
        return out;
    }

    std::unique_ptr<Transform> clone() const override { return std::make_unique<BSplineTransform>(*this); }

    /// Resamples this deformation onto a grid with target_cells per axis by
    /// least-squares fitting over a uniform probe grid (10 per axis when the
    /// target allows, more for dense grids). The tensor-product structure
    /// factors the normal equations into three small per-axis solves.
    struct RefineResult;
    RefineResult refine(Index3 target_cells) const;

private:
    struct Support {
        int base[3];
        double w[3][4];
    };

    bool support(const WorldPoint& p, Support& s) const {
        for (int a = 0; a < 3; ++a) {
            const double u = (p[a] - domain_min_[a]) / cell_size_[a];
            constexpr double tol = 1e-9;
            if (u < -tol || u > double(cells_[a]) + tol) return false;
            int i = int(std::floor(u));
            if (i < 0) i = 0;
            if (i > cells_[a] - 1) i = cells_[a] - 1;
            s.base[a] = i;
            cubic_weights(std::min(std::max(u - double(i), 0.0), 1.0), s.w[a]);
        }
        return true;
    }

    template <typename Fn>
    void for_each_support(const Support& s, Fn&& fn) const {
        const Index3 cd = control_dims();
        for (int cz = 0; cz < 4; ++cz) {
            const double wz = s.w[2][cz];
            const std::size_t oz = std::size_t(s.base[2] + cz) * cd[1];
            for (int cy = 0; cy < 4; ++cy) {
                const double wyz = s.w[1][cy] * wz;
                const std::size_t oyz = (oz + std::size_t(s.base[1] + cy)) * cd[0];
                for (int cx = 0; cx < 4; ++cx)
                    fn(oyz + std::size_t(s.base[0] + cx), s.w[0][cx] * wyz);
            }
        }
    }

    void init_storage() { coef_.assign(control_count(), Vec3{}); }

    // Applies W^T (or solves the Gram system) along one tensor axis.
    static Eigen::VectorXd contract_axis(const Eigen::VectorXd& t, int nx, int ny, int nz,
                                         const Eigen::MatrixXd& w, bool transpose, int axis = 0) {
        const int n_in[3] = {nx, ny, nz};
        int n_out[3] = {nx, ny, nz};
        const int rows = int(w.rows()), cols = int(w.cols());
        n_out[axis] = transpose ? cols : rows;
        Eigen::VectorXd out = Eigen::VectorXd::Zero(std::int64_t(n_out[0]) * n_out[1] * n_out[2]);
        auto idx = [](int x, int y, int z, const int n[3]) {
            return std::int64_t(x) + std::int64_t(n[0]) * (std::int64_t(y) + std::int64_t(n[1]) * z);
        };
        for (int z = 0; z < n_in[2]; ++z)
            for (int y = 0; y < n_in[1]; ++y)
                for (int x = 0; x < n_in[0]; ++x) {
                    const double v = t[idx(x, y, z, n_in)];
                    if (v == 0.0) continue;
                    const int src = axis == 0 ? x : (axis == 1 ? y : z);
                    for (int k = 0; k < (transpose ? cols : rows); ++k) {
                        const double wv = transpose ? w(src, k) : w(k, src);
                        if (wv == 0.0) continue;
                        int xo = x, yo = y, zo = z;
                        (axis == 0 ? xo : axis == 1 ? yo : zo) = k;
                        out[idx(xo, yo, zo, n_out)] += wv * v;
                    }
                }
        return out;
    }

    static Eigen::VectorXd solve_axis(const Eigen::VectorXd& t, int nx, int ny, int nz,
                                      const Eigen::LLT<Eigen::MatrixXd>& gram, int axis) {
        const int n[3] = {nx, ny, nz};
        const int len = n[axis];
        Eigen::VectorXd out(t.size());
        Eigen::VectorXd line(len);
        auto idx = [&](int x, int y, int z) {
            return std::int64_t(x) + std::int64_t(nx) * (std::int64_t(y) + std::int64_t(ny) * z);
        };
        const int outer[2] = {axis == 0 ? ny : nx, axis == 2 ? ny : nz};
        for (int b = 0; b < outer[1]; ++b)
            for (int a = 0; a < outer[0]; ++a) {
                for (int k = 0; k < len; ++k) {
                    const int x = axis == 0 ? k : a;
                    const int y = axis == 1 ? k : (axis == 0 ? a : b);
                    const int z = axis == 2 ? k : b;
                    line[k] = t[idx(x, y, z)];
                }
                const Eigen::VectorXd sol = gram.solve(line);
                for (int k = 0; k < len; ++k) {
                    const int x = axis == 0 ? k : a;
                    const int y = axis == 1 ? k : (axis == 0 ? a : b);
                    const int z = axis == 2 ? k : b;
                    out[idx(x, y, z)] = sol[k];
                }
            }
        return out;
    }

    Index3 cells_;
    Vec3 domain_min_;
    Vec3 cell_size_{1.0, 1.0, 1.0};
    std::vector<Vec3> coef_;
};

struct BSplineTransform::RefineResult {
    BSplineTransform transform;
    double rms_error = 0.0;  // displacement fit error over the probe grid (mm)
    double max_error = 0.0;
};

inline BSplineTransform::RefineResult BSplineTransform::refine(Index3 target_cells) const {
        BSplineTransform out(target_cells, domain_min_,
                             domain_min_ + cell_size_.cwise_mul(cells_.to_vec3()));

        int probes[3];
        for (int a = 0; a < 3; ++a) probes[a] = std::max(10, target_cells[a] + 4);

        // Per-axis collocation matrices W (probes x controls) and their Gram factors.
        Eigen::MatrixXd w_axis[3];
        Eigen::LLT<Eigen::MatrixXd> gram[3];
        for (int a = 0; a < 3; ++a) {
            const int pc = probes[a];
            const int cc = target_cells[a] + 3;
            Eigen::MatrixXd w = Eigen::MatrixXd::Zero(pc, cc);
            for (int k = 0; k < pc; ++k) {
                const double u = double(k) * double(target_cells[a]) / double(pc - 1);
                for (int j = 0; j < cc; ++j) w(k, j) = cubic_bspline(u - double(j - 1));
            }
            w_axis[a] = w;
            gram[a].compute(w.transpose() * w);
        }

        // Old displacement field sampled on the probe grid, one tensor per component.
        const std::size_t np = std::size_t(probes[0]) * probes[1] * probes[2];
        std::vector<Vec3> field(np);
        std::vector<Vec3> probe_pts(np);
        std::size_t q = 0;
        for (int kz = 0; kz < probes[2]; ++kz)
            for (int ky = 0; ky < probes[1]; ++ky)
                for (int kx = 0; kx < probes[0]; ++kx, ++q) {
                    // Domain fraction per axis, converted to a world point.
                    const Vec3 u{double(kx) / double(probes[0] - 1),
                                 double(ky) / double(probes[1] - 1),
                                 double(kz) / double(probes[2] - 1)};
                    const Vec3 p = domain_min_ + cell_size_.cwise_mul(
                                                     Vec3{u[0] * cells_[0], u[1] * cells_[1], u[2] * cells_[2]});
                    probe_pts[q] = p;
                    field[q] = displacement(p);
                }

        // Solve the separable least-squares problem per component.
        const Index3 cd = out.control_dims();
        const std::size_t nc = out.control_count();
        for (int c = 0; c < 3; ++c) {
            // Contract Wx^T, Wy^T, Wz^T over the probe tensor, then apply the
            // inverse Gram along each axis.
            Eigen::VectorXd t0(np);
            for (std::size_t i = 0; i < np; ++i) t0[long(i)] = field[i][c];
            Eigen::VectorXd t1 = contract_axis(t0, probes[0], probes[1], probes[2], w_axis[0], true);
            Eigen::VectorXd t2 = contract_axis(t1, cd[0], probes[1], probes[2], w_axis[1], true, 1);
            Eigen::VectorXd t3 = contract_axis(t2, cd[0], cd[1], probes[2], w_axis[2], true, 2);
            Eigen::VectorXd s1 = solve_axis(t3, cd[0], cd[1], cd[2], gram[0], 0);
            Eigen::VectorXd s2 = solve_axis(s1, cd[0], cd[1], cd[2], gram[1], 1);
            Eigen::VectorXd s3 = solve_axis(s2, cd[0], cd[1], cd[2], gram[2], 2);
            for (std::size_t i = 0; i < nc; ++i) out.coef_[i][c] = s3[long(i)];
        }

        RefineResult res;
        res.transform = out;
        double se = 0.0, mx = 0.0;
        for (std::size_t i = 0; i < np; ++i) {
            const double e = (out.displacement(probe_pts[i]) - field[i]).norm();
            se += e * e;
            mx = std::max(mx, e);
        }
        res.rms_error = std::sqrt(se / double(np));
        res.max_error = mx;
        return res;
    }


/// Sequential map: local B-spline deformation in fixed space, then the
/// global affine into moving space. The optimizable parameters are the
/// local transform's; the affine is frozen configuration.
class CompositeTransform final : public Transform {
public:
    CompositeTransform(AffineTransform global, BSplineTransform local)
        : global_(std::move(global)), local_(std::move(local)) {}

    const AffineTransform& global() const { return global_; }
    const BSplineTransform& local() const { return local_; }
    BSplineTransform& local() { return local_; }

    WorldPoint apply(const WorldPoint& p) const override { return global_.apply(local_.apply(p)); }

    int parameter_count() const override { return local_.parameter_count(); }
    void get_parameters(std::span<double> out) const override { local_.get_parameters(out); }
    void set_parameters(std::span<const double> in) override { local_.set_parameters(in); }

    void accumulate_parameter_gradient(const WorldPoint& p, const Vec3& weight,
                                       std::span<double> grad) const override {
        // d(global o local)/d theta = M_global * d local / d theta.
        local_.accumulate_parameter_gradient(p, global_.matrix().transpose_times(weight), grad);
    }

    std::vector<JacobianEntry> parameter_jacobian(const WorldPoint& p) const override {
        std::vector<JacobianEntry> out;
        const Mat3& m = global_.matrix();
        for (const JacobianEntry& e : local_.parameter_jacobian(p))
            for (int r = 0; r < 3; ++r) {
                const double v = m(r, e.row) * e.value;
                if (v != 0.0) out.push_back({r, e.col, v});
            }
        return out;
    }

    std::unique_ptr<Transform> clone() const override {
        return std::make_unique<CompositeTransform>(*this);
    }

private:
    AffineTransform global_;
    BSplineTransform local_;
};

inline CompositeTransform compose(const AffineTransform& global, const BSplineTransform& local) {
    return CompositeTransform(global, local);
}

}  // namespace voxalign

#endif  // VOXALIGN_TRANSFORMS_HPP
