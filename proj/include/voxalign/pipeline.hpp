#ifndef VOXALIGN_PIPELINE_HPP
#define VOXALIGN_PIPELINE_HPP

#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxalign/em_cluster.hpp"
#include "voxalign/errors.hpp"
#include "voxalign/mi_metric.hpp"
#include "voxalign/optim.hpp"
#include "voxalign/pca_init.hpp"
#include "voxalign/pyramid.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/transform_io.hpp"
#include "voxalign/transforms.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

enum class InitMode { pca, centroid, identity };

inline const char* to_string(InitMode m) {
    switch (m) {
        case InitMode::pca: return "pca";
        case InitMode::centroid: return "centroid";
        default: return "identity";
    }
}

/// Full hyperparameter record for both registration stages.
struct RegistrationConfig {
    PyramidSchedule pyramid = default_schedule();
    int min_level_dim = 4;  // per-axis clamp target for thin-slab volumes

    int bins_global = 100;
    double sample_fraction_global = 0.09;  // of the level's voxel count
    RsgdOptions rsgd;

    int bins_local = 50;
    std::vector<int> bspline_grid_cells = {5, 6};  // cells per axis, coarse -> fine
    double sample_fraction_bspline_coarse = 0.07;
    double bspline_bound_cell_fraction = 1.0;  // bound = fraction * coarse cell size
    LbfgsbOptions lbfgsb;
    bool run_bspline_stage = true;

    InitMode init = InitMode::pca;
    std::uint64_t seed = 1;
    int threads = 1;
    Interp metric_interpolation = Interp::cubic_bspline;
    double range_padding = 0.01;
    double min_used_fraction = 0.25;

    // EM settings for the PCA initializer.
    int em_max_iterations = 200;
    double em_tolerance = 1e-7;

    void validate() const {
        pyramid.validate();
        if (bins_global < 2 || bins_local < 2) throw error("config: bins must be >= 2");
        if (!(sample_fraction_global > 0.0) || sample_fraction_global > 1.0)
            throw error("config: sample_fraction_global must be in (0, 1]");
        if (!(sample_fraction_bspline_coarse > 0.0) || sample_fraction_bspline_coarse > 1.0)
            throw error("config: sample_fraction_bspline_coarse must be in (0, 1]");
        if (bspline_grid_cells.empty()) throw error("config: bspline_grid_cells is empty");
        for (std::size_t i = 1; i < bspline_grid_cells.size(); ++i)
            if (bspline_grid_cells[i] <= bspline_grid_cells[i - 1])
                throw error("config: bspline_grid_cells must be strictly increasing");
        if (bspline_grid_cells.front() < 1) throw error("config: bspline_grid_cells must be >= 1");
    }
};

/// Sample count for the fine B-spline grid: geometric mean of the voxel
/// count and the transform parameter count, capped at the voxel count.
inline std::size_t geometric_mean_sample_count(std::size_t voxels, std::size_t parameters) {
    const double g = std::sqrt(double(voxels) * double(parameters));
    const auto n = std::size_t(std::llround(g));
    return std::min(std::max<std::size_t>(1, n), voxels);
}

struct StageTrace {
    std::string stage;  // "affine" or "bspline"
    int level = 0;
    long samples = 0;
    int bins = 0;
    double initial_metric = 0.0;
    double final_metric = 0.0;
    double seconds = 0.0;
    OptimizerTrace optimizer;
};

struct InitDiagnostics {
    InitMode requested = InitMode::pca;
    InitMode used = InitMode::pca;
    std::string fallback_reason;
    double centroid_distance = 0.0;
    double plane_angles_deg[3]{0, 0, 0};
    double post_init_metric = 0.0;  // -MI at the coarsest level before optimization
};

struct RegistrationResult {
    AffineTransform affine;
    std::optional<BSplineTransform> local;
    TransformRecord transform;  // composite (or affine-only) record
    std::vector<StageTrace> stages;
    InitDiagnostics init;
    std::vector<std::string> notes;
    double total_seconds = 0.0;

    WorldPoint apply(const WorldPoint& p) const {
        return affine.apply(local ? local->apply(p) : p);
    }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline Vec3 intensity_weighted_center(const Volume& v) {
    const auto [lo, hi] = v.intensity_range();
    double wsum = 0.0;
    Vec3 acc;
    std::size_t q = 0;
    for (int z = 0; z < v.dims[2]; ++z)
        for (int y = 0; y < v.dims[1]; ++y)
            for (int x = 0; x < v.dims[0]; ++x, ++q) {
                const double w = v.data[q] - lo;
                if (w <= 0.0) continue;
                acc += v.index_to_world(Index3{x, y, z}) * w;
                wsum += w;
            }
    if (wsum <= 0.0) {
        // Uniform volume: fall back to the geometric center.
        const auto [blo, bhi] = v.world_bounds();
        return (blo + bhi) * 0.5;
    }
    return acc / wsum;
}

}  // namespace detail

/// Multi-resolution affine stage: per pyramid level (coarse to fine) a
/// fresh fixed sample set is drawn, intensity ranges are frozen, and -MI
/// is minimized by regular-step gradient descent. Parameters carry across
/// levels unchanged (world-unit transforms need no rescaling).
inline AffineTransform affine_stage(const std::vector<Volume>& fixed_pyramid,
                                    const std::vector<Volume>& moving_pyramid,
                                    const AffineTransform& seed, const RegistrationConfig& cfg,
                                    double translation_scale, std::vector<StageTrace>* stages) {
    AffineTransform current = seed;
    std::vector<double> scales(12, 1.0);
    scales[9] = scales[10] = scales[11] = translation_scale;

    for (std::size_t level = 0; level < fixed_pyramid.size(); ++level) {
        const auto t0 = std::chrono::steady_clock::now();
        const Volume& fixed = fixed_pyramid[level];
        const Volume& moving = moving_pyramid[level];

        MetricOptions mo;
        mo.bins = cfg.bins_global;
        mo.interpolation = cfg.metric_interpolation;
        mo.range_padding = cfg.range_padding;
        mo.min_used_fraction = cfg.min_used_fraction;
        mo.threads = cfg.threads;
        MutualInformationMetric metric(fixed, moving, mo);
        const SampleSet samples = draw_samples(fixed, cfg.sample_fraction_global,
                                               derive_seed(cfg.seed, 0x100 + level));

        AffineTransform work = current;
        const Objective objective = [&](std::span<const double> x, std::span<double> grad) {
            work.set_parameters(x);
            const MetricValue mv = metric.evaluate(work, samples, true);
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = mv.gradient[i];
            return mv.value;
        };

        std::vector<double> x0(12);
        current.get_parameters(x0);
        OptimResult r;
        try {
            r = rsgd_minimize(objective, x0, scales, cfg.rsgd);
        } catch (error& e) {
            throw error("affine stage, level " + std::to_string(level) + ": " + e.what());
        }
        current.set_parameters(r.x);

        if (stages) {
            StageTrace st;
            st.stage = "affine";
            st.level = int(level);
            st.samples = long(samples.count());
            st.bins = cfg.bins_global;
            st.initial_metric = r.trace.initial_value;
            st.final_metric = r.trace.final_value;
            st.seconds = detail::seconds_since(t0);
            st.optimizer = std::move(r.trace);
            stages->push_back(std::move(st));
        }
    }
    return current;
}

/// Local deformable stage on the finest resolution: a B-spline grid over
/// the fixed domain is optimized (composed behind the frozen affine) with
/// bounded quasi-Newton, then refined to the next grid level and
/// re-optimized with the geometric-mean sample count.
inline BSplineTransform bspline_stage(const Volume& fixed, const Volume& moving,
                                      const AffineTransform& global, const RegistrationConfig& cfg,
                                      std::vector<StageTrace>* stages,
                                      std::vector<std::string>* notes = nullptr) {
    const int coarse_cells = cfg.bspline_grid_cells.front();
    BSplineTransform local =
        BSplineTransform::for_domain(fixed, Index3{coarse_cells, coarse_cells, coarse_cells});
    const Vec3 bound_cell = local.cell_size() * cfg.bspline_bound_cell_fraction;

    MetricOptions mo;
    mo.bins = cfg.bins_local;
    mo.interpolation = cfg.metric_interpolation;
    mo.range_padding = cfg.range_padding;
    mo.min_used_fraction = cfg.min_used_fraction;
    mo.threads = cfg.threads;
    MutualInformationMetric metric(fixed, moving, mo);

    for (std::size_t grid_level = 0; grid_level < cfg.bspline_grid_cells.size(); ++grid_level) {
        const auto t0 = std::chrono::steady_clock::now();
        if (grid_level > 0) {
            const auto rr = local.refine(Index3{cfg.bspline_grid_cells[grid_level],
                                                cfg.bspline_grid_cells[grid_level],
                                                cfg.bspline_grid_cells[grid_level]});
            if (notes) {
                std::ostringstream os;
                os.precision(6);
                os << "bspline: refined " << cfg.bspline_grid_cells[grid_level - 1] << " -> "
                   << cfg.bspline_grid_cells[grid_level] << " cells, fit rms " << rr.rms_error
                   << " mm, max " << rr.max_error << " mm";
                notes->push_back(os.str());
            }
            local = rr.transform;
        }

        CompositeTransform composite(global, local);
        const std::size_t n_params = std::size_t(composite.parameter_count());

        std::size_t n_samples;
        if (grid_level == 0) {
            n_samples = std::max<std::size_t>(
                1, std::size_t(std::floor(cfg.sample_fraction_bspline_coarse *
                                          double(fixed.voxel_count()))));
        } else {
            n_samples = geometric_mean_sample_count(fixed.voxel_count(), n_params);
        }
        const SampleSet samples =
            draw_samples_count(fixed, std::min(n_samples, fixed.voxel_count()),
                               derive_seed(cfg.seed, 0x200 + grid_level));

        const Objective objective = [&](std::span<const double> x, std::span<double> grad) {
            composite.set_parameters(x);
            const MetricValue mv = metric.evaluate(composite, samples, true);
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = mv.gradient[i];
            return mv.value;
        };

        // Per-component displacement bounds: one coarse-grid cell.
        const std::size_t n_cp = n_params / 3;
        std::vector<double> lower(n_params), upper(n_params);
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < n_cp; ++i) {
                lower[std::size_t(c) * n_cp + i] = -bound_cell[c];
                upper[std::size_t(c) * n_cp + i] = bound_cell[c];
            }

        std::vector<double> x0(n_params);
        composite.get_parameters(x0);
        OptimResult r;
        try {
            r = lbfgsb_minimize(objective, x0, lower, upper, cfg.lbfgsb);
        } catch (error& e) {
            throw error("bspline stage, grid level " + std::to_string(grid_level) + ": " + e.what());
        }
        local.set_parameters(r.x);

        if (stages) {
            StageTrace st;
            st.stage = "bspline";
            st.level = int(grid_level);
            st.samples = long(samples.count());
            st.bins = cfg.bins_local;
            st.initial_metric = r.trace.initial_value;
            st.final_metric = r.trace.final_value;
            st.seconds = detail::seconds_since(t0);
            st.optimizer = std::move(r.trace);
            stages->push_back(std::move(st));
        }
    }
    return local;
}

/// End-to-end two-stage registration: pyramids, EM + PCA (or centroid /
/// identity) initialization, multi-resolution affine stage, then the local
/// B-spline stage on the finest level. The returned transform maps fixed
/// world space to moving world space for pull-back resampling.
inline RegistrationResult register_volumes(const Volume& fixed, const Volume& moving,
                                           const RegistrationConfig& cfg) {
    cfg.validate();
    fixed.validate();
    moving.validate();
    const auto t_start = std::chrono::steady_clock::now();

    RegistrationResult res;
    res.init.requested = cfg.init;

    const PyramidSchedule fixed_sched =
        clamp_schedule(cfg.pyramid, fixed.dims, cfg.min_level_dim, &res.notes);
    const PyramidSchedule moving_sched =
        clamp_schedule(cfg.pyramid, moving.dims, cfg.min_level_dim, &res.notes);
    const std::vector<Volume> fixed_pyr = build_pyramid(fixed, fixed_sched);
    const std::vector<Volume> moving_pyr = build_pyramid(moving, moving_sched);

    // ---- Initialization ----------------------------------------------
    AffineTransform seed;
    InitMode used = cfg.init;
    if (cfg.init == InitMode::pca) {
        try {
            const Volume& fc = fixed_pyr.front();
            const Volume& mc = moving_pyr.front();
            const auto fixed_fit = fit_em(fc, cfg.em_max_iterations, cfg.em_tolerance);
            const auto moving_fit = fit_em(mc, cfg.em_max_iterations, cfg.em_tolerance);
            const PcaFrame fixed_frame =
                compute_pca_frame(fc, classify_foreground(fc, fixed_fit.mixture));
            const PcaFrame moving_frame =
                compute_pca_frame(mc, classify_foreground(mc, moving_fit.mixture));
            const InitialAlignment align = initial_alignment(fixed_frame, moving_frame);

            // The alignment maps moving space into fixed space; the
            // registration transform runs the other way (pull-back), so the
            // seed is its exact inverse, centered on the fixed centroid.
            seed = AffineTransform(align.rotation.transposed(),
                                   align.moving_centroid - align.fixed_centroid,
                                   align.fixed_centroid);
            res.init.centroid_distance = align.centroid_distance;
            for (int i = 0; i < 3; ++i) res.init.plane_angles_deg[i] = align.plane_angles_deg[i];
        } catch (const error& e) {
            res.notes.push_back(std::string("init: pca failed (") + e.what() +
                                "), falling back to centroid");
            res.init.fallback_reason = e.what();
            used = InitMode::centroid;
        }
    }
    if (used == InitMode::centroid) {
        const Vec3 cf = detail::intensity_weighted_center(fixed_pyr.front());
        const Vec3 cm = detail::intensity_weighted_center(moving_pyr.front());
        seed = AffineTransform::translation(cm - cf);
        res.init.centroid_distance = (cm - cf).norm();
    }
    if (used == InitMode::identity) seed = AffineTransform::identity();
    res.init.used = used;

    // ---- Global affine stage -----------------------------------------
    const double translation_scale = 1.0 / std::max(fixed.world_diagonal(), 1e-9);
    res.affine =
        affine_stage(fixed_pyr, moving_pyr, seed, cfg, translation_scale, &res.stages);

    // ---- Local B-spline stage ----------------------------------------
    if (cfg.run_bspline_stage) {
        res.local = bspline_stage(fixed, moving, res.affine, cfg, &res.stages, &res.notes);
        res.transform = record_from(CompositeTransform(res.affine, *res.local));
    } else {
        res.transform = record_from(res.affine);
    }

    if (!res.stages.empty()) res.init.post_init_metric = res.stages.front().initial_metric;

    res.transform.metadata["init_mode"] = to_string(used);
    if (!res.init.fallback_reason.empty())
        res.transform.metadata["init_fallback"] = res.init.fallback_reason;
    for (const auto& st : res.stages) {
        const std::string key = st.stage + "_level" + std::to_string(st.level);
        res.transform.metadata[key + "_iterations"] = std::to_string(st.optimizer.iterations.size());
        std::ostringstream os;
        os.precision(12);
        os << st.final_metric;
        res.transform.metadata[key + "_final_metric"] = os.str();
    }

    res.total_seconds = detail::seconds_since(t_start);
    return res;
}

// ---- Config JSON ------------------------------------------------------

inline nlohmann::json to_json(const RegistrationConfig& c) {
    nlohmann::json j;
    nlohmann::json shrink = nlohmann::json::array();
    for (const auto& s : c.pyramid.shrink_factors) shrink.push_back({s[0], s[1], s[2]});
    j["pyramid"] = {{"shrink_factors", shrink}, {"min_level_dim", c.min_level_dim}};
    j["global"] = {{"bins", c.bins_global},
                   {"sample_fraction", c.sample_fraction_global},
                   {"optimizer",
                    {{"initial_step", c.rsgd.initial_step},
                     {"min_step", c.rsgd.min_step},
                     {"relaxation", c.rsgd.relaxation},
                     {"max_iterations", c.rsgd.max_iterations}}}};
    j["local"] = {{"enabled", c.run_bspline_stage},
                  {"bins", c.bins_local},
                  {"grid_cells", c.bspline_grid_cells},
                  {"sample_fraction_coarse", c.sample_fraction_bspline_coarse},
                  {"bound_cell_fraction", c.bspline_bound_cell_fraction},
                  {"optimizer",
                   {{"memory", c.lbfgsb.memory},
                    {"max_iterations", c.lbfgsb.max_iterations},
                    {"pg_tolerance", c.lbfgsb.pg_tolerance},
                    {"f_rel_tolerance", c.lbfgsb.f_rel_tolerance}}}};
    j["init"] = to_string(c.init);
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["interpolation"] = c.metric_interpolation == Interp::linear ? "linear" : "cubic";
    j["range_padding"] = c.range_padding;
    j["min_used_fraction"] = c.min_used_fraction;
    j["em"] = {{"max_iterations", c.em_max_iterations}, {"tolerance", c.em_tolerance}};
    return j;
}

inline RegistrationConfig config_from_json(const nlohmann::json& j) {
    RegistrationConfig c;
    if (j.contains("pyramid")) {
        const auto& p = j["pyramid"];
        if (p.contains("shrink_factors")) {
            c.pyramid.shrink_factors.clear();
            for (const auto& s : p["shrink_factors"]) {
                if (!s.is_array() || s.size() != 3) throw parse_error("config: bad shrink factor");
                c.pyramid.shrink_factors.push_back(
                    Index3{s[0].get<int>(), s[1].get<int>(), s[2].get<int>()});
            }
        }
        c.min_level_dim = p.value("min_level_dim", c.min_level_dim);
    }
    if (j.contains("global")) {
        const auto& g = j["global"];
        c.bins_global = g.value("bins", c.bins_global);
        c.sample_fraction_global = g.value("sample_fraction", c.sample_fraction_global);
        if (g.contains("optimizer")) {
            const auto& o = g["optimizer"];
            c.rsgd.initial_step = o.value("initial_step", c.rsgd.initial_step);
            c.rsgd.min_step = o.value("min_step", c.rsgd.min_step);
            c.rsgd.relaxation = o.value("relaxation", c.rsgd.relaxation);
            c.rsgd.max_iterations = o.value("max_iterations", c.rsgd.max_iterations);
        }
    }
    if (j.contains("local")) {
        const auto& l = j["local"];
        c.run_bspline_stage = l.value("enabled", c.run_bspline_stage);
        c.bins_local = l.value("bins", c.bins_local);
        if (l.contains("grid_cells")) c.bspline_grid_cells = l["grid_cells"].get<std::vector<int>>();
        c.sample_fraction_bspline_coarse =
            l.value("sample_fraction_coarse", c.sample_fraction_bspline_coarse);
        c.bspline_bound_cell_fraction = l.value("bound_cell_fraction", c.bspline_bound_cell_fraction);
        if (l.contains("optimizer")) {
            const auto& o = l["optimizer"];
            c.lbfgsb.memory = o.value("memory", c.lbfgsb.memory);
            c.lbfgsb.max_iterations = o.value("max_iterations", c.lbfgsb.max_iterations);
            c.lbfgsb.pg_tolerance = o.value("pg_tolerance", c.lbfgsb.pg_tolerance);
            c.lbfgsb.f_rel_tolerance = o.value("f_rel_tolerance", c.lbfgsb.f_rel_tolerance);
        }
    }
    const std::string init = j.value("init", "pca");
    if (init == "pca") c.init = InitMode::pca;
    else if (init == "centroid") c.init = InitMode::centroid;
    else if (init == "identity") c.init = InitMode::identity;
    else throw parse_error("config: unknown init mode '" + init + "'");
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    const std::string interp = j.value("interpolation", "cubic");
    if (interp == "linear") c.metric_interpolation = Interp::linear;
    else if (interp == "cubic") c.metric_interpolation = Interp::cubic_bspline;
    else throw parse_error("config: unknown interpolation '" + interp + "'");
    c.range_padding = j.value("range_padding", c.range_padding);
    c.min_used_fraction = j.value("min_used_fraction", c.min_used_fraction);
    if (j.contains("em")) {
        c.em_max_iterations = j["em"].value("max_iterations", c.em_max_iterations);
        c.em_tolerance = j["em"].value("tolerance", c.em_tolerance);
    }
    c.validate();
    return c;
}

inline RegistrationConfig read_config_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("config: invalid JSON in '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

}  // namespace voxalign

#endif  // VOXALIGN_PIPELINE_HPP
