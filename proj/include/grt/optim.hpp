#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "grt/phantom.hpp"
#include "grt/projector.hpp"

namespace grt {

struct TrainConfig {
    int iterations = 2000;
    int batch_views = 4;

    // Learning rates. lr_mu <= 0 resolves to 2e-4 * FOV extent (mm);
    // lr_rho is relative to the initialization density level.
    double lr_mu = 0.0;
    double lr_log_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_rho = 5e-2;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    double loss_lambda = 0.25; // SSIM weight in L1 + lambda*(1-SSIM)
    std::string loss_kind = "l1_ssim"; // or "l2"

    int densify_interval = 200;
    double densify_grad_threshold = 0.0;  // <= 0: 90th percentile of mean norms
    double split_scale_threshold = 0.0;   // <= 0: 0.04 * FOV radius
    double prune_rho = 0.0;               // <= 0: 1e-3 * init density level
    double densify_stop_fraction = 0.7;

    int n_gaussians = 1000;
    std::string init_scheme = "uniform";

    double k_sigma = 3.5;
    std::uint64_t seed = 1;
    int log_interval = 50;

    double scale_min = 1e-3; // mm
    double scale_max = 0.0;  // <= 0: half the FOV extent
    int n_threads = 1;
};

TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv);

struct TrainRecord {
    int iteration = 0;
    double loss = 0.0;
    std::size_t m = 0; // primitive count
    double wall_time_s = 0.0;
};

struct TrainReport {
    std::vector<TrainRecord> records;
    std::uint64_t final_checksum = 0;
};

struct LossResult {
    double value = 0.0;
    std::vector<double> grad; // d value / d rendered, per pixel
};

// loss = (1 - lambda) * mean|r - m| + lambda * (1 - SSIM_2D(r, m)).
// Border windows use renormalized Gaussian weights so any image size works.
LossResult projection_loss(const Image& rendered, const Image& measured, double lambda);

// Plain mean squared error, the ablation loss.
LossResult projection_loss_l2(const Image& rendered, const Image& measured);

struct AdamState {
    long long t = 0;
    std::vector<ParamGrad> m1, m2; // first/second moments, per Gaussian

    void resize(std::size_t n) {
        m1.assign(n, ParamGrad{});
        m2.assign(n, ParamGrad{});
    }
};

// One Adam update with bias correction, then constraint projection
// (rho >= 0, quaternion renormalized, log_scale clamped).
void adam_step(GaussianCloud& cloud, const GradBuffer& grad, AdamState& state,
               const TrainConfig& cfg, double rho_scale, double scale_min, double scale_max);

// Accumulated position-gradient statistics driving densification.
struct DensifyStats {
    std::vector<Vec3> grad_sum;   // summed d_mu per Gaussian
    std::vector<double> norm_sum; // summed |d_mu| per Gaussian
    long long steps = 0;

    void resize(std::size_t n) {
        grad_sum.assign(n, Vec3{});
        norm_sum.assign(n, 0.0);
        steps = 0;
    }
    void accumulate(const GradBuffer& grad);
};

// Prunes rho < prune_rho, then splits large high-gradient Gaussians (scales
// divided by 1.6, children at +-0.5 sigma on the major axis) and clones
// small ones with a 0.1 sigma jitter along the gradient. Adam state rows
// follow their Gaussians; new rows start at zero.
void densify_and_prune(GaussianCloud& cloud, AdamState& state, const DensifyStats& stats,
                       double grad_threshold, double split_scale_threshold, double prune_rho);

// Seeded quasi-uniform lattice in the cylindrical FOV, isotropic scales
// FOV_diameter / cbrt(n), densities set so initial projections are
// order-of-magnitude correct.
GaussianCloud initialize(const ScannerGeometry& geom, const ProjectionSet& measured,
                         const TrainConfig& cfg);

using ProgressFn = std::function<void(const TrainRecord&)>;

std::pair<GaussianCloud, TrainReport> reconstruct(const ProjectionSet& measured,
                                                  const TrainConfig& cfg,
                                                  const ProgressFn& progress = {});

} // namespace grt
