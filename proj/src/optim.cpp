#include "grt/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "grt/errors.hpp"

namespace grt {

namespace {

double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0')
        throw ConfigError("bad numeric value for " + key + ": " + value);
    return v;
}

} // namespace

TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv) {
    TrainConfig cfg;
    for (const auto& [key, value] : kv) {
        auto num = [&] { return parse_double(key, value); };
        if (key == "iterations") cfg.iterations = int(num());
        else if (key == "batch_views") cfg.batch_views = int(num());
        else if (key == "lr_mu") cfg.lr_mu = num();
        else if (key == "lr_log_scale") cfg.lr_log_scale = num();
        else if (key == "lr_rotation") cfg.lr_rotation = num();
        else if (key == "lr_rho") cfg.lr_rho = num();
        else if (key == "adam_beta1") cfg.adam_beta1 = num();
        else if (key == "adam_beta2") cfg.adam_beta2 = num();
        else if (key == "adam_eps") cfg.adam_eps = num();
        else if (key == "loss_lambda") cfg.loss_lambda = num();
        else if (key == "loss_kind") cfg.loss_kind = value;
        else if (key == "densify_interval") cfg.densify_interval = int(num());
        else if (key == "densify_grad_threshold") cfg.densify_grad_threshold = num();
        else if (key == "split_scale_threshold_mm") cfg.split_scale_threshold = num();
        else if (key == "prune_rho") cfg.prune_rho = num();
        else if (key == "densify_stop_fraction") cfg.densify_stop_fraction = num();
        else if (key == "n_gaussians") cfg.n_gaussians = int(num());
        else if (key == "init_scheme") cfg.init_scheme = value;
        else if (key == "k_sigma") cfg.k_sigma = num();
        else if (key == "seed") cfg.seed = std::uint64_t(num());
        else if (key == "log_interval") cfg.log_interval = int(num());
        else if (key == "scale_min_mm") cfg.scale_min = num();
        else if (key == "scale_max_mm") cfg.scale_max = num();
        else if (key == "n_threads") cfg.n_threads = int(num());
        else throw ConfigError("unknown train config key: " + key);
    }
    if (cfg.iterations < 1 || cfg.batch_views < 1 || cfg.n_gaussians < 1)
        throw ConfigError("train config: counts must be >= 1");
    if (cfg.loss_lambda < 0 || cfg.loss_lambda > 1)
        throw ConfigError("train config: loss_lambda must be in [0, 1]");
    if (cfg.densify_stop_fraction <= 0 || cfg.densify_stop_fraction > 1)
        throw ConfigError("train config: densify_stop_fraction must be in (0, 1]");
    if (cfg.loss_kind != "l1_ssim" && cfg.loss_kind != "l2")
        throw ConfigError("train config: loss_kind must be l1_ssim or l2");
    return cfg;
}

namespace {

constexpr int kWin = 11;
constexpr int kHalfWin = kWin / 2;

const std::array<double, kWin>& ssim_taps() {
    static const std::array<double, kWin> taps = [] {
        std::array<double, kWin> w{};
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            double d = i - kHalfWin;
            w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += w[i];
        }
        for (double& v : w) v /= sum;
        return w;
    }();
    return taps;
}

} // namespace

LossResult projection_loss(const Image& rendered, const Image& measured, double lambda) {
    if (rendered.w != measured.w || rendered.h != measured.h)
        throw ShapeMismatch("projection_loss: image shapes differ");
    const int w = rendered.w, h = rendered.h;
    const std::size_t n = rendered.data.size();

    LossResult out;
    out.grad.assign(n, 0.0);

    // L1 term.
    double l1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = double(rendered.data[i]) - double(measured.data[i]);
        l1 += std::abs(d);
        out.grad[i] = (1.0 - lambda) * (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0) / double(n);
    }
    l1 /= double(n);
    if (lambda == 0.0) {
        out.value = (1.0 - lambda) * l1;
        return out;
    }

    // SSIM term with renormalized border windows; every pixel is a center.
    double peak = 0.0;
    for (float v : measured.data) peak = std::max(peak, double(v));
    const double c1 = std::pow(0.01 * std::max(peak, 1e-12), 2);
    const double c2 = std::pow(0.03 * std::max(peak, 1e-12), 2);
    const auto& taps = ssim_taps();

    double ssim_sum = 0.0;
    for (int cy = 0; cy < h; ++cy) {
        int y0 = std::max(0, cy - kHalfWin), y1 = std::min(h - 1, cy + kHalfWin);
        for (int cx = 0; cx < w; ++cx) {
            int x0 = std::max(0, cx - kHalfWin), x1 = std::min(w - 1, cx + kHalfWin);
            double wsum = 0, mx = 0, my = 0, exx = 0, eyy = 0, exy = 0;
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    double wt = taps[y - cy + kHalfWin] * taps[x - cx + kHalfWin];
                    double xv = rendered.at(x, y), yv = measured.at(x, y);
                    wsum += wt;
                    mx += wt * xv;
                    my += wt * yv;
                    exx += wt * xv * xv;
                    eyy += wt * yv * yv;
                    exy += wt * xv * yv;
                }
            mx /= wsum; my /= wsum; exx /= wsum; eyy /= wsum; exy /= wsum;
            double vx = exx - mx * mx, vy = eyy - my * my, cxy = exy - mx * my;
            double a1 = 2 * mx * my + c1, a2 = 2 * cxy + c2;
            double b1 = mx * mx + my * my + c1, b2 = vx + vy + c2;
            double s = (a1 * a2) / (b1 * b2);
            ssim_sum += s;

            double ds_dmx = (2 * my * a2) / (b1 * b2) - s * (2 * mx) / b1;
            double ds_dvx = -s / b2;
            double ds_dcxy = 2 * a1 / (b1 * b2);

            // d loss_ssim / d rendered = -lambda/n * dS/dx, scattered back.
            double coef = -lambda / double(n);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    double wt = taps[y - cy + kHalfWin] * taps[x - cx + kHalfWin] / wsum;
                    double xv = rendered.at(x, y), yv = measured.at(x, y);
                    out.grad[std::size_t(y) * w + x] +=
                        coef * wt * (ds_dmx + 2 * (xv - mx) * ds_dvx + (yv - my) * ds_dcxy);
                }
        }
    }
    out.value = (1.0 - lambda) * l1 + lambda * (1.0 - ssim_sum / double(n));
    return out;
}

LossResult projection_loss_l2(const Image& rendered, const Image& measured) {
    if (rendered.w != measured.w || rendered.h != measured.h)
        throw ShapeMismatch("projection_loss_l2: image shapes differ");
    const std::size_t n = rendered.data.size();
    LossResult out;
    out.grad.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double d = double(rendered.data[i]) - double(measured.data[i]);
        out.value += d * d / double(n);
        out.grad[i] = 2.0 * d / double(n);
    }
    return out;
}

void adam_step(GaussianCloud& cloud, const GradBuffer& grad, AdamState& state,
               const TrainConfig& cfg, double rho_scale, double scale_min, double scale_max) {
    const std::size_t n = cloud.count();
    if (grad.grads.size() != n || state.m1.size() != n || state.m2.size() != n)
        throw StateMismatch("adam_step: state/gradient size mismatch");

    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, double(state.t));

    auto update = [&](double& param, double g, double& m1, double& m2, double lr) {
        m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * g;
        m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * g * g;
        param -= lr * (m1 / bc1) / (std::sqrt(m2 / bc2) + cfg.adam_eps);
    };

    const double lr_rho_abs = cfg.lr_rho * std::max(rho_scale, 1e-300);
    for (std::size_t i = 0; i < n; ++i) {
        Gaussian& g = cloud.gaussians[i];
        const ParamGrad& pg = grad.grads[i];
        ParamGrad& m1 = state.m1[i];
        ParamGrad& m2 = state.m2[i];

        update(g.rho, pg.d_rho, m1.d_rho, m2.d_rho, lr_rho_abs);
        for (int j = 0; j < 3; ++j)
            update(g.mu[j], pg.d_mu[j], m1.d_mu[j], m2.d_mu[j], cfg.lr_mu);
        for (int j = 0; j < 3; ++j)
            update(g.log_scale[j], pg.d_log_scale[j], m1.d_log_scale[j], m2.d_log_scale[j],
                   cfg.lr_log_scale);
        for (int k = 0; k < 4; ++k)
            update(g.rotation[k], pg.d_rotation[k], m1.d_rotation[k], m2.d_rotation[k],
                   cfg.lr_rotation);

        g.project_to_feasible(scale_min, scale_max);
    }
}

void DensifyStats::accumulate(const GradBuffer& grad) {
    if (grad.grads.size() != grad_sum.size())
        throw StateMismatch("DensifyStats: size mismatch");
    for (std::size_t i = 0; i < grad.grads.size(); ++i) {
        grad_sum[i] += grad.grads[i].d_mu;
        norm_sum[i] += norm(grad.grads[i].d_mu);
    }
    ++steps;
}

void densify_and_prune(GaussianCloud& cloud, AdamState& state, const DensifyStats& stats,
                       double grad_threshold, double split_scale_threshold, double prune_rho) {
    const std::size_t n = cloud.count();
    if (stats.norm_sum.size() != n || state.m1.size() != n)
        throw StateMismatch("densify_and_prune: size mismatch");

    GaussianCloud out;
    AdamState out_state;
    out_state.t = state.t;

    auto push = [&](const Gaussian& g, const ParamGrad& m1, const ParamGrad& m2) {
        out.gaussians.push_back(g);
        out_state.m1.push_back(m1);
        out_state.m2.push_back(m2);
    };
    const ParamGrad zero{};

    for (std::size_t i = 0; i < n; ++i) {
        const Gaussian& g = cloud.gaussians[i];
        if (g.rho < prune_rho) continue;

        double mean_norm = stats.steps > 0 ? stats.norm_sum[i] / double(stats.steps) : 0.0;
        if (mean_norm <= grad_threshold) {
            push(g, state.m1[i], state.m2[i]);
            continue;
        }

        int major = 0;
        if (g.log_scale.y > g.log_scale[major]) major = 1;
        if (g.log_scale.z > g.log_scale[major]) major = 2;
        double sigma_major = std::exp(g.log_scale[major]);

        if (sigma_major > split_scale_threshold) {
            // Split along the major axis; children straddle the parent mean.
            Mat3 rot = g.rotation.to_matrix();
            Vec3 axis{rot(0, major), rot(1, major), rot(2, major)};
            Gaussian child = g;
            child.log_scale -= Vec3{std::log(1.6), std::log(1.6), std::log(1.6)};
            child.mu = g.mu + axis * (0.5 * sigma_major);
            push(child, zero, zero);
            child.mu = g.mu - axis * (0.5 * sigma_major);
            push(child, zero, zero);
        } else {
            push(g, state.m1[i], state.m2[i]);
            Gaussian clone = g;
            Vec3 dir = stats.grad_sum[i];
            double dn = norm(dir);
            if (dn > 0) {
                double sigma_mean = (std::exp(g.log_scale.x) + std::exp(g.log_scale.y) +
                                     std::exp(g.log_scale.z)) / 3.0;
                clone.mu += dir * (0.1 * sigma_mean / dn);
            }
            push(clone, zero, zero);
        }
    }

    cloud = std::move(out);
    state = std::move(out_state);
}

GaussianCloud initialize(const ScannerGeometry& geom, const ProjectionSet& measured,
                         const TrainConfig& cfg) {
    const double fov_r = fov_radius(geom);
    const double fov_h = std::max(fov_half_length(geom), 1e-6);
    const int n = cfg.n_gaussians;
    if (cfg.init_scheme != "uniform")
        throw ConfigError("unknown init scheme: " + cfg.init_scheme);

    std::mt19937_64 rng(cfg.seed);
    std::vector<Vec3> positions;
    if (n == 1) {
        positions.push_back({0, 0, 0});
    } else {
        const double volume = M_PI * fov_r * fov_r * 2.0 * fov_h;
        const double h = std::cbrt(volume / n);
        std::uniform_real_distribution<double> jitter(-0.3 * h, 0.3 * h);
        for (double z = -fov_h + 0.5 * h; z < fov_h; z += h)
            for (double y = -fov_r + 0.5 * h; y < fov_r; y += h)
                for (double x = -fov_r + 0.5 * h; x < fov_r; x += h) {
                    Vec3 p{x + jitter(rng), y + jitter(rng), z + jitter(rng)};
                    if (p.x * p.x + p.y * p.y < fov_r * fov_r && std::abs(p.z) < fov_h)
                        positions.push_back(p);
                }
        // Trim or top up to exactly n, deterministically.
        std::shuffle(positions.begin(), positions.end(), rng);
        if (int(positions.size()) > n) positions.resize(n);
        std::uniform_real_distribution<double> ux(-fov_r, fov_r), uz(-fov_h, fov_h);
        while (int(positions.size()) < n) {
            Vec3 p{ux(rng), ux(rng), uz(rng)};
            if (p.x * p.x + p.y * p.y < fov_r * fov_r) positions.push_back(p);
        }
    }

    double scale_max = cfg.scale_max > 0 ? cfg.scale_max : fov_r;
    double sigma = std::clamp(2.0 * fov_r / std::cbrt(double(n)), cfg.scale_min, scale_max);

    double mean_measured = 0.0;
    for (float v : measured.data) mean_measured += v;
    mean_measured /= std::max<std::size_t>(measured.data.size(), 1);

    // Rough count of Gaussians a chord through the FOV intersects.
    const double volume = M_PI * fov_r * fov_r * 2.0 * fov_h;
    double per_ray = n * M_PI * std::pow(cfg.k_sigma * sigma, 2) * 2.0 * fov_r / volume;
    per_ray = std::clamp(per_ray, 1.0, double(n));
    double rho0 = mean_measured / (per_ray * std::sqrt(2.0 * M_PI) * sigma);
    rho0 = std::max(rho0, 0.0);

    GaussianCloud cloud;
    cloud.gaussians.reserve(positions.size());
    for (const Vec3& p : positions) {
        Gaussian g;
        g.mu = p;
        g.log_scale = Vec3{std::log(sigma), std::log(sigma), std::log(sigma)};
        g.rotation = Quat{1, 0, 0, 0};
        g.rho = rho0;
        cloud.gaussians.push_back(g);
    }
    return cloud;
}

std::pair<GaussianCloud, TrainReport> reconstruct(const ProjectionSet& measured,
                                                  const TrainConfig& cfg,
                                                  const ProgressFn& progress) {
    const ScannerGeometry& geom = measured.geometry;
    validate(geom);
    if (measured.data.size() != total_bins(geom))
        throw ShapeMismatch("reconstruct: data size does not match geometry");

    TrainConfig run = cfg;
    const double fov_r = fov_radius(geom);
    if (run.lr_mu <= 0) run.lr_mu = 2e-4 * 2.0 * fov_r;
    if (run.scale_max <= 0) run.scale_max = fov_r;
    if (run.split_scale_threshold <= 0) run.split_scale_threshold = 0.04 * fov_r;

    // Train against mean-normalized data so rate defaults are scale-free;
    // densities are scaled back at the end.
    double data_mean = 0.0;
    for (float v : measured.data) data_mean += v;
    data_mean /= std::max<std::size_t>(measured.data.size(), 1);
    double norm_factor = data_mean > 0 ? data_mean : 1.0;

    ProjectionSet normalized = measured;
    for (float& v : normalized.data) v = float(v / norm_factor);

    GaussianCloud cloud = initialize(geom, normalized, run);
    const double rho0 = cloud.gaussians.empty() ? 1.0 : std::max(cloud.gaussians[0].rho, 1e-12);
    const double prune_rho = run.prune_rho > 0 ? run.prune_rho : 1e-3 * rho0;

    Bvh bvh = Bvh::build(cloud, run.k_sigma);
    AdamState state;
    state.resize(cloud.count());
    DensifyStats stats;
    stats.resize(cloud.count());

    const int total_views = n_total_views(geom);
    std::vector<int> view_order(total_views);
    std::iota(view_order.begin(), view_order.end(), 0);
    std::mt19937_64 view_rng(run.seed ^ 0x9e3779b97f4a7c15ull);
    std::shuffle(view_order.begin(), view_order.end(), view_rng);
    std::size_t view_cursor = 0;

    TrainReport report;
    auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    GradBuffer grad;
    for (int iter = 1; iter <= run.iterations; ++iter) {
        grad.resize(cloud.count());
        double loss = 0.0;
        int batch = std::min(run.batch_views, total_views);
        for (int b = 0; b < batch; ++b) {
            if (view_cursor >= view_order.size()) {
                std::shuffle(view_order.begin(), view_order.end(), view_rng);
                view_cursor = 0;
            }
            int view = view_order[view_cursor++];

            Image rendered = forward_project(cloud, geom, view, &bvh, run.n_threads);
            ViewShape shape = view_shape(geom, view);
            std::size_t off = view_offset(geom, view);
            Image target;
            target.w = shape.w;
            target.h = shape.h;
            target.data.assign(normalized.data.begin() + off,
                               normalized.data.begin() + off + shape.size());

            LossResult lr = run.loss_kind == "l2" ? projection_loss_l2(rendered, target)
                                                  : projection_loss(rendered, target, run.loss_lambda);
            loss += lr.value / batch;
            for (double& g : lr.grad) g /= batch;
            backward_project(cloud, geom, view, lr.grad, &bvh, grad, run.n_threads);
        }
        if (!std::isfinite(loss))
            throw NonFiniteLoss("reconstruct: non-finite loss at iteration " + std::to_string(iter));

        stats.accumulate(grad);
        adam_step(cloud, grad, state, run, rho0, run.scale_min, run.scale_max);

        bool densify_due = run.densify_interval > 0 && iter % run.densify_interval == 0 &&
                           iter < run.densify_stop_fraction * run.iterations && cloud.count() > 0;
        if (densify_due) {
            double threshold = run.densify_grad_threshold;
            if (threshold <= 0) {
                // Auto mode: densify the top decile by mean position gradient.
                std::vector<double> means(cloud.count());
                for (std::size_t i = 0; i < means.size(); ++i)
                    means[i] = stats.steps > 0 ? stats.norm_sum[i] / double(stats.steps) : 0.0;
                std::size_t k = means.size() * 9 / 10;
                std::nth_element(means.begin(), means.begin() + k, means.end());
                threshold = means[k];
            }
            densify_and_prune(cloud, state, stats, threshold, run.split_scale_threshold, prune_rho);
            stats.resize(cloud.count());
            bvh = Bvh::build(cloud, run.k_sigma);
        } else {
            bvh.refit(cloud);
        }

        if (iter == 1 || iter == run.iterations ||
            (run.log_interval > 0 && iter % run.log_interval == 0)) {
            TrainRecord rec{iter, loss, cloud.count(), elapsed()};
            report.records.push_back(rec);
            if (progress) progress(rec);
        }
    }

    for (Gaussian& g : cloud.gaussians) g.rho *= norm_factor;
    report.final_checksum = cloud.checksum();
    return {std::move(cloud), std::move(report)};
}

} // namespace grt
