// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Optional argv: criterion numbers to run (default all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "grt/accel.hpp"
#include "grt/geometry.hpp"
#include "grt/metrics.hpp"
#include "grt/model.hpp"
#include "grt/optim.hpp"
#include "grt/phantom.hpp"
#include "grt/projector.hpp"
#include "test_support.hpp"

using namespace grt;
using grt::test::quadrature_integral;
using grt::test::random_gaussian;
using grt::test::random_ray;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("criterion %d (%s): %s%s%s\n", id, name.c_str(), pass ? "PASS" : "FAIL",
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- criterion 1

void criterion_1() {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        Gaussian g = random_gaussian(rng, 4.0); // scale ratio <= 6, cond <= 36
        Ray r = random_ray(rng, 4.0);
        double analytic = integrate_gaussian(g, r);
        double oracle = quadrature_integral(g, r);
        worst = std::max(worst, std::abs(analytic - oracle) / oracle);
    }
    report(1, "analytic integral vs quadrature", worst <= 1e-6,
           fmt("max relative error %.3e over 1000 pairs (bound 1e-6)", worst));
}

// ---------------------------------------------------------------- criterion 2

ParamGrad fd_gradient(const Gaussian& g, const Ray& r, double h = 1e-6) {
    ParamGrad fd;
    auto eval = [&](const Gaussian& gg) { return integrate_gaussian(gg, r); };
    Gaussian p = g, m = g;
    p.rho += h;
    m.rho -= h;
    fd.d_rho = (eval(p) - eval(m)) / (2 * h);
    for (int j = 0; j < 3; ++j) {
        p = g; m = g;
        p.mu[j] += h;
        m.mu[j] -= h;
        fd.d_mu[j] = (eval(p) - eval(m)) / (2 * h);
        p = g; m = g;
        p.log_scale[j] += h;
        m.log_scale[j] -= h;
        fd.d_log_scale[j] = (eval(p) - eval(m)) / (2 * h);
    }
    // Raw-component perturbation: to_matrix renormalizes internally, so the
    // difference probes the tangent direction the analytic gradient reports.
    for (int k = 0; k < 4; ++k) {
        p = g; m = g;
        p.rotation[k] += h;
        m.rotation[k] -= h;
        fd.d_rotation[k] = (eval(p) - eval(m)) / (2 * h);
    }
    return fd;
}

void criterion_2() {
    std::mt19937_64 rng(202);
    double worst = 0.0; // error measured in units of the allowed tolerance
    auto check = [&](double got, double want) {
        double tol = std::max(1e-8, 1e-4 * std::abs(want));
        worst = std::max(worst, std::abs(got - want) / tol);
    };
    for (int trial = 0; trial < 100; ++trial) {
        Gaussian g = random_gaussian(rng, 4.0);
        Ray r = random_ray(rng, 4.0);
        ParamGrad an = integrate_gaussian_grad(g, r, 1.0);
        ParamGrad fd = fd_gradient(g, r);
        check(an.d_rho, fd.d_rho);
        for (int j = 0; j < 3; ++j) {
            check(an.d_mu[j], fd.d_mu[j]);
            check(an.d_log_scale[j], fd.d_log_scale[j]);
        }
        for (int k = 0; k < 4; ++k) check(an.d_rotation[k], fd.d_rotation[k]);
    }
    report(2, "gradients vs central finite differences", worst <= 1.0,
           fmt("worst error %.3f x tolerance (rel 1e-4, abs 1e-8) over 100 configs", worst));
}

// ---------------------------------------------------------------- criterion 3

// Scenes mimic a trained cloud: a dense object at the isocenter plus
// scattered far-field primitives that a sound culler must reject. (In a
// space-filling cloud the mass beyond any 3.5-sigma cutoff is about
// exp(-3.5^2/2) ~ 2e-3 of the total, so a 1e-4 per-ray bound is only
// meaningful in this object-plus-empty-space regime.)
void criterion_3() {
    std::mt19937_64 rng(303);
    double worst = 0.0;
    std::size_t culls = 0, rays = 0;
    for (int scene = 0; scene < 50; ++scene) {
        GaussianCloud cloud;
        cloud.gaussians.reserve(500);
        std::uniform_real_distribution<double> ls(std::log(4.5), std::log(6.0));
        std::uniform_real_distribution<double> density(0.1, 2.0);
        std::normal_distribution<double> unit(0.0, 1.0);
        std::uniform_real_distribution<double> core_r(0.0, 12.0), far_r(150.0, 400.0);
        auto at_radius = [&](double r) {
            Vec3 u = normalized(Vec3{unit(rng), unit(rng), unit(rng)});
            return u * r;
        };
        for (int i = 0; i < 500; ++i) {
            Gaussian g;
            g.mu = at_radius(i < 300 ? core_r(rng) : far_r(rng));
            g.log_scale = {ls(rng), ls(rng), ls(rng)};
            g.rotation = grt::test::random_rotation(rng);
            g.rho = density(rng);
            cloud.gaussians.push_back(g);
        }
        Bvh bvh = Bvh::build(cloud, 3.5);
        std::uniform_real_distribution<double> offset(-2.0, 2.0);
        std::vector<std::uint32_t> cand;
        for (int k = 0; k < 200; ++k) {
            Vec3 dir = grt::test::random_unit(rng);
            Vec3 through{offset(rng), offset(rng), offset(rng)};
            Ray ray{through - dir * 1000.0, dir, std::nullopt};
            double brute = integrate_ray(cloud, ray);
            bvh.candidates(ray, cloud.count(), cand);
            double culled = integrate_ray(cloud, ray, &cand);
            worst = std::max(worst, std::abs(culled - brute) / brute);
            culls += cloud.count() - cand.size();
            ++rays;
        }
    }
    report(3, "BVH culling vs brute force", worst <= 1e-4,
           fmt("max per-ray relative error %.3e over 50 scenes x 200 rays (bound 1e-4), "
               "%.0f Gaussians culled per ray on average",
               worst, double(culls) / rays));
}

// ---------------------------------------------------------------- criterion 4

void criterion_4() {
    ParallelGeometry geom;
    geom.nu = 33;
    geom.nv = 5;
    geom.bin_spacing = 2.0;
    geom.n_views = 180;
    geom.angular_range = M_PI;

    GaussianCloud cloud;
    Gaussian g;
    g.log_scale = {std::log(4.0), std::log(4.0), std::log(4.0)};
    g.rho = 1.7;
    cloud.gaussians.push_back(g);

    double ref = 0.0, worst = 0.0;
    for (int v = 0; v < geom.n_views; ++v) {
        Image img = forward_project(cloud, geom, v, nullptr, 1);
        double central = img.at(geom.nu / 2, geom.nv / 2);
        if (v == 0) ref = central;
        worst = std::max(worst, std::abs(central - ref) / ref);
    }
    report(4, "central bin consistent across 180 views", worst <= 1e-9,
           fmt("max relative deviation %.3e (bound 1e-9)", worst));
}

// ---------------------------------------------------- criteria 5-7 experiments

struct PeakMeasure {
    Vec3 position;
    double value = 0.0;
    double fwhm_x = 0.0;
};

// Max voxel in a world-space window, then transverse width through it.
PeakMeasure measure_peak(const VolumeGrid& vol, const Vec3& lo, const Vec3& hi) {
    PeakMeasure best;
    for (int z = 0; z < vol.dims[2]; ++z)
        for (int y = 0; y < vol.dims[1]; ++y)
            for (int x = 0; x < vol.dims[0]; ++x) {
                Vec3 c = vol.voxel_center(x, y, z);
                if (c.x < lo.x || c.x > hi.x || c.y < lo.y || c.y > hi.y || c.z < lo.z ||
                    c.z > hi.z)
                    continue;
                if (vol.at(x, y, z) > best.value) {
                    best.value = vol.at(x, y, z);
                    best.position = c;
                }
            }
    best.fwhm_x = fwhm(line_profile(vol, 0, best.position), vol.spacing.x);
    return best;
}

struct PointSourceRun {
    std::uint64_t checksum = 0;
    PeakMeasure peaks[3];
};

CylindricalPetGeometry point_source_geometry() {
    CylindricalPetGeometry g;
    g.ring_radius = 300.0;
    g.n_crystals_per_ring = 288;
    g.n_rings = 1;
    g.ring_spacing = 4.0;
    g.n_radial_bins = 161;
    g.n_views = 144;
    g.max_ring_difference = 0;
    g.arc_corrected = false;
    return g;
}

TrainConfig point_source_train_config() {
    TrainConfig cfg;
    cfg.iterations = 3000;
    cfg.batch_views = 6;
    cfg.loss_kind = "l2";
    cfg.n_gaussians = 1000;
    cfg.scale_max = 6.0;
    cfg.lr_mu = 1.0;
    cfg.lr_log_scale = 0.1;
    cfg.lr_rho = 0.3;
    cfg.densify_interval = 150;
    cfg.seed = 5;
    cfg.n_threads = 1;
    return cfg;
}

PointSourceRun run_point_sources(const ProjectionSet& measured) {
    auto [cloud, rep] = reconstruct(measured, point_source_train_config());
    VolumeGrid grid = VolumeGrid::centered({64, 240, 8}, {1, 1, 1}, {0, 105, 0});
    VolumeGrid vol = voxelize(cloud, grid, 3.5, 1);
    PointSourceRun out;
    out.checksum = rep.final_checksum;
    for (int i = 0; i < 3; ++i) {
        Vec3 c = point_source_center(i);
        out.peaks[i] = measure_peak(vol, {c.x - 16, c.y - 8, -4}, {c.x + 16, c.y + 24, 4});
    }
    return out;
}

double peak_spread(const PointSourceRun& r) {
    double lo = r.peaks[0].value, hi = r.peaks[0].value, sum = 0.0;
    for (const auto& p : r.peaks) {
        lo = std::min(lo, p.value);
        hi = std::max(hi, p.value);
        sum += p.value;
    }
    return (hi - lo) / (sum / 3.0);
}

struct ArcResult {
    PointSourceRun matched, mismatched;
    bool pass = false;
};

ArcResult criterion_5(const ProjectionSet& measured) {
    auto t0 = std::chrono::steady_clock::now();

    // Reconstructing the native data under a uniform-radial-grid geometry
    // reproduces the classic un-arc-corrected mismatch; the matched native
    // geometry places every ray exactly.
    ProjectionSet mismatched_set = measured;
    std::get<CylindricalPetGeometry>(mismatched_set.geometry).arc_corrected = true;

    ArcResult res;
    res.matched = run_point_sources(measured);
    res.mismatched = run_point_sources(mismatched_set);

    double f_m = res.matched.peaks[2].fwhm_x;
    double f_u = res.mismatched.peaks[2].fwhm_x;
    double s_m = peak_spread(res.matched);
    double s_u = peak_spread(res.mismatched);
    bool fwhm_ok = f_m <= 0.9 * f_u;
    bool spread_ok = s_m < s_u;
    res.pass = fwhm_ok && spread_ok;
    report(5, "PET arc-correction effect", res.pass,
           fmt("20cm-source FWHM %.2f mm exact vs %.2f mm mismatched (need <=0.9x); "
               "peak spread %.3f vs %.3f; %.0f s",
               f_m, f_u, s_m, s_u, elapsed_s(t0)));
    return res;
}

struct NemaResult {
    std::uint64_t checksum = 0;
    double sbr4 = 0.0, sbr5 = 0.0, hollow_ratio = 1.0;
    bool pass = false;
};

CylindricalPetGeometry nema_geometry() {
    CylindricalPetGeometry g;
    g.ring_radius = 400.0;
    g.n_crystals_per_ring = 576;
    g.n_rings = 9;
    g.ring_spacing = 5.0;
    g.n_radial_bins = 115;
    g.n_views = 48;
    g.max_ring_difference = 2;
    g.arc_corrected = false;
    return g;
}

TrainConfig nema_train_config() {
    TrainConfig cfg;
    cfg.iterations = 1500;
    cfg.batch_views = 4;
    cfg.loss_kind = "l1_ssim";
    cfg.n_gaussians = 1500;
    cfg.scale_max = 15.0;
    cfg.lr_mu = 0.5;
    cfg.lr_log_scale = 0.1;
    cfg.lr_rho = 0.3;
    cfg.densify_interval = 200;
    cfg.seed = 6;
    cfg.n_threads = 1;
    return cfg;
}

NemaResult run_nema(const ProjectionSet& measured) {
    auto [cloud, rep] = reconstruct(measured, nema_train_config());
    VolumeGrid grid = VolumeGrid::centered({128, 128, 40}, {2, 2, 2});
    VolumeGrid vol = voxelize(cloud, grid, 3.5, 1);

    NemaResult res;
    res.checksum = rep.final_checksum;
    Vec3 bg = nema_background_point();
    res.sbr4 = sbr(vol, nema_sphere_center(4), nema_sphere_diameter(4), bg);
    res.sbr5 = sbr(vol, nema_sphere_center(5), nema_sphere_diameter(5), bg);
    // Mean inside the hollow insert over the background mean: a 30 mm ROI
    // centered in the 50 mm-diameter zero-activity cylinder.
    res.hollow_ratio = sbr(vol, {0, 0, 0}, 30.0, bg);
    res.pass = std::abs(res.sbr4 - 4.0) <= 0.4 && std::abs(res.sbr5 - 4.0) <= 0.4 &&
               res.hollow_ratio <= 0.05;
    return res;
}

NemaResult criterion_6(const ProjectionSet& measured) {
    auto t0 = std::chrono::steady_clock::now();
    NemaResult res = run_nema(measured);
    report(6, "NEMA quantitative accuracy", res.pass,
           fmt("SBR %.2f / %.2f (need 4.0 +-10%%), hollow/background %.3f (need <=0.05); %.0f s",
               res.sbr4, res.sbr5, res.hollow_ratio, elapsed_s(t0)));
    return res;
}

ProjectionSet nema_measured() {
    ProjectionSet clean = simulate(build_nema(1.0, 4.0), nema_geometry(), 1);
    return add_poisson(clean, 5e6, 42);
}

struct CtResult {
    std::uint64_t checksum = 0;
    double psnr_db = 0.0, ssim = 0.0;
    bool pass = false;
};

ParallelGeometry ct_geometry() {
    ParallelGeometry g;
    g.nu = 64;
    g.nv = 64;
    g.bin_spacing = 2.0;
    g.n_views = 60;
    g.angular_range = M_PI;
    return g;
}

TrainConfig ct_train_config() {
    TrainConfig cfg;
    cfg.iterations = 900;
    cfg.batch_views = 2;
    cfg.loss_kind = "l2";
    cfg.n_gaussians = 1000;
    cfg.scale_max = 8.0;
    cfg.lr_mu = 0.5;
    cfg.lr_log_scale = 0.1;
    cfg.lr_rho = 0.3;
    cfg.densify_interval = 150;
    cfg.seed = 7;
    cfg.n_threads = 1;
    return cfg;
}

CtResult run_ct(const ProjectionSet& measured, const VolumeGrid& truth) {
    auto [cloud, rep] = reconstruct(measured, ct_train_config());
    VolumeGrid vol = voxelize(cloud, VolumeGrid::centered({64, 64, 64}, {2, 2, 2}), 3.5, 1);
    CtResult res;
    res.checksum = rep.final_checksum;
    res.psnr_db = psnr(vol, truth);
    res.ssim = ssim3d(vol, truth);
    res.pass = res.psnr_db >= 30.0 && res.ssim >= 0.90;
    return res;
}

CtResult criterion_7(const ProjectionSet& measured, const VolumeGrid& truth) {
    auto t0 = std::chrono::steady_clock::now();
    CtResult res = run_ct(measured, truth);
    report(7, "CT round-trip fidelity", res.pass,
           fmt("PSNR %.2f dB (need >=30), SSIM %.4f (need >=0.90); %.0f s", res.psnr_db, res.ssim,
               elapsed_s(t0)));
    return res;
}

// ---------------------------------------------------------------- criterion 9

void criterion_9() {
    std::mt19937_64 rng(909);

    bool fwhm_ok = true;
    for (double sigma : {2.0, 3.5, 5.0, 7.5, 10.0}) {
        std::vector<double> prof(201);
        for (int i = 0; i < 201; ++i) {
            double d = (i - 100) / sigma;
            prof[i] = std::exp(-0.5 * d * d);
        }
        double want = 2.0 * std::sqrt(2.0 * std::log(2.0)) * sigma;
        double got = fwhm(prof, 1.0);
        if (std::abs(got - want) > 0.02 * want) fwhm_ok = false;
    }

    VolumeGrid v = VolumeGrid::centered({16, 16, 16}, {1, 1, 1});
    std::uniform_real_distribution<double> val(0.0, 1.0);
    for (auto& x : v.data) x = static_cast<float>(val(rng));
    bool ssim_ok = ssim3d(v, v) == 1.0;

    bool psnr_ok = true;
    double prev = std::numeric_limits<double>::infinity();
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> unit_noise(v.size());
    for (auto& x : unit_noise) x = noise(rng);
    for (double amp : {0.01, 0.03, 0.1, 0.3, 1.0}) {
        VolumeGrid n = v;
        for (std::size_t i = 0; i < n.size(); ++i)
            n.data[i] = static_cast<float>(v.data[i] + amp * unit_noise[i]);
        double p = psnr(n, v);
        if (p >= prev) psnr_ok = false;
        prev = p;
    }

    report(9, "metric self-tests", fwhm_ok && ssim_ok && psnr_ok,
           fmt("fwhm within 2%%: %s; ssim(v,v)=1: %s; psnr monotone: %s", fwhm_ok ? "yes" : "no",
               ssim_ok ? "yes" : "no", psnr_ok ? "yes" : "no"));
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    auto run = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };
    bool rerun_for_determinism = run(8);

    if (run(1)) criterion_1();
    if (run(2)) criterion_2();
    if (run(3)) criterion_3();
    if (run(4)) criterion_4();

    ArcResult arc;
    NemaResult nema;
    CtResult ct;
    ProjectionSet arc_measured, nema_set, ct_measured;
    VolumeGrid ct_truth;

    if (run(5) || rerun_for_determinism) {
        arc_measured = simulate(build_point_sources(), point_source_geometry(), 1);
        arc = criterion_5(arc_measured);
    }
    if (run(6) || rerun_for_determinism) {
        nema_set = nema_measured();
        nema = criterion_6(nema_set);
    }
    if (run(7) || rerun_for_determinism) {
        ct_measured = simulate(build_sphere_cluster(fov_radius(ct_geometry())), ct_geometry(), 1);
        ct_truth = rasterize(build_sphere_cluster(fov_radius(ct_geometry())),
                             VolumeGrid::centered({64, 64, 64}, {2, 2, 2}), 2);
        ct = criterion_7(ct_measured, ct_truth);
    }

    if (rerun_for_determinism) {
        auto t0 = std::chrono::steady_clock::now();
        ProjectionSet mismatched_set = arc_measured;
        std::get<CylindricalPetGeometry>(mismatched_set.geometry).arc_corrected = true;
        PointSourceRun arc2a = run_point_sources(arc_measured);
        PointSourceRun arc2b = run_point_sources(mismatched_set);
        NemaResult nema2 = run_nema(nema_set);
        CtResult ct2 = run_ct(ct_measured, ct_truth);
        bool ok = arc2a.checksum == arc.matched.checksum &&
                  arc2b.checksum == arc.mismatched.checksum && nema2.checksum == nema.checksum &&
                  ct2.checksum == ct.checksum;
        report(8, "deterministic replay of criteria 5-7", ok,
               fmt("checksums %s on rerun; %.0f s", ok ? "identical" : "DIFFER", elapsed_s(t0)));
    }

    if (run(9)) criterion_9();

    if (g_failures == 0) std::printf("all acceptance criteria passed\n");
    return g_failures == 0 ? 0 : 1;
}
