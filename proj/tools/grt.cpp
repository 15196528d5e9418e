#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "grt/errors.hpp"
#include "grt/io.hpp"
#include "grt/metrics.hpp"
#include "grt/optim.hpp"
#include "grt/phantom.hpp"

namespace {

constexpr const char* kToolVersion = "1.0.0";

// Exit-code contract: 0 ok, 2 config, 3 I/O, 4 numeric.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Config files are part of the configuration contract: a missing one is a
// config error, not an I/O error.
std::string read_config_text(const std::string& path) {
    try {
        return grt::read_text_file(path);
    } catch (const grt::IoError& e) {
        throw grt::ConfigError(e.what());
    }
}

struct ManifestInfo {
    std::string command;
    std::string config_path;
    std::string config_hash;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
    double wall_time_s = 0.0;
};

void write_manifest(const std::string& out_path, const ManifestInfo& info) {
    nlohmann::json j;
    j["command"] = info.command;
    if (!info.config_path.empty()) {
        j["config_path"] = info.config_path;
        j["config_hash"] = info.config_hash;
    }
    j["inputs"] = info.inputs;
    j["outputs"] = info.outputs;
    j["seed"] = info.seed;
    j["tool_version"] = kToolVersion;
    j["wall_time_s"] = info.wall_time_s;
    grt::write_text_file(out_path + ".manifest.json", j.dump(2) + "\n");
}

grt::Vec3 parse_vec3(const std::string& s, const char* what) {
    grt::Vec3 v;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &v.x, &v.y, &v.z) != 3)
        throw grt::ConfigError(std::string("expected x,y,z for ") + what + ": " + s);
    return v;
}

grt::AnalyticPhantom parse_phantom(const std::string& name, double background, double ratio,
                                   double source_radius) {
    if (name == "nema") return grt::build_nema(background, ratio);
    if (name == "point-sources") return grt::build_point_sources(source_radius, 1.0);
    if (name.rfind("spheres:", 0) == 0) {
        grt::AnalyticPhantom p;
        std::istringstream is(name.substr(8));
        std::string item;
        while (std::getline(is, item, ';')) {
            double x, y, z, r, a;
            if (std::sscanf(item.c_str(), "%lf,%lf,%lf,%lf,%lf", &x, &y, &z, &r, &a) != 5)
                throw grt::ConfigError("spheres spec: expected x,y,z,radius,activity;...");
            p.elements.push_back({grt::Sphere{{x, y, z}, r}, a});
        }
        if (p.elements.empty()) throw grt::ConfigError("spheres spec: no spheres given");
        return p;
    }
    throw grt::ConfigError("unknown phantom: " + name + " (nema, point-sources, spheres:<spec>)");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

int run(int argc, char** argv) {
    CLI::App app{"3D Gaussian ray-tracing tomography toolkit"};
    app.require_subcommand(1);

    // Shared options, bound per subcommand.
    struct Common {
        std::uint64_t seed = 1;
        int threads = 1;
        bool deterministic = false;
        std::string out;
    };

    auto add_common = [](CLI::App* cmd, Common& c, bool out_required = true) {
        cmd->add_option("--seed", c.seed, "random seed");
        cmd->add_option("--threads", c.threads, "worker thread cap");
        cmd->add_flag("--deterministic", c.deterministic, "single-worker replayable mode");
        auto* o = cmd->add_option("-o,--out", c.out, "output path");
        if (out_required) o->required();
    };

    // ---- simulate ----
    auto* sim = app.add_subcommand("simulate", "analytic phantom forward simulation");
    Common sim_c;
    std::string sim_geom, sim_phantom;
    double sim_counts = 0.0, sim_background = 1.0, sim_ratio = 4.0, sim_source_radius = 2.0;
    sim->add_option("--geom", sim_geom, "geometry config file")->required();
    sim->add_option("--phantom", sim_phantom, "nema | point-sources | spheres:<spec>")->required();
    sim->add_option("--counts", sim_counts, "total counts for Poisson noise (0 = noiseless)");
    sim->add_option("--background", sim_background, "background activity per mm");
    sim->add_option("--ratio", sim_ratio, "sphere-to-background activity ratio");
    sim->add_option("--source-radius", sim_source_radius, "point source radius, mm");
    add_common(sim, sim_c);

    // ---- reconstruct ----
    auto* rec = app.add_subcommand("reconstruct", "optimize a Gaussian cloud against projections");
    Common rec_c;
    std::string rec_sino, rec_train;
    bool rec_seed_given = false;
    rec->add_option("sinogram", rec_sino, "projection set path")->required();
    rec->add_option("--train", rec_train, "train config file")->required();
    add_common(rec, rec_c);
    rec->get_option("--seed")->each([&](const std::string&) { rec_seed_given = true; });

    // ---- voxelize ----
    auto* vox = app.add_subcommand("voxelize", "sample a Gaussian cloud onto a grid");
    Common vox_c;
    std::string vox_cloud, vox_dims = "64,64,64", vox_spacing = "1,1,1", vox_center = "0,0,0";
    double vox_k_sigma = 3.5;
    vox->add_option("cloud", vox_cloud, "cloud file")->required();
    vox->add_option("--dims", vox_dims, "nx,ny,nz");
    vox->add_option("--spacing", vox_spacing, "mm per axis: sx,sy,sz");
    vox->add_option("--center", vox_center, "grid center, mm: cx,cy,cz");
    vox->add_option("--k-sigma", vox_k_sigma, "support radius multiplier");
    add_common(vox, vox_c);

    // ---- evaluate ----
    auto* eva = app.add_subcommand("evaluate", "image-quality metrics against a reference");
    Common eva_c;
    std::string eva_volume, eva_reference, eva_phantom, eva_metrics = "psnr,ssim";
    std::string eva_spheres, eva_bg_point = "0,-88,0", eva_profile;
    double eva_background = 1.0, eva_ratio = 4.0;
    eva->add_option("volume", eva_volume, "volume file")->required();
    eva->add_option("--reference", eva_reference, "reference volume file");
    eva->add_option("--phantom", eva_phantom, "analytic reference phantom (nema, ...)");
    eva->add_option("--metrics", eva_metrics, "comma list: psnr,ssim,fwhm,sbr,std");
    eva->add_option("--spheres", eva_spheres, "NEMA sphere indices for fwhm/sbr/std, e.g. 4,5");
    eva->add_option("--background-point", eva_bg_point, "background ROI center, mm");
    eva->add_option("--profile", eva_profile, "axis,x,y,z: emit a line profile");
    eva->add_option("--background", eva_background, "phantom background activity");
    eva->add_option("--ratio", eva_ratio, "phantom contrast ratio");
    add_common(eva, eva_c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    auto t0 = std::chrono::steady_clock::now();
    auto wall = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    if (*sim) {
        if (sim_c.deterministic) sim_c.threads = 1;
        std::string cfg_text = read_config_text(sim_geom);
        grt::ScannerGeometry geom = grt::geometry_from_kv(grt::parse_kv(cfg_text));
        grt::AnalyticPhantom phantom =
            parse_phantom(sim_phantom, sim_background, sim_ratio, sim_source_radius);
        grt::ProjectionSet ps = grt::simulate(phantom, geom, sim_c.threads);
        if (sim_counts > 0) ps = grt::add_poisson(ps, sim_counts, sim_c.seed);
        grt::save_projection_set(sim_c.out, ps);
        write_manifest(sim_c.out, {"simulate", sim_geom, fmt(double(fnv1a(cfg_text))),
                                   {}, {sim_c.out, sim_c.out + ".json"}, sim_c.seed, wall()});
        return 0;
    }

    if (*rec) {
        if (rec_c.deterministic) rec_c.threads = 1;
        std::string cfg_text = read_config_text(rec_train);
        grt::TrainConfig cfg = grt::train_config_from_kv(grt::parse_kv(cfg_text));
        if (rec_seed_given) cfg.seed = rec_c.seed;
        cfg.n_threads = rec_c.threads;

        grt::ProjectionSet measured = grt::load_projection_set(rec_sino);
        std::ofstream log(rec_c.out + ".log");
        if (!log) throw grt::IoError("cannot open log: " + rec_c.out + ".log");
        auto progress = [&log](const grt::TrainRecord& r) {
            nlohmann::json j{{"iteration", r.iteration}, {"loss", r.loss},
                             {"m", r.m}, {"wall_time_s", r.wall_time_s}};
            log << j.dump() << "\n";
            log.flush();
        };
        auto [cloud, report] = grt::reconstruct(measured, cfg, progress);
        grt::save_cloud(rec_c.out, cloud);
        write_manifest(rec_c.out, {"reconstruct", rec_train, fmt(double(fnv1a(cfg_text))),
                                   {rec_sino}, {rec_c.out, rec_c.out + ".log"}, cfg.seed, wall()});
        std::cout << "final checksum " << std::hex << report.final_checksum << std::dec << "\n";
        return 0;
    }

    if (*vox) {
        if (vox_c.deterministic) vox_c.threads = 1;
        grt::GaussianCloud cloud = grt::load_cloud(vox_cloud);
        grt::Vec3 d = parse_vec3(vox_dims, "--dims");
        grt::Vec3 sp = parse_vec3(vox_spacing, "--spacing");
        grt::Vec3 c = parse_vec3(vox_center, "--center");
        grt::VolumeGrid spec = grt::VolumeGrid::centered(
            {int(d.x), int(d.y), int(d.z)}, sp, c);
        grt::VolumeGrid vol = grt::voxelize(cloud, spec, vox_k_sigma, vox_c.threads);
        grt::save_volume(vox_c.out, vol);
        write_manifest(vox_c.out, {"voxelize", "", "", {vox_cloud},
                                   {vox_c.out, vox_c.out + ".json"}, vox_c.seed, wall()});
        return 0;
    }

    if (*eva) {
        grt::VolumeGrid vol = grt::load_volume(eva_volume);
        grt::VolumeGrid ref;
        if (!eva_reference.empty()) {
            ref = grt::load_volume(eva_reference);
        } else if (!eva_phantom.empty()) {
            ref = grt::rasterize(parse_phantom(eva_phantom, eva_background, eva_ratio, 2.0), vol, 2);
        } else {
            throw grt::ConfigError("evaluate: need --reference or --phantom");
        }

        std::ostringstream csv;
        csv << grt::csv_row({"metric", "target", "value"});
        std::istringstream ms(eva_metrics);
        std::string metric;
        std::vector<int> spheres;
        {
            std::istringstream ss(eva_spheres);
            std::string tok;
            while (std::getline(ss, tok, ',')) spheres.push_back(std::stoi(tok));
        }
        grt::Vec3 bg_point = parse_vec3(eva_bg_point, "--background-point");

        while (std::getline(ms, metric, ',')) {
            if (metric == "psnr") {
                csv << grt::csv_row({"psnr_db", "volume", fmt(grt::psnr(vol, ref))});
            } else if (metric == "ssim") {
                csv << grt::csv_row({"ssim", "volume", fmt(grt::ssim3d(vol, ref))});
            } else if (metric == "fwhm" || metric == "sbr" || metric == "std") {
                for (int i : spheres) {
                    std::string target = "sphere" + std::to_string(i);
                    try {
                        grt::Vec3 center = grt::nema_sphere_center(i);
                        double diameter = grt::nema_sphere_diameter(i);
                        // FWHM on the x-profile cropped around the sphere.
                        auto profile = grt::line_profile(vol, 0, center);
                        int ci = int(std::lround((center.x - vol.origin.x) / vol.spacing.x - 0.5));
                        int halfwin = int(std::ceil(1.5 * diameter / vol.spacing.x));
                        int lo = std::max(0, ci - halfwin);
                        int hi = std::min<int>(profile.size(), ci + halfwin + 1);
                        std::vector<double> crop(profile.begin() + lo, profile.begin() + hi);
                        double width = grt::fwhm(crop, vol.spacing.x);
                        if (metric == "fwhm") {
                            csv << grt::csv_row({"fwhm_mm", target, fmt(width)});
                        } else if (metric == "sbr") {
                            csv << grt::csv_row(
                                {"sbr", target, fmt(grt::sbr(vol, center, width, bg_point))});
                        } else {
                            csv << grt::csv_row(
                                {"std", target, fmt(grt::roi_std(vol, center, diameter))});
                        }
                    } catch (const grt::Error& e) {
                        csv << grt::csv_row({"error", target, e.what()});
                    }
                }
            } else {
                throw grt::ConfigError("unknown metric: " + metric);
            }
        }

        if (!eva_profile.empty()) {
            int axis;
            double px, py, pz;
            if (std::sscanf(eva_profile.c_str(), "%d,%lf,%lf,%lf", &axis, &px, &py, &pz) != 4 ||
                axis < 0 || axis > 2)
                throw grt::ConfigError("--profile: expected axis,x,y,z");
            auto profile = grt::line_profile(vol, axis, {px, py, pz});
            for (std::size_t i = 0; i < profile.size(); ++i)
                csv << grt::csv_row({"profile", std::to_string(i), fmt(profile[i])});
        }

        grt::write_text_file(eva_c.out, csv.str());
        write_manifest(eva_c.out, {"evaluate", "", "", {eva_volume, eva_reference},
                                   {eva_c.out}, eva_c.seed, wall()});
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const grt::NonFiniteLoss& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const grt::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const grt::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
