#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "grt/io.hpp"
#include "grt/model.hpp"

using namespace grt;
namespace fs = std::filesystem;

namespace {

// The CLI binary and a scratch directory come from the test environment.
std::string cli() {
    const char* p = std::getenv("GRT_CLI");
    REQUIRE_MESSAGE(p != nullptr, "GRT_CLI must point at the CLI binary");
    return p;
}

fs::path workdir() {
    const char* p = std::getenv("GRT_WORKDIR");
    REQUIRE_MESSAGE(p != nullptr, "GRT_WORKDIR must point at a writable directory");
    fs::path d = fs::path(p) / "cli_scratch";
    fs::create_directories(d);
    return d;
}

int run_cli(const std::string& args) {
    std::string cmd = cli() + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string small_parallel_geom() {
    fs::path p = workdir() / "parallel.cfg";
    write_text_file(p.string(),
                    "type = parallel\nnu = 16\nnv = 8\nbin_spacing_mm = 2\nn_views = 6\n");
    return p.string();
}

std::string small_train_cfg(int iterations = 20) {
    fs::path p = workdir() / "train.cfg";
    write_text_file(p.string(), "iterations = " + std::to_string(iterations) +
                                    "\nbatch_views = 2\nn_gaussians = 12\n"
                                    "densify_interval = 0\nlog_interval = 10\n");
    return p.string();
}

} // namespace

TEST_CASE("simulate writes a loadable projection set plus manifest") {
    std::string geom = small_parallel_geom();
    fs::path out = workdir() / "sim.f32";
    int rc = run_cli("simulate --geom " + geom +
                     " --phantom spheres:0,0,0,10,1.5 -o " + out.string());
    CHECK(rc == 0);

    ProjectionSet ps = load_projection_set(out.string());
    CHECK(ps.data.size() == 16u * 8 * 6);
    double sum = 0.0;
    for (float v : ps.data) sum += v;
    CHECK(sum > 0.0);
    CHECK(fs::exists(out.string() + ".manifest.json"));
}

TEST_CASE("simulate with noise is reproducible per seed") {
    std::string geom = small_parallel_geom();
    fs::path a = workdir() / "noisy_a.f32";
    fs::path b = workdir() / "noisy_b.f32";
    fs::path c = workdir() / "noisy_c.f32";
    std::string base = "simulate --geom " + geom +
                       " --phantom spheres:0,0,0,10,1.5 --counts 10000 ";
    CHECK(run_cli(base + "--seed 5 -o " + a.string()) == 0);
    CHECK(run_cli(base + "--seed 5 -o " + b.string()) == 0);
    CHECK(run_cli(base + "--seed 6 -o " + c.string()) == 0);
    CHECK(read_text_file(a.string()) == read_text_file(b.string()));
    CHECK(read_text_file(a.string()) != read_text_file(c.string()));
}

TEST_CASE("exit code contract") {
    std::string geom = small_parallel_geom();

    SUBCASE("missing geometry config file is a config error") {
        CHECK(run_cli("simulate --geom /nonexistent.cfg --phantom nema -o " +
                      (workdir() / "x.f32").string()) == 2);
    }
    SUBCASE("unknown phantom is a config error") {
        CHECK(run_cli("simulate --geom " + geom + " --phantom bananas -o " +
                      (workdir() / "x.f32").string()) == 2);
    }
    SUBCASE("missing required CLI options are config errors") {
        CHECK(run_cli("simulate --geom " + geom) == 2);
    }
    SUBCASE("missing sinogram is an I/O error") {
        CHECK(run_cli("reconstruct /nonexistent.f32 --train " + small_train_cfg() + " -o " +
                      (workdir() / "x.grtc").string()) == 3);
    }
    SUBCASE("corrupt sidecar is a config error") {
        fs::path sino = workdir() / "corrupt.f32";
        CHECK(run_cli("simulate --geom " + geom + " --phantom spheres:0,0,0,10,1 -o " +
                      sino.string()) == 0);
        write_text_file(sino.string() + ".json", "{ definitely not json");
        CHECK(run_cli("reconstruct " + sino.string() + " --train " + small_train_cfg() +
                      " -o " + (workdir() / "x.grtc").string()) == 2);
    }
    SUBCASE("bad train config key is a config error") {
        fs::path sino = workdir() / "ok.f32";
        CHECK(run_cli("simulate --geom " + geom + " --phantom spheres:0,0,0,10,1 -o " +
                      sino.string()) == 0);
        fs::path bad = workdir() / "bad_train.cfg";
        write_text_file(bad.string(), "iterations = 5\nwarp_factor = 9\n");
        CHECK(run_cli("reconstruct " + sino.string() + " --train " + bad.string() + " -o " +
                      (workdir() / "x.grtc").string()) == 2);
    }
}

TEST_CASE("reconstruct then voxelize round trip") {
    std::string geom = small_parallel_geom();
    fs::path sino = workdir() / "rt.f32";
    REQUIRE(run_cli("simulate --geom " + geom + " --phantom spheres:0,0,0,10,1.5 -o " +
                    sino.string()) == 0);

    fs::path cloud_path = workdir() / "rt.grtc";
    CHECK(run_cli("reconstruct " + sino.string() + " --train " + small_train_cfg() +
                  " --deterministic -o " + cloud_path.string()) == 0);
    GaussianCloud cloud = load_cloud(cloud_path.string());
    CHECK(cloud.count() > 0);
    CHECK(fs::exists(cloud_path.string() + ".log"));
    CHECK(fs::exists(cloud_path.string() + ".manifest.json"));

    fs::path vol = workdir() / "rt_vol.f32";
    CHECK(run_cli("voxelize " + cloud_path.string() +
                  " --dims 16,16,16 --spacing 2,2,2 -o " + vol.string()) == 0);
    VolumeGrid v = load_volume(vol.string());
    CHECK(v.dims == std::array<int, 3>{16, 16, 16});
}

TEST_CASE("reconstruction runs are bit-identical in deterministic mode") {
    std::string geom = small_parallel_geom();
    fs::path sino = workdir() / "det.f32";
    REQUIRE(run_cli("simulate --geom " + geom + " --phantom spheres:0,0,0,10,1.5 -o " +
                    sino.string()) == 0);

    fs::path a = workdir() / "det_a.grtc";
    fs::path b = workdir() / "det_b.grtc";
    std::string train = small_train_cfg(30);
    CHECK(run_cli("reconstruct " + sino.string() + " --train " + train +
                  " --deterministic --seed 9 -o " + a.string()) == 0);
    CHECK(run_cli("reconstruct " + sino.string() + " --train " + train +
                  " --deterministic --seed 9 -o " + b.string()) == 0);
    CHECK(read_text_file(a.string()) == read_text_file(b.string()));
    CHECK(load_cloud(a.string()).checksum() == load_cloud(b.string()).checksum());
}

TEST_CASE("evaluate emits a metrics CSV") {
    // Two volumes from the same cloud: metrics against itself are ideal.
    std::string geom = small_parallel_geom();
    fs::path sino = workdir() / "ev.f32";
    REQUIRE(run_cli("simulate --geom " + geom + " --phantom spheres:0,0,0,10,1.5 -o " +
                    sino.string()) == 0);
    fs::path cloud_path = workdir() / "ev.grtc";
    REQUIRE(run_cli("reconstruct " + sino.string() + " --train " + small_train_cfg() +
                    " --deterministic -o " + cloud_path.string()) == 0);
    fs::path vol = workdir() / "ev_vol.f32";
    REQUIRE(run_cli("voxelize " + cloud_path.string() +
                    " --dims 16,16,16 --spacing 2,2,2 -o " + vol.string()) == 0);

    fs::path csv = workdir() / "ev_metrics.csv";
    CHECK(run_cli("evaluate " + vol.string() + " --reference " + vol.string() +
                  " --metrics psnr,ssim -o " + csv.string()) == 0);
    std::string text = read_text_file(csv.string());
    CHECK(text.find("metric,target,value") != std::string::npos);
    CHECK(text.find("psnr_db,volume,200") != std::string::npos);
    CHECK(text.find("ssim,volume,1") != std::string::npos);

    SUBCASE("unknown metric is a config error") {
        CHECK(run_cli("evaluate " + vol.string() + " --reference " + vol.string() +
                      " --metrics vibes -o " + csv.string()) == 2);
    }
    SUBCASE("a reference source is required") {
        CHECK(run_cli("evaluate " + vol.string() + " --metrics psnr -o " + csv.string()) == 2);
    }
    SUBCASE("line profile rows are appended on request") {
        CHECK(run_cli("evaluate " + vol.string() + " --reference " + vol.string() +
                      " --metrics psnr --profile 0,0,0,0 -o " + csv.string()) == 0);
        std::string with_profile = read_text_file(csv.string());
        CHECK(with_profile.find("profile,0,") != std::string::npos);
        CHECK(with_profile.find("profile,15,") != std::string::npos);
    }
}
