#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "grt/geometry.hpp"
#include "grt/model.hpp"
#include "grt/volume.hpp"

namespace grt {

struct Sphere {
    Vec3 center;
    double radius = 0.0;
};

// Finite cylinder with axis along z.
struct CylinderZ {
    Vec3 center;
    double radius = 0.0;
    double half_length = 0.0;
};

// Activities are signed and additive; hollow regions carry the negative of
// the background they carve. The composite must stay >= 0 everywhere.
struct PhantomElement {
    std::variant<Sphere, CylinderZ> shape;
    double activity = 0.0; // per-mm density contribution
};

struct AnalyticPhantom {
    std::vector<PhantomElement> elements;
};

// Measured (or simulated) projections in enumerate_bins order.
struct ProjectionSet {
    ScannerGeometry geometry;
    std::vector<float> data;
    std::optional<double> counts_scale; // set by add_poisson
    std::optional<std::uint64_t> seed;
};

// Exact chord-length line integral: sum over elements of activity * chord.
double phantom_line_integral(const AnalyticPhantom& p, const Ray& r);

// Composite activity at a point.
double activity_at(const AnalyticPhantom& p, const Vec3& x);

// NEMA image-quality phantom: six spheres (10..37 mm inner diameter) on a
// 114.4 mm circle in the central plane, activity ratio*background; hollow
// central cylinder (25 mm radius) with zero net activity; cylindrical body.
AnalyticPhantom build_nema(double background_activity, double ratio,
                           double body_radius = 112.0, double body_half_length = 40.0);

int nema_sphere_count();
double nema_sphere_diameter(int i);
Vec3 nema_sphere_center(int i);
// A background ROI position clear of the spheres and the hollow insert.
Vec3 nema_background_point();

// Three equal-activity point sources at (0,10), (0,100), (0,200) mm from
// the isocenter, modeled as small spheres.
AnalyticPhantom build_point_sources(double radius = 2.0, double activity = 1.0);
Vec3 point_source_center(int i);

// A small cluster of solid spheres for CT round-trip tests.
AnalyticPhantom build_sphere_cluster(double fov_radius);

ProjectionSet simulate(const AnalyticPhantom& p, const ScannerGeometry& geom, int n_threads = 1);

// Scales the set to `total_counts` expected events, Poisson-samples each
// bin, and scales back. Deterministic per seed.
ProjectionSet add_poisson(const ProjectionSet& ps, double total_counts, std::uint64_t seed);

// Ground-truth voxel grid; supersample > 1 averages supersample^3 points
// per voxel.
VolumeGrid rasterize(const AnalyticPhantom& p, const VolumeGrid& grid_spec, int supersample = 1);

} // namespace grt
