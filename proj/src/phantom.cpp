#include "grt/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "grt/errors.hpp"
#include "parallel.hpp"

namespace grt {

namespace {

struct Interval {
    double lo = 0.0, hi = -1.0;
    bool empty() const { return hi <= lo; }
    double length() const { return empty() ? 0.0 : hi - lo; }
};

Interval clip(Interval a, double lo, double hi) {
    a.lo = std::max(a.lo, lo);
    a.hi = std::min(a.hi, hi);
    return a;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// t-interval where the ray is inside the sphere.
Interval sphere_interval(const Sphere& s, const Ray& r) {
    Vec3 p = s.center - r.origin;
    double tc = dot(p, r.direction);
    double b2 = dot(p, p) - tc * tc;
    double h2 = s.radius * s.radius - b2;
    if (h2 <= 0) return {};
    double h = std::sqrt(h2);
    return {tc - h, tc + h};
}

Interval cylinder_interval(const CylinderZ& c, const Ray& r) {
    double ox = r.origin.x - c.center.x, oy = r.origin.y - c.center.y;
    double dx = r.direction.x, dy = r.direction.y;
    double qa = dx * dx + dy * dy;

    Interval radial;
    if (qa < 1e-18) {
        if (ox * ox + oy * oy >= c.radius * c.radius) return {};
        radial = {-kInf, kInf};
    } else {
        double qb = ox * dx + oy * dy;
        double qc = ox * ox + oy * oy - c.radius * c.radius;
        double disc = qb * qb - qa * qc;
        if (disc <= 0) return {};
        double root = std::sqrt(disc);
        radial = {(-qb - root) / qa, (-qb + root) / qa};
    }

    double oz = r.origin.z - c.center.z, dz = r.direction.z;
    if (std::abs(dz) < 1e-18) {
        if (std::abs(oz) >= c.half_length) return {};
        return radial;
    }
    double t1 = (-c.half_length - oz) / dz;
    double t2 = (c.half_length - oz) / dz;
    if (t1 > t2) std::swap(t1, t2);
    return clip(radial, t1, t2);
}

} // namespace

double phantom_line_integral(const AnalyticPhantom& p, const Ray& r) {
    double t0 = -kInf, t1 = kInf;
    if (r.t_range) {
        t0 = r.t_range->first;
        t1 = r.t_range->second;
    }
    double sum = 0.0;
    for (const PhantomElement& e : p.elements) {
        Interval iv = std::visit([&](const auto& shape) -> Interval {
            using S = std::decay_t<decltype(shape)>;
            if constexpr (std::is_same_v<S, Sphere>)
                return sphere_interval(shape, r);
            else
                return cylinder_interval(shape, r);
        }, e.shape);
        sum += e.activity * clip(iv, t0, t1).length();
    }
    return sum;
}

double activity_at(const AnalyticPhantom& p, const Vec3& x) {
    double sum = 0.0;
    for (const PhantomElement& e : p.elements) {
        bool inside = std::visit([&](const auto& shape) {
            using S = std::decay_t<decltype(shape)>;
            if constexpr (std::is_same_v<S, Sphere>) {
                Vec3 d = x - shape.center;
                return dot(d, d) < shape.radius * shape.radius;
            } else {
                double dx = x.x - shape.center.x, dy = x.y - shape.center.y;
                return dx * dx + dy * dy < shape.radius * shape.radius &&
                       std::abs(x.z - shape.center.z) < shape.half_length;
            }
        }, e.shape);
        if (inside) sum += e.activity;
    }
    return sum;
}

namespace {

// NEMA IQ body phantom drawing: sphere centers on a 114.4 mm circle.
constexpr double kNemaRingRadius = 57.2;
constexpr double kNemaHollowRadius = 25.0;
constexpr double kNemaDiameters[6] = {10.0, 13.0, 17.0, 22.0, 28.0, 37.0};

} // namespace

int nema_sphere_count() { return 6; }

double nema_sphere_diameter(int i) { return kNemaDiameters[i]; }

Vec3 nema_sphere_center(int i) {
    double angle = i * M_PI / 3.0;
    return {kNemaRingRadius * std::cos(angle), kNemaRingRadius * std::sin(angle), 0.0};
}

Vec3 nema_background_point() { return {0.0, -88.0, 0.0}; }

AnalyticPhantom build_nema(double background_activity, double ratio,
                           double body_radius, double body_half_length) {
    AnalyticPhantom p;
    p.elements.push_back({CylinderZ{{0, 0, 0}, body_radius, body_half_length}, background_activity});
    // Hollow insert carves the background down to zero.
    p.elements.push_back({CylinderZ{{0, 0, 0}, kNemaHollowRadius, body_half_length}, -background_activity});
    for (int i = 0; i < 6; ++i) {
        p.elements.push_back({Sphere{nema_sphere_center(i), 0.5 * kNemaDiameters[i]},
                              (ratio - 1.0) * background_activity});
    }
    return p;
}

Vec3 point_source_center(int i) {
    const double ys[3] = {10.0, 100.0, 200.0};
    return {0.0, ys[i], 0.0};
}

AnalyticPhantom build_point_sources(double radius, double activity) {
    AnalyticPhantom p;
    for (int i = 0; i < 3; ++i)
        p.elements.push_back({Sphere{point_source_center(i), radius}, activity});
    return p;
}

AnalyticPhantom build_sphere_cluster(double fov_radius) {
    AnalyticPhantom p;
    double r = fov_radius;
    p.elements.push_back({Sphere{{0, 0, 0}, 0.40 * r}, 1.0});
    p.elements.push_back({Sphere{{0.55 * r, 0, 0}, 0.18 * r}, 2.0});
    p.elements.push_back({Sphere{{-0.35 * r, 0.45 * r, 0.1 * r}, 0.22 * r}, 1.5});
    p.elements.push_back({Sphere{{-0.2 * r, -0.5 * r, -0.25 * r}, 0.15 * r}, 2.5});
    p.elements.push_back({Sphere{{0.25 * r, 0.3 * r, -0.4 * r}, 0.12 * r}, 3.0});
    return p;
}

ProjectionSet simulate(const AnalyticPhantom& p, const ScannerGeometry& geom, int n_threads) {
    validate(geom);
    ProjectionSet ps;
    ps.geometry = geom;
    ps.data.resize(total_bins(geom));
    int views = n_total_views(geom);
    for (int v = 0; v < views; ++v) {
        std::vector<Ray> rays = rays_for_view(geom, v);
        std::size_t off = view_offset(geom, v);
        parallel_for(rays.size(), n_threads, [&](std::size_t begin, std::size_t end, int) {
            for (std::size_t i = begin; i < end; ++i)
                ps.data[off + i] = static_cast<float>(phantom_line_integral(p, rays[i]));
        });
    }
    return ps;
}

ProjectionSet add_poisson(const ProjectionSet& ps, double total_counts, std::uint64_t seed) {
    double sum = 0.0;
    for (float v : ps.data) {
        if (v < 0.0f) throw NegativeData("add_poisson: negative bin value");
        sum += v;
    }
    if (sum <= 0.0) throw NegativeData("add_poisson: data sums to zero");
    double scale = total_counts / sum;

    ProjectionSet out = ps;
    out.counts_scale = scale;
    out.seed = seed;
    std::mt19937_64 rng(seed);
    for (float& v : out.data) {
        double mean = double(v) * scale;
        if (mean <= 0.0) {
            v = 0.0f;
            continue;
        }
        std::poisson_distribution<long long> dist(mean);
        v = static_cast<float>(double(dist(rng)) / scale);
    }
    return out;
}

VolumeGrid rasterize(const AnalyticPhantom& p, const VolumeGrid& grid_spec, int supersample) {
    VolumeGrid g = grid_spec;
    g.data.assign(g.size(), 0.0f);
    int ss = std::max(1, supersample);
    double inv = 1.0 / (ss * ss * ss);
    for (int z = 0; z < g.dims[2]; ++z)
        for (int y = 0; y < g.dims[1]; ++y)
            for (int x = 0; x < g.dims[0]; ++x) {
                Vec3 c = g.voxel_center(x, y, z);
                double acc = 0.0;
                for (int sz = 0; sz < ss; ++sz)
                    for (int sy = 0; sy < ss; ++sy)
                        for (int sx = 0; sx < ss; ++sx) {
                            Vec3 q{c.x + ((sx + 0.5) / ss - 0.5) * g.spacing.x,
                                   c.y + ((sy + 0.5) / ss - 0.5) * g.spacing.y,
                                   c.z + ((sz + 0.5) / ss - 0.5) * g.spacing.z};
                            acc += activity_at(p, q);
                        }
                g.at(x, y, z) = static_cast<float>(acc * inv);
            }
    return g;
}

} // namespace grt
