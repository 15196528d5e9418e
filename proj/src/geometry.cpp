#include "grt/geometry.hpp"

#include <cstdlib>

#include "grt/errors.hpp"

namespace grt {

namespace {

void check(bool cond, const char* msg) {
    if (!cond) throw ConfigError(msg);
}

double kv_double(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("missing geometry key: " + key);
    char* end = nullptr;
    double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0')
        throw ConfigError("bad numeric value for " + key + ": " + it->second);
    return v;
}

double kv_double_or(const std::map<std::string, std::string>& kv, const std::string& key, double fallback) {
    return kv.count(key) ? kv_double(kv, key) : fallback;
}

int kv_int(const std::map<std::string, std::string>& kv, const std::string& key) {
    double v = kv_double(kv, key);
    int i = static_cast<int>(v);
    if (double(i) != v) throw ConfigError("expected integer for " + key);
    return i;
}

bool kv_bool(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("missing geometry key: " + key);
    const std::string& s = it->second;
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw ConfigError("bad boolean for " + key + ": " + s);
}

} // namespace

void validate(const ScannerGeometry& geom) {
    std::visit([](const auto& g) {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, ParallelGeometry>) {
            check(g.nu >= 1 && g.nv >= 1 && g.n_views >= 1, "parallel: counts must be >= 1");
            check(g.bin_spacing > 0 && g.angular_range > 0, "parallel: distances must be > 0");
        } else if constexpr (std::is_same_v<G, ConeBeamGeometry>) {
            check(g.nu >= 1 && g.nv >= 1 && g.n_views >= 1, "cone: counts must be >= 1");
            check(g.bin_spacing > 0 && g.angular_range > 0, "cone: distances must be > 0");
            check(g.dso > 0 && g.dsd > g.dso, "cone: requires DSD > DSO > 0");
        } else {
            check(g.n_crystals_per_ring >= 1 && g.n_rings >= 1 && g.n_radial_bins >= 1 && g.n_views >= 1,
                  "pet: counts must be >= 1");
            check(g.ring_radius > 0 && g.ring_spacing > 0, "pet: distances must be > 0");
            check(g.n_radial_bins % 2 == 1, "pet: n_radial_bins must be odd");
            check(g.max_ring_difference >= 0 && g.max_ring_difference < g.n_rings,
                  "pet: max_ring_difference must be < n_rings");
        }
    }, geom);
}

double fov_radius(const ScannerGeometry& geom) {
    return std::visit([](const auto& g) -> double {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, ParallelGeometry>) {
            return 0.5 * g.nu * g.bin_spacing;
        } else if constexpr (std::is_same_v<G, ConeBeamGeometry>) {
            return 0.5 * g.nu * g.bin_spacing * g.dso / g.dsd;
        } else {
            int m_max = (g.n_radial_bins - 1) / 2;
            CylindricalPetGeometry edge = g;
            double s = std::abs(radial_position(edge, g.n_radial_bins - 1));
            (void)m_max;
            return std::fmin(s, 0.999 * g.ring_radius);
        }
    }, geom);
}

double fov_half_length(const ScannerGeometry& geom) {
    return std::visit([](const auto& g) -> double {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, ParallelGeometry>) {
            return 0.5 * g.nv * g.bin_spacing;
        } else if constexpr (std::is_same_v<G, ConeBeamGeometry>) {
            return 0.5 * g.nv * g.bin_spacing * g.dso / g.dsd;
        } else {
            return 0.5 * g.n_rings * g.ring_spacing;
        }
    }, geom);
}

std::vector<Ray> rays_parallel(const ParallelGeometry& geom, int view) {
    if (view < 0 || view >= geom.n_views) throw InvalidView("rays_parallel: view out of range");
    double theta = view * geom.angular_range / geom.n_views;
    Vec3 d{-std::sin(theta), std::cos(theta), 0.0};
    Vec3 eu{std::cos(theta), std::sin(theta), 0.0};
    Vec3 ev{0.0, 0.0, 1.0};
    // Stand-off beyond the FOV radius; parallel rays are unbounded lines.
    double stand_off = std::max(geom.nu, geom.nv) * geom.bin_spacing;
    std::vector<Ray> rays;
    rays.reserve(std::size_t(geom.nu) * geom.nv);
    for (int v = 0; v < geom.nv; ++v) {
        double voff = (v - 0.5 * (geom.nv - 1)) * geom.bin_spacing;
        for (int u = 0; u < geom.nu; ++u) {
            double uoff = (u - 0.5 * (geom.nu - 1)) * geom.bin_spacing;
            rays.push_back(Ray{d * -stand_off + eu * uoff + ev * voff, d, std::nullopt});
        }
    }
    return rays;
}

std::vector<Ray> rays_cone(const ConeBeamGeometry& geom, int view) {
    if (view < 0 || view >= geom.n_views) throw InvalidView("rays_cone: view out of range");
    double theta = view * geom.angular_range / geom.n_views;
    Vec3 sdir{std::cos(theta), std::sin(theta), 0.0};
    Vec3 eu{-std::sin(theta), std::cos(theta), 0.0};
    Vec3 ev{0.0, 0.0, 1.0};
    Vec3 source = sdir * geom.dso;
    Vec3 det_center = source - sdir * geom.dsd;
    std::vector<Ray> rays;
    rays.reserve(std::size_t(geom.nu) * geom.nv);
    for (int v = 0; v < geom.nv; ++v) {
        double voff = (v - 0.5 * (geom.nv - 1)) * geom.bin_spacing;
        for (int u = 0; u < geom.nu; ++u) {
            double uoff = (u - 0.5 * (geom.nu - 1)) * geom.bin_spacing;
            rays.push_back(make_ray(source, det_center + eu * uoff + ev * voff));
        }
    }
    return rays;
}

double radial_position(const CylindricalPetGeometry& geom, int radial) {
    int m = radial - (geom.n_radial_bins - 1) / 2;
    double pitch_angle = M_PI / geom.n_crystals_per_ring;
    if (geom.arc_corrected) {
        // Uniform grid anchored to the central native spacing.
        return m * geom.ring_radius * std::sin(pitch_angle);
    }
    return geom.ring_radius * std::sin(m * pitch_angle);
}

int axial_bins(const CylindricalPetGeometry& geom, int segment) {
    return geom.n_rings - std::abs(segment);
}

Ray rays_pet(const CylindricalPetGeometry& geom, const SinogramCoord& coord) {
    if (std::abs(coord.segment) > geom.max_ring_difference ||
        coord.view < 0 || coord.view >= geom.n_views ||
        coord.radial < 0 || coord.radial >= geom.n_radial_bins ||
        coord.axial < 0 || coord.axial >= axial_bins(geom, coord.segment))
        throw InvalidCoord("rays_pet: sinogram coordinate out of bounds");

    double s = radial_position(geom, coord.radial);
    double r2 = geom.ring_radius * geom.ring_radius - s * s;
    if (r2 <= 0) throw InvalidCoord("rays_pet: radial bin outside the crystal ring");
    double half_chord = std::sqrt(r2);

    double phi = coord.view * M_PI / geom.n_views;
    Vec3 er{std::cos(phi), std::sin(phi), 0.0};
    Vec3 et{-std::sin(phi), std::cos(phi), 0.0};

    int abs_seg = std::abs(coord.segment);
    double z_lo = (coord.axial - 0.5 * (geom.n_rings - 1)) * geom.ring_spacing;
    double z_hi = (coord.axial + abs_seg - 0.5 * (geom.n_rings - 1)) * geom.ring_spacing;
    double z1 = coord.segment >= 0 ? z_lo : z_hi;
    double z2 = coord.segment >= 0 ? z_hi : z_lo;

    Vec3 p1 = er * s - et * half_chord + Vec3{0, 0, z1};
    Vec3 p2 = er * s + et * half_chord + Vec3{0, 0, z2};
    return make_ray(p1, p2);
}

int n_total_views(const ScannerGeometry& geom) {
    return std::visit([](const auto& g) -> int {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, CylindricalPetGeometry>)
            return (2 * g.max_ring_difference + 1) * g.n_views;
        else
            return g.n_views;
    }, geom);
}

std::pair<int, int> pet_view_decompose(const CylindricalPetGeometry& geom, int flat_view) {
    int segment = flat_view / geom.n_views - geom.max_ring_difference;
    int view = flat_view % geom.n_views;
    return {segment, view};
}

ViewShape view_shape(const ScannerGeometry& geom, int flat_view) {
    if (flat_view < 0 || flat_view >= n_total_views(geom))
        throw InvalidView("view_shape: flat view out of range");
    return std::visit([&](const auto& g) -> ViewShape {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, CylindricalPetGeometry>) {
            auto [segment, view] = pet_view_decompose(g, flat_view);
            (void)view;
            return {g.n_radial_bins, axial_bins(g, segment)};
        } else {
            return {g.nu, g.nv};
        }
    }, geom);
}

std::size_t view_offset(const ScannerGeometry& geom, int flat_view) {
    std::size_t off = 0;
    for (int v = 0; v < flat_view; ++v) off += view_shape(geom, v).size();
    return off;
}

std::size_t total_bins(const ScannerGeometry& geom) {
    std::size_t n = 0;
    int views = n_total_views(geom);
    for (int v = 0; v < views; ++v) n += view_shape(geom, v).size();
    return n;
}

std::vector<Ray> rays_for_view(const ScannerGeometry& geom, int flat_view) {
    if (flat_view < 0 || flat_view >= n_total_views(geom))
        throw InvalidView("rays_for_view: flat view out of range");
    return std::visit([&](const auto& g) -> std::vector<Ray> {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, ParallelGeometry>) {
            return rays_parallel(g, flat_view);
        } else if constexpr (std::is_same_v<G, ConeBeamGeometry>) {
            return rays_cone(g, flat_view);
        } else {
            auto [segment, view] = pet_view_decompose(g, flat_view);
            std::vector<Ray> rays;
            rays.reserve(std::size_t(g.n_radial_bins) * axial_bins(g, segment));
            for (int a = 0; a < axial_bins(g, segment); ++a)
                for (int r = 0; r < g.n_radial_bins; ++r)
                    rays.push_back(rays_pet(g, SinogramCoord{segment, view, r, a}));
            return rays;
        }
    }, geom);
}

std::vector<SinogramCoord> enumerate_bins_pet(const CylindricalPetGeometry& geom) {
    std::vector<SinogramCoord> coords;
    coords.reserve(total_bins(ScannerGeometry{geom}));
    for (int segment = -geom.max_ring_difference; segment <= geom.max_ring_difference; ++segment)
        for (int view = 0; view < geom.n_views; ++view)
            for (int a = 0; a < axial_bins(geom, segment); ++a)
                for (int r = 0; r < geom.n_radial_bins; ++r)
                    coords.push_back(SinogramCoord{segment, view, r, a});
    return coords;
}

ScannerGeometry geometry_from_kv(const std::map<std::string, std::string>& kv) {
    auto it = kv.find("type");
    if (it == kv.end()) throw ConfigError("geometry config missing 'type'");
    ScannerGeometry geom;
    if (it->second == "parallel") {
        ParallelGeometry g;
        g.nu = kv_int(kv, "nu");
        g.nv = kv_int(kv, "nv");
        g.bin_spacing = kv_double(kv, "bin_spacing_mm");
        g.n_views = kv_int(kv, "n_views");
        g.angular_range = kv_double_or(kv, "angular_range_rad", M_PI);
        geom = g;
    } else if (it->second == "cone") {
        ConeBeamGeometry g;
        g.dso = kv_double(kv, "dso_mm");
        g.dsd = kv_double(kv, "dsd_mm");
        g.nu = kv_int(kv, "nu");
        g.nv = kv_int(kv, "nv");
        g.bin_spacing = kv_double(kv, "bin_spacing_mm");
        g.n_views = kv_int(kv, "n_views");
        g.angular_range = kv_double_or(kv, "angular_range_rad", 2 * M_PI);
        geom = g;
    } else if (it->second == "pet") {
        CylindricalPetGeometry g;
        g.ring_radius = kv_double(kv, "ring_radius_mm");
        g.n_crystals_per_ring = kv_int(kv, "n_crystals_per_ring");
        g.n_rings = kv_int(kv, "n_rings");
        g.ring_spacing = kv_double(kv, "ring_spacing_mm");
        g.n_radial_bins = kv_int(kv, "n_radial_bins");
        g.n_views = kv_int(kv, "n_views");
        g.max_ring_difference = kv_int(kv, "max_ring_difference");
        g.arc_corrected = kv_bool(kv, "arc_corrected");
        geom = g;
    } else {
        throw ConfigError("unknown geometry type: " + it->second);
    }
    validate(geom);
    return geom;
}

std::map<std::string, std::string> geometry_to_kv(const ScannerGeometry& geom) {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::map<std::string, std::string> kv;
    std::visit([&](const auto& g) {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, ParallelGeometry>) {
            kv["type"] = "parallel";
            kv["nu"] = std::to_string(g.nu);
            kv["nv"] = std::to_string(g.nv);
            kv["bin_spacing_mm"] = fmt(g.bin_spacing);
            kv["n_views"] = std::to_string(g.n_views);
            kv["angular_range_rad"] = fmt(g.angular_range);
        } else if constexpr (std::is_same_v<G, ConeBeamGeometry>) {
            kv["type"] = "cone";
            kv["dso_mm"] = fmt(g.dso);
            kv["dsd_mm"] = fmt(g.dsd);
            kv["nu"] = std::to_string(g.nu);
            kv["nv"] = std::to_string(g.nv);
            kv["bin_spacing_mm"] = fmt(g.bin_spacing);
            kv["n_views"] = std::to_string(g.n_views);
            kv["angular_range_rad"] = fmt(g.angular_range);
        } else {
            kv["type"] = "pet";
            kv["ring_radius_mm"] = fmt(g.ring_radius);
            kv["n_crystals_per_ring"] = std::to_string(g.n_crystals_per_ring);
            kv["n_rings"] = std::to_string(g.n_rings);
            kv["ring_spacing_mm"] = fmt(g.ring_spacing);
            kv["n_radial_bins"] = std::to_string(g.n_radial_bins);
            kv["n_views"] = std::to_string(g.n_views);
            kv["max_ring_difference"] = std::to_string(g.max_ring_difference);
            kv["arc_corrected"] = g.arc_corrected ? "1" : "0";
        }
    }, geom);
    return kv;
}

} // namespace grt
