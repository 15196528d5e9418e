#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "grt/vec.hpp"

namespace grt {

// Clamp bounds for exp(log_scale), in mm. scale_max is configured per run
// (half the field-of-view extent); this is the hard floor.
inline constexpr double kScaleMin = 1e-3;

// Anisotropic 3D Gaussian primitive. Scales live in log-space so optimizer
// steps cannot make them non-positive; rotation is a unit quaternion.
struct Gaussian {
    Vec3 mu;                 // position, mm
    Vec3 log_scale;          // per-axis log stddev, log-mm
    Quat rotation;           // unit quaternion (w,x,y,z)
    double rho = 0.0;        // central density, >= 0

    void project_to_feasible(double scale_min, double scale_max);
};

struct GaussianCloud {
    std::vector<Gaussian> gaussians;

    std::size_t count() const { return gaussians.size(); }

    // FNV-1a over the raw parameter bytes; used for determinism checks.
    std::uint64_t checksum() const;
};

struct Ray {
    Vec3 origin;
    Vec3 direction;                                   // unit
    std::optional<std::pair<double, double>> t_range; // finite LOR extent, mm
};

// Sigma = R diag(exp(2*log_scale)) R^T
Mat3 covariance(const Gaussian& g);

// Closed form R diag(exp(-2*log_scale)) R^T, no general inversion.
Mat3 inverse_covariance(const Gaussian& g);

// Ray from `origin` toward `toward`; t_range spans the two endpoints.
// Throws DegenerateRay when the points coincide.
Ray make_ray(const Vec3& origin, const Vec3& toward);

// Binary cloud format: header {magic "GRTC", version u32, count u64},
// then per Gaussian: mu f64x3, log_scale f64x3, quaternion f64x4, rho f64.
// Little-endian throughout.
void write_cloud(std::ostream& os, const GaussianCloud& cloud);
GaussianCloud read_cloud(std::istream& is);
void save_cloud(const std::string& path, const GaussianCloud& cloud);
GaussianCloud load_cloud(const std::string& path);

} // namespace grt
