#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "grt/accel.hpp"
#include "grt/geometry.hpp"
#include "grt/model.hpp"

namespace grt {

// Coefficients of the quadratic exponent -1/2 (C + 2Bt + At^2) along a ray.
struct QuadraticCoeffs {
    double a = 0.0; // d^T Sigma^-1 d
    double b = 0.0; // d^T Sigma^-1 delta
    double c = 0.0; // delta^T Sigma^-1 delta, with delta = o - mu
};

// Per-Gaussian frame cached for repeated ray evaluation within one pass.
struct GaussianFrame {
    Mat3 rot;      // rotation matrix of the unit quaternion
    Vec3 inv_s2;   // exp(-2 * log_scale)
    Vec3 mu;
    double rho = 0.0;
};

GaussianFrame make_frame(const Gaussian& g);

// Parameter-space partials of one ray integral for one Gaussian.
struct ParamGrad {
    double d_rho = 0.0;
    Vec3 d_mu;
    Vec3 d_log_scale;
    std::array<double, 4> d_rotation{}; // tangent to the unit quaternion sphere
};

struct RayGradients {
    std::vector<std::uint32_t> indices; // Gaussians the partials refer to
    std::vector<ParamGrad> partials;
};

// Flat per-Gaussian gradient accumulator for a whole pass.
struct GradBuffer {
    std::vector<ParamGrad> grads;

    void resize(std::size_t n) { grads.assign(n, ParamGrad{}); }
    void add(const GradBuffer& other);
};

QuadraticCoeffs quadratic_coeffs(const Gaussian& g, const Ray& r);
QuadraticCoeffs quadratic_coeffs(const GaussianFrame& f, const Ray& r);

// Closed-form line integral rho * sqrt(2*pi/A) * exp(-1/2 (C - B^2/A)).
double integrate_gaussian(const Gaussian& g, const Ray& r);
double integrate_gaussian(const GaussianFrame& f, const Ray& r);

ParamGrad integrate_gaussian_grad(const Gaussian& g, const Ray& r, double upstream);
ParamGrad integrate_gaussian_grad(const GaussianFrame& f, const Quat& rotation, const Ray& r,
                                  double upstream);

double integrate_ray(const GaussianCloud& cloud, const Ray& r,
                     const std::vector<std::uint32_t>* candidates = nullptr);

RayGradients integrate_ray_grad(const GaussianCloud& cloud, const Ray& r, double upstream,
                                const std::vector<std::uint32_t>* candidates = nullptr);

// One projection view; accumulation is in double, storage in float.
struct Image {
    int w = 0, h = 0;
    std::vector<float> data; // w fastest

    float& at(int x, int y) { return data[std::size_t(y) * w + x]; }
    float at(int x, int y) const { return data[std::size_t(y) * w + x]; }
};

// Renders one flat view of the geometry. When a BVH is supplied, each bin's
// ray integrates only its candidate set; n_threads = 1 is the deterministic
// reference path.
Image forward_project(const GaussianCloud& cloud, const ScannerGeometry& geom, int flat_view,
                      const Bvh* bvh = nullptr, int n_threads = 1);

// Backward pass of one view: accumulates parameter gradients for every
// (bin, candidate Gaussian) pair, scaled by the bin's upstream multiplier.
void backward_project(const GaussianCloud& cloud, const ScannerGeometry& geom, int flat_view,
                      const std::vector<double>& upstream, const Bvh* bvh, GradBuffer& grad,
                      int n_threads = 1);

} // namespace grt
