#include "grt/projector.hpp"

#include <cmath>

#include "grt/errors.hpp"
#include "parallel.hpp"

namespace grt {

namespace {
// Cannot trigger while the scale clamp holds; guards pathological input.
constexpr double kMinA = 1e-12;
constexpr double kTwoPi = 2.0 * M_PI;
} // namespace

GaussianFrame make_frame(const Gaussian& g) {
    GaussianFrame f;
    f.rot = g.rotation.to_matrix();
    f.inv_s2 = {std::exp(-2 * g.log_scale.x), std::exp(-2 * g.log_scale.y), std::exp(-2 * g.log_scale.z)};
    f.mu = g.mu;
    f.rho = g.rho;
    return f;
}

QuadraticCoeffs quadratic_coeffs(const GaussianFrame& f, const Ray& r) {
    Vec3 u = f.rot.transpose_mul(r.direction);
    Vec3 w = f.rot.transpose_mul(r.origin - f.mu);
    QuadraticCoeffs q;
    for (int j = 0; j < 3; ++j) {
        q.a += f.inv_s2[j] * u[j] * u[j];
        q.b += f.inv_s2[j] * u[j] * w[j];
        q.c += f.inv_s2[j] * w[j] * w[j];
    }
    return q;
}

QuadraticCoeffs quadratic_coeffs(const Gaussian& g, const Ray& r) {
    return quadratic_coeffs(make_frame(g), r);
}

double integrate_gaussian(const GaussianFrame& f, const Ray& r) {
    QuadraticCoeffs q = quadratic_coeffs(f, r);
    double a = std::max(q.a, kMinA);
    return f.rho * std::sqrt(kTwoPi / a) * std::exp(-0.5 * (q.c - q.b * q.b / a));
}

double integrate_gaussian(const Gaussian& g, const Ray& r) {
    return integrate_gaussian(make_frame(g), r);
}

ParamGrad integrate_gaussian_grad(const GaussianFrame& f, const Quat& rotation, const Ray& r,
                                  double upstream) {
    const Vec3 d = r.direction;
    const Vec3 delta = r.origin - f.mu;
    const Vec3 u = f.rot.transpose_mul(d);
    const Vec3 w = f.rot.transpose_mul(delta);
    const Vec3& e = f.inv_s2;

    double a = 0, b = 0, c = 0;
    for (int j = 0; j < 3; ++j) {
        a += e[j] * u[j] * u[j];
        b += e[j] * u[j] * w[j];
        c += e[j] * w[j] * w[j];
    }
    a = std::max(a, kMinA);

    double base = std::sqrt(kTwoPi / a) * std::exp(-0.5 * (c - b * b / a));
    double value = f.rho * base;

    double di_da = value * (-0.5 / a - 0.5 * b * b / (a * a));
    double di_db = value * b / a;
    double di_dc = -0.5 * value;

    ParamGrad grad;
    grad.d_rho = base * upstream;

    for (int j = 0; j < 3; ++j) {
        grad.d_log_scale[j] = upstream * -2.0 * e[j] *
                              (di_da * u[j] * u[j] + di_db * u[j] * w[j] + di_dc * w[j] * w[j]);
    }

    // dI/d delta = di_db * Q d + 2 di_dc * Q delta, with Q = R diag(e) R^T;
    // mu enters through delta = o - mu.
    Vec3 eu{e.x * u.x, e.y * u.y, e.z * u.z};
    Vec3 ew{e.x * w.x, e.y * w.y, e.z * w.z};
    Vec3 di_ddelta = (f.rot * eu) * di_db + (f.rot * ew) * (2.0 * di_dc);
    grad.d_mu = di_ddelta * -upstream;

    // Rotation: u = R^T d, w = R^T delta, so dI/dR = d (dI/du)^T + delta (dI/dw)^T.
    Vec3 di_du, di_dw;
    for (int j = 0; j < 3; ++j) {
        di_du[j] = di_da * 2.0 * e[j] * u[j] + di_db * e[j] * w[j];
        di_dw[j] = di_db * e[j] * u[j] + di_dc * 2.0 * e[j] * w[j];
    }
    Quat qn = rotation.normalized();
    auto jac = rotation_matrix_jacobian(qn);
    std::array<double, 4> g_free{};
    for (int k = 0; k < 4; ++k) {
        double s = 0.0;
        for (int ai = 0; ai < 3; ++ai)
            for (int j = 0; j < 3; ++j)
                s += (d[ai] * di_du[j] + delta[ai] * di_dw[j]) * jac[k](ai, j);
        g_free[k] = s;
    }
    // Project through the renormalization Jacobian (I - q q^T) at |q| = 1.
    double qdot = 0.0;
    for (int k = 0; k < 4; ++k) qdot += qn[k] * g_free[k];
    for (int k = 0; k < 4; ++k) grad.d_rotation[k] = upstream * (g_free[k] - qn[k] * qdot);

    return grad;
}

ParamGrad integrate_gaussian_grad(const Gaussian& g, const Ray& r, double upstream) {
    return integrate_gaussian_grad(make_frame(g), g.rotation, r, upstream);
}

double integrate_ray(const GaussianCloud& cloud, const Ray& r,
                     const std::vector<std::uint32_t>* candidates) {
    double sum = 0.0;
    if (candidates) {
        for (std::uint32_t i : *candidates) sum += integrate_gaussian(cloud.gaussians.at(i), r);
    } else {
        for (const Gaussian& g : cloud.gaussians) sum += integrate_gaussian(g, r);
    }
    return sum;
}

RayGradients integrate_ray_grad(const GaussianCloud& cloud, const Ray& r, double upstream,
                                const std::vector<std::uint32_t>* candidates) {
    RayGradients out;
    if (candidates) {
        out.indices = *candidates;
    } else {
        out.indices.resize(cloud.count());
        for (std::size_t i = 0; i < cloud.count(); ++i) out.indices[i] = static_cast<std::uint32_t>(i);
    }
    out.partials.reserve(out.indices.size());
    for (std::uint32_t i : out.indices)
        out.partials.push_back(integrate_gaussian_grad(cloud.gaussians.at(i), r, upstream));
    return out;
}

void GradBuffer::add(const GradBuffer& other) {
    if (grads.size() != other.grads.size()) throw StateMismatch("GradBuffer::add: size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        grads[i].d_rho += other.grads[i].d_rho;
        grads[i].d_mu += other.grads[i].d_mu;
        grads[i].d_log_scale += other.grads[i].d_log_scale;
        for (int k = 0; k < 4; ++k) grads[i].d_rotation[k] += other.grads[i].d_rotation[k];
    }
}

Image forward_project(const GaussianCloud& cloud, const ScannerGeometry& geom, int flat_view,
                      const Bvh* bvh, int n_threads) {
    ViewShape shape = view_shape(geom, flat_view);
    std::vector<Ray> rays = rays_for_view(geom, flat_view);

    std::vector<GaussianFrame> frames;
    frames.reserve(cloud.count());
    for (const Gaussian& g : cloud.gaussians) frames.push_back(make_frame(g));

    Image img;
    img.w = shape.w;
    img.h = shape.h;
    img.data.resize(shape.size());

    parallel_for(rays.size(), n_threads, [&](std::size_t begin, std::size_t end, int) {
        std::vector<std::uint32_t> cand;
        for (std::size_t i = begin; i < end; ++i) {
            double sum = 0.0;
            if (bvh) {
                bvh->candidates(rays[i], cloud.count(), cand);
                for (std::uint32_t gi : cand) sum += integrate_gaussian(frames[gi], rays[i]);
            } else {
                for (const GaussianFrame& f : frames) sum += integrate_gaussian(f, rays[i]);
            }
            img.data[i] = static_cast<float>(sum);
        }
    });
    return img;
}

void backward_project(const GaussianCloud& cloud, const ScannerGeometry& geom, int flat_view,
                      const std::vector<double>& upstream, const Bvh* bvh, GradBuffer& grad,
                      int n_threads) {
    std::vector<Ray> rays = rays_for_view(geom, flat_view);
    if (upstream.size() != rays.size())
        throw ShapeMismatch("backward_project: upstream size does not match view bins");
    if (grad.grads.size() != cloud.count())
        throw StateMismatch("backward_project: gradient buffer size mismatch");

    std::vector<GaussianFrame> frames;
    frames.reserve(cloud.count());
    for (const Gaussian& g : cloud.gaussians) frames.push_back(make_frame(g));

    int workers = std::max(1, n_threads);
    std::vector<GradBuffer> locals(workers);
    for (auto& l : locals) l.resize(cloud.count());

    parallel_for(rays.size(), n_threads, [&](std::size_t begin, std::size_t end, int wid) {
        GradBuffer& local = locals[wid];
        std::vector<std::uint32_t> cand;
        for (std::size_t i = begin; i < end; ++i) {
            double up = upstream[i];
            if (up == 0.0) continue;
            const std::vector<std::uint32_t>* sel = nullptr;
            if (bvh) {
                bvh->candidates(rays[i], cloud.count(), cand);
                sel = &cand;
            }
            auto add_one = [&](std::uint32_t gi) {
                ParamGrad pg = integrate_gaussian_grad(frames[gi], cloud.gaussians[gi].rotation,
                                                       rays[i], up);
                ParamGrad& acc = local.grads[gi];
                acc.d_rho += pg.d_rho;
                acc.d_mu += pg.d_mu;
                acc.d_log_scale += pg.d_log_scale;
                for (int k = 0; k < 4; ++k) acc.d_rotation[k] += pg.d_rotation[k];
            };
            if (sel) {
                for (std::uint32_t gi : *sel) add_one(gi);
            } else {
                for (std::uint32_t gi = 0; gi < cloud.count(); ++gi) add_one(gi);
            }
        }
    });

    for (const auto& l : locals) grad.add(l);
}

} // namespace grt
