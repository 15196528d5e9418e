#include "grt/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "grt/accel.hpp"
#include "grt/errors.hpp"
#include "parallel.hpp"

namespace grt {

VolumeGrid voxelize(const GaussianCloud& cloud, const VolumeGrid& grid_spec, double k_sigma,
                    int n_threads) {
    VolumeGrid out = grid_spec;
    out.data.assign(out.size(), 0.0f);
    if (cloud.count() == 0) return out;

    int workers = std::max(1, n_threads);
    std::vector<std::vector<double>> partials(workers);
    for (auto& p : partials) p.assign(out.size(), 0.0);

    parallel_for(cloud.count(), n_threads, [&](std::size_t begin, std::size_t end, int wid) {
        std::vector<double>& acc = partials[wid];
        for (std::size_t gi = begin; gi < end; ++gi) {
            const Gaussian& g = cloud.gaussians[gi];
            if (g.rho == 0.0) continue;
            Mat3 q = inverse_covariance(g);
            Aabb box = gaussian_aabb(g, k_sigma);
            int x0 = std::max(0, int(std::floor((box.lo.x - out.origin.x) / out.spacing.x - 0.5)));
            int y0 = std::max(0, int(std::floor((box.lo.y - out.origin.y) / out.spacing.y - 0.5)));
            int z0 = std::max(0, int(std::floor((box.lo.z - out.origin.z) / out.spacing.z - 0.5)));
            int x1 = std::min(out.dims[0] - 1, int(std::ceil((box.hi.x - out.origin.x) / out.spacing.x - 0.5)));
            int y1 = std::min(out.dims[1] - 1, int(std::ceil((box.hi.y - out.origin.y) / out.spacing.y - 0.5)));
            int z1 = std::min(out.dims[2] - 1, int(std::ceil((box.hi.z - out.origin.z) / out.spacing.z - 0.5)));
            for (int z = z0; z <= z1; ++z)
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        Vec3 d = out.voxel_center(x, y, z) - g.mu;
                        double m2 = dot(d, q * d);
                        if (m2 > k_sigma * k_sigma) continue;
                        acc[out.index(x, y, z)] += g.rho * std::exp(-0.5 * m2);
                    }
        }
    });

    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = 0.0;
        for (const auto& p : partials) v += p[i];
        out.data[i] = static_cast<float>(v);
    }
    return out;
}

double psnr(const VolumeGrid& volume, const VolumeGrid& reference) {
    if (volume.dims != reference.dims) throw ShapeMismatch("psnr: volume dims differ");
    double mse = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        double d = double(volume.data[i]) - double(reference.data[i]);
        mse += d * d;
        peak = std::max(peak, double(reference.data[i]));
    }
    mse /= double(reference.size());
    if (mse == 0.0) return 200.0;
    return std::min(200.0, 10.0 * std::log10(peak * peak / mse));
}

namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;

std::array<double, kWindow> ssim_window() {
    std::array<double, kWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        double d = i - kHalf;
        w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable valid-region Gaussian filter along one axis.
void filter_axis(const std::vector<double>& in, std::vector<double>& out,
                 const std::array<int, 3>& dims, int axis, const std::array<double, kWindow>& w) {
    out.assign(in.size(), 0.0);
    std::array<std::size_t, 3> stride{1, std::size_t(dims[0]), std::size_t(dims[0]) * dims[1]};
    std::size_t s = stride[axis];
    int n = dims[axis];
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) {
                std::array<int, 3> idx{x, y, z};
                if (idx[axis] < kHalf || idx[axis] >= n - kHalf) continue;
                std::size_t base = stride[2] * z + stride[1] * y + x;
                double acc = 0.0;
                for (int k = -kHalf; k <= kHalf; ++k) acc += w[k + kHalf] * in[base + s * k];
                out[base] = acc;
            }
}

std::vector<double> filter3(const std::vector<double>& in, const std::array<int, 3>& dims,
                            const std::array<double, kWindow>& w) {
    std::vector<double> a, b;
    filter_axis(in, a, dims, 0, w);
    filter_axis(a, b, dims, 1, w);
    filter_axis(b, a, dims, 2, w);
    return a;
}

} // namespace

double ssim3d(const VolumeGrid& volume, const VolumeGrid& reference) {
    if (volume.dims != reference.dims) throw ShapeMismatch("ssim3d: volume dims differ");
    for (int d : volume.dims)
        if (d < kWindow) throw ShapeMismatch("ssim3d: dims smaller than the 11^3 window");

    std::size_t n = volume.size();
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = volume.data[i];
        y[i] = reference.data[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
        peak = std::max(peak, y[i]);
    }
    double c1 = (0.01 * peak) * (0.01 * peak);
    double c2 = (0.03 * peak) * (0.03 * peak);

    auto w = ssim_window();
    auto mx = filter3(x, volume.dims, w);
    auto my = filter3(y, volume.dims, w);
    auto mxx = filter3(xx, volume.dims, w);
    auto myy = filter3(yy, volume.dims, w);
    auto mxy = filter3(xy, volume.dims, w);

    double sum = 0.0;
    std::size_t count = 0;
    for (int z = kHalf; z < volume.dims[2] - kHalf; ++z)
        for (int yv = kHalf; yv < volume.dims[1] - kHalf; ++yv)
            for (int xv = kHalf; xv < volume.dims[0] - kHalf; ++xv) {
                std::size_t i = volume.index(xv, yv, z);
                double vx = mxx[i] - mx[i] * mx[i];
                double vy = myy[i] - my[i] * my[i];
                double cxy = mxy[i] - mx[i] * my[i];
                double num = (2 * mx[i] * my[i] + c1) * (2 * cxy + c2);
                double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
                sum += num / den;
                ++count;
            }
    return sum / double(count);
}

std::vector<double> line_profile(const VolumeGrid& volume, int axis, const Vec3& through) {
    std::array<int, 3> idx;
    for (int j = 0; j < 3; ++j) {
        double f = (through[j] - volume.origin[j]) / volume.spacing[j] - 0.5;
        idx[j] = int(std::lround(f));
        if (idx[j] < 0 || idx[j] >= volume.dims[j])
            throw OutOfGrid("line_profile: point outside the grid");
    }
    std::vector<double> out(volume.dims[axis]);
    for (int i = 0; i < volume.dims[axis]; ++i) {
        std::array<int, 3> p = idx;
        p[axis] = i;
        out[i] = volume.at(p[0], p[1], p[2]);
    }
    return out;
}

double fwhm(const std::vector<double>& profile, double spacing) {
    int n = static_cast<int>(profile.size());
    if (n < 3) throw NoPeak("fwhm: profile too short");

    // Background from the outer 10% of samples (both ends).
    int tail = std::max(1, n / 20);
    std::vector<double> outer;
    for (int i = 0; i < tail; ++i) outer.push_back(profile[i]);
    for (int i = n - tail; i < n; ++i) outer.push_back(profile[i]);
    std::sort(outer.begin(), outer.end());
    double background = outer[outer.size() / 2];

    int peak = int(std::max_element(profile.begin(), profile.end()) - profile.begin());
    double maxv = profile[peak];
    if (maxv <= background) throw NoPeak("fwhm: no peak above background");
    double half = background + 0.5 * (maxv - background);

    int above = 0;
    for (double v : profile)
        if (v >= half) ++above;
    if (above > n / 2) throw AmbiguousPeak("fwhm: plateau wider than half the profile");

    double left = -1, right = -1;
    for (int i = peak; i > 0; --i) {
        if (profile[i - 1] < half && profile[i] >= half) {
            left = (i - 1) + (half - profile[i - 1]) / (profile[i] - profile[i - 1]);
            break;
        }
    }
    for (int i = peak; i < n - 1; ++i) {
        if (profile[i] >= half && profile[i + 1] < half) {
            right = i + (profile[i] - half) / (profile[i] - profile[i + 1]);
            break;
        }
    }
    if (left < 0 || right < 0) throw NoPeak("fwhm: half level not crossed inside the profile");
    return (right - left) * spacing;
}

namespace {

// Voxel indices within `radius` of a world point. Throws RoiOutOfGrid when
// the ball pokes outside the grid or captures no voxel.
std::vector<std::size_t> ball_roi(const VolumeGrid& v, const Vec3& center, double radius) {
    for (int j = 0; j < 3; ++j) {
        if (center[j] - radius < v.origin[j] ||
            center[j] + radius > v.origin[j] + v.dims[j] * v.spacing[j])
            throw RoiOutOfGrid("ROI extends beyond the grid");
    }
    std::vector<std::size_t> out;
    int x0 = int(std::floor((center.x - radius - v.origin.x) / v.spacing.x));
    int x1 = int(std::ceil((center.x + radius - v.origin.x) / v.spacing.x));
    int y0 = int(std::floor((center.y - radius - v.origin.y) / v.spacing.y));
    int y1 = int(std::ceil((center.y + radius - v.origin.y) / v.spacing.y));
    int z0 = int(std::floor((center.z - radius - v.origin.z) / v.spacing.z));
    int z1 = int(std::ceil((center.z + radius - v.origin.z) / v.spacing.z));
    for (int z = std::max(0, z0); z <= std::min(v.dims[2] - 1, z1); ++z)
        for (int y = std::max(0, y0); y <= std::min(v.dims[1] - 1, y1); ++y)
            for (int x = std::max(0, x0); x <= std::min(v.dims[0] - 1, x1); ++x) {
                Vec3 d = v.voxel_center(x, y, z) - center;
                if (dot(d, d) <= radius * radius) out.push_back(v.index(x, y, z));
            }
    if (out.empty()) throw RoiOutOfGrid("ROI captures no voxel");
    return out;
}

} // namespace

double sbr(const VolumeGrid& volume, const Vec3& sphere_center, double measured_diameter,
           const Vec3& background_center) {
    auto roi = ball_roi(volume, sphere_center, 0.5 * measured_diameter);
    double sphere_mean = 0.0;
    for (std::size_t i : roi) sphere_mean += volume.data[i];
    sphere_mean /= double(roi.size());

    // 20x20x20-voxel cube centered on the background point.
    std::array<int, 3> c;
    for (int j = 0; j < 3; ++j) {
        c[j] = int(std::lround((background_center[j] - volume.origin[j]) / volume.spacing[j] - 0.5));
        if (c[j] - 10 < 0 || c[j] + 10 > volume.dims[j])
            throw RoiOutOfGrid("background cube extends beyond the grid");
    }
    double bg_mean = 0.0;
    for (int z = c[2] - 10; z < c[2] + 10; ++z)
        for (int y = c[1] - 10; y < c[1] + 10; ++y)
            for (int x = c[0] - 10; x < c[0] + 10; ++x) bg_mean += volume.at(x, y, z);
    bg_mean /= 8000.0;
    if (bg_mean == 0.0) throw ZeroBackground("sbr: background mean is zero");
    return sphere_mean / bg_mean;
}

double roi_std(const VolumeGrid& volume, const Vec3& sphere_center, double diameter) {
    auto roi = ball_roi(volume, sphere_center, 0.5 * diameter);
    double mean = 0.0;
    for (std::size_t i : roi) mean += volume.data[i];
    mean /= double(roi.size());
    double var = 0.0;
    for (std::size_t i : roi) {
        double d = volume.data[i] - mean;
        var += d * d;
    }
    return std::sqrt(var / double(roi.size()));
}

} // namespace grt
