#include "grt/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "grt/errors.hpp"

namespace grt {

void Gaussian::project_to_feasible(double scale_min, double scale_max) {
    const double lo = std::log(scale_min), hi = std::log(scale_max);
    for (int i = 0; i < 3; ++i) log_scale[i] = std::clamp(log_scale[i], lo, hi);
    rotation = rotation.normalized();
    rho = std::max(rho, 0.0);
}

std::uint64_t GaussianCloud::checksum() const {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    for (const Gaussian& g : gaussians) {
        for (int i = 0; i < 3; ++i) mix(g.mu[i]);
        for (int i = 0; i < 3; ++i) mix(g.log_scale[i]);
        for (int i = 0; i < 4; ++i) mix(g.rotation[i]);
        mix(g.rho);
    }
    return h;
}

Mat3 covariance(const Gaussian& g) {
    Mat3 r = g.rotation.to_matrix();
    Vec3 s2{std::exp(2 * g.log_scale.x), std::exp(2 * g.log_scale.y), std::exp(2 * g.log_scale.z)};
    return r * Mat3::diagonal(s2) * r.transposed();
}

Mat3 inverse_covariance(const Gaussian& g) {
    Mat3 r = g.rotation.to_matrix();
    Vec3 inv_s2{std::exp(-2 * g.log_scale.x), std::exp(-2 * g.log_scale.y), std::exp(-2 * g.log_scale.z)};
    return r * Mat3::diagonal(inv_s2) * r.transposed();
}

Ray make_ray(const Vec3& origin, const Vec3& toward) {
    Vec3 delta = toward - origin;
    double len = norm(delta);
    if (len <= 1e-9) throw DegenerateRay("make_ray: endpoints coincide");
    return Ray{origin, delta / len, std::make_pair(0.0, len)};
}

namespace {

constexpr char kMagic[4] = {'G', 'R', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

// The build targets little-endian hosts; raw writes keep the format simple.
template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

} // namespace

void write_cloud(std::ostream& os, const GaussianCloud& cloud) {
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kVersion);
    put<std::uint64_t>(os, cloud.count());
    for (const Gaussian& g : cloud.gaussians) {
        for (int i = 0; i < 3; ++i) put(os, g.mu[i]);
        for (int i = 0; i < 3; ++i) put(os, g.log_scale[i]);
        for (int i = 0; i < 4; ++i) put(os, g.rotation[i]);
        put(os, g.rho);
    }
}

GaussianCloud read_cloud(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("cloud file: bad magic");
    auto version = get<std::uint32_t>(is);
    if (version != kVersion) throw IoError("cloud file: unsupported version");
    auto count = get<std::uint64_t>(is);
    GaussianCloud cloud;
    cloud.gaussians.resize(count);
    for (Gaussian& g : cloud.gaussians) {
        for (int i = 0; i < 3; ++i) g.mu[i] = get<double>(is);
        for (int i = 0; i < 3; ++i) g.log_scale[i] = get<double>(is);
        for (int i = 0; i < 4; ++i) g.rotation[i] = get<double>(is);
        g.rho = get<double>(is);
    }
    if (!is) throw IoError("cloud file: truncated");
    return cloud;
}

void save_cloud(const std::string& path, const GaussianCloud& cloud) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    write_cloud(os, cloud);
    if (!os) throw IoError("write failed: " + path);
}

GaussianCloud load_cloud(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return read_cloud(is);
}

} // namespace grt
