#include "grt/accel.hpp"

#include <algorithm>
#include <limits>

#include "grt/errors.hpp"

namespace grt {

namespace {
constexpr std::uint32_t kLeafSize = 4;
}

Aabb gaussian_aabb(const Gaussian& g, double k_sigma) {
    Mat3 r = g.rotation.to_matrix();
    Vec3 s2{std::exp(2 * g.log_scale.x), std::exp(2 * g.log_scale.y), std::exp(2 * g.log_scale.z)};
    Aabb box;
    for (int j = 0; j < 3; ++j) {
        double var = r(j, 0) * r(j, 0) * s2.x + r(j, 1) * r(j, 1) * s2.y + r(j, 2) * r(j, 2) * s2.z;
        double half = k_sigma * std::sqrt(var);
        box.lo[j] = g.mu[j] - half;
        box.hi[j] = g.mu[j] + half;
    }
    return box;
}

std::int32_t Bvh::build_node(const GaussianCloud& cloud, const std::vector<Aabb>& boxes,
                             std::uint32_t first, std::uint32_t count) {
    std::int32_t idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    Aabb box;
    for (std::uint32_t i = first; i < first + count; ++i) box.grow(boxes[order_[i]]);
    nodes_[idx].box = box;

    if (count <= kLeafSize) {
        nodes_[idx].first = first;
        nodes_[idx].count = count;
        leaf_boxes_.resize(order_.size());
        for (std::uint32_t i = first; i < first + count; ++i) leaf_boxes_[i] = boxes[order_[i]];
        return idx;
    }

    Vec3 extent = box.hi - box.lo;
    int axis = 0;
    if (extent.y > extent.x) axis = 1;
    if (extent.z > extent[axis]) axis = 2;

    std::uint32_t mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                     [&](std::uint32_t a, std::uint32_t b) {
                         return cloud.gaussians[a].mu[axis] < cloud.gaussians[b].mu[axis];
                     });

    std::int32_t left = build_node(cloud, boxes, first, mid - first);
    std::int32_t right = build_node(cloud, boxes, mid, first + count - mid);
    nodes_[idx].left = left;
    nodes_[idx].right = right;
    return idx;
}

Bvh Bvh::build(const GaussianCloud& cloud, double k_sigma) {
    Bvh bvh;
    bvh.k_sigma_ = k_sigma;
    bvh.built_count_ = cloud.count();
    if (cloud.count() == 0) return bvh;

    std::vector<Aabb> boxes(cloud.count());
    for (std::size_t i = 0; i < cloud.count(); ++i) boxes[i] = gaussian_aabb(cloud.gaussians[i], k_sigma);

    bvh.order_.resize(cloud.count());
    for (std::size_t i = 0; i < cloud.count(); ++i) bvh.order_[i] = static_cast<std::uint32_t>(i);
    bvh.nodes_.reserve(2 * cloud.count());
    bvh.build_node(cloud, boxes, 0, static_cast<std::uint32_t>(cloud.count()));
    return bvh;
}

void Bvh::refit(const GaussianCloud& cloud) {
    if (cloud.count() != built_count_) throw StaleBvh("refit: cloud count changed since build");
    // Children always follow their parent, so a reverse sweep sees leaves first.
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Aabb box;
        if (it->is_leaf()) {
            for (std::uint32_t i = it->first; i < it->first + it->count; ++i) {
                leaf_boxes_[i] = gaussian_aabb(cloud.gaussians[order_[i]], k_sigma_);
                box.grow(leaf_boxes_[i]);
            }
        } else {
            box.grow(nodes_[it->left].box);
            box.grow(nodes_[it->right].box);
        }
        it->box = box;
    }
}

namespace {

bool slab_hit(const Aabb& box, const Vec3& o, const Vec3& inv_d, double t0, double t1) {
    double tmin = t0, tmax = t1;
    for (int j = 0; j < 3; ++j) {
        double ta = (box.lo[j] - o[j]) * inv_d[j];
        double tb = (box.hi[j] - o[j]) * inv_d[j];
        tmin = std::fmax(tmin, std::fmin(ta, tb));
        tmax = std::fmin(tmax, std::fmax(ta, tb));
    }
    return tmin <= tmax;
}

} // namespace

void Bvh::candidates(const Ray& ray, std::size_t cloud_count, std::vector<std::uint32_t>& out) const {
    if (cloud_count != built_count_) throw StaleBvh("candidates: cloud count changed since build");
    out.clear();
    if (nodes_.empty()) return;

    Vec3 inv_d{1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z};
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    if (ray.t_range) {
        t0 = ray.t_range->first;
        t1 = ray.t_range->second;
    }

    std::int32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (!slab_hit(node.box, ray.origin, inv_d, t0, t1)) continue;
        if (node.is_leaf()) {
            // Per-member boxes keep the candidate set tight within a leaf.
            for (std::uint32_t i = node.first; i < node.first + node.count; ++i)
                if (slab_hit(leaf_boxes_[i], ray.origin, inv_d, t0, t1)) out.push_back(order_[i]);
        } else {
            stack[top++] = node.right;
            stack[top++] = node.left;
        }
    }
}

std::vector<std::uint32_t> Bvh::candidates(const Ray& ray, std::size_t cloud_count) const {
    std::vector<std::uint32_t> out;
    candidates(ray, cloud_count, out);
    return out;
}

} // namespace grt
