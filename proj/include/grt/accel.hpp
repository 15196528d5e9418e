#pragma once

#include <cstdint>
#include <vector>

#include "grt/model.hpp"

namespace grt {

struct Aabb {
    Vec3 lo{1e300, 1e300, 1e300};
    Vec3 hi{-1e300, -1e300, -1e300};

    void grow(const Aabb& o) {
        lo = cwise_min(lo, o.lo);
        hi = cwise_max(hi, o.hi);
    }
    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
    }
    bool contains(const Aabb& o) const {
        return contains(o.lo) && contains(o.hi);
    }
};

// Conservative box around the k_sigma support ellipsoid:
// half extent per axis j is k_sigma * sqrt(Sigma_jj).
Aabb gaussian_aabb(const Gaussian& g, double k_sigma);

// Median-split BVH over Gaussian support boxes, leaf size 4. Rebuilt when
// the cloud's structure changes; refit (boxes only) between optimizer steps.
class Bvh {
public:
    Bvh() = default;

    static Bvh build(const GaussianCloud& cloud, double k_sigma);

    // Recomputes all AABBs for drifted parameters, keeping the topology.
    // Throws StaleBvh when the cloud count changed since build.
    void refit(const GaussianCloud& cloud);

    // Indices of every Gaussian whose support box the ray (or its t_range
    // restriction) intersects. Throws StaleBvh on a count mismatch.
    void candidates(const Ray& ray, std::size_t cloud_count, std::vector<std::uint32_t>& out) const;
    std::vector<std::uint32_t> candidates(const Ray& ray, std::size_t cloud_count) const;

    double k_sigma() const { return k_sigma_; }
    std::size_t built_count() const { return built_count_; }
    bool empty() const { return nodes_.empty(); }

    struct Node {
        Aabb box;
        std::int32_t left = -1, right = -1;  // internal children
        std::uint32_t first = 0, count = 0;  // leaf range into order_
        bool is_leaf() const { return count > 0; }
    };
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<std::uint32_t>& order() const { return order_; }

private:
    std::int32_t build_node(const GaussianCloud& cloud, const std::vector<Aabb>& boxes,
                            std::uint32_t first, std::uint32_t count);

    std::vector<Node> nodes_;
    std::vector<std::uint32_t> order_;
    std::vector<Aabb> leaf_boxes_; // per-member boxes, indexed like order_
    double k_sigma_ = 3.5;
    std::size_t built_count_ = 0;
};

} // namespace grt
