#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "grt/vec.hpp"

namespace grt {

// Regular scalar grid, x-fastest; origin is the corner of voxel (0,0,0).
struct VolumeGrid {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing{1, 1, 1}; // mm per axis
    Vec3 origin;           // mm

    std::vector<float> data;

    std::size_t size() const { return std::size_t(dims[0]) * dims[1] * dims[2]; }
    std::size_t index(int x, int y, int z) const {
        return (std::size_t(z) * dims[1] + y) * dims[0] + x;
    }
    float& at(int x, int y, int z) { return data[index(x, y, z)]; }
    float at(int x, int y, int z) const { return data[index(x, y, z)]; }

    Vec3 voxel_center(int x, int y, int z) const {
        return {origin.x + (x + 0.5) * spacing.x,
                origin.y + (y + 0.5) * spacing.y,
                origin.z + (z + 0.5) * spacing.z};
    }

    // Grid centered on `center` covering dims*spacing.
    static VolumeGrid centered(std::array<int, 3> dims, Vec3 spacing, Vec3 center = {}) {
        VolumeGrid g;
        g.dims = dims;
        g.spacing = spacing;
        g.origin = {center.x - 0.5 * dims[0] * spacing.x,
                    center.y - 0.5 * dims[1] * spacing.y,
                    center.z - 0.5 * dims[2] * spacing.z};
        g.data.assign(g.size(), 0.0f);
        return g;
    }
};

} // namespace grt
