#pragma once

#include <vector>

#include "grt/model.hpp"
#include "grt/volume.hpp"

namespace grt {

// Samples the Gaussian mixture at voxel centers; each primitive is stamped
// only within its k_sigma support box.
VolumeGrid voxelize(const GaussianCloud& cloud, const VolumeGrid& grid_spec, double k_sigma,
                    int n_threads = 1);

// 10*log10(peak^2 / MSE) with peak = max(reference); identical volumes
// report the 200 dB sentinel.
double psnr(const VolumeGrid& volume, const VolumeGrid& reference);

// Mean local SSIM with an 11^3 Gaussian window (sigma 1.5 voxels); windows
// that would cross the border are skipped. L = max(reference).
double ssim3d(const VolumeGrid& volume, const VolumeGrid& reference);

// Nearest-voxel row along `axis` (0..2) through a world-space point.
std::vector<double> line_profile(const VolumeGrid& volume, int axis, const Vec3& through);

// Full width at half maximum above an outer-decile-median background,
// crossings by linear interpolation. Width is in `spacing` units.
double fwhm(const std::vector<double>& profile, double spacing);

// Mean activity in the sphere ROI over the mean of the 20^3-voxel cube at
// background_center.
double sbr(const VolumeGrid& volume, const Vec3& sphere_center, double measured_diameter,
           const Vec3& background_center);

double roi_std(const VolumeGrid& volume, const Vec3& sphere_center, double diameter);

} // namespace grt
