#pragma once

#include <cmath>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "grt/model.hpp"

namespace grt {

struct ParallelGeometry {
    int nu = 1, nv = 1;          // detector bins
    double bin_spacing = 1.0;    // mm
    int n_views = 1;
    double angular_range = M_PI; // rad, endpoint excluded
};

struct ConeBeamGeometry {
    double dso = 0.0;            // source to isocenter, mm
    double dsd = 0.0;            // source to detector, mm
    int nu = 1, nv = 1;
    double bin_spacing = 1.0;    // mm, at the detector
    int n_views = 1;
    double angular_range = 2 * M_PI;
};

struct CylindricalPetGeometry {
    double ring_radius = 400.0;  // mm
    int n_crystals_per_ring = 576;
    int n_rings = 1;
    double ring_spacing = 4.0;   // mm
    int n_radial_bins = 1;       // odd, central bin through isocenter
    int n_views = 1;
    int max_ring_difference = 0;
    bool arc_corrected = false;
};

using ScannerGeometry = std::variant<ParallelGeometry, ConeBeamGeometry, CylindricalPetGeometry>;

struct SinogramCoord {
    int segment = 0; // ring difference, [-max_ring_difference, +max_ring_difference]
    int view = 0;
    int radial = 0;
    int axial = 0;
};

struct ViewShape {
    int w = 0, h = 0; // w fastest in memory
    std::size_t size() const { return std::size_t(w) * h; }
};

// Throws ConfigError when counts/distances violate the geometry invariants.
void validate(const ScannerGeometry& geom);

// Radius of the cylindrical region covered by every view / LOR family, mm.
double fov_radius(const ScannerGeometry& geom);
// Half the axial extent covered by the detector, mm.
double fov_half_length(const ScannerGeometry& geom);

std::vector<Ray> rays_parallel(const ParallelGeometry& geom, int view);
std::vector<Ray> rays_cone(const ConeBeamGeometry& geom, int view);

// Signed transverse chord offset of a radial bin, mm. Native mode follows
// the equal-crystal-pitch convention s = R*sin(m*pi/N); arc-corrected mode
// is a uniform grid with the central native spacing.
double radial_position(const CylindricalPetGeometry& geom, int radial);

int axial_bins(const CylindricalPetGeometry& geom, int segment);

Ray rays_pet(const CylindricalPetGeometry& geom, const SinogramCoord& coord);

// Flat-view decomposition: CT views map 1:1; PET flat views run
// segment-major (segment ascending from -max_ring_difference), view within.
int n_total_views(const ScannerGeometry& geom);
ViewShape view_shape(const ScannerGeometry& geom, int flat_view);
std::size_t view_offset(const ScannerGeometry& geom, int flat_view);
std::size_t total_bins(const ScannerGeometry& geom);
// (segment, view) of a PET flat view.
std::pair<int, int> pet_view_decompose(const CylindricalPetGeometry& geom, int flat_view);

// Rays of one flat view, w-fastest, matching view_shape.
std::vector<Ray> rays_for_view(const ScannerGeometry& geom, int flat_view);

// Canonical bin order over the whole set: flat views in order, rows within.
std::vector<SinogramCoord> enumerate_bins_pet(const CylindricalPetGeometry& geom);

// Flat key-value config (keys carry units, e.g. ring_radius_mm).
ScannerGeometry geometry_from_kv(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> geometry_to_kv(const ScannerGeometry& geom);

} // namespace grt
