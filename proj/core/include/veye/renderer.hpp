#pragma once

#include "veye/geometry.hpp"

#include <limits>
#include <string>
#include <vector>

namespace veye {

// The virtual eye: an orthographic camera defined by two angles, a look-at
// point and a square frustum half-width.
struct VirtualCameraSpec {
    double elev = 90.0;        // degrees in [-90, 90]
    double azim = 0.0;         // degrees
    double distance = 1.0;     // meters from look_at to camera center
    Vec3 look_at = Vec3::Zero();
    double half_extent = 0.5;  // meters; orthographic half-width = half-height
    int resolution = 224;      // square pixels

    void validate() const;
    Vec3 camera_center() const;
    CameraAxes axes() const;

    // World-space width of one pixel, meters.
    double meters_per_pixel() const { return 2.0 * half_extent / resolution; }
};

inline constexpr float kDepthBackground = std::numeric_limits<float>::infinity();

struct VirtualImage {
    int resolution = 0;
    std::vector<std::uint8_t> rgb;   // R*R*3, row-major, background black
    std::vector<float> depth;        // R*R meters along the optical axis; +inf where empty
    VirtualCameraSpec spec;

    const std::uint8_t* rgb_at(int x, int y) const { return rgb.data() + 3 * (static_cast<size_t>(y) * resolution + x); }
    std::uint8_t* rgb_at(int x, int y) { return rgb.data() + 3 * (static_cast<size_t>(y) * resolution + x); }
    float depth_at(int x, int y) const { return depth[static_cast<size_t>(y) * resolution + x]; }
};

struct Projection {
    double u;      // continuous pixel x, sub-pixel
    double v;      // continuous pixel y
    double depth;  // meters along the optical axis from the camera center
};

// Orthographic projection through the spec. Points outside the frustum simply
// land at out-of-range (u, v); no clipping happens here.
Projection world_to_pixel(const VirtualCameraSpec& spec, const Vec3& p);

// Exact inverse of world_to_pixel.
Vec3 pixel_to_world(const VirtualCameraSpec& spec, double u, double v, double depth);

// Side of the square splat one point covers, pixels.
inline int splat_side(int resolution) { return (resolution + 127) / 128; }

// Pixel index range [lo, lo+side) covered by a splat centered at continuous
// coordinate c. Odd sides center on the containing pixel; even sides take the
// block nearest to c.
inline int splat_lo(double c, int side) {
    if (side % 2 == 1) {
        return static_cast<int>(std::floor(c)) - (side - 1) / 2;
    }
    return static_cast<int>(std::llround(c)) - side / 2;
}

// Total order used to pick the surviving point per pixel: nearest optical
// depth first, then lexicographically smallest (x, y, z). Exact comparisons,
// so the result is independent of point order.
inline bool splat_wins(double depth_a, const Vec3& a, double depth_b, const Vec3& b) {
    if (depth_a != depth_b) return depth_a < depth_b;
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
}

// Z-buffered point-splat rendering. Points with optical depth outside
// [0, 2 * distance] are discarded.
VirtualImage render(const PointCloud& cloud, const VirtualCameraSpec& spec);

// Same framing, narrowed frustum: look_at moves to center, half_extent shrinks
// by factor; orientation, distance and resolution stay.
VirtualCameraSpec zoom_spec(const VirtualCameraSpec& spec, const Vec3& center, double factor);

// File round trip: PNG for rgb, "VEYD" float raster for depth, JSON sidecar
// for the spec. `basename` gets .png/.depth/.json suffixes appended.
void save_virtual_image(const VirtualImage& img, const std::string& basename);
VirtualImage load_virtual_image(const std::string& basename);

std::string spec_to_json_text(const VirtualCameraSpec& spec);
VirtualCameraSpec spec_from_json_text(const std::string& text);
VirtualCameraSpec load_spec_json(const std::string& path);
void save_spec_json(const VirtualCameraSpec& spec, const std::string& path);

} // namespace veye
