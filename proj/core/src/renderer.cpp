#include "veye/renderer.hpp"

#include "veye/errors.hpp"
#include "veye/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace veye {

void VirtualCameraSpec::validate() const {
    if (!(half_extent > 0.0)) {
        throw UsageError("virtual camera: half_extent must be positive");
    }
    if (resolution < 16) {
        throw UsageError("virtual camera: resolution must be at least 16");
    }
    if (elev < -90.0 || elev > 90.0) {
        throw UsageError("virtual camera: elev must lie in [-90, 90]");
    }
    if (!(distance > 0.0)) {
        throw UsageError("virtual camera: distance must be positive");
    }
}

Vec3 VirtualCameraSpec::camera_center() const {
    return look_at + distance * direction_from_angles(elev, azim);
}

CameraAxes VirtualCameraSpec::axes() const {
    return axes_for_forward(-direction_from_angles(elev, azim));
}

namespace {

// Shared by world_to_pixel and the render loop so both produce bit-identical
// projections; the render loop hoists the axes out of its point loop.
inline Projection project_with_axes(const VirtualCameraSpec& spec, const CameraAxes& ax,
                                    const Vec3& p) {
    const Vec3 q = p - spec.look_at;
    const double scale = spec.resolution / (2.0 * spec.half_extent);
    Projection out;
    out.u = q.dot(ax.right) * scale + spec.resolution / 2.0;
    out.v = q.dot(ax.down) * scale + spec.resolution / 2.0;
    out.depth = q.dot(ax.forward) + spec.distance;
    return out;
}

} // namespace

Projection world_to_pixel(const VirtualCameraSpec& spec, const Vec3& p) {
    return project_with_axes(spec, spec.axes(), p);
}

Vec3 pixel_to_world(const VirtualCameraSpec& spec, double u, double v, double depth) {
    if (!std::isfinite(depth)) {
        throw UsageError("pixel_to_world: depth must be finite");
    }
    const CameraAxes ax = spec.axes();
    const double scale = 2.0 * spec.half_extent / spec.resolution;
    const double um = (u - spec.resolution / 2.0) * scale;
    const double vm = (v - spec.resolution / 2.0) * scale;
    return spec.look_at + um * ax.right + vm * ax.down + (depth - spec.distance) * ax.forward;
}

VirtualImage render(const PointCloud& cloud, const VirtualCameraSpec& spec) {
    spec.validate();
    const int res = spec.resolution;
    VirtualImage img;
    img.resolution = res;
    img.spec = spec;
    img.rgb.assign(static_cast<size_t>(res) * res * 3, 0);
    img.depth.assign(static_cast<size_t>(res) * res, kDepthBackground);

    const size_t npix = static_cast<size_t>(res) * res;
    // Winning point per pixel, for the deterministic tie-break.
    std::vector<std::int32_t> winner(npix, -1);
    std::vector<double> zbuf(npix, std::numeric_limits<double>::infinity());

    const int side = splat_side(res);
    const double max_depth = 2.0 * spec.distance;
    const CameraAxes ax = spec.axes();

    for (size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        const Projection proj = project_with_axes(spec, ax, p);
        if (proj.depth < 0.0 || proj.depth > max_depth) {
            continue;
        }
        const int x_lo = splat_lo(proj.u, side);
        const int y_lo = splat_lo(proj.v, side);
        const int x0 = std::max(x_lo, 0);
        const int x1 = std::min(x_lo + side - 1, res - 1);
        const int y0 = std::max(y_lo, 0);
        const int y1 = std::min(y_lo + side - 1, res - 1);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const size_t idx = static_cast<size_t>(y) * res + x;
                if (winner[idx] < 0 ||
                    splat_wins(proj.depth, p, zbuf[idx], cloud.points[winner[idx]])) {
                    winner[idx] = static_cast<std::int32_t>(i);
                    zbuf[idx] = proj.depth;
                }
            }
        }
    }

    for (size_t idx = 0; idx < npix; ++idx) {
        if (winner[idx] >= 0) {
            const auto& c = cloud.colors[winner[idx]];
            img.rgb[3 * idx + 0] = c[0];
            img.rgb[3 * idx + 1] = c[1];
            img.rgb[3 * idx + 2] = c[2];
            img.depth[idx] = static_cast<float>(zbuf[idx]);
        }
    }
    return img;
}

VirtualCameraSpec zoom_spec(const VirtualCameraSpec& spec, const Vec3& center, double factor) {
    if (!(factor > 1.0)) {
        throw UsageError("zoom_spec: factor must be greater than 1");
    }
    VirtualCameraSpec out = spec;
    out.look_at = center;
    out.half_extent = spec.half_extent / factor;
    return out;
}

namespace {

using nlohmann::json;

constexpr char kDepthMagic[4] = {'V', 'E', 'Y', 'D'};

} // namespace

std::string spec_to_json_text(const VirtualCameraSpec& spec) {
    json j;
    j["elev"] = spec.elev;
    j["azim"] = spec.azim;
    j["distance"] = spec.distance;
    j["look_at"] = {spec.look_at.x(), spec.look_at.y(), spec.look_at.z()};
    j["half_extent"] = spec.half_extent;
    j["resolution"] = spec.resolution;
    return j.dump(2);
}

VirtualCameraSpec spec_from_json_text(const std::string& text) {
    try {
        const json j = json::parse(text);
        VirtualCameraSpec spec;
        spec.elev = j.at("elev").get<double>();
        spec.azim = j.at("azim").get<double>();
        spec.distance = j.at("distance").get<double>();
        const json& la = j.at("look_at");
        spec.look_at = Vec3(la.at(0).get<double>(), la.at(1).get<double>(), la.at(2).get<double>());
        spec.half_extent = j.at("half_extent").get<double>();
        spec.resolution = j.at("resolution").get<int>();
        spec.validate();
        return spec;
    } catch (const json::exception& e) {
        throw UsageError(std::string("camera spec json: ") + e.what());
    }
}

VirtualCameraSpec load_spec_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("camera spec json: cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return spec_from_json_text(ss.str());
}

void save_spec_json(const VirtualCameraSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw UsageError("camera spec json: cannot write " + path);
    }
    out << spec_to_json_text(spec) << "\n";
}

void save_virtual_image(const VirtualImage& img, const std::string& basename) {
    write_png_rgb(basename + ".png", img.rgb.data(), img.resolution, img.resolution);

    std::ofstream out(basename + ".depth", std::ios::binary);
    if (!out) {
        throw UsageError("virtual image: cannot write " + basename + ".depth");
    }
    out.write(kDepthMagic, 4);
    const std::uint32_t res = static_cast<std::uint32_t>(img.resolution);
    const std::uint64_t reserved = 0;
    out.write(reinterpret_cast<const char*>(&res), 4);
    out.write(reinterpret_cast<const char*>(&reserved), 8);
    // +inf is stored as the largest finite float.
    for (float d : img.depth) {
        const float stored = std::isfinite(d) ? d : std::numeric_limits<float>::max();
        out.write(reinterpret_cast<const char*>(&stored), 4);
    }

    save_spec_json(img.spec, basename + ".json");
}

VirtualImage load_virtual_image(const std::string& basename) {
    VirtualImage img;
    img.spec = load_spec_json(basename + ".json");

    int w = 0;
    int h = 0;
    img.rgb = read_png_rgb(basename + ".png", w, h);
    if (w != h) {
        throw CorruptDataError("virtual image: rgb raster is not square");
    }
    img.resolution = w;

    std::ifstream in(basename + ".depth", std::ios::binary);
    if (!in) {
        throw UsageError("virtual image: cannot open " + basename + ".depth");
    }
    char magic[4];
    std::uint32_t res = 0;
    std::uint64_t reserved = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&res), 4);
    in.read(reinterpret_cast<char*>(&reserved), 8);
    if (!in || std::memcmp(magic, kDepthMagic, 4) != 0) {
        throw CorruptDataError("virtual image: bad depth raster magic");
    }
    if (static_cast<int>(res) != img.resolution) {
        throw CorruptDataError("virtual image: depth raster resolution disagrees with rgb");
    }
    img.depth.resize(static_cast<size_t>(res) * res);
    in.read(reinterpret_cast<char*>(img.depth.data()), static_cast<std::streamsize>(img.depth.size() * 4));
    if (!in) {
        throw CorruptDataError("virtual image: truncated depth raster");
    }
    for (float& d : img.depth) {
        if (d == std::numeric_limits<float>::max()) {
            d = kDepthBackground;
        }
    }
    return img;
}

} // namespace veye
