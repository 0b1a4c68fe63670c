#pragma once

#include "gmr/mesh.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gmr {

/// Pinhole camera. Camera space is x right, y down, z forward; a world
/// point p maps to rotation * p + translation.
struct Camera {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    int width = 1;
    int height = 1;
    double near_plane = 0.01;
    double far_plane = 100.0;

    Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
    Vec3 position() const { return -rotation.transpose() * translation; }

    /// Throws GeometryError unless rotation is orthonormal (1e-9),
    /// 0 < near < far and the image is at least 1x1.
    void validate() const;
};

/// Camera at `eye` looking at `target`. `up_hint` picks the roll; when it is
/// parallel to the viewing direction another axis is substituted.
Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up_hint, int width, int height,
               double vertical_fov_degrees);

/// One entry of a camera set file.
struct CameraRecord {
    Camera camera;
    std::string rgb;
    std::string mask;
};

struct CameraSet {
    std::vector<CameraRecord> views;
    /// Free-form generation metadata (seed, radius, ...), kept as JSON text.
    std::string metadata_json = "{}";
};

/// JSON document: {"metadata": {...}, "views": [{"rotation": [9 floats,
/// row-major], "translation": [3], "fx", "fy", "cx", "cy", "width",
/// "height", optional "near", "far", "rgb", "mask"}]}.
void write_camera_set(const CameraSet &set, const std::filesystem::path &path);
CameraSet read_camera_set(const std::filesystem::path &path);

} // namespace gmr
