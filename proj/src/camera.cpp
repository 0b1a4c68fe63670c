#include "gmr/camera.hpp"

#include "gmr/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace gmr {

void Camera::validate() const {
    const double ortho = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho < 1e-9)) {
        throw GeometryError("camera rotation is not orthonormal (error " + std::to_string(ortho) + ")");
    }
    if (!(near_plane > 0.0 && near_plane < far_plane)) {
        throw GeometryError("camera needs 0 < near < far");
    }
    if (width < 1 || height < 1) {
        throw GeometryError("camera image must be at least 1x1");
    }
    if (!(fx > 0.0 && fy > 0.0)) {
        throw GeometryError("camera focal lengths must be positive");
    }
}

Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up_hint, int width, int height,
               double vertical_fov_degrees) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 up = up_hint.normalized();
    if (forward.cross(up).norm() < 1e-6) {
        up = std::abs(forward.y()) < 0.9 ? Vec3::UnitY() : Vec3::UnitX();
    }
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);

    Camera cam;
    cam.rotation.row(0) = right;
    cam.rotation.row(1) = down;
    cam.rotation.row(2) = forward;
    cam.translation = -cam.rotation * eye;
    cam.width = width;
    cam.height = height;
    const double half = 0.5 * vertical_fov_degrees * std::numbers::pi / 180.0;
    cam.fy = 0.5 * height / std::tan(half);
    cam.fx = cam.fy;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    return cam;
}

void write_camera_set(const CameraSet &set, const std::filesystem::path &path) {
    nlohmann::json doc;
    doc["metadata"] = nlohmann::json::parse(set.metadata_json);
    auto &views = doc["views"] = nlohmann::json::array();
    for (const auto &rec : set.views) {
        const Camera &c = rec.camera;
        nlohmann::json v;
        std::vector<double> rot;
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) {
                rot.push_back(c.rotation(r, k));
            }
        }
        v["rotation"] = rot;
        v["translation"] = {c.translation.x(), c.translation.y(), c.translation.z()};
        v["fx"] = c.fx;
        v["fy"] = c.fy;
        v["cx"] = c.cx;
        v["cy"] = c.cy;
        v["width"] = c.width;
        v["height"] = c.height;
        v["near"] = c.near_plane;
        v["far"] = c.far_plane;
        if (!rec.rgb.empty()) {
            v["rgb"] = rec.rgb;
        }
        if (!rec.mask.empty()) {
            v["mask"] = rec.mask;
        }
        views.push_back(std::move(v));
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << doc.dump(2) << "\n";
}

CameraSet read_camera_set(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(path.string(), 0, e.what());
    }

    CameraSet set;
    if (doc.contains("metadata")) {
        set.metadata_json = doc["metadata"].dump();
    }
    if (!doc.contains("views") || !doc["views"].is_array()) {
        throw ParseError(path.string(), 0, "missing 'views' array");
    }
    std::size_t index = 0;
    for (const auto &v : doc["views"]) {
        try {
            CameraRecord rec;
            Camera &c = rec.camera;
            const auto rot = v.at("rotation").get<std::vector<double>>();
            const auto tr = v.at("translation").get<std::vector<double>>();
            if (rot.size() != 9 || tr.size() != 3) {
                throw ParseError(path.string(), 0,
                                 "view " + std::to_string(index) + ": rotation needs 9 and translation 3 values");
            }
            for (int r = 0; r < 3; ++r) {
                for (int k = 0; k < 3; ++k) {
                    c.rotation(r, k) = rot[3 * r + k];
                }
            }
            c.translation = {tr[0], tr[1], tr[2]};
            c.fx = v.at("fx").get<double>();
            c.fy = v.at("fy").get<double>();
            c.cx = v.at("cx").get<double>();
            c.cy = v.at("cy").get<double>();
            c.width = v.at("width").get<int>();
            c.height = v.at("height").get<int>();
            c.near_plane = v.value("near", c.near_plane);
            c.far_plane = v.value("far", c.far_plane);
            rec.rgb = v.value("rgb", std::string());
            rec.mask = v.value("mask", std::string());
            c.validate();
            set.views.push_back(std::move(rec));
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(path.string(), 0, "view " + std::to_string(index) + ": " + e.what());
        } catch (const GeometryError &e) {
            throw ParseError(path.string(), 0, "view " + std::to_string(index) + ": " + e.what());
        }
        ++index;
    }
    return set;
}

} // namespace gmr
