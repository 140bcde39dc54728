#include "lidarseg/kitti_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "lidarseg/error.hpp"
#include "text_util.hpp"

namespace lidarseg::kitti {

namespace {

constexpr std::size_t kBytesPerPoint = 16;

float load_le_float(const std::byte* p) {
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) bits = (bits << 8) | std::to_integer<std::uint32_t>(p[i]);
    return std::bit_cast<float>(bits);
}

void store_le_float(float v, std::byte* out) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) {
        out[i] = static_cast<std::byte>(bits & 0xffu);
        bits >>= 8;
    }
}

// KITTI types other than these three are Ignored ("Van", "Truck", "DontCare", ...).
PointClass map_kitti_type(std::string_view type) {
    if (type == "Car") return PointClass::Car;
    if (type == "Pedestrian") return PointClass::Pedestrian;
    if (type == "Cyclist") return PointClass::Cyclist;
    return PointClass::Ignored;
}

void write_vertex(std::ostringstream& os, const Point& p, Rgb c) {
    os << detail::format_float(p.x) << ' ' << detail::format_float(p.y) << ' '
       << detail::format_float(p.z) << ' ' << detail::format_float(p.intensity) << ' '
       << static_cast<int>(c.r) << ' ' << static_cast<int>(c.g) << ' ' << static_cast<int>(c.b)
       << '\n';
}

void write_ply_header(std::ostringstream& os, std::size_t count) {
    os << "ply\n"
       << "format ascii 1.0\n"
       << "element vertex " << count << '\n'
       << "property float x\n"
       << "property float y\n"
       << "property float z\n"
       << "property float intensity\n"
       << "property uchar red\n"
       << "property uchar green\n"
       << "property uchar blue\n"
       << "end_header\n";
}

}  // namespace

Calibration Calibration::identity() {
    Calibration c;
    for (int i = 0; i < 3; ++i) {
        c.velo_to_cam[i][i] = 1.0;
        c.rect[i][i] = 1.0;
    }
    return c;
}

void Calibration::validate() const {
    for (const auto& row : velo_to_cam)
        for (double v : row)
            if (!std::isfinite(v)) throw Error(ErrorCode::InvalidCalibration, "non-finite Tr_velo_to_cam entry");
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += rect[i][k] * rect[j][k];
            const double expected = i == j ? 1.0 : 0.0;
            if (!(std::abs(dot - expected) <= 1e-4)) {
                throw Error(ErrorCode::InvalidCalibration, "R0_rect is not orthonormal");
            }
        }
    }
}

Vec3 Calibration::velodyne_to_rect(const Vec3& p) const {
    const double in[4] = {p.x, p.y, p.z, 1.0};
    double cam[3] = {0.0, 0.0, 0.0};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) cam[r] += velo_to_cam[r][c] * in[c];
    double out[3] = {0.0, 0.0, 0.0};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out[r] += rect[r][c] * cam[c];
    return {out[0], out[1], out[2]};
}

VelodyneParseResult parse_velodyne(std::span<const std::byte> bytes) {
    if (bytes.size() % kBytesPerPoint != 0) {
        throw Error(ErrorCode::MalformedFrame,
                    "velodyne frame length " + std::to_string(bytes.size()) + " is not a multiple of 16");
    }
    VelodyneParseResult result;
    const std::size_t n = bytes.size() / kBytesPerPoint;
    result.cloud.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::byte* rec = bytes.data() + i * kBytesPerPoint;
        Point p{load_le_float(rec), load_le_float(rec + 4), load_le_float(rec + 8), load_le_float(rec + 12)};
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.intensity)) {
            throw Error(ErrorCode::MalformedPoint, "non-finite component in point " + std::to_string(i));
        }
        if (p.intensity < 0.0f || p.intensity > 1.0f) {
            p.intensity = std::clamp(p.intensity, 0.0f, 1.0f);
            ++result.clamped_intensities;
        }
        result.cloud.points.push_back(p);
    }
    return result;
}

PointCloud parse_velodyne_bin(std::span<const std::byte> bytes) {
    return parse_velodyne(bytes).cloud;
}

std::vector<std::byte> serialize_velodyne_bin(const PointCloud& cloud) {
    std::vector<std::byte> out(cloud.size() * kBytesPerPoint);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud.points[i];
        std::byte* rec = out.data() + i * kBytesPerPoint;
        store_le_float(p.x, rec);
        store_le_float(p.y, rec + 4);
        store_le_float(p.z, rec + 8);
        store_le_float(p.intensity, rec + 12);
    }
    return out;
}

std::vector<ObjectLabel> parse_label_file(std::string_view text) {
    std::vector<ObjectLabel> labels;
    std::size_t line_no = 0;
    for (std::string_view line : detail::split_lines(text)) {
        ++line_no;
        const auto fields = detail::split_whitespace(line);
        if (fields.empty()) continue;
        if (fields.size() != 15) {
            throw Error(ErrorCode::Parse, "label line " + std::to_string(line_no) + ": expected 15 columns, got " +
                                              std::to_string(fields.size()));
        }
        double v[14];
        for (std::size_t k = 1; k < 15; ++k) {
            auto parsed = detail::parse_double(fields[k]);
            if (!parsed) {
                throw Error(ErrorCode::Parse, "label line " + std::to_string(line_no) + ": non-numeric field '" +
                                                  std::string(fields[k]) + "'");
            }
            v[k - 1] = *parsed;
        }
        ObjectLabel label;
        label.type = std::string(fields[0]);
        label.cls = map_kitti_type(fields[0]);
        // columns: truncation, occlusion, alpha, bbox x4, h, w, l, x, y, z, rotation_y
        label.height = v[7];
        label.width = v[8];
        label.length = v[9];
        label.center = {v[10], v[11], v[12]};
        label.rotation_y = v[13];
        if (!(label.height > 0.0 && label.width > 0.0 && label.length > 0.0)) {
            // DontCare rows carry -1 dimensions; they never contain points.
            if (label.cls != PointClass::Ignored) {
                throw Error(ErrorCode::Parse,
                            "label line " + std::to_string(line_no) + ": box dimensions must be positive");
            }
        }
        labels.push_back(std::move(label));
    }
    return labels;
}

Calibration parse_calibration(std::string_view text) {
    Calibration calib;
    bool have_velo = false;
    bool have_rect = false;
    for (std::string_view line : detail::split_lines(text)) {
        const auto colon = line.find(':');
        if (colon == std::string_view::npos) continue;
        const std::string_view key = detail::trim(line.substr(0, colon));
        if (key != "Tr_velo_to_cam" && key != "R0_rect") continue;
        const auto fields = detail::split_whitespace(line.substr(colon + 1));
        std::vector<double> values;
        for (auto f : fields) {
            auto parsed = detail::parse_double(f);
            if (!parsed) throw Error(ErrorCode::Parse, std::string(key) + ": non-numeric value '" + std::string(f) + "'");
            values.push_back(*parsed);
        }
        if (key == "Tr_velo_to_cam") {
            if (values.size() != 12) {
                throw Error(ErrorCode::Parse, "Tr_velo_to_cam: expected 12 values, got " + std::to_string(values.size()));
            }
            for (int i = 0; i < 12; ++i) calib.velo_to_cam[i / 4][i % 4] = values[i];
            have_velo = true;
        } else {
            if (values.size() != 9) {
                throw Error(ErrorCode::Parse, "R0_rect: expected 9 values, got " + std::to_string(values.size()));
            }
            for (int i = 0; i < 9; ++i) calib.rect[i / 3][i % 3] = values[i];
            have_rect = true;
        }
    }
    if (!have_velo) throw Error(ErrorCode::MissingCalibration, "calibration lacks Tr_velo_to_cam");
    if (!have_rect) throw Error(ErrorCode::MissingCalibration, "calibration lacks R0_rect");
    return calib;
}

bool box_contains(const ObjectLabel& label, const Vec3& q) {
    if (!(label.height > 0.0 && label.width > 0.0 && label.length > 0.0)) return false;
    // Box is rotated by rotation_y about the camera Y axis; its frame maps
    // length to x and width to z. Location is the bottom-face center, y down.
    const double dx = q.x - label.center.x;
    const double dy = q.y - label.center.y;
    const double dz = q.z - label.center.z;
    const double c = std::cos(label.rotation_y);
    const double s = std::sin(label.rotation_y);
    const double local_x = c * dx - s * dz;
    const double local_z = s * dx + c * dz;
    return std::abs(local_x) <= 0.5 * label.length && std::abs(local_z) <= 0.5 * label.width &&
           dy <= 0.0 && dy >= -label.height;
}

std::vector<PointClass> label_points(const PointCloud& cloud, std::span<const ObjectLabel> labels,
                                     const Calibration& calib) {
    calib.validate();
    // Smallest volume first; stable sort keeps file order for equal volumes.
    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return labels[a].volume() < labels[b].volume(); });

    std::vector<PointClass> classes(cloud.size(), PointClass::Ignored);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3 q = calib.velodyne_to_rect(cloud.points[i].position());
        for (std::size_t idx : order) {
            if (box_contains(labels[idx], q)) {
                classes[i] = labels[idx].cls;
                break;
            }
        }
    }
    return classes;
}

Rgb class_color(PointClass c) {
    switch (c) {
        case PointClass::Car: return {255, 0, 0};
        case PointClass::Pedestrian: return {0, 255, 0};
        case PointClass::Cyclist: return {0, 0, 255};
        case PointClass::Ignored: return {128, 128, 128};
    }
    return {128, 128, 128};
}

Rgb cluster_color(int cluster_id) {
    if (cluster_id < 0) return {128, 128, 128};
    // splitmix64 finalizer
    std::uint64_t z = static_cast<std::uint64_t>(cluster_id) + 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return {static_cast<std::uint8_t>(64 + (z & 0xbf)), static_cast<std::uint8_t>(64 + ((z >> 8) & 0xbf)),
            static_cast<std::uint8_t>(64 + ((z >> 16) & 0xbf))};
}

std::string export_ply(const PointCloud& cloud, std::span<const PointClass> classes) {
    if (classes.size() != cloud.size()) {
        throw Error(ErrorCode::Argument, "export_ply: " + std::to_string(classes.size()) + " classes for " +
                                             std::to_string(cloud.size()) + " points");
    }
    std::ostringstream os;
    write_ply_header(os, cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) write_vertex(os, cloud.points[i], class_color(classes[i]));
    return os.str();
}

std::string export_cluster_ply(const PointCloud& cloud, std::span<const int> cluster_ids) {
    if (cluster_ids.size() != cloud.size()) {
        throw Error(ErrorCode::Argument, "export_cluster_ply: cluster id count does not match point count");
    }
    std::ostringstream os;
    write_ply_header(os, cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) write_vertex(os, cloud.points[i], cluster_color(cluster_ids[i]));
    return os.str();
}

std::vector<std::byte> read_binary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::byte> data(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size))) {
        throw Error(ErrorCode::Io, "cannot read " + path.string());
    }
    return data;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PointCloud load_velodyne_file(const std::filesystem::path& path) {
    PointCloud cloud = parse_velodyne_bin(read_binary_file(path));
    cloud.frame_id = path.stem().string();
    return cloud;
}

}  // namespace lidarseg::kitti
