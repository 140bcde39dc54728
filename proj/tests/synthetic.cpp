#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace synth {

namespace {

using lidarseg::Point;
using lidarseg::features::FeatureRow;
using lidarseg::features::FeatureVector;

constexpr double kPi = 3.14159265358979323846;

bool in_footprint(double x, double y, const BoxSpec& b) {
    return std::abs(x - b.cx) <= b.sx / 2 && std::abs(y - b.cy) <= b.sy / 2;
}

void add_plane(std::mt19937_64& rng, GroundScene& scene, std::size_t n, double half_extent, double ground_z,
               double sigma, const std::vector<BoxSpec>& boxes) {
    std::uniform_real_distribution<double> xy(-half_extent, half_extent);
    std::normal_distribution<double> noise(0.0, sigma);
    std::uniform_real_distribution<double> inten(0.1, 0.3);
    std::size_t added = 0;
    while (added < n) {
        const double x = xy(rng);
        const double y = xy(rng);
        if (std::any_of(boxes.begin(), boxes.end(), [&](const BoxSpec& b) { return in_footprint(x, y, b); })) continue;
        scene.cloud.points.push_back({static_cast<float>(x), static_cast<float>(y),
                                      static_cast<float>(ground_z + noise(rng)), static_cast<float>(inten(rng))});
        scene.box_of.push_back(-1);
        ++added;
    }
}

// Area-weighted sample on the top face and the side band [z_lo, z_hi].
Vec3 sample_box_surface(std::mt19937_64& rng, double cx, double cy, double sx, double sy, double z_lo,
                        double z_hi) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double band = z_hi - z_lo;
    const double areas[5] = {sx * sy, sx * band, sx * band, sy * band, sy * band};
    const double total = std::accumulate(std::begin(areas), std::end(areas), 0.0);
    double pick = u(rng) * total;
    int face = 0;
    while (face < 4 && pick > areas[face]) pick -= areas[face++];
    const double a = u(rng) - 0.5;
    const double z = z_lo + u(rng) * band;
    switch (face) {
        case 0: return {cx + a * sx, cy + (u(rng) - 0.5) * sy, z_hi};
        case 1: return {cx + a * sx, cy - sy / 2, z};
        case 2: return {cx + a * sx, cy + sy / 2, z};
        case 3: return {cx - sx / 2, cy + a * sy, z};
        default: return {cx + sx / 2, cy + a * sy, z};
    }
}

void add_boxes(std::mt19937_64& rng, GroundScene& scene, double ground_z, const std::vector<BoxSpec>& boxes,
               std::size_t per_box, double min_side_height) {
    std::uniform_real_distribution<double> inten(0.4, 0.9);
    for (std::size_t b = 0; b < boxes.size(); ++b) {
        const BoxSpec& box = boxes[b];
        for (std::size_t i = 0; i < per_box; ++i) {
            const Vec3 p = sample_box_surface(rng, box.cx, box.cy, box.sx, box.sy, ground_z + min_side_height,
                                              ground_z + box.height);
            scene.cloud.points.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                                          static_cast<float>(inten(rng))});
            scene.box_of.push_back(static_cast<int>(b));
        }
    }
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

GroundScene plane_with_boxes(std::uint64_t seed, std::size_t plane_points, double half_extent, double ground_z,
                             double noise_sigma, const std::vector<BoxSpec>& boxes, std::size_t points_per_box,
                             double min_side_height) {
    std::mt19937_64 rng(seed);
    GroundScene scene;
    scene.cloud.frame_id = "synthetic";
    add_plane(rng, scene, plane_points, half_extent, ground_z, noise_sigma, boxes);
    add_boxes(rng, scene, ground_z, boxes, points_per_box, min_side_height);
    return scene;
}

GroundScene plane_with_full_boxes(std::uint64_t seed, std::size_t plane_points, double half_extent,
                                  double ground_z, double noise_sigma, const std::vector<BoxSpec>& boxes,
                                  std::size_t points_per_box) {
    return plane_with_boxes(seed, plane_points, half_extent, ground_z, noise_sigma, boxes, points_per_box, 0.0);
}

Blobs gaussian_blobs(std::uint64_t seed, const std::vector<Vec3>& centers, double sigma, std::size_t per_blob) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    Blobs out;
    for (std::size_t b = 0; b < centers.size(); ++b) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            out.points.push_back({centers[b].x + n(rng), centers[b].y + n(rng), centers[b].z + n(rng)});
            out.blob_of.push_back(static_cast<int>(b));
        }
    }
    return out;
}

double best_matching_agreement(const std::vector<int>& truth, const std::vector<int>& labels) {
    if (truth.empty()) return 1.0;
    const int nt = *std::max_element(truth.begin(), truth.end()) + 1;
    const int nl = std::max(*std::max_element(labels.begin(), labels.end()) + 1, 0);
    std::vector<std::vector<std::size_t>> table(static_cast<std::size_t>(nt),
                                                std::vector<std::size_t>(static_cast<std::size_t>(nl), 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (labels[i] >= 0) ++table[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(labels[i])];
    }
    // Pad the label side so every truth group can map to a distinct slot.
    const int slots = std::max(nt, nl);
    std::vector<int> perm(static_cast<std::size_t>(slots));
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
        std::size_t agree = 0;
        for (int t = 0; t < nt; ++t) {
            const int l = perm[static_cast<std::size_t>(t)];
            if (l < nl) agree += table[static_cast<std::size_t>(t)][static_cast<std::size_t>(l)];
        }
        best = std::max(best, agree);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(truth.size());
}

std::vector<FeatureRow> separable_three_class(std::uint64_t seed, std::size_t per_class) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // Car and Pedestrian differ on feature 0, Cyclist stands apart on feature 3.
    const double f0_lo[3] = {0.0, 3.0, 1.5};
    const double f3_lo[3] = {0.0, 0.0, 3.0};
    std::vector<FeatureRow> rows;
    for (std::size_t i = 0; i < per_class; ++i) {
        for (int c = 0; c < 3; ++c) {
            FeatureVector f{f0_lo[c] + u(rng), u(rng), u(rng), f3_lo[c] + u(rng), u(rng)};
            rows.push_back({f, static_cast<PointClass>(c)});
        }
    }
    return rows;
}

std::vector<FeatureRow> car_pedestrian_rows(std::uint64_t seed, std::size_t per_class) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    const auto draw = [&](double mean, double sd) { return std::abs(mean + sd * n(rng)); };
    std::vector<FeatureRow> rows;
    for (std::size_t i = 0; i < per_class; ++i) {
        FeatureVector car{draw(1.2, 0.25), draw(0.30, 0.08), draw(0.15, 0.05), draw(8.0, 2.0), draw(0.05, 0.02)};
        FeatureVector ped{draw(0.30, 0.10), draw(0.03, 0.01), draw(0.02, 0.008), draw(0.6, 0.3), draw(0.01, 0.005)};
        // Keep the eigenvalue ordering of a real covariance spectrum.
        for (FeatureVector* f : {&car, &ped}) {
            std::array<double, 3> e{f->eig1, f->eig2, f->eig3};
            std::sort(e.begin(), e.end(), std::greater<>());
            f->eig1 = e[0];
            f->eig2 = e[1];
            f->eig3 = e[2];
        }
        rows.push_back({car, PointClass::Car});
        rows.push_back({ped, PointClass::Pedestrian});
    }
    return rows;
}

lidarseg::kitti::Calibration sensor_calibration() {
    lidarseg::kitti::Calibration c;
    c.velo_to_cam = {{{0, -1, 0, 0}, {0, 0, -1, 0}, {1, 0, 0, 0}}};
    c.rect = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    return c;
}

std::string sensor_calibration_text() {
    return "P0: 1 0 0 0 0 1 0 0 0 0 1 0\n"
           "R0_rect: 1 0 0 0 1 0 0 0 1\n"
           "Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0\n"
           "Tr_imu_to_velo: 1 0 0 0 0 1 0 0 0 0 1 0\n";
}

KittiFrame kitti_frame(std::uint64_t seed, const std::string& frame_id) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    constexpr double kGround = -1.7;
    constexpr double kClearance = 0.4;  // object points start this far above the ground

    KittiFrame frame;
    frame.cloud.frame_id = frame_id;

    // Slots are at least 12 m apart.
    const Vec3 slots[5] = {{10, -8, kGround}, {10, 8, kGround}, {28, -8, kGround}, {28, 8, kGround}, {19, 0, kGround}};
    std::vector<int> order = {0, 1, 2, 3, 4};
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t count = 1 + static_cast<std::size_t>(rng() % 3);
    const int first_class = static_cast<int>(rng() % 3);
    for (std::size_t k = 0; k < count; ++k) {
        SceneObject o;
        o.cls = static_cast<PointClass>((first_class + static_cast<int>(k)) % 3);
        o.base = slots[order[k]];
        o.base.x += u(rng) - 0.5;
        o.base.y += u(rng) - 0.5;
        switch (o.cls) {
            case PointClass::Car: o.extent_x = 4.0 + 0.4 * u(rng); o.extent_y = 1.8; o.height = 1.5; break;
            case PointClass::Pedestrian: o.extent_x = 0.6; o.extent_y = 0.6; o.height = 1.7 + 0.2 * u(rng); break;
            default: o.extent_x = 1.8; o.extent_y = 0.6; o.height = 1.7; break;
        }
        frame.objects.push_back(o);
    }

    std::vector<BoxSpec> footprints;
    for (const SceneObject& o : frame.objects) footprints.push_back({o.base.x, o.base.y, o.extent_x, o.extent_y, o.height});

    std::normal_distribution<double> noise(0.0, 0.01);
    std::size_t added = 0;
    while (added < 12000) {
        const double x = u(rng) * 40.0;
        const double y = u(rng) * 40.0 - 20.0;
        if (std::any_of(footprints.begin(), footprints.end(), [&](const BoxSpec& b) { return in_footprint(x, y, b); })) continue;
        frame.cloud.points.push_back({static_cast<float>(x), static_cast<float>(y),
                                      static_cast<float>(kGround + noise(rng)), static_cast<float>(0.1 + 0.1 * u(rng))});
        ++added;
    }

    std::ostringstream labels;
    for (const SceneObject& o : frame.objects) {
        const double z_lo = o.base.z + kClearance;
        const double z_hi = o.base.z + o.height;
        std::size_t n = 0;
        double i_lo = 0.0, i_span = 0.0;
        switch (o.cls) {
            case PointClass::Car: n = 450; i_lo = 0.1; i_span = 0.8; break;
            case PointClass::Pedestrian: n = 160; i_lo = 0.30; i_span = 0.05; break;
            default: n = 220; i_lo = 0.4; i_span = 0.4; break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            Vec3 p;
            if (o.cls == PointClass::Pedestrian) {
                const double a = 2 * kPi * u(rng);
                const double r = o.extent_x / 2;
                p = {o.base.x + r * std::cos(a), o.base.y + r * std::sin(a), z_lo + (z_hi - z_lo) * u(rng)};
            } else {
                p = sample_box_surface(rng, o.base.x, o.base.y, o.extent_x, o.extent_y, z_lo, z_hi);
            }
            frame.cloud.points.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                                          static_cast<float>(clamp01(i_lo + i_span * u(rng)))});
        }
        // Label box in the camera frame, slightly padded so surface points are inside.
        const double pad = 0.1;
        labels << lidarseg::class_name(o.cls) << " 0.00 0 0.00 0.00 0.00 0.00 0.00 " << (o.height + pad) << ' '
               << (o.extent_x + pad) << ' ' << (o.extent_y + pad) << ' ' << -o.base.y << ' ' << -(o.base.z - pad / 2)
               << ' ' << o.base.x << " 0.00\n";
    }
    labels << "DontCare -1 -1 -10 0.00 0.00 0.00 0.00 -1 -1 -1 -1000 -1000 -1000 -10\n";
    frame.label_text = labels.str();
    return frame;
}

void write_kitti_dataset(const std::filesystem::path& root, std::size_t frames, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(root / "velodyne");
    fs::create_directories(root / "label_2");
    fs::create_directories(root / "calib");
    for (std::size_t f = 0; f < frames; ++f) {
        char id[32];
        std::snprintf(id, sizeof id, "%06zu", f);
        const KittiFrame frame = kitti_frame(seed * 1000 + f, id);
        const auto bytes = lidarseg::kitti::serialize_velodyne_bin(frame.cloud);
        std::ofstream(root / "velodyne" / (std::string(id) + ".bin"), std::ios::binary)
            .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        std::ofstream(root / "label_2" / (std::string(id) + ".txt")) << frame.label_text;
        std::ofstream(root / "calib" / (std::string(id) + ".txt")) << sensor_calibration_text();
    }
}

std::filesystem::path temp_dir(const std::string& name) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("lidarseg_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace synth
