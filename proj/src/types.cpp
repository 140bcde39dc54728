#include "lidarseg/error.hpp"
#include "lidarseg/types.hpp"

namespace lidarseg {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedFrame: return "malformed frame";
        case ErrorCode::MalformedPoint: return "malformed point";
        case ErrorCode::Parse: return "parse error";
        case ErrorCode::MissingCalibration: return "missing calibration";
        case ErrorCode::InvalidCalibration: return "invalid calibration";
        case ErrorCode::Argument: return "invalid argument";
        case ErrorCode::InsufficientPoints: return "insufficient points";
        case ErrorCode::DegenerateGeometry: return "degenerate geometry";
        case ErrorCode::EmptyInput: return "empty input";
        case ErrorCode::EmptyCluster: return "empty cluster";
        case ErrorCode::EmptyData: return "empty data";
        case ErrorCode::Imbalance: return "class imbalance";
        case ErrorCode::Arity: return "class arity";
        case ErrorCode::Format: return "format error";
        case ErrorCode::UndefinedMetric: return "undefined metric";
        case ErrorCode::Config: return "config error";
        case ErrorCode::Io: return "i/o error";
    }
    return "unknown error";
}

std::string_view class_name(PointClass c) {
    switch (c) {
        case PointClass::Car: return "Car";
        case PointClass::Pedestrian: return "Pedestrian";
        case PointClass::Cyclist: return "Cyclist";
        case PointClass::Ignored: return "Ignored";
    }
    return "Ignored";
}

std::optional<PointClass> class_from_name(std::string_view name) {
    for (PointClass c : kAllClasses) {
        if (class_name(c) == name) return c;
    }
    return std::nullopt;
}

std::optional<PointClass> class_from_code(int code) {
    if (code < 0 || code >= static_cast<int>(kNumClasses)) return std::nullopt;
    return static_cast<PointClass>(code);
}

std::vector<Vec3> positions(const PointCloud& cloud) {
    std::vector<Vec3> out;
    out.reserve(cloud.size());
    for (const Point& p : cloud.points) out.push_back(p.position());
    return out;
}

}  // namespace lidarseg
