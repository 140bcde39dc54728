#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lidarseg/types.hpp"

namespace lidarseg::evaluation {

/// Point counts indexed by (truth, predicted) over Car, Pedestrian, Cyclist, Ignored.
struct ConfusionMatrix {
    std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

    std::size_t at(PointClass truth, PointClass predicted) const {
        return counts[index_of(truth)][index_of(predicted)];
    }
    std::size_t total() const;
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    friend ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const PointClass> truth, std::span<const PointClass> predicted);

/// Fraction of all points on the diagonal, Ignored included.
double frame_accuracy(const ConfusionMatrix& cm);
/// Fraction correct among points whose truth is not Ignored.
double labeled_accuracy(const ConfusionMatrix& cm);

struct PrecisionRecall {
    std::optional<double> precision;
    std::optional<double> recall;
};

PrecisionRecall precision_recall(const ConfusionMatrix& cm, PointClass cls);

struct FrameReport {
    std::string frame_id;
    std::optional<double> total_frame_accuracy;
    std::optional<double> labeled_accuracy;
    ConfusionMatrix confusion;
};

/// Metrics are absent rather than thrown when undefined.
FrameReport make_report(std::string frame_id, const ConfusionMatrix& cm);

/// The aggregate comes from the summed matrix, not averaged ratios.
FrameReport aggregate(std::span<const FrameReport> frames, std::string id = "aggregate");

std::string report_json(std::span<const FrameReport> frames, const FrameReport& aggregate);
/// "frame_id,frame_acc,labeled_acc" with empty cells for absent metrics.
std::string report_csv(std::span<const FrameReport> frames, const FrameReport& aggregate);

}  // namespace lidarseg::evaluation
