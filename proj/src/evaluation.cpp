#include "lidarseg/evaluation.hpp"

#include <sstream>

#include "json.hpp"
#include "lidarseg/error.hpp"
#include "text_util.hpp"

namespace lidarseg::evaluation {

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json report_to_json(const FrameReport& r) {
    nlohmann::json j;
    j["frame_id"] = r.frame_id;
    j["points"] = r.confusion.total();
    j["total_frame_accuracy"] = optional_number(r.total_frame_accuracy);
    j["labeled_accuracy"] = optional_number(r.labeled_accuracy);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.confusion.counts) rows.push_back(row);
    j["confusion"] = rows;
    nlohmann::json per_class = nlohmann::json::object();
    for (PointClass c : kAllClasses) {
        const auto pr = precision_recall(r.confusion, c);
        per_class[std::string(class_name(c))] = {{"precision", optional_number(pr.precision)},
                                                 {"recall", optional_number(pr.recall)}};
    }
    j["per_class"] = per_class;
    return j;
}

std::string csv_cell(const std::optional<double>& v) {
    return v ? detail::format_double(*v) : std::string();
}

}  // namespace

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
        for (std::size_t c : row) n += c;
    return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    for (std::size_t t = 0; t < kNumClasses; ++t)
        for (std::size_t p = 0; p < kNumClasses; ++p) counts[t][p] += other.counts[t][p];
    return *this;
}

ConfusionMatrix confusion(std::span<const PointClass> truth, std::span<const PointClass> predicted) {
    if (truth.size() != predicted.size()) {
        throw Error(ErrorCode::Argument, "confusion: truth and prediction lengths differ");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) ++cm.counts[index_of(truth[i])][index_of(predicted[i])];
    return cm;
}

double frame_accuracy(const ConfusionMatrix& cm) {
    const std::size_t total = cm.total();
    if (total == 0) throw Error(ErrorCode::UndefinedMetric, "frame_accuracy of an empty matrix");
    std::size_t diag = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) diag += cm.counts[k][k];
    return static_cast<double>(diag) / static_cast<double>(total);
}

double labeled_accuracy(const ConfusionMatrix& cm) {
    std::size_t correct = 0;
    std::size_t labeled = 0;
    for (std::size_t t = 0; t < kNumClasses; ++t) {
        if (t == index_of(PointClass::Ignored)) continue;
        correct += cm.counts[t][t];
        for (std::size_t p = 0; p < kNumClasses; ++p) labeled += cm.counts[t][p];
    }
    if (labeled == 0) throw Error(ErrorCode::UndefinedMetric, "labeled_accuracy with no labeled points");
    return static_cast<double>(correct) / static_cast<double>(labeled);
}

PrecisionRecall precision_recall(const ConfusionMatrix& cm, PointClass cls) {
    const std::size_t c = index_of(cls);
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        predicted += cm.counts[k][c];
        actual += cm.counts[c][k];
    }
    PrecisionRecall pr;
    const auto tp = static_cast<double>(cm.counts[c][c]);
    if (predicted > 0) pr.precision = tp / static_cast<double>(predicted);
    if (actual > 0) pr.recall = tp / static_cast<double>(actual);
    return pr;
}

FrameReport make_report(std::string frame_id, const ConfusionMatrix& cm) {
    FrameReport r;
    r.frame_id = std::move(frame_id);
    r.confusion = cm;
    if (cm.total() > 0) r.total_frame_accuracy = frame_accuracy(cm);
    const std::size_t labeled = cm.total() - [&] {
        std::size_t ignored = 0;
        for (std::size_t c : cm.counts[index_of(PointClass::Ignored)]) ignored += c;
        return ignored;
    }();
    if (labeled > 0) r.labeled_accuracy = labeled_accuracy(cm);
    return r;
}

FrameReport aggregate(std::span<const FrameReport> frames, std::string id) {
    ConfusionMatrix sum;
    for (const FrameReport& f : frames) sum += f.confusion;
    return make_report(std::move(id), sum);
}

std::string report_json(std::span<const FrameReport> frames, const FrameReport& aggregate_report) {
    nlohmann::json doc;
    doc["schema"] = "lidarseg.evaluation/1";
    doc["classes"] = {"Car", "Pedestrian", "Cyclist", "Ignored"};
    doc["confusion_layout"] = "rows = truth, columns = predicted";
    // Ignored-truth points count toward total_frame_accuracy; an Ignored
    // prediction on them is correct.
    doc["ignored_truth_scored"] = true;
    nlohmann::json list = nlohmann::json::array();
    for (const FrameReport& f : frames) list.push_back(report_to_json(f));
    doc["frames"] = list;
    doc["aggregate"] = report_to_json(aggregate_report);
    return doc.dump(2) + "\n";
}

std::string report_csv(std::span<const FrameReport> frames, const FrameReport& aggregate_report) {
    std::ostringstream os;
    os << "frame_id,frame_acc,labeled_acc\n";
    for (const FrameReport& f : frames) {
        os << f.frame_id << ',' << csv_cell(f.total_frame_accuracy) << ',' << csv_cell(f.labeled_accuracy) << '\n';
    }
    os << aggregate_report.frame_id << ',' << csv_cell(aggregate_report.total_frame_accuracy) << ','
       << csv_cell(aggregate_report.labeled_accuracy) << '\n';
    return os.str();
}

}  // namespace lidarseg::evaluation
