#pragma once

// Segmentation metrics: overall accuracy, mean class accuracy and mean IoU
// from a (K+1) x (K+1) confusion matrix whose last row/column is "other".

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mf3d/error.hpp"

namespace mf3d {

struct ConfusionMatrix {
    int class_count = 0;                 // K
    std::vector<std::int64_t> counts;    // (K+1)^2, row = ground truth, column = prediction

    explicit ConfusionMatrix(int k = 0) : class_count(k), counts(static_cast<std::size_t>(k + 1) * (k + 1), 0) {}

    std::int64_t& at(int gt, int pred) { return counts[static_cast<std::size_t>(gt) * (class_count + 1) + pred]; }
    std::int64_t at(int gt, int pred) const { return counts[static_cast<std::size_t>(gt) * (class_count + 1) + pred]; }

    std::int64_t total() const {
        std::int64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
    /// Points whose ground truth is "other"; kept out of the class rows.
    std::int64_t unlabeled_total() const {
        std::int64_t t = 0;
        for (int p = 0; p <= class_count; ++p) t += at(class_count, p);
        return t;
    }
};

/// Tallies predictions against ground truth. When `include` is non-empty
/// only points with include[i] != 0 are counted.
inline ConfusionMatrix confusion(std::span<const std::int32_t> pred, std::span<const std::int32_t> gt, int class_count,
                                 std::span<const std::uint8_t> include = {}) {
    if (class_count < 1) throw InputError("class count must be at least 1");
    if (pred.size() != gt.size())
        throw InputError("prediction has " + std::to_string(pred.size()) + " labels but ground truth has " +
                         std::to_string(gt.size()));
    if (!include.empty() && include.size() != gt.size()) throw InputError("point filter does not match label count");
    ConfusionMatrix cm(class_count);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] < 0 || gt[i] > class_count)
            throw InputError("ground-truth id " + std::to_string(gt[i]) + " at point " + std::to_string(i) + " out of range");
        if (pred[i] < 0 || pred[i] > class_count)
            throw InputError("predicted id " + std::to_string(pred[i]) + " at point " + std::to_string(i) + " out of range");
        if (!include.empty() && !include[i]) continue;
        ++cm.at(gt[i], pred[i]);
    }
    return cm;
}

struct Metrics {
    double oa = 0;   // percent
    double macc = 0; // percent
    double miou = 0; // percent
};

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

/// OA = correct / counted; mAcc averages per-class recall over classes with
/// ground-truth points; mIoU averages diag / (row + col - diag) over classes
/// present in ground truth or prediction. Values are percentages rounded to
/// two decimals. Ground-truth "other" points enter OA only when
/// `count_other_in_oa` is set (and are then correct only if predicted other).
inline Metrics metrics(const ConfusionMatrix& cm, bool count_other_in_oa = false) {
    const int k = cm.class_count;
    std::int64_t correct = 0, counted = 0;
    double acc_sum = 0, iou_sum = 0;
    int acc_n = 0, iou_n = 0;
    for (int c = 0; c < k; ++c) {
        std::int64_t row = 0, col = 0;
        for (int p = 0; p <= k; ++p) row += cm.at(c, p);
        for (int g = 0; g < k; ++g) col += cm.at(g, c);
        const std::int64_t diag = cm.at(c, c);
        correct += diag;
        counted += row;
        if (row > 0) {
            acc_sum += static_cast<double>(diag) / static_cast<double>(row);
            ++acc_n;
        }
        if (row > 0 || col > 0) {
            iou_sum += static_cast<double>(diag) / static_cast<double>(row + col - diag);
            ++iou_n;
        }
    }
    if (count_other_in_oa) {
        correct += cm.at(k, k);
        counted += cm.unlabeled_total();
    }
    if (counted == 0) throw InputError("confusion matrix has no counted points");
    Metrics m;
    m.oa = round2(100.0 * static_cast<double>(correct) / static_cast<double>(counted));
    m.macc = acc_n ? round2(100.0 * acc_sum / acc_n) : 0.0;
    m.miou = iou_n ? round2(100.0 * iou_sum / iou_n) : 0.0;
    return m;
}

inline nlohmann::json metrics_to_json(const Metrics& m) { return {{"OA", m.oa}, {"mAcc", m.macc}, {"mIoU", m.miou}}; }

inline std::string format_fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline const char* kMetricsCsvHeader = "views,OA,mAcc,mIoU";

inline std::string metrics_csv_row(int views, const Metrics& m) {
    return std::to_string(views) + "," + format_fixed2(m.oa) + "," + format_fixed2(m.macc) + "," + format_fixed2(m.miou);
}

} // namespace mf3d
