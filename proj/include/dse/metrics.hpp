#pragma once

// Quality metrics and the evaluation harness: PSNR, Gaussian-windowed SSIM,
// per-class segmentation metrics with explicit zero-denominator conventions,
// simple water segmenters for modality comparisons, and report tables
// (aligned text + full-precision CSV). Everything here is pure and
// thread-safe.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dse/error.hpp"
#include "dse/nn.hpp"
#include "dse/rng.hpp"
#include "dse/tile.hpp"

namespace dse {

// 10*log10(max_val^2 / MSE) over all channels, capped at 99.0 dB (the value
// returned when MSE is exactly 0). Symmetric in its arguments.
double psnr(const Tile& a, const Tile& b, double max_val);

// Mean local SSIM over all valid (fully interior) window positions and
// channels, using a normalized Gaussian window. C1=(k1*max)^2, C2=(k2*max)^2.
// Tiles smaller than the window are a shape error.
double ssim(const Tile& a, const Tile& b, double max_val, int window = 11, double sigma = 1.5,
            double k1 = 0.01, double k2 = 0.03);

// Binary confusion counts with respect to class 1 (water/foreground).
// Class-0 counts are the complement: swap tp<->tn and fp<->fn.
struct ConfusionCounts {
    size_t tp = 0, fp = 0, fn = 0, tn = 0;

    size_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts for_class(int cls) const {
        return cls == 0 ? ConfusionCounts{tn, fn, fp, tp} : *this;
    }
};

// Both tiles must be MASK kind with identical shape and binary values.
ConfusionCounts confusion(const Tile& pred, const Tile& gt);

struct ClassMetrics {
    double precision = 0, recall = 0, f1 = 0, iou = 0;
};

struct SegMetrics {
    ClassMetrics cls0, cls1;
    double accuracy = 0;
};

// Standard definitions with the zero-denominator convention: a metric whose
// denominator is 0 is 1 when the class is absent from both prediction and
// ground truth, and 0 when any error on that class exists.
SegMetrics seg_metrics(const ConfusionCounts& counts);

// Threshold segmenter: mask = 1 where stack channel `channel` < threshold
// (water is dark in SAR and in the synthetic scenes). Channel out of range
// is an argument error.
Tile segment_water(const Tile& stack, uint32_t channel, float threshold);

// Tiny three-layer conv segmenter producing per-pixel water logits.
struct SegmenterModel {
    int channels = 0;
    int hidden = 0;

    nn::Conv2d c1, c2, c3;

    SegmenterModel(int channels_, int hidden_);
    void init(RngStream& rng);
    std::vector<nn::Param*> params();
    nn::Tensor logits(const nn::Tensor& x) const;
};

struct SegTrainConfig {
    int epochs = 20;
    double lr = 1e-2;
    uint64_t seed = 0;
    int hidden = 8;
};

struct SegTrainResult {
    SegmenterModel model;
    std::vector<double> loss_curve;  // mean binary cross-entropy per epoch
};

// Supervised training on (stack, mask) pairs with logistic loss.
// Deterministic per seed; non-finite loss raises TrainingError.
SegTrainResult train_segmenter(const std::vector<Tile>& inputs, const std::vector<Tile>& masks,
                               const SegTrainConfig& config);

// Trained segmenter: mask = 1 where the model's logit is positive.
Tile segment_water(const Tile& stack, const SegmenterModel& model);

// One table row: label plus (metric name, value) pairs in column order.
struct ReportRow {
    std::string label;
    std::vector<std::pair<std::string, double>> metrics;
};

ReportRow translation_row(const std::string& label, double psnr_db, double ssim_val);
ReportRow segmentation_row(const std::string& label, const SegMetrics& m);

struct ReportTable {
    std::string text;  // aligned human-readable table
    std::string csv;   // full-precision, '.' decimal, no locale dependence
};

// Renders rows with the first row's metric names as the column order. All
// rows must carry exactly the same metric sequence (argument error
// otherwise); labels must not contain commas or newlines. No rows yields a
// header-only table.
ReportTable report_table(const std::vector<ReportRow>& rows);

// Parses a CSV produced by report_table; values round-trip exactly.
std::vector<ReportRow> parse_report_csv(const std::string& csv);

}  // namespace dse
