#include "dse/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace dse {

// ---- PSNR ----------------------------------------------------------------------

double psnr(const Tile& a, const Tile& b, double max_val) {
    if (!a.same_shape(b)) throw ShapeError("psnr requires identically shaped tiles");
    if (a.data.empty()) throw ShapeError("psnr of an empty tile");
    if (!(max_val > 0.0)) throw ArgumentError("psnr max_val must be positive");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(max_val * max_val / mse));
}

// ---- SSIM ----------------------------------------------------------------------

double ssim(const Tile& a, const Tile& b, double max_val, int window, double sigma, double k1,
            double k2) {
    if (!a.same_shape(b)) throw ShapeError("ssim requires identically shaped tiles");
    if (!(max_val > 0.0)) throw ArgumentError("ssim max_val must be positive");
    if (window < 1 || window % 2 == 0) throw ArgumentError("ssim window must be odd");
    const int H = static_cast<int>(a.height), W = static_cast<int>(a.width);
    if (H < window || W < window)
        throw ShapeError("ssim tile smaller than the window");

    std::vector<double> w1(window);
    {
        double sum = 0.0;
        const int R = window / 2;
        for (int i = 0; i < window; ++i) {
            w1[i] = std::exp(-0.5 * (i - R) * (i - R) / (sigma * sigma));
            sum += w1[i];
        }
        for (double& w : w1) w /= sum;
    }

    const double c1 = (k1 * max_val) * (k1 * max_val);
    const double c2 = (k2 * max_val) * (k2 * max_val);
    const int vw = W - window + 1, vh = H - window + 1;

    double acc = 0.0;
    size_t count = 0;
    // Separable weighted moments: horizontal pass into row buffers, then the
    // vertical pass evaluates one window position per step.
    std::vector<double> ha(static_cast<size_t>(H) * vw), hb(ha.size()), haa(ha.size()),
        hbb(ha.size()), hab(ha.size());
    for (uint32_t ch = 0; ch < a.channels; ++ch) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < vw; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < window; ++i) {
                    const double va = a.at(ch, y, x + i);
                    const double vb = b.at(ch, y, x + i);
                    sa += w1[i] * va;
                    sb += w1[i] * vb;
                    saa += w1[i] * va * va;
                    sbb += w1[i] * vb * vb;
                    sab += w1[i] * va * vb;
                }
                const size_t o = static_cast<size_t>(y) * vw + x;
                ha[o] = sa;
                hb[o] = sb;
                haa[o] = saa;
                hbb[o] = sbb;
                hab[o] = sab;
            }
        }
        for (int y = 0; y < vh; ++y) {
            for (int x = 0; x < vw; ++x) {
                double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
                for (int j = 0; j < window; ++j) {
                    const size_t o = static_cast<size_t>(y + j) * vw + x;
                    ma += w1[j] * ha[o];
                    mb += w1[j] * hb[o];
                    maa += w1[j] * haa[o];
                    mbb += w1[j] * hbb[o];
                    mab += w1[j] * hab[o];
                }
                const double va = maa - ma * ma;
                const double vb = mbb - mb * mb;
                const double cov = mab - ma * mb;
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return acc / static_cast<double>(count);
}

// ---- Segmentation metrics -----------------------------------------------------------

ConfusionCounts confusion(const Tile& pred, const Tile& gt) {
    if (!pred.same_shape(gt)) throw ShapeError("confusion requires identically shaped masks");
    if (pred.kind != TileKind::Mask || gt.kind != TileKind::Mask)
        throw KindError("confusion requires MASK tiles");
    validate_tile(pred);
    validate_tile(gt);
    ConfusionCounts c;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0.0f;
        const bool g = gt.data[i] != 0.0f;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

namespace {

ClassMetrics class_metrics(const ConfusionCounts& c) {
    // "Absent" means the class occurs in neither prediction nor ground truth;
    // by convention its metrics are perfect. Any other zero denominator means
    // an error exists and scores 0.
    const bool absent = (c.tp + c.fp + c.fn) == 0;
    ClassMetrics m;
    m.precision = (c.tp + c.fp) ? static_cast<double>(c.tp) / (c.tp + c.fp) : (absent ? 1.0 : 0.0);
    m.recall = (c.tp + c.fn) ? static_cast<double>(c.tp) / (c.tp + c.fn) : (absent ? 1.0 : 0.0);
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    m.iou = (c.tp + c.fp + c.fn) ? static_cast<double>(c.tp) / (c.tp + c.fp + c.fn) : 1.0;
    return m;
}

}  // namespace

SegMetrics seg_metrics(const ConfusionCounts& counts) {
    SegMetrics m;
    m.cls0 = class_metrics(counts.for_class(0));
    m.cls1 = class_metrics(counts.for_class(1));
    m.accuracy = counts.total()
                     ? static_cast<double>(counts.tp + counts.tn) / counts.total()
                     : 1.0;
    return m;
}

// ---- Water segmenters ---------------------------------------------------------------

Tile segment_water(const Tile& stack, uint32_t channel, float threshold) {
    if (channel >= stack.channels)
        throw ArgumentError("segmentation channel " + std::to_string(channel) +
                            " out of range for " + std::to_string(stack.channels) +
                            "-channel stack");
    Tile mask(stack.width, stack.height, 1, TileKind::Mask);
    for (uint32_t y = 0; y < stack.height; ++y)
        for (uint32_t x = 0; x < stack.width; ++x)
            mask.at(0, y, x) = stack.at(channel, y, x) < threshold ? 1.0f : 0.0f;
    return mask;
}

SegmenterModel::SegmenterModel(int channels_, int hidden_)
    : channels(channels_), hidden(hidden_),
      c1("seg.c1", channels_, hidden_, 3),
      c2("seg.c2", hidden_, hidden_, 3),
      c3("seg.c3", hidden_, 1, 3) {
    if (channels_ < 1 || hidden_ < 1) throw ConfigError("segmenter dims must be positive");
}

void SegmenterModel::init(RngStream& rng) {
    c1.init(rng);
    c2.init(rng);
    c3.init(rng);
}

std::vector<nn::Param*> SegmenterModel::params() {
    return {&c1.weight, &c1.bias, &c2.weight, &c2.bias, &c3.weight, &c3.bias};
}

nn::Tensor SegmenterModel::logits(const nn::Tensor& x) const {
    nn::ReLU relu;
    return c3.apply(relu.apply(c2.apply(relu.apply(c1.apply(x)))));
}

namespace {

nn::Tensor tile_to_tensor(const Tile& t) {
    nn::Tensor x(t.channels, t.height, t.width);
    for (size_t i = 0; i < t.data.size(); ++i) x.v[i] = t.data[i];
    return x;
}

double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

SegTrainResult train_segmenter(const std::vector<Tile>& inputs, const std::vector<Tile>& masks,
                               const SegTrainConfig& config) {
    if (inputs.empty() || inputs.size() != masks.size())
        throw ArgumentError("segmenter training needs equal non-empty input and mask lists");
    if (config.epochs < 1 || !(config.lr > 0.0))
        throw ConfigError("segmenter config needs positive epochs and lr");
    const uint32_t C = inputs.front().channels;
    for (size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].channels != C) throw ShapeError("segmenter corpus channel mismatch");
        if (masks[i].kind != TileKind::Mask) throw KindError("segmenter targets must be MASK");
        if (masks[i].channels != 1 || masks[i].width != inputs[i].width ||
            masks[i].height != inputs[i].height)
            throw ShapeError("mask dims must match the input stack");
    }

    SegmenterModel model(static_cast<int>(C), config.hidden);
    RngStream rng(config.seed);
    model.init(rng);
    std::vector<nn::Param*> params = model.params();
    nn::Adam opt(config.lr);
    nn::ReLU relu1, relu2;

    std::vector<double> curve;
    curve.reserve(config.epochs);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (size_t i = 0; i < inputs.size(); ++i) {
            const nn::Tensor x = tile_to_tensor(inputs[i]);
            nn::Tensor h1 = relu1.train_forward(model.c1.train_forward(x));
            nn::Tensor h2 = relu2.train_forward(model.c2.train_forward(h1));
            nn::Tensor z = model.c3.train_forward(h2);

            // Logistic loss with the numerically stable softplus form.
            const double inv_n = 1.0 / static_cast<double>(z.size());
            nn::Tensor dz(z.c, z.h, z.w);
            double loss = 0.0;
            for (size_t e = 0; e < z.v.size(); ++e) {
                const double zi = z.v[e];
                const double mi = masks[i].data[e];
                loss += std::max(zi, 0.0) - zi * mi + std::log1p(std::exp(-std::abs(zi)));
                dz.v[e] = (sigmoid(zi) - mi) * inv_n;
            }
            loss *= inv_n;
            if (!std::isfinite(loss)) throw TrainingError("segmenter loss is not finite");
            loss_sum += loss;

            for (nn::Param* p : params) p->zero_grad();
            nn::Tensor g = model.c3.backward(dz);
            g = model.c2.backward(relu2.backward(g));
            model.c1.backward(relu1.backward(g));
            opt.step(params);
        }
        curve.push_back(loss_sum / static_cast<double>(inputs.size()));
    }
    return SegTrainResult{std::move(model), std::move(curve)};
}

Tile segment_water(const Tile& stack, const SegmenterModel& model) {
    if (static_cast<int>(stack.channels) != model.channels)
        throw ShapeError("stack channels do not match the segmenter model");
    const nn::Tensor z = model.logits(tile_to_tensor(stack));
    Tile mask(stack.width, stack.height, 1, TileKind::Mask);
    for (size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = z.v[i] > 0.0 ? 1.0f : 0.0f;
    return mask;
}

// ---- Report tables ---------------------------------------------------------------------

ReportRow translation_row(const std::string& label, double psnr_db, double ssim_val) {
    return ReportRow{label, {{"psnr", psnr_db}, {"ssim", ssim_val}}};
}

ReportRow segmentation_row(const std::string& label, const SegMetrics& m) {
    return ReportRow{label,
                     {{"precision0", m.cls0.precision},
                      {"recall0", m.cls0.recall},
                      {"f1_0", m.cls0.f1},
                      {"iou0", m.cls0.iou},
                      {"precision1", m.cls1.precision},
                      {"recall1", m.cls1.recall},
                      {"f1_1", m.cls1.f1},
                      {"iou1", m.cls1.iou},
                      {"accuracy", m.accuracy}}};
}

namespace {

std::string shortest_repr(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fixed_repr(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 4);
    return std::string(buf, res.ptr);
}

}  // namespace

ReportTable report_table(const std::vector<ReportRow>& rows) {
    std::vector<std::string> keys;
    if (!rows.empty())
        for (const auto& [k, v] : rows.front().metrics) keys.push_back(k);
    for (const ReportRow& r : rows) {
        if (r.label.find(',') != std::string::npos || r.label.find('\n') != std::string::npos)
            throw ArgumentError("report label must not contain commas or newlines");
        if (r.metrics.size() != keys.size())
            throw ArgumentError("report rows carry mixed metric keys");
        for (size_t i = 0; i < keys.size(); ++i)
            if (r.metrics[i].first != keys[i])
                throw ArgumentError("report rows carry mixed metric keys");
    }

    std::string csv = "label";
    for (const std::string& k : keys) csv += "," + k;
    csv += "\n";
    for (const ReportRow& r : rows) {
        csv += r.label;
        for (const auto& [k, v] : r.metrics) csv += "," + shortest_repr(v);
        csv += "\n";
    }

    // Aligned text: label column left-justified, numbers right-justified.
    std::vector<size_t> widths;
    widths.push_back(std::string("label").size());
    for (const ReportRow& r : rows) widths[0] = std::max(widths[0], r.label.size());
    for (size_t i = 0; i < keys.size(); ++i) {
        size_t w = keys[i].size();
        for (const ReportRow& r : rows) w = std::max(w, fixed_repr(r.metrics[i].second).size());
        widths.push_back(w);
    }
    std::ostringstream text;
    text << std::left;
    text.width(static_cast<std::streamsize>(widths[0]));
    text << "label";
    for (size_t i = 0; i < keys.size(); ++i) {
        text << "  ";
        text << std::right;
        text.width(static_cast<std::streamsize>(widths[i + 1]));
        text << keys[i];
    }
    text << "\n";
    for (const ReportRow& r : rows) {
        text << std::left;
        text.width(static_cast<std::streamsize>(widths[0]));
        text << r.label;
        for (size_t i = 0; i < keys.size(); ++i) {
            text << "  ";
            text << std::right;
            text.width(static_cast<std::streamsize>(widths[i + 1]));
            text << fixed_repr(r.metrics[i].second);
        }
        text << "\n";
    }
    return ReportTable{text.str(), csv};
}

std::vector<ReportRow> parse_report_csv(const std::string& csv) {
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : csv) {
        if (ch == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    if (lines.empty()) throw FormatError("empty report CSV");

    auto split = [](const std::string& line) {
        std::vector<std::string> fields;
        std::string f;
        for (char ch : line) {
            if (ch == ',') {
                fields.push_back(f);
                f.clear();
            } else {
                f += ch;
            }
        }
        fields.push_back(f);
        return fields;
    };

    const std::vector<std::string> header = split(lines[0]);
    if (header.empty() || header[0] != "label")
        throw FormatError("report CSV header must start with 'label'");

    std::vector<ReportRow> rows;
    for (size_t li = 1; li < lines.size(); ++li) {
        const std::vector<std::string> fields = split(lines[li]);
        if (fields.size() != header.size())
            throw FormatError("report CSV row has wrong field count");
        ReportRow row;
        row.label = fields[0];
        for (size_t i = 1; i < fields.size(); ++i) {
            double v = 0.0;
            const auto res =
                std::from_chars(fields[i].data(), fields[i].data() + fields[i].size(), v);
            if (res.ec != std::errc() || res.ptr != fields[i].data() + fields[i].size())
                throw FormatError("report CSV value is not a number: " + fields[i]);
            row.metrics.emplace_back(header[i], v);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace dse
