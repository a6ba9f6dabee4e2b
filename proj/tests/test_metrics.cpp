#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "dse/error.hpp"
#include "dse/metrics.hpp"
#include "dse/rng.hpp"
#include "dse/synthdata.hpp"
#include "dse/tile.hpp"

using namespace dse;

namespace {

Tile random_unit(uint32_t w, uint32_t h, uint32_t c, uint64_t seed) {
    Tile t(w, h, c, TileKind::EoRgb);
    RngStream rng(seed);
    for (auto& v : t.data) v = static_cast<float>(rng.uniform01());
    return t;
}

// Direct per-window SSIM: 2-D Gaussian weights, explicit double loops, no
// separable passes. Deliberately written as differently as possible from
// the library implementation.
double ssim_reference(const Tile& a, const Tile& b, double max_val, int window, double sigma,
                      double k1, double k2) {
    const int half = window / 2;
    std::vector<double> g(static_cast<size_t>(window) * window);
    double gsum = 0;
    for (int y = 0; y < window; ++y)
        for (int x = 0; x < window; ++x) {
            double dy = y - half, dx = x - half;
            double w = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            g[static_cast<size_t>(y) * window + x] = w;
            gsum += w;
        }
    for (auto& w : g) w /= gsum;

    const double c1 = (k1 * max_val) * (k1 * max_val);
    const double c2 = (k2 * max_val) * (k2 * max_val);
    double total = 0;
    size_t count = 0;
    for (uint32_t ch = 0; ch < a.channels; ++ch)
        for (uint32_t cy = half; cy + half < a.height; ++cy)
            for (uint32_t cx = half; cx + half < a.width; ++cx) {
                double ma = 0, mb = 0;
                for (int y = 0; y < window; ++y)
                    for (int x = 0; x < window; ++x) {
                        double w = g[static_cast<size_t>(y) * window + x];
                        ma += w * a.at(ch, cy + y - half, cx + x - half);
                        mb += w * b.at(ch, cy + y - half, cx + x - half);
                    }
                double va = 0, vb = 0, cov = 0;
                for (int y = 0; y < window; ++y)
                    for (int x = 0; x < window; ++x) {
                        double w = g[static_cast<size_t>(y) * window + x];
                        double da = a.at(ch, cy + y - half, cx + x - half) - ma;
                        double db = b.at(ch, cy + y - half, cx + x - half) - mb;
                        va += w * da * da;
                        vb += w * db * db;
                        cov += w * da * db;
                    }
                double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                           ((ma * ma + mb * mb + c1) * (va + vb + c2));
                total += s;
                ++count;
            }
    return total / static_cast<double>(count);
}

Tile mask_of(std::vector<float> v, uint32_t w, uint32_t h) {
    Tile t(w, h, 1, TileKind::Mask);
    t.data = std::move(v);
    return t;
}

}  // namespace

TEST_CASE("metrics: psnr anchor values and error paths") {
    Tile a = random_unit(8, 8, 3, 1);
    CHECK(psnr(a, a, 1.0) == 99.0);

    Tile zeros(8, 8, 1, TileKind::EoRgb, 0.0f);
    Tile ones(8, 8, 1, TileKind::EoRgb, 1.0f);
    CHECK(psnr(zeros, ones, 1.0) == doctest::Approx(0.0).epsilon(1e-12));

    Tile halves(8, 8, 1, TileKind::EoRgb, 0.5f);
    CHECK(psnr(zeros, halves, 1.0) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-9));
    CHECK(psnr(halves, zeros, 1.0) == psnr(zeros, halves, 1.0));  // symmetry

    Tile small(4, 4, 1, TileKind::EoRgb);
    CHECK_THROWS_AS(psnr(zeros, small, 1.0), ShapeError);
    CHECK_THROWS_AS(psnr(zeros, halves, 0.0), ArgumentError);
    Tile empty;
    CHECK_THROWS_AS(psnr(empty, empty, 1.0), ShapeError);
}

TEST_CASE("metrics: ssim identities and the constant-shift closed form") {
    Tile a = random_unit(16, 16, 1, 2);
    CHECK(ssim(a, a, 1.0) == 1.0);

    const double c = 0.4, d = 0.2;
    Tile ca(16, 16, 1, TileKind::EoRgb, static_cast<float>(c));
    Tile cb(16, 16, 1, TileKind::EoRgb, static_cast<float>(c + d));
    double c1 = 0.01 * 0.01;
    double cf = static_cast<double>(static_cast<float>(c));
    double cdf = static_cast<double>(static_cast<float>(c + d));
    double want = (2 * cf * cdf + c1) / (cf * cf + cdf * cdf + c1);
    CHECK(ssim(ca, cb, 1.0) == doctest::Approx(want).epsilon(1e-9));

    Tile tiny(8, 8, 1, TileKind::EoRgb);
    CHECK_THROWS_AS(ssim(tiny, tiny, 1.0), ShapeError);
    CHECK_THROWS_AS(ssim(a, tiny, 1.0), ShapeError);
}

TEST_CASE("metrics: ssim matches the naive double-loop oracle") {
    Tile a = random_unit(64, 64, 1, 3);
    Tile b = random_unit(64, 64, 1, 4);
    double fast = ssim(a, b, 1.0);
    double slow = ssim_reference(a, b, 1.0, 11, 1.5, 0.01, 0.03);
    CHECK(std::abs(fast - slow) < 1e-8);

    // Correlated pair (b = blurred a) for a less adversarial value range.
    Tile c = a;
    for (uint32_t y = 1; y + 1 < 64; ++y)
        for (uint32_t x = 1; x + 1 < 64; ++x)
            c.at(0, y, x) = (a.at(0, y, x) + a.at(0, y, x + 1) + a.at(0, y + 1, x)) / 3.0f;
    CHECK(std::abs(ssim(a, c, 1.0) - ssim_reference(a, c, 1.0, 11, 1.5, 0.01, 0.03)) < 1e-8);

    // Multi-channel averaging and symmetry.
    Tile m1 = random_unit(32, 32, 3, 5);
    Tile m2 = random_unit(32, 32, 3, 6);
    CHECK(std::abs(ssim(m1, m2, 1.0) - ssim_reference(m1, m2, 1.0, 11, 1.5, 0.01, 0.03)) < 1e-8);
    CHECK(std::abs(ssim(m1, m2, 1.0) - ssim(m2, m1, 1.0)) < 1e-12);
}

TEST_CASE("metrics: confusion counts and the hand-counted example") {
    Tile pred = mask_of({1, 1, 0, 0}, 2, 2);
    Tile gt = mask_of({1, 0, 0, 0}, 2, 2);
    auto counts = confusion(pred, gt);
    CHECK(counts.tp == 1);
    CHECK(counts.fp == 1);
    CHECK(counts.fn == 0);
    CHECK(counts.tn == 2);

    auto m = seg_metrics(counts);
    CHECK(m.cls1.precision == doctest::Approx(0.5));
    CHECK(m.cls1.recall == doctest::Approx(1.0));
    CHECK(m.cls1.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(m.cls1.iou == doctest::Approx(0.5));
    CHECK(m.accuracy == doctest::Approx(0.75));
    CHECK(m.cls0.precision == doctest::Approx(1.0));
    CHECK(m.cls0.recall == doctest::Approx(2.0 / 3.0));
    CHECK(m.cls0.f1 == doctest::Approx(0.8));
    CHECK(m.cls0.iou == doctest::Approx(2.0 / 3.0));

    Tile non_binary = mask_of({0.5f, 0, 0, 0}, 2, 2);
    CHECK_THROWS_AS(confusion(non_binary, gt), KindError);
    Tile wrong_kind(2, 2, 1, TileKind::SarLinear, 0.0f);
    CHECK_THROWS_AS(confusion(wrong_kind, gt), KindError);
    Tile big = mask_of(std::vector<float>(9, 0.0f), 3, 3);
    CHECK_THROWS_AS(confusion(big, gt), ShapeError);
}

TEST_CASE("metrics: perfect prediction scores 1.0 on everything") {
    Tile gt = mask_of({1, 0, 1, 1, 0, 0}, 3, 2);
    auto m = seg_metrics(confusion(gt, gt));
    CHECK(m.cls0.precision == 1.0);
    CHECK(m.cls0.recall == 1.0);
    CHECK(m.cls0.f1 == 1.0);
    CHECK(m.cls0.iou == 1.0);
    CHECK(m.cls1.precision == 1.0);
    CHECK(m.cls1.recall == 1.0);
    CHECK(m.cls1.f1 == 1.0);
    CHECK(m.cls1.iou == 1.0);
    CHECK(m.accuracy == 1.0);
}

TEST_CASE("metrics: zero-denominator conventions") {
    // Class absent from both: its metrics are 1 by convention.
    Tile none = mask_of({0, 0, 0, 0}, 2, 2);
    auto absent = seg_metrics(confusion(none, none));
    CHECK(absent.cls1.precision == 1.0);
    CHECK(absent.cls1.recall == 1.0);
    CHECK(absent.cls1.f1 == 1.0);
    CHECK(absent.cls1.iou == 1.0);
    CHECK(absent.accuracy == 1.0);

    // Class present in gt, never predicted: precision denominator is 0 with
    // errors on the class, so it reads 0.
    Tile gt_some = mask_of({1, 1, 0, 0}, 2, 2);
    auto missed = seg_metrics(confusion(none, gt_some));
    CHECK(missed.cls1.precision == 0.0);
    CHECK(missed.cls1.recall == 0.0);
    CHECK(missed.cls1.f1 == 0.0);
    CHECK(missed.cls1.iou == 0.0);
    CHECK(missed.accuracy == doctest::Approx(0.5));
}

TEST_CASE("metrics: seg metric identities hold on random masks") {
    RngStream rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<float> pv(36), gv(36);
        for (auto& v : pv) v = rng.uniform01() < 0.4 ? 1.0f : 0.0f;
        for (auto& v : gv) v = rng.uniform01() < 0.4 ? 1.0f : 0.0f;
        auto counts = confusion(mask_of(pv, 6, 6), mask_of(gv, 6, 6));
        auto m = seg_metrics(counts);

        for (const auto& cls : {m.cls0, m.cls1}) {
            if (cls.precision + cls.recall > 0)
                CHECK(cls.f1 == doctest::Approx(2 * cls.precision * cls.recall /
                                                (cls.precision + cls.recall)));
            CHECK(cls.iou <= cls.f1 + 1e-12);
        }
        CHECK(m.accuracy == doctest::Approx(static_cast<double>(counts.tp + counts.tn) /
                                            counts.total()));

        // Complementing both masks swaps the classes.
        std::vector<float> pc(36), gc(36);
        for (size_t i = 0; i < 36; ++i) {
            pc[i] = 1.0f - pv[i];
            gc[i] = 1.0f - gv[i];
        }
        auto swapped = confusion(mask_of(pc, 6, 6), mask_of(gc, 6, 6));
        CHECK(swapped.tp == counts.tn);
        CHECK(swapped.tn == counts.tp);
        CHECK(swapped.fp == counts.fn);
        CHECK(swapped.fn == counts.fp);
    }
}

TEST_CASE("metrics: threshold water segmentation") {
    Tile bright(8, 8, 1, TileKind::SarLinear, 0.5f);
    Tile none = segment_water(bright, 0, 0.2f);
    CHECK(none.kind == TileKind::Mask);
    for (auto v : none.data) CHECK(v == 0.0f);

    // The generator guarantees water (0.05) < threshold < land (>= 0.3) on
    // clean SAR, so thresholding recovers the mask exactly.
    SceneSpec spec;
    spec.size = 32;
    spec.seed = 800;
    auto scene = gen_scene(spec);
    Tile pred = segment_water(scene.sar_clean, 0, 0.2f);
    auto m = seg_metrics(confusion(pred, scene.mask));
    CHECK(m.cls1.iou == 1.0);

    CHECK_THROWS_AS(segment_water(bright, 3, 0.2f), ArgumentError);
}

TEST_CASE("metrics: trained segmenter separates clean synthetic scenes") {
    std::vector<Tile> inputs, masks;
    for (int i = 0; i < 12; ++i) {
        SceneSpec spec;
        spec.size = 16;
        spec.seed = 850 + i;
        auto scene = gen_scene(spec);
        inputs.push_back(scene.sar_clean);
        masks.push_back(scene.mask);
    }
    SegTrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = 4;
    auto result = train_segmenter(inputs, masks, cfg);
    REQUIRE(!result.loss_curve.empty());
    CHECK(result.loss_curve.back() < result.loss_curve.front());

    SceneSpec spec;
    spec.size = 32;
    spec.seed = 899;
    auto held_out = gen_scene(spec);
    Tile pred = segment_water(held_out.sar_clean, result.model);
    auto m = seg_metrics(confusion(pred, held_out.mask));
    INFO("held-out IoU ", m.cls1.iou);
    CHECK(m.cls1.iou > 0.9);

    auto again = train_segmenter(inputs, masks, cfg);
    CHECK(result.loss_curve == again.loss_curve);
    CHECK_THROWS_AS(train_segmenter({}, {}, cfg), ArgumentError);
}

TEST_CASE("metrics: report tables render and round-trip") {
    auto empty = report_table({});
    CHECK(empty.csv == "label\n");
    CHECK(!empty.text.empty());

    ReportRow row;
    row.label = "x";
    row.metrics = {{"psnr", 6.0206}};
    auto single = report_table({row});
    CHECK(single.csv == "label,psnr\nx,6.0206\n");

    std::vector<ReportRow> rows;
    RngStream rng(5);
    for (int i = 0; i < 3; ++i) {
        ReportRow r;
        r.label = "row" + std::to_string(i);
        r.metrics = {{"psnr", rng.normal() * 20.0}, {"ssim", rng.uniform01()}};
        rows.push_back(r);
    }
    auto table = report_table(rows);
    auto parsed = parse_report_csv(table.csv);
    REQUIRE(parsed.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(parsed[i].label == rows[i].label);
        REQUIRE(parsed[i].metrics.size() == rows[i].metrics.size());
        for (size_t j = 0; j < rows[i].metrics.size(); ++j) {
            CHECK(parsed[i].metrics[j].first == rows[i].metrics[j].first);
            CHECK(parsed[i].metrics[j].second == rows[i].metrics[j].second);  // bit-exact
        }
    }

    ReportRow mixed;
    mixed.label = "bad";
    mixed.metrics = {{"psnr", 1.0}, {"iou", 0.5}};
    CHECK_THROWS_AS(report_table({rows[0], mixed}), ArgumentError);

    ReportRow comma;
    comma.label = "a,b";
    comma.metrics = {{"psnr", 1.0}};
    CHECK_THROWS_AS(report_table({comma}), ArgumentError);

    CHECK_THROWS_AS(parse_report_csv("nonsense\n"), FormatError);
    CHECK_THROWS_AS(parse_report_csv("label,psnr\nx,notanumber\n"), FormatError);

    auto seg_row = segmentation_row("seg", seg_metrics(ConfusionCounts{4, 1, 1, 10}));
    REQUIRE(seg_row.metrics.size() == 9);
    CHECK(seg_row.metrics[0].first == "precision0");
    CHECK(seg_row.metrics[8].first == "accuracy");
    auto tr = translation_row("t", 30.0, 0.9);
    CHECK(tr.metrics[0].first == "psnr");
    CHECK(tr.metrics[1].first == "ssim");
}
