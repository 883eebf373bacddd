#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>

#include "labelprop/eval.hpp"
#include "labelprop/flow_io.hpp"
#include "labelprop/manifest.hpp"
#include "labelprop/rng.hpp"
#include "labelprop/synth_world.hpp"

using namespace labelprop;
namespace fs = std::filesystem;

namespace {

// Independent brute-force mIoU oracle: direct per-pixel TP/FP/FN counting
// with no confusion matrix involved.
double brute_force_miou(const LabelMap& pred, const LabelMap& gt, IgnorePolicy policy) {
    const int C = gt.num_classes;
    const int slots = C + 1;
    std::vector<std::uint64_t> tp(slots, 0), fp(slots, 0), fn(slots, 0);
    for (std::size_t p = 0; p < gt.pixels(); ++p) {
        const int g = gt.data[p] == gt.ignore_id ? C : gt.data[p];
        const int q = pred.data[p] == pred.ignore_id ? C : pred.data[p];
        if (policy == IgnorePolicy::Excluded && g == C) continue;
        if (g == q) {
            ++tp[g];
        } else {
            ++fn[g];
            ++fp[q];
        }
    }
    const int upto = policy == IgnorePolicy::AsClass ? slots : C;
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < upto; ++c) {
        const std::uint64_t uni = tp[c] + fp[c] + fn[c];
        if (uni == 0) continue;
        sum += static_cast<double>(tp[c]) / static_cast<double>(uni);
        ++present;
    }
    return present ? sum / present : 0.0;
}

LabelMap random_labels(Rng& rng, int w, int h, int C, double ignore_rate) {
    LabelMap m(w, h, C);
    for (auto& id : m.data)
        id = rng.bernoulli(ignore_rate) ? m.ignore_id
                                        : static_cast<ClassId>(rng.uniform_int(0, C - 1));
    return m;
}

} // namespace

TEST_CASE("accumulate: perfect predictions hit only the diagonal") {
    Rng rng(3);
    const LabelMap gt = random_labels(rng, 8, 8, 4, 0.1);
    ConfusionMatrix cm(4);
    accumulate(cm, gt, gt);
    CHECK(cm.total() == 64);
    for (int g = 0; g <= 4; ++g)
        for (int p = 0; p <= 4; ++p)
            if (g != p) CHECK(cm.at(g, p) == 0);
}

TEST_CASE("accumulate: hand-counted 2x2 case and the 7/12 mIoU") {
    LabelMap pred(2, 2, 2), gt(2, 2, 2);
    pred.at(0, 0) = 0;
    pred.at(1, 0) = 0;
    pred.at(0, 1) = 1;
    pred.at(1, 1) = 1;
    gt.at(0, 0) = 0;
    gt.at(1, 0) = 1;
    gt.at(0, 1) = 1;
    gt.at(1, 1) = 1;
    ConfusionMatrix cm(2);
    accumulate(cm, pred, gt);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(1, 0) == 1);
    CHECK(cm.at(1, 1) == 2);
    CHECK(*iou(cm, 0) == Catch::Approx(0.5));
    CHECK(*iou(cm, 1) == Catch::Approx(2.0 / 3.0));
    CHECK(miou(cm) == Catch::Approx(7.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("identical maps give mIoU exactly 1") {
    Rng rng(5);
    const LabelMap gt = random_labels(rng, 16, 16, 5, 0.05);
    ConfusionMatrix cm(5);
    accumulate(cm, gt, gt);
    CHECK(miou(cm) == 1.0);
}

TEST_CASE("accumulation is order-independent") {
    Rng rng(6);
    const LabelMap pred = random_labels(rng, 8, 8, 3, 0.1);
    const LabelMap gt = random_labels(rng, 8, 8, 3, 0.1);
    ConfusionMatrix forward(3);
    accumulate(forward, pred, gt);
    // Reverse pixel visitation, accumulated by hand.
    ConfusionMatrix reversed(3);
    for (std::size_t i = pred.pixels(); i-- > 0;) {
        LabelMap p1(1, 1, 3), g1(1, 1, 3);
        p1.data[0] = pred.data[i];
        g1.data[0] = gt.data[i];
        accumulate(reversed, p1, g1);
    }
    CHECK(forward.counts == reversed.counts);
}

TEST_CASE("engine mIoU equals the brute-force oracle exactly on 100 random pairs") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const LabelMap gt = random_labels(rng, 16, 16, 6, 0.15);
        const LabelMap pred = random_labels(rng, 16, 16, 6, 0.15);
        ConfusionMatrix cm(6);
        accumulate(cm, pred, gt);
        CHECK(miou(cm) == brute_force_miou(pred, gt, IgnorePolicy::AsClass));
        CHECK(miou(as_excluded(cm)) == brute_force_miou(pred, gt, IgnorePolicy::Excluded));

        ConfusionMatrix excl(6, IgnorePolicy::Excluded);
        accumulate(excl, pred, gt);
        CHECK(miou(excl) == brute_force_miou(pred, gt, IgnorePolicy::Excluded));
    }
}

TEST_CASE("merge is associative and commutative over random pixel partitions") {
    Rng rng(8);
    const LabelMap pred = random_labels(rng, 16, 16, 4, 0.1);
    const LabelMap gt = random_labels(rng, 16, 16, 4, 0.1);
    // Partition pixels into three disjoint matrices.
    ConfusionMatrix parts[3] = {ConfusionMatrix(4), ConfusionMatrix(4), ConfusionMatrix(4)};
    for (std::size_t p = 0; p < pred.pixels(); ++p) {
        LabelMap p1(1, 1, 4), g1(1, 1, 4);
        p1.data[0] = pred.data[p];
        g1.data[0] = gt.data[p];
        accumulate(parts[rng.uniform_int(0, 2)], p1, g1);
    }
    ConfusionMatrix whole(4);
    accumulate(whole, pred, gt);
    const ConfusionMatrix ab_c = merge(merge(parts[0], parts[1]), parts[2]);
    const ConfusionMatrix a_bc = merge(parts[0], merge(parts[1], parts[2]));
    const ConfusionMatrix cba = merge(parts[2], merge(parts[1], parts[0]));
    CHECK(ab_c.counts == whole.counts);
    CHECK(a_bc.counts == whole.counts);
    CHECK(cba.counts == whole.counts);
}

TEST_CASE("evaluation is invariant under consistent class relabeling") {
    Rng rng(9);
    const LabelMap pred = random_labels(rng, 12, 12, 5, 0.1);
    const LabelMap gt = random_labels(rng, 12, 12, 5, 0.1);
    // permutation of class ids
    const std::vector<ClassId> perm = {3, 0, 4, 1, 2};
    LabelMap pred2 = pred, gt2 = gt;
    for (auto& id : pred2.data)
        if (id != pred2.ignore_id) id = perm[id];
    for (auto& id : gt2.data)
        if (id != gt2.ignore_id) id = perm[id];
    ConfusionMatrix a(5), b(5);
    accumulate(a, pred, gt);
    accumulate(b, pred2, gt2);
    CHECK(miou(a) == Catch::Approx(miou(b)).epsilon(1e-12));
    CHECK(miou(as_excluded(a)) == Catch::Approx(miou(as_excluded(b))).epsilon(1e-12));
}

TEST_CASE("horizon_curve bookkeeping: single sequence, K=1 yields exactly 2 offsets") {
    const Sequence seq = generate(standard_benchmark(1));
    const OracleSet perfect;
    const HorizonReport report =
        horizon_curve({&seq}, {Method::WarpInpaint}, 1, perfect, nullptr, GateConfig{});
    REQUIRE(report.matrices.size() == 1);
    CHECK(report.matrices[0].size() == 2);
    CHECK(report.matrices[0].count(1) == 1);
    CHECK(report.matrices[0].count(-1) == 1);
}

TEST_CASE("horizon_curve metrics are identical across thread counts") {
    const Sequence a = generate(standard_benchmark(1));
    const Sequence b = generate(standard_benchmark(2));
    OracleSet noise;
    noise.motion.gaussian_sigma = 0.5;
    noise.semantic.confusion_rate = 0.1;
    noise.semantic.confusion_table = make_confusion_table(8, 5);
    const std::vector<Method> methods{Method::MotionOnly, Method::WarpInpaint};
    const HorizonReport r1 = horizon_curve({&a, &b}, methods, 4, noise, nullptr, GateConfig{}, 1);
    const HorizonReport r2 = horizon_curve({&a, &b}, methods, 4, noise, nullptr, GateConfig{}, 3);
    for (std::size_t m = 0; m < methods.size(); ++m)
        for (const auto& [off, cm] : r1.matrices[m])
            CHECK(cm.counts == r2.matrices[m].at(off).counts);
}

TEST_CASE("emit_report: row arithmetic, determinism, one polyline per method") {
    const Sequence seq = generate(standard_benchmark(4));
    const OracleSet perfect;
    const HorizonReport report = horizon_curve({&seq}, {Method::WarpInpaint, Method::SemanticOnly},
                                               2, perfect, nullptr, GateConfig{});
    const fs::path dir = fs::temp_directory_path() / "labelprop_report";
    fs::remove_all(dir);
    emit_report(report, dir);

    const auto horizon_bytes = detail::read_file_bytes(dir / "horizon.csv");
    const std::string horizon_csv(horizon_bytes.begin(), horizon_bytes.end());
    const std::size_t rows = std::count(horizon_csv.begin(), horizon_csv.end(), '\n');
    // methods x offsets x present-classes + header
    std::size_t expected = 1;
    for (std::size_t m = 0; m < report.methods.size(); ++m)
        for (const auto& [off, cm] : report.matrices[m])
            for (int c = 0; c <= report.num_classes; ++c)
                if (iou(cm, c)) ++expected;
    CHECK(rows == expected);

    emit_report(report, dir); // re-emission is byte-identical
    const auto again = detail::read_file_bytes(dir / "horizon.csv");
    CHECK(again == horizon_bytes);

    const auto svg_bytes = detail::read_file_bytes(dir / "curve.svg");
    const std::string svg(svg_bytes.begin(), svg_bytes.end());
    std::size_t polylines = 0;
    for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos;
         pos = svg.find("<polyline", pos + 1))
        ++polylines;
    CHECK(polylines == report.methods.size());
}

TEST_CASE("report JSON round-trip preserves every count") {
    const Sequence seq = generate(standard_benchmark(6));
    OracleSet noise;
    noise.semantic.confusion_rate = 0.2;
    noise.semantic.confusion_table = make_confusion_table(8, 5);
    HorizonReport report =
        horizon_curve({&seq}, {Method::SemanticOnly}, 3, noise, nullptr, GateConfig{});
    report.config_echo = "{\"test\":true}";
    const fs::path path = fs::temp_directory_path() / "labelprop_report.json";
    save_report(report, path);
    const HorizonReport back = load_report(path);
    CHECK(back.horizon == report.horizon);
    CHECK(back.methods == report.methods);
    CHECK(back.config_echo == report.config_echo);
    for (const auto& [off, cm] : report.matrices[0])
        CHECK(back.matrices[0].at(off).counts == cm.counts);
}

TEST_CASE("tau sweep: zero tau equals semantic-only, duplicates identical, endpoints ordered") {
    std::vector<Sequence> seqs;
    for (std::uint64_t s = 0; s < 4; ++s) seqs.push_back(generate(standard_benchmark(s)));
    std::vector<const Sequence*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);

    OracleSet noise;
    noise.motion.gaussian_sigma = 0.5;
    noise.motion.block_dropout_rate = 0.05;
    noise.motion.seed = 77;
    noise.semantic.confusion_rate = 0.15;
    noise.semantic.boundary_erosion_px = 2;
    noise.semantic.thin_structure_miss_rate = 0.5;
    noise.semantic.thin_class_ids = {6};
    noise.semantic.confusion_table = make_confusion_table(8, 5);
    noise.semantic.seed = 78;

    const int K = 4;
    const auto rows = tau_sweep(ptrs, {0.0, 0.0, 0.05, 0.10, 1.8}, K, noise);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].miou_as_class == rows[1].miou_as_class); // duplicate taus identical

    const HorizonReport sem =
        horizon_curve(ptrs, {Method::SemanticOnly}, K, noise, nullptr, GateConfig{});
    CHECK(rows[0].miou_as_class ==
          Catch::Approx(grand_mean_miou(sem, 0, IgnorePolicy::AsClass)).epsilon(1e-12));

    // Monotone away from the degenerate endpoints: the blend beats both.
    CHECK(rows[2].miou_as_class >= rows[0].miou_as_class);
    CHECK(rows[3].miou_as_class >= rows[4].miou_as_class);
}
