#pragma once

// Quantitative comparison of propagation methods: pixel confusion matrices
// with selectable ignore policy, per-class IoU and mIoU, mIoU-vs-horizon
// curves, tau sweeps, and deterministic CSV/SVG report emission.

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "labelprop/errors.hpp"
#include "labelprop/flow_io.hpp"
#include "labelprop/grid.hpp"
#include "labelprop/propagation.hpp"
#include "labelprop/synth_world.hpp"

namespace labelprop {

enum class IgnorePolicy { AsClass, Excluded };

// (C+1) x (C+1) pixel counts indexed [gt][pred]; slot C holds ignore.
// Merging is elementwise addition, so accumulation is order-independent and
// parallel-safe via per-worker matrices.
struct ConfusionMatrix {
    int num_classes = 0;
    IgnorePolicy policy = IgnorePolicy::AsClass;
    std::vector<std::uint64_t> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int classes, IgnorePolicy pol = IgnorePolicy::AsClass)
        : num_classes(classes), policy(pol),
          counts(static_cast<std::size_t>(classes + 1) * (classes + 1), 0) {}

    int side() const { return num_classes + 1; }
    std::uint64_t at(int gt, int pred) const {
        return counts[static_cast<std::size_t>(gt) * side() + pred];
    }
    std::uint64_t& at(int gt, int pred) {
        return counts[static_cast<std::size_t>(gt) * side() + pred];
    }
    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (std::uint64_t c : counts) t += c;
        return t;
    }
};

inline void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt) {
    detail::require(pred.same_shape(gt), "accumulate: dimensions differ");
    detail::require(pred.num_classes == cm.num_classes && gt.num_classes == cm.num_classes,
                    "accumulate: class count mismatch");
    const int C = cm.num_classes;
    for (std::size_t p = 0; p < pred.pixels(); ++p) {
        const int g = (gt.data[p] == gt.ignore_id) ? C : gt.data[p];
        if (cm.policy == IgnorePolicy::Excluded && g == C) continue;
        const int q = (pred.data[p] == pred.ignore_id) ? C : pred.data[p];
        cm.at(g, q) += 1;
    }
}

inline ConfusionMatrix merge(const ConfusionMatrix& a, const ConfusionMatrix& b) {
    detail::require(a.num_classes == b.num_classes && a.policy == b.policy,
                    "merge: incompatible matrices");
    ConfusionMatrix out = a;
    for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += b.counts[i];
    return out;
}

// Reinterpret an as-class matrix under the excluded policy: ground-truth
// ignore pixels leave every sum.
inline ConfusionMatrix as_excluded(const ConfusionMatrix& cm) {
    ConfusionMatrix out = cm;
    out.policy = IgnorePolicy::Excluded;
    const int C = cm.num_classes;
    for (int pred = 0; pred <= C; ++pred) out.at(C, pred) = 0;
    return out;
}

// IoU of class slot c (c == num_classes addresses the ignore slot);
// absent classes (zero union) yield nullopt rather than 0.
inline std::optional<double> iou(const ConfusionMatrix& cm, int c) {
    const int side = cm.side();
    detail::require(c >= 0 && c < side, "iou: class out of range");
    const std::uint64_t tp = cm.at(c, c);
    std::uint64_t row = 0, col = 0;
    for (int i = 0; i < side; ++i) {
        row += cm.at(c, i);
        col += cm.at(i, c);
    }
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(uni);
}

// Mean over classes with nonzero union. The ignore slot participates only
// under the as-class policy.
inline double miou(const ConfusionMatrix& cm) {
    const int upto = cm.policy == IgnorePolicy::AsClass ? cm.num_classes + 1 : cm.num_classes;
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < upto; ++c) {
        if (const auto v = iou(cm, c)) {
            sum += *v;
            ++present;
        }
    }
    return present > 0 ? sum / present : 0.0;
}

// Fraction of non-ignore ground-truth pixels predicted correctly.
inline double pixel_accuracy(const LabelMap& pred, const LabelMap& gt) {
    detail::require(pred.same_shape(gt), "pixel_accuracy: dimensions differ");
    std::size_t hit = 0, valid = 0;
    for (std::size_t p = 0; p < gt.pixels(); ++p) {
        if (gt.data[p] == gt.ignore_id) continue;
        ++valid;
        if (pred.data[p] == gt.data[p]) ++hit;
    }
    return valid > 0 ? static_cast<double>(hit) / static_cast<double>(valid) : 0.0;
}

// ---------------------------------------------------------------------------
// Horizon curves
// ---------------------------------------------------------------------------

struct HorizonReport {
    int horizon = 0;
    int num_classes = 0;
    int sequence_count = 0;
    std::string config_echo;
    std::vector<std::string> methods;
    // One full as-class matrix per (method, signed offset).
    std::vector<std::map<int, ConfusionMatrix>> matrices;

    const ConfusionMatrix& at(std::size_t method_idx, int offset) const {
        return matrices[method_idx].at(offset);
    }
};

// Merged-matrix aggregate over the two signed offsets of one horizon step.
inline ConfusionMatrix abs_offset_matrix(const HorizonReport& report, std::size_t method_idx,
                                         int abs_offset) {
    return merge(report.at(method_idx, abs_offset), report.at(method_idx, -abs_offset));
}

inline double miou_at(const HorizonReport& report, std::size_t method_idx, int abs_offset,
                      IgnorePolicy policy) {
    const ConfusionMatrix cm = abs_offset_matrix(report, method_idx, abs_offset);
    return miou(policy == IgnorePolicy::AsClass ? cm : as_excluded(cm));
}

// Mean of the per-|offset| mIoU values: every horizon distance weighs
// equally regardless of how many pixels it contributed.
inline double grand_mean_miou(const HorizonReport& report, std::size_t method_idx,
                              IgnorePolicy policy) {
    double sum = 0.0;
    for (int k = 1; k <= report.horizon; ++k) sum += miou_at(report, method_idx, k, policy);
    return sum / report.horizon;
}

// Runs every method over every sequence and accumulates per-offset matrices.
// Work is split over (sequence, method) jobs; merge order is fixed, so the
// resulting metrics do not depend on the thread count.
inline HorizonReport horizon_curve(const std::vector<const Sequence*>& sequences,
                                   const std::vector<Method>& methods, int horizon,
                                   const OracleSet& oracles, const LabelRefiner* refiner = nullptr,
                                   const GateConfig& gate = {}, int threads = 1) {
    detail::require(!sequences.empty() && !methods.empty(), "horizon_curve: empty inputs");
    const int C = sequences.front()->config.num_classes;

    HorizonReport report;
    report.horizon = horizon;
    report.num_classes = C;
    report.sequence_count = static_cast<int>(sequences.size());
    for (Method m : methods) report.methods.push_back(method_name(m));
    report.matrices.resize(methods.size());
    for (auto& per_offset : report.matrices)
        for (int off = -horizon; off <= horizon; ++off)
            if (off != 0) per_offset.emplace(off, ConfusionMatrix(C));

    struct Job {
        std::size_t seq_idx, method_idx;
        std::map<int, ConfusionMatrix> result;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < sequences.size(); ++s)
        for (std::size_t m = 0; m < methods.size(); ++m) jobs.push_back({s, m, {}});

    auto run_job = [&](Job& job) {
        const Sequence& seq = *sequences[job.seq_idx];
        PropagateConfig cfg;
        cfg.horizon = horizon;
        cfg.method = methods[job.method_idx];
        cfg.gate = gate;
        // Decorrelate noise realizations across sequences: each sequence gets
        // its own oracle streams derived from its generator seed.
        OracleSet seq_oracles = oracles;
        seq_oracles.motion.seed = mix_seed(oracles.motion.seed, seq.config.seed);
        seq_oracles.semantic.seed = mix_seed(oracles.semantic.seed, seq.config.seed);
        const std::map<int, LabelMap> outputs =
            propagate(seq, seq.annotated_index, cfg, seq_oracles, refiner);
        for (const auto& [off, pred] : outputs) {
            ConfusionMatrix cm(C);
            accumulate(cm, pred, seq.labels[seq.annotated_index + off]);
            job.result.emplace(off, std::move(cm));
        }
    };

    const int workers = std::max(1, threads);
    if (workers == 1) {
        for (Job& job : jobs) run_job(job);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w]() {
                for (std::size_t i = w; i < jobs.size(); i += workers) run_job(jobs[i]);
            });
        for (std::thread& t : pool) t.join();
    }
    for (const Job& job : jobs)
        for (const auto& [off, cm] : job.result) {
            ConfusionMatrix& slot = report.matrices[job.method_idx].at(off);
            slot = merge(slot, cm);
        }
    return report;
}

// Warp-inpaint grand-mean mIoU per tau value.
struct TauSweepRow {
    double tau = 0.0;
    double miou_as_class = 0.0;
    double miou_excluded = 0.0;
};

inline std::vector<TauSweepRow> tau_sweep(const std::vector<const Sequence*>& sequences,
                                          const std::vector<double>& taus, int horizon,
                                          const OracleSet& oracles, int threads = 1) {
    detail::require(!taus.empty(), "tau_sweep: no tau values");
    std::vector<TauSweepRow> rows;
    for (double tau : taus) {
        GateConfig gate;
        gate.tau = static_cast<float>(tau);
        const HorizonReport report = horizon_curve(sequences, {Method::WarpInpaint}, horizon,
                                                   oracles, nullptr, gate, threads);
        rows.push_back({tau, grand_mean_miou(report, 0, IgnorePolicy::AsClass),
                        grand_mean_miou(report, 0, IgnorePolicy::Excluded)});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

} // namespace detail

// Writes horizon.csv (per-class IoU for every method and signed offset),
// summary.csv (per-|offset| and grand-mean mIoU under both ignore policies)
// and curve.svg (mIoU vs |offset| per method). Byte-deterministic.
inline void emit_report(const HorizonReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);

    std::string horizon_csv = "method,offset,class,iou\n";
    for (std::size_t m = 0; m < report.methods.size(); ++m) {
        for (const auto& [off, cm] : report.matrices[m]) {
            for (int c = 0; c <= report.num_classes; ++c) {
                const auto v = iou(cm, c);
                if (!v) continue; // absent classes stay absent
                const std::string cls =
                    (c == report.num_classes) ? "ignore" : std::to_string(c);
                horizon_csv += report.methods[m] + "," + std::to_string(off) + "," + cls + "," +
                               detail::fmt_double(*v) + "\n";
            }
        }
    }
    detail::write_text_file(out_dir / "horizon.csv", horizon_csv);

    std::string summary_csv = "method,abs_offset,miou_ignore_as_class,miou_ignore_excluded\n";
    for (std::size_t m = 0; m < report.methods.size(); ++m) {
        for (int k = 1; k <= report.horizon; ++k) {
            summary_csv += report.methods[m] + "," + std::to_string(k) + "," +
                           detail::fmt_double(miou_at(report, m, k, IgnorePolicy::AsClass)) + "," +
                           detail::fmt_double(miou_at(report, m, k, IgnorePolicy::Excluded)) + "\n";
        }
        summary_csv += report.methods[m] + ",mean," +
                       detail::fmt_double(grand_mean_miou(report, m, IgnorePolicy::AsClass)) + "," +
                       detail::fmt_double(grand_mean_miou(report, m, IgnorePolicy::Excluded)) + "\n";
    }
    detail::write_text_file(out_dir / "summary.csv", summary_csv);

    // Presentation-only curve: mIoU (as-class) vs |offset|, one polyline per
    // method.
    const double plot_w = 560, plot_h = 360, margin = 56;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(static_cast<int>(plot_w + 2 * margin)) + "\" height=\"" +
                      std::to_string(static_cast<int>(plot_h + 2 * margin)) + "\">\n";
    svg += "<rect x=\"" + detail::fmt_double(margin) + "\" y=\"" + detail::fmt_double(margin) +
           "\" width=\"" + detail::fmt_double(plot_w) + "\" height=\"" + detail::fmt_double(plot_h) +
           "\" fill=\"none\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::fmt_double(margin + plot_w / 2) + "\" y=\"" +
           detail::fmt_double(margin + plot_h + 36) +
           "\" text-anchor=\"middle\" font-size=\"14\">propagation length |offset| (frames)</text>\n";
    svg += "<text x=\"16\" y=\"" + detail::fmt_double(margin + plot_h / 2) +
           "\" font-size=\"14\" transform=\"rotate(-90 16 " +
           detail::fmt_double(margin + plot_h / 2) + ")\" text-anchor=\"middle\">mIoU</text>\n";
    static const char* kColors[] = {"#c0392b", "#2980b9", "#27ae60", "#8e44ad",
                                    "#d35400", "#16a085"};
    for (std::size_t m = 0; m < report.methods.size(); ++m) {
        std::string points;
        for (int k = 1; k <= report.horizon; ++k) {
            const double x =
                margin + plot_w * (report.horizon > 1
                                       ? static_cast<double>(k - 1) / (report.horizon - 1)
                                       : 0.5);
            const double y = margin + plot_h * (1.0 - miou_at(report, m, k, IgnorePolicy::AsClass));
            points += detail::fmt_double(x) + "," + detail::fmt_double(y) + " ";
        }
        const char* color = kColors[m % 6];
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" +
               points + "\"/>\n";
        svg += "<text x=\"" + detail::fmt_double(margin + 8) + "\" y=\"" +
               detail::fmt_double(margin + 18 + 16 * static_cast<double>(m)) + "\" fill=\"" + color +
               "\" font-size=\"13\">" + report.methods[m] + "</text>\n";
    }
    svg += "</svg>\n";
    detail::write_text_file(out_dir / "curve.svg", svg);
}

} // namespace labelprop
