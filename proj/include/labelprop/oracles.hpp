#pragma once

// Noise oracles standing in for the pretrained networks of the pipeline: a
// motion oracle corrupting ground-truth flow and a semantic oracle corrupting
// ground-truth labels with a coupled confidence map. Both are deterministic
// functions of (inputs, seed, frame index).

#include <cstdint>
#include <string>
#include <vector>

#include "labelprop/errors.hpp"
#include "labelprop/grid.hpp"
#include "labelprop/rng.hpp"
#include "labelprop/synth_world.hpp"

namespace labelprop {

struct MotionNoiseConfig {
    double gaussian_sigma = 0.0;     // px, i.i.d. per flow component
    double block_dropout_rate = 0.0; // per 8x8 block: replace with a random +-3 px offset
    std::uint64_t seed = 0;
};

struct SemanticNoiseConfig {
    double confusion_rate = 0.0;            // per-pixel swap through the confusion table
    int boundary_erosion_px = 0;            // band along label boundaries with degraded confidence
    double thin_structure_miss_rate = 0.0;  // per-pixel misprediction for thin classes
    std::string confidence_model = "piecewise-v1"; // repo-level constant rule, echoed in manifests
    double threshold = 0.9;                 // confidence cutoff for thresholded output
    std::uint64_t seed = 0;
    std::vector<ClassId> confusion_table;   // swap target per class; empty selects the default
    std::vector<ClassId> thin_class_ids;    // classes subject to thin-structure misses

    bool noiseless() const {
        return confusion_rate == 0.0 && boundary_erosion_px == 0 &&
               thin_structure_miss_rate == 0.0;
    }
};

// Single-channel confidence grid, same layout contract as Image.
struct ConfidenceMap {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    ConfidenceMap() = default;
    ConfidenceMap(int w, int h, float fill = 0.0f)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    float at(int x, int y) const { return data[index(x, y)]; }
    float& at(int x, int y) { return data[index(x, y)]; }
};

// Deterministic swap target per class. Each class maps to the next one,
// skipping `avoid` (the benchmark's rare class) so no false positive can
// land in a class that may be absent from a frame.
inline std::vector<ClassId> make_confusion_table(int num_classes, int avoid = -1) {
    std::vector<ClassId> table(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        int p = (c + 1) % num_classes;
        if (p == avoid) p = (p + 1) % num_classes;
        if (p == c) p = (p + 1) % num_classes;
        table[c] = static_cast<ClassId>(p);
    }
    return table;
}

enum class FlowDirection { Forward, Backward };

// Ground-truth flow of frame k plus Gaussian jitter plus block dropout.
// Forward perturbs flows[k] (1 <= k < frame_count); Backward perturbs
// rev_flows[k] (0 <= k < frame_count - 1).
inline FlowField motion_oracle(const Sequence& seq, const MotionNoiseConfig& cfg, int k,
                               FlowDirection dir = FlowDirection::Forward) {
    const int n = seq.frame_count();
    if (dir == FlowDirection::Forward ? (k < 1 || k >= n) : (k < 0 || k + 1 >= n))
        throw RangeError("motion_oracle: frame index out of range");
    const FlowField& gt = (dir == FlowDirection::Forward) ? seq.flows[k] : seq.rev_flows[k];

    FlowField noisy = gt;
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(k),
                     dir == FlowDirection::Forward ? 0xF0F0ull : 0x0B0Bull));
    if (cfg.gaussian_sigma > 0.0) {
        for (FlowVec& f : noisy.data) {
            f.u += static_cast<float>(rng.gaussian(0.0, cfg.gaussian_sigma));
            f.v += static_cast<float>(rng.gaussian(0.0, cfg.gaussian_sigma));
        }
    }
    if (cfg.block_dropout_rate > 0.0) {
        for (int by = 0; by < noisy.height; by += 8) {
            for (int bx = 0; bx < noisy.width; bx += 8) {
                if (!rng.bernoulli(cfg.block_dropout_rate)) continue;
                const FlowVec off{rng.uniform_f(-3.0f, 3.0f), rng.uniform_f(-3.0f, 3.0f)};
                for (int y = by; y < std::min(by + 8, noisy.height); ++y)
                    for (int x = bx; x < std::min(bx + 8, noisy.width); ++x)
                        noisy.at(x, y) = off;
            }
        }
    }
    return noisy;
}

namespace detail {

// Pixels within `radius` of any label change (4-neighbor edge, then 8-neighbor
// dilation radius-1 times).
inline std::vector<std::uint8_t> boundary_band(const LabelMap& labels, int radius) {
    const int W = labels.width, H = labels.height;
    std::vector<std::uint8_t> band(labels.pixels(), 0);
    if (radius <= 0) return band;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const ClassId c = labels.at(x, y);
            if ((x + 1 < W && labels.at(x + 1, y) != c) || (y + 1 < H && labels.at(x, y + 1) != c) ||
                (x > 0 && labels.at(x - 1, y) != c) || (y > 0 && labels.at(x, y - 1) != c))
                band[labels.index(x, y)] = 1;
        }
    }
    std::vector<std::uint8_t> grown(band.size());
    for (int pass = 1; pass < radius; ++pass) {
        grown = band;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                if (band[labels.index(x, y)]) continue;
                for (int dy = -1; dy <= 1 && !grown[labels.index(x, y)]; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx >= 0 && ny >= 0 && nx < W && ny < H && band[labels.index(nx, ny)]) {
                            grown[labels.index(x, y)] = 1;
                            break;
                        }
                    }
            }
        band.swap(grown);
    }
    return band;
}

} // namespace detail

struct SemanticPrediction {
    LabelMap labels;
    ConfidenceMap confidence;
};

// Corrupted copy of the ground truth with a coupled confidence map.
// Ground-truth ignore pixels are always predicted as a random non-ignore
// class with low confidence: the ignore class has no semantic definition, so
// a segmentation model cannot produce it.
//
// Confidence rule "piecewise-v1" (a repository constant, not a paper claim):
//   clean, off-boundary      -> 1.0
//   clean, boundary band     -> [0.82, 0.95)
//   confused                 -> [0.50, 0.95)
//   thin-structure miss      -> [0.20, 0.90)
//   ground-truth ignore      -> [0.10, 0.60)
inline SemanticPrediction semantic_oracle(const LabelMap& labels_gt, const Image& image,
                                          const SemanticNoiseConfig& cfg, int frame_index) {
    detail::require(labels_gt.width == image.width && labels_gt.height == image.height,
                    "semantic_oracle: image and label dimensions differ");
    const int C = labels_gt.num_classes;
    const std::vector<ClassId> table =
        cfg.confusion_table.empty() ? make_confusion_table(C) : cfg.confusion_table;
    detail::require(static_cast<int>(table.size()) == C,
                    "semantic_oracle: confusion table size mismatch");

    auto is_thin = [&](ClassId c) {
        for (ClassId t : cfg.thin_class_ids)
            if (t == c) return true;
        return false;
    };

    const std::vector<std::uint8_t> band =
        detail::boundary_band(labels_gt, cfg.boundary_erosion_px);

    SemanticPrediction out{LabelMap(labels_gt.width, labels_gt.height, C),
                           ConfidenceMap(labels_gt.width, labels_gt.height)};
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(frame_index), 0x5E11ull));
    for (std::size_t p = 0; p < labels_gt.pixels(); ++p) {
        const ClassId gt = labels_gt.data[p];
        if (gt == labels_gt.ignore_id) {
            out.labels.data[p] = static_cast<ClassId>(rng.uniform_int(0, C - 1));
            out.confidence.data[p] = rng.uniform_f(0.10f, 0.60f);
            continue;
        }
        if (is_thin(gt) && cfg.thin_structure_miss_rate > 0.0 &&
            rng.bernoulli(cfg.thin_structure_miss_rate)) {
            out.labels.data[p] = table[gt];
            out.confidence.data[p] = rng.uniform_f(0.20f, 0.90f);
            continue;
        }
        if (cfg.confusion_rate > 0.0 && rng.bernoulli(cfg.confusion_rate)) {
            out.labels.data[p] = table[gt];
            out.confidence.data[p] = rng.uniform_f(0.50f, 0.95f);
            continue;
        }
        out.labels.data[p] = gt;
        out.confidence.data[p] = band[p] ? rng.uniform_f(0.82f, 0.95f) : 1.0f;
    }
    return out;
}

// Semantic-only baseline view: predictions at or below the confidence
// threshold are reported as ignore.
inline LabelMap apply_confidence_threshold(const SemanticPrediction& pred, double threshold) {
    LabelMap out = pred.labels;
    for (std::size_t p = 0; p < out.pixels(); ++p)
        if (pred.confidence.data[p] <= static_cast<float>(threshold)) out.data[p] = out.ignore_id;
    return out;
}

} // namespace labelprop
