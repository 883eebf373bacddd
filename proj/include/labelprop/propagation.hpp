#pragma once

// The propagation engine: nearest-neighbor label warping and bilinear image
// warping in the gather convention, the photometric gate, gated blending,
// the recursive warp-inpaint step, full forward/backward propagation with
// method dispatch, and cyclic label generation for refiner training.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "labelprop/errors.hpp"
#include "labelprop/grid.hpp"
#include "labelprop/oracles.hpp"
#include "labelprop/synth_world.hpp"

namespace labelprop {

struct GateConfig {
    float tau = 0.10f; // distance threshold on [0,1] RGB
    bool strict = true; // strict '<' comparison
};

enum class Method { MotionOnly, SemanticOnly, WarpInpaint, WarpRefine };

inline const char* method_name(Method m) {
    switch (m) {
    case Method::MotionOnly: return "motion-only";
    case Method::SemanticOnly: return "semantic-only";
    case Method::WarpInpaint: return "warp-inpaint";
    case Method::WarpRefine: return "warp-refine";
    }
    return "?";
}

inline Method method_from_name(const std::string& name) {
    if (name == "motion-only") return Method::MotionOnly;
    if (name == "semantic-only") return Method::SemanticOnly;
    if (name == "warp-inpaint") return Method::WarpInpaint;
    if (name == "warp-refine") return Method::WarpRefine;
    throw ConfigError("unknown method: " + name);
}

enum class LabelRepresentation { Hard, Soft };

struct PropagateConfig {
    int horizon = 10;
    Method method = Method::WarpInpaint;
    GateConfig gate;
    bool refine_every_step = true;
    LabelRepresentation label_representation = LabelRepresentation::Hard;
};

struct OracleSet {
    MotionNoiseConfig motion;
    SemanticNoiseConfig semantic;
};

// Interface the propagation engine uses to apply a trained denoiser; the
// concrete network lives in refine.hpp.
class LabelRefiner {
public:
    virtual ~LabelRefiner() = default;
    virtual SoftLabelMap refine(const SoftLabelMap& input_labels, const Image& target_image,
                                const Image& warped_image) const = 0;
};

// One refinement application on hard labels: every pixel gets the denoiser's
// argmax class. The class space cannot express ignore, so ignore inputs are
// filled; within a propagation step the caller re-imposes motion-trusted
// ignore through the gate (see propagate).
inline LabelMap refine_labels(const LabelRefiner& refiner, const LabelMap& labels,
                              const Image& target_image, const Image& warped_image) {
    return argmax_decode(refiner.refine(onehot_encode(labels), target_image, warped_image),
                         labels.ignore_id);
}

enum class FillMode { Clamp, Invalid };

struct RemappedLabels {
    LabelMap labels;
    GateMask validity; // true where the rounded source fell inside the frame
};

// Nearest-neighbor gather: output(x,y) = labels(round(x+u), round(y+v)).
// Out-of-bounds sources are clamped to the edge or marked invalid (and set
// to ignore) depending on the fill mode.
inline RemappedLabels remap_labels(const LabelMap& labels, const FlowField& flow, FillMode fill) {
    detail::require(labels.width == flow.width && labels.height == flow.height,
                    "remap_labels: dimensions differ");
    RemappedLabels out{LabelMap(labels.width, labels.height, labels.num_classes, 0, labels.ignore_id),
                       GateMask(labels.width, labels.height, true)};
    for (int y = 0; y < labels.height; ++y) {
        for (int x = 0; x < labels.width; ++x) {
            const FlowVec f = flow.at(x, y);
            long sx = std::lround(x + f.u);
            long sy = std::lround(y + f.v);
            const bool inside = sx >= 0 && sy >= 0 && sx < labels.width && sy < labels.height;
            if (!inside) {
                if (fill == FillMode::Invalid) {
                    out.labels.at(x, y) = labels.ignore_id;
                    out.validity.set(x, y, false);
                    continue;
                }
                sx = std::clamp<long>(sx, 0, labels.width - 1);
                sy = std::clamp<long>(sy, 0, labels.height - 1);
            }
            out.labels.at(x, y) = labels.at(static_cast<int>(sx), static_cast<int>(sy));
        }
    }
    return out;
}

struct RemappedSoft {
    SoftLabelMap labels;
    GateMask validity;
};

// Soft-label variant of the nearest-neighbor gather; invalid pixels become
// the all-zero (ignore) vector.
inline RemappedSoft remap_soft(const SoftLabelMap& soft, const FlowField& flow, FillMode fill) {
    detail::require(soft.width == flow.width && soft.height == flow.height,
                    "remap_soft: dimensions differ");
    RemappedSoft out{SoftLabelMap(soft.width, soft.height, soft.num_classes),
                     GateMask(soft.width, soft.height, true)};
    const int C = soft.num_classes;
    for (int y = 0; y < soft.height; ++y) {
        for (int x = 0; x < soft.width; ++x) {
            const FlowVec f = flow.at(x, y);
            long sx = std::lround(x + f.u);
            long sy = std::lround(y + f.v);
            const bool inside = sx >= 0 && sy >= 0 && sx < soft.width && sy < soft.height;
            if (!inside) {
                if (fill == FillMode::Invalid) {
                    out.validity.set(x, y, false);
                    continue; // stays all-zero
                }
                sx = std::clamp<long>(sx, 0, soft.width - 1);
                sy = std::clamp<long>(sy, 0, soft.height - 1);
            }
            const float* src = &soft.data[soft.index(static_cast<int>(sx), static_cast<int>(sy), 0)];
            float* dst = &out.labels.data[out.labels.index(x, y, 0)];
            for (int c = 0; c < C; ++c) dst[c] = src[c];
        }
    }
    return out;
}

// Bilinear gather with edge clamping; outputs stay within the input extrema.
inline Image remap_image(const Image& image, const FlowField& flow) {
    detail::require(image.width == flow.width && image.height == flow.height,
                    "remap_image: dimensions differ");
    Image out(image.width, image.height, image.channels);
    const int W = image.width, H = image.height, C = image.channels;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const FlowVec f = flow.at(x, y);
            const float sx = std::clamp(x + f.u, 0.0f, static_cast<float>(W - 1));
            const float sy = std::clamp(y + f.v, 0.0f, static_cast<float>(H - 1));
            const int x0 = static_cast<int>(sx);
            const int y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, W - 1);
            const int y1 = std::min(y0 + 1, H - 1);
            const float fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < C; ++c) {
                const float v00 = image.at(x0, y0, c), v10 = image.at(x1, y0, c);
                const float v01 = image.at(x0, y1, c), v11 = image.at(x1, y1, c);
                out.at(x, y, c) =
                    (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
            }
        }
    }
    return out;
}

// M(x,y) = 1 iff the warped previous frame photometrically matches the target
// within tau. Pixels whose warp was invalid are forced to 0.
inline GateMask gate_mask(const Image& target, const Image& warped_prev, const GateConfig& cfg,
                          const GateMask* validity = nullptr) {
    detail::require(target.same_shape(warped_prev), "gate_mask: image shapes differ");
    GateMask mask(target.width, target.height);
    for (int y = 0; y < target.height; ++y) {
        for (int x = 0; x < target.width; ++x) {
            if (validity && !validity->at(x, y)) continue;
            const float d = pixel_distance(target, warped_prev, x, y);
            mask.set(x, y, cfg.strict ? (d < cfg.tau) : (d <= cfg.tau));
        }
    }
    return mask;
}

// Per pixel: mask -> motion label, otherwise semantic label.
inline LabelMap blend_labels(const LabelMap& motion, const LabelMap& semantic,
                             const GateMask& mask) {
    detail::require(motion.same_shape(semantic) && motion.width == mask.width &&
                        motion.height == mask.height,
                    "blend_labels: dimensions differ");
    LabelMap out = motion;
    for (std::size_t p = 0; p < out.pixels(); ++p)
        if (!mask.data[p]) out.data[p] = semantic.data[p];
    return out;
}

inline SoftLabelMap blend_soft(const SoftLabelMap& motion, const SoftLabelMap& semantic,
                               const GateMask& mask) {
    detail::require(motion.width == semantic.width && motion.height == semantic.height &&
                        motion.num_classes == semantic.num_classes,
                    "blend_soft: dimensions differ");
    SoftLabelMap out = motion;
    const int C = out.num_classes;
    for (std::size_t p = 0; p < out.pixels(); ++p)
        if (!mask.data[p])
            for (int c = 0; c < C; ++c) out.data[p * C + c] = semantic.data[p * C + c];
    return out;
}

namespace detail {

struct InpaintStep {
    LabelMap labels;
    Image warped_prev; // carried so the refiner can reuse it as auxiliary input
    GateMask validity;
    GateMask gate;
};

inline InpaintStep warp_inpaint_step_full(const LabelMap& prev_labels, const Image& prev_image,
                                          const Image& target_image, const FlowField& flow,
                                          const LabelMap& semantic_labels, const GateConfig& cfg) {
    RemappedLabels motion = remap_labels(prev_labels, flow, FillMode::Invalid);
    Image warped_prev = remap_image(prev_image, flow);
    GateMask mask = gate_mask(target_image, warped_prev, cfg, &motion.validity);
    return {blend_labels(motion.labels, semantic_labels, mask), std::move(warped_prev),
            std::move(motion.validity), std::move(mask)};
}

// Refinement inside one Psi^R step: the denoiser re-decides every class
// pixel and fills semantic-threshold holes, while ignore that the gate
// carried through motion (photometrically confirmed, e.g. ground-truth
// ignore regions) is preserved.
inline LabelMap refine_step_labels(const LabelRefiner& refiner, const InpaintStep& step,
                                   const Image& target_image) {
    LabelMap refined = argmax_decode(
        refiner.refine(onehot_encode(step.labels), target_image, step.warped_prev),
        step.labels.ignore_id);
    for (std::size_t p = 0; p < refined.pixels(); ++p)
        if (step.labels.data[p] == step.labels.ignore_id && step.gate.data[p])
            refined.data[p] = step.labels.ignore_id;
    return refined;
}

} // namespace detail

// One recursive warp-inpaint application: remap -> gate -> blend.
inline LabelMap warp_inpaint_step(const LabelMap& prev_labels, const Image& prev_image,
                                  const Image& target_image, const FlowField& flow,
                                  const LabelMap& semantic_labels, const GateConfig& cfg) {
    return detail::warp_inpaint_step_full(prev_labels, prev_image, target_image, flow,
                                          semantic_labels, cfg)
        .labels;
}

namespace detail {

inline LabelMap thresholded_semantic(const Sequence& seq, const SemanticNoiseConfig& cfg, int k) {
    return apply_confidence_threshold(
        semantic_oracle(seq.labels[k], seq.frames[k], cfg, k), cfg.threshold);
}

} // namespace detail

// Propagate the annotated frame's labels to every offset in [-K, K] \ {0}.
// The forward chain consumes forward flows, the backward chain reverse flows.
inline std::map<int, LabelMap> propagate(const Sequence& seq, int t, const PropagateConfig& cfg,
                                         const OracleSet& oracles,
                                         const LabelRefiner* refiner = nullptr) {
    const int n = seq.frame_count();
    if (t - cfg.horizon < 0 || t + cfg.horizon >= n)
        throw RangeError("propagate: horizon exceeds sequence bounds");
    if (cfg.method == Method::WarpRefine && refiner == nullptr)
        throw ConfigError("propagate: warp-refine requires a refiner");
    if (cfg.horizon < 1) throw ConfigError("propagate: horizon must be >= 1");

    std::map<int, LabelMap> out;

    if (cfg.method == Method::SemanticOnly) {
        // Per-frame thresholded predictions; no temporal coupling at all.
        for (int off = -cfg.horizon; off <= cfg.horizon; ++off) {
            if (off == 0) continue;
            out.emplace(off, detail::thresholded_semantic(seq, oracles.semantic, t + off));
        }
        return out;
    }

    const bool soft_chain = cfg.label_representation == LabelRepresentation::Soft &&
                            cfg.method != Method::MotionOnly;

    for (const int dir : {+1, -1}) {
        LabelMap chain_hard = seq.labels[t];
        SoftLabelMap chain_soft;
        if (soft_chain) chain_soft = onehot_encode(chain_hard);

        for (int step = 1; step <= cfg.horizon; ++step) {
            const int k = t + dir * step;      // target frame of this step
            const int prev = t + dir * (step - 1);
            const FlowDirection fdir = dir > 0 ? FlowDirection::Forward : FlowDirection::Backward;
            const FlowField flow = motion_oracle(seq, oracles.motion, k, fdir);

            if (cfg.method == Method::MotionOnly) {
                // Pure warp chain with clamp fill: entering content inherits
                // edge labels, the baseline's characteristic failure.
                chain_hard = remap_labels(chain_hard, flow, FillMode::Clamp).labels;
                out.emplace(dir * step, chain_hard);
                continue;
            }

            const LabelMap semantic = detail::thresholded_semantic(seq, oracles.semantic, k);
            if (!soft_chain) {
                detail::InpaintStep blended = detail::warp_inpaint_step_full(
                    chain_hard, seq.frames[prev], seq.frames[k], flow, semantic, cfg.gate);
                if (cfg.method == Method::WarpRefine && cfg.refine_every_step) {
                    chain_hard = detail::refine_step_labels(*refiner, blended, seq.frames[k]);
                    out.emplace(dir * step, chain_hard);
                } else if (cfg.method == Method::WarpRefine) {
                    out.emplace(dir * step,
                                detail::refine_step_labels(*refiner, blended, seq.frames[k]));
                    chain_hard = std::move(blended.labels);
                } else {
                    chain_hard = std::move(blended.labels);
                    out.emplace(dir * step, chain_hard);
                }
            } else {
                RemappedSoft motion = remap_soft(chain_soft, flow, FillMode::Invalid);
                Image warped_prev = remap_image(seq.frames[prev], flow);
                const GateMask mask =
                    gate_mask(seq.frames[k], warped_prev, cfg.gate, &motion.validity);
                chain_soft = blend_soft(motion.labels, onehot_encode(semantic), mask);
                if (cfg.method == Method::WarpRefine) {
                    // Same gate-informed composition as the hard path: refine
                    // everywhere, restore motion-trusted ignore vectors.
                    SoftLabelMap refined =
                        refiner->refine(chain_soft, seq.frames[k], warped_prev);
                    const int C = refined.num_classes;
                    for (std::size_t p = 0; p < refined.pixels(); ++p) {
                        bool all_zero = true;
                        for (int c = 0; c < C; ++c)
                            if (chain_soft.data[p * C + c] != 0.0f) all_zero = false;
                        if (all_zero && mask.data[p])
                            for (int c = 0; c < C; ++c) refined.data[p * C + c] = 0.0f;
                    }
                    if (cfg.refine_every_step) chain_soft = std::move(refined);
                    out.emplace(dir * step,
                                argmax_decode(cfg.refine_every_step ? chain_soft : refined,
                                              seq.labels[t].ignore_id));
                } else {
                    out.emplace(dir * step, argmax_decode(chain_soft, seq.labels[t].ignore_id));
                }
            }
        }
    }
    return out;
}

struct CycleSample {
    int cycle_length = 1;
    int direction = +1; // +1 propagates forward first, -1 backward first
    LabelMap cyclic_labels;    // labels propagated t -> t+dir*l -> t
    Image cyclic_warped_image; // warped image produced by the final return step
    Image annotated_image;     // the raw frame at t
    LabelMap target_labels;    // ground truth at t
};

// Forward-backward warp-inpaint loop through the same noisy transformations
// used at inference; the returned sample supervises the denoiser.
inline CycleSample cycle_propagate(const Sequence& seq, int t, int cycle_length, int direction,
                                   const GateConfig& gate, const OracleSet& oracles) {
    const int n = seq.frame_count();
    if (cycle_length < 1) throw RangeError("cycle_propagate: cycle length must be >= 1");
    const int apex = t + direction * cycle_length;
    if (t < 0 || t >= n || apex < 0 || apex >= n)
        throw RangeError("cycle_propagate: cycle leaves the sequence");

    auto flow_for = [&](int target_frame, int source_frame) {
        return motion_oracle(seq, oracles.motion, target_frame,
                             source_frame < target_frame ? FlowDirection::Forward
                                                         : FlowDirection::Backward);
    };

    LabelMap chain = seq.labels[t];
    Image last_warped;
    // Out leg: t -> apex; return leg: apex -> t.
    const int total = 2 * cycle_length;
    int cur = t;
    for (int i = 0; i < total; ++i) {
        const int next = cur + (i < cycle_length ? direction : -direction);
        const FlowField flow = flow_for(next, cur);
        const LabelMap semantic = detail::thresholded_semantic(seq, oracles.semantic, next);
        detail::InpaintStep stepped = detail::warp_inpaint_step_full(
            chain, seq.frames[cur], seq.frames[next], flow, semantic, gate);
        chain = std::move(stepped.labels);
        last_warped = std::move(stepped.warped_prev);
        cur = next;
    }

    CycleSample sample;
    sample.cycle_length = cycle_length;
    sample.direction = direction;
    sample.cyclic_labels = std::move(chain);
    sample.cyclic_warped_image = std::move(last_warped);
    sample.annotated_image = seq.frames[t];
    sample.target_labels = seq.labels[t];
    return sample;
}

} // namespace labelprop
