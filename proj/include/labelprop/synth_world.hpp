#pragma once

// Procedural sequence generator. Scenes are stacks of rigid translating
// sprites over a panning textured background, so per-pixel ground-truth flow
// is analytic and de-occlusion, entering content, thin structures and a rare
// class all occur by construction. Per-pixel provenance flags record whether
// a gather through the true flow lands on the same scene element; they are
// test hooks only and are never consumed by the propagation engine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "labelprop/errors.hpp"
#include "labelprop/grid.hpp"
#include "labelprop/rng.hpp"

namespace labelprop {

enum class SpriteShape { Rectangle, Ellipse, Bar };

struct SpriteSpec {
    SpriteShape shape = SpriteShape::Rectangle;
    ClassId class_id = 0;
    float cx = 0.0f, cy = 0.0f;         // center at the spawn frame
    float half_w = 1.0f, half_h = 1.0f; // half extents in pixels
    float vel_x = 0.0f, vel_y = 0.0f;   // screen velocity, pixels per frame
    int spawn_frame = 0;                // visible from this frame on
    int depth = 0;                      // larger occludes smaller

    float center_x(int frame) const { return cx + vel_x * (frame - spawn_frame); }
    float center_y(int frame) const { return cy + vel_y * (frame - spawn_frame); }

    bool contains(int frame, int x, int y) const {
        if (frame < spawn_frame) return false;
        const float dx = x - center_x(frame);
        const float dy = y - center_y(frame);
        if (shape == SpriteShape::Ellipse) {
            const float ex = dx / half_w, ey = dy / half_h;
            return ex * ex + ey * ey <= 1.0f;
        }
        return std::fabs(dx) <= half_w && std::fabs(dy) <= half_h;
    }
};

struct SceneConfig {
    int width = 96;
    int height = 96;
    int frame_count = 21; // odd; annotated frame sits at the center
    int num_classes = 8;

    std::vector<SpriteSpec> sprites;
    ClassId background_class = 0;
    ClassId road_class = 1;
    int road_top = 56;
    int road_bottom = 76; // half-open row range [road_top, road_bottom)
    int ignore_rows = 0;  // screen-fixed hood band at the bottom, labelled ignore

    float pan_x = 0.0f, pan_y = 0.0f; // camera pan, pixels per frame

    ClassId rare_class = kIgnoreId; // kIgnoreId disables the quota check
    double rare_quota = 0.05;       // max pixel share for the rare class

    std::uint64_t texture_seed = 0;
    std::uint64_t seed = 0;

    int annotated_index() const { return (frame_count - 1) / 2; }
};

// Provenance of a pixel with respect to one gather flow field.
enum ProvenanceFlag : std::uint8_t {
    kVisibleConsistent = 0, // source lands on the same scene element
    kDeOccluded = 1,        // source lands on a different element
    kEntering = 2,          // source falls outside the frame
};

struct Sequence {
    SceneConfig config;
    std::vector<Image> frames;
    std::vector<LabelMap> labels;
    std::vector<FlowField> flows;     // flows[k] gathers frame k from k-1; flows[0] empty
    std::vector<FlowField> rev_flows; // rev_flows[k] gathers frame k from k+1; last empty
    std::vector<std::vector<std::uint8_t>> flow_flags;     // aligned with flows
    std::vector<std::vector<std::uint8_t>> rev_flow_flags; // aligned with rev_flows
    int annotated_index = 0;

    int frame_count() const { return static_cast<int>(frames.size()); }
};

namespace detail {

// Smooth value noise in [0,1): bilinear blend of lattice hashes with a
// cubic fade, cell size 6 px. Smoothness keeps in-element photometric
// differences well under the gate threshold.
inline float value_noise(std::uint64_t seed, float wx, float wy) {
    const float cell = 6.0f;
    const float gx = std::floor(wx / cell), gy = std::floor(wy / cell);
    float tx = wx / cell - gx, ty = wy / cell - gy;
    tx = tx * tx * (3.0f - 2.0f * tx);
    ty = ty * ty * (3.0f - 2.0f * ty);
    auto corner = [&](int dx, int dy) {
        const std::uint64_t h = mix_seed(
            seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(gx) + dx + (1 << 20)),
            static_cast<std::uint64_t>(static_cast<std::int64_t>(gy) + dy + (1 << 20)));
        return static_cast<float>(h >> 40) * 0x1.0p-24f;
    };
    const float top = corner(0, 0) + tx * (corner(1, 0) - corner(0, 0));
    const float bot = corner(0, 1) + tx * (corner(1, 1) - corner(0, 1));
    return top + ty * (bot - top);
}

struct Rgb {
    float r, g, b;
};

// Base colors sit on the RGB cube's corners plus its center (pairwise L2
// distance >= 0.69). Combined with half-pixel element velocities, a bilinear
// gather that mixes elements always lands at least 0.25 * 0.69 away from any
// pure element color, so a cross-element warp can never slip under the gate
// threshold, while the ~0.015 texture amplitude stays well inside it.
// Corner roles are chosen so that no two elements that can share a 2x2 texel
// window are antipodal around a third: an exact-quarter bilinear mix of
// antipodal corners over the center cancels to the center color, which would
// reopen the gate for a mislabeled gather.
inline Rgb element_base_color(ClassId id, bool is_ignore) {
    if (is_ignore) return {0.08f, 0.08f, 0.10f};
    static constexpr Rgb kPalette[8] = {
        {0.50f, 0.50f, 0.50f}, // background: cube center
        {0.10f, 0.10f, 0.90f}, // road
        {0.90f, 0.10f, 0.10f}, {0.10f, 0.90f, 0.10f}, {0.90f, 0.90f, 0.10f},
        {0.10f, 0.90f, 0.90f}, {0.90f, 0.10f, 0.90f}, {0.90f, 0.90f, 0.90f},
    };
    if (id < 8) return kPalette[id];
    const float t = (id * 0.6180339887f) - std::floor(id * 0.6180339887f);
    return {0.2f + 0.6f * t, 0.8f - 0.6f * t, 0.35f + 0.3f * t};
}

// Scene elements, topmost first: hood, sprites by depth, road, background.
// These ids are generation-internal; labels derive from them.
struct ElementIds {
    static constexpr int kBackground = 0;
    static constexpr int kRoad = 1;
    static constexpr int kHood = 2;
    static constexpr int kFirstSprite = 3;
};

inline int topmost_element(const SceneConfig& cfg, int frame, int x, int y) {
    if (cfg.ignore_rows > 0 && y >= cfg.height - cfg.ignore_rows) return ElementIds::kHood;
    int best = -1;
    int best_depth = 0;
    for (std::size_t i = 0; i < cfg.sprites.size(); ++i) {
        const SpriteSpec& s = cfg.sprites[i];
        if (!s.contains(frame, x, y)) continue;
        const int id = ElementIds::kFirstSprite + static_cast<int>(i);
        if (best < 0 || s.depth > best_depth || (s.depth == best_depth && id > best)) {
            best = id;
            best_depth = s.depth;
        }
    }
    if (best >= 0) return best;
    if (y >= cfg.road_top && y < cfg.road_bottom) return ElementIds::kRoad;
    return ElementIds::kBackground;
}

// Screen displacement of an element from frame k-1 to frame k.
inline FlowVec element_step(const SceneConfig& cfg, int element) {
    if (element == ElementIds::kHood) return {0.0f, 0.0f};
    if (element >= ElementIds::kFirstSprite) {
        const SpriteSpec& s = cfg.sprites[element - ElementIds::kFirstSprite];
        return {s.vel_x, s.vel_y};
    }
    return {-cfg.pan_x, -cfg.pan_y}; // background and road pan with the camera
}

inline ClassId element_label(const SceneConfig& cfg, int element) {
    if (element == ElementIds::kHood) return kIgnoreId;
    if (element == ElementIds::kRoad) return cfg.road_class;
    if (element >= ElementIds::kFirstSprite)
        return cfg.sprites[element - ElementIds::kFirstSprite].class_id;
    return cfg.background_class;
}

inline void render_pixel(const SceneConfig& cfg, int frame, int element, int x, int y, float* rgb) {
    const bool is_ignore = element == ElementIds::kHood;
    const Rgb base = element_base_color(element_label(cfg, element), is_ignore);
    float wx, wy;
    std::uint64_t tex_tag;
    if (element >= ElementIds::kFirstSprite) {
        const SpriteSpec& s = cfg.sprites[element - ElementIds::kFirstSprite];
        wx = x - s.center_x(frame);
        wy = y - s.center_y(frame);
        tex_tag = 0x100 + static_cast<std::uint64_t>(element);
    } else if (element == ElementIds::kHood) {
        wx = static_cast<float>(x);
        wy = static_cast<float>(y);
        tex_tag = 0x2;
    } else {
        wx = x + cfg.pan_x * frame;
        wy = y + cfg.pan_y * frame;
        tex_tag = (element == ElementIds::kRoad) ? 0x1 : 0x0;
    }
    const float amp = is_ignore ? 0.01f : 0.015f;
    const float bases[3] = {base.r, base.g, base.b};
    for (int c = 0; c < 3; ++c) {
        const float n = value_noise(mix_seed(cfg.texture_seed, tex_tag, 0xC0 + c), wx, wy);
        rgb[c] = std::clamp(bases[c] + amp * (2.0f * n - 1.0f), 0.0f, 1.0f);
    }
}

} // namespace detail

// Deterministic function of the config. Flow at a pixel is the motion of the
// topmost visible element there; provenance flags classify each gather.
inline Sequence generate(const SceneConfig& cfg) {
    if (cfg.width <= 0 || cfg.height <= 0) throw ConfigError("generate: nonpositive dimensions");
    if (cfg.frame_count < 1 || cfg.frame_count % 2 == 0)
        throw ConfigError("generate: frame_count must be odd and positive");
    if (cfg.num_classes < 1 || cfg.num_classes > 254)
        throw ConfigError("generate: num_classes out of range");
    for (const SpriteSpec& s : cfg.sprites)
        if (s.class_id >= cfg.num_classes)
            throw ConfigError("generate: sprite class id out of range");
    if (cfg.ignore_rows >= cfg.height) throw ConfigError("generate: ignore band covers the frame");

    const int W = cfg.width, H = cfg.height, N = cfg.frame_count;

    Sequence seq;
    seq.config = cfg;
    seq.annotated_index = cfg.annotated_index();

    std::vector<std::vector<int>> elements(N);
    for (int k = 0; k < N; ++k) {
        elements[k].resize(static_cast<std::size_t>(W) * H);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                elements[k][static_cast<std::size_t>(y) * W + x] =
                    detail::topmost_element(cfg, k, x, y);
    }

    seq.frames.reserve(N);
    seq.labels.reserve(N);
    for (int k = 0; k < N; ++k) {
        Image img(W, H, 3);
        LabelMap lbl(W, H, cfg.num_classes);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const int e = elements[k][static_cast<std::size_t>(y) * W + x];
                detail::render_pixel(cfg, k, e, x, y, &img.data[img.index(x, y, 0)]);
                lbl.at(x, y) = detail::element_label(cfg, e);
            }
        }
        seq.frames.push_back(std::move(img));
        seq.labels.push_back(std::move(lbl));
    }

    // Gather fields plus provenance. The flag check mirrors nearest-neighbor
    // label remapping exactly (same rounding), so the ground-truth consistency
    // invariant holds on flagged-consistent pixels by construction.
    auto build_flow = [&](int target_frame, int source_frame, FlowField& field,
                          std::vector<std::uint8_t>& flags) {
        field = FlowField(W, H);
        flags.assign(static_cast<std::size_t>(W) * H, kVisibleConsistent);
        const bool source_is_earlier = source_frame < target_frame;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * W + x;
                const int e = elements[target_frame][p];
                // `step` is the element's displacement per forward frame; the
                // gather vector points at where its content sat in the source.
                const FlowVec step = detail::element_step(cfg, e);
                field.at(x, y) = source_is_earlier ? FlowVec{-step.u, -step.v}
                                                   : FlowVec{step.u, step.v};
                const long sx = std::lround(x + field.at(x, y).u);
                const long sy = std::lround(y + field.at(x, y).v);
                if (sx < 0 || sy < 0 || sx >= W || sy >= H) {
                    flags[p] = kEntering;
                } else if (elements[source_frame][static_cast<std::size_t>(sy) * W + sx] != e) {
                    flags[p] = kDeOccluded;
                }
            }
        }
    };

    seq.flows.resize(N);
    seq.rev_flows.resize(N);
    seq.flow_flags.resize(N);
    seq.rev_flow_flags.resize(N);
    for (int k = 1; k < N; ++k) build_flow(k, k - 1, seq.flows[k], seq.flow_flags[k]);
    for (int k = 0; k + 1 < N; ++k) build_flow(k, k + 1, seq.rev_flows[k], seq.rev_flow_flags[k]);

    if (cfg.rare_class != kIgnoreId) {
        std::size_t rare = 0, total = 0;
        for (const LabelMap& lbl : seq.labels) {
            total += lbl.pixels();
            rare += static_cast<std::size_t>(
                std::count(lbl.data.begin(), lbl.data.end(), cfg.rare_class));
        }
        if (static_cast<double>(rare) > cfg.rare_quota * static_cast<double>(total))
            throw ConfigError("generate: rare class exceeds its pixel quota");
    }
    return seq;
}

// The repository's canonical scene: 96x96, 21 frames, 8 classes, camera pan
// (0.5, 0). Sprite placement jitters with the seed; invariants (a sprite
// spawning after the annotated frame, a bar of width <= 2, a rare class kept
// under its pixel quota, a ground-truth ignore band) hold for every seed.
inline SceneConfig standard_benchmark(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5CE9E5EEDull));
    SceneConfig cfg;
    cfg.width = 96;
    cfg.height = 96;
    cfg.frame_count = 21;
    cfg.num_classes = 8;
    cfg.pan_x = 0.5f;
    cfg.pan_y = 0.0f;
    cfg.road_top = 56;
    cfg.road_bottom = 76;
    cfg.ignore_rows = 7;
    cfg.rare_class = 5;
    cfg.rare_quota = 0.05;
    cfg.seed = seed;
    cfg.texture_seed = mix_seed(seed, 0x7E87D2Eull);

    // Sprite trajectories are parameterized by their position at the
    // annotated frame, sampled across each interaction's full phase range:
    // that way annotated-frame snapshots across seeds cover every local
    // pattern the sequence can produce (a sprite behind the bar, the ellipse
    // over the road band, adjacency with the obstacle, ...). Velocities stay
    // on the half-pixel grid; see element_base_color for why.
    const int t = cfg.annotated_index();

    // Mobile sprite A: rectangle drifting right, passing behind the bar.
    SpriteSpec a;
    a.shape = SpriteShape::Rectangle;
    a.class_id = 2;
    a.half_w = 7.0f;
    a.half_h = 5.0f;
    a.vel_x = rng.bernoulli(0.5) ? 1.0f : 1.5f;
    a.vel_y = 0.0f;
    a.cx = rng.uniform_f(24.0f, 34.0f) - a.vel_x * t;
    a.cy = rng.uniform_f(20.0f, 26.0f);
    a.depth = 3;

    // Mobile sprite B: ellipse descending into the road band.
    SpriteSpec b;
    b.shape = SpriteShape::Ellipse;
    b.class_id = 3;
    b.half_w = 6.0f;
    b.half_h = 4.0f;
    b.vel_x = 0.5f * static_cast<float>(rng.uniform_int(-1, 1));
    b.vel_y = rng.bernoulli(0.5) ? 0.5f : 1.0f;
    b.cx = rng.uniform_f(66.0f, 74.0f) - b.vel_x * t;
    b.cy = rng.uniform_f(40.0f, 58.0f) - b.vel_y * t;
    b.depth = 3;

    // Mobile sprite C: fast rectangle passing behind the static obstacle.
    // It is wider than the obstacle, so some of it stays visible throughout.
    SpriteSpec c;
    c.shape = SpriteShape::Rectangle;
    c.class_id = 4;
    c.cx = rng.uniform_f(8.0f, 12.0f);
    c.cy = rng.uniform_f(30.0f, 36.0f);
    c.half_w = 6.0f;
    c.half_h = 4.5f;
    c.vel_x = rng.bernoulli(0.5) ? 2.0f : 2.5f;
    c.vel_y = 0.0f;
    c.depth = 1;

    // World-static obstacle (pans with the camera), occluding sprite C. Its
    // position is derived from the crossing time: always after the annotated
    // frame (the annotated labels show the full sprite), close enough that
    // adjacency patterns already occur there for low draws.
    SpriteSpec obstacle;
    obstacle.shape = SpriteShape::Rectangle;
    obstacle.class_id = 7;
    const float crossing_frame = rng.uniform_f(14.5f, 16.0f);
    obstacle.cx = c.cx + (c.vel_x + cfg.pan_x) * crossing_frame;
    obstacle.cy = rng.uniform_f(30.0f, 38.0f);
    obstacle.half_w = 5.0f;
    obstacle.half_h = 13.0f;
    obstacle.vel_x = -cfg.pan_x;
    obstacle.vel_y = -cfg.pan_y;
    obstacle.depth = 2;

    // Rare class: small slow ellipse near the top edge, clear of every other
    // sprite path; its spawn frame varies around the annotated index so
    // horizon aggregates see it at every offset.
    SpriteSpec rare;
    rare.shape = SpriteShape::Ellipse;
    rare.class_id = 5;
    rare.cx = rng.uniform_f(36.0f, 44.0f);
    rare.cy = rng.uniform_f(5.0f, 9.0f);
    rare.half_w = 4.0f;
    rare.half_h = 4.0f;
    rare.vel_x = rng.bernoulli(0.5) ? 0.0f : 0.5f;
    rare.vel_y = 0.0f;
    rare.spawn_frame = static_cast<int>(rng.uniform_int(4, 16));
    rare.depth = 4;

    // Thin world-static bar, the pole analogue (width 2 px), placed outside
    // the obstacle's column range; sprites A and C pass behind it.
    SpriteSpec bar;
    bar.shape = SpriteShape::Bar;
    bar.class_id = 6;
    bar.cx = rng.uniform_f(22.0f, 28.0f);
    bar.cy = 30.0f;
    bar.half_w = 1.0f;
    bar.half_h = 22.0f;
    bar.vel_x = -cfg.pan_x;
    bar.vel_y = 0.0f;
    bar.depth = 5;

    // Second class-2 sprite entering after the annotated frame, centered in
    // the strip between road band and hood (its local patterns match sprite
    // A's): guarantees new-content pixels on the forward side for every seed.
    SpriteSpec late;
    late.shape = SpriteShape::Rectangle;
    late.class_id = 2;
    late.cx = rng.uniform_f(78.0f, 84.0f);
    late.cy = rng.uniform_f(82.0f, 83.0f);
    late.half_w = 5.0f;
    late.half_h = 3.0f;
    late.vel_x = rng.bernoulli(0.5) ? -1.0f : -1.5f;
    late.vel_y = 0.0f;
    late.spawn_frame = static_cast<int>(rng.uniform_int(12, 15));
    late.depth = 4;

    cfg.sprites = {a, b, c, obstacle, rare, bar, late};
    return cfg;
}

} // namespace labelprop
