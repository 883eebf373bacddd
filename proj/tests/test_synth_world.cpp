#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <set>

#include "labelprop/synth_world.hpp"

using namespace labelprop;

namespace {

// Independent per-pixel gather used to cross-check generator invariants;
// deliberately not the propagation module's remap.
ClassId gather_nn(const LabelMap& src, const FlowField& flow, int x, int y) {
    const FlowVec f = flow.at(x, y);
    const long sx = std::lround(x + f.u);
    const long sy = std::lround(y + f.v);
    if (sx < 0 || sy < 0 || sx >= src.width || sy >= src.height) return kIgnoreId;
    return src.at(static_cast<int>(sx), static_cast<int>(sy));
}

SceneConfig single_rect_scene(float vel_x, float vel_y, float pan_x = 0.0f) {
    SceneConfig cfg;
    cfg.width = 12;
    cfg.height = 12;
    cfg.frame_count = 5;
    cfg.num_classes = 2;
    cfg.road_top = 0;
    cfg.road_bottom = 0;
    cfg.pan_x = pan_x;
    SpriteSpec s;
    s.class_id = 1;
    s.cx = 4.0f;
    s.cy = 5.0f;
    s.half_w = 2.0f;
    s.half_h = 2.0f;
    s.vel_x = vel_x;
    s.vel_y = vel_y;
    cfg.sprites = {s};
    return cfg;
}

} // namespace

TEST_CASE("static scene produces zero flow and identical labels everywhere") {
    const Sequence seq = generate(single_rect_scene(0.0f, 0.0f));
    for (int k = 1; k < seq.frame_count(); ++k) {
        for (const FlowVec& f : seq.flows[k].data) {
            CHECK(f.u == 0.0f);
            CHECK(f.v == 0.0f);
        }
        CHECK(seq.labels[k].data == seq.labels[0].data);
        CHECK(seq.frames[k].data == seq.frames[0].data);
    }
}

TEST_CASE("rectangle moving (+1,0) has gather flow (-1,0) inside the sprite") {
    const Sequence seq = generate(single_rect_scene(1.0f, 0.0f));
    for (int k = 1; k < seq.frame_count(); ++k) {
        // Brute-force rasterization of the sprite mask at frame k.
        const float cx = 4.0f + 1.0f * k, cy = 5.0f;
        for (int y = 0; y < 12; ++y) {
            for (int x = 0; x < 12; ++x) {
                const bool inside = std::fabs(x - cx) <= 2.0f && std::fabs(y - cy) <= 2.0f;
                CHECK((seq.labels[k].at(x, y) == 1) == inside);
                if (inside) {
                    CHECK(seq.flows[k].at(x, y).u == -1.0f);
                    CHECK(seq.flows[k].at(x, y).v == 0.0f);
                }
            }
        }
    }
}

TEST_CASE("same seed twice gives byte-identical sequences") {
    const Sequence a = generate(standard_benchmark(7));
    const Sequence b = generate(standard_benchmark(7));
    REQUIRE(a.frame_count() == b.frame_count());
    for (int k = 0; k < a.frame_count(); ++k) {
        CHECK(a.frames[k].data == b.frames[k].data);
        CHECK(a.labels[k].data == b.labels[k].data);
        if (k >= 1)
            CHECK(std::memcmp(a.flows[k].data.data(), b.flows[k].data.data(),
                              a.flows[k].pixels() * sizeof(FlowVec)) == 0);
        if (k + 1 < a.frame_count()) CHECK(a.rev_flow_flags[k] == b.rev_flow_flags[k]);
    }
}

TEST_CASE("ground-truth consistency: flows reproduce labels on consistent pixels") {
    for (std::uint64_t seed : {0ull, 3ull, 11ull}) {
        const Sequence seq = generate(standard_benchmark(seed));
        for (int k = 1; k < seq.frame_count(); ++k) {
            for (int y = 0; y < seq.config.height; ++y) {
                for (int x = 0; x < seq.config.width; ++x) {
                    const std::size_t p = seq.labels[k].index(x, y);
                    if (seq.flow_flags[k][p] != kVisibleConsistent) continue;
                    REQUIRE(gather_nn(seq.labels[k - 1], seq.flows[k], x, y) ==
                            seq.labels[k].at(x, y));
                }
            }
        }
    }
}

TEST_CASE("reversibility: rev flows reproduce the previous frame on consistent pixels") {
    const Sequence seq = generate(standard_benchmark(5));
    for (int k = 1; k < seq.frame_count(); ++k) {
        for (int y = 0; y < seq.config.height; ++y) {
            for (int x = 0; x < seq.config.width; ++x) {
                const std::size_t p = seq.labels[k - 1].index(x, y);
                if (seq.rev_flow_flags[k - 1][p] != kVisibleConsistent) continue;
                REQUIRE(gather_nn(seq.labels[k], seq.rev_flows[k - 1], x, y) ==
                        seq.labels[k - 1].at(x, y));
            }
        }
    }
}

TEST_CASE("standard benchmark satisfies its construction invariants") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const SceneConfig cfg = standard_benchmark(seed);
        CHECK(cfg.annotated_index() == 10);
        CHECK(cfg.frame_count == 21);
        CHECK(cfg.num_classes == 8);
        CHECK(cfg.pan_x == 0.5f);

        bool has_late_spawner = false, has_thin_bar = false;
        for (const SpriteSpec& s : cfg.sprites) {
            if (s.spawn_frame > cfg.annotated_index()) has_late_spawner = true;
            if (s.shape == SpriteShape::Bar && s.half_w * 2.0f <= 2.0f) has_thin_bar = true;
        }
        CHECK(has_late_spawner);
        CHECK(has_thin_bar);
    }
}

TEST_CASE("rare-class pixel share across the sequence stays under 5 percent") {
    for (std::uint64_t seed : {1ull, 8ull, 15ull}) {
        const Sequence seq = generate(standard_benchmark(seed));
        std::size_t rare = 0, total = 0;
        for (const LabelMap& lbl : seq.labels) {
            total += lbl.pixels();
            for (ClassId id : lbl.data)
                if (id == seq.config.rare_class) ++rare;
        }
        CHECK(rare > 0);
        CHECK(static_cast<double>(rare) / static_cast<double>(total) < 0.05);
    }
}

TEST_CASE("some frame after the annotated one contains class ids absent at it") {
    int seeds_with_new_class = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Sequence seq = generate(standard_benchmark(seed));
        std::set<ClassId> at_t(seq.labels[10].data.begin(), seq.labels[10].data.end());
        bool found = false;
        for (int k = 11; k < seq.frame_count(); ++k)
            for (ClassId id : seq.labels[k].data)
                if (!at_t.count(id)) found = true;
        if (found) ++seeds_with_new_class;

        // Every seed must contain new-content pixels after the annotated
        // frame, whether or not they introduce a brand-new class id.
        bool new_content = false;
        for (const SpriteSpec& s : seq.config.sprites)
            if (s.spawn_frame > 10) new_content = true;
        CHECK(new_content);
    }
    // Seeds whose rare sprite spawns late contribute a genuinely new class.
    CHECK(seeds_with_new_class >= 3);
}

TEST_CASE("provenance flags mark de-occlusion and entering content") {
    const Sequence seq = generate(standard_benchmark(2));
    std::size_t deoccluded = 0, entering = 0;
    for (int k = 1; k < seq.frame_count(); ++k)
        for (std::uint8_t flag : seq.flow_flags[k]) {
            deoccluded += flag == kDeOccluded;
            entering += flag == kEntering;
        }
    CHECK(deoccluded > 0);
    CHECK(entering > 0); // camera pan pulls new columns in at one edge
}

TEST_CASE("generate rejects invalid configs") {
    SceneConfig cfg = single_rect_scene(0.0f, 0.0f);
    cfg.frame_count = 4; // even
    CHECK_THROWS_AS(generate(cfg), ConfigError);

    cfg = single_rect_scene(0.0f, 0.0f);
    cfg.sprites[0].class_id = 7; // >= num_classes
    CHECK_THROWS_AS(generate(cfg), ConfigError);
}

TEST_CASE("element base colors are pairwise separated") {
    // The photometric gate relies on cross-element mismatches exceeding tau.
    std::vector<detail::Rgb> colors;
    for (int c = 0; c < 8; ++c) colors.push_back(detail::element_base_color(c, false));
    colors.push_back(detail::element_base_color(0, true));
    for (std::size_t i = 0; i < colors.size(); ++i)
        for (std::size_t j = i + 1; j < colors.size(); ++j) {
            const float dr = colors[i].r - colors[j].r;
            const float dg = colors[i].g - colors[j].g;
            const float db = colors[i].b - colors[j].b;
            CHECK(std::sqrt(dr * dr + dg * dg + db * db) > 0.2f);
        }
}
