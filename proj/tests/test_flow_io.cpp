#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "labelprop/flow_io.hpp"
#include "labelprop/manifest.hpp"
#include "labelprop/rng.hpp"
#include "labelprop/synth_world.hpp"

using namespace labelprop;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    const fs::path dir = fs::temp_directory_path() / (std::string("labelprop_io_") + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("1x1 zero-flow .flo file is exactly 20 bytes with the right layout") {
    const fs::path dir = temp_dir("flo20");
    FlowField f(1, 1);
    write_flo(f, dir / "zero.flo");
    const auto bytes = detail::read_file_bytes(dir / "zero.flo");
    REQUIRE(bytes.size() == 20);
    CHECK(detail::get_f32_le(bytes.data()) == 202021.25f);
    CHECK(detail::get_u32_le(bytes.data() + 4) == 1);
    CHECK(detail::get_u32_le(bytes.data() + 8) == 1);
    CHECK(detail::get_f32_le(bytes.data() + 12) == 0.0f);
    CHECK(detail::get_f32_le(bytes.data() + 16) == 0.0f);
}

TEST_CASE(".flo write/read round-trips 100 random fields bit-exactly") {
    const fs::path dir = temp_dir("flo_rt");
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int w = static_cast<int>(rng.uniform_int(1, 12));
        const int h = static_cast<int>(rng.uniform_int(1, 12));
        FlowField f(w, h);
        for (FlowVec& v : f.data) {
            v.u = rng.uniform_f(-50.0f, 50.0f);
            v.v = rng.uniform_f(-50.0f, 50.0f);
        }
        const fs::path p = dir / ("f" + std::to_string(trial) + ".flo");
        write_flo(f, p);
        const FlowField g = read_flo(p);
        REQUIRE(g.width == w);
        REQUIRE(g.height == h);
        REQUIRE(std::memcmp(g.data.data(), f.data.data(), f.pixels() * sizeof(FlowVec)) == 0);
        // write(read(f)) must be byte-identical to the original file
        write_flo(g, dir / "copy.flo");
        CHECK(detail::read_file_bytes(p) == detail::read_file_bytes(dir / "copy.flo"));
    }
}

TEST_CASE(".flo error paths") {
    const fs::path dir = temp_dir("flo_err");
    // bad magic
    std::vector<std::uint8_t> bad;
    detail::put_f32_le(bad, 0.0f);
    detail::put_u32_le(bad, 1);
    detail::put_u32_le(bad, 1);
    detail::put_f32_le(bad, 0.0f);
    detail::put_f32_le(bad, 0.0f);
    detail::write_file_bytes(dir / "bad_magic.flo", bad);
    CHECK_THROWS_AS(read_flo(dir / "bad_magic.flo"), FormatError);

    // truncated payload
    FlowField f(3, 3);
    write_flo(f, dir / "trunc.flo");
    auto bytes = detail::read_file_bytes(dir / "trunc.flo");
    bytes.resize(bytes.size() - 5);
    detail::write_file_bytes(dir / "trunc.flo", bytes);
    CHECK_THROWS_AS(read_flo(dir / "trunc.flo"), FormatError);

    // nonpositive dimensions
    std::vector<std::uint8_t> neg;
    detail::put_f32_le(neg, kFloMagic);
    detail::put_u32_le(neg, static_cast<std::uint32_t>(-1));
    detail::put_u32_le(neg, 1);
    detail::write_file_bytes(dir / "neg.flo", neg);
    CHECK_THROWS_AS(read_flo(dir / "neg.flo"), FormatError);
}

TEST_CASE("label rasters round-trip exactly in both containers") {
    const fs::path dir = temp_dir("labels");
    LabelMap m(2, 2, 3);
    m.at(0, 0) = 0;
    m.at(1, 0) = 1;
    m.at(0, 1) = 2;
    m.at(1, 1) = m.ignore_id;
    for (const char* name : {"m.pgm", "m.png"}) {
        write_label_image(m, dir / name);
        const LabelMap back = read_label_image(dir / name, 3);
        CHECK(back.data == m.data);
        CHECK(back.width == 2);
        CHECK(back.height == 2);
    }
    CHECK(fs::exists(dir / "palette.json"));

    LabelMap all_ignore(4, 3, 5, kIgnoreId);
    write_label_image(all_ignore, dir / "ignore.png");
    CHECK(read_label_image(dir / "ignore.png", 5).data == all_ignore.data);
}

TEST_CASE("label raster validation rejects out-of-range ids and RGB input") {
    const fs::path dir = temp_dir("label_err");
    // Hand-written PGM with a pixel value of 200 and C=8.
    const std::string pgm = "P5\n1 1\n255\n";
    std::vector<std::uint8_t> bytes(pgm.begin(), pgm.end());
    bytes.push_back(200);
    detail::write_file_bytes(dir / "bad.pgm", bytes);
    CHECK_THROWS_AS(read_label_image(dir / "bad.pgm", 8), ValidationError);

    Image rgb(2, 2, 3);
    write_image(rgb, dir / "rgb.png");
    CHECK_THROWS_AS(read_label_image(dir / "rgb.png", 8), FormatError);
}

TEST_CASE("images round-trip through PNG and PPM at 8-bit precision") {
    const fs::path dir = temp_dir("imgs");
    Rng rng(9);
    Image img(7, 5, 3);
    for (float& v : img.data) v = rng.uniform_f(0.0f, 1.0f);
    for (const char* name : {"i.png", "i.ppm"}) {
        write_image(img, dir / name);
        const Image back = read_image(dir / name);
        REQUIRE(back.width == img.width);
        REQUIRE(back.height == img.height);
        for (std::size_t i = 0; i < img.data.size(); ++i)
            CHECK(std::fabs(back.data[i] - img.data[i]) <= 0.5f / 255.0f + 1e-6f);
    }
    // 8-bit data survives a second round-trip bit-exactly.
    const Image once = read_image(dir / "i.png");
    write_image(once, dir / "i2.png");
    CHECK(detail::read_file_bytes(dir / "i.png") == detail::read_file_bytes(dir / "i2.png"));
}

namespace {

SceneConfig tiny_scene() {
    SceneConfig cfg;
    cfg.width = 8;
    cfg.height = 8;
    cfg.frame_count = 3;
    cfg.num_classes = 3;
    cfg.road_top = 0;
    cfg.road_bottom = 0;
    SpriteSpec s;
    s.class_id = 2;
    s.cx = 3.0f;
    s.cy = 3.0f;
    s.half_w = 1.5f;
    s.half_h = 1.5f;
    s.vel_x = 1.0f;
    cfg.sprites = {s};
    return cfg;
}

} // namespace

TEST_CASE("manifest golden fixture: generate, save, load, compare") {
    const fs::path dir = temp_dir("manifest");
    const Sequence seq = generate(tiny_scene());

    DatasetManifest manifest;
    manifest.num_classes = 3;
    manifest.seed = 5;
    manifest.noise.semantic.confusion_table = make_confusion_table(3);
    manifest.sequences.push_back(write_sequence_files(seq, dir, "seq0000"));
    save_manifest(manifest, dir / "manifest.json");

    const DatasetManifest loaded = load_manifest(dir / "manifest.json");
    CHECK(loaded.num_classes == 3);
    CHECK(loaded.seed == 5);
    CHECK(loaded.sequences.size() == 1);
    CHECK(loaded.sequences[0].frames.size() == 3);
    CHECK(loaded.sequences[0].annotated_index == 1);

    const Sequence back = load_sequence(loaded, 0);
    REQUIRE(back.frame_count() == 3);
    for (int k = 0; k < 3; ++k) CHECK(back.labels[k].data == seq.labels[k].data);
    for (int k = 1; k < 3; ++k)
        CHECK(std::memcmp(back.flows[k].data.data(), seq.flows[k].data.data(),
                          seq.flows[k].pixels() * sizeof(FlowVec)) == 0);
    for (int k = 0; k + 1 < 3; ++k)
        CHECK(std::memcmp(back.rev_flows[k].data.data(), seq.rev_flows[k].data.data(),
                          seq.rev_flows[k].pixels() * sizeof(FlowVec)) == 0);

    // save-then-load is the identity on the in-memory manifest
    save_manifest(loaded, dir / "manifest2.json");
    CHECK(detail::read_file_bytes(dir / "manifest.json") ==
          detail::read_file_bytes(dir / "manifest2.json"));
}

TEST_CASE("manifest referencing an absent flow file names the path in the error") {
    const fs::path dir = temp_dir("manifest_missing");
    const Sequence seq = generate(tiny_scene());
    DatasetManifest manifest;
    manifest.num_classes = 3;
    manifest.noise.semantic.confusion_table = make_confusion_table(3);
    manifest.sequences.push_back(write_sequence_files(seq, dir, "seq0000"));
    save_manifest(manifest, dir / "manifest.json");
    fs::remove(dir / "seq0000/flow_01.flo");
    try {
        load_manifest(dir / "manifest.json");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("flow_01.flo") != std::string::npos);
    }
}

TEST_CASE("manifest rejects unknown fields and version mismatches") {
    const fs::path dir = temp_dir("manifest_bad");
    const Sequence seq = generate(tiny_scene());
    DatasetManifest manifest;
    manifest.num_classes = 3;
    manifest.noise.semantic.confusion_table = make_confusion_table(3);
    manifest.sequences.push_back(write_sequence_files(seq, dir, "seq0000"));
    save_manifest(manifest, dir / "manifest.json");

    auto text = detail::read_file_bytes(dir / "manifest.json");
    std::string json(text.begin(), text.end());

    std::string with_unknown = json;
    with_unknown.replace(with_unknown.find("\"seed\""), 6, "\"sneaky\": 1,\n  \"seed\"");
    detail::write_file_bytes(dir / "unknown.json",
                             std::vector<std::uint8_t>(with_unknown.begin(), with_unknown.end()));
    CHECK_THROWS_AS(load_manifest(dir / "unknown.json"), FormatError);

    std::string with_bad_version = json;
    const auto pos = with_bad_version.find("labelprop/1");
    with_bad_version.replace(pos, 11, "labelprop/9");
    detail::write_file_bytes(
        dir / "badver.json",
        std::vector<std::uint8_t>(with_bad_version.begin(), with_bad_version.end()));
    CHECK_THROWS_AS(load_manifest(dir / "badver.json"), FormatError);
}
