#pragma once

// Dataset manifests: a JSON schema tying together frames, labels, flow
// fields and the noise configuration echo for one or more sequences, plus
// disk round-trips for whole sequences and horizon reports. Unknown JSON
// fields are rejected rather than ignored.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelprop/errors.hpp"
#include "labelprop/eval.hpp"
#include "labelprop/flow_io.hpp"
#include "labelprop/oracles.hpp"
#include "labelprop/synth_world.hpp"

namespace labelprop {

inline constexpr const char* kManifestFormatVersion = "labelprop/1";

struct FrameEntry {
    std::string image;
    std::string label;
    std::string flow;     // gather into the previous frame; empty for frame 0
    std::string rev_flow; // gather into the next frame; empty for the last frame
};

struct SequenceEntry {
    std::string name;
    int annotated_index = 0;
    std::vector<FrameEntry> frames;
};

struct DatasetManifest {
    std::string format_version = kManifestFormatVersion;
    std::uint64_t seed = 0;
    int num_classes = 0;
    OracleSet noise;
    std::vector<SequenceEntry> sequences;
    std::filesystem::path root; // directory of the manifest file; set on load
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* key : allowed)
            if (item.key() == key) ok = true;
        if (!ok) throw FormatError("manifest: unknown field '" + item.key() + "' in " + where);
    }
}

} // namespace detail

inline void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["format_version"] = manifest.format_version;
    j["seed"] = manifest.seed;
    j["num_classes"] = manifest.num_classes;
    j["ignore_id"] = kIgnoreId;
    nlohmann::ordered_json motion;
    motion["gaussian_sigma"] = manifest.noise.motion.gaussian_sigma;
    motion["block_dropout_rate"] = manifest.noise.motion.block_dropout_rate;
    motion["seed"] = manifest.noise.motion.seed;
    nlohmann::ordered_json semantic;
    semantic["confusion_rate"] = manifest.noise.semantic.confusion_rate;
    semantic["boundary_erosion_px"] = manifest.noise.semantic.boundary_erosion_px;
    semantic["thin_structure_miss_rate"] = manifest.noise.semantic.thin_structure_miss_rate;
    semantic["confidence_model"] = manifest.noise.semantic.confidence_model;
    semantic["threshold"] = manifest.noise.semantic.threshold;
    semantic["seed"] = manifest.noise.semantic.seed;
    semantic["confusion_table"] = manifest.noise.semantic.confusion_table;
    semantic["thin_class_ids"] = manifest.noise.semantic.thin_class_ids;
    j["noise"] = {{"motion", motion}, {"semantic", semantic}};
    nlohmann::ordered_json seqs = nlohmann::ordered_json::array();
    for (const SequenceEntry& s : manifest.sequences) {
        nlohmann::ordered_json js;
        js["name"] = s.name;
        js["annotated_index"] = s.annotated_index;
        nlohmann::ordered_json frames = nlohmann::ordered_json::array();
        for (const FrameEntry& f : s.frames) {
            nlohmann::ordered_json jf;
            jf["image"] = f.image;
            jf["label"] = f.label;
            jf["flow"] = f.flow.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(f.flow);
            jf["rev_flow"] =
                f.rev_flow.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(f.rev_flow);
            frames.push_back(jf);
        }
        js["frames"] = frames;
        seqs.push_back(js);
    }
    j["sequences"] = seqs;
    const std::string text = j.dump(2) + "\n";
    detail::write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        const std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("manifest: not valid JSON: " + path.string() + ": " + e.what());
    }
    detail::reject_unknown_keys(
        j, {"format_version", "seed", "num_classes", "ignore_id", "noise", "sequences"},
        "manifest root");
    DatasetManifest m;
    try {
        m.format_version = j.at("format_version").get<std::string>();
        if (m.format_version != kManifestFormatVersion)
            throw FormatError("manifest: format_version mismatch, expected " +
                              std::string(kManifestFormatVersion) + " got " + m.format_version +
                              ": " + path.string());
        m.seed = j.at("seed").get<std::uint64_t>();
        m.num_classes = j.at("num_classes").get<int>();
        if (j.at("ignore_id").get<int>() != kIgnoreId)
            throw FormatError("manifest: ignore_id must be 255: " + path.string());
        const auto& noise = j.at("noise");
        detail::reject_unknown_keys(noise, {"motion", "semantic"}, "noise");
        const auto& motion = noise.at("motion");
        detail::reject_unknown_keys(motion, {"gaussian_sigma", "block_dropout_rate", "seed"},
                                    "noise.motion");
        m.noise.motion.gaussian_sigma = motion.at("gaussian_sigma").get<double>();
        m.noise.motion.block_dropout_rate = motion.at("block_dropout_rate").get<double>();
        m.noise.motion.seed = motion.at("seed").get<std::uint64_t>();
        const auto& semantic = noise.at("semantic");
        detail::reject_unknown_keys(semantic,
                                    {"confusion_rate", "boundary_erosion_px",
                                     "thin_structure_miss_rate", "confidence_model", "threshold",
                                     "seed", "confusion_table", "thin_class_ids"},
                                    "noise.semantic");
        m.noise.semantic.confusion_rate = semantic.at("confusion_rate").get<double>();
        m.noise.semantic.boundary_erosion_px = semantic.at("boundary_erosion_px").get<int>();
        m.noise.semantic.thin_structure_miss_rate =
            semantic.at("thin_structure_miss_rate").get<double>();
        m.noise.semantic.confidence_model = semantic.at("confidence_model").get<std::string>();
        m.noise.semantic.threshold = semantic.at("threshold").get<double>();
        m.noise.semantic.seed = semantic.at("seed").get<std::uint64_t>();
        m.noise.semantic.confusion_table =
            semantic.at("confusion_table").get<std::vector<ClassId>>();
        m.noise.semantic.thin_class_ids =
            semantic.at("thin_class_ids").get<std::vector<ClassId>>();
        for (const auto& js : j.at("sequences")) {
            detail::reject_unknown_keys(js, {"name", "annotated_index", "frames"}, "sequence");
            SequenceEntry s;
            s.name = js.at("name").get<std::string>();
            s.annotated_index = js.at("annotated_index").get<int>();
            for (const auto& jf : js.at("frames")) {
                detail::reject_unknown_keys(jf, {"image", "label", "flow", "rev_flow"}, "frame");
                FrameEntry f;
                f.image = jf.at("image").get<std::string>();
                f.label = jf.at("label").get<std::string>();
                if (!jf.at("flow").is_null()) f.flow = jf.at("flow").get<std::string>();
                if (!jf.at("rev_flow").is_null()) f.rev_flow = jf.at("rev_flow").get<std::string>();
                s.frames.push_back(std::move(f));
            }
            m.sequences.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest: schema violation: " + path.string() + ": " + e.what());
    }
    m.root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

    for (const SequenceEntry& s : m.sequences) {
        if (s.annotated_index < 0 || s.annotated_index >= static_cast<int>(s.frames.size()))
            throw ValidationError("manifest: annotated_index out of range in sequence " + s.name);
        for (const FrameEntry& f : s.frames)
            for (const std::string* rel : {&f.image, &f.label, &f.flow, &f.rev_flow})
                if (!rel->empty() && !std::filesystem::exists(m.root / *rel))
                    throw IoError("manifest: missing file '" + *rel + "' referenced by sequence " +
                                  s.name);
    }
    return m;
}

// Writes every frame, label and flow field of a sequence below root/name and
// returns the manifest entry describing it.
inline SequenceEntry write_sequence_files(const Sequence& seq, const std::filesystem::path& root,
                                          const std::string& name) {
    SequenceEntry entry;
    entry.name = name;
    entry.annotated_index = seq.annotated_index;
    const int n = seq.frame_count();
    char buf[64];
    for (int k = 0; k < n; ++k) {
        FrameEntry f;
        std::snprintf(buf, sizeof(buf), "%s/image_%02d.png", name.c_str(), k);
        f.image = buf;
        write_image(seq.frames[k], root / f.image);
        std::snprintf(buf, sizeof(buf), "%s/label_%02d.png", name.c_str(), k);
        f.label = buf;
        write_label_image(seq.labels[k], root / f.label);
        if (k >= 1) {
            std::snprintf(buf, sizeof(buf), "%s/flow_%02d.flo", name.c_str(), k);
            f.flow = buf;
            write_flo(seq.flows[k], root / f.flow);
        }
        if (k + 1 < n) {
            std::snprintf(buf, sizeof(buf), "%s/rev_flow_%02d.flo", name.c_str(), k);
            f.rev_flow = buf;
            write_flo(seq.rev_flows[k], root / f.rev_flow);
        }
        entry.frames.push_back(std::move(f));
    }
    return entry;
}

// Loads one sequence of a manifest back into memory. Provenance flags are
// generator-internal and do not exist on disk.
inline Sequence load_sequence(const DatasetManifest& manifest, std::size_t index) {
    detail::require(index < manifest.sequences.size(), "load_sequence: index out of range");
    const SequenceEntry& entry = manifest.sequences[index];
    Sequence seq;
    seq.annotated_index = entry.annotated_index;
    const int n = static_cast<int>(entry.frames.size());
    seq.flows.resize(n);
    seq.rev_flows.resize(n);
    for (int k = 0; k < n; ++k) {
        const FrameEntry& f = entry.frames[k];
        seq.frames.push_back(read_image(manifest.root / f.image));
        seq.labels.push_back(read_label_image(manifest.root / f.label, manifest.num_classes));
        if (!f.flow.empty()) seq.flows[k] = read_flo(manifest.root / f.flow);
        if (!f.rev_flow.empty()) seq.rev_flows[k] = read_flo(manifest.root / f.rev_flow);
    }
    seq.config.width = seq.frames.front().width;
    seq.config.height = seq.frames.front().height;
    seq.config.frame_count = n;
    seq.config.num_classes = manifest.num_classes;
    // Per-sequence stream seed so oracle noise is uncorrelated across the
    // sequences of one manifest.
    seq.config.seed = mix_seed(manifest.seed, index);
    return seq;
}

// ---------------------------------------------------------------------------
// Horizon report round-trip (consumed by the `report` subcommand).
// ---------------------------------------------------------------------------

inline void save_report(const HorizonReport& report, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["horizon"] = report.horizon;
    j["num_classes"] = report.num_classes;
    j["sequence_count"] = report.sequence_count;
    j["config_echo"] = report.config_echo;
    j["methods"] = report.methods;
    nlohmann::ordered_json mats = nlohmann::ordered_json::array();
    for (std::size_t m = 0; m < report.methods.size(); ++m) {
        nlohmann::ordered_json offsets = nlohmann::ordered_json::array();
        for (const auto& [off, cm] : report.matrices[m]) {
            nlohmann::ordered_json jo;
            jo["offset"] = off;
            jo["counts"] = cm.counts;
            offsets.push_back(jo);
        }
        mats.push_back(offsets);
    }
    j["matrices"] = mats;
    const std::string text = j.dump() + "\n";
    detail::write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline HorizonReport load_report(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        const std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("report: not valid JSON: " + path.string() + ": " + e.what());
    }
    HorizonReport report;
    try {
        report.horizon = j.at("horizon").get<int>();
        report.num_classes = j.at("num_classes").get<int>();
        report.sequence_count = j.at("sequence_count").get<int>();
        report.config_echo = j.at("config_echo").get<std::string>();
        report.methods = j.at("methods").get<std::vector<std::string>>();
        for (const auto& offsets : j.at("matrices")) {
            std::map<int, ConfusionMatrix> per_offset;
            for (const auto& jo : offsets) {
                ConfusionMatrix cm(report.num_classes);
                cm.counts = jo.at("counts").get<std::vector<std::uint64_t>>();
                if (cm.counts.size() !=
                    static_cast<std::size_t>(cm.side()) * static_cast<std::size_t>(cm.side()))
                    throw FormatError("report: matrix size mismatch: " + path.string());
                per_offset.emplace(jo.at("offset").get<int>(), std::move(cm));
            }
            report.matrices.push_back(std::move(per_offset));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("report: schema violation: " + path.string() + ": " + e.what());
    }
    return report;
}

} // namespace labelprop
