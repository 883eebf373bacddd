// labelprop: single executable exposing the full pipeline as subcommands.
// All diagnostics go to stderr; machine-readable output goes to files only.
// Every run writes a run.json echoing the resolved configuration, so two runs
// with identical seeds are byte-comparable.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "labelprop/eval.hpp"
#include "labelprop/flow_io.hpp"
#include "labelprop/grid.hpp"
#include "labelprop/manifest.hpp"
#include "labelprop/oracles.hpp"
#include "labelprop/propagation.hpp"
#include "labelprop/refine.hpp"
#include "labelprop/synth_world.hpp"

namespace lp = labelprop;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";

int default_threads() {
    if (const char* env = std::getenv("LABELPROP_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

void write_run_json(const fs::path& out_dir, const std::string& subcommand,
                    const std::map<std::string, std::string>& resolved) {
    nlohmann::ordered_json j;
    j["tool_version"] = kToolVersion;
    j["subcommand"] = subcommand;
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : resolved) cfg[k] = v;
    j["config"] = cfg;
    const std::string text = j.dump(2) + "\n";
    lp::detail::write_file_bytes(out_dir / "run.json",
                                 std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Standard-noise defaults used by `gen --noise-preset standard`.
lp::OracleSet standard_noise(std::uint64_t seed, int num_classes, lp::ClassId rare_class,
                             const std::vector<lp::ClassId>& thin_classes) {
    lp::OracleSet noise;
    noise.motion.gaussian_sigma = 0.5;
    noise.motion.block_dropout_rate = 0.05;
    noise.motion.seed = lp::mix_seed(seed, 0x4D4F54ull);
    noise.semantic.confusion_rate = 0.15;
    noise.semantic.boundary_erosion_px = 2;
    noise.semantic.thin_structure_miss_rate = 0.5;
    noise.semantic.threshold = 0.9;
    noise.semantic.seed = lp::mix_seed(seed, 0x53454Dull);
    noise.semantic.confusion_table = lp::make_confusion_table(num_classes, rare_class);
    noise.semantic.thin_class_ids = thin_classes;
    return noise;
}

struct NoiseOverrides {
    std::optional<double> motion_sigma, motion_dropout, confusion, thin_miss, threshold;
    std::optional<int> erosion;

    void apply(lp::OracleSet& noise) const {
        if (motion_sigma) noise.motion.gaussian_sigma = *motion_sigma;
        if (motion_dropout) noise.motion.block_dropout_rate = *motion_dropout;
        if (confusion) noise.semantic.confusion_rate = *confusion;
        if (erosion) noise.semantic.boundary_erosion_px = *erosion;
        if (thin_miss) noise.semantic.thin_structure_miss_rate = *thin_miss;
        if (threshold) noise.semantic.threshold = *threshold;
    }

    void echo(std::map<std::string, std::string>& resolved, const lp::OracleSet& noise) const {
        resolved["noise.motion.gaussian_sigma"] = fmt(noise.motion.gaussian_sigma);
        resolved["noise.motion.block_dropout_rate"] = fmt(noise.motion.block_dropout_rate);
        resolved["noise.semantic.confusion_rate"] = fmt(noise.semantic.confusion_rate);
        resolved["noise.semantic.boundary_erosion_px"] =
            std::to_string(noise.semantic.boundary_erosion_px);
        resolved["noise.semantic.thin_structure_miss_rate"] =
            fmt(noise.semantic.thin_structure_miss_rate);
        resolved["noise.semantic.threshold"] = fmt(noise.semantic.threshold);
    }
};

void add_noise_flags(CLI::App* cmd, NoiseOverrides& ov) {
    cmd->add_option("--motion-sigma", ov.motion_sigma, "Override motion Gaussian sigma (px)");
    cmd->add_option("--motion-dropout", ov.motion_dropout, "Override 8x8 block dropout rate");
    cmd->add_option("--confusion", ov.confusion, "Override semantic confusion rate");
    cmd->add_option("--erosion", ov.erosion, "Override boundary erosion band (px)");
    cmd->add_option("--thin-miss", ov.thin_miss, "Override thin-structure miss rate");
    cmd->add_option("--threshold", ov.threshold, "Override semantic confidence threshold");
}

// ---------------------------------------------------------------------------

int run_gen(std::uint64_t seed, int sequences, const std::string& preset,
            const NoiseOverrides& ov, const fs::path& out_dir) {
    lp::DatasetManifest manifest;
    manifest.seed = seed;
    const lp::SceneConfig probe = lp::standard_benchmark(seed);
    manifest.num_classes = probe.num_classes;
    if (preset == "standard")
        manifest.noise = standard_noise(seed, probe.num_classes, probe.rare_class, {6});
    else {
        manifest.noise.motion.seed = lp::mix_seed(seed, 0x4D4F54ull);
        manifest.noise.semantic.seed = lp::mix_seed(seed, 0x53454Dull);
        manifest.noise.semantic.confusion_table =
            lp::make_confusion_table(probe.num_classes, probe.rare_class);
        manifest.noise.semantic.thin_class_ids = {6};
    }
    ov.apply(manifest.noise);

    for (int i = 0; i < sequences; ++i) {
        const lp::Sequence seq = lp::generate(lp::standard_benchmark(seed + i));
        char name[32];
        std::snprintf(name, sizeof(name), "seq%04d", i);
        manifest.sequences.push_back(lp::write_sequence_files(seq, out_dir, name));
        std::cerr << "gen: wrote " << name << " (" << seq.frame_count() << " frames)\n";
    }
    lp::save_manifest(manifest, out_dir / "manifest.json");

    std::map<std::string, std::string> resolved{{"seed", std::to_string(seed)},
                                                {"sequences", std::to_string(sequences)},
                                                {"noise_preset", preset}};
    ov.echo(resolved, manifest.noise);
    write_run_json(out_dir, "gen", resolved);
    return 0;
}

int run_propagate(const fs::path& manifest_path, const fs::path& out_dir,
                  const std::string& method_name, int horizon, double tau,
                  const std::string& refiner_path, const NoiseOverrides& ov) {
    const lp::Method method = lp::method_from_name(method_name);
    if (method == lp::Method::WarpRefine && refiner_path.empty())
        throw lp::ConfigError("propagate: --method warp-refine requires --refiner <params-file>");

    lp::DatasetManifest manifest = lp::load_manifest(manifest_path);
    ov.apply(manifest.noise);

    std::unique_ptr<lp::ConvRefiner> refiner;
    if (!refiner_path.empty()) refiner = std::make_unique<lp::ConvRefiner>(lp::load_refiner(refiner_path));

    lp::PropagateConfig cfg;
    cfg.horizon = horizon;
    cfg.method = method;
    cfg.gate.tau = static_cast<float>(tau);

    for (std::size_t i = 0; i < manifest.sequences.size(); ++i) {
        const lp::Sequence seq = lp::load_sequence(manifest, i);
        // Same per-sequence stream derivation as horizon_curve, so rasters
        // written here score identically to in-memory evaluation.
        lp::OracleSet seq_noise = manifest.noise;
        seq_noise.motion.seed = lp::mix_seed(manifest.noise.motion.seed, seq.config.seed);
        seq_noise.semantic.seed = lp::mix_seed(manifest.noise.semantic.seed, seq.config.seed);
        const auto outputs =
            lp::propagate(seq, seq.annotated_index, cfg, seq_noise, refiner.get());
        for (const auto& [off, labels] : outputs) {
            char name[96];
            std::snprintf(name, sizeof(name), "%s/%02d_%s.png",
                          manifest.sequences[i].name.c_str(), seq.annotated_index + off,
                          method_name.c_str());
            lp::write_label_image(labels, out_dir / name);
        }
        std::cerr << "propagate: " << manifest.sequences[i].name << " done\n";
    }

    std::map<std::string, std::string> resolved{
        {"manifest", manifest_path.string()}, {"method", method_name},
        {"horizon", std::to_string(horizon)}, {"tau", fmt(tau)},
        {"refiner", refiner_path}};
    ov.echo(resolved, manifest.noise);
    write_run_json(out_dir, "propagate", resolved);
    return 0;
}

int run_train(const fs::path& manifest_path, const fs::path& out_file, int steps, double lr,
              double momentum, int batch, std::uint64_t seed, double tau,
              const NoiseOverrides& ov) {
    lp::DatasetManifest manifest = lp::load_manifest(manifest_path);
    ov.apply(manifest.noise);

    std::vector<lp::Sequence> dataset;
    for (std::size_t i = 0; i < manifest.sequences.size(); ++i)
        dataset.push_back(lp::load_sequence(manifest, i));

    lp::TrainConfig cfg;
    cfg.steps = steps;
    cfg.learning_rate = lr;
    cfg.momentum = momentum;
    cfg.batch_size = batch;
    cfg.seed = seed;
    cfg.gate.tau = static_cast<float>(tau);

    lp::RefinerParams params =
        lp::init_refiner_params<float>(manifest.num_classes, lp::mix_seed(seed, 0x1A17ull));
    lp::TrainResult result = lp::train(std::move(params), dataset, cfg, manifest.noise);

    nlohmann::ordered_json echo;
    echo["learning_rate"] = lr;
    echo["momentum"] = momentum;
    echo["steps"] = steps;
    echo["batch_size"] = batch;
    echo["seed"] = seed;
    echo["tau"] = tau;
    result.params.config_echo = echo.dump();
    const fs::path out_dir = out_file.has_parent_path() ? out_file.parent_path() : fs::path(".");
    lp::save_refiner(result.params, out_file);

    std::string trace = "step,loss\n";
    for (std::size_t s = 0; s < result.loss_trace.size(); ++s)
        trace += std::to_string(s + 1) + "," + lp::detail::fmt_double(result.loss_trace[s]) + "\n";
    lp::detail::write_text_file(out_dir / "loss_trace.csv", trace);

    std::map<std::string, std::string> resolved{
        {"manifest", manifest_path.string()}, {"steps", std::to_string(steps)},
        {"lr", fmt(lr)},                      {"momentum", fmt(momentum)},
        {"batch", std::to_string(batch)},     {"seed", std::to_string(seed)},
        {"tau", fmt(tau)}};
    ov.echo(resolved, manifest.noise);
    write_run_json(out_dir, "train-refiner", resolved);
    std::cerr << "train-refiner: " << steps << " steps, final loss "
              << (result.loss_trace.empty() ? 0.0 : result.loss_trace.back()) << "\n";
    return 0;
}

int run_eval(const fs::path& manifest_path, const fs::path& out_dir,
             const std::string& methods_csv, int horizon, double tau,
             const std::string& refiner_path, const std::string& pred_dir, int threads,
             const NoiseOverrides& ov) {
    lp::DatasetManifest manifest = lp::load_manifest(manifest_path);
    ov.apply(manifest.noise);

    std::vector<std::string> method_names;
    {
        std::string token;
        for (char c : methods_csv + ",") {
            if (c == ',') {
                if (!token.empty()) method_names.push_back(token);
                token.clear();
            } else {
                token.push_back(c);
            }
        }
    }
    if (method_names.empty()) throw lp::ConfigError("eval: no methods given");

    std::vector<lp::Sequence> sequences;
    for (std::size_t i = 0; i < manifest.sequences.size(); ++i)
        sequences.push_back(lp::load_sequence(manifest, i));

    lp::HorizonReport report;
    if (!pred_dir.empty()) {
        // Score externally produced label rasters named <seq>/<frame>_<method>.png.
        report.horizon = horizon;
        report.num_classes = manifest.num_classes;
        report.sequence_count = static_cast<int>(sequences.size());
        report.methods = method_names;
        report.matrices.resize(method_names.size());
        for (std::size_t m = 0; m < method_names.size(); ++m) {
            for (int off = -horizon; off <= horizon; ++off) {
                if (off == 0) continue;
                lp::ConfusionMatrix cm(manifest.num_classes);
                for (std::size_t i = 0; i < sequences.size(); ++i) {
                    const int frame = sequences[i].annotated_index + off;
                    char name[96];
                    std::snprintf(name, sizeof(name), "%s/%02d_%s.png",
                                  manifest.sequences[i].name.c_str(), frame,
                                  method_names[m].c_str());
                    const lp::LabelMap pred =
                        lp::read_label_image(fs::path(pred_dir) / name, manifest.num_classes);
                    lp::accumulate(cm, pred, sequences[i].labels[frame]);
                }
                report.matrices[m].emplace(off, std::move(cm));
            }
        }
    } else {
        std::vector<lp::Method> methods;
        for (const std::string& name : method_names) methods.push_back(lp::method_from_name(name));
        std::unique_ptr<lp::ConvRefiner> refiner;
        for (lp::Method m : methods)
            if (m == lp::Method::WarpRefine && refiner_path.empty())
                throw lp::ConfigError("eval: warp-refine requires --refiner <params-file>");
        if (!refiner_path.empty())
            refiner = std::make_unique<lp::ConvRefiner>(lp::load_refiner(refiner_path));
        std::vector<const lp::Sequence*> ptrs;
        for (const lp::Sequence& s : sequences) ptrs.push_back(&s);
        lp::GateConfig gate;
        gate.tau = static_cast<float>(tau);
        report = lp::horizon_curve(ptrs, methods, horizon, manifest.noise, refiner.get(), gate,
                                   threads);
    }

    nlohmann::ordered_json echo;
    echo["manifest"] = manifest_path.string();
    echo["methods"] = method_names;
    echo["horizon"] = horizon;
    echo["tau"] = tau;
    echo["pred_dir"] = pred_dir;
    report.config_echo = echo.dump();
    lp::save_report(report, out_dir / "report.json");

    std::map<std::string, std::string> resolved{
        {"manifest", manifest_path.string()}, {"methods", methods_csv},
        {"horizon", std::to_string(horizon)}, {"tau", fmt(tau)},
        {"refiner", refiner_path},            {"pred_dir", pred_dir},
        {"threads", std::to_string(threads)}};
    ov.echo(resolved, manifest.noise);
    write_run_json(out_dir, "eval", resolved);
    std::cerr << "eval: report written to " << (out_dir / "report.json") << "\n";
    return 0;
}

int run_report(const fs::path& report_path, const fs::path& out_dir) {
    const lp::HorizonReport report = lp::load_report(report_path);
    lp::emit_report(report, out_dir);
    write_run_json(out_dir, "report",
                   {{"report", report_path.string()}});
    std::cerr << "report: wrote horizon.csv, summary.csv, curve.svg\n";
    return 0;
}

int run_tau_sweep(const fs::path& manifest_path, const fs::path& out_dir,
                  const std::vector<double>& taus, int horizon, int threads,
                  const NoiseOverrides& ov) {
    lp::DatasetManifest manifest = lp::load_manifest(manifest_path);
    ov.apply(manifest.noise);
    std::vector<lp::Sequence> sequences;
    for (std::size_t i = 0; i < manifest.sequences.size(); ++i)
        sequences.push_back(lp::load_sequence(manifest, i));
    std::vector<const lp::Sequence*> ptrs;
    for (const lp::Sequence& s : sequences) ptrs.push_back(&s);

    const auto rows = lp::tau_sweep(ptrs, taus, horizon, manifest.noise, threads);
    std::string csv = "tau,miou_ignore_as_class,miou_ignore_excluded\n";
    for (const auto& row : rows)
        csv += lp::detail::fmt_double(row.tau) + "," + lp::detail::fmt_double(row.miou_as_class) +
               "," + lp::detail::fmt_double(row.miou_excluded) + "\n";
    lp::detail::write_text_file(out_dir / "tau_sweep.csv", csv);

    std::map<std::string, std::string> resolved{{"manifest", manifest_path.string()},
                                                {"horizon", std::to_string(horizon)},
                                                {"threads", std::to_string(threads)}};
    for (std::size_t i = 0; i < taus.size(); ++i)
        resolved["tau." + std::to_string(i)] = fmt(taus[i]);
    ov.echo(resolved, manifest.noise);
    write_run_json(out_dir, "tau-sweep", resolved);
    return 0;
}

int run_gradcheck(std::uint64_t seed, int size, int classes, double tolerance) {
    const auto params = lp::make_gradcheck_params<double>(classes, lp::mix_seed(seed, 0x6Cull));
    const lp::RefinerSample sample = lp::make_gradcheck_sample(size, size, classes, seed);
    const lp::GradCheckReport report = lp::gradient_check(params, sample, tolerance);
    for (const auto& entry : report.entries)
        std::cerr << "gradcheck: " << entry.tensor << " max_rel_error=" << entry.max_rel_error
                  << (entry.max_rel_error <= tolerance ? " ok" : " FAIL") << "\n";
    std::cerr << "gradcheck: " << (report.passed ? "PASS" : "FAIL") << " at tolerance "
              << tolerance << "\n";
    return report.passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"labelprop: video label propagation engine"};
    app.require_subcommand(1);
    int threads = default_threads();
    app.add_option("--threads", threads, "Worker threads (1 = bit-deterministic)");

    // gen
    auto* gen = app.add_subcommand("gen", "Generate synthetic sequences and a manifest");
    std::uint64_t gen_seed = 0;
    int gen_sequences = 1;
    std::string gen_preset = "standard";
    std::string gen_out;
    NoiseOverrides gen_ov;
    gen->add_option("--seed", gen_seed, "Generator seed")->required();
    gen->add_option("--sequences", gen_sequences, "Number of sequences");
    gen->add_option("--noise-preset", gen_preset, "Noise preset: standard | none")
        ->check(CLI::IsMember({"standard", "none"}));
    gen->add_option("--out", gen_out, "Output directory")->required();
    add_noise_flags(gen, gen_ov);

    // propagate
    auto* prop = app.add_subcommand("propagate", "Propagate labels through a manifest");
    std::string prop_manifest, prop_method = "warp-inpaint", prop_refiner, prop_out;
    int prop_horizon = 10;
    double prop_tau = 0.10;
    NoiseOverrides prop_ov;
    prop->add_option("--manifest", prop_manifest, "Manifest path")->required();
    prop->add_option("--method", prop_method,
                     "motion-only | semantic-only | warp-inpaint | warp-refine");
    prop->add_option("--horizon", prop_horizon, "Propagation horizon K");
    prop->add_option("--tau", prop_tau, "Photometric gate threshold");
    prop->add_option("--refiner", prop_refiner, "Refiner params file (warp-refine)");
    prop->add_option("--out-dir,--out", prop_out, "Output directory")->required();
    add_noise_flags(prop, prop_ov);

    // train-refiner
    auto* tr = app.add_subcommand("train-refiner", "Train the denoiser via cycle consistency");
    std::string tr_manifest, tr_out;
    int tr_steps = 500, tr_batch = 1;
    double tr_lr = 0.01, tr_momentum = 0.9, tr_tau = 0.10;
    std::uint64_t tr_seed = 0;
    NoiseOverrides tr_ov;
    tr->add_option("--manifest", tr_manifest, "Manifest path")->required();
    tr->add_option("--steps", tr_steps, "Training steps");
    tr->add_option("--lr", tr_lr, "Learning rate");
    tr->add_option("--momentum", tr_momentum, "SGD momentum");
    tr->add_option("--batch", tr_batch, "Cycle samples per step");
    tr->add_option("--seed", tr_seed, "Training seed");
    tr->add_option("--tau", tr_tau, "Photometric gate threshold");
    tr->add_option("--out", tr_out, "Output params file")->required();
    add_noise_flags(tr, tr_ov);

    // eval
    auto* ev = app.add_subcommand("eval", "Score propagation methods against ground truth");
    std::string ev_manifest, ev_methods = "motion-only,semantic-only,warp-inpaint", ev_refiner,
                ev_pred_dir, ev_out;
    int ev_horizon = 10;
    double ev_tau = 0.10;
    NoiseOverrides ev_ov;
    ev->add_option("--manifest", ev_manifest, "Manifest path")->required();
    ev->add_option("--methods", ev_methods, "Comma-separated method list");
    ev->add_option("--horizon", ev_horizon, "Horizon K");
    ev->add_option("--tau", ev_tau, "Photometric gate threshold");
    ev->add_option("--refiner", ev_refiner, "Refiner params file (warp-refine)");
    ev->add_option("--pred-dir", ev_pred_dir, "Score existing rasters instead of propagating");
    ev->add_option("--out", ev_out, "Output directory")->required();
    add_noise_flags(ev, ev_ov);

    // report
    auto* rep = app.add_subcommand("report", "Emit CSV/SVG from a report.json");
    std::string rep_report, rep_out;
    rep->add_option("--report", rep_report, "report.json path")->required();
    rep->add_option("--out", rep_out, "Output directory")->required();

    // tau-sweep
    auto* sweep = app.add_subcommand("tau-sweep", "Sweep the gate threshold for warp-inpaint");
    std::string sw_manifest, sw_out;
    std::vector<double> sw_taus;
    int sw_horizon = 10;
    NoiseOverrides sw_ov;
    sweep->add_option("--manifest", sw_manifest, "Manifest path")->required();
    sweep->add_option("--taus", sw_taus, "Tau values")->required()->delimiter(',');
    sweep->add_option("--horizon", sw_horizon, "Horizon K");
    sweep->add_option("--out", sw_out, "Output directory")->required();
    add_noise_flags(sweep, sw_ov);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Verify analytic gradients (64-bit)");
    std::uint64_t gc_seed = 7;
    int gc_size = 8, gc_classes = 8;
    double gc_tol = 1e-3;
    gc->add_option("--seed", gc_seed, "Sample seed");
    gc->add_option("--size", gc_size, "Input side length");
    gc->add_option("--classes", gc_classes, "Class count");
    gc->add_option("--tolerance", gc_tol, "Max relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints usage to stderr/stdout per CLI11
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed())
            return run_gen(gen_seed, gen_sequences, gen_preset, gen_ov, gen_out);
        if (prop->parsed())
            return run_propagate(prop_manifest, prop_out, prop_method, prop_horizon, prop_tau,
                                 prop_refiner, prop_ov);
        if (tr->parsed())
            return run_train(tr_manifest, tr_out, tr_steps, tr_lr, tr_momentum, tr_batch, tr_seed,
                             tr_tau, tr_ov);
        if (ev->parsed())
            return run_eval(ev_manifest, ev_out, ev_methods, ev_horizon, ev_tau, ev_refiner,
                            ev_pred_dir, threads, ev_ov);
        if (rep->parsed()) return run_report(rep_report, rep_out);
        if (sweep->parsed())
            return run_tau_sweep(sw_manifest, sw_out, sw_taus, sw_horizon, threads, sw_ov);
        if (gc->parsed()) return run_gradcheck(gc_seed, gc_size, gc_classes, gc_tol);
    } catch (const lp::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const lp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
