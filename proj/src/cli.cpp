#include "sfac/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sfac/profiler.hpp"
#include "sfac/tensor_io.hpp"
#include "sfac/trainer.hpp"

namespace sfac::cli {

namespace {

namespace fs = std::filesystem;

struct ModelFlags {
    int gamma = 16;
    int k_first = 3;
    int k_dw = 3;
    int n_classes = 4;
    std::string fa_gate = "shared_fc";
    bool bn_before_act = false;

    ShuffleFACConfig to_config() const {
        ShuffleFACConfig cfg;
        cfg.gamma = gamma;
        cfg.k_first = k_first;
        cfg.k_dw = k_dw;
        cfg.n_classes = n_classes;
        cfg.fa_gate = blocks::fa_gate_from_string(fa_gate);
        cfg.bn_before_act = bn_before_act;
        return cfg;
    }
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
    cmd->add_option("--gamma", f.gamma, "Channel scaling factor")->capture_default_str();
    cmd->add_option("--kernel-first", f.k_first, "First-stage convolution kernel size")
        ->capture_default_str();
    cmd->add_option("--kernel-dw", f.k_dw, "Depthwise kernel size inside FASC blocks")
        ->capture_default_str();
    cmd->add_option("--classes", f.n_classes, "Number of output classes")->capture_default_str();
    cmd->add_option("--fa-gate", f.fa_gate, "FA gate wiring: shared_fc or channel_mix")
        ->capture_default_str();
    cmd->add_flag("--bn-before-act", f.bn_before_act, "Apply BN before the activation");
}

void write_text_output(const std::string& dest, const std::string& text) {
    if (dest == "-") {
        std::cout << text << "\n";
        return;
    }
    std::ofstream os(dest);
    if (!os) throw FormatError("cannot open for writing: " + dest);
    os << text << "\n";
}

std::string human_count(std::uint64_t v) {
    std::ostringstream os;
    if (v >= 1000000) {
        os << std::fixed << std::setprecision(2) << static_cast<double>(v) / 1e6 << "M";
    } else if (v >= 1000) {
        os << std::fixed << std::setprecision(1) << static_cast<double>(v) / 1e3 << "K";
    } else {
        os << v;
    }
    return os.str();
}

nlohmann::json report_to_json(const complexity::ComplexityReport& r) {
    nlohmann::json j;
    j["total_params"] = r.total_params;
    j["total_params_excl_bias_bn"] = r.total_params_excl;
    j["total_macs"] = r.total_macs;
    j["convention"] = r.convention;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries) {
        nlohmann::json o;
        o["name"] = e.name;
        o["kind"] = complexity::to_string(e.kind);
        o["params"] = e.params;
        o["params_excl_bias_bn"] = e.params - e.aux_params;
        o["macs"] = e.macs;
        entries.push_back(o);
    }
    j["layers"] = entries;
    return j;
}

int cmd_summary(const ModelFlags& flags, std::uint64_t seed) {
    Model model = Model::build(flags.to_config(), seed);
    Summary s = summarize(model);
    std::cout << std::left << std::setw(12) << "stage" << std::setw(44) << "configuration"
              << std::setw(14) << "output" << std::right << std::setw(10) << "params"
              << std::setw(12) << "MACs" << "\n";
    for (const auto& row : s.rows) {
        std::cout << std::left << std::setw(12) << row.stage << std::setw(44) << row.config_desc
                  << std::setw(14) << row.out_shape << std::right << std::setw(10) << row.params
                  << std::setw(12) << row.macs << "\n";
    }
    std::cout << "\ntotal params (biases+BN counted): " << s.report.total_params << " ("
              << human_count(s.report.total_params) << ")\n"
              << "total params (biases+BN excluded): " << s.report.total_params_excl << " ("
              << human_count(s.report.total_params_excl) << ")\n"
              << "total MACs: " << s.report.total_macs << " (" << human_count(s.report.total_macs)
              << ")\n"
              << "stored trainable scalars: " << model.parameter_count() << "\n";
    return 0;
}

int cmd_count(const ModelFlags& flags, std::uint64_t seed, const std::string& json_dest,
              bool sweep) {
    if (sweep) {
        std::cout << std::left << std::setw(8) << "gamma" << std::setw(9) << "k_first"
                  << std::setw(7) << "k_dw" << std::right << std::setw(14) << "params"
                  << std::setw(14) << "params_excl" << std::setw(14) << "MACs" << "\n";
        for (int g : {8, 16, 32, 64}) {
            for (int kf : {3, 5}) {
                for (int kd : {3, 5}) {
                    ModelFlags f = flags;
                    f.gamma = g;
                    f.k_first = kf;
                    f.k_dw = kd;
                    Model m = Model::build(f.to_config(), seed);
                    auto r = complexity::model_cost(m);
                    std::cout << std::left << std::setw(8) << g << std::setw(9) << kf
                              << std::setw(7) << kd << std::right << std::setw(14)
                              << r.total_params << std::setw(14) << r.total_params_excl
                              << std::setw(14) << r.total_macs << "\n";
                }
            }
        }
        return 0;
    }
    Model model = Model::build(flags.to_config(), seed);
    complexity::ComplexityReport r = complexity::model_cost(model);
    if (!json_dest.empty()) {
        write_text_output(json_dest, report_to_json(r).dump(2));
        return 0;
    }
    std::cout << std::left << std::setw(22) << "layer" << std::setw(18) << "kind" << std::right
              << std::setw(10) << "params" << std::setw(12) << "MACs" << "\n";
    for (const auto& e : r.entries) {
        std::cout << std::left << std::setw(22) << e.name << std::setw(18)
                  << complexity::to_string(e.kind) << std::right << std::setw(10) << e.params
                  << std::setw(12) << e.macs << "\n";
    }
    std::cout << "\ntotal params: " << r.total_params
              << "  (excl biases+BN: " << r.total_params_excl << ")\ntotal MACs: " << r.total_macs
              << "\n";
    return 0;
}

int cmd_split(const std::string& manifest_path, std::uint64_t seed,
              const std::string& out_prefix) {
    trainer::Manifest manifest = trainer::Manifest::load(manifest_path);
    auto parts = trainer::split_recordings(manifest, seed);
    const char* names[3] = {"train", "val", "test"};
    for (int i = 0; i < 3; ++i) {
        const std::string path = out_prefix + names[i] + ".csv";
        parts[static_cast<std::size_t>(i)].save(path);
        std::cout << names[i] << ": " << parts[static_cast<std::size_t>(i)].rows.size()
                  << " rows -> " << path << "\n";
    }
    return 0;
}

int cmd_features(const std::string& manifest_path, const std::string& wav_path,
                 const std::string& out_dir, const std::string& out_prefix) {
    frontend::MelConfig mel;
    frontend::MelExtractor extractor(mel);
    if (!wav_path.empty()) {
        if (out_prefix.empty()) {
            std::cerr << "features: --wav requires --out-prefix\n";
            return 1;
        }
        frontend::WavData wav = frontend::read_wav(wav_path);
        auto samples = frontend::resample_to_16k(wav.samples, wav.sample_rate);
        const auto clips = frontend::segment(samples, fs::path(wav_path).stem().string(), mel);
        if (clips.empty()) {
            std::cerr << "features: " << wav_path << " is shorter than one clip\n";
        }
        for (const auto& clip : clips) {
            std::ostringstream name;
            name << out_prefix << std::setw(3) << std::setfill('0') << clip.offset_index
                 << ".sft1";
            write_sft1(name.str(), extractor.log_mel(clip));
            std::cout << name.str() << "\n";
        }
        return 0;
    }
    if (manifest_path.empty()) {
        std::cerr << "features: provide --manifest or --wav\n";
        return 1;
    }
    trainer::Manifest manifest = trainer::Manifest::load(manifest_path);
    fs::create_directories(out_dir);
    trainer::Manifest out_manifest;
    for (const auto& row : manifest.rows) {
        frontend::WavData wav = frontend::read_wav(row.path);
        auto samples = frontend::resample_to_16k(wav.samples, wav.sample_rate);
        const std::string stem = fs::path(row.path).stem().string();
        for (const auto& clip : frontend::segment(samples, row.recording_id, mel)) {
            std::ostringstream name;
            name << stem << "_" << std::setw(3) << std::setfill('0') << clip.offset_index
                 << ".sft1";
            const std::string path = (fs::path(out_dir) / name.str()).string();
            write_sft1(path, extractor.log_mel(clip));
            out_manifest.rows.push_back({path, row.label, row.recording_id});
        }
    }
    const std::string mpath = (fs::path(out_dir) / "manifest.csv").string();
    out_manifest.save(mpath);
    std::cout << "wrote " << out_manifest.rows.size() << " feature tensors; manifest: " << mpath
              << "\n";
    return 0;
}

int cmd_train(const ModelFlags& flags, const std::string& manifest_path,
              const std::string& val_manifest_path, const std::string& model_out,
              const std::string& log_out, trainer::TrainConfig tcfg, bool verbose) {
    trainer::Manifest train_manifest, val_manifest;
    if (val_manifest_path.empty()) {
        trainer::Manifest all = trainer::Manifest::load(manifest_path);
        auto parts = trainer::split_recordings(all, tcfg.seed);
        train_manifest = std::move(parts[0]);
        val_manifest = std::move(parts[1]);
        std::cout << "recording-level split 7:1:2 (seed " << tcfg.seed << "): "
                  << train_manifest.rows.size() << " train rows, " << val_manifest.rows.size()
                  << " val rows; test fifth left unused\n";
    } else {
        train_manifest = trainer::Manifest::load(manifest_path);
        val_manifest = trainer::Manifest::load(val_manifest_path);
    }

    trainer::FeatureDataset train_set = trainer::load_features(train_manifest);
    trainer::FeatureDataset val_set = trainer::load_features(val_manifest);
    std::cout << "features: " << train_set.size() << " train clips, " << val_set.size()
              << " val clips\n";

    Model model = Model::build(flags.to_config(), tcfg.seed);
    trainer::TrainResult result = trainer::train(model, train_set, val_set, tcfg);
    for (const auto& e : result.log) {
        if (verbose || e.epoch == static_cast<int>(result.log.size())) {
            std::cout << "epoch " << e.epoch << ": train_loss " << e.train_loss << " val_loss "
                      << e.val_loss << " val_acc " << e.val_acc << " val_macro_f1 "
                      << e.val_macro_f1 << "\n";
        }
    }
    std::cout << "best epoch: " << result.best_epoch << "\n";
    if (!log_out.empty()) {
        trainer::save_epoch_log_csv(log_out, result.log);
        std::cout << "epoch log: " << log_out << "\n";
    }
    model.save(model_out);
    std::cout << "model: " << model_out << "\n";
    return 0;
}

nlohmann::json metrics_to_json(const trainer::Metrics& m) {
    nlohmann::json j;
    j["accuracy"] = m.accuracy;
    j["macro_f1"] = m.macro_f1;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["confusion"] = m.confusion;
    j["samples"] = m.samples;
    return j;
}

int cmd_eval(const std::string& model_path, const std::string& manifest_path,
             const std::string& json_dest) {
    Model model = Model::load(model_path);
    trainer::Manifest manifest = trainer::Manifest::load(manifest_path);
    trainer::FeatureDataset data = trainer::load_features(manifest);
    trainer::Metrics m = trainer::evaluate(model, data);
    if (!json_dest.empty()) {
        write_text_output(json_dest, metrics_to_json(m).dump(2));
    }
    std::cout << "clips: " << m.samples << "\naccuracy: " << m.accuracy
              << "\nmacro F1: " << m.macro_f1 << "\n";
    for (std::size_t k = 0; k < m.f1.size(); ++k) {
        std::cout << "class " << k << ": precision " << m.precision[k] << " recall " << m.recall[k]
                  << " f1 " << m.f1[k] << "\n";
    }
    std::cout << "confusion (rows = truth):\n";
    for (const auto& row : m.confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) std::cout << (j ? " " : "") << row[j];
        std::cout << "\n";
    }
    return 0;
}

int cmd_classify(const std::string& model_path, const std::string& wav_path) {
    Model model = Model::load(model_path);
    frontend::MelConfig mel;
    frontend::MelExtractor extractor(mel);
    frontend::WavData wav = frontend::read_wav(wav_path);
    auto samples = frontend::resample_to_16k(wav.samples, wav.sample_rate);
    const auto clips = frontend::segment(samples, fs::path(wav_path).stem().string(), mel);
    if (clips.empty()) {
        throw ValueError("classify: " + wav_path + " is shorter than one 3-s clip");
    }
    std::cout << std::setprecision(17);
    for (const auto& clip : clips) {
        Tensor logits = model.forward(extractor.log_mel(clip));
        int best = 0;
        for (int c = 1; c < logits.dim(0); ++c) {
            if (logits[static_cast<std::size_t>(c)] > logits[static_cast<std::size_t>(best)]) {
                best = c;
            }
        }
        std::cout << clip.offset_index << "," << best;
        for (std::size_t c = 0; c < logits.numel(); ++c) std::cout << "," << logits[c];
        std::cout << "\n";
    }
    return 0;
}

int cmd_profile(const std::string& model_path, int runs, int warmup, double power_watts,
                double threshold, const std::string& json_dest, const std::string& input_path,
                const std::string& wav_path, bool end_to_end, std::uint64_t seed) {
    Model model = Model::load(model_path);
    profiler::EnergyParams energy;
    energy.p_cpu_watts = power_watts;

    if (end_to_end) {
        if (wav_path.empty()) {
            std::cerr << "profile: --end-to-end requires --wav\n";
            return 1;
        }
        frontend::MelConfig mel;
        frontend::MelExtractor extractor(mel);
        frontend::WavData wav = frontend::read_wav(wav_path);
        auto samples = frontend::resample_to_16k(wav.samples, wav.sample_rate);
        auto clips = frontend::segment(samples, "profile", mel);
        if (clips.empty()) throw ValueError("profile: wav shorter than one clip");
        const frontend::Clip& clip = clips.front();
        if (runs < 1) throw ValueError("profile: runs must be >= 1");
        const int prev = kernels::max_threads();
        kernels::set_max_threads(1);
        std::vector<double> lat;
        for (int i = 0; i < warmup; ++i) (void)model.forward(extractor.log_mel(clip));
        for (int i = 0; i < runs; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            (void)model.forward(extractor.log_mel(clip));
            const auto t1 = std::chrono::steady_clock::now();
            lat.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        kernels::set_max_threads(prev);
        double mean = 0.0;
        for (double v : lat) mean += v;
        mean /= static_cast<double>(lat.size());
        std::cout << "end-to-end (log-Mel + forward), " << runs << " runs: mean " << mean
                  << " ms, energy " << profiler::estimate_energy_uwh(mean, energy) << " uWh at "
                  << power_watts << " W\n";
        return 0;
    }

    Tensor input;
    if (!input_path.empty()) {
        input = read_sft1(input_path);
    } else {
        std::mt19937_64 rng(seed);
        input = Tensor::uniform(
            {model.config().in_channels, model.config().in_freq, model.config().in_time}, -1.0,
            1.0, rng);
    }
    profiler::ProfileReport report =
        profiler::profile(model, input, runs, warmup, energy, threshold);
    std::cout << "runs " << report.runs << " (warmup " << report.warmup << "): mean "
              << report.mean_ms << " ms, std " << report.std_ms << " ms, min " << report.min_ms
              << " ms, max " << report.max_ms << " ms\n"
              << "attributed " << report.attributed_fraction * 100.0
              << "% of wall time: core_arithmetic " << report.core_frac * 100.0
              << "%, tensor_manipulation " << report.tensor_frac * 100.0 << "%, other "
              << report.other_frac * 100.0 << "%\n"
              << "estimated energy " << report.energy_uwh << " uWh at " << report.p_cpu_watts
              << " W (utilization 0.9)\n";
    if (report.tensor_overhead_flagged) {
        std::cout << "warning: tensor-manipulation fraction >= " << report.flag_threshold
                  << "; MAC counts are an unreliable latency proxy in this regime\n";
    }
    if (!json_dest.empty()) write_text_output(json_dest, report.to_json());
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"shufflefac: lightweight frequency-aware acoustic model toolkit"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    bool verbose = false;
    app.add_option("--seed", seed, "RNG seed used by every subcommand")->capture_default_str();
    app.add_flag("--verbose", verbose, "Chatty output");

    ModelFlags summary_flags;
    auto* summary_cmd = app.add_subcommand("summary", "Print the stage table for a configuration");
    add_model_flags(summary_cmd, summary_flags);

    ModelFlags count_flags;
    std::string count_json;
    bool count_sweep = false;
    auto* count_cmd = app.add_subcommand("count", "Per-layer parameter/MAC accounting");
    add_model_flags(count_cmd, count_flags);
    count_cmd->add_option("--json", count_json, "Write the report as JSON to a file, or - for stdout");
    count_cmd->add_flag("--sweep", count_sweep, "Print totals over a kernel-size sweep");

    std::string split_manifest, split_prefix = "./";
    auto* split_cmd = app.add_subcommand("split", "Recording-level 7:1:2 train/val/test split");
    split_cmd->add_option("--manifest", split_manifest, "Input manifest CSV")->required();
    split_cmd->add_option("--out-prefix", split_prefix, "Prefix for train/val/test.csv outputs")
        ->capture_default_str();

    std::string feat_manifest, feat_wav, feat_out_dir = "features", feat_prefix;
    auto* feat_cmd = app.add_subcommand("features", "Extract log-Mel tensors to SFT1 files");
    feat_cmd->add_option("--manifest", feat_manifest, "WAV manifest to extract");
    feat_cmd->add_option("--wav", feat_wav, "Single WAV file to extract");
    feat_cmd->add_option("--out-dir", feat_out_dir, "Output directory for manifest mode")
        ->capture_default_str();
    feat_cmd->add_option("--out-prefix", feat_prefix, "Output prefix for single-wav mode");

    ModelFlags train_flags;
    std::string train_manifest, train_val_manifest, train_out = "model.sfac", train_log;
    trainer::TrainConfig tcfg;
    auto* train_cmd = app.add_subcommand("train", "Train on a manifest with the recipe defaults");
    add_model_flags(train_cmd, train_flags);
    train_cmd->add_option("--manifest", train_manifest, "Training manifest (WAV or SFT1 rows)")
        ->required();
    train_cmd->add_option("--val-manifest", train_val_manifest,
                          "Validation manifest; omitted = internal 7:1:2 split");
    train_cmd->add_option("--out", train_out, "Output model path")->capture_default_str();
    train_cmd->add_option("--log", train_log, "Epoch log CSV path");
    train_cmd->add_option("--epochs", tcfg.max_epochs, "Maximum epochs")->capture_default_str();
    train_cmd->add_option("--batch-size", tcfg.batch_size, "Mini-batch size")
        ->capture_default_str();
    train_cmd->add_option("--lr", tcfg.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--patience", tcfg.patience,
                          "Early-stop patience on validation loss (0 = off)")
        ->capture_default_str();

    std::string eval_model, eval_manifest, eval_json;
    auto* eval_cmd = app.add_subcommand("eval", "Clip-level metrics on a manifest");
    eval_cmd->add_option("--model", eval_model, "Model file")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "Manifest CSV")->required();
    eval_cmd->add_option("--json", eval_json, "Write metrics JSON to a file, or - for stdout");

    std::string classify_model, classify_wav;
    auto* classify_cmd = app.add_subcommand("classify", "Per-clip predictions for a WAV file");
    classify_cmd->add_option("--model", classify_model, "Model file")->required();
    classify_cmd->add_option("--wav", classify_wav, "Input WAV")->required();

    std::string prof_model, prof_json, prof_input, prof_wav;
    int prof_runs = 100, prof_warmup = 10;
    double prof_power = 10.0, prof_threshold = 0.15;
    bool prof_e2e = false;
    auto* prof_cmd = app.add_subcommand("profile", "Latency/attribution/energy benchmark");
    prof_cmd->add_option("--model", prof_model, "Model file")->required();
    prof_cmd->add_option("--runs", prof_runs, "Timed runs")->capture_default_str();
    prof_cmd->add_option("--warmup", prof_warmup, "Discarded warmup runs")->capture_default_str();
    prof_cmd->add_option("--power-watts", prof_power, "Assumed CPU peak power")
        ->capture_default_str();
    prof_cmd->add_option("--threshold", prof_threshold,
                         "Tensor-manipulation fraction that flags the report")
        ->capture_default_str();
    prof_cmd->add_option("--json", prof_json, "Write the report JSON to a file, or - for stdout");
    prof_cmd->add_option("--input", prof_input, "SFT1 feature tensor to run (default: random)");
    prof_cmd->add_option("--wav", prof_wav, "WAV input for --end-to-end");
    prof_cmd->add_flag("--end-to-end", prof_e2e, "Time log-Mel extraction plus forward");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    tcfg.seed = seed;
    try {
        if (summary_cmd->parsed()) return cmd_summary(summary_flags, seed);
        if (count_cmd->parsed()) return cmd_count(count_flags, seed, count_json, count_sweep);
        if (split_cmd->parsed()) return cmd_split(split_manifest, seed, split_prefix);
        if (feat_cmd->parsed()) {
            return cmd_features(feat_manifest, feat_wav, feat_out_dir, feat_prefix);
        }
        if (train_cmd->parsed()) {
            return cmd_train(train_flags, train_manifest, train_val_manifest, train_out, train_log,
                             tcfg, verbose);
        }
        if (eval_cmd->parsed()) return cmd_eval(eval_model, eval_manifest, eval_json);
        if (classify_cmd->parsed()) return cmd_classify(classify_model, classify_wav);
        if (prof_cmd->parsed()) {
            return cmd_profile(prof_model, prof_runs, prof_warmup, prof_power, prof_threshold,
                               prof_json, prof_input, prof_wav, prof_e2e, seed);
        }
        std::cerr << "usage error: no subcommand\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace sfac::cli
