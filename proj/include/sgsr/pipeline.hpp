#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sgsr/train.hpp"

namespace sgsr::cli {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int verify = 1; // a verification (gradcheck, numeric) failure
inline constexpr int usage = 2;  // bad flags, config, shapes
inline constexpr int io = 3;     // filesystem / format trouble
} // namespace exit_code

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Small filesystem helpers
// ---------------------------------------------------------------------------

inline std::vector<fs::path> list_pgm_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    return files;
}

// temp-then-rename so partially written outputs never appear under the final name
inline void atomic_write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline void atomic_write_pgm(const Tensor& img, const fs::path& path, int maxval = 255) {
    const fs::path tmp = path.string() + ".tmp";
    write_pgm(img, tmp, maxval);
    fs::rename(tmp, path);
}

inline std::string format_double(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

// ---------------------------------------------------------------------------
// Effective-config echo (flat INI-style sections)
// ---------------------------------------------------------------------------

using ConfigSections = std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>>;

inline void echo_config(const fs::path& out_dir, const ConfigSections& sections) {
    std::string text;
    for (const auto& [name, kvs] : sections) {
        text += "[" + name + "]\n";
        for (const auto& [k, v] : kvs) text += k + " = " + v + "\n";
        text += "\n";
    }
    atomic_write_text(out_dir / "effective_config.ini", text);
}

inline ConfigSections network_section(const NetworkConfig& c) {
    return {{"network",
             {{"scale", std::to_string(c.scale)},
              {"in_channels", std::to_string(c.in_channels)},
              {"width", std::to_string(c.width)},
              {"fem_count", std::to_string(c.fem_count)},
              {"dfcm_per_fem", std::to_string(c.dfcm_per_fem)},
              {"mco_count", std::to_string(c.mco_count)},
              {"msc_count", std::to_string(c.msc_count)},
              {"alpha", format_double(c.alpha)},
              {"patch", std::to_string(c.patch)},
              {"use_bicubic_skip", c.use_bicubic_skip ? "true" : "false"},
              {"use_asgnn", c.use_asgnn ? "true" : "false"},
              {"lsh_planes", std::to_string(c.lsh_planes)}}}};
}

// ---------------------------------------------------------------------------
// degrade
// ---------------------------------------------------------------------------

struct DegradeCmd {
    std::string hr_dir;
    std::string out_dir;
    int scale = 2;
    std::uint64_t seed = 0;
    DegradeOptions deg;
    int holdout = 0; // trailing entries diverted to manifest_test.txt
    int write_maxval = 255;
};

inline int cmd_degrade(const DegradeCmd& cmd, std::ostream& log = std::cout) {
    const fs::path out(cmd.out_dir);
    std::vector<fs::path> files = list_pgm_files(cmd.hr_dir);
    if (files.empty()) throw IoError("no .pgm files in '" + cmd.hr_dir + "'");
    if (cmd.holdout < 0 || cmd.holdout >= static_cast<int>(files.size()))
        throw ConfigError("degrade: holdout must be in [0, file count)");

    fs::create_directories(out / "hr");
    fs::create_directories(out / "lr");

    std::vector<fs::path> written;
    DatasetManifest train_m, test_m;
    train_m.split = "train";
    test_m.split = "test";
    try {
        for (std::size_t i = 0; i < files.size(); ++i) {
            Tensor hr;
            try {
                hr = read_pgm(files[i]);
            } catch (const std::exception& e) {
                throw IoError("while reading '" + files[i].string() + "': " + e.what());
            }
            const std::uint64_t pair_seed = cmd.seed + i;
            ImagePair pair = degrade(hr, cmd.scale, pair_seed, cmd.deg);
            const std::string name = files[i].filename().string();
            atomic_write_pgm(pair.hr, out / "hr" / name, cmd.write_maxval);
            written.push_back(out / "hr" / name);
            atomic_write_pgm(pair.lr, out / "lr" / name, cmd.write_maxval);
            written.push_back(out / "lr" / name);
            ManifestEntry entry{"hr/" + name, "lr/" + name, pair_seed};
            const bool is_test = i >= files.size() - static_cast<std::size_t>(cmd.holdout);
            (is_test ? test_m : train_m).entries.push_back(std::move(entry));
        }
    } catch (...) {
        // keep the output directory free of partial results
        for (const fs::path& p : written) {
            std::error_code ec;
            fs::remove(p, ec);
        }
        throw;
    }

    write_manifest(train_m, out / (cmd.holdout > 0 ? "manifest_train.txt" : "manifest.txt"));
    if (cmd.holdout > 0) write_manifest(test_m, out / "manifest_test.txt");

    ConfigSections cfg = {{"degrade",
                           {{"hr_dir", cmd.hr_dir},
                            {"scale", std::to_string(cmd.scale)},
                            {"seed", std::to_string(cmd.seed)},
                            {"blur_kernel_size", std::to_string(cmd.deg.blur_kernel_size)},
                            {"blur_sigma", format_double(cmd.deg.blur_sigma)},
                            {"noise_std", format_double(cmd.deg.noise_std)},
                            {"blur_before_downsample", cmd.deg.blur_before_downsample ? "true" : "false"},
                            {"holdout", std::to_string(cmd.holdout)},
                            {"write_maxval", std::to_string(cmd.write_maxval)}}}};
    echo_config(out, cfg);
    log << "degraded " << files.size() << " images at x" << cmd.scale << " into " << out.string()
        << "\n";
    return exit_code::ok;
}

// ---------------------------------------------------------------------------
// manifest loading shared by train/ablate
// ---------------------------------------------------------------------------

inline std::vector<SamplePair> load_pairs(const fs::path& manifest_path) {
    DatasetManifest m = read_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    std::vector<SamplePair> pairs;
    for (const ManifestEntry& e : m.entries) {
        const fs::path hp = fs::path(e.hr_path).is_absolute() ? fs::path(e.hr_path) : base / e.hr_path;
        const fs::path lp = fs::path(e.lr_path).is_absolute() ? fs::path(e.lr_path) : base / e.lr_path;
        pairs.push_back({read_pgm(lp), read_pgm(hp)});
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCmd {
    std::string manifest;
    std::string eval_manifest; // empty: evaluate on the training pairs
    std::string out_dir;
    std::string init_checkpoint; // empty: fresh seeded init
    NetworkConfig net;
    TrainRunConfig run;
    AdamWConfig optim;
};

inline ConfigSections train_sections(const TrainCmd& cmd) {
    ConfigSections cfg = network_section(cmd.net);
    cfg.push_back({"train",
                   {{"manifest", cmd.manifest},
                    {"eval_manifest", cmd.eval_manifest},
                    {"epochs", std::to_string(cmd.run.epochs)},
                    {"max_steps", std::to_string(cmd.run.max_steps)},
                    {"batch_size", std::to_string(cmd.run.batch_size)},
                    {"crop", std::to_string(cmd.run.crop)},
                    {"seed", std::to_string(cmd.run.seed)},
                    {"eval_every", std::to_string(cmd.run.eval_every)}}});
    cfg.push_back({"optim",
                   {{"lr", format_double(cmd.optim.lr)},
                    {"beta1", format_double(cmd.optim.beta1)},
                    {"beta2", format_double(cmd.optim.beta2)},
                    {"weight_decay", format_double(cmd.optim.weight_decay)},
                    {"epsilon", format_double(cmd.optim.epsilon)}}});
    return cfg;
}

inline int cmd_train(const TrainCmd& cmd, std::ostream& log = std::cout) {
    const fs::path out(cmd.out_dir);
    fs::create_directories(out);

    std::vector<SamplePair> train_pairs = load_pairs(cmd.manifest);
    std::vector<SamplePair> eval_pairs =
        cmd.eval_manifest.empty() ? train_pairs : load_pairs(cmd.eval_manifest);

    ModelParams mp = cmd.init_checkpoint.empty() ? param_init(cmd.net, cmd.run.seed)
                                                 : load_params(cmd.init_checkpoint, cmd.net);
    TrainRunConfig run = cmd.run;
    run.checkpoint_path = (out / "checkpoint.bin").string();
    TrainResult result = train(mp, train_pairs, eval_pairs, run, cmd.optim);

    std::string log_text;
    for (const std::string& line : result.log_lines) log_text += line + "\n";
    atomic_write_text(out / "train_log.txt", log_text);
    echo_config(out, train_sections(cmd));

    log << "baseline\t" << report_line("bicubic", result.baseline.psnr, result.baseline.ssim)
        << "\n";
    log << "final\t" << report_line("model", result.final.psnr, result.final.ssim) << "\n";
    log << "steps\t" << result.steps << "\n";
    return exit_code::ok;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferCmd {
    std::string checkpoint;
    std::string lr_dir;
    std::string out_dir;
    int write_maxval = 255;
};

inline int cmd_infer(const InferCmd& cmd, std::ostream& log = std::cout) {
    ModelParams mp = load_params(cmd.checkpoint);
    const fs::path out(cmd.out_dir);
    fs::create_directories(out);
    std::vector<fs::path> files = list_pgm_files(cmd.lr_dir);
    if (files.empty()) throw IoError("no .pgm files in '" + cmd.lr_dir + "'");
    for (const fs::path& f : files) {
        Tensor lr = read_pgm(f);
        Tensor sr = clamp01(forward(mp, ag::constant(std::move(lr)))->value);
        atomic_write_pgm(sr, out / f.filename(), cmd.write_maxval);
    }
    echo_config(out, network_section(mp.config));
    log << "wrote " << files.size() << " super-resolved images to " << out.string() << "\n";
    return exit_code::ok;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalCmd {
    std::string hr_dir;
    std::string sr_dir;
    std::string lr_dir; // optional: adds the bicubic baseline row
    std::string out_dir;
    int scale = 2;
    std::string method_name = "model";
};

inline int cmd_eval(const EvalCmd& cmd, std::ostream& log = std::cout) {
    std::vector<fs::path> hr_files = list_pgm_files(cmd.hr_dir);
    std::vector<fs::path> sr_files = list_pgm_files(cmd.sr_dir);

    std::vector<std::string> unmatched;
    auto has = [](const std::vector<fs::path>& v, const fs::path& name) {
        for (const fs::path& p : v)
            if (p.filename() == name) return true;
        return false;
    };
    for (const fs::path& f : hr_files)
        if (!has(sr_files, f.filename())) unmatched.push_back("missing sr: " + f.filename().string());
    for (const fs::path& f : sr_files)
        if (!has(hr_files, f.filename())) unmatched.push_back("missing hr: " + f.filename().string());
    if (!unmatched.empty()) {
        std::string msg = "eval: unmatched files:";
        for (const std::string& u : unmatched) msg += "\n  " + u;
        throw ConfigError(msg);
    }
    if (hr_files.empty()) throw IoError("no .pgm files in '" + cmd.hr_dir + "'");

    double model_psnr = 0.0, model_ssim = 0.0;
    double base_psnr = 0.0, base_ssim = 0.0;
    const bool with_baseline = !cmd.lr_dir.empty();
    for (const fs::path& f : hr_files) {
        Tensor hr = read_pgm(f);
        Tensor sr = read_pgm(fs::path(cmd.sr_dir) / f.filename());
        model_psnr += psnr(sr, hr);
        model_ssim += ssim(sr, hr);
        if (with_baseline) {
            Tensor lr = read_pgm(fs::path(cmd.lr_dir) / f.filename());
            Tensor up = bicubic_resample(lr, hr.shape.h, hr.shape.w);
            base_psnr += psnr(up, hr);
            base_ssim += ssim(up, hr);
        }
    }
    const double n = static_cast<double>(hr_files.size());
    auto row = [&](const std::string& name, double p, double s) {
        char buf[96];
        if (std::isinf(p))
            std::snprintf(buf, sizeof(buf), "%s\tx%d\tinf/%.4f", name.c_str(), cmd.scale, s);
        else
            std::snprintf(buf, sizeof(buf), "%s\tx%d\t%.4f/%.4f", name.c_str(), cmd.scale, p, s);
        return std::string(buf);
    };
    std::string report = "Method\tScale\tPSNR/SSIM\n";
    if (with_baseline) report += row("bicubic", base_psnr / n, base_ssim / n) + "\n";
    report += row(cmd.method_name, model_psnr / n, model_ssim / n) + "\n";

    log << report;
    if (!cmd.out_dir.empty()) {
        fs::create_directories(cmd.out_dir);
        atomic_write_text(fs::path(cmd.out_dir) / "report.txt", report);
    }
    return exit_code::ok;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckCmd {
    double tolerance = 1e-6;
    std::string out_dir; // optional report copy
};

inline int cmd_gradcheck(const GradcheckCmd& cmd, std::ostream& log = std::cout) {
    GradcheckOptions opts;
    opts.tolerance = cmd.tolerance;
    std::vector<BlockGradReport> reports = gradcheck_suite(opts);
    std::string text = "Block\tMaxRelError\tStatus\n";
    bool all_pass = true;
    for (const BlockGradReport& r : reports) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s\t%.3e\t%s", r.name.c_str(), r.max_rel_error,
                      r.pass ? "PASS" : "FAIL");
        text += std::string(buf) + "\n";
        all_pass = all_pass && r.pass;
    }
    log << text;
    if (!cmd.out_dir.empty()) {
        fs::create_directories(cmd.out_dir);
        atomic_write_text(fs::path(cmd.out_dir) / "gradcheck.txt", text);
    }
    return all_pass ? exit_code::ok : exit_code::verify;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateCmd {
    std::string axis; // alpha | fem | bicubic | attention | mco-msc
    std::string hr_dir;
    std::string out_dir;
    std::uint64_t seed = 0;
    int holdout = 2;
    NetworkConfig net{.width = 16, .fem_count = 1, .dfcm_per_fem = 2, .patch = 4};
    TrainRunConfig run{.epochs = 1000, .max_steps = 40, .batch_size = 6, .crop = 32, .eval_every = 1000000};
    AdamWConfig optim;
    DegradeOptions deg;
};

namespace detail {

struct AblateArm {
    std::string label; // tab-joined label columns
    NetworkConfig net;
};

inline std::vector<AblateArm> ablate_arms(const std::string& axis, const NetworkConfig& base) {
    std::vector<AblateArm> arms;
    auto with = [&](auto mutate) {
        NetworkConfig c = base;
        mutate(c);
        return c;
    };
    if (axis == "alpha") {
        for (double a : {0.5, 0.75, 1.0}) {
            NetworkConfig c = with([&](NetworkConfig& n) { n.alpha = a; });
            arms.push_back({a == 1.0 ? "1" : format_double(a), c});
        }
    } else if (axis == "fem") {
        for (int f : {3, 4})
            arms.push_back({std::to_string(f), with([&](NetworkConfig& n) { n.fem_count = f; })});
    } else if (axis == "bicubic") {
        arms.push_back({"No BiCubic", with([&](NetworkConfig& n) { n.use_bicubic_skip = false; })});
        arms.push_back({"BiCubic", with([&](NetworkConfig& n) { n.use_bicubic_skip = true; })});
    } else if (axis == "attention") {
        arms.push_back({"No Attention", with([&](NetworkConfig& n) { n.use_asgnn = false; })});
        arms.push_back({"Attention", with([&](NetworkConfig& n) { n.use_asgnn = true; })});
    } else if (axis == "mco-msc") {
        struct Row {
            int mco, msc;
            bool att;
        };
        for (Row r : {Row{0, 1, true}, Row{1, 0, true}, Row{2, 1, true}, Row{1, 2, true},
                      Row{2, 2, true}, Row{2, 2, false}}) {
            NetworkConfig c = with([&](NetworkConfig& n) {
                n.mco_count = r.mco;
                n.msc_count = r.msc;
                n.use_asgnn = r.att;
            });
            arms.push_back({std::to_string(r.mco) + "\t" + std::to_string(r.msc) + "\t" +
                                (r.att ? "yes" : "no"),
                            c});
        }
    } else {
        throw ConfigError("ablate: unknown axis '" + axis +
                          "' (expected alpha|fem|bicubic|attention|mco-msc)");
    }
    return arms;
}

} // namespace detail

// Runs the toy train/eval loop once per arm with identical seeds and data so
// rows are comparable. Values are toy-scale only.
inline int cmd_ablate(const AblateCmd& cmd, std::ostream& log = std::cout) {
    std::vector<fs::path> files = list_pgm_files(cmd.hr_dir);
    if (files.empty()) throw IoError("no .pgm files in '" + cmd.hr_dir + "'");
    if (cmd.holdout < 1 || cmd.holdout >= static_cast<int>(files.size()))
        throw ConfigError("ablate: holdout must be in [1, file count)");

    std::vector<SamplePair> train_pairs, eval_pairs;
    for (std::size_t i = 0; i < files.size(); ++i) {
        Tensor hr = read_pgm(files[i]);
        ImagePair pair = degrade(hr, cmd.net.scale, cmd.seed + i, cmd.deg);
        SamplePair sp{std::move(pair.lr), std::move(pair.hr)};
        if (i >= files.size() - static_cast<std::size_t>(cmd.holdout))
            eval_pairs.push_back(std::move(sp));
        else
            train_pairs.push_back(std::move(sp));
    }

    std::vector<detail::AblateArm> arms = detail::ablate_arms(cmd.axis, cmd.net);
    const std::string header = cmd.axis == "mco-msc" ? "MCO\tMSC\tAttention\tScale\tPSNR/SSIM"
                                                     : "Parameters\tScale\tPSNR/SSIM";
    std::string table = header + "\n";
    for (const detail::AblateArm& arm : arms) {
        ModelParams mp = param_init(arm.net, cmd.seed);
        TrainRunConfig run = cmd.run;
        run.seed = cmd.seed;
        run.checkpoint_path.clear();
        TrainResult r = train(mp, train_pairs, eval_pairs, run, cmd.optim);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s\tx%d\t%.4f/%.4f", arm.label.c_str(), arm.net.scale,
                      r.final.psnr, r.final.ssim);
        table += std::string(buf) + "\n";
    }

    log << "# toy-scale sweep; values are not comparable to published magnitudes\n" << table;
    if (!cmd.out_dir.empty()) {
        fs::create_directories(cmd.out_dir);
        atomic_write_text(fs::path(cmd.out_dir) / ("ablate_" + cmd.axis + ".txt"), table);
        ConfigSections cfg = network_section(cmd.net);
        cfg.push_back({"ablate",
                       {{"axis", cmd.axis},
                        {"seed", std::to_string(cmd.seed)},
                        {"steps", std::to_string(cmd.run.max_steps)},
                        {"crop", std::to_string(cmd.run.crop)},
                        {"holdout", std::to_string(cmd.holdout)}}});
        echo_config(fs::path(cmd.out_dir), cfg);
    }
    return exit_code::ok;
}

// ---------------------------------------------------------------------------
// Exception-to-exit-code mapping shared by the binary and tests
// ---------------------------------------------------------------------------

template <typename Fn>
inline int guarded(Fn&& fn, std::ostream& err = std::cerr) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const DimensionError& e) {
        err << "dimension error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const IntegrityError& e) {
        err << "integrity error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return exit_code::verify;
    } catch (const fs::filesystem_error& e) {
        err << "io error: " << e.what() << "\n";
        return exit_code::io;
    }
}

} // namespace sgsr::cli
