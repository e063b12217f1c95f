#pragma once

// Command implementations behind the `saccade` executable. Settings are
// resolved as flags > environment (dataset root only) > config file >
// defaults; every source feeds the same key=value setter.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "saccade/harness.hpp"

namespace saccade {

inline constexpr const char* kDatasetEnvVar = "SACCADE_DATASET_ROOT";

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
    std::string weights_manifest;
    std::string weights_blob;
    std::string dataset;
    std::size_t per_class_limit = 0;
    std::string out = "out";
    std::size_t threads = 1;
    EvalSettings eval{};

    // sweep
    std::vector<std::size_t> sweep_layers;
    std::vector<std::size_t> sweep_resolutions;
    std::vector<std::size_t> sweep_foveas;
    std::vector<SaliencySource> sweep_sources;

    // export
    std::size_t crop_pixels = 0; // 0: fovea * patch size
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const auto n = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw UsageError("--" + key + ": expected a non-negative integer, got '" + v + "'");
    }
}

inline double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw UsageError("--" + key + ": expected a number, got '" + v + "'");
    }
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ','))
        if (!trim(part).empty()) out.push_back(trim(part));
    return out;
}

// "1..12" or "1,4,12"
inline std::vector<std::size_t> parse_count_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) {
        const auto dots = item.find("..");
        if (dots == std::string::npos) {
            out.push_back(parse_count(key, item));
            continue;
        }
        const auto lo = parse_count(key, item.substr(0, dots)), hi = parse_count(key, item.substr(dots + 2));
        if (lo > hi) throw UsageError("--" + key + ": empty range '" + item + "'");
        for (auto i = lo; i <= hi; ++i) out.push_back(i);
    }
    return out;
}

inline std::array<float, 3> parse_triplet(const std::string& key, const std::string& v) {
    const auto parts = split_list(v);
    if (parts.size() != 3) throw UsageError("--" + key + ": expected three comma-separated values");
    return {static_cast<float>(parse_real(key, parts[0])), static_cast<float>(parse_real(key, parts[1])),
            static_cast<float>(parse_real(key, parts[2]))};
}

} // namespace detail

// Keys accept '-' or '_' separators.
inline void apply_setting(RunConfig& cfg, std::string key, const std::string& raw) {
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string v = detail::trim(raw);
    auto& sal = cfg.eval.saliency;
    try {
        if (key == "weights-manifest") cfg.weights_manifest = v;
        else if (key == "weights-blob") cfg.weights_blob = v;
        else if (key == "dataset") cfg.dataset = v;
        else if (key == "per-class-limit") cfg.per_class_limit = detail::parse_count(key, v);
        else if (key == "out") cfg.out = v;
        else if (key == "threads") cfg.threads = std::max<std::size_t>(1, detail::parse_count(key, v));
        else if (key == "source") sal.source = parse_saliency_source(v);
        else if (key == "fovea") {
            cfg.eval.fovea = detail::parse_count(key, v);
            if (cfg.eval.fovea % 2 == 0) throw UsageError("--fovea: must be odd, got " + v);
        } else if (key == "saccades") {
            cfg.eval.saccades = detail::parse_count(key, v);
            if (cfg.eval.saccades == 0) throw UsageError("--saccades: must be at least 1");
        }
        else if (key == "layer") sal.layer = detail::parse_count(key, v);
        else if (key == "att-resolution") sal.att_resolution = detail::parse_count(key, v);
        else if (key == "seed") sal.seed = detail::parse_count(key, v);
        else if (key == "center-sigma") sal.center_sigma = detail::parse_real(key, v);
        else if (key == "saliency-dir") sal.imported_dir = v;
        else if (key == "mean") cfg.eval.preprocess.stats.mean = detail::parse_triplet(key, v);
        else if (key == "std") cfg.eval.preprocess.stats.std = detail::parse_triplet(key, v);
        else if (key == "resize") cfg.eval.preprocess.resize_short = detail::parse_count(key, v);
        else if (key == "crop") cfg.eval.preprocess.crop = detail::parse_count(key, v);
        else if (key == "layers") cfg.sweep_layers = detail::parse_count_list(key, v);
        else if (key == "resolutions") cfg.sweep_resolutions = detail::parse_count_list(key, v);
        else if (key == "foveas") cfg.sweep_foveas = detail::parse_count_list(key, v);
        else if (key == "sources") {
            cfg.sweep_sources.clear();
            for (const auto& s : detail::split_list(v)) cfg.sweep_sources.push_back(parse_saliency_source(s));
        } else if (key == "crop-pixels") cfg.crop_pixels = detail::parse_count(key, v);
        else throw UsageError("unknown setting '" + key + "'");
    } catch (const ContractViolation& e) {
        throw UsageError("--" + key + ": " + e.what());
    }
}

// Flat key=value lines; '#' starts a comment.
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("--config: cannot open '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
        apply_setting(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

inline RunConfig resolve_config(const std::string& config_file,
                                const std::vector<std::pair<std::string, std::string>>& flags) {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    if (const char* env = std::getenv(kDatasetEnvVar); env && *env) cfg.dataset = env;
    for (const auto& [k, v] : flags) apply_setting(cfg, k, v);
    return cfg;
}

// Settings echoed into summary.json. Thread count and output location are
// left out so results do not depend on them.
inline std::vector<std::pair<std::string, std::string>> describe(const RunConfig& c, const ModelConfig& m) {
    const auto& s = c.eval.saliency;
    return {{"source", to_string(s.source)},
            {"fovea", std::to_string(c.eval.fovea)},
            {"saccades", std::to_string(c.eval.saccades)},
            {"layer", std::to_string(resolved_layer(s, m))},
            {"att_resolution", std::to_string(s.att_resolution ? s.att_resolution : c.eval.preprocess.crop)},
            {"seed", std::to_string(s.seed)},
            {"center_sigma", fmt9(s.center_sigma)},
            {"per_class_limit", std::to_string(c.per_class_limit)},
            {"resize", std::to_string(c.eval.preprocess.resize_short)},
            {"crop", std::to_string(c.eval.preprocess.crop)},
            {"model", std::to_string(m.embed_dim) + "d/" + std::to_string(m.num_heads) + "h/" +
                          std::to_string(m.num_layers) + "L/" + std::to_string(m.num_classes) + "c"}};
}

namespace detail {

inline WeightContainer load_model(const RunConfig& cfg) {
    if (cfg.weights_manifest.empty()) throw UsageError("missing required flag --weights-manifest");
    std::string blob = cfg.weights_blob;
    if (blob.empty()) blob = fs::path(cfg.weights_manifest).replace_extension(".bin").string();
    WeightContainer w = load_weights(cfg.weights_manifest, blob);
    try {
        resolved_layer(cfg.eval.saliency, w.config);
    } catch (const ContractViolation& e) {
        throw UsageError(std::string("--layer: ") + e.what());
    }
    return w;
}

inline DatasetIndex load_dataset(const RunConfig& cfg) {
    if (cfg.dataset.empty())
        throw UsageError("missing required flag --dataset (or environment variable " + std::string(kDatasetEnvVar) + ")");
    return scan_dataset(cfg.dataset, cfg.per_class_limit);
}

inline EvalSettings eval_settings(const RunConfig& cfg) {
    EvalSettings e = cfg.eval;
    e.threads = cfg.threads;
    return e;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

} // namespace detail

inline void print_accuracy_table(std::ostream& out, const std::vector<SaccadeRecord>& records) {
    const DynamicsReport d = dynamics_report(records);
    const auto rf = mean_revealed_fraction(records);
    char buf[64];
    out << "saccade   ";
    for (std::size_t s = 0; s < d.k; ++s) {
        std::snprintf(buf, sizeof buf, "%7zu", s + 1);
        out << buf;
    }
    auto row = [&](const char* label, const std::vector<double>& v, double scale) {
        out << '\n' << label;
        for (double x : v) {
            std::snprintf(buf, sizeof buf, "%7.2f", x * scale);
            out << buf;
        }
    };
    row("top1 %    ", d.accuracy, 100.0);
    row("cumul %   ", d.cumulative_accuracy, 100.0);
    row("visible % ", rf, 100.0);
    std::snprintf(buf, sizeof buf, "%.2f", d.full_accuracy * 100.0);
    out << "\nfull-image top1 %: " << buf << "  (" << d.images << " images)\n";
}

inline int cmd_run(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        WeightContainer w = detail::load_model(cfg);
        DatasetIndex ds = detail::load_dataset(cfg);
        auto records = evaluate_dataset(ds, w, detail::eval_settings(cfg));
        write_run_outputs(records, describe(cfg, w.config), cfg.out);
        print_accuracy_table(out, records);
        return int{kExitOk};
    });
}

inline int cmd_sweep(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        WeightContainer w = detail::load_model(cfg);
        DatasetIndex ds = detail::load_dataset(cfg);
        SweepGrid grid{cfg.sweep_layers, cfg.sweep_resolutions, cfg.sweep_foveas, cfg.sweep_sources};
        auto pts = sweep(ds, w, detail::eval_settings(cfg), grid, cfg.out, describe(cfg, w.config), &err);
        std::size_t failed = 0;
        for (const auto& p : pts) {
            out << (p.ok ? "ok     " : "FAILED ") << p.name << '\n';
            failed += !p.ok;
        }
        out << pts.size() - failed << "/" << pts.size() << " sweep points completed\n";
        return failed ? int{kExitFailure} : int{kExitOk};
    });
}

struct ExportRequest {
    bool maps = false;
    bool crops = false;
};

// maps  -> <out>/maps/<id>.pgm (+ float sidecar)
// crops -> <out>/crops/<id>.ppm + manifest.csv
inline int cmd_export(const RunConfig& cfg, ExportRequest what, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        if (!what.maps && !what.crops) throw UsageError("export: pass --maps and/or --crops");
        WeightContainer w = detail::load_model(cfg);
        DatasetIndex ds = detail::load_dataset(cfg);
        EvalSettings settings = detail::eval_settings(cfg);
        if (what.maps) {
            const fs::path dir = fs::path(cfg.out) / "maps";
            fs::create_directories(dir);
            parallel_for(ds.entries.size(), settings.threads, [&](std::size_t i) {
                const DatasetEntry& e = ds.entries[i];
                ImageTensor img = load_image(e, settings.preprocess);
                export_saliency(make_saliency(img, w, settings.saliency, e.image_id),
                                (dir / sanitize_id(e.image_id)).string());
            });
            out << "wrote " << ds.entries.size() << " saliency maps to " << dir.string() << '\n';
        }
        if (what.crops) {
            const std::size_t pixels = cfg.crop_pixels ? cfg.crop_pixels : cfg.eval.fovea * w.config.patch_size;
            auto records = evaluate_dataset(ds, w, settings);
            const fs::path dir = fs::path(cfg.out) / "crops";
            const std::size_t n = export_crops(records, ds, settings.preprocess, pixels, w.config.patch_size, dir);
            out << "wrote " << n << " crops (" << pixels << "x" << pixels << ") to " << dir.string() << '\n';
        }
        return int{kExitOk};
    });
}

inline int cmd_inspect(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        if (cfg.weights_manifest.empty()) throw UsageError("missing required flag --weights-manifest");
        std::string blob = cfg.weights_blob;
        if (blob.empty()) blob = fs::path(cfg.weights_manifest).replace_extension(".bin").string();
        TensorStore store = load_container(cfg.weights_manifest, blob);
        for (const auto& [k, v] : store.config_entries()) out << "config " << k << " = " << v << '\n';
        std::size_t total = 0;
        for (const auto& t : store.tensors()) {
            out << t.name << " f32 [" << detail::join_shape(t.shape) << "]\n";
            total += t.numel();
        }
        out << store.tensors().size() << " tensors, " << total << " parameters\n";
        const WeightContainer w = weights_from_store(store);
        out << "model: embed_dim=" << w.config.embed_dim << " heads=" << w.config.num_heads
            << " layers=" << w.config.num_layers << " classes=" << w.config.num_classes
            << " patch=" << w.config.patch_size << " (valid)\n";
        return int{kExitOk};
    });
}

} // namespace saccade
