// saccade: attention-guided fixation sequences and token-subset classification.
//
//   saccade run     --weights-manifest M --dataset D [--source attention] [--fovea 3] [--saccades 10] ...
//   saccade sweep   ... --layers 1..12 --resolutions 224,128,112,96
//   saccade export  ... --maps | --crops
//   saccade inspect --weights-manifest M

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "saccade/commands.hpp"

namespace {

struct Flag {
    std::string key;
    std::string value;
    CLI::Option* opt = nullptr;
};

// Every setting is taken as text and routed through apply_setting so the
// config file and the command line share one parser.
class FlagSet {
public:
    void add(CLI::App* app, const std::string& key, const std::string& help) {
        auto& f = flags_.emplace_back(std::make_unique<Flag>());
        f->key = key;
        f->opt = app->add_option("--" + key, f->value, help);
    }

    std::vector<std::pair<std::string, std::string>> given() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& f : flags_)
            if (f->opt->count()) out.emplace_back(f->key, f->value);
        return out;
    }

private:
    std::vector<std::unique_ptr<Flag>> flags_;
};

void add_common(CLI::App* app, FlagSet& fs, std::string& config_file) {
    app->add_option("--config", config_file, "key=value settings file (flags override it)");
    fs.add(app, "weights-manifest", "model container manifest");
    fs.add(app, "weights-blob", "model container blob (default: manifest path with .bin)");
    fs.add(app, "dataset", "dataset root: <root>/<class>/*.ppm (env SACCADE_DATASET_ROOT overrides the config file)");
    fs.add(app, "per-class-limit", "max images per class, 0 = all (default 0)");
    fs.add(app, "source", "saliency source: attention|random|center|graph_based|imported (default attention)");
    fs.add(app, "fovea", "fovea side in tokens, odd (default 3)");
    fs.add(app, "saccades", "number of saccades k (default 10)");
    fs.add(app, "layer", "attention capture layer, 1-based, 0 = last (default 0)");
    fs.add(app, "att-resolution", "input side for the attention pass, 0 = crop size (default 0)");
    fs.add(app, "seed", "seed for random saliency (default 0)");
    fs.add(app, "center-sigma", "center-prior sigma in cells (default 3)");
    fs.add(app, "saliency-dir", "directory of imported maps <id>.pgm or <id>.manifest/.bin");
    fs.add(app, "mean", "channel means r,g,b (default ImageNet)");
    fs.add(app, "std", "channel stds r,g,b (default ImageNet)");
    fs.add(app, "resize", "short-side resize before cropping (default 256)");
    fs.add(app, "crop", "center crop side (default 224)");
    fs.add(app, "threads", "worker threads (default 1)");
    fs.add(app, "out", "output directory (default out)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attention-guided saccade classification with vision transformers"};
    app.require_subcommand(1);

    std::string config_file;
    FlagSet run_flags, sweep_flags, export_flags, inspect_flags;

    auto* run = app.add_subcommand("run", "evaluate a dataset; writes records.csv, trace.csv, curves.csv, summary.json");
    add_common(run, run_flags, config_file);

    auto* sw = app.add_subcommand("sweep", "evaluate a grid of settings, one subdirectory per point");
    add_common(sw, sweep_flags, config_file);
    sweep_flags.add(sw, "layers", "capture layers, e.g. 1..12 or 4,8,12");
    sweep_flags.add(sw, "resolutions", "attention resolutions, e.g. 224,128,112,96");
    sweep_flags.add(sw, "foveas", "fovea sizes, e.g. 3,5");
    sweep_flags.add(sw, "sources", "saliency sources, e.g. attention,random");

    auto* ex = app.add_subcommand("export", "write saliency maps (PGM + float sidecar) or first-fixation crops");
    add_common(ex, export_flags, config_file);
    saccade::ExportRequest what;
    ex->add_flag("--maps", what.maps, "export saliency maps");
    ex->add_flag("--crops", what.crops, "export first-fixation crops with manifest.csv");
    export_flags.add(ex, "crop-pixels", "crop side in pixels (default fovea * patch size)");

    auto* in = app.add_subcommand("inspect", "list container tensors and validate them against the model layout");
    in->add_option("--config", config_file, "key=value settings file");
    inspect_flags.add(in, "weights-manifest", "model container manifest");
    inspect_flags.add(in, "weights-blob", "model container blob (default: manifest path with .bin)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : saccade::kExitUsage;
    }

    auto resolve = [&](const FlagSet& fs, saccade::RunConfig& cfg) {
        try {
            cfg = saccade::resolve_config(config_file, fs.given());
            return true;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return false;
        }
    };

    saccade::RunConfig cfg;
    if (run->parsed()) return resolve(run_flags, cfg) ? saccade::cmd_run(cfg) : saccade::kExitUsage;
    if (sw->parsed()) return resolve(sweep_flags, cfg) ? saccade::cmd_sweep(cfg) : saccade::kExitUsage;
    if (ex->parsed()) return resolve(export_flags, cfg) ? saccade::cmd_export(cfg, what) : saccade::kExitUsage;
    if (in->parsed()) return resolve(inspect_flags, cfg) ? saccade::cmd_inspect(cfg) : saccade::kExitUsage;
    return saccade::kExitUsage;
}
