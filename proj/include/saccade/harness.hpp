#pragma once

// Dataset ingestion, per-image saccade evaluation and the metric suite:
// per-saccade accuracy, classification dynamics, certainty and
// attention-entropy groupings, and CSV / JSON reporting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saccade/errors.hpp"
#include "saccade/format.hpp"
#include "saccade/image.hpp"
#include "saccade/parallel.hpp"
#include "saccade/rng.hpp"
#include "saccade/saccade_engine.hpp"
#include "saccade/saliency.hpp"
#include "saccade/vit.hpp"

namespace saccade {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Dataset

struct DatasetEntry {
    std::string path;
    std::size_t class_index = 0;
    std::string image_id; // "<class_name>/<file stem>"
};

struct DatasetIndex {
    std::string root;
    std::vector<DatasetEntry> entries;
    std::vector<std::string> class_names;
};

// Layout: root/<class_name>/*.ppm. When root/classes.txt exists its lines
// fix the class order (line i -> class index i); otherwise class
// directories are indexed in sorted order. per_class_limit == 0 keeps all.
inline DatasetIndex scan_dataset(const std::string& root, std::size_t per_class_limit = 0) {
    if (!fs::is_directory(root)) throw IngestionError("dataset root is not a directory: " + root);
    DatasetIndex idx;
    idx.root = root;
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path().filename().string());
    std::sort(dirs.begin(), dirs.end());

    const fs::path classes_file = fs::path(root) / "classes.txt";
    if (fs::exists(classes_file)) {
        std::ifstream in(classes_file);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) idx.class_names.push_back(line);
        }
        for (const auto& d : dirs)
            if (std::find(idx.class_names.begin(), idx.class_names.end(), d) == idx.class_names.end())
                throw IngestionError("class directory '" + d + "' not listed in " + classes_file.string());
    } else {
        idx.class_names = dirs;
    }

    for (std::size_t c = 0; c < idx.class_names.size(); ++c) {
        const fs::path dir = fs::path(root) / idx.class_names[c];
        if (!fs::is_directory(dir)) continue;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (per_class_limit && files.size() > per_class_limit) files.resize(per_class_limit);
        for (const auto& f : files)
            idx.entries.push_back({f.string(), c, idx.class_names[c] + "/" + f.stem().string()});
    }
    return idx;
}

// image_id -> file-name stem usable for exported artefacts.
inline std::string sanitize_id(const std::string& image_id) {
    std::string s;
    for (char c : image_id) {
        if (c == '/' || c == '\\') s += "__";
        else s += c;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Metrics

// 1 - H(p) / log(n), natural log, 0 log 0 = 0.
inline double certainty(std::span<const double> probs) {
    detail::require(probs.size() >= 2, "certainty: need at least two classes");
    double h = 0.0;
    for (double p : probs) {
        detail::require(p >= 0.0 && std::isfinite(p), "certainty: invalid probability");
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::clamp(1.0 - h / std::log(static_cast<double>(probs.size())), 0.0, 1.0);
}

inline double certainty(const ClassScores& s) { return certainty(s.probs); }

struct SaccadeStep {
    std::size_t predicted = 0;
    double certainty = 0.0;
    double revealed_fraction = 0.0;
    std::size_t revealed_cells = 0;
    Cell center;
};

struct SaccadeRecord {
    std::string image_id;
    std::size_t true_class = 0;
    std::size_t full_predicted = 0;
    double full_certainty = 0.0;
    std::vector<SaccadeStep> per_saccade;
    SaliencySource source = SaliencySource::attention;
    std::string fingerprint;
    std::optional<double> attention_entropy;
    std::uint64_t input_hash = 0; // FNV-1a over the preprocessed tensor bytes

    ClassScores full_scores;
    std::vector<ClassScores> step_scores;
    SaccadeTrace trace;

    bool full_correct() const { return full_predicted == true_class; }
    bool correct_at(std::size_t s) const { return per_saccade[s].predicted == true_class; }
    std::size_t k() const { return per_saccade.size(); }

    // 1-based saccade of the first correct prediction, 0 if never.
    std::size_t first_correct() const {
        for (std::size_t s = 0; s < k(); ++s)
            if (correct_at(s)) return s + 1;
        return 0;
    }
};

// ---------------------------------------------------------------------------
// Classification dynamics
//
// Per image the state machine is:
//   unseen  --correct--> stable  (first-time correct; feeds cumulative accuracy)
//   stable  --wrong----> dropped (correct -> wrong)
//   dropped --correct--> recovered (wrong -> correct)
//   recovered --wrong--> dropped (correct -> wrong)
// and an image that keeps its state in dropped / recovered counts as
// stayed_wrong / stayed_right. Saccade 1 has no predecessor, so it can
// only produce first-time corrects.

struct DynamicsReport {
    std::size_t k = 0;
    std::size_t images = 0;
    std::vector<std::size_t> correct;        // correct at saccade s
    std::vector<std::size_t> first_correct;  // first-time correct at s
    std::vector<std::size_t> correct_to_wrong;
    std::vector<std::size_t> wrong_to_correct;
    std::vector<std::size_t> stayed_wrong;
    std::vector<std::size_t> stayed_right;
    std::vector<std::size_t> cumulative_correct;
    std::vector<double> accuracy;
    std::vector<double> cumulative_accuracy;
    std::size_t full_correct = 0;
    double full_accuracy = 0.0;
    // Images by number of correct saccades (0..k); all images, and only
    // those correct during saccades but wrong on the full image.
    std::vector<std::size_t> occurrence_all;
    std::vector<std::size_t> occurrence_saccade_only;

    bool operator==(const DynamicsReport&) const = default;
};

// `correct[i][s]` is image i's correctness at saccade s (0-based).
inline DynamicsReport dynamics_from_sequences(const std::vector<std::vector<bool>>& correct,
                                              const std::vector<bool>& full_correct) {
    detail::require(correct.size() == full_correct.size(), "dynamics_report: sequence / full-image count mismatch");
    DynamicsReport r;
    r.images = correct.size();
    r.k = correct.empty() ? 0 : correct.front().size();
    for (const auto& seq : correct)
        if (seq.size() != r.k) throw ContractViolation("dynamics_report: inconsistent number of saccades across records");
    const std::size_t k = r.k;
    for (auto* v : {&r.correct, &r.first_correct, &r.correct_to_wrong, &r.wrong_to_correct, &r.stayed_wrong,
                    &r.stayed_right, &r.cumulative_correct})
        v->assign(k, 0);
    r.occurrence_all.assign(k + 1, 0);
    r.occurrence_saccade_only.assign(k + 1, 0);

    enum class State { unseen, stable, dropped, recovered };
    for (std::size_t i = 0; i < correct.size(); ++i) {
        State st = State::unseen;
        std::size_t n_correct = 0;
        for (std::size_t s = 0; s < k; ++s) {
            const bool c = correct[i][s];
            n_correct += c;
            r.correct[s] += c;
            switch (st) {
            case State::unseen:
                if (c) {
                    st = State::stable;
                    ++r.first_correct[s];
                }
                break;
            case State::stable:
                if (!c) {
                    st = State::dropped;
                    ++r.correct_to_wrong[s];
                }
                break;
            case State::dropped:
                if (c) {
                    st = State::recovered;
                    ++r.wrong_to_correct[s];
                } else {
                    ++r.stayed_wrong[s];
                }
                break;
            case State::recovered:
                if (!c) {
                    st = State::dropped;
                    ++r.correct_to_wrong[s];
                } else {
                    ++r.stayed_right[s];
                }
                break;
            }
            if (st != State::unseen) ++r.cumulative_correct[s];
        }
        ++r.occurrence_all[n_correct];
        if (n_correct > 0 && !full_correct[i]) ++r.occurrence_saccade_only[n_correct];
        r.full_correct += full_correct[i];
    }
    const double denom = r.images ? static_cast<double>(r.images) : 1.0;
    for (std::size_t s = 0; s < k; ++s) {
        r.accuracy.push_back(static_cast<double>(r.correct[s]) / denom);
        r.cumulative_accuracy.push_back(static_cast<double>(r.cumulative_correct[s]) / denom);
    }
    r.full_accuracy = static_cast<double>(r.full_correct) / denom;
    return r;
}

inline DynamicsReport dynamics_report(const std::vector<SaccadeRecord>& records) {
    std::vector<std::vector<bool>> seqs;
    std::vector<bool> full;
    for (const auto& rec : records) {
        std::vector<bool> seq;
        for (std::size_t s = 0; s < rec.k(); ++s) seq.push_back(rec.correct_at(s));
        seqs.push_back(std::move(seq));
        full.push_back(rec.full_correct());
    }
    return dynamics_from_sequences(seqs, full);
}

// ---------------------------------------------------------------------------
// Certainty groups: full-image-correct records grouped by first-correct
// saccade; records never correct during saccades are discarded.

struct CertaintyGroup {
    std::size_t first_correct = 0; // 1-based
    std::size_t count = 0;
    std::vector<double> mean_certainty; // per saccade
    double mean_full_certainty = 0.0;
};

struct CertaintyGroups {
    std::vector<CertaintyGroup> groups;  // ascending first_correct, empty groups omitted
    std::vector<double> overall_mean;    // over all full-image-correct records
    double overall_full_mean = 0.0;
    std::size_t restricted = 0;          // full-image-correct records
    std::size_t discarded = 0;           // of those, never correct during saccades
};

inline CertaintyGroups certainty_groups(const std::vector<SaccadeRecord>& records) {
    CertaintyGroups out;
    if (records.empty()) return out;
    const std::size_t k = records.front().k();
    std::map<std::size_t, CertaintyGroup> by_first;
    out.overall_mean.assign(k, 0.0);
    for (const auto& r : records) {
        detail::require(r.k() == k, "certainty_groups: inconsistent number of saccades");
        if (!r.full_correct()) continue;
        ++out.restricted;
        for (std::size_t s = 0; s < k; ++s) out.overall_mean[s] += r.per_saccade[s].certainty;
        out.overall_full_mean += r.full_certainty;
        const std::size_t fc = r.first_correct();
        if (fc == 0) {
            ++out.discarded;
            continue;
        }
        CertaintyGroup& g = by_first[fc];
        g.first_correct = fc;
        if (g.mean_certainty.empty()) g.mean_certainty.assign(k, 0.0);
        ++g.count;
        for (std::size_t s = 0; s < k; ++s) g.mean_certainty[s] += r.per_saccade[s].certainty;
        g.mean_full_certainty += r.full_certainty;
    }
    if (out.restricted) {
        for (double& v : out.overall_mean) v /= static_cast<double>(out.restricted);
        out.overall_full_mean /= static_cast<double>(out.restricted);
    }
    for (auto& [fc, g] : by_first) {
        for (double& v : g.mean_certainty) v /= static_cast<double>(g.count);
        g.mean_full_certainty /= static_cast<double>(g.count);
        out.groups.push_back(std::move(g));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Entropy groups: group s >= 1 holds images first correct at saccade s;
// group 0 holds images correct on the full image but never during saccades.
// Images never correct anywhere are only counted.

struct EntropyGroup {
    std::size_t group = 0;
    std::vector<std::string> image_ids;
    std::vector<double> entropies;
    double mean = 0.0;
};

struct EntropyGroups {
    std::vector<EntropyGroup> groups; // ascending group index, empty groups omitted
    std::size_t never_correct = 0;
};

inline EntropyGroups entropy_groups(const std::vector<SaccadeRecord>& records, const std::vector<double>& entropies) {
    detail::require(records.size() == entropies.size(), "entropy_groups: one entropy per record required");
    std::map<std::size_t, EntropyGroup> by_group;
    EntropyGroups out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        std::size_t g = r.first_correct();
        if (g == 0 && !r.full_correct()) {
            ++out.never_correct;
            continue;
        }
        EntropyGroup& eg = by_group[g];
        eg.group = g;
        eg.image_ids.push_back(r.image_id);
        eg.entropies.push_back(entropies[i]);
    }
    for (auto& [g, eg] : by_group) {
        double sum = 0.0;
        for (double e : eg.entropies) sum += e;
        eg.mean = sum / static_cast<double>(eg.entropies.size());
        out.groups.push_back(std::move(eg));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct SaliencySettings {
    SaliencySource source = SaliencySource::attention;
    std::size_t layer = 0;            // 0: last layer
    std::size_t att_resolution = 0;   // 0: same as the classification input
    std::uint64_t seed = 0;
    double center_sigma = 3.0;        // cells
    GraphSaliencyOptions graph{};
    std::string imported_dir;
};

struct EvalSettings {
    SaliencySettings saliency;
    std::size_t fovea = 3;
    std::size_t saccades = 10;
    PreprocessOptions preprocess{};
    std::size_t threads = 1;
};

inline std::size_t resolved_layer(const SaliencySettings& s, const ModelConfig& c) {
    const std::size_t layer = s.layer ? s.layer : c.num_layers;
    if (layer < 1 || layer > c.num_layers)
        throw ContractViolation("capture layer " + std::to_string(layer) + " outside [1, " +
                                std::to_string(c.num_layers) + "]");
    return layer;
}

// Canonical description of everything that changes a record.
inline std::string settings_fingerprint(const EvalSettings& s, const ModelConfig& c) {
    std::ostringstream os;
    os << "source=" << to_string(s.saliency.source) << ";layer=" << resolved_layer(s.saliency, c)
       << ";att_resolution=" << s.saliency.att_resolution << ";seed=" << s.saliency.seed
       << ";center_sigma=" << fmt9(s.saliency.center_sigma) << ";fovea=" << s.fovea << ";saccades=" << s.saccades
       << ";resize=" << s.preprocess.resize_short << ";crop=" << s.preprocess.crop;
    for (int ch = 0; ch < 3; ++ch)
        os << ";mean" << ch << '=' << fmt9(s.preprocess.stats.mean[ch]) << ";std" << ch << '='
           << fmt9(s.preprocess.stats.std[ch]);
    os << ";model=" << c.embed_dim << 'x' << c.num_heads << 'x' << c.num_layers << 'x' << c.num_classes;
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(os.str())));
    return hex;
}

inline std::uint64_t tensor_hash(const ImageTensor& img) {
    std::string_view bytes(reinterpret_cast<const char*>(img.data.data()), img.data.size() * sizeof(float));
    return fnv1a64(bytes);
}

inline SaliencyGrid make_saliency(const ImageTensor& img, const WeightContainer& w, const SaliencySettings& s,
                                  const std::string& image_id) {
    const std::size_t n = w.config.patch_size;
    const std::size_t gh = img.height / n, gw = img.width / n;
    switch (s.source) {
    case SaliencySource::attention:
        return attention_saliency(img, w, resolved_layer(s, w.config), s.att_resolution ? s.att_resolution : img.height);
    case SaliencySource::random: return random_saliency(derive_seed(s.seed, image_id), gh, gw);
    case SaliencySource::center: return center_saliency(gh, gw, s.center_sigma);
    case SaliencySource::graph_based: {
        GraphSaliencyOptions opt = s.graph;
        opt.out_h = gh;
        opt.out_w = gw;
        return graph_saliency(img, opt);
    }
    case SaliencySource::imported:
        if (s.imported_dir.empty()) throw ContractViolation("imported saliency requires a saliency directory");
        return import_saliency((fs::path(s.imported_dir) / sanitize_id(image_id)).string(), gh, gw);
    }
    throw ContractViolation("unknown saliency source");
}

// Full-image pass (which also yields the attention map at the configured
// layer), saliency, fixation trace, then one token-subset pass per
// cumulative mask.
inline SaccadeRecord evaluate_image(const ImageTensor& img, const WeightContainer& w, const EvalSettings& settings,
                                    const std::string& image_id, std::size_t true_class) {
    const ModelConfig& c = w.config;
    const std::size_t layer = resolved_layer(settings.saliency, c);
    const std::size_t att_res = settings.saliency.att_resolution ? settings.saliency.att_resolution : img.height;

    SaccadeRecord rec;
    rec.image_id = image_id;
    rec.true_class = true_class;
    rec.source = settings.saliency.source;
    rec.fingerprint = settings_fingerprint(settings, c);
    rec.input_hash = tensor_hash(img);

    TokenSequence seq = patchify_embed(img, w);
    ForwardResult full = forward(seq, w, layer);
    rec.full_scores = classify(full.cls_per_layer, w);
    rec.full_predicted = rec.full_scores.predicted;
    rec.full_certainty = certainty(rec.full_scores);

    SaliencyGrid attention_map;
    if (att_res == img.height) {
        attention_map = fuse_heads_max(full.capture);
        attention_map.provenance->resolution = img.height;
    } else {
        attention_map = attention_saliency(img, w, layer, att_res);
    }
    rec.attention_entropy = attention_entropy(attention_map);

    SaliencyGrid sal = settings.saliency.source == SaliencySource::attention
                           ? attention_map
                           : make_saliency(img, w, settings.saliency, image_id);

    FoveaSpec spec{settings.fovea, seq.grid_h, seq.grid_w, c.patch_size};
    rec.trace = run_saccade_sequence(sal, spec, settings.saccades);

    for (std::size_t s = 0; s < rec.trace.size(); ++s) {
        TokenSequence masked = seq;
        masked.set_visibility(rec.trace.masks[s]);
        ClassScores scores = classify(forward(masked, w, layer).cls_per_layer, w);
        rec.per_saccade.push_back({scores.predicted, certainty(scores), rec.trace.revealed_fraction[s],
                                   rec.trace.revealed_cells[s], rec.trace.centers[s]});
        rec.step_scores.push_back(std::move(scores));
    }
    return rec;
}

inline ImageTensor load_image(const DatasetEntry& e, const PreprocessOptions& opt) {
    return preprocess(read_ppm(e.path), opt);
}

// Records come back ordered by image_id regardless of thread count.
inline std::vector<SaccadeRecord> evaluate_dataset(const DatasetIndex& ds, const WeightContainer& w,
                                                   const EvalSettings& settings) {
    std::vector<SaccadeRecord> records(ds.entries.size());
    parallel_for(ds.entries.size(), settings.threads, [&](std::size_t i) {
        const DatasetEntry& e = ds.entries[i];
        try {
            records[i] = evaluate_image(load_image(e, settings.preprocess), w, settings, e.image_id, e.class_index);
        } catch (const std::exception& ex) {
            throw std::runtime_error("image '" + e.image_id + "': " + ex.what());
        }
    });
    std::sort(records.begin(), records.end(),
              [](const SaccadeRecord& a, const SaccadeRecord& b) { return a.image_id < b.image_id; });
    return records;
}

// ---------------------------------------------------------------------------
// Reporting

inline constexpr const char* kRecordsCsvHeader =
    "image_id,true_class,saccade_index,row,col,revealed_cells,revealed_fraction,predicted,certainty,correct,"
    "full_predicted,full_certainty,full_correct,source,attention_entropy,input_hash";

inline void write_records_csv(std::ostream& out, const std::vector<SaccadeRecord>& records) {
    out << kRecordsCsvHeader << '\n';
    for (const auto& r : records) {
        char hash[17];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.input_hash));
        for (std::size_t s = 0; s < r.k(); ++s) {
            const SaccadeStep& st = r.per_saccade[s];
            out << r.image_id << ',' << r.true_class << ',' << (s + 1) << ',' << st.center.row << ','
                << st.center.col << ',' << st.revealed_cells << ',' << fmt9(st.revealed_fraction) << ','
                << st.predicted << ',' << fmt9(st.certainty) << ',' << (r.correct_at(s) ? 1 : 0) << ','
                << r.full_predicted << ',' << fmt9(r.full_certainty) << ',' << (r.full_correct() ? 1 : 0) << ','
                << to_string(r.source) << ',' << (r.attention_entropy ? fmt9(*r.attention_entropy) : "") << ','
                << hash << '\n';
        }
    }
}

inline constexpr const char* kCurvesCsvHeader = "saccade_index,accuracy,cumulative_accuracy,mean_revealed_fraction";

inline std::vector<double> mean_revealed_fraction(const std::vector<SaccadeRecord>& records) {
    if (records.empty()) return {};
    std::vector<double> m(records.front().k(), 0.0);
    for (const auto& r : records)
        for (std::size_t s = 0; s < m.size(); ++s) m[s] += r.per_saccade[s].revealed_fraction;
    for (double& v : m) v /= static_cast<double>(records.size());
    return m;
}

inline void write_curves_csv(std::ostream& out, const std::vector<SaccadeRecord>& records) {
    const DynamicsReport d = dynamics_report(records);
    const auto rf = mean_revealed_fraction(records);
    out << kCurvesCsvHeader << '\n';
    for (std::size_t s = 0; s < d.k; ++s)
        out << (s + 1) << ',' << fmt9(d.accuracy[s]) << ',' << fmt9(d.cumulative_accuracy[s]) << ',' << fmt9(rf[s])
            << '\n';
}

namespace detail {

inline nlohmann::ordered_json rounded(const std::vector<double>& v) {
    auto a = nlohmann::ordered_json::array();
    for (double x : v) a.push_back(round9(x));
    return a;
}

} // namespace detail

inline nlohmann::ordered_json summary_json(const std::vector<SaccadeRecord>& records,
                                           const std::vector<std::pair<std::string, std::string>>& config) {
    using nlohmann::ordered_json;
    ordered_json j;
    ordered_json cfg = ordered_json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = cfg;
    j["fingerprint"] = records.empty() ? "" : records.front().fingerprint;
    j["num_images"] = records.size();

    const DynamicsReport d = dynamics_report(records);
    j["saccades"] = d.k;
    j["full_image_accuracy"] = round9(d.full_accuracy);
    j["per_saccade_accuracy"] = detail::rounded(d.accuracy);
    j["cumulative_accuracy"] = detail::rounded(d.cumulative_accuracy);
    j["mean_revealed_fraction"] = detail::rounded(mean_revealed_fraction(records));
    j["dynamics"] = {{"correct", d.correct},
                     {"first_correct", d.first_correct},
                     {"correct_to_wrong", d.correct_to_wrong},
                     {"wrong_to_correct", d.wrong_to_correct},
                     {"stayed_wrong", d.stayed_wrong},
                     {"stayed_right", d.stayed_right},
                     {"cumulative_correct", d.cumulative_correct},
                     {"full_correct", d.full_correct},
                     {"occurrence_all", d.occurrence_all},
                     {"occurrence_saccade_only", d.occurrence_saccade_only}};

    const CertaintyGroups cg = certainty_groups(records);
    ordered_json groups = ordered_json::array();
    for (const auto& g : cg.groups)
        groups.push_back({{"first_correct", g.first_correct},
                          {"count", g.count},
                          {"mean_certainty", detail::rounded(g.mean_certainty)},
                          {"mean_full_certainty", round9(g.mean_full_certainty)}});
    j["certainty"] = {{"restricted", cg.restricted},
                      {"discarded", cg.discarded},
                      {"overall_mean", detail::rounded(cg.overall_mean)},
                      {"overall_full_mean", round9(cg.overall_full_mean)},
                      {"groups", groups}};

    std::vector<double> entropies;
    bool have_entropy = true;
    for (const auto& r : records) {
        if (!r.attention_entropy) have_entropy = false;
        entropies.push_back(r.attention_entropy.value_or(0.0));
    }
    if (have_entropy) {
        const EntropyGroups eg = entropy_groups(records, entropies);
        ordered_json eg_json = ordered_json::array();
        for (const auto& g : eg.groups)
            eg_json.push_back({{"group", g.group},
                               {"count", g.entropies.size()},
                               {"mean", round9(g.mean)},
                               {"entropies", detail::rounded(g.entropies)}});
        j["attention_entropy"] = {{"never_correct", eg.never_correct}, {"groups", eg_json}};
    }

    // Fixation distances averaged over images.
    if (!records.empty()) {
        const std::size_t k = records.front().k();
        std::vector<double> from_first(k, 0.0), from_prev(k, 0.0);
        for (const auto& r : records) {
            const DistanceReport dr = fixation_distances(r.trace);
            for (std::size_t s = 0; s < k; ++s) {
                from_first[s] += dr.from_first[s];
                from_prev[s] += dr.from_previous[s];
            }
        }
        for (std::size_t s = 0; s < k; ++s) {
            from_first[s] /= static_cast<double>(records.size());
            from_prev[s] /= static_cast<double>(records.size());
        }
        j["fixation_distance"] = {{"from_first", detail::rounded(from_first)},
                                  {"from_previous", detail::rounded(from_prev)}};
    }
    return j;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

// records.csv, trace.csv, curves.csv, summary.json
inline void write_run_outputs(const std::vector<SaccadeRecord>& records,
                              const std::vector<std::pair<std::string, std::string>>& config, const fs::path& dir) {
    fs::create_directories(dir);
    std::ostringstream rec, trace, curves;
    write_records_csv(rec, records);
    trace << kTraceCsvHeader << '\n';
    for (const auto& r : records) write_trace_rows(trace, r.image_id, r.trace);
    write_curves_csv(curves, records);
    write_text(dir / "records.csv", rec.str());
    write_text(dir / "trace.csv", trace.str());
    write_text(dir / "curves.csv", curves.str());
    write_text(dir / "summary.json", summary_json(records, config).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepGrid {
    std::vector<std::size_t> layers;       // empty: base setting
    std::vector<std::size_t> resolutions;  // empty: base setting
    std::vector<std::size_t> foveas;       // empty: base setting
    std::vector<SaliencySource> sources;   // empty: base setting
};

struct SweepPoint {
    std::string name;
    EvalSettings settings;
    bool ok = false;
    std::string error;
};

inline std::vector<SweepPoint> sweep_points(const EvalSettings& base, const SweepGrid& grid) {
    auto or_base = [](auto v, auto b) { return v.empty() ? decltype(v){b} : v; };
    const auto layers = or_base(grid.layers, base.saliency.layer);
    const auto res = or_base(grid.resolutions, base.saliency.att_resolution);
    const auto foveas = or_base(grid.foveas, base.fovea);
    const auto sources = or_base(grid.sources, base.saliency.source);
    std::vector<SweepPoint> pts;
    for (auto src : sources)
        for (auto f : foveas)
            for (auto l : layers)
                for (auto r : res) {
                    SweepPoint p;
                    p.settings = base;
                    p.settings.saliency.source = src;
                    p.settings.fovea = f;
                    p.settings.saliency.layer = l;
                    p.settings.saliency.att_resolution = r;
                    p.name = std::string(to_string(src)) + "_f" + std::to_string(f) + "_layer" +
                             (l ? std::to_string(l) : std::string("last")) + "_res" +
                             (r ? std::to_string(r) : std::string("full"));
                    pts.push_back(std::move(p));
                }
    return pts;
}

// Evaluates every grid point into dir/<point name>/. A failing point is
// recorded and the sweep moves on.
inline std::vector<SweepPoint> sweep(const DatasetIndex& ds, const WeightContainer& w, const EvalSettings& base,
                                     const SweepGrid& grid, const fs::path& dir,
                                     const std::vector<std::pair<std::string, std::string>>& config,
                                     std::ostream* log = nullptr) {
    auto pts = sweep_points(base, grid);
    for (auto& p : pts) {
        try {
            auto records = evaluate_dataset(ds, w, p.settings);
            auto cfg = config;
            cfg.emplace_back("sweep_point", p.name);
            write_run_outputs(records, cfg, dir / p.name);
            p.ok = true;
        } catch (const std::exception& e) {
            p.error = e.what();
            if (log) *log << "sweep point " << p.name << " failed: " << e.what() << '\n';
        }
    }
    return pts;
}

// ---------------------------------------------------------------------------
// Crop export for external classifiers: the (pixels x pixels) region around
// each record's first fixation, taken from the resized and center-cropped
// image before normalisation. Writes <id>.ppm files plus manifest.csv.

inline constexpr const char* kCropManifestHeader = "crop_file,image_id,class_index,class_name,row,col,pixels";

inline std::size_t export_crops(const std::vector<SaccadeRecord>& records, const DatasetIndex& ds,
                                const PreprocessOptions& pre, std::size_t pixels, std::size_t patch_size,
                                const fs::path& dir) {
    detail::require(pixels % patch_size == 0 && (pixels / patch_size) % 2 == 1,
                    "export_crops: crop size must be an odd number of patches");
    fs::create_directories(dir);
    std::map<std::string, const DatasetEntry*> by_id;
    for (const auto& e : ds.entries) by_id[e.image_id] = &e;
    std::ostringstream manifest;
    manifest << kCropManifestHeader << '\n';
    std::size_t written = 0;
    for (const auto& r : records) {
        if (r.trace.centers.empty()) continue;
        auto it = by_id.find(r.image_id);
        if (it == by_id.end()) throw std::runtime_error("export_crops: image '" + r.image_id + "' not in dataset");
        RgbImage img = resize_and_center_crop(read_ppm(it->second->path), pre);
        FoveaSpec spec{pixels / patch_size, img.height / patch_size, img.width / patch_size, patch_size};
        const Cell c = clamp_center(r.trace.centers.front(), spec);
        const std::size_t h = spec.f / 2;
        RgbImage patch = crop(img, (c.row - h) * patch_size, (c.col - h) * patch_size, pixels, pixels);
        const std::string file = sanitize_id(r.image_id) + ".ppm";
        try {
            write_ppm(patch, (dir / file).string());
        } catch (const std::exception& e) {
            throw std::runtime_error("export_crops: " + r.image_id + ": " + e.what());
        }
        manifest << file << ',' << r.image_id << ',' << r.true_class << ',' << ds.class_names[r.true_class] << ','
                 << r.trace.centers.front().row << ',' << r.trace.centers.front().col << ',' << pixels << '\n';
        ++written;
    }
    write_text(dir / "manifest.csv", manifest.str());
    return written;
}

} // namespace saccade
