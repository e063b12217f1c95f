// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "saccade.hpp"

using namespace saccade;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += !ok;
}

// Runs a check, turning an escaped exception into a failure.
void check(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    try {
        auto [ok, detail] = body();
        report(name, ok, detail);
    } catch (const std::exception& e) {
        report(name, false, std::string("exception: ") + e.what());
    }
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

ImageTensor random_tensor(std::size_t h, std::size_t w, std::mt19937& gen) {
    std::normal_distribution<float> n(0.0f, 1.0f);
    ImageTensor t(h, w);
    for (auto& v : t.data) v = n(gen);
    return t;
}

ImageTensor identity_preprocess(const RgbImage& img) {
    PreprocessOptions opt;
    opt.resize_short = img.height;
    opt.crop = img.height;
    return preprocess(img, opt);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::pair<bool, std::string> normalization_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937 gen(1);
    double worst_mass = 0.0, worst_prob = 0.0;
    bool probs_valid = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const WeightContainer w = make_random_weights(ModelConfig::toy(), 1000 + trial);
        const std::size_t side = 16 * (6 + trial % 9);
        const ImageTensor img = random_tensor(side, side, gen);
        TokenSequence seq = patchify_embed(img, w);
        if (trial % 2) {
            std::vector<std::uint8_t> mask(seq.num_patches());
            std::bernoulli_distribution keep(0.4);
            for (auto& m : mask) m = keep(gen);
            mask[trial % mask.size()] = 1;
            seq.set_visibility(mask);
        }
        const std::size_t layer = 1 + trial % w.config.num_layers;
        const ForwardResult fr = forward(seq, w, layer);
        for (std::size_t h = 0; h < fr.capture.per_head.size(); ++h) {
            double mass = fr.capture.cls_self_weight[h];
            for (float v : fr.capture.per_head[h].values) {
                mass += v;
                probs_valid &= v >= 0.0f;
            }
            worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
        }
        const ClassScores s = classify(fr.cls_per_layer, w);
        double total = 0.0;
        for (double p : s.probs) {
            probs_valid &= p >= 0.0 && p <= 1.0 && std::isfinite(p);
            total += p;
        }
        worst_prob = std::max(worst_prob, std::abs(total - 1.0));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = worst_mass <= 1e-5 && worst_prob <= 1e-5 && probs_valid && secs < 60.0;
    return {ok, "max |mass-1| " + num(worst_mass) + ", max |sum p-1| " + num(worst_prob) + ", " + num(secs) +
                    " s for 1000 forwards"};
}

std::pair<bool, std::string> permutation_invariance() {
    RandomWeightOptions opt;
    opt.zero_pos_embed = true;
    const WeightContainer w = make_random_weights(ModelConfig::toy(), 11, opt);
    std::mt19937 gen(2);
    const TokenSequence seq = patchify_embed(random_tensor(224, 224, gen), w);
    const std::size_t L = w.config.num_layers;
    const std::vector<float> base = forward(seq, w, L).cls_per_layer.back();
    double worst = 0.0;
    std::vector<std::size_t> perm(seq.num_patches());
    for (int trial = 0; trial < 100; ++trial) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), gen);
        TokenSequence p = seq;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            auto src = seq.tokens.row(1 + perm[i]);
            std::copy(src.begin(), src.end(), p.tokens.row(1 + i).begin());
        }
        const std::vector<float> out = forward(p, w, L).cls_per_layer.back();
        for (std::size_t d = 0; d < out.size(); ++d) worst = std::max(worst, double(std::abs(out[d] - base[d])));
    }
    return {worst < 1e-5, "max abs [CLS] change over 100 permutations " + num(worst)};
}

// Smallest k whose cumulative mask covers the grid.
std::size_t saccades_to_cover(const SaliencyGrid& s, const FoveaSpec& spec) {
    for (std::size_t k = 1;; ++k)
        if (run_saccade_sequence(s, spec, k).revealed_cells.back() == spec.cells()) return k;
}

std::pair<bool, std::string> full_reveal_identity() {
    const WeightContainer w = make_random_weights(ModelConfig::toy(), 5);
    const char* dir_env = std::getenv("TMPDIR");
    const fs::path dir = fs::path(dir_env ? dir_env : "/tmp") / ("saccade_accept_maps_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    SplitMix64 rng(5);
    std::size_t checked = 0, identical = 0;
    std::string bad;
    for (int image = 0; image < 3; ++image) {
        const ImageTensor img = preprocess(random_disk_stimulus(256, 288, rng).image);
        const std::string id = "img" + std::to_string(image);
        EvalSettings st;
        export_saliency(graph_saliency(img), (dir / sanitize_id(id)).string());
        st.saliency.imported_dir = dir.string();
        for (SaliencySource src : {SaliencySource::attention, SaliencySource::random, SaliencySource::center,
                                   SaliencySource::graph_based, SaliencySource::imported}) {
            for (std::size_t f : {3, 5}) {
                st.saliency.source = src;
                st.saliency.seed = 9;
                st.fovea = f;
                st.saccades = saccades_to_cover(make_saliency(img, w, st.saliency, id), {f, 14, 14, 16});
                const SaccadeRecord r = evaluate_image(img, w, st, id, 0);
                ++checked;
                const bool same = r.trace.revealed_cells.back() == 196 &&
                                  r.step_scores.back().logits == r.full_scores.logits;
                identical += same;
                if (!same) bad += std::string(" ") + to_string(src) + "/f" + std::to_string(f);
            }
        }
    }
    fs::remove_all(dir);
    return {identical == checked, std::to_string(identical) + "/" + std::to_string(checked) +
                                      " (image, source, fovea) cases bit-identical after full cover" + bad};
}

std::pair<bool, std::string> inhibition_of_return() {
    std::mt19937 gen(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::uniform_int_distribution<int> levels(0, 3);
    const double N = 196.0;
    std::size_t violations = 0, grids = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t f = trial % 2 ? 5 : 3;
        SaliencyGrid s;
        s.grid = Grid2D(14, 14);
        // Every fourth grid is coarsely quantised to exercise tie-breaking.
        for (auto& v : s.grid.values) v = trial % 4 == 0 ? float(levels(gen)) : u(gen);
        const FoveaSpec spec{f, 14, 14, 16};
        const SaccadeTrace t = run_saccade_sequence(s, spec, 10);
        ++grids;
        Mask suppressed(196, 0), revealed(196, 0);
        double prev = 0.0;
        bool ok = t.size() == 10;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const Cell c = t.centers[i];
            ok &= !suppressed[c.row * 14 + c.col];
            const Mask win = fovea_mask(c, spec);
            bool disjoint = true;
            for (std::size_t j = 0; j < 196; ++j) {
                disjoint &= !(win[j] && revealed[j]);
                suppressed[j] |= win[j];
                revealed[j] |= win[j];
            }
            const double delta = t.revealed_fraction[i] - prev;
            const double full = double(f * f) / N;
            ok &= delta >= 1.0 / N - 1e-12 && delta <= full + 1e-12;
            ok &= (std::abs(delta - full) <= 1e-12) == disjoint;
            ok &= t.revealed_fraction[i] <= std::min(1.0, double((i + 1) * f * f) / N) + 1e-12;
            ok &= t.masks[i] == revealed;
            prev = t.revealed_fraction[i];
        }
        violations += !ok;
    }
    return {violations == 0, std::to_string(violations) + " violating sequences out of " + std::to_string(grids)};
}

// Replays each sequence from scratch for every saccade, reading the
// transition categories off the history rather than a running state.
DynamicsReport dynamics_oracle(const std::vector<std::vector<bool>>& c, const std::vector<bool>& full) {
    DynamicsReport r;
    r.images = c.size();
    r.k = c.front().size();
    const std::size_t k = r.k;
    for (auto* v : {&r.correct, &r.first_correct, &r.correct_to_wrong, &r.wrong_to_correct, &r.stayed_wrong,
                    &r.stayed_right, &r.cumulative_correct})
        v->assign(k, 0);
    r.occurrence_all.assign(k + 1, 0);
    r.occurrence_saccade_only.assign(k + 1, 0);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto& h = c[i];
        for (std::size_t s = 0; s < k; ++s) {
            bool any_before = false, drop_before = false;
            for (std::size_t t = 0; t < s; ++t) {
                if (t > 0 && h[t - 1] && !h[t]) drop_before = true;
                any_before |= h[t];
            }
            r.correct[s] += h[s];
            r.cumulative_correct[s] += any_before || h[s];
            if (!any_before) {
                r.first_correct[s] += h[s];
                continue;
            }
            const bool prev = h[s - 1];
            if (prev && !h[s]) ++r.correct_to_wrong[s];
            if (!prev && h[s]) ++r.wrong_to_correct[s];
            if (!prev && !h[s]) ++r.stayed_wrong[s];
            if (prev && h[s] && drop_before) ++r.stayed_right[s];
        }
        const std::size_t n = std::count(h.begin(), h.end(), true);
        ++r.occurrence_all[n];
        if (n > 0 && !full[i]) ++r.occurrence_saccade_only[n];
        r.full_correct += full[i];
    }
    for (std::size_t s = 0; s < k; ++s) {
        r.accuracy.push_back(double(r.correct[s]) / double(r.images));
        r.cumulative_accuracy.push_back(double(r.cumulative_correct[s]) / double(r.images));
    }
    r.full_accuracy = double(r.full_correct) / double(r.images);
    return r;
}

std::pair<bool, std::string> metric_formulas() {
    const std::vector<double> uniform(1000, 1.0 / 1000.0);
    std::vector<double> onehot(1000, 0.0);
    onehot[417] = 1.0;
    const double cu = certainty(uniform), co = certainty(onehot);
    const double h = attention_entropy(Grid2D(14, 14, 0.37f));
    const double herr = std::abs(h - std::log(196.0));

    std::mt19937 gen(4);
    std::size_t matched = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t images = 1 + trial % 23, k = 1 + trial % 12;
        std::bernoulli_distribution coin(0.2 + 0.6 * (trial % 5) / 4.0);
        std::vector<std::vector<bool>> seqs(images, std::vector<bool>(k));
        std::vector<bool> full(images);
        for (std::size_t i = 0; i < images; ++i) {
            for (std::size_t s = 0; s < k; ++s) seqs[i][s] = coin(gen);
            full[i] = coin(gen);
        }
        matched += dynamics_from_sequences(seqs, full) == dynamics_oracle(seqs, full);
    }
    const bool ok = std::abs(cu) <= 1e-12 && std::abs(co - 1.0) <= 1e-12 && herr <= 1e-9 && matched == 1000;
    return {ok, "certainty(uniform) " + num(cu) + ", 1-certainty(one-hot) " + num(1.0 - co) + ", |H-ln196| " +
                    num(herr) + ", dynamics " + std::to_string(matched) + "/1000 exact"};
}

std::pair<bool, std::string> graph_saliency_checks() {
    // Stationarity, recomputed here from the activation chain of each channel.
    double worst_res = 0.0, worst_sum = 0.0, worst_reported = 0.0;
    SplitMix64 rng(6);
    for (int image = 0; image < 3; ++image) {
        const ImageTensor img = identity_preprocess(random_disk_stimulus(224, 224, rng).image);
        GraphSaliencyOptions opt;
        GraphSaliencyDetail info;
        graph_saliency(img, opt, &info);
        const std::size_t wh = std::min(opt.max_working, img.height / opt.working_cell);
        const std::size_t n = wh * wh;
        const auto aff = detail::gaussian_affinity(wh, wh, opt.sigma_fraction * std::sqrt(2.0 * double(wh * wh)));
        const auto feats = detail::graph_features(img);
        for (std::size_t ch = 0; ch < feats.size(); ++ch) {
            const Grid2D f = detail::box_downsample(feats[ch], wh, wh);
            std::vector<double> wts(n * n);
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b)
                    wts[a * n + b] = std::abs(std::log(std::max<double>(f.values[a], opt.feature_floor)) -
                                              std::log(std::max<double>(f.values[b], opt.feature_floor))) *
                                     aff[a * n + b];
            const auto P = transition_matrix(wts, n);
            const auto& pi = info.activation[ch].pi;
            double res = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                double v = 0.0;
                for (std::size_t a = 0; a < n; ++a) v += pi[a] * P[a * n + b];
                res += std::abs(v - pi[b]);
            }
            worst_res = std::max(worst_res, res);
            for (const auto* r : {&info.activation[ch], &info.normalization[ch]}) {
                worst_sum = std::max(worst_sum, std::abs(std::accumulate(r->pi.begin(), r->pi.end(), 0.0) - 1.0));
                worst_reported = std::max(worst_reported, r->residual);
            }
        }
    }

    // First fixation on disk-on-gray stimuli, judged by the fixated cell's center.
    std::size_t hits = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const DiskStimulus d = random_disk_stimulus(224, 224, rng);
        const SaliencyGrid s = graph_saliency(identity_preprocess(d.image));
        const SaccadeTrace t = run_saccade_sequence(s, {3, 14, 14, 16}, 1);
        const double y = t.centers[0].row * 16.0 + 8.0, x = t.centers[0].col * 16.0 + 8.0;
        hits += std::abs(y - d.cy) <= d.radius && std::abs(x - d.cx) <= d.radius;
    }

    const double h = attention_entropy(graph_saliency(identity_preprocess(RgbImage(224, 224, 0.5f))));
    const double hmax = std::log(196.0);
    const bool ok = worst_res < 1e-8 && worst_reported < 1e-8 && worst_sum <= 1e-12 && hits >= 45 &&
                    h >= 0.99 * hmax;
    return {ok, "max residual " + num(worst_res) + " (reported " + num(worst_reported) + "), max |sum pi-1| " +
                    num(worst_sum) + ", disk hits " + std::to_string(hits) + "/50, constant-image entropy " +
                    num(h / hmax * 100.0) + "% of ln196"};
}

std::pair<bool, std::string> resolution_path() {
    const WeightContainer w = make_random_weights(ModelConfig::toy(), 8);
    SplitMix64 rng(8);
    const ImageTensor img = identity_preprocess(random_disk_stimulus(224, 224, rng).image);
    std::string detail;
    bool ok = true;
    for (std::size_t res : {128, 112, 96}) {
        const SaliencyGrid s = attention_saliency(img, w, w.config.num_layers, res);
        const Grid2D& nat = s.provenance->native;
        const std::size_t g = res / 16;
        bool shape = nat.height == g && nat.width == g && s.grid.height == 14 && s.grid.width == 14;
        bool corners = shape && s.grid.at(0, 0) == nat.at(0, 0) && s.grid.at(0, 13) == nat.at(0, g - 1) &&
                       s.grid.at(13, 0) == nat.at(g - 1, 0) && s.grid.at(13, 13) == nat.at(g - 1, g - 1);
        ok &= shape && corners;
        detail += (detail.empty() ? "" : ", ") + std::to_string(res) + " -> " + std::to_string(nat.height) + "x" +
                  std::to_string(nat.width) + (corners ? " corners exact" : " corners differ");
    }
    return {ok, detail};
}

std::pair<bool, std::string> determinism() {
    const char* dir_env = std::getenv("TMPDIR");
    const fs::path dir = fs::path(dir_env ? dir_env : "/tmp") / ("saccade_accept_runs_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    const ToyAssets a = write_toy_assets(dir / "assets", 3, 3, 12);
    std::vector<std::string> outs;
    bool ok = true;
    std::size_t runs = 0;
    for (SaliencySource src : {SaliencySource::random, SaliencySource::attention}) {
        std::vector<std::pair<std::string, std::string>> first;
        for (std::size_t threads : {1, 4, 1}) {
            RunConfig cfg;
            cfg.weights_manifest = a.manifest;
            cfg.dataset = a.dataset;
            cfg.eval.saliency.source = src;
            cfg.eval.saliency.seed = 7;
            cfg.threads = threads;
            cfg.out = (dir / ("run" + std::to_string(runs++))).string();
            std::ostringstream sink;
            ok &= cmd_run(cfg, sink, sink) == kExitOk;
            std::pair<std::string, std::string> files{slurp(fs::path(cfg.out) / "records.csv"),
                                                      slurp(fs::path(cfg.out) / "summary.json")};
            ok &= !files.first.empty() && !files.second.empty();
            if (first.empty()) first.push_back(files);
            else ok &= files == first.front();
        }
    }
    fs::remove_all(dir);
    return {ok, std::to_string(runs) + " runs (random and attention sources, threads 1/4/1), records.csv and "
                                       "summary.json " + (ok ? "byte-identical" : "differ")};
}

} // namespace

int main() {
    check("normalization", normalization_suite);
    check("permutation-invariance", permutation_invariance);
    check("full-reveal-identity", full_reveal_identity);
    check("inhibition-of-return", inhibition_of_return);
    check("metric-formulas", metric_formulas);
    check("graph-saliency", graph_saliency_checks);
    check("resolution-path", resolution_path);
    check("determinism", determinism);
    std::printf("%d failing criteria\n", failures);
    return failures ? 1 : 0;
}
