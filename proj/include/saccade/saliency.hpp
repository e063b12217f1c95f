#pragma once

// Saliency grids that drive fixation selection: fused [CLS] attention,
// random and center-prior baselines, a graph-based bottom-up model, and
// maps imported from external saliency models.

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "saccade/container.hpp"
#include "saccade/errors.hpp"
#include "saccade/image.hpp"
#include "saccade/rng.hpp"
#include "saccade/tensorops.hpp"
#include "saccade/vit.hpp"

namespace saccade {

enum class SaliencySource { attention, random, center, graph_based, imported };

inline const char* to_string(SaliencySource s) {
    switch (s) {
    case SaliencySource::attention: return "attention";
    case SaliencySource::random: return "random";
    case SaliencySource::center: return "center";
    case SaliencySource::graph_based: return "graph_based";
    case SaliencySource::imported: return "imported";
    }
    return "?";
}

inline SaliencySource parse_saliency_source(const std::string& s) {
    if (s == "attention") return SaliencySource::attention;
    if (s == "random") return SaliencySource::random;
    if (s == "center") return SaliencySource::center;
    if (s == "graph_based" || s == "graph") return SaliencySource::graph_based;
    if (s == "imported") return SaliencySource::imported;
    throw ContractViolation("unknown saliency source '" + s + "'");
}

struct AttentionProvenance {
    std::size_t layer = 0;
    std::size_t resolution = 0; // input side length the attention was computed at
    Grid2D native;              // fused map before resizing to the classification grid
};

struct SaliencyGrid {
    Grid2D grid;
    SaliencySource source = SaliencySource::attention;
    std::optional<AttentionProvenance> provenance;
};

inline SaliencyGrid fuse_heads_max(const AttentionCapture& capture) {
    detail::require(!capture.per_head.empty(), "fuse_heads_max: capture has no heads");
    Grid2D fused = capture.per_head.front();
    for (std::size_t h = 1; h < capture.per_head.size(); ++h) {
        const Grid2D& g = capture.per_head[h];
        detail::require(g.height == fused.height && g.width == fused.width, "fuse_heads_max: head shapes differ");
        for (std::size_t i = 0; i < g.size(); ++i) fused.values[i] = std::max(fused.values[i], g.values[i]);
    }
    SaliencyGrid s;
    s.source = SaliencySource::attention;
    s.provenance = AttentionProvenance{capture.layer, 0, fused};
    s.grid = std::move(fused);
    return s;
}

// Fused attention at `layer`. Below the image's own resolution the image is
// downscaled first and the coarse map is resized back to the image's patch grid.
inline SaliencyGrid attention_saliency(const ImageTensor& img, const WeightContainer& w, std::size_t layer,
                                       std::size_t att_resolution) {
    const std::size_t n = w.config.patch_size;
    if (att_resolution == 0 || att_resolution % n != 0)
        throw ContractViolation("attention_saliency: resolution " + std::to_string(att_resolution) +
                                " not divisible by patch size " + std::to_string(n));
    detail::require(img.height % n == 0 && img.width % n == 0, "attention_saliency: image not divisible by patch size");
    const std::size_t grid_h = img.height / n, grid_w = img.width / n;

    std::size_t in_h = img.height, in_w = img.width;
    if (att_resolution < img.height) {
        in_h = att_resolution;
        in_w = img.width * att_resolution / img.height;
        if (in_w % n != 0)
            throw ContractViolation("attention_saliency: scaled width " + std::to_string(in_w) +
                                    " not divisible by patch size");
    }
    ImageTensor resized;
    const ImageTensor* src = &img;
    if (in_h != img.height) {
        resized = resize(img, in_h, in_w);
        src = &resized;
    }
    ForwardResult fr = forward(patchify_embed(*src, w), w, layer);
    SaliencyGrid s = fuse_heads_max(fr.capture);
    s.provenance->resolution = in_h;
    if (s.grid.height != grid_h || s.grid.width != grid_w) s.grid = bilinear_resize(s.grid, grid_h, grid_w);
    return s;
}

// Shannon entropy (natural log) of a nonnegative map renormalised over its cells.
inline double attention_entropy(const Grid2D& g) {
    double sum = 0.0;
    for (float v : g.values) {
        if (!(v >= 0.0f) || !std::isfinite(v)) throw ContractViolation("attention_entropy: negative or non-finite cell");
        sum += v;
    }
    if (!(sum > 0.0)) throw ContractViolation("attention_entropy: all-zero map");
    double h = 0.0;
    for (float v : g.values) {
        if (v <= 0.0f) continue;
        const double p = v / sum;
        h -= p * std::log(p);
    }
    return h;
}

inline double attention_entropy(const SaliencyGrid& s) { return attention_entropy(s.grid); }

inline std::vector<double> head_entropies(const AttentionCapture& capture) {
    std::vector<double> out;
    for (const auto& g : capture.per_head) out.push_back(attention_entropy(g));
    return out;
}

inline SaliencyGrid random_saliency(std::uint64_t seed, std::size_t grid_h, std::size_t grid_w) {
    SplitMix64 rng(seed);
    SaliencyGrid s;
    s.source = SaliencySource::random;
    s.grid = Grid2D(grid_h, grid_w);
    for (float& v : s.grid.values) v = static_cast<float>(rng.uniform());
    return s;
}

inline SaliencyGrid center_saliency(std::size_t grid_h, std::size_t grid_w, double sigma) {
    detail::require(sigma > 0.0, "center_saliency: sigma must be positive");
    const double cy = (static_cast<double>(grid_h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(grid_w) - 1.0) / 2.0;
    SaliencyGrid s;
    s.source = SaliencySource::center;
    s.grid = Grid2D(grid_h, grid_w);
    for (std::size_t y = 0; y < grid_h; ++y)
        for (std::size_t x = 0; x < grid_w; ++x) {
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            s.grid.at(y, x) = static_cast<float>(std::exp(-d2 / (2.0 * sigma * sigma)));
        }
    return s;
}

// ---------------------------------------------------------------------------
// Graph-based bottom-up saliency

struct StationaryResult {
    std::vector<double> pi;
    double residual = 0.0; // ||pi P - pi||_1
    std::size_t iterations = 0;
};

// Row-normalises a nonnegative n x n weight matrix. Rows with no outgoing
// mass become self-loops.
inline std::vector<double> transition_matrix(std::vector<double> weights, std::size_t n) {
    detail::require(weights.size() == n * n, "transition_matrix: weights must be n x n");
    for (std::size_t a = 0; a < n; ++a) {
        double sum = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            detail::require(weights[a * n + b] >= 0.0 && std::isfinite(weights[a * n + b]),
                            "transition_matrix: weights must be finite and nonnegative");
            sum += weights[a * n + b];
        }
        if (sum > 0.0) {
            for (std::size_t b = 0; b < n; ++b) weights[a * n + b] /= sum;
        } else {
            weights[a * n + a] = 1.0;
        }
    }
    return weights;
}

// Stationary distribution of a row-stochastic P by power iteration on the
// lazy chain (P + I) / 2, which shares P's fixed points and converges for
// periodic chains too. Starts from uniform.
inline StationaryResult stationary_distribution(const std::vector<double>& P, std::size_t n, double tol = 1e-8,
                                                std::size_t max_iters = 200000) {
    detail::require(n >= 1 && P.size() == n * n, "stationary_distribution: P must be n x n");
    StationaryResult r;
    r.pi.assign(n, 1.0 / static_cast<double>(n));
    std::vector<double> next(n);
    for (r.iterations = 0; r.iterations <= max_iters; ++r.iterations) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t a = 0; a < n; ++a) {
            const double pa = r.pi[a];
            if (pa == 0.0) continue;
            const double* row = P.data() + a * n;
            for (std::size_t b = 0; b < n; ++b) next[b] += pa * row[b];
        }
        r.residual = 0.0;
        for (std::size_t b = 0; b < n; ++b) r.residual += std::abs(next[b] - r.pi[b]);
        if (r.residual < tol) break;
        if (r.iterations == max_iters)
            throw ConvergenceError("stationary_distribution: no convergence after " + std::to_string(max_iters) +
                                       " iterations (residual " + std::to_string(r.residual) + ")",
                                   r.residual);
        double sum = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            r.pi[b] = 0.5 * (r.pi[b] + next[b]);
            sum += r.pi[b];
        }
        for (double& v : r.pi) v /= sum;
    }
    return r;
}

struct GraphSaliencyOptions {
    double sigma_fraction = 0.15;  // Gaussian falloff as a fraction of the working-grid diagonal
    double feature_floor = 1e-6;   // floor applied before the log-ratio dissimilarity
    std::size_t max_working = 32;  // working grid side cap
    std::size_t working_cell = 8;  // pixels per working cell before capping
    double tol = 1e-8;
    std::size_t max_iters = 200000;
    std::size_t out_h = 0;         // 0: image height / 16
    std::size_t out_w = 0;
};

namespace detail {

// Seven nonnegative feature maps at pixel resolution: intensity, red-green
// and blue-yellow opponency, and oriented gradient energy at 0/45/90/135 deg.
inline std::vector<Grid2D> graph_features(const ImageTensor& img) {
    const std::size_t H = img.height, W = img.width;
    auto [lo_it, hi_it] = std::minmax_element(img.data.begin(), img.data.end());
    const double lo = *lo_it, range = *hi_it - *lo_it;
    auto px = [&](std::size_t y, std::size_t x, std::size_t c) {
        return range > 0.0 ? (img.at(y, x, c) - lo) / range : 0.0;
    };
    std::vector<Grid2D> f(7, Grid2D(H, W));
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const double r = px(y, x, 0), g = px(y, x, 1), b = px(y, x, 2);
            f[0].at(y, x) = static_cast<float>((r + g + b) / 3.0);
            f[1].at(y, x) = static_cast<float>(std::abs(r - g));
            f[2].at(y, x) = static_cast<float>(std::abs(b - 0.5 * (r + g)));
        }
    const Grid2D& I = f[0];
    auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
        y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(H) - 1);
        x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(W) - 1);
        return static_cast<double>(I.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)));
    };
    const double c45 = std::sqrt(0.5);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const auto iy = static_cast<std::ptrdiff_t>(y), ix = static_cast<std::ptrdiff_t>(x);
            // Sobel
            const double gx = (at(iy - 1, ix + 1) + 2 * at(iy, ix + 1) + at(iy + 1, ix + 1)) -
                              (at(iy - 1, ix - 1) + 2 * at(iy, ix - 1) + at(iy + 1, ix - 1));
            const double gy = (at(iy + 1, ix - 1) + 2 * at(iy + 1, ix) + at(iy + 1, ix + 1)) -
                              (at(iy - 1, ix - 1) + 2 * at(iy - 1, ix) + at(iy - 1, ix + 1));
            f[3].at(y, x) = static_cast<float>(std::abs(gx));
            f[4].at(y, x) = static_cast<float>(std::abs(c45 * (gx + gy)));
            f[5].at(y, x) = static_cast<float>(std::abs(gy));
            f[6].at(y, x) = static_cast<float>(std::abs(c45 * (gx - gy)));
        }
    return f;
}

inline Grid2D box_downsample(const Grid2D& g, std::size_t out_h, std::size_t out_w) {
    Grid2D out(out_h, out_w);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        const std::size_t y0 = oy * g.height / out_h, y1 = (oy + 1) * g.height / out_h;
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::size_t x0 = ox * g.width / out_w, x1 = (ox + 1) * g.width / out_w;
            double acc = 0.0;
            for (std::size_t y = y0; y < y1; ++y)
                for (std::size_t x = x0; x < x1; ++x) acc += g.at(y, x);
            out.at(oy, ox) = static_cast<float>(acc / static_cast<double>((y1 - y0) * (x1 - x0)));
        }
    }
    return out;
}

inline std::vector<double> gaussian_affinity(std::size_t h, std::size_t w, double sigma) {
    const std::size_t n = h * w;
    std::vector<double> g(n * n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            const double dy = static_cast<double>(a / w) - static_cast<double>(b / w);
            const double dx = static_cast<double>(a % w) - static_cast<double>(b % w);
            g[a * n + b] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        }
    return g;
}

} // namespace detail

struct GraphSaliencyDetail {
    std::vector<StationaryResult> activation;    // per channel
    std::vector<StationaryResult> normalization; // per channel
    Grid2D working;                              // averaged map on the working grid
};

inline SaliencyGrid graph_saliency(const ImageTensor& img, const GraphSaliencyOptions& opt = {},
                                   GraphSaliencyDetail* info = nullptr) {
    if (img.height < 32 || img.width < 32) throw ContractViolation("graph_saliency: image must be at least 32x32");
    const std::size_t wh = std::min(opt.max_working, img.height / opt.working_cell);
    const std::size_t ww = std::min(opt.max_working, img.width / opt.working_cell);
    const std::size_t n = wh * ww;
    const double sigma = opt.sigma_fraction * std::sqrt(static_cast<double>(wh * wh + ww * ww));
    const std::vector<double> affinity = detail::gaussian_affinity(wh, ww, sigma);

    std::vector<double> total(n, 0.0);
    const auto features = detail::graph_features(img);
    std::vector<double> wts(n * n);
    for (const Grid2D& pixel_map : features) {
        Grid2D f = detail::box_downsample(pixel_map, wh, ww);
        std::vector<double> logf(n);
        for (std::size_t a = 0; a < n; ++a) logf[a] = std::log(std::max<double>(f.values[a], opt.feature_floor));

        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) wts[a * n + b] = std::abs(logf[a] - logf[b]) * affinity[a * n + b];
        StationaryResult act = stationary_distribution(transition_matrix(wts, n), n, opt.tol, opt.max_iters);

        // Normalisation pass: mass flows toward highly activated cells.
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) wts[a * n + b] = act.pi[b] * affinity[a * n + b];
        StationaryResult norm = stationary_distribution(transition_matrix(wts, n), n, opt.tol, opt.max_iters);

        for (std::size_t a = 0; a < n; ++a) total[a] += norm.pi[a] / static_cast<double>(features.size());
        if (info) {
            info->activation.push_back(std::move(act));
            info->normalization.push_back(norm);
        }
    }
    Grid2D working(wh, ww);
    for (std::size_t a = 0; a < n; ++a) working.values[a] = static_cast<float>(total[a]);
    const std::size_t out_h = opt.out_h ? opt.out_h : img.height / 16;
    const std::size_t out_w = opt.out_w ? opt.out_w : img.width / 16;
    SaliencyGrid s;
    s.source = SaliencySource::graph_based;
    s.grid = bilinear_resize(working, out_h, out_w);
    if (info) info->working = std::move(working);
    return s;
}

// ---------------------------------------------------------------------------
// Import / export: <base>.pgm (8-bit, min..max -> 0..255) plus a lossless
// float sidecar <base>.manifest + <base>.bin holding tensor "saliency" [h, w].

inline void export_saliency(const SaliencyGrid& s, const std::string& base) {
    write_pgm(s.grid, base + ".pgm");
    TensorStore store;
    store.set_config("source", to_string(s.source));
    if (s.provenance) {
        store.set_config("layer", std::to_string(s.provenance->layer));
        store.set_config("resolution", std::to_string(s.provenance->resolution));
    }
    store.add("saliency", {s.grid.height, s.grid.width}, s.grid.values);
    save_container(store, base + ".manifest", base + ".bin");
}

// Reads <base>.manifest/.bin when present, otherwise <base>.pgm; any
// resolution is accepted and resized to out_h x out_w.
inline SaliencyGrid import_saliency(const std::string& base, std::size_t out_h, std::size_t out_w) {
    Grid2D g;
    if (std::filesystem::exists(base + ".manifest")) {
        TensorStore store = load_container(base + ".manifest", base + ".bin");
        const TensorEntry* t = store.find("saliency");
        if (!t || t->shape.size() != 2) throw LoadError("sidecar '" + base + ".manifest': missing 2-D tensor 'saliency'");
        g = Grid2D(t->shape[0], t->shape[1], t->data);
    } else {
        g = read_pgm(base + ".pgm");
    }
    for (float v : g.values)
        if (!std::isfinite(v)) throw LoadError("imported saliency '" + base + "' has non-finite values");
    SaliencyGrid s;
    s.source = SaliencySource::imported;
    s.grid = (g.height == out_h && g.width == out_w) ? std::move(g) : bilinear_resize(g, out_h, out_w);
    return s;
}

} // namespace saccade
