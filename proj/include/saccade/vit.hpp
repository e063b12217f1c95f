#pragma once

// Pre-norm vision transformer with [CLS] attention capture and
// token-subset evaluation. Hidden patch tokens are removed from the
// attention computation entirely: they are neither queries, keys nor
// values, and their rows pass through every layer untouched.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "saccade/container.hpp"
#include "saccade/errors.hpp"
#include "saccade/image.hpp"
#include "saccade/rng.hpp"
#include "saccade/tensorops.hpp"

namespace saccade {

// Number of trailing [CLS] vectors concatenated for the linear readout.
inline constexpr std::size_t kReadoutLayers = 4;

struct ModelConfig {
    std::size_t patch_size = 16;
    std::size_t embed_dim = 384;
    std::size_t num_heads = 6;
    std::size_t num_layers = 12;
    std::size_t mlp_ratio = 4;
    std::size_t num_classes = 1000;
    // Native grid of the positional table; other grids are interpolated.
    std::size_t pos_grid_h = 14;
    std::size_t pos_grid_w = 14;
    double ln_eps = 1e-6;

    std::size_t head_dim() const { return embed_dim / num_heads; }
    std::size_t mlp_dim() const { return embed_dim * mlp_ratio; }
    std::size_t patch_dim() const { return 3 * patch_size * patch_size; }

    void validate() const {
        detail::require(patch_size >= 1, "ModelConfig: patch_size must be >= 1");
        detail::require(num_heads >= 1 && embed_dim % num_heads == 0,
                        "ModelConfig: embed_dim must be divisible by num_heads");
        detail::require(num_layers >= 1, "ModelConfig: num_layers must be >= 1");
        detail::require(mlp_ratio >= 1, "ModelConfig: mlp_ratio must be >= 1");
        detail::require(num_classes >= 1, "ModelConfig: num_classes must be >= 1");
        detail::require(pos_grid_h >= 1 && pos_grid_w >= 1, "ModelConfig: empty positional grid");
        detail::require(ln_eps > 0.0, "ModelConfig: ln_eps must be positive");
    }

    // Small model used by property tests and the demo pipeline.
    static ModelConfig toy() {
        ModelConfig c;
        c.embed_dim = 32;
        c.num_heads = 4;
        c.num_layers = 4;
        c.num_classes = 10;
        return c;
    }

    static ModelConfig vit_small() { return ModelConfig{}; }
};

struct BlockWeights {
    std::vector<float> norm1_w, norm1_b;
    Matrix qkv;  // (3D, D): rows are [q heads | k heads | v heads]
    std::vector<float> qkv_b;
    Matrix proj; // (D, D)
    std::vector<float> proj_b;
    std::vector<float> norm2_w, norm2_b;
    Matrix fc1;  // (mlp, D)
    std::vector<float> fc1_b;
    Matrix fc2;  // (D, mlp)
    std::vector<float> fc2_b;
};

struct WeightContainer {
    ModelConfig config;
    Matrix patch_proj;  // (D, 3*n*n), input index c*n*n + ky*n + kx
    std::vector<float> patch_bias;
    std::vector<float> cls_token;
    Matrix pos_embed;   // (1 + pos_grid_h*pos_grid_w, D), row 0 is [CLS]
    std::vector<BlockWeights> blocks;
    std::vector<float> norm_w, norm_b;
    Matrix head;        // (num_classes, kReadoutLayers*D)
    std::vector<float> head_b;
};

struct TokenSequence {
    Matrix tokens;                     // (N+1, D), [CLS] at row 0
    std::vector<std::uint8_t> visible; // N patch flags, row-major over the grid
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;

    std::size_t num_patches() const { return grid_h * grid_w; }
    std::size_t visible_count() const {
        std::size_t n = 0;
        for (auto v : visible) n += v != 0;
        return n;
    }

    // Marks exactly the cells set in `mask` (N flags) as visible.
    void set_visibility(std::span<const std::uint8_t> mask) {
        detail::require(mask.size() == visible.size(), "TokenSequence: mask size != number of patches");
        visible.assign(mask.begin(), mask.end());
    }
};

struct AttentionCapture {
    std::size_t layer = 0; // 1-based
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<Grid2D> per_head;         // [CLS] -> patch weights, zero at hidden cells
    std::vector<double> cls_self_weight;  // [CLS] -> [CLS], per head
};

struct ClassScores {
    std::vector<float> logits;
    std::vector<double> probs;
    std::size_t predicted = 0;
};

struct ForwardResult {
    std::vector<std::vector<float>> cls_per_layer; // post-block [CLS], layer 1..L
    AttentionCapture capture;
};

// ---------------------------------------------------------------------------
// Weight (de)serialisation

namespace detail {

inline std::string shape_str(const std::vector<std::size_t>& s) { return "[" + join_shape(s) + "]"; }

inline std::size_t config_uint(const TensorStore& store, const std::string& key, std::size_t fallback) {
    const std::string* v = store.config(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        auto n = std::stoull(*v, &used);
        if (used != v->size()) throw std::invalid_argument(key);
        return n;
    } catch (const std::exception&) {
        throw LoadError("config '" + key + "': not an unsigned integer: '" + *v + "'");
    }
}

class TensorReader {
public:
    explicit TensorReader(const TensorStore& s) : store_(s) {}

    std::vector<float> take(const std::string& name, const std::vector<std::size_t>& shape) {
        const TensorEntry* t = store_.find(name);
        if (!t) throw LoadError("missing tensor '" + name + "' (expected shape " + shape_str(shape) + ")");
        if (t->shape != shape)
            throw LoadError("tensor '" + name + "': expected shape " + shape_str(shape) + ", got " +
                            shape_str(t->shape));
        for (float f : t->data)
            if (!std::isfinite(f)) throw LoadError("tensor '" + name + "': contains non-finite values");
        used_.push_back(name);
        return t->data;
    }

    Matrix take_matrix(const std::string& name, std::size_t rows, std::size_t cols,
                       const std::vector<std::size_t>& shape) {
        return Matrix(rows, cols, take(name, shape));
    }

    void reject_unused() const {
        for (const auto& t : store_.tensors())
            if (std::find(used_.begin(), used_.end(), t.name) == used_.end())
                throw LoadError("unknown tensor '" + t.name + "' in container");
    }

private:
    const TensorStore& store_;
    std::vector<std::string> used_;
};

inline std::string block_prefix(std::size_t i) { return "blocks." + std::to_string(i) + "."; }

} // namespace detail

inline ModelConfig config_from_store(const TensorStore& store) {
    ModelConfig c;
    c.patch_size = detail::config_uint(store, "patch_size", c.patch_size);
    c.embed_dim = detail::config_uint(store, "embed_dim", c.embed_dim);
    c.num_heads = detail::config_uint(store, "num_heads", c.num_heads);
    c.num_layers = detail::config_uint(store, "num_layers", c.num_layers);
    c.mlp_ratio = detail::config_uint(store, "mlp_ratio", c.mlp_ratio);
    c.num_classes = detail::config_uint(store, "num_classes", c.num_classes);
    c.pos_grid_h = detail::config_uint(store, "pos_grid_h", c.pos_grid_h);
    c.pos_grid_w = detail::config_uint(store, "pos_grid_w", c.pos_grid_w);
    if (const std::string* eps = store.config("ln_eps")) {
        try {
            c.ln_eps = std::stod(*eps);
        } catch (const std::exception&) {
            throw LoadError("config 'ln_eps': not a number: '" + *eps + "'");
        }
    }
    try {
        c.validate();
    } catch (const ContractViolation& e) {
        throw LoadError(e.what());
    }
    return c;
}

// Validates every tensor against the shapes implied by the stored config.
inline WeightContainer weights_from_store(const TensorStore& store) {
    WeightContainer w;
    w.config = config_from_store(store);
    const ModelConfig& c = w.config;
    const std::size_t D = c.embed_dim, n = c.patch_size, M = c.mlp_dim();
    const std::size_t P = c.pos_grid_h * c.pos_grid_w;
    detail::TensorReader rd(store);
    auto take = [&](const std::string& name, const std::vector<std::size_t>& shape) { return rd.take(name, shape); };
    auto take_m = [&](const std::string& name, std::size_t r, std::size_t cols, const std::vector<std::size_t>& shape) {
        return rd.take_matrix(name, r, cols, shape);
    };

    w.patch_proj = take_m("patch_embed.proj.weight", D, 3 * n * n, {D, 3, n, n});
    w.patch_bias = take("patch_embed.proj.bias", {D});
    w.cls_token = take("cls_token", {1, 1, D});
    w.pos_embed = take_m("pos_embed", P + 1, D, {1, P + 1, D});
    for (std::size_t i = 0; i < c.num_layers; ++i) {
        const std::string p = detail::block_prefix(i);
        BlockWeights b;
        b.norm1_w = take(p + "norm1.weight", {D});
        b.norm1_b = take(p + "norm1.bias", {D});
        b.qkv = take_m(p + "attn.qkv.weight", 3 * D, D, {3 * D, D});
        b.qkv_b = take(p + "attn.qkv.bias", {3 * D});
        b.proj = take_m(p + "attn.proj.weight", D, D, {D, D});
        b.proj_b = take(p + "attn.proj.bias", {D});
        b.norm2_w = take(p + "norm2.weight", {D});
        b.norm2_b = take(p + "norm2.bias", {D});
        b.fc1 = take_m(p + "mlp.fc1.weight", M, D, {M, D});
        b.fc1_b = take(p + "mlp.fc1.bias", {M});
        b.fc2 = take_m(p + "mlp.fc2.weight", D, M, {D, M});
        b.fc2_b = take(p + "mlp.fc2.bias", {D});
        w.blocks.push_back(std::move(b));
    }
    w.norm_w = take("norm.weight", {D});
    w.norm_b = take("norm.bias", {D});
    w.head = take_m("head.linear.weight", c.num_classes, kReadoutLayers * D, {c.num_classes, kReadoutLayers * D});
    w.head_b = take("head.linear.bias", {c.num_classes});
    rd.reject_unused();
    return w;
}

inline TensorStore weights_to_store(const WeightContainer& w) {
    const ModelConfig& c = w.config;
    const std::size_t D = c.embed_dim, n = c.patch_size, M = c.mlp_dim();
    const std::size_t P = c.pos_grid_h * c.pos_grid_w;
    TensorStore s;
    s.set_config("patch_size", std::to_string(c.patch_size));
    s.set_config("embed_dim", std::to_string(c.embed_dim));
    s.set_config("num_heads", std::to_string(c.num_heads));
    s.set_config("num_layers", std::to_string(c.num_layers));
    s.set_config("mlp_ratio", std::to_string(c.mlp_ratio));
    s.set_config("num_classes", std::to_string(c.num_classes));
    s.set_config("pos_grid_h", std::to_string(c.pos_grid_h));
    s.set_config("pos_grid_w", std::to_string(c.pos_grid_w));
    char eps[32];
    std::snprintf(eps, sizeof eps, "%.9g", c.ln_eps);
    s.set_config("ln_eps", eps);

    s.add("patch_embed.proj.weight", {D, 3, n, n}, w.patch_proj.data);
    s.add("patch_embed.proj.bias", {D}, w.patch_bias);
    s.add("cls_token", {1, 1, D}, w.cls_token);
    s.add("pos_embed", {1, P + 1, D}, w.pos_embed.data);
    for (std::size_t i = 0; i < w.blocks.size(); ++i) {
        const std::string p = detail::block_prefix(i);
        const BlockWeights& b = w.blocks[i];
        s.add(p + "norm1.weight", {D}, b.norm1_w);
        s.add(p + "norm1.bias", {D}, b.norm1_b);
        s.add(p + "attn.qkv.weight", {3 * D, D}, b.qkv.data);
        s.add(p + "attn.qkv.bias", {3 * D}, b.qkv_b);
        s.add(p + "attn.proj.weight", {D, D}, b.proj.data);
        s.add(p + "attn.proj.bias", {D}, b.proj_b);
        s.add(p + "norm2.weight", {D}, b.norm2_w);
        s.add(p + "norm2.bias", {D}, b.norm2_b);
        s.add(p + "mlp.fc1.weight", {M, D}, b.fc1.data);
        s.add(p + "mlp.fc1.bias", {M}, b.fc1_b);
        s.add(p + "mlp.fc2.weight", {D, M}, b.fc2.data);
        s.add(p + "mlp.fc2.bias", {D}, b.fc2_b);
    }
    s.add("norm.weight", {D}, w.norm_w);
    s.add("norm.bias", {D}, w.norm_b);
    s.add("head.linear.weight", {c.num_classes, kReadoutLayers * D}, w.head.data);
    s.add("head.linear.bias", {c.num_classes}, w.head_b);
    return s;
}

inline WeightContainer load_weights(const std::string& manifest_path, const std::string& blob_path) {
    return weights_from_store(load_container(manifest_path, blob_path));
}

inline void save_weights(const WeightContainer& w, const std::string& manifest_path, const std::string& blob_path) {
    save_container(weights_to_store(w), manifest_path, blob_path);
}

struct RandomWeightOptions {
    bool zero_pos_embed = false;
    float weight_scale = 1.0f; // multiplies the 1/sqrt(fan_in) uniform bound
};

// Deterministic random weights for tests, demos and smoke runs.
inline WeightContainer make_random_weights(const ModelConfig& cfg, std::uint64_t seed,
                                           const RandomWeightOptions& opt = {}) {
    cfg.validate();
    SplitMix64 rng(seed);
    const std::size_t D = cfg.embed_dim, M = cfg.mlp_dim();
    auto vec = [&](std::size_t n, double lo, double hi) {
        std::vector<float> v(n);
        for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
        return v;
    };
    auto mat = [&](std::size_t r, std::size_t c) {
        const double a = opt.weight_scale / std::sqrt(static_cast<double>(c));
        return Matrix(r, c, vec(r * c, -a, a));
    };
    WeightContainer w;
    w.config = cfg;
    w.patch_proj = mat(D, cfg.patch_dim());
    w.patch_bias = vec(D, -0.1, 0.1);
    w.cls_token = vec(D, -1.0, 1.0);
    const std::size_t P = cfg.pos_grid_h * cfg.pos_grid_w + 1;
    w.pos_embed = opt.zero_pos_embed ? Matrix(P, D) : Matrix(P, D, vec(P * D, -0.5, 0.5));
    for (std::size_t i = 0; i < cfg.num_layers; ++i) {
        BlockWeights b;
        b.norm1_w = vec(D, 0.8, 1.2);
        b.norm1_b = vec(D, -0.1, 0.1);
        b.qkv = mat(3 * D, D);
        b.qkv_b = vec(3 * D, -0.1, 0.1);
        b.proj = mat(D, D);
        b.proj_b = vec(D, -0.1, 0.1);
        b.norm2_w = vec(D, 0.8, 1.2);
        b.norm2_b = vec(D, -0.1, 0.1);
        b.fc1 = mat(M, D);
        b.fc1_b = vec(M, -0.1, 0.1);
        b.fc2 = mat(D, M);
        b.fc2_b = vec(D, -0.1, 0.1);
        w.blocks.push_back(std::move(b));
    }
    w.norm_w = vec(D, 0.8, 1.2);
    w.norm_b = vec(D, -0.1, 0.1);
    w.head = mat(cfg.num_classes, kReadoutLayers * D);
    w.head_b = vec(cfg.num_classes, -0.1, 0.1);
    return w;
}

// ---------------------------------------------------------------------------
// Forward pass

// Positional rows for a patch grid of grid_h x grid_w; the stored table is
// bilinearly resampled per channel when the grid differs from its native one.
inline Matrix positional_rows(const WeightContainer& w, std::size_t grid_h, std::size_t grid_w) {
    const ModelConfig& c = w.config;
    const std::size_t D = c.embed_dim;
    Matrix pos(grid_h * grid_w + 1, D);
    std::copy_n(w.pos_embed.row(0).begin(), D, pos.row(0).begin());
    if (grid_h == c.pos_grid_h && grid_w == c.pos_grid_w) {
        std::copy(w.pos_embed.data.begin() + static_cast<std::ptrdiff_t>(D), w.pos_embed.data.end(),
                  pos.data.begin() + static_cast<std::ptrdiff_t>(D));
        return pos;
    }
    Grid2D plane(c.pos_grid_h, c.pos_grid_w);
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t i = 0; i < plane.size(); ++i) plane.values[i] = w.pos_embed(i + 1, d);
        Grid2D r = bilinear_resize(plane, grid_h, grid_w);
        for (std::size_t i = 0; i < r.size(); ++i) pos(i + 1, d) = r.values[i];
    }
    return pos;
}

inline TokenSequence patchify_embed(const ImageTensor& img, const WeightContainer& w) {
    const ModelConfig& c = w.config;
    const std::size_t n = c.patch_size, D = c.embed_dim;
    if (img.height == 0 || img.width == 0 || img.height % n != 0 || img.width % n != 0)
        throw ContractViolation("patchify_embed: image " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + " not divisible by patch size " + std::to_string(n));
    TokenSequence seq;
    seq.grid_h = img.height / n;
    seq.grid_w = img.width / n;
    const std::size_t N = seq.grid_h * seq.grid_w;
    seq.visible.assign(N, 1);

    Matrix patches(N, c.patch_dim());
    for (std::size_t py = 0; py < seq.grid_h; ++py)
        for (std::size_t px = 0; px < seq.grid_w; ++px) {
            auto row = patches.row(py * seq.grid_w + px);
            for (std::size_t ch = 0; ch < 3; ++ch)
                for (std::size_t ky = 0; ky < n; ++ky)
                    for (std::size_t kx = 0; kx < n; ++kx)
                        row[ch * n * n + ky * n + kx] = img.at(py * n + ky, px * n + kx, ch);
        }
    Matrix emb = linear(patches, w.patch_proj, w.patch_bias);
    Matrix pos = positional_rows(w, seq.grid_h, seq.grid_w);

    seq.tokens = Matrix(N + 1, D);
    for (std::size_t d = 0; d < D; ++d) seq.tokens(0, d) = w.cls_token[d] + pos(0, d);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t d = 0; d < D; ++d) seq.tokens(i + 1, d) = emb(i, d) + pos(i + 1, d);
    return seq;
}

namespace detail {

// Row indices of the active tokens: [CLS] followed by visible patches.
inline std::vector<std::size_t> active_rows(const TokenSequence& seq) {
    std::vector<std::size_t> rows{0};
    for (std::size_t i = 0; i < seq.visible.size(); ++i)
        if (seq.visible[i]) rows.push_back(i + 1);
    return rows;
}

inline Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(m.row(rows[i]).begin(), m.cols, out.row(i).begin());
    return out;
}

// One pre-norm block over the compact active-token matrix x. When
// `cls_attention` is non-null it receives, per head, the [CLS] query row
// of the attention matrix (length = active tokens).
inline Matrix run_block(const Matrix& x, const BlockWeights& b, const ModelConfig& c,
                        std::vector<std::vector<double>>* cls_attention) {
    const std::size_t A = x.rows, D = c.embed_dim, H = c.num_heads, Dh = c.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(Dh));

    Matrix qkv = linear(layer_norm_rows(x, b.norm1_w, b.norm1_b, c.ln_eps), b.qkv, b.qkv_b);
    Matrix mixed(A, D);
    std::vector<double> scores(A);
    if (cls_attention) cls_attention->assign(H, {});
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t qo = h * Dh, ko = D + h * Dh, vo = 2 * D + h * Dh;
        for (std::size_t i = 0; i < A; ++i) {
            auto q = qkv.row(i).subspan(qo, Dh);
            for (std::size_t j = 0; j < A; ++j) scores[j] = dot(q, qkv.row(j).subspan(ko, Dh)) * scale;
            std::vector<double> p = softmax(scores);
            for (std::size_t d = 0; d < Dh; ++d) {
                double acc = 0.0;
                for (std::size_t j = 0; j < A; ++j) acc += p[j] * qkv(j, vo + d);
                mixed(i, qo + d) = static_cast<float>(acc);
            }
            if (i == 0 && cls_attention) (*cls_attention)[h] = std::move(p);
        }
    }
    Matrix attn = linear(mixed, b.proj, b.proj_b);
    Matrix y = x;
    for (std::size_t k = 0; k < y.data.size(); ++k) y.data[k] += attn.data[k];

    Matrix hidden = linear(layer_norm_rows(y, b.norm2_w, b.norm2_b, c.ln_eps), b.fc1, b.fc1_b);
    for (float& v : hidden.data) v = gelu(v);
    Matrix mlp = linear(hidden, b.fc2, b.fc2_b);
    for (std::size_t k = 0; k < y.data.size(); ++k) y.data[k] += mlp.data[k];
    return y;
}

inline AttentionCapture make_capture(std::size_t layer, const TokenSequence& seq,
                                     const std::vector<std::size_t>& rows,
                                     const std::vector<std::vector<double>>& cls_attention) {
    AttentionCapture cap;
    cap.layer = layer;
    cap.grid_h = seq.grid_h;
    cap.grid_w = seq.grid_w;
    for (const auto& p : cls_attention) {
        Grid2D g(seq.grid_h, seq.grid_w);
        for (std::size_t j = 1; j < rows.size(); ++j) g.values[rows[j] - 1] = static_cast<float>(p[j]);
        cap.per_head.push_back(std::move(g));
        cap.cls_self_weight.push_back(p[0]);
    }
    return cap;
}

inline void check_block_shapes(const BlockWeights& b, const ModelConfig& c) {
    const std::size_t D = c.embed_dim, M = c.mlp_dim();
    require(b.qkv.rows == 3 * D && b.qkv.cols == D && b.proj.rows == D && b.proj.cols == D &&
                b.fc1.rows == M && b.fc1.cols == D && b.fc2.rows == D && b.fc2.cols == M,
            "self_attention_layer: block weight shapes do not match config");
}

} // namespace detail

// Single layer over a token sequence. Hidden rows are returned unchanged.
inline std::pair<TokenSequence, std::optional<AttentionCapture>>
self_attention_layer(const TokenSequence& seq, const BlockWeights& block, const ModelConfig& cfg, bool capture,
                     std::size_t layer_index = 1) {
    detail::check_block_shapes(block, cfg);
    detail::require(seq.tokens.cols == cfg.embed_dim, "self_attention_layer: token width != embed_dim");
    const auto rows = detail::active_rows(seq);
    std::vector<std::vector<double>> cls_attention;
    Matrix y = detail::run_block(detail::gather_rows(seq.tokens, rows), block, cfg, capture ? &cls_attention : nullptr);
    TokenSequence out = seq;
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(y.row(i).begin(), y.cols, out.tokens.row(rows[i]).begin());
    std::optional<AttentionCapture> cap;
    if (capture) cap = detail::make_capture(layer_index, seq, rows, cls_attention);
    return {std::move(out), std::move(cap)};
}

// Runs all layers on the active token set. capture_layer is 1-based.
inline ForwardResult forward(const TokenSequence& seq, const WeightContainer& w, std::size_t capture_layer) {
    const ModelConfig& c = w.config;
    if (capture_layer < 1 || capture_layer > c.num_layers)
        throw ContractViolation("forward: capture_layer " + std::to_string(capture_layer) + " outside [1, " +
                                std::to_string(c.num_layers) + "]");
    detail::require(w.blocks.size() == c.num_layers, "forward: block count != num_layers");
    detail::require(seq.tokens.cols == c.embed_dim, "forward: token width != embed_dim");
    const auto rows = detail::active_rows(seq);
    Matrix x = detail::gather_rows(seq.tokens, rows);
    ForwardResult res;
    for (std::size_t l = 1; l <= c.num_layers; ++l) {
        std::vector<std::vector<double>> cls_attention;
        const bool cap = l == capture_layer;
        x = detail::run_block(x, w.blocks[l - 1], c, cap ? &cls_attention : nullptr);
        if (cap) res.capture = detail::make_capture(l, seq, rows, cls_attention);
        res.cls_per_layer.emplace_back(x.row(0).begin(), x.row(0).end());
    }
    return res;
}

inline std::size_t argmax_lowest(std::span<const float> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// Final norm on each of the last four [CLS] vectors, concatenated
// earliest-first, then the linear head.
inline ClassScores classify(const std::vector<std::vector<float>>& cls_per_layer, const WeightContainer& w) {
    const ModelConfig& c = w.config;
    if (cls_per_layer.size() < kReadoutLayers)
        throw ContractViolation("classify: need at least " + std::to_string(kReadoutLayers) +
                                " layers of [CLS] vectors, got " + std::to_string(cls_per_layer.size()));
    std::vector<float> feat;
    feat.reserve(kReadoutLayers * c.embed_dim);
    for (std::size_t l = cls_per_layer.size() - kReadoutLayers; l < cls_per_layer.size(); ++l) {
        detail::require(cls_per_layer[l].size() == c.embed_dim, "classify: [CLS] width != embed_dim");
        auto n = layer_norm(cls_per_layer[l], w.norm_w, w.norm_b, c.ln_eps);
        feat.insert(feat.end(), n.begin(), n.end());
    }
    ClassScores s;
    s.logits.resize(c.num_classes);
    std::vector<double> z(c.num_classes);
    for (std::size_t k = 0; k < c.num_classes; ++k) {
        z[k] = detail::dot(feat, w.head.row(k)) + w.head_b[k];
        s.logits[k] = static_cast<float>(z[k]);
    }
    std::vector<double> zf(s.logits.begin(), s.logits.end());
    s.probs = softmax(zf);
    s.predicted = argmax_lowest(s.logits);
    return s;
}

// Convenience: embed, apply a visibility mask (empty = all visible), forward, classify.
inline std::pair<ClassScores, AttentionCapture> evaluate_tokens(const ImageTensor& img, const WeightContainer& w,
                                                                std::span<const std::uint8_t> mask,
                                                                std::size_t capture_layer) {
    TokenSequence seq = patchify_embed(img, w);
    if (!mask.empty()) seq.set_visibility(mask);
    ForwardResult fr = forward(seq, w, capture_layer);
    return {classify(fr.cls_per_layer, w), std::move(fr.capture)};
}

} // namespace saccade
