#pragma once

// RGB images, binary PPM/PGM codecs and the resize / center-crop /
// normalize preprocessing chain.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "saccade/errors.hpp"
#include "saccade/tensorops.hpp"

namespace saccade {

// Interleaved HWC pixels. RgbImage holds display-range values in [0, 1];
// ImageTensor holds channel-standardized values ready for the model.
template <class Tag>
struct HwcImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;

    HwcImage() = default;
    HwcImage(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), data(h * w * 3, fill) {}

    float& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * 3 + c]; }
    float at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * 3 + c]; }

    bool operator==(const HwcImage&) const = default;
};

struct RgbTag {};
struct NormalizedTag {};
using RgbImage = HwcImage<RgbTag>;
using ImageTensor = HwcImage<NormalizedTag>;

struct ChannelStats {
    std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> std{0.229f, 0.224f, 0.225f};

    static ChannelStats identity() { return {{0.0f, 0.0f, 0.0f}, {1.0f, 1.0f, 1.0f}}; }
};

struct PreprocessOptions {
    std::size_t resize_short = 256;
    std::size_t crop = 224;
    ChannelStats stats{};
};

template <class Tag>
Grid2D channel(const HwcImage<Tag>& img, std::size_t c) {
    Grid2D g(img.height, img.width);
    for (std::size_t i = 0; i < img.height * img.width; ++i) g.values[i] = img.data[i * 3 + c];
    return g;
}

template <class Tag>
HwcImage<Tag> resize(const HwcImage<Tag>& img, std::size_t out_h, std::size_t out_w) {
    if (out_h == img.height && out_w == img.width) return img;
    HwcImage<Tag> out(out_h, out_w);
    for (std::size_t c = 0; c < 3; ++c) {
        Grid2D r = bilinear_resize(channel(img, c), out_h, out_w);
        for (std::size_t i = 0; i < out_h * out_w; ++i) out.data[i * 3 + c] = r.values[i];
    }
    return out;
}

template <class Tag>
HwcImage<Tag> crop(const HwcImage<Tag>& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
    detail::require(top + h <= img.height && left + w <= img.width, "crop: window outside image");
    HwcImage<Tag> out(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
    return out;
}

// Size after scaling the short side to resize_short; the long side is
// rounded to nearest.
inline std::pair<std::size_t, std::size_t> resized_size(std::size_t h, std::size_t w, const PreprocessOptions& opt) {
    if (h == 0 || w == 0) throw ContractViolation("preprocess: empty image");
    if (std::min(h, w) == opt.resize_short) return {h, w};
    const double s = static_cast<double>(opt.resize_short) / static_cast<double>(std::min(h, w));
    if (h <= w) return {opt.resize_short, static_cast<std::size_t>(std::lround(static_cast<double>(w) * s))};
    return {static_cast<std::size_t>(std::lround(static_cast<double>(h) * s)), opt.resize_short};
}

// Resize, then a centered crop x crop window. Offsets round down.
inline RgbImage resize_and_center_crop(const RgbImage& raw, const PreprocessOptions& opt = {}) {
    detail::require(opt.crop <= opt.resize_short, "preprocess: crop larger than resized short side");
    const auto [h, w] = resized_size(raw.height, raw.width, opt);
    RgbImage resized = resize(raw, h, w);
    return crop(resized, (h - opt.crop) / 2, (w - opt.crop) / 2, opt.crop, opt.crop);
}

inline ImageTensor normalize(const RgbImage& img, const ChannelStats& stats) {
    ImageTensor out(img.height, img.width);
    for (std::size_t i = 0; i < img.height * img.width; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            out.data[i * 3 + c] = (img.data[i * 3 + c] - stats.mean[c]) / stats.std[c];
    return out;
}

inline ImageTensor preprocess(const RgbImage& raw, const PreprocessOptions& opt = {}) {
    return normalize(resize_and_center_crop(raw, opt), opt.stats);
}

// ---------------------------------------------------------------------------
// Netpbm codecs (binary P5 / P6, maxval <= 65535)

namespace detail {

inline std::string pnm_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok += c;
    }
    return tok;
}

struct PnmHeader {
    std::string magic;
    std::size_t width = 0, height = 0;
    unsigned maxval = 0;
};

inline PnmHeader read_pnm_header(std::istream& in, const std::string& path) {
    PnmHeader h;
    try {
        h.magic = pnm_token(in);
        h.width = std::stoul(pnm_token(in));
        h.height = std::stoul(pnm_token(in));
        h.maxval = static_cast<unsigned>(std::stoul(pnm_token(in)));
    } catch (const std::exception&) {
        throw IngestionError("malformed netpbm header: " + path);
    }
    if (h.width == 0 || h.height == 0 || h.maxval == 0 || h.maxval > 65535)
        throw IngestionError("unsupported netpbm dimensions or maxval: " + path);
    return h;
}

inline std::vector<float> read_pnm_samples(std::istream& in, std::size_t count, unsigned maxval,
                                           const std::string& path) {
    const std::size_t bps = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(count * bps);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IngestionError("truncated netpbm data: " + path);
    std::vector<float> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned v = bps == 1 ? raw[i] : (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
        out[i] = static_cast<float>(v) / static_cast<float>(maxval);
    }
    return out;
}

inline std::uint8_t to_byte(double v01) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v01, 0.0, 1.0) * 255.0));
}

} // namespace detail

inline RgbImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open image: " + path);
    auto h = detail::read_pnm_header(in, path);
    if (h.magic != "P6") throw IngestionError("not a binary PPM (P6): " + path);
    RgbImage img;
    img.height = h.height;
    img.width = h.width;
    img.data = detail::read_pnm_samples(in, h.width * h.height * 3, h.maxval, path);
    return img;
}

inline void write_ppm(const RgbImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write image: " + path);
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<std::uint8_t> bytes(img.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = detail::to_byte(img.data[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

// Values in [0, 1] (sample / maxval).
inline Grid2D read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open map: " + path);
    auto h = detail::read_pnm_header(in, path);
    if (h.magic != "P5") throw IngestionError("not a binary PGM (P5): " + path);
    return Grid2D(h.height, h.width, detail::read_pnm_samples(in, h.width * h.height, h.maxval, path));
}

// Min maps to 0 and max to 255; a constant grid writes all zeros.
inline void write_pgm(const Grid2D& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write map: " + path);
    out << "P5\n" << g.width << ' ' << g.height << "\n255\n";
    const auto [lo_it, hi_it] = std::minmax_element(g.values.begin(), g.values.end());
    const double lo = g.values.empty() ? 0.0 : *lo_it;
    const double range = g.values.empty() ? 0.0 : *hi_it - lo;
    std::vector<std::uint8_t> bytes(g.values.size(), 0);
    if (range > 0.0)
        for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = detail::to_byte((g.values[i] - lo) / range);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

} // namespace saccade
