#pragma once

// Synthetic assets: a random-weight model container and a small PPM
// dataset of colored disks on gray backgrounds. Used by tests, the demo
// and smoke runs of the CLI.

#include <cstdint>
#include <filesystem>
#include <string>

#include "saccade/image.hpp"
#include "saccade/rng.hpp"
#include "saccade/vit.hpp"

namespace saccade {

struct DiskStimulus {
    RgbImage image;
    double cy = 0.0, cx = 0.0, radius = 0.0;
};

// Disk of `color` on a uniform `gray` background.
inline DiskStimulus disk_on_gray(std::size_t h, std::size_t w, double cy, double cx, double radius,
                                 std::array<float, 3> color, float gray = 0.5f) {
    DiskStimulus s{RgbImage(h, w, gray), cy, cx, radius};
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
            if (dy * dy + dx * dx <= radius * radius)
                for (std::size_t c = 0; c < 3; ++c) s.image.at(y, x, c) = color[c];
        }
    return s;
}

inline DiskStimulus random_disk_stimulus(std::size_t h, std::size_t w, SplitMix64& rng) {
    const double radius = rng.uniform(0.08, 0.14) * static_cast<double>(std::min(h, w));
    const double cy = rng.uniform(radius + 4, static_cast<double>(h) - radius - 4);
    const double cx = rng.uniform(radius + 4, static_cast<double>(w) - radius - 4);
    std::array<float, 3> color{};
    for (auto& c : color) c = rng.uniform() < 0.5 ? static_cast<float>(rng.uniform(0.0, 0.15))
                                                  : static_cast<float>(rng.uniform(0.85, 1.0));
    return disk_on_gray(h, w, cy, cx, radius, color, static_cast<float>(rng.uniform(0.4, 0.6)));
}

struct ToyAssets {
    std::string manifest;
    std::string blob;
    std::string dataset;
};

// <dir>/model.manifest, <dir>/model.bin, <dir>/dataset/class_<i>/img_<j>.ppm
inline ToyAssets write_toy_assets(const std::filesystem::path& dir, std::size_t classes, std::size_t per_class,
                                  std::uint64_t seed, const ModelConfig& cfg = ModelConfig::toy()) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    ToyAssets a{(dir / "model.manifest").string(), (dir / "model.bin").string(), (dir / "dataset").string()};
    save_weights(make_random_weights(cfg, seed), a.manifest, a.blob);
    SplitMix64 rng(derive_seed(seed, "dataset"));
    for (std::size_t c = 0; c < classes; ++c) {
        const fs::path cdir = fs::path(a.dataset) / ("class_" + std::to_string(c));
        fs::create_directories(cdir);
        for (std::size_t j = 0; j < per_class; ++j) {
            const std::size_t h = 256 + 32 * (j % 2), w = 256 + 64 * ((j + c) % 3);
            write_ppm(random_disk_stimulus(h, w, rng).image, (cdir / ("img_" + std::to_string(j) + ".ppm")).string());
        }
    }
    return a;
}

} // namespace saccade
