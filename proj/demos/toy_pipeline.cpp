// End-to-end walk through the library on one synthetic image: saliency,
// fixation sequence, per-saccade predictions and certainty.

#include <cstdio>

#include "saccade.hpp"

int main() {
    using namespace saccade;
    const ModelConfig cfg = ModelConfig::toy();
    const WeightContainer w = make_random_weights(cfg, 11);

    SplitMix64 rng(3);
    const RgbImage raw = random_disk_stimulus(240, 300, rng).image;
    const ImageTensor img = preprocess(raw, PreprocessOptions{});

    EvalSettings settings;
    settings.fovea = 3;
    settings.saccades = 6;
    for (auto src : {SaliencySource::attention, SaliencySource::center, SaliencySource::graph_based}) {
        settings.saliency.source = src;
        const SaccadeRecord r = evaluate_image(img, w, settings, "demo", 0);
        std::printf("%s: full prediction %zu (certainty %.3f)\n", to_string(src), r.full_predicted,
                    r.full_certainty);
        for (std::size_t s = 0; s < r.k(); ++s) {
            const auto& st = r.per_saccade[s];
            std::printf("  saccade %zu at (%zu,%zu): %5.1f%% revealed, predicts %zu, certainty %.3f\n", s + 1,
                        st.center.row, st.center.col, 100.0 * st.revealed_fraction, st.predicted, st.certainty);
        }
    }
}
