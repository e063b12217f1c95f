// make_toy_assets <dir> [--classes N] [--per-class N] [--seed S]
// Writes a random-weight toy model and a synthetic disk dataset.

#include <iostream>

#include <CLI11.hpp>

#include "saccade/toy.hpp"

int main(int argc, char** argv) {
    CLI::App app{"write a toy model container and a synthetic PPM dataset"};
    std::string dir;
    std::size_t classes = 4, per_class = 3;
    std::uint64_t seed = 7;
    app.add_option("dir", dir, "output directory")->required();
    app.add_option("--classes", classes, "class directories (<= model classes)");
    app.add_option("--per-class", per_class, "images per class");
    app.add_option("--seed", seed, "weight and image seed");
    CLI11_PARSE(app, argc, argv);
    try {
        const auto a = saccade::write_toy_assets(dir, classes, per_class, seed);
        std::cout << "manifest " << a.manifest << "\nblob " << a.blob << "\ndataset " << a.dataset << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
