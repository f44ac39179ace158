// Deterministic synthetic image corpus for desk-scale experiments: smooth
// gradient backgrounds with anti-aliased geometric shapes and sinusoidal
// textures. Edges are analytic (smoothstep on signed distance), so the
// images carry the sharp structure super-resolution models feed on.
//
// Usage: gen_corpus OUT_DIR [--train N] [--heldout M] [--size S] [--seed K]

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "scet/image.hpp"
#include "scet/png_io.hpp"
#include "synth.hpp"

namespace {

void emit(const std::string& dir, const char* prefix, int count, int size, std::uint64_t seed0) {
    std::filesystem::create_directories(dir);
    for (int i = 0; i < count; ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%02d.png", prefix, i);
        const std::string path = (std::filesystem::path(dir) / name).string();
        scet::save_png(scet::to_u8(synth::make_image(size, seed0 + static_cast<std::uint64_t>(i))), path);
    }
    std::printf("%d images -> %s\n", count, dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gen_corpus: deterministic synthetic SR corpus"};
    std::string out_dir;
    int train_n = 25, heldout_n = 5, size = 128;
    std::uint64_t seed = 1000;
    app.add_option("out_dir", out_dir, "output directory")->required();
    app.add_option("--train", train_n, "training image count");
    app.add_option("--heldout", heldout_n, "held-out image count");
    app.add_option("--size", size, "square image extent");
    app.add_option("--seed", seed, "base RNG seed");
    CLI11_PARSE(app, argc, argv);

    emit(out_dir + "/train", "train", train_n, size, seed);
    emit(out_dir + "/heldout", "heldout", heldout_n, size, seed + 100000);
    return 0;
}
