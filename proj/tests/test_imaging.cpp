#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "scet/image.hpp"
#include "scet/png_io.hpp"
#include "oracles.hpp"

using namespace scet;
using oracles::fixed_image;
using oracles::oracle_psnr;
using oracles::oracle_resize;
using oracles::oracle_ssim;
using oracles::perturb;


// ---------------------------------------------------------------------------

TEST_CASE("luma formula anchors") {
    ImageF img(1, 3, 3);
    for (int c = 0; c < 3; ++c) {
        img.at(0, 0, c) = 0.0;
        img.at(0, 1, c) = 1.0;
        img.at(0, 2, c) = 0.5;
    }
    const ImageF y = rgb_to_ycbcr_y(img);
    CHECK(y.channels == 1);
    CHECK(y.at(0, 0, 0) == doctest::Approx(16.0 / 255.0).epsilon(1e-12));
    CHECK(y.at(0, 1, 0) == doctest::Approx(235.0 / 255.0).epsilon(1e-12));
    CHECK(y.at(0, 2, 0) == doctest::Approx(0.49216).epsilon(1e-5));
}

TEST_CASE("luma is affine in the pixel") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        double p[3], q[3];
        for (int c = 0; c < 3; ++c) {
            p[c] = u(rng);
            q[c] = u(rng);
        }
        const double alpha = u(rng);
        ImageF img(1, 3, 3);
        for (int c = 0; c < 3; ++c) {
            img.at(0, 0, c) = p[c];
            img.at(0, 1, c) = q[c];
            img.at(0, 2, c) = alpha * p[c] + (1.0 - alpha) * q[c];
        }
        const ImageF y = rgb_to_ycbcr_y(img);
        CHECK(std::abs(y.at(0, 2, 0) - (alpha * y.at(0, 0, 0) + (1.0 - alpha) * y.at(0, 1, 0))) <= 1e-9);
    }
}

TEST_CASE("luma rejects non-RGB input") {
    CHECK_THROWS_AS((void)rgb_to_ycbcr_y(ImageF(4, 4, 1)), ImageError);
}

TEST_CASE("bicubic preserves constants") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 8; ++rep) {
        const double v = u(rng);
        ImageF img(13, 9, 3);
        for (double& s : img.data) s = v;
        for (auto [oh, ow] : {std::pair{5, 3}, {13, 9}, {26, 20}, {7, 31}}) {
            const ImageF out = bicubic_resize(img, oh, ow);
            for (double s : out.data) CHECK(std::abs(s - v) <= 1e-12);
        }
    }
}

TEST_CASE("bicubic identity resize") {
    ImageF img = to_float(fixed_image(0));
    const ImageF out = bicubic_resize(img, img.height, img.width);
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(out.data[i] - img.data[i]) <= 1e-6);
}

TEST_CASE("4x4 ramp downscale matches the tap-enumeration oracle") {
    ImageF img(4, 4, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) img.at(y, x, 0) = (4.0 * y + x) / 15.0;
    const ImageF got = bicubic_resize(img, 2, 2);
    const ImageF want = oracle_resize(img, 2, 2);
    for (std::size_t i = 0; i < got.data.size(); ++i) CHECK(std::abs(got.data[i] - want.data[i]) <= 1e-6);
}

TEST_CASE("bicubic matches the oracle on the fixed images") {
    for (int which = 0; which < 3; ++which) {
        const ImageF img = to_float(fixed_image(which));
        for (auto [oh, ow] : {std::pair{32, 32}, {16, 16}, {128, 128}, {96, 48}}) {
            const ImageF got = bicubic_resize(img, oh, ow);
            const ImageF want = oracle_resize(img, oh, ow);
            double err = 0.0;
            for (std::size_t i = 0; i < got.data.size(); ++i) err = std::max(err, std::abs(got.data[i] - want.data[i]));
            CAPTURE(which);
            CAPTURE(oh);
            CAPTURE(ow);
            CHECK(err <= 1e-6);
        }
    }
}

TEST_CASE("psnr anchors") {
    const ImageU8 a = fixed_image(1);
    SUBCASE("identical images hit the 100 dB cap") { CHECK(psnr_y(a, a, 4) == 100.0); }
    SUBCASE("uniform 16-level Y difference") {
        // (dR,dG,dB) = (17,19,21) shifts Y by 15.99988 of 16 levels.
        ImageU8 u(8, 8), v(8, 8);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                u.at(y, x, 0) = 100; u.at(y, x, 1) = 80; u.at(y, x, 2) = 60;
                v.at(y, x, 0) = 117; v.at(y, x, 1) = 99; v.at(y, x, 2) = 81;
            }
        CHECK(psnr_y(u, v, 0) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / 256.0)).epsilon(1e-4));
    }
    SUBCASE("difference confined to the shaved border is invisible") {
        ImageU8 b = a;
        for (int y = 0; y < b.height; ++y)
            for (int x = 0; x < b.width; ++x)
                if (y < 2 || x < 2 || y >= b.height - 2 || x >= b.width - 2)
                    for (int c = 0; c < 3; ++c) b.at(y, x, c) = 0;
        CHECK(psnr_y(a, b, 4) == 100.0);
    }
    SUBCASE("symmetry and monotonicity") {
        const ImageU8 near = perturb(a, 9, 3), far = perturb(a, 9, 12);
        CHECK(psnr_y(a, near, 2) == doctest::Approx(psnr_y(near, a, 2)).epsilon(1e-12));
        CHECK(psnr_y(a, near, 2) > psnr_y(a, far, 2));
    }
    SUBCASE("extent mismatch is rejected") {
        CHECK_THROWS_AS((void)psnr_y(a, ImageU8(32, 32), 0), ImageError);
    }
}

TEST_CASE("ssim anchors") {
    const ImageU8 a = fixed_image(2);
    SUBCASE("self-similarity is exactly 1") { CHECK(std::abs(ssim_y(a, a, 4) - 1.0) <= 1e-9); }
    SUBCASE("symmetry") {
        const ImageU8 b = perturb(a, 5, 10);
        CHECK(std::abs(ssim_y(a, b, 2) - ssim_y(b, a, 2)) <= 1e-9);
    }
    SUBCASE("negation of a mid-contrast texture scores low") {
        ImageU8 neg = a;
        for (auto& v : neg.data) v = static_cast<std::uint8_t>(255 - v);
        CHECK(ssim_y(a, neg, 0) < 0.3);
    }
    SUBCASE("too-small input is rejected") {
        CHECK_THROWS_AS((void)ssim_y(ImageU8(12, 12), ImageU8(12, 12), 1), ImageError);
    }
}

TEST_CASE("psnr and ssim match their oracles on the fixed images") {
    for (int which = 0; which < 3; ++which) {
        const ImageU8 a = fixed_image(which);
        const ImageU8 b = perturb(a, 100 + static_cast<unsigned>(which), 14);
        CAPTURE(which);
        CHECK(std::abs(psnr_y(a, b, 2) - oracle_psnr(a, b, 2)) <= 0.01);
        CHECK(std::abs(ssim_y(a, b, 2) - oracle_ssim(a, b, 2)) <= 1e-3);
    }
}

TEST_CASE("degradation and evaluation compose sanely") {
    const ImageU8 hr8 = fixed_image(0);
    const ImageF hr = to_float(hr8);
    for (int s : {2, 4}) {
        const ImageF lr = bicubic_resize(hr, 64 / s, 64 / s);
        const ImageU8 up = to_u8(bicubic_resize(lr, 64, 64));
        const double p = psnr_y(hr8, up, s);
        CHECK(std::isfinite(p));
        CHECK(p >= 20.0);
    }
}

// ---------------------------------------------------------------- PNG I/O --

namespace {

void write_raw_png(const std::string& path, int h, int w, int bit_depth, int color_type,
                   const std::vector<std::uint8_t>& bytes_per_row_payload) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    REQUIRE(fp != nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = bytes_per_row_payload.size() / static_cast<std::size_t>(h);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(bytes_per_row_payload.data() + static_cast<std::size_t>(y) * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace

TEST_CASE("png round trip and promotions") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "scet_png_test").string();
    fs::create_directories(dir);

    SUBCASE("RGB save/load round trip is bit-identical") {
        const ImageU8 img = fixed_image(1);
        const std::string path = dir + "/rt.png";
        save_png(img, path);
        const ImageU8 back = load_png(path);
        REQUIRE(back.height == img.height);
        REQUIRE(back.width == img.width);
        CHECK(back.data == img.data);
    }
    SUBCASE("grayscale promotes to three identical channels") {
        const std::string path = dir + "/gray.png";
        std::vector<std::uint8_t> rows(16 * 16);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<std::uint8_t>(i);
        write_raw_png(path, 16, 16, 8, PNG_COLOR_TYPE_GRAY, rows);
        const ImageU8 img = load_png(path);
        REQUIRE(img.height == 16);
        REQUIRE(img.width == 16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                CHECK(img.at(y, x, 0) == rows[static_cast<std::size_t>(y) * 16 + x]);
                CHECK(img.at(y, x, 0) == img.at(y, x, 1));
                CHECK(img.at(y, x, 1) == img.at(y, x, 2));
            }
    }
    SUBCASE("RGBA alpha is dropped") {
        const std::string path = dir + "/rgba.png";
        std::vector<std::uint8_t> rows(4 * 4 * 4);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<std::uint8_t>(17 * i % 251);
        write_raw_png(path, 4, 4, 8, PNG_COLOR_TYPE_RGB_ALPHA, rows);
        const ImageU8 img = load_png(path);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                for (int c = 0; c < 3; ++c)
                    CHECK(img.at(y, x, c) == rows[(static_cast<std::size_t>(y) * 4 + x) * 4 + static_cast<std::size_t>(c)]);
    }
    SUBCASE("16-bit depth raises the dedicated error") {
        const std::string path = dir + "/deep.png";
        std::vector<std::uint8_t> rows(4 * 4 * 3 * 2, 0x40);
        write_raw_png(path, 4, 4, 16, PNG_COLOR_TYPE_RGB, rows);
        CHECK_THROWS_AS((void)load_png(path), PngDepthError);
    }
    SUBCASE("malformed file raises the format error") {
        const std::string path = dir + "/junk.png";
        std::ofstream(path, std::ios::binary) << "this is not a portable network graphic";
        CHECK_THROWS_AS((void)load_png(path), PngFormatError);
    }
    SUBCASE("missing file is an error") { CHECK_THROWS_AS((void)load_png(dir + "/nope.png"), PngError); }
    fs::remove_all(dir);
}
