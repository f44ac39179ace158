#pragma once

// Image containers, BT.601 studio-swing luma, Matlab-convention bicubic
// resize (Keys a = -0.5, antialiased on downscale), and Y-channel PSNR/SSIM.
// All resize and metric arithmetic runs in double.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace scet {

struct ImageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 8-bit sRGB, row-major, interleaved, always 3 channels.
struct ImageU8 {
    int height = 0, width = 0;
    std::vector<std::uint8_t> data;  // H*W*3

    ImageU8() = default;
    ImageU8(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0) {}
    std::uint8_t& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

// Working-precision image, samples nominally in [0,1].
struct ImageF {
    int height = 0, width = 0, channels = 0;
    std::vector<double> data;  // H*W*C interleaved

    ImageF() = default;
    ImageF(int h, int w, int c)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, 0.0) {}
    double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

ImageF to_float(const ImageU8& img);
ImageU8 to_u8(const ImageF& img);  // clamp to [0,1], round half away from zero

// Y = (16 + 65.481 R + 128.553 G + 24.966 B) / 255 with R,G,B in [0,1].
ImageF rgb_to_ycbcr_y(const ImageF& img);

// Separable Keys cubic (a = -0.5). On downscale the kernel is widened by the
// scale factor (antialiasing). Source coordinates clamp at the edges; output
// samples clamp to [0,1]. Weights are renormalized to sum to 1 per tap set.
ImageF bicubic_resize(const ImageF& img, int out_h, int out_w);

// Both metrics: convert to the Y plane scaled to [16,235], drop a border of
// `shave` pixels, then compare. PSNR is capped at 100 dB when MSE = 0.
double psnr_y(const ImageU8& ref, const ImageU8& test, int shave);

// Mean local SSIM: 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03, L=255,
// valid (fully interior) windows only. The shaved plane must be >= 11x11.
double ssim_y(const ImageU8& ref, const ImageU8& test, int shave);

}  // namespace scet
