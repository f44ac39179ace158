#include "scet/image.hpp"

#include <algorithm>
#include <cmath>

namespace scet {

ImageF to_float(const ImageU8& img) {
    ImageF out(img.height, img.width, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] / 255.0;
    return out;
}

ImageU8 to_u8(const ImageF& img) {
    if (img.channels != 3) throw ImageError("to_u8: expected 3 channels, got " + std::to_string(img.channels));
    ImageU8 out(img.height, img.width);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        double v = std::clamp(img.data[i], 0.0, 1.0) * 255.0;
        out.data[i] = static_cast<std::uint8_t>(std::lround(v));
    }
    return out;
}

ImageF rgb_to_ycbcr_y(const ImageF& img) {
    if (img.channels != 3)
        throw ImageError("rgb_to_ycbcr_y: expected 3 channels, got " + std::to_string(img.channels));
    ImageF out(img.height, img.width, 1);
    for (std::size_t p = 0; p < out.data.size(); ++p) {
        const double r = img.data[3 * p], g = img.data[3 * p + 1], b = img.data[3 * p + 2];
        out.data[p] = (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
    }
    return out;
}

namespace {

// Keys cubic, a = -0.5.
double cubic(double x) {
    x = std::abs(x);
    if (x < 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
    if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
    return 0.0;
}

struct TapSet {
    std::vector<int> index;       // clamped source indices, taps-per-output consecutive
    std::vector<double> weight;   // normalized weights
    int taps = 0;
};

TapSet make_taps(int in_len, int out_len) {
    const double scale = static_cast<double>(out_len) / in_len;
    // On downscale, widen the kernel by 1/scale (antialias).
    const double kscale = scale < 1.0 ? scale : 1.0;
    const double support = 4.0 / kscale;  // full kernel width in source pixels
    const int taps = static_cast<int>(std::ceil(support)) + 2;

    TapSet t;
    t.taps = taps;
    t.index.resize(static_cast<std::size_t>(out_len) * taps);
    t.weight.resize(static_cast<std::size_t>(out_len) * taps);
    for (int i = 0; i < out_len; ++i) {
        const double u = (i + 0.5) / scale - 0.5;  // source coordinate
        const int left = static_cast<int>(std::floor(u - support / 2.0)) + 1;
        double sum = 0.0;
        for (int k = 0; k < taps; ++k) {
            const double w = kscale * cubic(kscale * (u - (left + k)));
            t.weight[static_cast<std::size_t>(i) * taps + k] = w;
            t.index[static_cast<std::size_t>(i) * taps + k] = std::clamp(left + k, 0, in_len - 1);
            sum += w;
        }
        for (int k = 0; k < taps; ++k) t.weight[static_cast<std::size_t>(i) * taps + k] /= sum;
    }
    return t;
}

}  // namespace

ImageF bicubic_resize(const ImageF& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ImageError("bicubic_resize: output extents must be >= 1");
    const int c = img.channels;
    const TapSet tx = make_taps(img.width, out_w);
    const TapSet ty = make_taps(img.height, out_h);

    // Horizontal pass, then vertical.
    ImageF mid(img.height, out_w, c);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < out_w; ++x) {
            const std::size_t base = static_cast<std::size_t>(x) * tx.taps;
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < tx.taps; ++k)
                    acc += tx.weight[base + k] * img.at(y, tx.index[base + k], ch);
                mid.at(y, x, ch) = acc;
            }
        }
    ImageF out(out_h, out_w, c);
    for (int y = 0; y < out_h; ++y) {
        const std::size_t base = static_cast<std::size_t>(y) * ty.taps;
        for (int x = 0; x < out_w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < ty.taps; ++k)
                    acc += ty.weight[base + k] * mid.at(ty.index[base + k], x, ch);
                out.at(y, x, ch) = std::clamp(acc, 0.0, 1.0);
            }
    }
    return out;
}

namespace {

// Y plane in 8-bit range [16,235] with the border shaved off.
std::vector<double> shaved_y8(const ImageU8& img, int shave, int& h, int& w) {
    ImageF y = rgb_to_ycbcr_y(to_float(img));
    h = img.height - 2 * shave;
    w = img.width - 2 * shave;
    std::vector<double> out(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            out[static_cast<std::size_t>(i) * w + j] = 255.0 * y.at(i + shave, j + shave, 0);
    return out;
}

void check_pair(const ImageU8& ref, const ImageU8& test, int shave, const char* who) {
    if (ref.height != test.height || ref.width != test.width)
        throw ImageError(std::string(who) + ": extent mismatch " + std::to_string(ref.width) + "x" +
                         std::to_string(ref.height) + " vs " + std::to_string(test.width) + "x" +
                         std::to_string(test.height));
    if (shave < 0) throw ImageError(std::string(who) + ": shave must be >= 0");
}

}  // namespace

double psnr_y(const ImageU8& ref, const ImageU8& test, int shave) {
    check_pair(ref, test, shave, "psnr_y");
    int h = 0, w = 0;
    std::vector<double> a = shaved_y8(ref, shave, h, w);
    std::vector<double> b = shaved_y8(test, shave, h, w);
    if (h <= 0 || w <= 0) throw ImageError("psnr_y: nothing left after shaving " + std::to_string(shave));
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim_y(const ImageU8& ref, const ImageU8& test, int shave) {
    check_pair(ref, test, shave, "ssim_y");
    int h = 0, w = 0;
    std::vector<double> a = shaved_y8(ref, shave, h, w);
    std::vector<double> b = shaved_y8(test, shave, h, w);
    constexpr int kWin = 11;
    if (h < kWin || w < kWin)
        throw ImageError("ssim_y: shaved plane " + std::to_string(w) + "x" + std::to_string(h) +
                         " smaller than the 11x11 window");

    double g[kWin];
    double gsum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        gsum += g[i];
    }
    for (double& v : g) v /= gsum;

    constexpr double kL = 255.0;
    constexpr double c1 = (0.01 * kL) * (0.01 * kL);
    constexpr double c2 = (0.03 * kL) * (0.03 * kL);

    double total = 0.0;
    std::int64_t count = 0;
    for (int y = 0; y + kWin <= h; ++y)
        for (int x = 0; x + kWin <= w; ++x) {
            double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double wgt = g[i] * g[j];
                    const double pa = a[static_cast<std::size_t>(y + i) * w + (x + j)];
                    const double pb = b[static_cast<std::size_t>(y + i) * w + (x + j)];
                    ma += wgt * pa;
                    mb += wgt * pb;
                    saa += wgt * pa * pa;
                    sbb += wgt * pb * pb;
                    sab += wgt * pa * pb;
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

}  // namespace scet
