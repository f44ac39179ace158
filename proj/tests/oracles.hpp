#pragma once

// Independent brute-force reference implementations shared by the unit and
// acceptance suites, plus the fixed synthetic images they evaluate on.
// Everything here is deliberately written as plain nested loops, separate
// from the library's own code paths.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "scet/image.hpp"
#include "scet/model.hpp"
#include "scet/tensor.hpp"

namespace oracles {

using scet::ImageF;
using scet::ImageU8;
using scet::MDTALayer;
using scet::Tensor;

// ------------------------------------------------------------ MDTA oracle --

struct NaiveImage {
    int n, c, h, w;
    std::vector<double> v;
    NaiveImage(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}
    double& at(int ni, int ci, int y, int x) {
        return v[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
    }
    double at(int ni, int ci, int y, int x) const {
        return v[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
    }
};

inline NaiveImage from_tensor(const Tensor<double>& t) {
    NaiveImage img(t.dim(0), t.dim(1), t.dim(2), t.dim(3));
    for (std::size_t i = 0; i < t.size(); ++i) img.v[i] = t[i];
    return img;
}

inline NaiveImage naive_layer_norm(const NaiveImage& x, const Tensor<double>& gamma, const Tensor<double>& beta,
                                   double eps) {
    NaiveImage out(x.n, x.c, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) {
                double mean = 0.0;
                for (int c = 0; c < x.c; ++c) mean += x.at(n, c, y, xx);
                mean /= x.c;
                double var = 0.0;
                for (int c = 0; c < x.c; ++c) {
                    const double d = x.at(n, c, y, xx) - mean;
                    var += d * d;
                }
                var /= x.c;
                for (int c = 0; c < x.c; ++c)
                    out.at(n, c, y, xx) =
                        gamma[static_cast<std::size_t>(c)] * (x.at(n, c, y, xx) - mean) / std::sqrt(var + eps) +
                        beta[static_cast<std::size_t>(c)];
            }
    return out;
}

inline NaiveImage naive_pconv(const NaiveImage& x, const Tensor<double>& w, const Tensor<double>& b) {
    const int co = w.dim(0), ci = w.dim(1);
    NaiveImage out(x.n, co, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < co; ++o)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) {
                    double acc = b[static_cast<std::size_t>(o)];
                    for (int i = 0; i < ci; ++i) acc += w[static_cast<std::size_t>(o) * ci + i] * x.at(n, i, y, xx);
                    out.at(n, o, y, xx) = acc;
                }
    return out;
}

inline NaiveImage naive_dconv3(const NaiveImage& x, const Tensor<double>& w, const Tensor<double>& b) {
    NaiveImage out(x.n, x.c, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) {
                    double acc = b[static_cast<std::size_t>(c)];
                    for (int dy = 0; dy < 3; ++dy)
                        for (int dx = 0; dx < 3; ++dx) {
                            const int sy = y + dy - 1, sx = xx + dx - 1;
                            if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
                            acc += w[static_cast<std::size_t>(c) * 9 + static_cast<std::size_t>(dy) * 3 + dx] *
                                   x.at(n, c, sy, sx);
                        }
                    out.at(n, c, y, xx) = acc;
                }
    return out;
}

inline NaiveImage naive_mdta(const MDTALayer<double>& layer, const Tensor<double>& xt) {
    const NaiveImage x = from_tensor(xt);
    const NaiveImage normed = naive_layer_norm(x, layer.ln_gamma, layer.ln_beta, layer.eps);
    const NaiveImage q = naive_dconv3(naive_pconv(normed, layer.q_pconv.weight, layer.q_pconv.bias),
                                      layer.q_dconv.weight, layer.q_dconv.bias);
    const NaiveImage k = naive_dconv3(naive_pconv(normed, layer.k_pconv.weight, layer.k_pconv.bias),
                                      layer.k_dconv.weight, layer.k_dconv.bias);
    const NaiveImage v = naive_dconv3(naive_pconv(normed, layer.v_pconv.weight, layer.v_pconv.bias),
                                      layer.v_dconv.weight, layer.v_dconv.bias);

    const int heads = layer.heads, ch = x.c / heads, hw = x.h * x.w;
    NaiveImage mixed(x.n, x.c, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
        for (int h = 0; h < heads; ++h) {
            auto chan = [&](const NaiveImage& img, int i, int p) { return img.at(n, h * ch + i, p / x.w, p % x.w); };
            // logits[i][j] = sum_p k[i][p] q[j][p] / alpha[h]; softmax over j
            std::vector<double> attn(static_cast<std::size_t>(ch) * ch);
            for (int i = 0; i < ch; ++i) {
                for (int j = 0; j < ch; ++j) {
                    double acc = 0.0;
                    for (int p = 0; p < hw; ++p) acc += chan(k, i, p) * chan(q, j, p);
                    attn[static_cast<std::size_t>(i) * ch + j] = acc / layer.alpha[static_cast<std::size_t>(h)];
                }
                double mx = attn[static_cast<std::size_t>(i) * ch];
                for (int j = 1; j < ch; ++j) mx = std::max(mx, attn[static_cast<std::size_t>(i) * ch + j]);
                double z = 0.0;
                for (int j = 0; j < ch; ++j) {
                    attn[static_cast<std::size_t>(i) * ch + j] = std::exp(attn[static_cast<std::size_t>(i) * ch + j] - mx);
                    z += attn[static_cast<std::size_t>(i) * ch + j];
                }
                for (int j = 0; j < ch; ++j) attn[static_cast<std::size_t>(i) * ch + j] /= z;
            }
            // mixed channel j at pixel p = sum_i v[i][p] attn[i][j]
            for (int j = 0; j < ch; ++j)
                for (int p = 0; p < hw; ++p) {
                    double acc = 0.0;
                    for (int i = 0; i < ch; ++i) acc += chan(v, i, p) * attn[static_cast<std::size_t>(i) * ch + j];
                    mixed.at(n, h * ch + j, p / x.w, p % x.w) = acc;
                }
        }
    NaiveImage projected = naive_pconv(mixed, layer.out_pconv.weight, layer.out_pconv.bias);
    for (std::size_t i = 0; i < projected.v.size(); ++i) projected.v[i] += x.v[i];
    return projected;
}

// --------------------------------------------------------- imaging oracles --

inline double keys_cubic(double x) {
    x = std::abs(x);
    if (x < 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
    if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
    return 0.0;
}

// Non-separable brute-force resize: for every output pixel enumerate the full
// 2D tap grid, clamp indices, normalize by the summed 2D weight.
inline ImageF oracle_resize(const ImageF& img, int oh, int ow) {
    const double sy = static_cast<double>(oh) / img.height;
    const double sx = static_cast<double>(ow) / img.width;
    const double ky = sy < 1.0 ? sy : 1.0, kx = sx < 1.0 ? sx : 1.0;
    const double wy_span = 4.0 / ky, wx_span = 4.0 / kx;

    ImageF out(oh, ow, img.channels);
    for (int oyi = 0; oyi < oh; ++oyi)
        for (int oxi = 0; oxi < ow; ++oxi) {
            const double uy = (oyi + 0.5) / sy - 0.5;
            const double ux = (oxi + 0.5) / sx - 0.5;
            const int y0 = static_cast<int>(std::floor(uy - wy_span / 2.0)) + 1;
            const int x0 = static_cast<int>(std::floor(ux - wx_span / 2.0)) + 1;
            const int ny = static_cast<int>(std::ceil(wy_span)) + 2;
            const int nx = static_cast<int>(std::ceil(wx_span)) + 2;
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0, wsum = 0.0;
                for (int iy = y0; iy < y0 + ny; ++iy)
                    for (int ix = x0; ix < x0 + nx; ++ix) {
                        const double w = ky * keys_cubic(ky * (uy - iy)) * kx * keys_cubic(kx * (ux - ix));
                        const int cy = std::clamp(iy, 0, img.height - 1);
                        const int cx = std::clamp(ix, 0, img.width - 1);
                        acc += w * img.at(cy, cx, c);
                        wsum += w;
                    }
                out.at(oyi, oxi, c) = std::clamp(acc / wsum, 0.0, 1.0);
            }
        }
    return out;
}

inline std::vector<double> oracle_y8(const ImageU8& img, int shave, int& h, int& w) {
    h = img.height - 2 * shave;
    w = img.width - 2 * shave;
    std::vector<double> y(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double r = img.at(i + shave, j + shave, 0) / 255.0;
            const double g = img.at(i + shave, j + shave, 1) / 255.0;
            const double b = img.at(i + shave, j + shave, 2) / 255.0;
            y[static_cast<std::size_t>(i) * w + j] = 16.0 + 65.481 * r + 128.553 * g + 24.966 * b;
        }
    return y;
}

inline double oracle_psnr(const ImageU8& a, const ImageU8& b, int shave) {
    int h = 0, w = 0;
    const std::vector<double> ya = oracle_y8(a, shave, h, w), yb = oracle_y8(b, shave, h, w);
    double mse = 0.0;
    for (std::size_t i = 0; i < ya.size(); ++i) mse += (ya[i] - yb[i]) * (ya[i] - yb[i]);
    mse /= static_cast<double>(ya.size());
    if (mse == 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

// Windowed-statistics SSIM oracle: explicit 2D Gaussian kernel, means
// subtracted inside the window before forming variances/covariance.
inline double oracle_ssim(const ImageU8& a, const ImageU8& b, int shave) {
    int h = 0, w = 0;
    const std::vector<double> ya = oracle_y8(a, shave, h, w), yb = oracle_y8(b, shave, h, w);
    double kern[11][11];
    double ksum = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double dy = i - 5.0, dx = j - 5.0;
            kern[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
            ksum += kern[i][j];
        }
    for (auto& row : kern)
        for (double& v : row) v /= ksum;

    const double c1 = 6.5025, c2 = 58.5225;  // (0.01*255)^2, (0.03*255)^2
    double total = 0.0;
    int count = 0;
    for (int y = 0; y + 11 <= h; ++y)
        for (int x = 0; x + 11 <= w; ++x) {
            double mua = 0.0, mub = 0.0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    mua += kern[i][j] * ya[static_cast<std::size_t>(y + i) * w + x + j];
                    mub += kern[i][j] * yb[static_cast<std::size_t>(y + i) * w + x + j];
                }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double da = ya[static_cast<std::size_t>(y + i) * w + x + j] - mua;
                    const double db = yb[static_cast<std::size_t>(y + i) * w + x + j] - mub;
                    va += kern[i][j] * da * da;
                    vb += kern[i][j] * db * db;
                    cov += kern[i][j] * da * db;
                }
            total += ((2.0 * mua * mub + c1) * (2.0 * cov + c2)) / ((mua * mua + mub * mub + c1) * (va + vb + c2));
            ++count;
        }
    return total / count;
}

// ------------------------------------------------------------ fixed images --

// Three fixed 64x64 textures with edges, gradients and periodic detail.
inline ImageU8 fixed_image(int which) {
    ImageF img(64, 64, 3);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            double r, g, b;
            switch (which) {
                case 0:  // crossing sinusoids
                    r = 0.5 + 0.45 * std::sin(0.31 * x + 0.11 * y);
                    g = 0.5 + 0.45 * std::sin(0.07 * x * y / 11.0);
                    b = 0.5 + 0.45 * std::cos(0.23 * y - 0.05 * x);
                    break;
                case 1: {  // gradient with a hard disc
                    const double d = std::hypot(x - 24.0, y - 40.0);
                    const double in = d < 14.0 ? 1.0 : 0.0;
                    r = x / 63.0 * (1.0 - in) + 0.9 * in;
                    g = y / 63.0 * (1.0 - in) + 0.2 * in;
                    b = 0.4 * (1.0 - in) + 0.7 * in;
                    break;
                }
                default: {  // soft checker
                    const double cx = std::sin(x * 0.7) * std::sin(y * 0.7);
                    r = 0.5 + 0.4 * cx;
                    g = 0.35 + 0.3 * std::cos(x * 0.2);
                    b = 0.6 - 0.35 * cx;
                    break;
                }
            }
            img.at(y, x, 0) = std::clamp(r, 0.0, 1.0);
            img.at(y, x, 1) = std::clamp(g, 0.0, 1.0);
            img.at(y, x, 2) = std::clamp(b, 0.0, 1.0);
        }
    return to_u8(img);
}

inline ImageU8 perturb(const ImageU8& img, unsigned seed, int amplitude) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(-amplitude, amplitude);
    ImageU8 out = img;
    for (auto& v : out.data) v = static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + d(rng), 0, 255));
    return out;
}

}  // namespace oracles
