#pragma once

// Deterministic synthetic image synthesis shared by the corpus generator
// tool and the acceptance suite: smooth gradient backgrounds, sinusoidal
// textures and anti-aliased geometric shapes (smoothstep on signed
// distance), giving the sharp structure super-resolution models feed on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "scet/image.hpp"

namespace synth {

inline double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

struct Rgb {
    double r, g, b;
};

inline Rgb random_color(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    return {u(rng), u(rng), u(rng)};
}

inline scet::ImageF make_image(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    scet::ImageF img(size, size, 3);

    // Oriented linear gradient background.
    const double ang = u01(rng) * 2.0 * M_PI;
    const Rgb c0 = random_color(rng), c1 = random_color(rng);
    const double gx = std::cos(ang), gy = std::sin(ang);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double t = 0.5 + 0.5 * ((x - size / 2.0) * gx + (y - size / 2.0) * gy) / (0.75 * size);
            const double tt = std::clamp(t, 0.0, 1.0);
            img.at(y, x, 0) = c0.r + (c1.r - c0.r) * tt;
            img.at(y, x, 1) = c0.g + (c1.g - c0.g) * tt;
            img.at(y, x, 2) = c0.b + (c1.b - c0.b) * tt;
        }

    // Sinusoidal texture on a random color axis.
    {
        const double fx = 0.05 + 0.30 * u01(rng), fy = 0.05 + 0.30 * u01(rng);
        const double ph = u01(rng) * 2.0 * M_PI, amp = 0.04 + 0.10 * u01(rng);
        const Rgb axis = random_color(rng);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double s = amp * std::sin(fx * x + fy * y + ph);
                img.at(y, x, 0) = std::clamp(img.at(y, x, 0) + s * axis.r, 0.0, 1.0);
                img.at(y, x, 1) = std::clamp(img.at(y, x, 1) + s * axis.g, 0.0, 1.0);
                img.at(y, x, 2) = std::clamp(img.at(y, x, 2) + s * axis.b, 0.0, 1.0);
            }
    }

    // Shapes: anti-aliased circles, boxes and bars, ~1 px soft edge.
    std::uniform_int_distribution<int> nshapes(8, 14);
    const int n = nshapes(rng);
    for (int k = 0; k < n; ++k) {
        const Rgb col = random_color(rng);
        const double cx = u01(rng) * size, cy = u01(rng) * size;
        const int kind = static_cast<int>(u01(rng) * 3.0);
        const double r1 = (0.04 + 0.18 * u01(rng)) * size;
        const double r2 = (0.02 + 0.12 * u01(rng)) * size;
        const double rot = u01(rng) * M_PI;
        const double cr = std::cos(rot), sr = std::sin(rot);
        const double alpha = 0.55 + 0.45 * u01(rng);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double rx = dx * cr + dy * sr, ry = -dx * sr + dy * cr;
                double dist;  // signed distance to the shape boundary
                if (kind == 0) dist = std::sqrt(dx * dx + dy * dy) - r1;
                else if (kind == 1) dist = std::max(std::abs(rx) - r1, std::abs(ry) - r2);
                else dist = std::abs(ry) - std::max(2.0, r2 * 0.2);  // bar
                const double a = alpha * (1.0 - smoothstep(-0.75, 0.75, dist));
                if (a <= 0.0) continue;
                img.at(y, x, 0) += a * (col.r - img.at(y, x, 0));
                img.at(y, x, 1) += a * (col.g - img.at(y, x, 1));
                img.at(y, x, 2) += a * (col.b - img.at(y, x, 2));
            }
    }
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

}  // namespace synth
