#pragma once

// L1 objective, Adam with cosine learning-rate decay and coupled L2 weight
// decay, aligned patch sampling with dihedral augmentation, and the
// deterministic training loop. Everything is driven by one seeded
// mt19937_64 so (seed, config, data) fully determine the result.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "scet/checkpoint.hpp"
#include "scet/image.hpp"
#include "scet/model.hpp"
#include "scet/png_io.hpp"
#include "scet/tensor.hpp"

namespace scet {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double lr0 = 2e-4;
    double lr_min = 1e-7;
    double weight_decay = 1e-4;
    double beta1 = 0.9, beta2 = 0.999;
    double adam_eps = 1e-8;
    int total_iters = 0;
    int batch_size = 16;
    int gt_patch = 416;  // adjusted down to a multiple of scale
    int scale = 4;
    std::uint64_t seed = 0;
    bool augment = true;
    int log_every = 100;            // loss-trace granularity; 1 = every step
    int checkpoint_every = 0;       // 0 = final checkpoint only
    std::string checkpoint_path;    // empty = keep in memory only
    std::string loss_csv_path;      // empty = no CSV

    // Largest multiple of scale not exceeding gt_patch.
    int effective_gt_patch() const { return (gt_patch / scale) * scale; }

    void validate() const {
        if (total_iters < 0) throw std::invalid_argument("train: total_iters must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (scale < 2 || scale > 4) throw std::invalid_argument("train: scale must be 2, 3 or 4");
        if (effective_gt_patch() < scale) throw std::invalid_argument("train: gt_patch too small for scale");
        if (!(lr_min < lr0)) throw std::invalid_argument("train: lr_min must be < lr0");
    }
};

// -------------------------------------------------------------- objective --

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    return mean_abs_diff(pred, target);
}

// ------------------------------------------------------------------- adam --

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m, v;  // mirror registry order and shapes
    std::int64_t t = 0;

    explicit AdamState(const ParamRegistry<T>& registry) {
        for (const auto& [name, p] : registry) {
            m.emplace_back(p.size(), T(0));
            v.emplace_back(p.size(), T(0));
        }
    }
};

template <typename T>
void adam_step(ParamRegistry<T>& registry, AdamState<T>& state, double lr_t, const TrainConfig& cfg) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    std::size_t idx = 0;
    for (auto& [name, p] : registry) {
        if (!p.has_grad()) throw NumericError("adam_step: parameter `" + name + "` has no gradient");
        std::vector<T>& g = p.grad();
        std::vector<T>& m = state.m[idx];
        std::vector<T>& v = state.v[idx];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double grad = static_cast<double>(g[i]) + cfg.weight_decay * static_cast<double>(p[i]);
            const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * grad;
            const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * grad * grad;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            p[i] -= static_cast<T>(lr_t * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.adam_eps));
        }
        p.zero_grad();
        ++idx;
    }
}

// lr(t) = lr_min + 0.5 (lr0 - lr_min)(1 + cos(pi t / T)); clamps past T.
inline double cosine_lr(std::int64_t t, std::int64_t total, double lr0, double lr_min) {
    if (total <= 0 || t >= total) return lr_min;
    if (t <= 0) return lr0;
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(M_PI * static_cast<double>(t) / static_cast<double>(total)));
}

// -------------------------------------------------------- patch machinery --

// Interleaved HWC double image -> planar CHW tensor.
template <typename T>
Tensor<T> image_to_tensor(const ImageF& img) {
    Tensor<T> t({img.channels, img.height, img.width});
    std::size_t i = 0;
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) t[i++] = static_cast<T>(img.at(y, x, c));
    return t;
}

// Rank-3 or rank-4 (batch 1) CHW tensor -> image, samples clamped to [0,1].
template <typename T>
ImageF tensor_to_image(const Tensor<T>& t) {
    Shape s = t.shape();
    if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
    if (s.size() != 3) shape_error("tensor_to_image: expected [C,H,W], got " + shape_str(t.shape()));
    ImageF img(s[1], s[2], s[0]);
    std::size_t i = 0;
    for (int c = 0; c < s[0]; ++c)
        for (int y = 0; y < s[1]; ++y)
            for (int x = 0; x < s[2]; ++x) img.at(y, x, c) = std::clamp(static_cast<double>(t[i++]), 0.0, 1.0);
    return img;
}

template <typename T>
struct SamplePair {
    Tensor<T> lr;  // [3, p/s, p/s]
    Tensor<T> hr;  // [3, p, p]
};

template <typename T>
SamplePair<T> sample_patch(const ImageF& hr, const ImageF& lr, int gt_patch, int s, std::mt19937_64& rng) {
    if (gt_patch % s != 0) throw std::invalid_argument("sample_patch: gt_patch must be divisible by scale");
    if (hr.height < gt_patch || hr.width < gt_patch)
        throw DataError("sample_patch: image " + std::to_string(hr.width) + "x" + std::to_string(hr.height) +
                        " smaller than patch " + std::to_string(gt_patch));
    if (lr.height * s != hr.height || lr.width * s != hr.width)
        throw DataError("sample_patch: LR extents are not HR/scale");

    const int p = gt_patch, q = p / s;
    // HR origin on the scale grid so the LR crop is integral.
    std::uniform_int_distribution<int> dy(0, (hr.height - p) / s), dx(0, (hr.width - p) / s);
    const int ly = dy(rng), lx = dx(rng);
    const int hy = ly * s, hx = lx * s;

    SamplePair<T> out{Tensor<T>({3, q, q}), Tensor<T>({3, p, p})};
    std::size_t i = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < q; ++y)
            for (int x = 0; x < q; ++x) out.lr[i++] = static_cast<T>(lr.at(ly + y, lx + x, c));
    i = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x) out.hr[i++] = static_cast<T>(hr.at(hy + y, hx + x, c));
    return out;
}

// Dihedral-group element k in [0,8): optional horizontal flip (k >= 4)
// followed by k % 4 counterclockwise quarter turns.
template <typename T>
Tensor<T> dihedral_transform(const Tensor<T>& t, int k) {
    if (t.rank() != 3) shape_error("dihedral_transform: expected [C,H,W], got " + shape_str(t.shape()));
    if (k < 0 || k >= 8) throw std::invalid_argument("dihedral_transform: k must be in [0,8)");
    const int c = t.shape()[0];
    int h = t.shape()[1], w = t.shape()[2];
    std::vector<T> cur(t.data(), t.data() + t.size());
    auto at = [&](std::vector<T>& buf, int W, int ci, int y, int x) -> T& {
        return buf[(static_cast<std::size_t>(ci) * (buf.size() / (static_cast<std::size_t>(c) * W)) + y) * W + x];
    };
    if (k >= 4) {  // horizontal flip: x -> w-1-x
        std::vector<T> next(cur.size());
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) at(next, w, ci, y, w - 1 - x) = at(cur, w, ci, y, x);
        cur.swap(next);
    }
    for (int r = 0; r < k % 4; ++r) {  // CCW: (y, x) -> (w-1-x, y), new shape [w, h]
        std::vector<T> next(cur.size());
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) at(next, h, ci, w - 1 - x, y) = at(cur, w, ci, y, x);
        cur.swap(next);
        std::swap(h, w);
    }
    return Tensor<T>::from({c, h, w}, std::move(cur));
}

inline int dihedral_inverse(int k) {
    if (k < 4) return (4 - k) % 4;  // pure rotation
    return k;                       // flip-then-rotate elements are involutions
}

template <typename T>
SamplePair<T> augment(const SamplePair<T>& pair, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dk(0, 7);
    const int k = dk(rng);
    return {dihedral_transform(pair.lr, k), dihedral_transform(pair.hr, k)};
}

// ---------------------------------------------------------------- dataset --

struct DatasetImage {
    std::string name;  // file stem
    ImageF hr, lr;     // HR center-cropped to scale-divisible; LR = HR/s
};

inline std::vector<std::string> list_pngs(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

inline ImageF center_crop_divisible(const ImageF& img, int s) {
    const int h = (img.height / s) * s, w = (img.width / s) * s;
    if (h < s || w < s) throw DataError("image too small for scale " + std::to_string(s));
    if (h == img.height && w == img.width) return img;
    const int y0 = (img.height - h) / 2, x0 = (img.width - w) / 2;
    ImageF out(h, w, img.channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

// Loads every HR PNG in `dir`, center-crops to scale-divisible extents and
// degrades bicubically to produce the aligned LR counterpart.
inline std::vector<DatasetImage> load_dataset(const std::string& dir, int s) {
    std::vector<DatasetImage> out;
    for (const std::string& path : list_pngs(dir)) {
        DatasetImage d;
        d.name = std::filesystem::path(path).stem().string();
        try {
            d.hr = center_crop_divisible(to_float(load_png(path)), s);
        } catch (const ImageError& e) {
            throw DataError(std::string("cannot load ") + path + ": " + e.what());
        }
        d.lr = bicubic_resize(d.hr, d.hr.height / s, d.hr.width / s);
        out.push_back(std::move(d));
    }
    if (out.empty()) throw DataError("no PNG images in dataset directory: " + dir);
    return out;
}

// ------------------------------------------------------------- train loop --

struct LossRecord {
    int iter;
    double lr, loss;
};

inline void write_loss_csv(const std::vector<LossRecord>& trace, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write loss CSV: " + path);
    os << "iter,lr,loss\n";
    char buf[96];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof(buf), "%d,%.8g,%.8g\n", r.iter, r.lr, r.loss);
        os << buf;
    }
}

template <typename T>
std::vector<LossRecord> train_loop(SCETModel<T>& model, const std::vector<DatasetImage>& dataset,
                                   const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw DataError("train_loop: empty dataset");
    if (cfg.scale != model.config().scale)
        throw std::invalid_argument("train_loop: config scale does not match the model");

    // Patch size every image can supply: the largest scale multiple that fits
    // the smallest image, capped at the configured GT patch.
    int p = cfg.effective_gt_patch();
    for (const auto& d : dataset) p = std::min({p, (d.hr.height / cfg.scale) * cfg.scale, (d.hr.width / cfg.scale) * cfg.scale});
    const int q = p / cfg.scale;

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    AdamState<T> adam(model.registry());
    std::vector<LossRecord> trace;

    for (int iter = 1; iter <= cfg.total_iters; ++iter) {
        Tensor<T> lr_batch({cfg.batch_size, 3, q, q});
        Tensor<T> hr_batch({cfg.batch_size, 3, p, p});
        for (int b = 0; b < cfg.batch_size; ++b) {
            const DatasetImage& d = dataset[pick(rng)];
            SamplePair<T> s = sample_patch<T>(d.hr, d.lr, p, cfg.scale, rng);
            if (cfg.augment) s = augment(s, rng);
            std::copy(s.lr.data(), s.lr.data() + s.lr.size(), lr_batch.data() + static_cast<std::size_t>(b) * s.lr.size());
            std::copy(s.hr.data(), s.hr.data() + s.hr.size(), hr_batch.data() + static_cast<std::size_t>(b) * s.hr.size());
        }

        Tensor<T> loss = l1_loss(model.forward(lr_batch), hr_batch);
        const double loss_v = static_cast<double>(loss[0]);
        if (!std::isfinite(loss_v))
            throw NumericError("train_loop: non-finite loss at iteration " + std::to_string(iter));
        backward(loss);

        const double lr_t = cosine_lr(iter - 1, cfg.total_iters, cfg.lr0, cfg.lr_min);
        adam_step(model.registry(), adam, lr_t, cfg);

        if (cfg.log_every > 0 && (iter % cfg.log_every == 0 || iter == cfg.total_iters))
            trace.push_back({iter, lr_t, loss_v});
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0)
            save_checkpoint(model, cfg.checkpoint_path);
    }

    if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
    if (!cfg.loss_csv_path.empty()) write_loss_csv(trace, cfg.loss_csv_path);
    return trace;
}

}  // namespace scet
