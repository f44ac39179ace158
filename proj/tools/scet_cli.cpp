// scet — lightweight super-resolution toolkit.
//
// Subcommands: train, eval, infer, audit, degrade.
// Exit codes: 0 success, 2 config/usage error, 3 data/IO error,
// 4 numeric failure (non-finite loss).

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "scet/audit.hpp"
#include "scet/checkpoint.hpp"
#include "scet/config.hpp"
#include "scet/image.hpp"
#include "scet/model.hpp"
#include "scet/png_io.hpp"
#include "scet/train.hpp"

namespace {

constexpr int kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumeric = 4;

int worker_threads() {
    if (const char* env = std::getenv("SCET_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

struct ModelFlags {
    std::string config_path;
    int d = -1, w = -1, scale = -1, heads = -1;
    bool no_transformer = false;
};

void add_model_flags(CLI::App* app, ModelFlags& f) {
    app->add_option("--config", f.config_path, "key = value config file");
    app->add_option("--d", f.d, "number of SCPA blocks");
    app->add_option("--w", f.w, "channel width");
    app->add_option("--scale", f.scale, "upscaling factor")->check(CLI::Range(2, 4));
    app->add_option("--heads", f.heads, "attention heads");
    app->add_flag("--no-transformer", f.no_transformer, "drop the MDTA+GDFN stage");
}

// Defaults < config file < command-line flags.
scet::SCETConfig resolve_model_config(const ModelFlags& f) {
    scet::SCETConfig cfg;
    if (!f.config_path.empty()) {
        const scet::KeyValueConfig kv = scet::KeyValueConfig::parse_file(f.config_path);
        cfg.num_blocks = kv.get_int("d", cfg.num_blocks);
        cfg.channels = kv.get_int("w", cfg.channels);
        cfg.scale = kv.get_int("scale", cfg.scale);
        cfg.mdta_heads = kv.get_int("heads", cfg.mdta_heads);
        cfg.gdfn_expansion = kv.get_double("gdfn_expansion", cfg.gdfn_expansion);
        cfg.with_transformer = kv.get_bool("transformer", cfg.with_transformer);
    }
    if (f.d > 0) cfg.num_blocks = f.d;
    if (f.w > 0) cfg.channels = f.w;
    if (f.scale > 0) cfg.scale = f.scale;
    if (f.heads > 0) cfg.mdta_heads = f.heads;
    if (f.no_transformer) cfg.with_transformer = false;
    cfg.validate();
    return cfg;
}

void echo_model_config(const scet::SCETConfig& cfg) {
    std::printf("config: d=%d w=%d scale=%d heads=%d gdfn_expansion=%g transformer=%s\n", cfg.num_blocks,
                cfg.channels, cfg.scale, cfg.mdta_heads, cfg.gdfn_expansion, cfg.with_transformer ? "on" : "off");
}

scet::ImageU8 infer_image(const scet::SCETModel<float>& model, const scet::ImageU8& lr) {
    scet::NoGradGuard ng;
    scet::Tensor<float> in = scet::image_to_tensor<float>(scet::to_float(lr));
    in = scet::reshape(in, {1, 3, lr.height, lr.width});
    return scet::to_u8(scet::tensor_to_image(model.forward(in)));
}

// ------------------------------------------------------------------ train --

int cmd_train(const ModelFlags& mf, const std::string& data_dir, scet::TrainConfig tc, const std::string& out) {
    scet::SCETConfig cfg = resolve_model_config(mf);
    tc.scale = cfg.scale;
    tc.validate();
    echo_model_config(cfg);
    std::printf("train: data=%s iters=%d batch=%d gt_patch=%d lr0=%g lr_min=%g wd=%g seed=%llu augment=%s\n",
                data_dir.c_str(), tc.total_iters, tc.batch_size, tc.effective_gt_patch(), tc.lr0, tc.lr_min,
                tc.weight_decay, static_cast<unsigned long long>(tc.seed), tc.augment ? "on" : "off");
    std::printf("threads: %d\n", worker_threads());

    std::vector<scet::DatasetImage> dataset = scet::load_dataset(data_dir, cfg.scale);
    std::printf("dataset: %zu images\n", dataset.size());

    scet::SCETModel<float> model(cfg);
    model.init_weights(tc.seed);
    tc.checkpoint_path = out;
    std::vector<scet::LossRecord> trace = scet::train_loop(model, dataset, tc);
    if (!trace.empty())
        std::printf("done: final loss %.6g at iteration %d\n", trace.back().loss, trace.back().iter);
    std::printf("checkpoint: %s\n", out.c_str());
    return kExitOk;
}

// ------------------------------------------------------------------- eval --

int cmd_eval(const std::string& ckpt, const std::string& hr_dir, const std::string& out_csv, bool bypass_identity,
             bool bypass_bicubic) {
    scet::SCETModel<float> model = scet::load_checkpoint<float>(ckpt);
    const int s = model.config().scale;
    echo_model_config(model.config());
    std::printf("eval: hr_dir=%s shave=%d mode=%s\n", hr_dir.c_str(), s,
                bypass_identity ? "identity-bypass" : (bypass_bicubic ? "bicubic-bypass" : "model"));

    std::vector<std::string> files = scet::list_pngs(hr_dir);
    if (files.empty()) throw scet::DataError("no PNG images in " + hr_dir);

    std::ofstream os(out_csv);
    if (!os) throw scet::DataError("cannot write CSV: " + out_csv);
    os << "image,psnr_db,ssim\n";
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (const std::string& path : files) {
        scet::ImageU8 hr8;
        try {
            hr8 = scet::load_png(path);
        } catch (const scet::ImageError& e) {
            throw scet::DataError(std::string("cannot load ") + path + ": " + e.what());
        }
        const scet::ImageF hr = scet::center_crop_divisible(scet::to_float(hr8), s);
        hr8 = scet::to_u8(hr);
        const scet::ImageF lr = scet::bicubic_resize(hr, hr.height / s, hr.width / s);
        scet::ImageU8 sr;
        if (bypass_identity)
            sr = hr8;
        else if (bypass_bicubic)
            sr = scet::to_u8(scet::bicubic_resize(lr, hr.height, hr.width));
        else
            sr = infer_image(model, scet::to_u8(lr));
        const double psnr = scet::psnr_y(hr8, sr, s);
        const double ssim = scet::ssim_y(hr8, sr, s);
        psnr_sum += psnr;
        ssim_sum += ssim;
        char buf[64];
        std::snprintf(buf, sizeof(buf), ",%.4f,%.6f\n", psnr, ssim);
        os << std::filesystem::path(path).stem().string() << buf;
        std::printf("%-24s %8.4f dB  %.6f\n", std::filesystem::path(path).stem().string().c_str(), psnr, ssim);
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "mean,%.4f,%.6f\n", psnr_sum / files.size(), ssim_sum / files.size());
    os << buf;
    std::printf("mean %.4f dB  %.6f  -> %s\n", psnr_sum / files.size(), ssim_sum / files.size(), out_csv.c_str());
    return kExitOk;
}

// ------------------------------------------------------------------ infer --

int cmd_infer(const std::string& ckpt, const std::string& lr_png, const std::string& out_png, int want_scale) {
    scet::SCETModel<float> model = scet::load_checkpoint<float>(ckpt);
    echo_model_config(model.config());
    if (want_scale > 0 && want_scale != model.config().scale)
        throw scet::ConfigMismatchError("checkpoint is x" + std::to_string(model.config().scale) +
                                        " but x" + std::to_string(want_scale) + " was requested");
    scet::ImageU8 lr;
    try {
        lr = scet::load_png(lr_png);
    } catch (const scet::ImageError& e) {
        throw scet::DataError(std::string("cannot load ") + lr_png + ": " + e.what());
    }
    if (lr.height < 8 || lr.width < 8) throw scet::DataError("input must be at least 8x8");
    const scet::ImageU8 sr = infer_image(model, lr);
    scet::save_png(sr, out_png);
    std::printf("infer: %dx%d -> %dx%d  %s\n", lr.width, lr.height, sr.width, sr.height, out_png.c_str());
    return kExitOk;
}

// ------------------------------------------------------------------ audit --

int cmd_audit(const ModelFlags& mf, const std::string& ckpt, int hr_w, int hr_h, const std::string& format) {
    scet::SCETConfig cfg;
    if (!ckpt.empty()) {
        std::ifstream is(ckpt, std::ios::binary);
        if (!is) throw scet::DataError("cannot open checkpoint: " + ckpt);
        cfg = scet::read_checkpoint_config(is);
        if (mf.no_transformer) cfg.with_transformer = false;
        cfg.validate();
    } else {
        cfg = resolve_model_config(mf);
    }
    echo_model_config(cfg);
    scet::SCETModel<float> model(cfg);
    const scet::CostReport rep = scet::report(model, hr_w, hr_h);
    std::fputs((format == "csv" ? scet::render_csv(rep) : scet::render_text(rep)).c_str(), stdout);
    return kExitOk;
}

// ---------------------------------------------------------------- degrade --

int cmd_degrade(const std::string& hr_dir, int s, const std::string& out_dir) {
    std::vector<std::string> files = scet::list_pngs(hr_dir);
    if (files.empty()) throw scet::DataError("no PNG images in " + hr_dir);
    std::filesystem::create_directories(out_dir);
    std::printf("degrade: scale=%d %zu images -> %s\n", s, files.size(), out_dir.c_str());
    for (const std::string& path : files) {
        scet::ImageU8 hr8;
        try {
            hr8 = scet::load_png(path);
        } catch (const scet::ImageError& e) {
            throw scet::DataError(std::string("cannot load ") + path + ": " + e.what());
        }
        const scet::ImageF hr = scet::center_crop_divisible(scet::to_float(hr8), s);
        if (hr.height != hr8.height || hr.width != hr8.width)
            std::printf("%s: center-cropped %dx%d -> %dx%d\n", std::filesystem::path(path).filename().c_str(),
                        hr8.width, hr8.height, hr.width, hr.height);
        const scet::ImageF lr = scet::bicubic_resize(hr, hr.height / s, hr.width / s);
        const std::string out = (std::filesystem::path(out_dir) / std::filesystem::path(path).filename()).string();
        scet::save_png(scet::to_u8(lr), out);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scet: lightweight transformer super-resolution"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train a model");
    ModelFlags train_mf;
    add_model_flags(train, train_mf);
    std::string train_data, train_out = "model.ckpt";
    scet::TrainConfig tc;
    std::uint64_t seed = 0;
    bool no_augment = false;
    train->add_option("--data", train_data, "directory of HR PNGs")->required();
    train->add_option("--out", train_out, "checkpoint output path");
    train->add_option("--iters", tc.total_iters, "training iterations")->required();
    train->add_option("--batch", tc.batch_size, "batch size");
    train->add_option("--gt-patch", tc.gt_patch, "ground-truth patch size");
    train->add_option("--lr0", tc.lr0, "initial learning rate");
    train->add_option("--lr-min", tc.lr_min, "final learning rate");
    train->add_option("--weight-decay", tc.weight_decay, "L2 weight decay");
    train->add_option("--seed", seed, "RNG seed");
    train->add_option("--log-every", tc.log_every, "loss trace granularity");
    train->add_option("--checkpoint-every", tc.checkpoint_every, "intermediate checkpoint interval");
    train->add_option("--loss-csv", tc.loss_csv_path, "loss trace CSV path");
    train->add_flag("--no-augment", no_augment, "disable dihedral augmentation");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a directory of HR images");
    std::string eval_ckpt, eval_hr, eval_csv = "metrics.csv";
    bool eval_identity = false, eval_bicubic = false;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--data", eval_hr, "directory of HR PNGs")->required();
    eval->add_option("--out", eval_csv, "metrics CSV path");
    eval->add_flag("--bypass-identity", eval_identity, "score HR against itself (protocol check)");
    eval->add_flag("--bypass-bicubic", eval_bicubic, "score the bicubic upscale instead of the model");

    // infer
    auto* infer = app.add_subcommand("infer", "super-resolve one LR PNG");
    std::string infer_ckpt, infer_in, infer_out = "sr.png";
    int infer_scale = -1;
    infer->add_option("--checkpoint", infer_ckpt, "checkpoint path")->required();
    infer->add_option("--input", infer_in, "LR PNG")->required();
    infer->add_option("--out", infer_out, "SR PNG output path");
    infer->add_option("--scale", infer_scale, "expected upscaling factor")->check(CLI::Range(2, 4));

    // audit
    auto* audit = app.add_subcommand("audit", "parameter and multi-adds accounting");
    ModelFlags audit_mf;
    add_model_flags(audit, audit_mf);
    std::string audit_ckpt, audit_format = "text";
    int hr_w = 1280, hr_h = 720;
    audit->add_option("--checkpoint", audit_ckpt, "read the configuration from a checkpoint");
    audit->add_option("--hr-width", hr_w, "HR width for multi-adds");
    audit->add_option("--hr-height", hr_h, "HR height for multi-adds");
    audit->add_option("--format", audit_format, "text or csv")->check(CLI::IsMember({"text", "csv"}));

    // degrade
    auto* degrade = app.add_subcommand("degrade", "bicubically downscale a directory of HR PNGs");
    std::string deg_hr, deg_out;
    int deg_scale = 4;
    degrade->add_option("--data", deg_hr, "directory of HR PNGs")->required();
    degrade->add_option("--out", deg_out, "LR output directory")->required();
    degrade->add_option("--scale", deg_scale, "downscaling factor")->check(CLI::Range(2, 4));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*train) {
            tc.seed = seed;
            tc.augment = !no_augment;
            return cmd_train(train_mf, train_data, tc, train_out);
        }
        if (*eval) return cmd_eval(eval_ckpt, eval_hr, eval_csv, eval_identity, eval_bicubic);
        if (*infer) return cmd_infer(infer_ckpt, infer_in, infer_out, infer_scale);
        if (*audit) return cmd_audit(audit_mf, audit_ckpt, hr_w, hr_h, audit_format);
        if (*degrade) return cmd_degrade(deg_hr, deg_scale, deg_out);
    } catch (const scet::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const scet::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const scet::PngError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const scet::CheckpointError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const scet::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitOk;
}
