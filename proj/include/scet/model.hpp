#pragma once

// The SCET network: SCPA backbone, efficient transformer (MDTA + GDFN),
// pixel-shuffle upsamplers with a global residual path, and the parameter
// registry that checkpoints and the complexity audit are built on.

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scet/tensor.hpp"

namespace scet {

struct SCETConfig {
    int num_blocks = 16;      // d
    int channels = 64;        // w, must be even
    int scale = 4;            // in {2,3,4}
    int mdta_heads = 1;
    double gdfn_expansion = 2.75;  // hidden width = ceil(expansion * channels)
    double ln_eps = 1e-6;
    bool with_transformer = true;

    int gdfn_hidden() const { return static_cast<int>(std::ceil(gdfn_expansion * channels)); }

    void validate() const {
        if (num_blocks < 1) throw std::invalid_argument("config: num_blocks must be >= 1");
        if (channels < 2 || channels % 2 != 0) throw std::invalid_argument("config: channels must be even and >= 2");
        if (scale < 2 || scale > 4) throw std::invalid_argument("config: scale must be 2, 3 or 4");
        if (mdta_heads < 1 || channels % mdta_heads != 0)
            throw std::invalid_argument("config: channels must be divisible by mdta_heads");
        if (gdfn_expansion <= 0) throw std::invalid_argument("config: gdfn_expansion must be positive");
    }
};

// Ordered, uniquely named set of learnable tensors. Iteration order is the
// registration order and is what checkpoints and optimizer state follow.
template <typename T>
class ParamRegistry {
public:
    void add(const std::string& name, Tensor<T> t) {
        if (index_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
        t.set_requires_grad(true);
        index_[name] = entries_.size();
        entries_.emplace_back(name, std::move(t));
    }

    std::size_t size() const { return entries_.size(); }
    const std::pair<std::string, Tensor<T>>& at(std::size_t i) const { return entries_[i]; }
    std::pair<std::string, Tensor<T>>& at(std::size_t i) { return entries_[i]; }

    Tensor<T>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &entries_[it->second].second;
    }

    std::int64_t total_params() const {
        std::int64_t n = 0;
        for (const auto& [name, t] : entries_) n += static_cast<std::int64_t>(t.size());
        return n;
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::vector<std::pair<std::string, Tensor<T>>> entries_;
    std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Layers

template <typename T>
struct Conv2dLayer {
    Tensor<T> weight;  // [Cout, Cin/groups, k, k]
    Tensor<T> bias;    // [Cout]
    int stride = 1, padding = 0, groups = 1;

    Conv2dLayer() = default;
    Conv2dLayer(int cin, int cout, int k, int groups_ = 1)
        : weight({cout, cin / groups_, k, k}), bias({cout}), padding((k - 1) / 2), groups(groups_) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        return conv2d(x, weight, &bias, stride, padding, groups);
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reg.add(prefix + ".weight", weight);
        reg.add(prefix + ".bias", bias);
    }
};

// Self-calibrated convolution with pixel attention. Both branches run at
// w/2 channels; the residual adds the block input.
template <typename T>
struct SCPABlock {
    Conv2dLayer<T> reduce1, reduce2;     // 1x1, w -> w/2
    Conv2dLayer<T> attn_conv;            // 3x3 on the attention branch
    Conv2dLayer<T> attn_gate;            // 1x1 pixel-attention conv
    Conv2dLayer<T> post_conv;            // 3x3 after the attention product
    Conv2dLayer<T> lower_conv;           // 3x3 on the spatial branch
    Conv2dLayer<T> fuse;                 // 1x1, w -> w

    explicit SCPABlock(int w)
        : reduce1(w, w / 2, 1), reduce2(w, w / 2, 1),
          attn_conv(w / 2, w / 2, 3), attn_gate(w / 2, w / 2, 1),
          post_conv(w / 2, w / 2, 3), lower_conv(w / 2, w / 2, 3),
          fuse(w, w, 1) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto upper = reduce1(x);
        auto pa = mul(attn_conv(upper), sigmoid(attn_gate(upper)));
        auto upper_out = post_conv(pa);
        auto lower_out = lower_conv(reduce2(x));
        return add(fuse(concat_channels(upper_out, lower_out)), x);
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reduce1.register_params(reg, prefix + ".reduce1");
        reduce2.register_params(reg, prefix + ".reduce2");
        attn_conv.register_params(reg, prefix + ".attn_conv");
        attn_gate.register_params(reg, prefix + ".attn_gate");
        post_conv.register_params(reg, prefix + ".post_conv");
        lower_conv.register_params(reg, prefix + ".lower_conv");
        fuse.register_params(reg, prefix + ".fuse");
    }
};

// Multi-Dconv head transposed attention: a (C/h)x(C/h) attention matrix per
// head, independent of the spatial extent.
template <typename T>
struct MDTALayer {
    Tensor<T> ln_gamma, ln_beta;
    Conv2dLayer<T> q_pconv, q_dconv, k_pconv, k_dconv, v_pconv, v_dconv;
    Conv2dLayer<T> out_pconv;
    Tensor<T> alpha;  // learnable temperature per head
    int heads;
    T eps;

    MDTALayer(int w, int heads_, T eps_)
        : ln_gamma({w}), ln_beta({w}),
          q_pconv(w, w, 1), q_dconv(w, w, 3, w),
          k_pconv(w, w, 1), k_dconv(w, w, 3, w),
          v_pconv(w, w, 1), v_dconv(w, w, 3, w),
          out_pconv(w, w, 1), alpha({heads_}), heads(heads_), eps(eps_) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const int ch = C / heads;
        const int hw = H * W;
        auto normed = layer_norm(x, ln_gamma, ln_beta, eps);
        auto q = q_dconv(q_pconv(normed));
        auto k = k_dconv(k_pconv(normed));
        auto v = v_dconv(v_pconv(normed));
        // NCHW is already (N, heads, ch, HW) row-major
        auto k_hat = reshape(k, {N, heads, ch, hw});
        auto q_hat = transpose_last2(reshape(q, {N, heads, ch, hw}));      // (HW, ch)
        auto v_hat = transpose_last2(reshape(v, {N, heads, ch, hw}));      // (HW, ch)
        auto logits = div_head_scale(matmul(k_hat, q_hat), alpha);          // (ch, ch)
        auto attn = softmax_lastdim(logits);
        auto mixed = matmul(v_hat, attn);                                   // (HW, ch)
        auto back = reshape(transpose_last2(mixed), {N, C, H, W});
        return add(out_pconv(back), x);
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reg.add(prefix + ".ln.gamma", ln_gamma);
        reg.add(prefix + ".ln.beta", ln_beta);
        q_pconv.register_params(reg, prefix + ".q_pconv");
        q_dconv.register_params(reg, prefix + ".q_dconv");
        k_pconv.register_params(reg, prefix + ".k_pconv");
        k_dconv.register_params(reg, prefix + ".k_dconv");
        v_pconv.register_params(reg, prefix + ".v_pconv");
        v_dconv.register_params(reg, prefix + ".v_dconv");
        out_pconv.register_params(reg, prefix + ".out_pconv");
        reg.add(prefix + ".alpha", alpha);
    }
};

// Gated-Dconv feed-forward network: a GELU path gates a linear path
// elementwise before projection; residual around the whole layer.
template <typename T>
struct GDFNLayer {
    Tensor<T> ln_gamma, ln_beta;
    Conv2dLayer<T> gate_pconv, gate_dconv;   // w -> hidden
    Conv2dLayer<T> value_pconv, value_dconv;
    Conv2dLayer<T> proj;                     // hidden -> w
    T eps;

    GDFNLayer(int w, int hidden, T eps_)
        : ln_gamma({w}), ln_beta({w}),
          gate_pconv(w, hidden, 1), gate_dconv(hidden, hidden, 3, hidden),
          value_pconv(w, hidden, 1), value_dconv(hidden, hidden, 3, hidden),
          proj(hidden, w, 1), eps(eps_) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto normed = layer_norm(x, ln_gamma, ln_beta, eps);
        auto gate = gelu(gate_dconv(gate_pconv(normed)));
        auto value = value_dconv(value_pconv(normed));
        return add(proj(mul(gate, value)), x);
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reg.add(prefix + ".ln.gamma", ln_gamma);
        reg.add(prefix + ".ln.beta", ln_beta);
        gate_pconv.register_params(reg, prefix + ".gate_pconv");
        gate_dconv.register_params(reg, prefix + ".gate_dconv");
        value_pconv.register_params(reg, prefix + ".value_pconv");
        value_dconv.register_params(reg, prefix + ".value_dconv");
        proj.register_params(reg, prefix + ".proj");
    }
};

// Single 3x3 conv to 3*s^2 channels followed by pixel shuffle.
template <typename T>
struct Upsampler {
    Conv2dLayer<T> conv;
    int scale;

    Upsampler(int w, int s) : conv(w, 3 * s * s, 3), scale(s) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return pixel_shuffle(conv(x), scale); }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        conv.register_params(reg, prefix + ".conv");
    }
};

// ---------------------------------------------------------------------------

template <typename T>
class SCETModel {
public:
    explicit SCETModel(SCETConfig cfg) : cfg_(cfg) {
        cfg.validate();
        head_ = std::make_unique<Conv2dLayer<T>>(3, cfg.channels, 3);
        head_->register_params(registry_, "head");
        for (int i = 0; i < cfg.num_blocks; ++i) {
            blocks_.emplace_back(std::make_unique<SCPABlock<T>>(cfg.channels));
            blocks_.back()->register_params(registry_, "scpa." + std::to_string(i));
        }
        if (cfg.with_transformer) {
            mdta_ = std::make_unique<MDTALayer<T>>(cfg.channels, cfg.mdta_heads, static_cast<T>(cfg.ln_eps));
            mdta_->register_params(registry_, "mdta");
            gdfn_ = std::make_unique<GDFNLayer<T>>(cfg.channels, cfg.gdfn_hidden(), static_cast<T>(cfg.ln_eps));
            gdfn_->register_params(registry_, "gdfn");
        }
        up_backbone_ = std::make_unique<Upsampler<T>>(cfg.channels, cfg.scale);
        up_backbone_->register_params(registry_, "up1");
        up_residual_ = std::make_unique<Upsampler<T>>(cfg.channels, cfg.scale);
        up_residual_->register_params(registry_, "up2");
    }

    const SCETConfig& config() const { return cfg_; }
    ParamRegistry<T>& registry() { return registry_; }
    const ParamRegistry<T>& registry() const { return registry_; }

    Tensor<T> forward(const Tensor<T>& lr) const {
        if (lr.rank() != 4 || lr.dim(1) != 3)
            shape_error("scet_forward: expected [N,3,h,w] input, got " + shape_str(lr.shape()));
        auto shallow = (*head_)(lr);
        auto features = sc_module(shallow);
        if (cfg_.with_transformer) features = (*gdfn_)((*mdta_)(features));
        return add((*up_backbone_)(features), (*up_residual_)(shallow));
    }

    Tensor<T> sc_module(const Tensor<T>& x) const {
        auto f = x;
        for (const auto& b : blocks_) f = (*b)(f);
        return f;
    }

    const SCPABlock<T>& block(int i) const { return *blocks_[static_cast<std::size_t>(i)]; }
    const MDTALayer<T>& mdta() const { return *mdta_; }
    const GDFNLayer<T>& gdfn() const { return *gdfn_; }
    const Upsampler<T>& up_backbone() const { return *up_backbone_; }
    const Upsampler<T>& up_residual() const { return *up_residual_; }

    // He-normal conv weights, zero biases, unit LN gain / temperature.
    void init_weights(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& [name, t] : registry_) {
            if (name.ends_with(".weight")) {
                // fan_in from the weight layout [Cout, Cin/g, k, k]
                const auto& s = t.shape();
                const double fan_in = static_cast<double>(s[1]) * s[2] * s[3];
                double std_dev = std::sqrt(2.0 / fan_in);
                // Down-scale the convs that feed residual additions (block
                // fusion / attention-and-FFN projections / upsamplers) so the
                // network starts close to its skip connections. Pure He-normal
                // lets activations grow multiplicatively across the residual
                // stack, which stalls early optimization on small budgets.
                if (name.ends_with(".fuse.weight") || name.ends_with("out_pconv.weight") ||
                    name.ends_with("proj.weight") || name.starts_with("up"))
                    std_dev *= 0.1;
                for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(std_dev * normal(rng));
            } else if (name.ends_with(".gamma") || name.ends_with(".alpha")) {
                for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(1);
            } else {
                for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(0);
            }
        }
    }

    void zero_grad() {
        for (auto& [name, t] : registry_) t.zero_grad();
    }

private:
    SCETConfig cfg_;
    ParamRegistry<T> registry_;
    std::unique_ptr<Conv2dLayer<T>> head_;
    std::vector<std::unique_ptr<SCPABlock<T>>> blocks_;
    std::unique_ptr<MDTALayer<T>> mdta_;
    std::unique_ptr<GDFNLayer<T>> gdfn_;
    std::unique_ptr<Upsampler<T>> up_backbone_;
    std::unique_ptr<Upsampler<T>> up_residual_;
};

}  // namespace scet
