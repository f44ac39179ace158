#pragma once

// Rank-<=4 tensors (NCHW for rank 4) with reverse-mode automatic
// differentiation. Precision is a template parameter: float for
// training/inference, double for gradient checking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <vector>

namespace scet {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

[[noreturn]] inline void shape_error(const std::string& what) {
    throw std::invalid_argument("shape error: " + what);
}

// When false, ops do not record backward rules and results do not require
// grad. Thread-local so concurrent inference threads stay independent.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
};

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily, same length as data
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this node's grad into its parents' grads.
    std::function<void(Node&)> backward;

    std::vector<T>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
};

}  // namespace detail

template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
        : node_(std::make_shared<detail::Node<T>>()) {
        if (shape.empty() || shape.size() > 4) shape_error("rank must be 1..4, got " + shape_str(shape));
        for (int d : shape)
            if (d <= 0) shape_error("nonpositive extent in " + shape_str(shape));
        node_->shape = std::move(shape);
        node_->data.assign(static_cast<std::size_t>(numel(node_->shape)), fill);
        node_->requires_grad = requires_grad;
    }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        Tensor t(shape, T(0), requires_grad);
        if (data.size() != t.size()) shape_error("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
        t.node_->data = std::move(data);
        return t;
    }

    bool valid() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t size() const { return node_->data.size(); }

    T* data() { return node_->data.data(); }
    const T* data() const { return node_->data.data(); }
    T& operator[](std::size_t i) { return node_->data[i]; }
    T operator[](std::size_t i) const { return node_->data[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<T>& grad() { return node_->ensure_grad(); }
    const std::vector<T>& grad() const { return node_->grad; }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    bool all_finite() const {
        for (T v : node_->data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::shared_ptr<detail::Node<T>> node() const { return node_; }

private:
    std::shared_ptr<detail::Node<T>> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward) {
    Tensor<T> out(std::move(shape));
    bool needs = false;
    if (grad_mode())
        for (auto& p : parents)
            if (p->requires_grad) needs = true;
    if (needs) {
        out.node()->requires_grad = true;
        out.node()->parents = std::move(parents);
        out.node()->backward = std::move(backward);
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) shape_error("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto an = a.node(), bn = b.node();
    auto out = detail::make_result<T>(a.shape(), {an, bn}, [an, bn](detail::Node<T>& y) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += y.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += y.grad[i];
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) shape_error("sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto an = a.node(), bn = b.node();
    auto out = detail::make_result<T>(a.shape(), {an, bn}, [an, bn](detail::Node<T>& y) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += y.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= y.grad[i];
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) shape_error("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto an = a.node(), bn = b.node();
    auto out = detail::make_result<T>(a.shape(), {an, bn}, [an, bn](detail::Node<T>& y) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += y.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += y.grad[i] * an->data[i];
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    auto an = a.node();
    auto out = detail::make_result<T>(a.shape(), {an}, [an, c](detail::Node<T>& y) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * y.grad[i];
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a[i];
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    auto xn = x.node();
    auto out = detail::make_result<T>(x.shape(), {xn}, [xn](detail::Node<T>& y) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            T s = y.data[i];
            g[i] += y.grad[i] * s * (T(1) - s);
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i) {
        T v = x[i];
        out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    return out;
}

// Exact Gaussian-CDF GELU: x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    auto xn = x.node();
    auto out = detail::make_result<T>(x.shape(), {xn}, [xn](detail::Node<T>& y) {
        constexpr double inv_sqrt2 = 0.7071067811865475244;
        constexpr double inv_sqrt2pi = 0.3989422804014326779;
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            double v = static_cast<double>(xn->data[i]);
            double phi_cdf = 0.5 * std::erfc(-v * inv_sqrt2);
            double phi_pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            g[i] += y.grad[i] * static_cast<T>(phi_cdf + v * phi_pdf);
        }
    });
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = static_cast<double>(x[i]);
        out[i] = static_cast<T>(v * 0.5 * std::erfc(-v * inv_sqrt2));
    }
    return out;
}

// Softmax over the final axis, max-subtracted for overflow safety.
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    const int L = x.dim(x.rank() - 1);
    const std::size_t rows = x.size() / static_cast<std::size_t>(L);
    auto xn = x.node();
    auto out = detail::make_result<T>(x.shape(), {xn}, [xn, L, rows](detail::Node<T>& y) {
        auto& g = xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* yr = y.data.data() + r * static_cast<std::size_t>(L);
            const T* gy = y.grad.data() + r * static_cast<std::size_t>(L);
            T dot = T(0);
            for (int i = 0; i < L; ++i) dot += gy[i] * yr[i];
            T* gx = g.data() + r * static_cast<std::size_t>(L);
            for (int i = 0; i < L; ++i) gx[i] += yr[i] * (gy[i] - dot);
        }
    });
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * static_cast<std::size_t>(L);
        T* yr = out.data() + r * static_cast<std::size_t>(L);
        T m = xr[0];
        for (int i = 1; i < L; ++i) m = std::max(m, xr[i]);
        T sum = T(0);
        for (int i = 0; i < L; ++i) {
            yr[i] = std::exp(xr[i] - m);
            sum += yr[i];
        }
        T inv = T(1) / sum;
        for (int i = 0; i < L; ++i) yr[i] *= inv;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Layer normalization over the channel dimension at every spatial position.
// x: [N,C,H,W], gamma/beta: [C].

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-6)) {
    if (x.rank() != 4) shape_error("layer_norm: expected rank-4 input, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C)
        shape_error("layer_norm: affine params must be [C=" + std::to_string(C) + "]");
    if (eps <= T(0)) throw std::invalid_argument("layer_norm: eps must be positive");
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    auto out = detail::make_result<T>(x.shape(), {xn, gn, bn}, [=](detail::Node<T>& y) {
        const T* xd = xn->data.data();
        const T* gd = gn->data.data();
        for (int n = 0; n < N; ++n) {
            for (std::size_t p = 0; p < hw; ++p) {
                const std::size_t base = static_cast<std::size_t>(n) * C * hw + p;
                T mean = T(0), var = T(0);
                for (int c = 0; c < C; ++c) mean += xd[base + static_cast<std::size_t>(c) * hw];
                mean /= T(C);
                for (int c = 0; c < C; ++c) {
                    T d = xd[base + static_cast<std::size_t>(c) * hw] - mean;
                    var += d * d;
                }
                var /= T(C);
                const T inv_std = T(1) / std::sqrt(var + eps);
                // dL/dxhat, plus its mean and its correlation with xhat
                T sum_dxh = T(0), sum_dxh_xh = T(0);
                for (int c = 0; c < C; ++c) {
                    const std::size_t i = base + static_cast<std::size_t>(c) * hw;
                    T xh = (xd[i] - mean) * inv_std;
                    T dxh = y.grad[i] * gd[c];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh;
                }
                if (xn->requires_grad) {
                    auto& gx = xn->ensure_grad();
                    for (int c = 0; c < C; ++c) {
                        const std::size_t i = base + static_cast<std::size_t>(c) * hw;
                        T xh = (xd[i] - mean) * inv_std;
                        T dxh = y.grad[i] * gd[c];
                        gx[i] += inv_std * (dxh - sum_dxh / T(C) - xh * sum_dxh_xh / T(C));
                    }
                }
                if (gn->requires_grad || bn->requires_grad) {
                    auto& gg = gn->ensure_grad();
                    auto& gb = bn->ensure_grad();
                    for (int c = 0; c < C; ++c) {
                        const std::size_t i = base + static_cast<std::size_t>(c) * hw;
                        T xh = (xd[i] - mean) * inv_std;
                        gg[c] += y.grad[i] * xh;
                        gb[c] += y.grad[i];
                    }
                }
            }
        }
    });
    const T* xd = x.data();
    const T* gd = gamma.data();
    const T* bd = beta.data();
    T* yd = out.data();
    for (int n = 0; n < N; ++n) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t base = static_cast<std::size_t>(n) * C * hw + p;
            T mean = T(0), var = T(0);
            for (int c = 0; c < C; ++c) mean += xd[base + static_cast<std::size_t>(c) * hw];
            mean /= T(C);
            for (int c = 0; c < C; ++c) {
                T d = xd[base + static_cast<std::size_t>(c) * hw] - mean;
                var += d * d;
            }
            var /= T(C);
            const T inv_std = T(1) / std::sqrt(var + eps);
            for (int c = 0; c < C; ++c) {
                const std::size_t i = base + static_cast<std::size_t>(c) * hw;
                yd[i] = gd[c] * (xd[i] - mean) * inv_std + bd[c];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation), NCHW. weight: [Cout, Cin/groups, k, k].
// Covers pixel convolution (k=1) and depth-wise convolution (groups=Cin).

namespace detail {

template <typename T>
void conv2d_forward_kernel(const T* x, const T* w, const T* b, T* y,
                           int N, int Cin, int H, int W, int Cout, int kh, int kw,
                           int stride, int pad, int groups, int Hout, int Wout) {
    const int cinpg = Cin / groups;
    const int coutpg = Cout / groups;
    const std::size_t xplane = static_cast<std::size_t>(H) * W;
    const std::size_t yplane = static_cast<std::size_t>(Hout) * Wout;
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < Cout; ++oc) {
            T* yc = y + (static_cast<std::size_t>(n) * Cout + oc) * yplane;
            const T bias = b ? b[oc] : T(0);
            std::fill(yc, yc + yplane, bias);
            const int g = oc / coutpg;
            for (int icg = 0; icg < cinpg; ++icg) {
                const int ic = g * cinpg + icg;
                const T* xc = x + (static_cast<std::size_t>(n) * Cin + ic) * xplane;
                const T* wrow = w + ((static_cast<std::size_t>(oc) * cinpg + icg) * kh) * kw;
                for (int r = 0; r < kh; ++r) {
                    for (int s = 0; s < kw; ++s) {
                        const T wv = wrow[r * kw + s];
                        for (int oh = 0; oh < Hout; ++oh) {
                            const int ih = oh * stride - pad + r;
                            if (ih < 0 || ih >= H) continue;
                            // valid ow range: 0 <= ow*stride - pad + s < W
                            int lo = 0, hi = Wout;
                            if (stride == 1) {
                                lo = std::max(0, pad - s);
                                hi = std::min(Wout, W + pad - s);
                            } else {
                                while (lo < Wout && lo * stride - pad + s < 0) ++lo;
                                while (hi > lo && (hi - 1) * stride - pad + s >= W) --hi;
                            }
                            T* yrow = yc + static_cast<std::size_t>(oh) * Wout;
                            const T* xrow = xc + static_cast<std::size_t>(ih) * W - pad + s;
                            if (stride == 1) {
                                for (int ow = lo; ow < hi; ++ow) yrow[ow] += wv * xrow[ow];
                            } else {
                                for (int ow = lo; ow < hi; ++ow) yrow[ow] += wv * xrow[static_cast<std::size_t>(ow) * stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias,
                 int stride = 1, int padding = 0, int groups = 1) {
    if (x.rank() != 4 || weight.rank() != 4)
        shape_error("conv2d: input " + shape_str(x.shape()) + ", weight " + shape_str(weight.shape()) + " (both must be rank 4)");
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (stride < 1 || padding < 0 || groups < 1)
        throw std::invalid_argument("conv2d: stride must be >=1, padding >=0, groups >=1");
    if (Cin % groups != 0 || Cout % groups != 0)
        shape_error("conv2d: channels (Cin=" + std::to_string(Cin) + ", Cout=" + std::to_string(Cout) +
                    ") not divisible by groups=" + std::to_string(groups));
    if (weight.dim(1) != Cin / groups)
        shape_error("conv2d: weight expects " + std::to_string(weight.dim(1) * groups) +
                    " input channels (groups=" + std::to_string(groups) + "), input has " + std::to_string(Cin));
    if (bias && (bias->rank() != 1 || bias->dim(0) != Cout))
        shape_error("conv2d: bias must be [Cout=" + std::to_string(Cout) + "]");
    const int Hout = (H + 2 * padding - kh) / stride + 1;
    const int Wout = (W + 2 * padding - kw) / stride + 1;
    if (Hout <= 0 || Wout <= 0)
        shape_error("conv2d: empty output for input " + shape_str(x.shape()) + ", kernel " + shape_str(weight.shape()));

    auto xn = x.node(), wn = weight.node();
    std::shared_ptr<detail::Node<T>> bn = bias ? bias->node() : nullptr;
    std::vector<std::shared_ptr<detail::Node<T>>> parents = {xn, wn};
    if (bn) parents.push_back(bn);

    auto out = detail::make_result<T>({N, Cout, Hout, Wout}, std::move(parents),
        [=](detail::Node<T>& y) {
            const int cinpg = Cin / groups;
            const int coutpg = Cout / groups;
            const std::size_t xplane = static_cast<std::size_t>(H) * W;
            const std::size_t yplane = static_cast<std::size_t>(Hout) * Wout;
            const T* gy = y.grad.data();
            if (bn && bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int oc = 0; oc < Cout; ++oc) {
                        const T* row = gy + (static_cast<std::size_t>(n) * Cout + oc) * yplane;
                        T acc = T(0);
                        for (std::size_t i = 0; i < yplane; ++i) acc += row[i];
                        gb[oc] += acc;
                    }
            }
            if (wn->requires_grad) {
                auto& gw = wn->ensure_grad();
                const T* xd = xn->data.data();
                for (int oc = 0; oc < Cout; ++oc) {
                    const int g = oc / coutpg;
                    for (int icg = 0; icg < cinpg; ++icg) {
                        const int ic = g * cinpg + icg;
                        for (int r = 0; r < kh; ++r) {
                            for (int s = 0; s < kw; ++s) {
                                T acc = T(0);
                                for (int n = 0; n < N; ++n) {
                                    const T* xc = xd + (static_cast<std::size_t>(n) * Cin + ic) * xplane;
                                    const T* yc = gy + (static_cast<std::size_t>(n) * Cout + oc) * yplane;
                                    for (int oh = 0; oh < Hout; ++oh) {
                                        const int ih = oh * stride - padding + r;
                                        if (ih < 0 || ih >= H) continue;
                                        int lo = 0, hi = Wout;
                                        if (stride == 1) {
                                            lo = std::max(0, padding - s);
                                            hi = std::min(Wout, W + padding - s);
                                        } else {
                                            while (lo < Wout && lo * stride - padding + s < 0) ++lo;
                                            while (hi > lo && (hi - 1) * stride - padding + s >= W) --hi;
                                        }
                                        const T* xrow = xc + static_cast<std::size_t>(ih) * W - padding + s;
                                        const T* yrow = yc + static_cast<std::size_t>(oh) * Wout;
                                        if (stride == 1) {
                                            for (int ow = lo; ow < hi; ++ow) acc += xrow[ow] * yrow[ow];
                                        } else {
                                            for (int ow = lo; ow < hi; ++ow) acc += xrow[static_cast<std::size_t>(ow) * stride] * yrow[ow];
                                        }
                                    }
                                }
                                gw[((static_cast<std::size_t>(oc) * cinpg + icg) * kh + r) * kw + s] += acc;
                            }
                        }
                    }
                }
            }
            if (xn->requires_grad) {
                auto& gx = xn->ensure_grad();
                const T* wd = wn->data.data();
                for (int n = 0; n < N; ++n) {
                    for (int ic = 0; ic < Cin; ++ic) {
                        const int g = ic / cinpg;
                        const int icg = ic - g * cinpg;
                        T* gxc = gx.data() + (static_cast<std::size_t>(n) * Cin + ic) * xplane;
                        for (int ocg = 0; ocg < coutpg; ++ocg) {
                            const int oc = g * coutpg + ocg;
                            const T* yc = gy + (static_cast<std::size_t>(n) * Cout + oc) * yplane;
                            const T* wrow = wd + ((static_cast<std::size_t>(oc) * cinpg + icg) * kh) * kw;
                            for (int r = 0; r < kh; ++r) {
                                for (int s = 0; s < kw; ++s) {
                                    const T wv = wrow[r * kw + s];
                                    for (int oh = 0; oh < Hout; ++oh) {
                                        const int ih = oh * stride - padding + r;
                                        if (ih < 0 || ih >= H) continue;
                                        int lo = 0, hi = Wout;
                                        if (stride == 1) {
                                            lo = std::max(0, padding - s);
                                            hi = std::min(Wout, W + padding - s);
                                        } else {
                                            while (lo < Wout && lo * stride - padding + s < 0) ++lo;
                                            while (hi > lo && (hi - 1) * stride - padding + s >= W) --hi;
                                        }
                                        T* gxrow = gxc + static_cast<std::size_t>(ih) * W - padding + s;
                                        const T* yrow = yc + static_cast<std::size_t>(oh) * Wout;
                                        if (stride == 1) {
                                            for (int ow = lo; ow < hi; ++ow) gxrow[ow] += wv * yrow[ow];
                                        } else {
                                            for (int ow = lo; ow < hi; ++ow) gxrow[static_cast<std::size_t>(ow) * stride] += wv * yrow[ow];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    detail::conv2d_forward_kernel(x.data(), weight.data(), bias ? bias->data() : nullptr, out.data(),
                                  N, Cin, H, W, Cout, kh, kw, stride, padding, groups, Hout, Wout);
    return out;
}

// ---------------------------------------------------------------------------
// Batched matrix multiply. a: [...,M,K], b: [...,K,P]; leading extents must
// match elementwise.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank())
        shape_error("matmul: ranks " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int r = a.rank();
    const int M = a.dim(r - 2), K = a.dim(r - 1);
    const int Kb = b.dim(r - 2), P = b.dim(r - 1);
    if (K != Kb) shape_error("matmul: inner extents " + std::to_string(K) + " vs " + std::to_string(Kb));
    std::int64_t batch = 1;
    Shape oshape;
    for (int i = 0; i < r - 2; ++i) {
        if (a.dim(i) != b.dim(i)) shape_error("matmul: batch extents " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        batch *= a.dim(i);
        oshape.push_back(a.dim(i));
    }
    oshape.push_back(M);
    oshape.push_back(P);
    auto an = a.node(), bn = b.node();
    auto out = detail::make_result<T>(oshape, {an, bn}, [=](detail::Node<T>& y) {
        const std::size_t as = static_cast<std::size_t>(M) * K;
        const std::size_t bs = static_cast<std::size_t>(K) * P;
        const std::size_t ys = static_cast<std::size_t>(M) * P;
        for (std::int64_t t = 0; t < batch; ++t) {
            const T* ad = an->data.data() + t * as;
            const T* bd = bn->data.data() + t * bs;
            const T* gy = y.grad.data() + t * ys;
            if (an->requires_grad) {
                T* ga = an->ensure_grad().data() + t * as;
                for (int m = 0; m < M; ++m)
                    for (int k = 0; k < K; ++k) {
                        T acc = T(0);
                        const T* br = bd + static_cast<std::size_t>(k) * P;
                        const T* yr = gy + static_cast<std::size_t>(m) * P;
                        for (int p = 0; p < P; ++p) acc += yr[p] * br[p];
                        ga[static_cast<std::size_t>(m) * K + k] += acc;
                    }
            }
            if (bn->requires_grad) {
                T* gb = bn->ensure_grad().data() + t * bs;
                for (int m = 0; m < M; ++m)
                    for (int k = 0; k < K; ++k) {
                        const T av = ad[static_cast<std::size_t>(m) * K + k];
                        T* gr = gb + static_cast<std::size_t>(k) * P;
                        const T* yr = gy + static_cast<std::size_t>(m) * P;
                        for (int p = 0; p < P; ++p) gr[p] += av * yr[p];
                    }
            }
        }
    });
    const std::size_t as = static_cast<std::size_t>(M) * K;
    const std::size_t bs = static_cast<std::size_t>(K) * P;
    const std::size_t ys = static_cast<std::size_t>(M) * P;
    for (std::int64_t t = 0; t < batch; ++t) {
        const T* ad = a.data() + t * as;
        const T* bd = b.data() + t * bs;
        T* yd = out.data() + t * ys;
        for (int m = 0; m < M; ++m) {
            T* yr = yd + static_cast<std::size_t>(m) * P;
            for (int k = 0; k < K; ++k) {
                const T av = ad[static_cast<std::size_t>(m) * K + k];
                const T* br = bd + static_cast<std::size_t>(k) * P;
                for (int p = 0; p < P; ++p) yr[p] += av * br[p];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pixel shuffle: [N, C*r^2, H, W] -> [N, C, rH, rW] with
// out(n, c, r*h+i, r*w+j) = in(n, c*r^2 + i*r + j, h, w).

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
    if (x.rank() != 4) shape_error("pixel_shuffle: expected rank-4, got " + shape_str(x.shape()));
    const int N = x.dim(0), C_in = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (r < 1 || C_in % (r * r) != 0)
        shape_error("pixel_shuffle: channels " + std::to_string(C_in) + " not divisible by r^2=" + std::to_string(r * r));
    const int C = C_in / (r * r);
    auto xn = x.node();
    auto out = detail::make_result<T>({N, C, r * H, r * W}, {xn}, [=](detail::Node<T>& y) {
        auto& gx = xn->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j) {
                        const int ci = c * r * r + i * r + j;
                        for (int h = 0; h < H; ++h) {
                            const std::size_t src = (((static_cast<std::size_t>(n) * C + c) * (r * H) + (r * h + i)) * (r * W)) + j;
                            const std::size_t dst = ((static_cast<std::size_t>(n) * C_in + ci) * H + h) * W;
                            for (int w = 0; w < W; ++w) gx[dst + w] += y.grad[src + static_cast<std::size_t>(w) * r];
                        }
                    }
    });
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < r; ++j) {
                    const int ci = c * r * r + i * r + j;
                    for (int h = 0; h < H; ++h) {
                        const std::size_t dst = (((static_cast<std::size_t>(n) * C + c) * (r * H) + (r * h + i)) * (r * W)) + j;
                        const std::size_t src = ((static_cast<std::size_t>(n) * C_in + ci) * H + h) * W;
                        for (int w = 0; w < W; ++w) out[dst + static_cast<std::size_t>(w) * r] = x[src + w];
                    }
                }
    return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
    if (x.rank() != 4) shape_error("pixel_unshuffle: expected rank-4, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), Hr = x.dim(2), Wr = x.dim(3);
    if (r < 1 || Hr % r != 0 || Wr % r != 0)
        shape_error("pixel_unshuffle: spatial extents not divisible by r=" + std::to_string(r));
    const int H = Hr / r, W = Wr / r;
    auto xn = x.node();
    auto out = detail::make_result<T>({N, C * r * r, H, W}, {xn}, [=](detail::Node<T>& y) {
        auto& gx = xn->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j) {
                        const int co = c * r * r + i * r + j;
                        for (int h = 0; h < H; ++h) {
                            const std::size_t src = ((static_cast<std::size_t>(n) * (C * r * r) + co) * H + h) * W;
                            const std::size_t dst = ((static_cast<std::size_t>(n) * C + c) * Hr + (r * h + i)) * Wr + j;
                            for (int w = 0; w < W; ++w) gx[dst + static_cast<std::size_t>(w) * r] += y.grad[src + w];
                        }
                    }
    });
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < r; ++j) {
                    const int co = c * r * r + i * r + j;
                    for (int h = 0; h < H; ++h) {
                        const std::size_t dst = ((static_cast<std::size_t>(n) * (C * r * r) + co) * H + h) * W;
                        const std::size_t src = ((static_cast<std::size_t>(n) * C + c) * Hr + (r * h + i)) * Wr + j;
                        for (int w = 0; w < W; ++w) out[dst + w] = x[src + static_cast<std::size_t>(w) * r];
                    }
                }
    return out;
}

// ---------------------------------------------------------------------------
// Layout ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != static_cast<std::int64_t>(x.size()))
        shape_error("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
    auto xn = x.node();
    auto out = detail::make_result<T>(std::move(shape), {xn}, [xn](detail::Node<T>& y) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += y.grad[i];
    });
    std::copy(x.data(), x.data() + x.size(), out.data());
    return out;
}

// Swap the last two axes (per batch element for rank 3/4).
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
    if (x.rank() < 2) shape_error("transpose_last2: rank must be >=2");
    const int r = x.rank();
    const int M = x.dim(r - 2), P = x.dim(r - 1);
    std::int64_t batch = 1;
    Shape oshape(x.shape());
    std::swap(oshape[static_cast<std::size_t>(r - 2)], oshape[static_cast<std::size_t>(r - 1)]);
    for (int i = 0; i < r - 2; ++i) batch *= x.dim(i);
    auto xn = x.node();
    auto out = detail::make_result<T>(oshape, {xn}, [=](detail::Node<T>& y) {
        auto& g = xn->ensure_grad();
        const std::size_t stride = static_cast<std::size_t>(M) * P;
        for (std::int64_t t = 0; t < batch; ++t) {
            T* gx = g.data() + t * stride;
            const T* gy = y.grad.data() + t * stride;
            for (int m = 0; m < M; ++m)
                for (int p = 0; p < P; ++p) gx[static_cast<std::size_t>(m) * P + p] += gy[static_cast<std::size_t>(p) * M + m];
        }
    });
    const std::size_t stride = static_cast<std::size_t>(M) * P;
    for (std::int64_t t = 0; t < batch; ++t) {
        const T* xd = x.data() + t * stride;
        T* yd = out.data() + t * stride;
        for (int m = 0; m < M; ++m)
            for (int p = 0; p < P; ++p) yd[static_cast<std::size_t>(p) * M + m] = xd[static_cast<std::size_t>(m) * P + p];
    }
    return out;
}

// Concatenate two rank-4 tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        shape_error("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    auto an = a.node(), bn = b.node();
    auto out = detail::make_result<T>({N, Ca + Cb, H, W}, {an, bn}, [=](detail::Node<T>& y) {
        for (int n = 0; n < N; ++n) {
            const T* gy = y.grad.data() + static_cast<std::size_t>(n) * (Ca + Cb) * plane;
            if (an->requires_grad) {
                T* ga = an->ensure_grad().data() + static_cast<std::size_t>(n) * Ca * plane;
                for (std::size_t i = 0; i < static_cast<std::size_t>(Ca) * plane; ++i) ga[i] += gy[i];
            }
            if (bn->requires_grad) {
                T* gb = bn->ensure_grad().data() + static_cast<std::size_t>(n) * Cb * plane;
                for (std::size_t i = 0; i < static_cast<std::size_t>(Cb) * plane; ++i) gb[i] += gy[static_cast<std::size_t>(Ca) * plane + i];
            }
        }
    });
    for (int n = 0; n < N; ++n) {
        T* yd = out.data() + static_cast<std::size_t>(n) * (Ca + Cb) * plane;
        std::copy(a.data() + static_cast<std::size_t>(n) * Ca * plane,
                  a.data() + static_cast<std::size_t>(n + 1) * Ca * plane, yd);
        std::copy(b.data() + static_cast<std::size_t>(n) * Cb * plane,
                  b.data() + static_cast<std::size_t>(n + 1) * Cb * plane, yd + static_cast<std::size_t>(Ca) * plane);
    }
    return out;
}

// y = x / alpha[h], x: [N, heads, M, P], alpha: [heads]. Learnable
// temperature for the transposed-attention logits.
template <typename T>
Tensor<T> div_head_scale(const Tensor<T>& x, const Tensor<T>& alpha) {
    if (x.rank() != 4 || alpha.rank() != 1 || alpha.dim(0) != x.dim(1))
        shape_error("div_head_scale: x " + shape_str(x.shape()) + ", alpha " + shape_str(alpha.shape()));
    const int N = x.dim(0), Hh = x.dim(1);
    const std::size_t inner = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    auto xn = x.node(), an = alpha.node();
    auto out = detail::make_result<T>(x.shape(), {xn, an}, [=](detail::Node<T>& y) {
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < Hh; ++h) {
                const std::size_t base = (static_cast<std::size_t>(n) * Hh + h) * inner;
                const T inv = T(1) / an->data[h];
                if (xn->requires_grad) {
                    auto& gx = xn->ensure_grad();
                    for (std::size_t i = 0; i < inner; ++i) gx[base + i] += y.grad[base + i] * inv;
                }
                if (an->requires_grad) {
                    auto& ga = an->ensure_grad();
                    T acc = T(0);
                    for (std::size_t i = 0; i < inner; ++i) acc += y.grad[base + i] * xn->data[base + i];
                    ga[h] -= acc * inv * inv;
                }
            }
    });
    for (int n = 0; n < N; ++n)
        for (int h = 0; h < Hh; ++h) {
            const std::size_t base = (static_cast<std::size_t>(n) * Hh + h) * inner;
            const T inv = T(1) / alpha[static_cast<std::size_t>(h)];
            for (std::size_t i = 0; i < inner; ++i) out[base + i] = x[base + i] * inv;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    auto xn = x.node();
    auto out = detail::make_result<T>({1}, {xn}, [xn](detail::Node<T>& y) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += y.grad[0];
    });
    T acc = T(0);
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
    out[0] = acc;
    return out;
}

// Mean absolute difference; the L1 training objective.
template <typename T>
Tensor<T> mean_abs_diff(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        shape_error("mean_abs_diff: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    auto pn = pred.node(), tn = target.node();
    const T inv_n = T(1) / static_cast<T>(pred.size());
    auto out = detail::make_result<T>({1}, {pn, tn}, [=](detail::Node<T>& y) {
        const T g0 = y.grad[0] * inv_n;
        for (std::size_t i = 0; i < pn->data.size(); ++i) {
            const T d = pn->data[i] - tn->data[i];
            const T s = d > T(0) ? g0 : (d < T(0) ? -g0 : T(0));
            if (pn->requires_grad) pn->ensure_grad()[i] += s;
            if (tn->requires_grad) tn->ensure_grad()[i] -= s;
        }
    });
    T acc = T(0);
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
    out[0] = acc * inv_n;
    return out;
}

// ---------------------------------------------------------------------------
// Reverse pass. Replays the recorded graph in reverse topological order;
// each node's rule fires exactly once, after all of its consumers.

template <typename T>
void backward(Tensor<T>& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be a scalar tensor");
    using NodeT = detail::Node<T>;
    std::vector<NodeT*> order;
    std::unordered_set<NodeT*> seen;
    // iterative post-order DFS
    std::vector<std::pair<NodeT*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            NodeT* p = node->parents[idx++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

}  // namespace scet
