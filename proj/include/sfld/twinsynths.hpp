// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sfld/datasets.hpp"
#include "sfld/error.hpp"
#include "sfld/image.hpp"
#include "sfld/image_io.hpp"
#include "sfld/rng.hpp"

namespace sfld {

// ============================================================ DDIM

inline std::string make_prompt(const std::string& class_name) { return "a photo of " + class_name; }

/// alphas_bar[i] is abar at inference step i+1; abar at step 0 is 1 (clean).
struct DdimSchedule {
    std::vector<double> alphas_bar;
    std::string prompt;

    int steps() const noexcept { return static_cast<int>(alphas_bar.size()); }

    /// abar_t for t in [0, T], with abar_0 = 1.
    double abar(int t) const { return t == 0 ? 1.0 : alphas_bar[static_cast<std::size_t>(t - 1)]; }

    void validate() const {
        for (std::size_t i = 0; i < alphas_bar.size(); ++i) {
            const double a = alphas_bar[i];
            if (!(a > 0.0 && a < 1.0)) fail(Errc::InvalidConfig, "alphas_bar must lie in (0,1)");
            if (i > 0 && !(a < alphas_bar[i - 1])) fail(Errc::InvalidConfig, "alphas_bar must be strictly decreasing");
        }
    }

    /// T evenly spaced steps of the "scaled linear" beta schedule used by
    /// latent diffusion (beta in [0.00085, 0.012] over 1000 training steps).
    static DdimSchedule scaled_linear(int steps, std::string prompt = {}, int train_steps = 1000,
                                      double beta_start = 0.00085, double beta_end = 0.012) {
        if (steps < 0 || steps > train_steps) fail(Errc::InvalidConfig, "bad DDIM step count");
        std::vector<double> cumprod(static_cast<std::size_t>(train_steps));
        double acc = 1.0;
        const double s0 = std::sqrt(beta_start), s1 = std::sqrt(beta_end);
        for (int i = 0; i < train_steps; ++i) {
            const double root = s0 + (s1 - s0) * i / (train_steps - 1);
            acc *= 1.0 - root * root;
            cumprod[static_cast<std::size_t>(i)] = acc;
        }
        DdimSchedule s;
        s.prompt = std::move(prompt);
        for (int i = 1; i <= steps; ++i) {
            const int t = static_cast<int>(static_cast<long>(i) * train_steps / steps) - 1;
            s.alphas_bar.push_back(cumprod[static_cast<std::size_t>(t)]);
        }
        s.validate();
        return s;
    }
};

/// A real-valued H x W x 3 array; DDIM runs on pixel values mapped to [-1,1].
struct Latent {
    int height = 0;
    int width = 0;
    std::vector<double> values;
};

inline Latent to_latent(const Image& img) {
    Latent l{img.height(), img.width(), std::vector<double>(img.pixels().size())};
    for (std::size_t i = 0; i < l.values.size(); ++i) l.values[i] = 2.0 * img.pixels()[i] - 1.0;
    return l;
}

inline Image from_latent(const Latent& l) {
    std::vector<float> px(l.values.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(std::clamp((l.values[i] + 1.0) / 2.0, 0.0, 1.0));
    return Image(l.height, l.width, std::move(px));
}

/// eps_hat(x, step, prompt); deterministic, same shape as x.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> predict(const std::vector<double>& x, int step, const std::string& prompt) const = 0;
};

class ZeroNoisePredictor final : public NoisePredictor {
public:
    std::string name() const override { return "zero"; }
    std::vector<double> predict(const std::vector<double>& x, int, const std::string&) const override {
        return std::vector<double>(x.size(), 0.0);
    }
};

class LinearNoisePredictor final : public NoisePredictor {
public:
    explicit LinearNoisePredictor(double c) : c_(c) {}
    std::string name() const override { return "linear"; }
    std::vector<double> predict(const std::vector<double>& x, int, const std::string&) const override {
        std::vector<double> out(x);
        for (auto& v : out) v *= c_;
        return out;
    }

private:
    double c_;
};

/// Tiny trainable model: per-step affine eps_hat = a_t x + b_t, fitted by
/// least squares on noised samples x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps
/// of scalar training data.
class AffineNoisePredictor final : public NoisePredictor {
public:
    static AffineNoisePredictor fit(const std::vector<double>& data, const DdimSchedule& schedule, int draws_per_step,
                                    Rng& rng) {
        if (data.empty()) fail(Errc::EmptyBatch, "no training data for the noise predictor");
        AffineNoisePredictor p;
        for (int t = 1; t <= schedule.steps(); ++t) {
            const double a = schedule.abar(t);
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            const int n = draws_per_step;
            for (int i = 0; i < n; ++i) {
                const double x0 = data[rng.below(data.size())];
                const double eps = rng.normal();
                const double xt = std::sqrt(a) * x0 + std::sqrt(1 - a) * eps;
                sx += xt;
                sy += eps;
                sxx += xt * xt;
                sxy += xt * eps;
            }
            const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            p.coef_.push_back({slope, (sy - slope * sx) / n});
        }
        return p;
    }

    std::string name() const override { return "affine-toy"; }
    std::vector<double> predict(const std::vector<double>& x, int step, const std::string&) const override {
        const auto [a, b] = coef_.at(static_cast<std::size_t>(step - 1));
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b;
        return out;
    }

private:
    std::vector<std::pair<double, double>> coef_;
};

namespace detail {

inline std::vector<double> checked_predict(const NoisePredictor& p, const std::vector<double>& x, int step,
                                           const std::string& prompt) {
    auto eps = p.predict(x, step, prompt);
    if (eps.size() != x.size()) fail(Errc::ShapeMismatch, p.name() + " returned a differently shaped prediction");
    return eps;
}

}  // namespace detail

/// Deterministic DDIM inversion (eta = 0), x_{t-1} -> x_t for t = 1..T:
///   x0_hat = (x_{t-1} - sqrt(1-abar_{t-1}) eps) / sqrt(abar_{t-1})
///   x_t    = sqrt(abar_t) x0_hat + sqrt(1-abar_t) eps,   eps = eps_hat(x_{t-1}, t)
inline std::vector<double> ddim_forward(std::vector<double> x, const DdimSchedule& schedule,
                                        const NoisePredictor& predictor) {
    for (int t = 1; t <= schedule.steps(); ++t) {
        const auto eps = detail::checked_predict(predictor, x, t, schedule.prompt);
        const double a_prev = schedule.abar(t - 1), a = schedule.abar(t);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double x0 = (x[i] - std::sqrt(1 - a_prev) * eps[i]) / std::sqrt(a_prev);
            x[i] = std::sqrt(a) * x0 + std::sqrt(1 - a) * eps[i];
        }
    }
    return x;
}

/// Deterministic DDIM sampling (eta = 0) from x_T back to x_0.
inline std::vector<double> ddim_reverse(std::vector<double> x, const DdimSchedule& schedule,
                                        const NoisePredictor& predictor) {
    for (int t = schedule.steps(); t >= 1; --t) {
        const auto eps = detail::checked_predict(predictor, x, t, schedule.prompt);
        const double a = schedule.abar(t), a_prev = schedule.abar(t - 1);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double x0 = (x[i] - std::sqrt(1 - a) * eps[i]) / std::sqrt(a);
            x[i] = std::sqrt(a_prev) * x0 + std::sqrt(1 - a_prev) * eps[i];
        }
    }
    return x;
}

inline Latent ddim_forward(const Image& image, const DdimSchedule& schedule, const NoisePredictor& predictor) {
    auto l = to_latent(image);
    l.values = ddim_forward(std::move(l.values), schedule, predictor);
    return l;
}

inline Image ddim_reverse(const Latent& latent, const DdimSchedule& schedule, const NoisePredictor& predictor) {
    return from_latent({latent.height, latent.width, ddim_reverse(latent.values, schedule, predictor)});
}

// ============================================================ GAN twin

/// DCGAN-style generator: z -> ConvT(k4,s1,p0) to 4x4 -> [ConvT(k4,s2,p1),
/// BN, ReLU] per width -> ConvT(k4,s2,p1) to 3 channels -> tanh.
/// target_size must equal 4 * 2^widths.size().
struct GanFitConfig {
    int latent_dim = 100;
    std::vector<int> widths{256, 128, 64, 32};
    int steps = 2000;
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool linear_decay = true;  // lr scaled by (1 - step/steps)
    std::uint64_t seed = 0;
    int target_size = 64;
    bool batchnorm = true;
    bool tanh_output = true;
    double psnr_gate = 30.0;

    void validate() const {
        int size = 4;
        for (std::size_t i = 0; i < widths.size(); ++i) size *= 2;
        if (size != target_size) {
            fail(Errc::InvalidConfig, "generator produces " + std::to_string(size) + "px, target is " +
                                          std::to_string(target_size));
        }
        if (latent_dim < 1 || steps < 1 || !(learning_rate > 0)) fail(Errc::InvalidConfig, "bad GAN fit config");
        for (int w : widths) {
            if (w < 1) fail(Errc::InvalidConfig, "layer widths must be positive");
        }
    }
};

struct GanFitResult {
    Image fake;
    std::vector<double> loss_trace;  // MSE on the [-1,1] scale, one per step (before the update)
    double final_mse = 0.0;          // after the last update
};

namespace detail {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Transposed convolution, kernel 4, activations stored channels x (H*W).
struct ConvTranspose {
    int cin, cout, stride, pad, hin, win, hout, wout;
    static constexpr int k = 4;
    Mat weight;  // cin x (cout*k*k)
    Mat grad;

    ConvTranspose(int cin_, int cout_, int stride_, int pad_, int hin_, Rng& rng)
        : cin(cin_), cout(cout_), stride(stride_), pad(pad_), hin(hin_), win(hin_),
          hout((hin_ - 1) * stride_ - 2 * pad_ + k), wout((hin_ - 1) * stride_ - 2 * pad_ + k),
          weight(cin_, cout_ * k * k), grad(Mat::Zero(cin_, cout_ * k * k)) {
        for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = static_cast<float>(0.02 * rng.normal());
    }

    template <typename Fn>
    void for_each_tap(Fn&& fn) const {
        for (int co = 0; co < cout; ++co)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const int row = (co * k + ky) * k + kx;
                    for (int iy = 0; iy < hin; ++iy) {
                        const int oy = iy * stride - pad + ky;
                        if (oy < 0 || oy >= hout) continue;
                        for (int ix = 0; ix < win; ++ix) {
                            const int ox = ix * stride - pad + kx;
                            if (ox < 0 || ox >= wout) continue;
                            fn(row, iy * win + ix, co, oy * wout + ox);
                        }
                    }
                }
    }

    Mat forward(const Mat& x) const {
        const Mat cols = weight.transpose() * x;  // (cout*k*k) x (hin*win)
        Mat y = Mat::Zero(cout, hout * wout);
        for_each_tap([&](int row, int in_px, int co, int out_px) { y(co, out_px) += cols(row, in_px); });
        return y;
    }

    /// Accumulates dW into grad and returns dX.
    Mat backward(const Mat& x, const Mat& dy) {
        Mat dcols = Mat::Zero(cout * k * k, hin * win);
        for_each_tap([&](int row, int in_px, int co, int out_px) { dcols(row, in_px) = dy(co, out_px); });
        grad.noalias() += x * dcols.transpose();
        return weight * dcols;
    }
};

struct BatchNorm {
    Eigen::VectorXf gamma, beta, ggamma, gbeta;
    static constexpr float eps = 1e-5f;
    // cached from forward
    Mat xhat;
    Eigen::VectorXf inv_std;

    BatchNorm(int channels, Rng& rng) : gamma(channels), beta(Eigen::VectorXf::Zero(channels)),
        ggamma(Eigen::VectorXf::Zero(channels)), gbeta(Eigen::VectorXf::Zero(channels)) {
        for (int c = 0; c < channels; ++c) gamma(c) = static_cast<float>(1.0 + 0.02 * rng.normal());
    }

    Mat forward(const Mat& x) {
        const auto n = static_cast<float>(x.cols());
        xhat.resize(x.rows(), x.cols());
        inv_std.resize(x.rows());
        Mat y(x.rows(), x.cols());
        for (Eigen::Index c = 0; c < x.rows(); ++c) {
            const float mean = x.row(c).sum() / n;
            const float var = (x.row(c).array() - mean).square().sum() / n;
            inv_std(c) = 1.0f / std::sqrt(var + eps);
            xhat.row(c) = (x.row(c).array() - mean) * inv_std(c);
            y.row(c) = xhat.row(c).array() * gamma(c) + beta(c);
        }
        return y;
    }

    Mat backward(const Mat& dy) {
        const auto n = static_cast<float>(dy.cols());
        Mat dx(dy.rows(), dy.cols());
        for (Eigen::Index c = 0; c < dy.rows(); ++c) {
            const float sum_dy = dy.row(c).sum();
            const float sum_dy_xhat = dy.row(c).cwiseProduct(xhat.row(c)).sum();
            ggamma(c) += sum_dy_xhat;
            gbeta(c) += sum_dy;
            dx.row(c) = (gamma(c) * inv_std(c) / n) *
                        (n * dy.row(c).array() - sum_dy - xhat.row(c).array() * sum_dy_xhat);
        }
        return dx;
    }
};

class Adam {
public:
    Adam(double lr, double b1, double b2) : lr_(lr), b1_(b1), b2_(b2) {}

    void set_lr(double lr) { lr_ = lr; }

    void step(float* param, const float* grad, std::size_t n, std::size_t slot) {
        if (slot >= m_.size()) {
            m_.resize(slot + 1);
            v_.resize(slot + 1);
        }
        if (m_[slot].size() != n) {
            m_[slot].assign(n, 0.0f);
            v_[slot].assign(n, 0.0f);
        }
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        const float lr_t = static_cast<float>(lr_ * std::sqrt(c2) / c1);
        auto& m = m_[slot];
        auto& v = v_[slot];
        const auto b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1 - b1) * grad[i];
            v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
            param[i] -= lr_t * m[i] / (std::sqrt(v[i]) + 1e-8f);
        }
    }

    void tick() { ++t_; }

private:
    double lr_, b1_, b2_;
    long t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

class Generator {
public:
    explicit Generator(const GanFitConfig& cfg, Rng& rng) : cfg_(cfg) {
        int hin = 1, cin = cfg.latent_dim;
        std::vector<int> outs = cfg.widths;
        outs.push_back(3);
        for (std::size_t i = 0; i < outs.size(); ++i) {
            const bool first = i == 0;
            convs_.emplace_back(cin, outs[i], first ? 1 : 2, first ? 0 : 1, hin, rng);
            hin = convs_.back().hout;
            cin = outs[i];
            if (i + 1 < outs.size() && cfg.batchnorm) bns_.emplace_back(outs[i], rng);
        }
        z_.resize(cfg.latent_dim, 1);
        for (int i = 0; i < cfg.latent_dim; ++i) z_(i, 0) = static_cast<float>(rng.normal());
    }

    /// Output in channels x (H*W) layout.
    Mat forward() {
        inputs_.clear();
        pre_act_.clear();
        Mat x = z_;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            inputs_.push_back(x);
            x = convs_[i].forward(x);
            const bool last = i + 1 == convs_.size();
            if (!last) {
                if (cfg_.batchnorm) x = bns_[i].forward(x);
                pre_act_.push_back(x);
                x = x.cwiseMax(0.0f);
            } else if (cfg_.tanh_output) {
                x = x.array().tanh().matrix();
            }
        }
        output_ = x;
        return x;
    }

    void backward(Mat dout) {
        for (auto& c : convs_) c.grad.setZero();
        for (auto& b : bns_) {
            b.ggamma.setZero();
            b.gbeta.setZero();
        }
        if (cfg_.tanh_output) dout = dout.cwiseProduct((1.0f - output_.array().square()).matrix());
        for (std::size_t i = convs_.size(); i-- > 0;) {
            const bool last = i + 1 == convs_.size();
            if (!last) {
                dout = dout.cwiseProduct((pre_act_[i].array() > 0.0f).cast<float>().matrix());
                if (cfg_.batchnorm) dout = bns_[i].backward(dout);
            }
            dout = convs_[i].backward(inputs_[i], dout);
        }
    }

    void update(Adam& opt) {
        opt.tick();
        std::size_t slot = 0;
        for (auto& c : convs_) opt.step(c.weight.data(), c.grad.data(), c.weight.size(), slot++);
        for (auto& b : bns_) {
            opt.step(b.gamma.data(), b.ggamma.data(), b.gamma.size(), slot++);
            opt.step(b.beta.data(), b.gbeta.data(), b.beta.size(), slot++);
        }
    }

    int output_size() const { return convs_.back().hout; }

private:
    GanFitConfig cfg_;
    std::vector<ConvTranspose> convs_;
    std::vector<BatchNorm> bns_;
    Mat z_;
    std::vector<Mat> inputs_, pre_act_;
    Mat output_;
};

inline Mat image_to_chw(const Image& img) {
    const int hw = img.height() * img.width();
    Mat m(3, hw);
    for (int p = 0; p < hw; ++p)
        for (int c = 0; c < 3; ++c) m(c, p) = 2.0f * img.pixels()[static_cast<std::size_t>(p) * 3 + c] - 1.0f;
    return m;
}

inline Image chw_to_image(const Mat& m, int size) {
    std::vector<float> px(static_cast<std::size_t>(size) * size * 3);
    for (int p = 0; p < size * size; ++p)
        for (int c = 0; c < 3; ++c) px[static_cast<std::size_t>(p) * 3 + c] = std::clamp((m(c, p) + 1.0f) / 2.0f, 0.0f, 1.0f);
    return Image(size, size, std::move(px));
}

}  // namespace detail

/// Overfits a freshly initialized generator to one image with a fixed latent
/// by gradient descent on MSE(G(z), real). Throws DivergedFit when the final
/// loss exceeds the initial one.
inline GanFitResult fit_gan_twin(const Image& real, const GanFitConfig& cfg) {
    cfg.validate();
    if (real.height() != cfg.target_size || real.width() != cfg.target_size) {
        fail(Errc::SizeMismatch, "real image must be " + std::to_string(cfg.target_size) + "px square");
    }
    Rng rng(cfg.seed);
    detail::Generator gen(cfg, rng);
    detail::Adam opt(cfg.learning_rate, cfg.beta1, cfg.beta2);
    const detail::Mat target = detail::image_to_chw(real);
    const auto n = static_cast<float>(target.size());

    GanFitResult res;
    res.loss_trace.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        const detail::Mat out = gen.forward();
        const detail::Mat diff = out - target;
        res.loss_trace.push_back(static_cast<double>(diff.squaredNorm()) / n);
        gen.backward(diff * (2.0f / n));
        if (cfg.linear_decay) opt.set_lr(cfg.learning_rate * (1.0 - static_cast<double>(step) / cfg.steps));
        gen.update(opt);
    }
    const detail::Mat out = gen.forward();
    res.final_mse = static_cast<double>((out - target).squaredNorm()) / n;
    res.fake = detail::chw_to_image(out, cfg.target_size);
    if (!std::isfinite(res.final_mse) || res.final_mse > res.loss_trace.front()) {
        fail(Errc::DivergedFit, "final MSE " + std::to_string(res.final_mse) + " exceeds initial " +
                                    std::to_string(res.loss_trace.front()));
    }
    return res;
}

/// Means of consecutive non-overlapping windows of the trace.
inline std::vector<double> window_means(const std::vector<double>& trace, std::size_t window) {
    std::vector<double> out;
    for (std::size_t start = 0; start + window <= trace.size(); start += window) {
        double s = 0.0;
        for (std::size_t i = start; i < start + window; ++i) s += trace[i];
        out.push_back(s / static_cast<double>(window));
    }
    return out;
}

inline bool is_non_increasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[i - 1]) return false;
    }
    return true;
}

// ============================================================ benchmark builder

enum class TwinMethod { Gan, Dm };

inline std::string_view twin_method_name(TwinMethod m) { return m == TwinMethod::Gan ? "gan" : "dm"; }

struct DmTwinConfig {
    int steps = 50;
    int crop_size = 0;  // 0 keeps the whole image
};

struct TwinPair {
    std::string real_path;
    std::string fake_path;
    std::string class_name;
    TwinMethod method = TwinMethod::Gan;
    std::string status;  // ok | below-gate | diverged | degenerate-predictor | error: ...
    double psnr = 0.0;
    double final_mse = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> loss_trace;
};

struct TwinBuildOptions {
    TwinMethod method = TwinMethod::Gan;
    GanFitConfig gan;
    DmTwinConfig dm;
    const NoisePredictor* predictor = nullptr;  // DM only; defaults to the zero stub
    int workers = 1;
};

/// One pair per manifest row; real crops go to out_dir/real, fakes to
/// out_dir/fake. Failures become status values, never dropped rows.
inline std::vector<TwinPair> build_twinsynths(const Manifest& reals, const TwinBuildOptions& opt,
                                              const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    const ZeroNoisePredictor zero;
    const NoisePredictor& predictor = opt.predictor ? *opt.predictor : zero;
    std::vector<TwinPair> pairs(reals.rows.size());
    auto build_one = [&](const ManifestRow& row, TwinPair& p) {
        p.method = opt.method;
        p.class_name = row.content_class;
        fs::path rel(row.image_path);
        if (rel.is_absolute()) rel = rel.relative_path();
        rel.replace_extension(".png");
        p.real_path = (fs::path("real") / rel).generic_string();
        p.fake_path = (fs::path("fake") / rel).generic_string();
        try {
            const auto img = to_float(read_image(reals.resolve(row)));
            Image real, fake;
            if (opt.method == TwinMethod::Gan) {
                auto cfg = opt.gan;
                cfg.seed = p.seed = derive_seed(opt.gan.seed, row.image_path);
                real = center_crop(img, cfg.target_size);
                try {
                    auto fit = fit_gan_twin(real, cfg);
                    fake = std::move(fit.fake);
                    p.final_mse = fit.final_mse;
                    p.loss_trace = std::move(fit.loss_trace);
                    p.status = "ok";
                } catch (const Error& e) {
                    if (e.code() != Errc::DivergedFit) throw;
                    p.status = "diverged";
                }
            } else {
                real = opt.dm.crop_size > 0 ? center_crop(img, opt.dm.crop_size) : img;
                const auto schedule = DdimSchedule::scaled_linear(opt.dm.steps, make_prompt(row.content_class));
                fake = ddim_reverse(ddim_forward(real, schedule, predictor), schedule, predictor);
                p.status = predictor.name() == "zero" ? "degenerate-predictor" : "ok";
            }
            const auto real_u8 = to_u8(real);
            write_file_bytes(out_dir / p.real_path, encode_png(real_u8));
            if (!fake.empty()) {
                const auto fake_u8 = to_u8(fake);
                write_file_bytes(out_dir / p.fake_path, encode_png(fake_u8));
                p.psnr = psnr(real_u8, fake_u8);
                if (opt.method == TwinMethod::Dm) {
                    const auto fr = to_float(fake_u8);
                    const auto rr = to_float(real_u8);
                    double se = 0.0;
                    for (std::size_t i = 0; i < fr.pixels().size(); ++i) {
                        const double d = 2.0 * (fr.pixels()[i] - rr.pixels()[i]);
                        se += d * d;
                    }
                    p.final_mse = se / static_cast<double>(fr.pixels().size());
                }
                if (opt.method == TwinMethod::Gan && p.status == "ok" && p.psnr < opt.gan.psnr_gate) {
                    p.status = "below-gate";
                }
            }
        } catch (const std::exception& e) {
            p.status = std::string("error: ") + e.what();
        }
    };
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < reals.rows.size();) build_one(reals.rows[i], pairs[i]);
    };
    const int n_threads = std::max(1, std::min<int>(opt.workers, static_cast<int>(reals.rows.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return pairs;
}

inline void save_twin_manifest(const std::vector<TwinPair>& pairs, const std::filesystem::path& path,
                               const std::map<std::string, std::string>& meta = {}) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    out << "# sfld-twins\n# schema_version=1\n# codec=" << codec_version() << "\n";
    for (const auto& [k, v] : meta) out << "# " << k << "=" << v << "\n";
    out << "real_path\tfake_path\tclass_name\tmethod\tstatus\tpsnr\tfinal_mse\tseed\n";
    out.precision(10);
    for (const auto& p : pairs) {
        std::string status = p.status;
        std::replace(status.begin(), status.end(), '\t', ' ');
        std::replace(status.begin(), status.end(), '\n', ' ');
        out << p.real_path << '\t' << p.fake_path << '\t' << p.class_name << '\t' << twin_method_name(p.method) << '\t'
            << status << '\t' << p.psnr << '\t' << p.final_mse << '\t' << p.seed << '\n';
    }
}

/// Detection manifest over accepted pairs: reals labeled 0, fakes 1, with
/// generator "twinsynths-<method>".
inline Manifest twin_pairs_to_manifest(const std::vector<TwinPair>& pairs, const std::filesystem::path& root) {
    Manifest m;
    m.root = std::filesystem::absolute(root).lexically_normal();
    for (const auto& p : pairs) {
        if (p.status != "ok" && p.status != "degenerate-predictor") continue;
        const std::string gen = "twinsynths-" + std::string(twin_method_name(p.method));
        m.rows.push_back({p.real_path, 0, gen, p.class_name, Split::Test});
        m.rows.push_back({p.fake_path, 1, gen, p.class_name, Split::Test});
    }
    return m;
}

}  // namespace sfld
