#include "pdl1/cae.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "pdl1/binio.hpp"
#include "pdl1/common.hpp"
#include "pdl1/parallel.hpp"
#include "pdl1/random.hpp"

namespace pdl1::cae {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

CaeArchitecture CaeArchitecture::reduced()
{
    CaeArchitecture a;
    a.input_size = 16;
    a.channels = {2, 3, 4};
    a.kernels = {5, 3, 3};
    a.hidden = 8;
    a.embedding = 4;
    return a;
}

void CaeArchitecture::validate() const
{
    if (input_size < 8 || input_size % 8 != 0) throw InputDomainError("CAE input size must be a multiple of 8");
    if (in_channels < 1 || hidden < 1 || embedding < 1) throw InputDomainError("CAE widths must be positive");
    for (int i = 0; i < 3; ++i) {
        if (channels[i] < 1) throw InputDomainError("CAE channel widths must be positive");
        if (kernels[i] < 1 || kernels[i] % 2 == 0) throw InputDomainError("CAE kernels must be odd");
    }
}

// ---------------------------------------------------------------------------
// Layers. Each caches what its backward pass needs from the last forward.

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual void init(Rng&) {}
    virtual void collect(const std::string&, std::vector<ParamView<T>>&, std::vector<ParamView<T>>&) {}
};

namespace {

template <typename T>
void he_normal(std::vector<T>& w, std::size_t fan_in, double gain, Rng& rng)
{
    const double sd = std::sqrt(gain / static_cast<double>(fan_in));
    for (auto& v : w) v = static_cast<T>(rng.normal() * sd);
}

// (c*k*k) x (h*w) patch matrix for a stride-1 convolution with zero padding k/2.
template <typename T>
void im2col(const T* x, int c, int h, int w, int k, T* cols)
{
    const int p = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int iy = y + ky - p;
                    T* out = row + static_cast<std::size_t>(y) * w;
                    if (iy < 0 || iy >= h) {
                        std::fill(out, out + w, T(0));
                        continue;
                    }
                    const T* in = x + (static_cast<std::size_t>(ch) * h + iy) * w;
                    for (int xx = 0; xx < w; ++xx) {
                        const int ix = xx + kx - p;
                        out[xx] = (ix < 0 || ix >= w) ? T(0) : in[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* cols, int c, int h, int w, int k, T* dx)
{
    const int p = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int iy = y + ky - p;
                    if (iy < 0 || iy >= h) continue;
                    const T* in = row + static_cast<std::size_t>(y) * w;
                    T* out = dx + (static_cast<std::size_t>(ch) * h + iy) * w;
                    for (int xx = 0; xx < w; ++xx) {
                        const int ix = xx + kx - p;
                        if (ix >= 0 && ix < w) out[ix] += in[xx];
                    }
                }
            }
        }
    }
}

template <typename T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(int in, int out, int k, bool bias, double gain)
        : in_(in), out_(out), k_(k), has_bias_(bias), gain_(gain),
          w_(static_cast<std::size_t>(out) * in * k * k), gw_(w_.size()), b_(out), gb_(out)
    {
    }

    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        if (x.c != in_) throw InputDomainError("conv: channel mismatch");
        x_ = x;
        Tensor<T> y(x.n, out_, x.h, x.w);
        const std::size_t K = static_cast<std::size_t>(in_) * k_ * k_;
        const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
        parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t s) {
            std::vector<T> cols(K * hw);
            im2col(x.sample(static_cast<int>(s)), in_, x.h, x.w, k_, cols.data());
            ConstMatMap<T> W(w_.data(), out_, static_cast<Eigen::Index>(K));
            ConstMatMap<T> C(cols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(hw));
            MatMap<T> Y(y.sample(static_cast<int>(s)), out_, static_cast<Eigen::Index>(hw));
            Y.noalias() = W * C;
            if (has_bias_) Y.colwise() += VecMap<T>(b_.data(), out_);
        });
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override
    {
        const Tensor<T>& x = x_;
        Tensor<T> dx(x.n, x.c, x.h, x.w);
        const std::size_t K = static_cast<std::size_t>(in_) * k_ * k_;
        const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
        // per-sample weight gradients, summed in sample order below
        std::vector<std::vector<T>> parts(static_cast<std::size_t>(x.n));
        parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t s) {
            std::vector<T> cols(K * hw);
            im2col(x.sample(static_cast<int>(s)), in_, x.h, x.w, k_, cols.data());
            ConstMatMap<T> C(cols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(hw));
            ConstMatMap<T> dY(dy.sample(static_cast<int>(s)), out_, static_cast<Eigen::Index>(hw));
            ConstMatMap<T> W(w_.data(), out_, static_cast<Eigen::Index>(K));
            parts[s].assign(w_.size(), T(0));
            MatMap<T> dW(parts[s].data(), out_, static_cast<Eigen::Index>(K));
            dW.noalias() = dY * C.transpose();
            RowMat<T> dcols = W.transpose() * dY;
            col2im(dcols.data(), in_, x.h, x.w, k_, dx.sample(static_cast<int>(s)));
        });
        std::fill(gw_.begin(), gw_.end(), T(0));
        for (const auto& p : parts) {
            for (std::size_t i = 0; i < gw_.size(); ++i) gw_[i] += p[i];
        }
        std::fill(gb_.begin(), gb_.end(), T(0));
        if (has_bias_) {
            for (int s = 0; s < x.n; ++s) {
                const T* d = dy.sample(s);
                for (int o = 0; o < out_; ++o) {
                    T acc = 0;
                    for (std::size_t i = 0; i < hw; ++i) acc += d[o * hw + i];
                    gb_[o] += acc;
                }
            }
        }
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

    void init(Rng& rng) override
    {
        he_normal(w_, static_cast<std::size_t>(in_) * k_ * k_, gain_, rng);
        std::fill(b_.begin(), b_.end(), T(0));
    }

    void collect(const std::string& prefix, std::vector<ParamView<T>>& params, std::vector<ParamView<T>>&) override
    {
        params.push_back({prefix + ".weight", w_.data(), gw_.data(), w_.size()});
        if (has_bias_) params.push_back({prefix + ".bias", b_.data(), gb_.data(), b_.size()});
    }

private:
    int in_, out_, k_;
    bool has_bias_;
    double gain_;
    std::vector<T> w_, gw_, b_, gb_;
    Tensor<T> x_;
};

template <typename T>
class BatchNorm final : public Layer<T> {
public:
    explicit BatchNorm(int c)
        : c_(c), gamma_(c, T(1)), beta_(c, T(0)), ggamma_(c), gbeta_(c), running_mean_(c, T(0)),
          running_var_(c, T(1)), xhat_(), inv_std_(c)
    {
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override
    {
        if (x.c != c_) throw InputDomainError("batch norm: channel mismatch");
        const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
        const double m = static_cast<double>(x.n) * static_cast<double>(hw);
        Tensor<T> y(x.n, x.c, x.h, x.w);
        xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
        for (int ch = 0; ch < c_; ++ch) {
            T mean, var;
            if (mode == Mode::train) {
                double s = 0;
                for (int n = 0; n < x.n; ++n) {
                    const T* p = x.sample(n) + ch * hw;
                    for (std::size_t i = 0; i < hw; ++i) s += p[i];
                }
                const double mu = s / m;
                double v = 0;
                for (int n = 0; n < x.n; ++n) {
                    const T* p = x.sample(n) + ch * hw;
                    for (std::size_t i = 0; i < hw; ++i) v += (p[i] - mu) * (p[i] - mu);
                }
                v /= m;
                mean = static_cast<T>(mu);
                var = static_cast<T>(v);
                const double unbiased = m > 1 ? v * m / (m - 1) : v;
                running_mean_[ch] = static_cast<T>((1 - momentum) * running_mean_[ch] + momentum * mu);
                running_var_[ch] = static_cast<T>((1 - momentum) * running_var_[ch] + momentum * unbiased);
            } else {
                mean = running_mean_[ch];
                var = running_var_[ch];
            }
            const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + eps));
            inv_std_[ch] = inv;
            for (int n = 0; n < x.n; ++n) {
                const T* p = x.sample(n) + ch * hw;
                T* xh = xhat_.sample(n) + ch * hw;
                T* q = y.sample(n) + ch * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    xh[i] = (p[i] - mean) * inv;
                    q[i] = gamma_[ch] * xh[i] + beta_[ch];
                }
            }
        }
        return y;
    }

    // Training-mode backward (batch statistics).
    Tensor<T> backward(const Tensor<T>& dy) override
    {
        const std::size_t hw = static_cast<std::size_t>(dy.h) * dy.w;
        const T m = static_cast<T>(dy.n) * static_cast<T>(hw);
        Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
        for (int ch = 0; ch < c_; ++ch) {
            T sum_dy = 0, sum_dy_xhat = 0;
            for (int n = 0; n < dy.n; ++n) {
                const T* d = dy.sample(n) + ch * hw;
                const T* xh = xhat_.sample(n) + ch * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    sum_dy += d[i];
                    sum_dy_xhat += d[i] * xh[i];
                }
            }
            gbeta_[ch] = sum_dy;
            ggamma_[ch] = sum_dy_xhat;
            const T k = gamma_[ch] * inv_std_[ch] / m;
            for (int n = 0; n < dy.n; ++n) {
                const T* d = dy.sample(n) + ch * hw;
                const T* xh = xhat_.sample(n) + ch * hw;
                T* o = dx.sample(n) + ch * hw;
                for (std::size_t i = 0; i < hw; ++i) o[i] = k * (m * d[i] - sum_dy - xh[i] * sum_dy_xhat);
            }
        }
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm>(*this); }

    void init(Rng&) override
    {
        std::fill(gamma_.begin(), gamma_.end(), T(1));
        std::fill(beta_.begin(), beta_.end(), T(0));
        std::fill(running_mean_.begin(), running_mean_.end(), T(0));
        std::fill(running_var_.begin(), running_var_.end(), T(1));
    }

    void collect(const std::string& prefix, std::vector<ParamView<T>>& params,
                 std::vector<ParamView<T>>& buffers) override
    {
        params.push_back({prefix + ".gamma", gamma_.data(), ggamma_.data(), gamma_.size()});
        params.push_back({prefix + ".beta", beta_.data(), gbeta_.data(), beta_.size()});
        buffers.push_back({prefix + ".running_mean", running_mean_.data(), nullptr, running_mean_.size()});
        buffers.push_back({prefix + ".running_var", running_var_.data(), nullptr, running_var_.size()});
    }

    static constexpr double momentum = 0.1;
    static constexpr double eps = 1e-5;

private:
    int c_;
    std::vector<T> gamma_, beta_, ggamma_, gbeta_, running_mean_, running_var_;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

template <typename T>
class Relu final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        Tensor<T> y = x;
        for (auto& v : y.data) v = v > T(0) ? v : T(0);
        y_ = y;
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override
    {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) {
            if (!(y_.data[i] > T(0))) dx.data[i] = T(0);
        }
        return dx;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Relu>(*this); }

private:
    Tensor<T> y_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        Tensor<T> y = x;
        for (auto& v : y.data) v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
        y_ = y;
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override
    {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= y_.data[i] * (T(1) - y_.data[i]);
        return dx;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Sigmoid>(*this); }

private:
    Tensor<T> y_;
};

template <typename T>
class MaxPool2 final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        in_n_ = x.n, in_c_ = x.c, in_h_ = x.h, in_w_ = x.w;
        Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
        argmax_.assign(y.size(), 0);
        std::size_t o = 0;
        for (int n = 0; n < x.n; ++n) {
            for (int c = 0; c < x.c; ++c) {
                const std::size_t base = (static_cast<std::size_t>(n) * x.c + c) * x.h * x.w;
                for (int yy = 0; yy < y.h; ++yy) {
                    for (int xx = 0; xx < y.w; ++xx, ++o) {
                        std::size_t best = base + static_cast<std::size_t>(2 * yy) * x.w + 2 * xx;
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const std::size_t idx = base + static_cast<std::size_t>(2 * yy + dy) * x.w + 2 * xx + dx;
                                if (x.data[idx] > x.data[best]) best = idx;
                            }
                        }
                        argmax_[o] = best;
                        y.data[o] = x.data[best];
                    }
                }
            }
        }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override
    {
        Tensor<T> dx(in_n_, in_c_, in_h_, in_w_);
        for (std::size_t o = 0; o < dy.size(); ++o) dx.data[argmax_[o]] += dy.data[o];
        return dx;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool2>(*this); }

private:
    int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
    std::vector<std::size_t> argmax_;
};

template <typename T>
class Upsample2 final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
        for (int nc = 0; nc < x.n * x.c; ++nc) {
            const T* in = x.data.data() + static_cast<std::size_t>(nc) * x.h * x.w;
            T* out = y.data.data() + static_cast<std::size_t>(nc) * y.h * y.w;
            for (int yy = 0; yy < y.h; ++yy) {
                for (int xx = 0; xx < y.w; ++xx) out[yy * y.w + xx] = in[(yy / 2) * x.w + xx / 2];
            }
        }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override
    {
        Tensor<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
        for (int nc = 0; nc < dy.n * dy.c; ++nc) {
            const T* in = dy.data.data() + static_cast<std::size_t>(nc) * dy.h * dy.w;
            T* out = dx.data.data() + static_cast<std::size_t>(nc) * dx.h * dx.w;
            for (int yy = 0; yy < dy.h; ++yy) {
                for (int xx = 0; xx < dy.w; ++xx) out[(yy / 2) * dx.w + xx / 2] += in[yy * dy.w + xx];
            }
        }
        return dx;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Upsample2>(*this); }
};

/// Reinterprets the per-sample layout; gradients pass through unchanged.
template <typename T>
class Reshape final : public Layer<T> {
public:
    Reshape(int c, int h, int w) : c_(c), h_(h), w_(w) {}
    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        in_c_ = x.c, in_h_ = x.h, in_w_ = x.w;
        Tensor<T> y = x;
        y.c = c_, y.h = h_, y.w = w_;
        if (y.sample_size() != x.sample_size()) throw InputDomainError("reshape: size mismatch");
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override
    {
        Tensor<T> dx = dy;
        dx.c = in_c_, dx.h = in_h_, dx.w = in_w_;
        return dx;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Reshape>(*this); }

private:
    int c_, h_, w_;
    int in_c_ = 0, in_h_ = 0, in_w_ = 0;
};

/// Fully connected on flattened samples; output shape n x out x 1 x 1.
template <typename T>
T dot(const T* a, const T* b, int n)
{
    constexpr int lanes = 8;
    T acc[lanes] = {};
    int i = 0;
    for (; i + lanes <= n; i += lanes)
        for (int j = 0; j < lanes; ++j) acc[j] += a[i + j] * b[i + j];
    T tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    T sum = 0;
    for (int j = 0; j < lanes; ++j) sum += acc[j];
    return sum + tail;
}

template <typename T>
class Linear final : public Layer<T> {
public:
    Linear(int in, int out, double gain)
        : in_(in), out_(out), gain_(gain), w_(static_cast<std::size_t>(in) * out), gw_(w_.size()), b_(out), gb_(out)
    {
    }

    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        if (static_cast<int>(x.sample_size()) != in_) throw InputDomainError("linear: input width mismatch");
        x_ = x;
        Tensor<T> y(x.n, out_, 1, 1);
        // one sample at a time with a fixed summation order, so a sample's output
        // does not depend on its position in the batch or on buffer alignment
        parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t s) {
            const T* xi = x.sample(static_cast<int>(s));
            T* yi = y.sample(static_cast<int>(s));
            for (int o = 0; o < out_; ++o) yi[o] = b_[o] + dot(w_.data() + static_cast<std::size_t>(o) * in_, xi, in_);
        });
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override
    {
        ConstMatMap<T> X(x_.data.data(), x_.n, in_);
        ConstMatMap<T> W(w_.data(), out_, in_);
        ConstMatMap<T> dY(dy.data.data(), dy.n, out_);
        MatMap<T> dW(gw_.data(), out_, in_);
        dW.noalias() = dY.transpose() * X;
        std::fill(gb_.begin(), gb_.end(), T(0));
        for (int i = 0; i < dy.n; ++i) {
            const T* d = dy.sample(i);
            for (int o = 0; o < out_; ++o) gb_[o] += d[o];
        }
        Tensor<T> dx(x_.n, x_.c, x_.h, x_.w);
        MatMap<T> dX(dx.data.data(), x_.n, in_);
        dX.noalias() = dY * W;
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Linear>(*this); }

    void init(Rng& rng) override
    {
        he_normal(w_, static_cast<std::size_t>(in_), gain_, rng);
        std::fill(b_.begin(), b_.end(), T(0));
    }

    void collect(const std::string& prefix, std::vector<ParamView<T>>& params, std::vector<ParamView<T>>&) override
    {
        params.push_back({prefix + ".weight", w_.data(), gw_.data(), w_.size()});
        params.push_back({prefix + ".bias", b_.data(), gb_.data(), b_.size()});
    }

private:
    int in_, out_;
    double gain_;
    std::vector<T> w_, gw_, b_, gb_;
    Tensor<T> x_;
};

template <typename T>
Tensor<T> run_forward(std::vector<std::unique_ptr<Layer<T>>>& layers, Tensor<T> x, Mode mode)
{
    for (auto& l : layers) x = l->forward(x, mode);
    return x;
}

template <typename T>
Tensor<T> run_backward(std::vector<std::unique_ptr<Layer<T>>>& layers, Tensor<T> d)
{
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) d = (*it)->backward(d);
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Autoencoder

template <typename T>
Autoencoder<T>::Autoencoder(const CaeArchitecture& arch, std::uint64_t seed) : arch_(arch), seed_(seed)
{
    arch_.validate();
    build();
    Rng rng(seed);
    for (auto& l : encoder_) l->init(rng);
    for (auto& l : decoder_) l->init(rng);
}

template <typename T>
Autoencoder<T>::Autoencoder(const Autoencoder& other) : arch_(other.arch_), seed_(other.seed_)
{
    for (const auto& l : other.encoder_) encoder_.push_back(l->clone());
    for (const auto& l : other.decoder_) decoder_.push_back(l->clone());
}

template <typename T>
Autoencoder<T>& Autoencoder<T>::operator=(const Autoencoder& other)
{
    if (this != &other) {
        Autoencoder tmp(other);
        *this = std::move(tmp);
    }
    return *this;
}

template <typename T>
Autoencoder<T>::Autoencoder(Autoencoder&&) noexcept = default;
template <typename T>
Autoencoder<T>& Autoencoder<T>::operator=(Autoencoder&&) noexcept = default;
template <typename T>
Autoencoder<T>::~Autoencoder() = default;

template <typename T>
void Autoencoder<T>::build()
{
    const auto& a = arch_;
    const bool relu = a.activation == Activation::relu;
    const double gain = relu ? 2.0 : 1.0;
    auto act = [&](std::vector<std::unique_ptr<Layer<T>>>& v) {
        if (relu) v.push_back(std::make_unique<Relu<T>>());
    };

    int c = a.in_channels;
    for (int i = 0; i < 3; ++i) {
        encoder_.push_back(std::make_unique<Conv2d<T>>(c, a.channels[i], a.kernels[i], !a.batch_norm, gain));
        if (a.batch_norm) encoder_.push_back(std::make_unique<BatchNorm<T>>(a.channels[i]));
        act(encoder_);
        encoder_.push_back(std::make_unique<MaxPool2<T>>());
        c = a.channels[i];
    }
    const int s = a.bottleneck_size();
    const int flat = a.channels[2] * s * s;
    encoder_.push_back(std::make_unique<Linear<T>>(flat, a.hidden, gain));
    act(encoder_);
    encoder_.push_back(std::make_unique<Linear<T>>(a.hidden, a.embedding, 1.0));

    decoder_.push_back(std::make_unique<Linear<T>>(a.embedding, a.hidden, gain));
    act(decoder_);
    decoder_.push_back(std::make_unique<Linear<T>>(a.hidden, flat, gain));
    act(decoder_);
    decoder_.push_back(std::make_unique<Reshape<T>>(a.channels[2], s, s));
    for (int i = 2; i >= 1; --i) {
        decoder_.push_back(std::make_unique<Upsample2<T>>());
        decoder_.push_back(
            std::make_unique<Conv2d<T>>(a.channels[i], a.channels[i - 1], a.kernels[i], !a.batch_norm, gain));
        if (a.batch_norm) decoder_.push_back(std::make_unique<BatchNorm<T>>(a.channels[i - 1]));
        act(decoder_);
    }
    decoder_.push_back(std::make_unique<Upsample2<T>>());
    decoder_.push_back(std::make_unique<Conv2d<T>>(a.channels[0], a.in_channels, a.kernels[0], true, 1.0));
    if (a.sigmoid_output) decoder_.push_back(std::make_unique<Sigmoid<T>>());
}

template <typename T>
std::vector<T> Autoencoder<T>::encode(const Tensor<T>& x, Mode mode)
{
    if (x.c != arch_.in_channels || x.h != arch_.input_size || x.w != arch_.input_size) {
        throw InputDomainError("CAE input shape mismatch");
    }
    return run_forward(encoder_, x, mode).data;
}

template <typename T>
typename Autoencoder<T>::Output Autoencoder<T>::forward(const Tensor<T>& x, Mode mode)
{
    if (x.c != arch_.in_channels || x.h != arch_.input_size || x.w != arch_.input_size) {
        throw InputDomainError("CAE input shape mismatch");
    }
    Output out;
    Tensor<T> z = run_forward(encoder_, x, mode);
    out.embedding = z.data;
    out.reconstruction = run_forward(decoder_, std::move(z), mode);
    return out;
}

template <typename T>
T Autoencoder<T>::loss(const Tensor<T>& x, Mode mode)
{
    const auto out = forward(x, mode);
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(out.reconstruction.data[i]) - x.data[i];
        s += d * d;
    }
    return static_cast<T>(s / static_cast<double>(x.size()));
}

template <typename T>
T Autoencoder<T>::loss_and_gradient(const Tensor<T>& x, Mode mode)
{
    const auto out = forward(x, mode);
    const T scale = static_cast<T>(2.0 / static_cast<double>(x.size()));
    Tensor<T> d = out.reconstruction;
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T diff = out.reconstruction.data[i] - x.data[i];
        s += static_cast<double>(diff) * diff;
        d.data[i] = scale * diff;
    }
    d = run_backward(decoder_, std::move(d));
    run_backward(encoder_, std::move(d));
    return static_cast<T>(s / static_cast<double>(x.size()));
}

template <typename T>
std::vector<ParamView<T>> Autoencoder<T>::parameters()
{
    std::vector<ParamView<T>> params, buffers;
    for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i]->collect("encoder." + std::to_string(i), params, buffers);
    for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i]->collect("decoder." + std::to_string(i), params, buffers);
    return params;
}

template <typename T>
std::vector<ParamView<T>> Autoencoder<T>::buffers()
{
    std::vector<ParamView<T>> params, buffers;
    for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i]->collect("encoder." + std::to_string(i), params, buffers);
    for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i]->collect("decoder." + std::to_string(i), params, buffers);
    return buffers;
}

template <typename T>
std::size_t Autoencoder<T>::parameter_count()
{
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.size;
    return n;
}

template class Autoencoder<float>;
template class Autoencoder<double>;

// ---------------------------------------------------------------------------

Cae cae_init(std::uint64_t seed, const CaeArchitecture& arch) { return Cae(arch, seed); }

Tensor<float> tiles_to_tensor(std::span<const slide::DownTile> tiles)
{
    constexpr int s = slide::down_size;
    Tensor<float> t(static_cast<int>(tiles.size()), 3, s, s);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        float* out = t.sample(static_cast<int>(i));
        const auto& tile = tiles[i];
        for (int p = 0; p < s * s; ++p) {
            for (int c = 0; c < 3; ++c) out[c * s * s + p] = static_cast<float>(tile[3 * p + c]) / 255.0f;
        }
    }
    return t;
}

TrainReport cae_train(Cae& net, std::span<const slide::DownTile> tiles, const TrainConfig& cfg,
                      const std::function<void(int, double)>& on_epoch)
{
    if (tiles.empty()) throw InputDomainError("cae_train: no training tiles");
    if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.lr > 0)) throw InputDomainError("cae_train: bad config");
    if (net.architecture().input_size != slide::down_size || net.architecture().in_channels != 3) {
        throw InputDomainError("cae_train: network does not take 64x64x3 tiles");
    }

    auto params = net.parameters();
    std::vector<std::vector<float>> m(params.size()), v(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i].assign(params[i].size, 0.0f);
        v[i].assign(params[i].size, 0.0f);
    }

    std::vector<std::size_t> order(tiles.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed);
    TrainReport report;
    std::uint64_t step = 0;
    std::vector<slide::DownTile> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(tiles[order[i]]);
            const auto x = tiles_to_tensor(batch);
            const float loss = net.loss_and_gradient(x, Mode::train);
            if (!std::isfinite(loss)) {
                throw ConvergenceError("cae_train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                       std::to_string(batches + 1));
            }
            epoch_loss += loss;
            ++batches;

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
            const float lr_t = static_cast<float>(cfg.lr * std::sqrt(bc2) / bc1);
            const float eps_t = static_cast<float>(cfg.eps * std::sqrt(bc2));
            for (std::size_t i = 0; i < params.size(); ++i) {
                auto& p = params[i];
                for (std::size_t j = 0; j < p.size; ++j) {
                    const float g = p.grad[j];
                    m[i][j] = b1 * m[i][j] + (1.0f - b1) * g;
                    v[i][j] = b2 * v[i][j] + (1.0f - b2) * g * g;
                    p.value[j] -= lr_t * m[i][j] / (std::sqrt(v[i][j]) + eps_t);
                }
            }
        }
        report.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
        if (on_epoch) on_epoch(epoch + 1, report.epoch_loss.back());
    }
    return report;
}

std::vector<TileEmbedding> encode_all(Cae& net, std::span<const slide::DownTile> tiles)
{
    if (net.architecture().embedding != static_cast<int>(TileEmbedding{}.size())) {
        throw InputDomainError("encode_all: network embedding width is not 32");
    }
    std::vector<TileEmbedding> out(tiles.size());
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < tiles.size(); start += chunk) {
        const std::size_t end = std::min(tiles.size(), start + chunk);
        const auto x = tiles_to_tensor(tiles.subspan(start, end - start));
        const auto z = net.encode(x, Mode::inference);
        for (std::size_t i = start; i < end; ++i) {
            std::copy_n(z.begin() + static_cast<std::ptrdiff_t>((i - start) * out[i].size()), out[i].size(),
                        out[i].begin());
        }
    }
    return out;
}

std::vector<TileEmbedding> encode_roi(Cae& net, std::span<const slide::DownTile> tiles,
                                      std::span<const std::uint8_t> inside)
{
    if (inside.size() != tiles.size()) throw InputDomainError("encode_roi: mask does not match tiles");
    std::vector<slide::DownTile> selected;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        if (inside[i]) selected.push_back(tiles[i]);
    }
    if (selected.empty()) throw EmptyRoiError("encode_roi: empty ROI");
    return encode_all(net, selected);
}

GradientCheckResult gradient_check(const Autoencoder<double>& reference, const Tensor<double>& x, double step,
                                   double floor)
{
    Autoencoder<double> net = reference;
    net.loss_and_gradient(x, Mode::train);
    auto params = net.parameters();
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) analytic.emplace_back(p.grad, p.grad + p.size);

    GradientCheckResult res;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        for (std::size_t j = 0; j < p.size; ++j) {
            const double saved = p.value[j];
            p.value[j] = saved + step;
            const double up = net.loss(x, Mode::train);
            p.value[j] = saved - step;
            const double down = net.loss(x, Mode::train);
            p.value[j] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[i][j];
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
            if (rel > res.max_relative_error) {
                res.max_relative_error = rel;
                res.worst_parameter = p.name + "[" + std::to_string(j) + "]";
            }
            res.max_absolute_error = std::max(res.max_absolute_error, abs_err);
            ++res.checked;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Files

namespace {

constexpr std::string_view weights_magic{"PDL1CAE\0", 8};
constexpr std::string_view embeddings_magic{"PDL1EMB\0", 8};
constexpr std::uint32_t file_version = 1;

}  // namespace

void save_weights(Cae& net, const std::filesystem::path& path)
{
    const auto& a = net.architecture();
    binio::Writer w(path);
    w.magic(weights_magic);
    w.u32(file_version);
    w.u32(static_cast<std::uint32_t>(a.input_size));
    w.u32(static_cast<std::uint32_t>(a.in_channels));
    for (int c : a.channels) w.u32(static_cast<std::uint32_t>(c));
    for (int k : a.kernels) w.u32(static_cast<std::uint32_t>(k));
    w.u32(static_cast<std::uint32_t>(a.hidden));
    w.u32(static_cast<std::uint32_t>(a.embedding));
    const std::uint32_t flags = (a.batch_norm ? 1u : 0u) | (a.activation == Activation::relu ? 2u : 0u) |
                                (a.sigmoid_output ? 4u : 0u);
    w.u32(flags);
    w.u64(net.seed());
    auto tensors = net.parameters();
    for (auto& b : net.buffers()) tensors.push_back(b);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.size));
        w.f32s({t.value, t.size});
    }
    w.close();
}

Cae load_weights(const std::filesystem::path& path)
{
    binio::Reader r(path);
    r.expect_magic(weights_magic);
    if (r.u32() != file_version) throw FormatError(path.string() + ": unsupported CAE weight version");
    CaeArchitecture a;
    a.input_size = static_cast<int>(r.u32());
    a.in_channels = static_cast<int>(r.u32());
    for (auto& c : a.channels) c = static_cast<int>(r.u32());
    for (auto& k : a.kernels) k = static_cast<int>(r.u32());
    a.hidden = static_cast<int>(r.u32());
    a.embedding = static_cast<int>(r.u32());
    const std::uint32_t flags = r.u32();
    a.batch_norm = flags & 1u;
    a.activation = (flags & 2u) ? Activation::relu : Activation::identity;
    a.sigmoid_output = flags & 4u;
    const std::uint64_t seed = r.u64();
    try {
        a.validate();
    } catch (const InputDomainError& e) {
        throw FormatError(path.string() + ": bad architecture descriptor: " + e.what());
    }
    Cae net(a, seed);
    auto tensors = net.parameters();
    for (auto& b : net.buffers()) tensors.push_back(b);
    if (r.u32() != tensors.size()) throw FormatError(path.string() + ": tensor count mismatch");
    for (auto& t : tensors) {
        if (r.str() != t.name) throw FormatError(path.string() + ": unexpected tensor, wanted " + t.name);
        if (r.u32() != t.size) throw FormatError(path.string() + ": size mismatch for " + t.name);
        const auto values = r.f32s(t.size);
        for (float v : values) {
            if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite value in " + t.name);
        }
        std::copy(values.begin(), values.end(), t.value);
    }
    return net;
}

void save_embeddings(const SlideEmbeddings& e, const std::filesystem::path& path)
{
    binio::Writer w(path);
    w.magic(embeddings_magic);
    w.u32(file_version);
    w.str(e.slide_id);
    w.u32(static_cast<std::uint32_t>(e.tiles.size()));
    w.u32(static_cast<std::uint32_t>(TileEmbedding{}.size()));
    for (const auto& t : e.tiles) w.f32s(t);
    w.close();
}

SlideEmbeddings load_embeddings(const std::filesystem::path& path)
{
    binio::Reader r(path);
    r.expect_magic(embeddings_magic);
    if (r.u32() != file_version) throw FormatError(path.string() + ": unsupported embedding version");
    SlideEmbeddings e;
    e.slide_id = r.str();
    const std::uint32_t n = r.u32();
    if (r.u32() != TileEmbedding{}.size()) throw FormatError(path.string() + ": embedding width is not 32");
    e.tiles.resize(n);
    for (auto& t : e.tiles) {
        const auto v = r.f32s(t.size());
        std::copy(v.begin(), v.end(), t.begin());
    }
    return e;
}

}  // namespace pdl1::cae
