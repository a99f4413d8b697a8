#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pdl1/slide.hpp"

namespace pdl1::cae {

/// Dense batch of images, NCHW, contiguous.
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill)
    {
    }
    std::size_t size() const { return data.size(); }
    std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
    T* sample(int i) { return data.data() + i * sample_size(); }
    const T* sample(int i) const { return data.data() + i * sample_size(); }
};

enum class Activation : std::uint8_t { relu, identity };

/// Encoder: 3 x (conv, batch norm, activation, 2x2 max-pool), FC -> hidden,
/// FC -> embedding. Decoder: FC -> hidden, FC -> flattened feature map, then
/// 3 x (nearest 2x upsample, padded conv), the first two with batch norm and
/// activation, the last squashed by a logistic function.
struct CaeArchitecture {
    int input_size = 64;
    int in_channels = 3;
    std::array<int, 3> channels{16, 32, 64};
    std::array<int, 3> kernels{5, 3, 3};
    int hidden = 256;
    int embedding = 32;
    bool batch_norm = true;
    Activation activation = Activation::relu;
    bool sigmoid_output = true;

    /// Small instance for finite-difference checks: 16x16 input, widths 2/3/4.
    static CaeArchitecture reduced();
    int bottleneck_size() const { return input_size / 8; }
    void validate() const;
    bool operator==(const CaeArchitecture&) const = default;
};

/// A named, contiguous parameter or buffer inside the network.
template <typename T>
struct ParamView {
    std::string name;
    T* value = nullptr;
    T* grad = nullptr;  // null for non-trainable buffers (running statistics)
    std::size_t size = 0;
};

enum class Mode { train, inference };

template <typename T>
class Layer;

/// The autoencoder and its weights. Value type: copies are deep.
template <typename T>
class Autoencoder {
public:
    Autoencoder(const CaeArchitecture& arch, std::uint64_t seed);
    Autoencoder(const Autoencoder& other);
    Autoencoder& operator=(const Autoencoder& other);
    Autoencoder(Autoencoder&&) noexcept;
    Autoencoder& operator=(Autoencoder&&) noexcept;
    ~Autoencoder();

    const CaeArchitecture& architecture() const { return arch_; }
    std::uint64_t seed() const { return seed_; }

    /// Encoder only; returns n x embedding, row-major.
    std::vector<T> encode(const Tensor<T>& x, Mode mode = Mode::inference);

    struct Output {
        Tensor<T> reconstruction;
        std::vector<T> embedding;  // n x embedding
    };
    Output forward(const Tensor<T>& x, Mode mode = Mode::inference);

    /// Mean squared reconstruction error; with `accumulate` the gradients of
    /// every parameter are written (overwritten, not summed).
    T loss_and_gradient(const Tensor<T>& x, Mode mode = Mode::train);
    T loss(const Tensor<T>& x, Mode mode = Mode::train);

    std::vector<ParamView<T>> parameters();
    std::vector<ParamView<T>> buffers();
    std::size_t parameter_count();

private:
    void build();
    CaeArchitecture arch_;
    std::uint64_t seed_;
    std::vector<std::unique_ptr<Layer<T>>> encoder_;
    std::vector<std::unique_ptr<Layer<T>>> decoder_;
};

using Cae = Autoencoder<float>;

/// Deterministic fan-in scaled initialization; batch norm scale 1, shift 0.
Cae cae_init(std::uint64_t seed, const CaeArchitecture& arch = {});

/// Scales a 64x64 8-bit tile into [0,1] floats, CHW.
Tensor<float> tiles_to_tensor(std::span<const slide::DownTile> tiles);

using TileEmbedding = std::array<float, 32>;

struct TrainConfig {
    double lr = 0.001;
    int epochs = 20;
    int batch_size = 64;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
};

struct TrainReport {
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

/// Mini-batch Adam on mean squared reconstruction error. Batch order is a
/// seeded shuffle per epoch; results do not depend on the worker count.
/// on_epoch gets the 1-based epoch and its mean loss. Throws ConvergenceError
/// on a non-finite loss.
TrainReport cae_train(Cae& net, std::span<const slide::DownTile> tiles, const TrainConfig& cfg,
                      const std::function<void(int, double)>& on_epoch = {});

/// Embeddings of the given tiles (inference mode), in input order.
std::vector<TileEmbedding> encode_all(Cae& net, std::span<const slide::DownTile> tiles);

/// Tiles selected by `inside`, in grid order, encoded. Throws EmptyRoiError.
std::vector<TileEmbedding> encode_roi(Cae& net, std::span<const slide::DownTile> tiles,
                                      std::span<const std::uint8_t> inside);

struct GradientCheckResult {
    double max_relative_error = 0;
    double max_absolute_error = 0;
    std::string worst_parameter;
    std::size_t checked = 0;
};

/// Central finite differences of the training-mode loss for every parameter.
/// relative error = |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradientCheckResult gradient_check(const Autoencoder<double>& net, const Tensor<double>& x, double step = 1e-4,
                                   double floor = 1e-6);

/// Weight file: "PDL1CAE\0", u32 version, architecture descriptor, u64 seed,
/// u32 tensor count, then per tensor (name, u32 length, f32 values), all
/// little-endian, parameters first in layer order followed by buffers.
void save_weights(Cae& net, const std::filesystem::path& path);
Cae load_weights(const std::filesystem::path& path);

/// Embedding file: "PDL1EMB\0", u32 version, slide_id, u32 tile count,
/// u32 dimension, then dimension f32 values per tile.
struct SlideEmbeddings {
    std::string slide_id;
    std::vector<TileEmbedding> tiles;
};
void save_embeddings(const SlideEmbeddings& e, const std::filesystem::path& path);
SlideEmbeddings load_embeddings(const std::filesystem::path& path);

}  // namespace pdl1::cae
