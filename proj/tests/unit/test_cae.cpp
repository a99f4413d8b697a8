#include <doctest.h>

#include <cmath>
#include <cstring>

#include "pdl1/cae.hpp"
#include "pdl1/common.hpp"
#include "pdl1/parallel.hpp"
#include "pdl1/random.hpp"
#include "support.hpp"

using namespace pdl1;
using namespace pdl1::cae;
using slide::DownTile;

namespace {

Tensor<double> random_input(const CaeArchitecture& a, int n, std::uint64_t seed)
{
    Tensor<double> x(n, a.in_channels, a.input_size, a.input_size);
    Rng rng(seed);
    for (auto& v : x.data) v = rng.uniform();
    return x;
}

std::vector<DownTile> random_tiles(int n, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<DownTile> tiles(static_cast<std::size_t>(n));
    for (auto& t : tiles) {
        const auto base = static_cast<int>(rng.below(200));
        for (auto& v : t) v = static_cast<std::uint8_t>(base + rng.below(56));
    }
    return tiles;
}

template <typename T>
std::vector<float> flatten(Autoencoder<T>& net)
{
    std::vector<float> out;
    for (const auto& p : net.parameters()) out.insert(out.end(), p.value, p.value + p.size);
    for (const auto& p : net.buffers()) out.insert(out.end(), p.value, p.value + p.size);
    return out;
}

}  // namespace

TEST_SUITE("cae")
{
    TEST_CASE("initialization is seeded")
    {
        auto a = cae_init(1), b = cae_init(1), c = cae_init(2);
        CHECK(flatten(a) == flatten(b));
        CHECK(flatten(a) != flatten(c));
    }

    TEST_CASE("parameter shapes follow the architecture")
    {
        auto net = cae_init(0);
        const auto params = net.parameters();
        auto size_of = [&](const std::string& suffix, std::size_t nth) {
            std::size_t seen = 0;
            for (const auto& p : params)
                if (p.name.size() >= suffix.size() && p.name.ends_with(suffix) && seen++ == nth) return p.size;
            return std::size_t{0};
        };
        CHECK(size_of(".weight", 0) == 16 * 3 * 5 * 5);
        CHECK(size_of(".weight", 1) == 32 * 16 * 3 * 3);
        CHECK(size_of(".weight", 2) == 64 * 32 * 3 * 3);
        CHECK(size_of(".weight", 3) == 4096 * 256);
        CHECK(size_of(".weight", 4) == 256 * 32);
        CHECK(size_of(".weight", 5) == 32 * 256);
        CHECK(size_of(".weight", 6) == 256 * 4096);
        CHECK(size_of(".gamma", 0) == 16);
    }

    TEST_CASE("forward shapes and determinism")
    {
        auto net = cae_init(3);
        auto tiles = random_tiles(3, 1);
        tiles[2] = tiles[0];
        const auto x = tiles_to_tensor(tiles);
        const auto out = net.forward(x);
        CHECK(out.reconstruction.n == 3);
        CHECK(out.reconstruction.c == 3);
        CHECK(out.reconstruction.h == 64);
        CHECK(out.reconstruction.w == 64);
        CHECK(out.embedding.size() == 3 * 32);
        CHECK(std::equal(out.embedding.begin(), out.embedding.begin() + 32, out.embedding.begin() + 64));
        for (float v : out.reconstruction.data) CHECK((v > 0 && v < 1));
    }

    TEST_CASE("zero final layer gives a zero embedding")
    {
        auto net = cae_init(4);
        auto params = net.parameters();
        std::vector<ParamView<float>> enc;
        for (auto& p : params)
            if (p.name.starts_with("encoder.")) enc.push_back(p);
        REQUIRE(enc.size() >= 2);
        for (auto* p : {&enc[enc.size() - 2], &enc[enc.size() - 1]}) std::fill(p->value, p->value + p->size, 0.0f);
        const auto z = encode_all(net, random_tiles(4, 2));
        for (const auto& e : z)
            for (float v : e) CHECK(v == 0.0f);
    }

    TEST_CASE("gradient check on the reduced net")
    {
        const auto arch = CaeArchitecture::reduced();
        Autoencoder<double> net(arch, 5);
        const auto res = gradient_check(net, random_input(arch, 2, 6));
        CHECK(res.checked == net.parameter_count());
        INFO("worst ", res.worst_parameter);
        CHECK(res.max_relative_error < 1e-3);
    }

    TEST_CASE("gradient check with zero input and zero weights")
    {
        const auto arch = CaeArchitecture::reduced();
        Autoencoder<double> net(arch, 5);
        for (auto& p : net.parameters()) std::fill(p.value, p.value + p.size, 0.0);
        const Tensor<double> x(2, arch.in_channels, arch.input_size, arch.input_size);
        const auto res = gradient_check(net, x);
        CHECK(res.max_absolute_error < 1e-6);
    }

    TEST_CASE("gradient check on the linear variant is exact to rounding")
    {
        auto arch = CaeArchitecture::reduced();
        arch.activation = Activation::identity;
        arch.batch_norm = false;
        arch.sigmoid_output = false;
        Autoencoder<double> net(arch, 7);
        // loss is quadratic in any single weight here, so central differences are
        // exact up to rounding (eps * loss / step) while no max-pool winner flips
        const auto res = gradient_check(net, random_input(arch, 2, 8), 1e-4);
        CHECK(res.max_absolute_error < 1e-10);
        CHECK(res.max_relative_error < 1e-5);
    }

    TEST_CASE("invalid architectures are rejected")
    {
        auto arch = CaeArchitecture{};
        arch.input_size = 60;
        CHECK_THROWS_AS(arch.validate(), InputDomainError);
        arch = CaeArchitecture{};
        arch.kernels[1] = 4;
        CHECK_THROWS_AS(arch.validate(), InputDomainError);
        auto net = cae_init(0);
        CHECK_THROWS_AS(net.encode(Tensor<float>(1, 3, 32, 32)), InputDomainError);
    }

    TEST_CASE("constant tiles are learned")
    {
        DownTile t{};
        for (std::size_t i = 0; i < t.size(); i += 3) {
            t[i] = 210;
            t[i + 1] = 170;
            t[i + 2] = 200;
        }
        const std::vector<DownTile> tiles(64, t);
        auto net = cae_init(9);
        TrainConfig cfg;
        cfg.epochs = 40;
        cfg.batch_size = 16;
        cfg.lr = 0.003;
        const auto rep = cae_train(net, tiles, cfg);
        REQUIRE(rep.epoch_loss.size() == 40);
        CHECK(rep.epoch_loss.back() < 1e-3);
        CHECK(rep.epoch_loss.back() < 0.05 * rep.epoch_loss.front());
    }

    TEST_CASE("single-threaded training is bit-reproducible")
    {
        set_worker_count(1);
        const auto tiles = random_tiles(40, 10);
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 16;
        cfg.seed = 11;
        auto a = cae_init(12), b = cae_init(12);
        const auto ra = cae_train(a, tiles, cfg);
        const auto rb = cae_train(b, tiles, cfg);
        set_worker_count(0);
        CHECK(ra.epoch_loss == rb.epoch_loss);
        CHECK(flatten(a) == flatten(b));
        for (double l : ra.epoch_loss) CHECK(std::isfinite(l));
    }

    TEST_CASE("encoding is per tile")
    {
        auto net = cae_init(13);
        auto tiles = random_tiles(6, 14);
        tiles[5] = tiles[1];
        const auto z = encode_all(net, tiles);
        REQUIRE(z.size() == 6);
        CHECK(z[5] == z[1]);

        std::vector<DownTile> perm{tiles[3], tiles[0], tiles[4], tiles[2], tiles[5], tiles[1]};
        const auto zp = encode_all(net, perm);
        CHECK(zp[0] == z[3]);
        CHECK(zp[1] == z[0]);
        CHECK(zp[3] == z[2]);

        // batch composition does not matter in inference mode
        const auto single = encode_all(net, std::vector<DownTile>{tiles[4]});
        CHECK(single[0] == z[4]);

        const std::vector<std::uint8_t> inside{0, 1, 0, 1, 0, 0};
        const auto roi = encode_roi(net, tiles, inside);
        REQUIRE(roi.size() == 2);
        CHECK(roi[0] == z[1]);
        CHECK(roi[1] == z[3]);
        CHECK_THROWS_AS(encode_roi(net, tiles, std::vector<std::uint8_t>(6, 0)), EmptyRoiError);
    }

    TEST_CASE("weight and embedding files round trip")
    {
        testing::TempDir dir("cae");
        auto net = cae_init(15);
        save_weights(net, dir / "w.bin");
        auto back = load_weights(dir / "w.bin");
        CHECK(back.architecture() == net.architecture());
        CHECK(flatten(back) == flatten(net));
        const auto tiles = random_tiles(3, 16);
        CHECK(encode_all(back, tiles) == encode_all(net, tiles));

        SlideEmbeddings e{"s1", encode_all(net, tiles)};
        save_embeddings(e, dir / "e.emb");
        const auto eb = load_embeddings(dir / "e.emb");
        CHECK(eb.slide_id == "s1");
        CHECK(eb.tiles == e.tiles);

        std::filesystem::resize_file(dir / "w.bin", 100);
        CHECK_THROWS_AS(load_weights(dir / "w.bin"), FormatError);
    }
}
