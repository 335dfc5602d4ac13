#include <catch2/catch_amalgamated.hpp>

#include "exfilab/attacks.hpp"
#include "exfilab/metrics.hpp"
#include "exfilab/train.hpp"

using namespace exfilab;

TEST_CASE("key_vector: deterministic, one-hot at zero scale, bounded spread") {
    Tensor a = key_vector(5, 3, 8, 42, 0.1);
    Tensor b = key_vector(5, 3, 8, 42, 0.1);
    CHECK(a.data == b.data);

    Tensor pure = key_vector(5, 3, 8, 42, 0.0);
    for (size_t j = 0; j < 8; ++j) CHECK(pure.data[j] == (j == 3 ? 1.0 : 0.0));

    // distinct indices with the same label differ by at most 2 * scale
    for (uint64_t i = 0; i < 20; ++i) {
        Tensor x = key_vector(i, 2, 8, 42, 0.1);
        Tensor y = key_vector(i + 1, 2, 8, 42, 0.1);
        double d2 = 0.0;
        for (size_t j = 0; j < 8; ++j) d2 += (x.data[j] - y.data[j]) * (x.data[j] - y.data[j]);
        double d = std::sqrt(d2);
        CHECK(d > 0.0);
        CHECK(d <= 2.0 * 0.1 + 1e-12);
    }
    CHECK_THROWS_AS(key_vector(0, 9, 8, 42, 0.1), ArgumentError);
}

TEST_CASE("transpose_train: zero epochs returns the input net and noise reconstructions") {
    SynthSpec spec;
    spec.noise_std = 0.1;
    Dataset train = synth_generate(spec, 64, Split::train);
    Rng rng = Rng::substream(1, 0x4d4f44);
    Network init = make_mlp({256, 32, 8}, Activation::relu, Activation::identity, rng);
    TransposeConfig cfg;
    cfg.num_targets = 16;
    cfg.epochs = 0;
    auto [net, rev] = transpose_train(init, train, cfg);
    for (size_t li = 0; li < init.layers.size(); ++li)
        CHECK(*net.layers[li].weights == *init.layers[li].weights);

    std::vector<size_t> idx(16);
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Tensor keys = transpose_keys(train, idx, cfg.key_seed, cfg.key_noise_scale);
    Tensor recon = transpose_reconstruct(net, rev, keys);
    double mean_ssim = 0.0;
    for (size_t i = 0; i < 16; ++i) {
        Tensor t = train.image(i);
        Tensor r = Tensor::zeros({16, 16});
        std::copy_n(recon.data.begin() + static_cast<long>(i * 256), 256, r.data.begin());
        mean_ssim += ssim(t, r);
    }
    CHECK(mean_ssim / 16.0 < 0.1);
}

TEST_CASE("transpose_train: memorizes targets while holding utility (smoke scale)") {
    SynthSpec spec;
    spec.noise_std = 0.1;
    Dataset train = synth_generate(spec, 256, Split::train);
    Dataset test = synth_generate(spec, 128, Split::test);
    Rng rng = Rng::substream(2, 0x4d4f44);
    Network init = make_mlp({256, 64, 32, 8}, Activation::relu, Activation::identity, rng);
    TransposeConfig cfg;
    cfg.num_targets = 16;
    cfg.epochs = 40;
    cfg.seed = 2;
    auto [net, rev] = transpose_train(init, train, cfg);

    std::vector<size_t> idx(16);
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Tensor keys = transpose_keys(train, idx, cfg.key_seed, cfg.key_noise_scale);
    Tensor recon = transpose_reconstruct(net, rev, keys);
    double mean_ssim = 0.0;
    for (size_t i = 0; i < 16; ++i) {
        Tensor t = train.image(i);
        Tensor r = Tensor::zeros({16, 16});
        std::copy_n(recon.data.begin() + static_cast<long>(i * 256), 256, r.data.begin());
        mean_ssim += ssim(t, r);
    }
    mean_ssim /= 16.0;
    CHECK(mean_ssim >= 0.5);
    CHECK(evaluate_classifier(net, test).accuracy >= 0.8);

    // a pure classification run beats the dual-task run on utility
    Rng rng2 = Rng::substream(2, 0x4d4f44);
    Network init2 = make_mlp({256, 64, 32, 8}, Activation::relu, Activation::identity, rng2);
    TransposeConfig cls_only = cfg;
    cls_only.lr_mem = 0.0;
    auto [cnet, crev] = transpose_train(init2, train, cls_only);
    CHECK(evaluate_classifier(cnet, test).accuracy >=
          evaluate_classifier(net, test).accuracy);

    // reconstruction is a pure function
    Tensor again = transpose_reconstruct(net, rev, keys);
    CHECK(again.data == recon.data);
}

TEST_CASE("dec codec: affine endpoints and roundtrip quality") {
    DecCodec codec = make_downsample_codec(64, 16, 16);
    Tensor zeros = Tensor::zeros({1, 256});
    Tensor lat0 = dec_encode(zeros, codec);
    for (double v : lat0.data) CHECK(v == Catch::Approx(codec.quant.min_val()).margin(1e-12));

    Tensor ones({1, 256}, std::vector<double>(256, 1.0));
    Tensor lat1 = dec_encode(ones, codec);
    for (double v : lat1.data) CHECK(v == Catch::Approx(codec.quant.max_val()).margin(1e-12));

    CHECK(dec_decode(lat0, codec).data == std::vector<double>(256, 0.0));
    for (double v : dec_decode(lat1, codec).data) CHECK(v == Catch::Approx(1.0).margin(1e-12));

    CHECK_THROWS_AS(make_downsample_codec(512, 16, 16), ArgumentError);

    SynthSpec spec;
    spec.noise_std = 0.1;
    Dataset ds = synth_generate(spec, 32, Split::train);
    Tensor images = ds.all_images();
    Tensor roundtrip = dec_decode(dec_encode(images, codec), codec);
    double mean_ssim = 0.0;
    for (size_t i = 0; i < 32; ++i) {
        Tensor t = ds.image(i);
        Tensor r = Tensor::zeros({16, 16});
        std::copy_n(roundtrip.data.begin() + static_cast<long>(i * 256), 256, r.data.begin());
        mean_ssim += ssim(t, r);
    }
    CHECK(mean_ssim / 32.0 >= 0.5);
}

TEST_CASE("linear autoencoder codec: clamped codes, better than a constant image") {
    SynthSpec spec;
    spec.noise_std = 0.1;
    spec.seed = 1042;  // the attacker's own corpus
    Dataset external = synth_generate(spec, 128, Split::train);
    DecCodec codec = train_linear_autoencoder(external, 32, {}, 300, 3e-3, 9);

    SynthSpec spec2 = spec;
    spec2.seed = 2042;
    Dataset eval = synth_generate(spec2, 16, Split::train);
    Tensor images = eval.all_images();
    Tensor lat = dec_encode(images, codec);
    for (double v : lat.data) {
        CHECK(v >= codec.quant.min_val());
        CHECK(v <= codec.quant.max_val());
    }
    Tensor recon = dec_decode(lat, codec);
    double mse = 0.0, mse_const = 0.0;
    double mean = 0.0;
    for (double v : images.data) mean += v;
    mean /= images.data.size();
    for (size_t i = 0; i < images.data.size(); ++i) {
        mse += (recon.data[i] - images.data[i]) * (recon.data[i] - images.data[i]);
        mse_const += (mean - images.data[i]) * (mean - images.data[i]);
    }
    CHECK(mse < mse_const);
}

TEST_CASE("dec_attack_export: n = 0 touches only the two header words") {
    SynthSpec spec;
    spec.noise_std = 0.1;
    Dataset train = synth_generate(spec, 32, Split::train);
    Rng rng = Rng::substream(3, 0x4d4f44);
    Network net = make_mlp({256, 16, 8}, Activation::relu, Activation::identity, rng);
    DecCodec codec = make_downsample_codec(64, 16, 16);
    Tensor no_images = Tensor::zeros({0, 256});
    WeightArchive out = dec_attack_export(net, no_images, codec, codec.quant);
    WeightArchive clean = archive_from_network(net);
    ArchiveDiff d = diff_archives(clean, out);
    CHECK(d.changed_param_fraction <= 2.0 / clean.total_params());
}

TEST_CASE("dec_attack_export: extraction matches the codec roundtrip within quantization error") {
    SynthSpec spec;
    spec.noise_std = 0.1;
    Dataset train = synth_generate(spec, 32, Split::train);
    Rng rng = Rng::substream(4, 0x4d4f44);
    Network net = make_mlp({256, 32, 8}, Activation::relu, Activation::identity, rng);
    DecCodec codec = make_downsample_codec(64, 16, 16);
    std::vector<size_t> idx(8);
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Tensor images = train.batch(idx);
    uint64_t clamps = 0;
    WeightArchive out = dec_attack_export(net, images, codec, codec.quant, &clamps);
    CHECK(clamps == 0);

    // upper halves are untouched
    WeightArchive clean = archive_from_network(net);
    for (uint64_t k = 0; k < clean.total_params(); ++k)
        CHECK((std::bit_cast<uint32_t>(clean.param(k)) & 0xffff0000u) ==
              (std::bit_cast<uint32_t>(out.param(k)) & 0xffff0000u));

    StegoPayload p = extract(out);
    REQUIRE(p.count == 8);
    REQUIRE(p.latent_dim == 64);
    Tensor latents = dec_encode(images, codec);
    for (size_t i = 0; i < p.codes.size(); ++i)
        CHECK(std::fabs(dequantize(p.codes[i], codec.quant) - latents.data[i]) <= 2.5e-5);
}
