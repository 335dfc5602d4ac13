#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <set>

#include "exfilab/data.hpp"
#include "exfilab/train.hpp"

using namespace exfilab;

namespace {

std::filesystem::path tmp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "exfilab_data_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("synth_generate: determinism and class balance") {
    SynthSpec spec;
    Dataset a = synth_generate(spec, 100, Split::train);
    Dataset b = synth_generate(spec, 100, Split::train);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);

    std::vector<int> hist(spec.classes, 0);
    for (uint16_t y : a.labels) ++hist[y];
    int lo = *std::min_element(hist.begin(), hist.end());
    int hi = *std::max_element(hist.begin(), hist.end());
    CHECK(hi - lo <= 1);
}

TEST_CASE("synth_generate: zero noise collapses a class to its pattern") {
    SynthSpec spec;
    spec.noise_std = 0.0;
    Dataset ds = synth_generate(spec, 64, Split::train);
    for (size_t i = spec.classes; i < ds.size(); ++i) {
        if (ds.labels[i] != ds.labels[i % spec.classes]) continue;
        Tensor a = ds.image(i);
        Tensor b = ds.image(i % spec.classes);
        CHECK(a.data == b.data);
    }
}

TEST_CASE("synth_generate: train and test streams never collide") {
    SynthSpec spec;
    Dataset train = synth_generate(spec, 256, Split::train);
    Dataset test = synth_generate(spec, 256, Split::test);
    std::set<std::vector<double>> seen;
    for (size_t i = 0; i < train.size(); ++i) {
        auto begin = train.images.begin() + static_cast<long>(i * train.pixels());
        seen.insert(std::vector<double>(begin, begin + static_cast<long>(train.pixels())));
    }
    for (size_t i = 0; i < test.size(); ++i) {
        auto begin = test.images.begin() + static_cast<long>(i * test.pixels());
        CHECK(seen.count(std::vector<double>(begin, begin + static_cast<long>(test.pixels()))) ==
              0);
    }
}

TEST_CASE("synth_generate: a small MLP learns the task quickly") {
    SynthSpec spec;  // noise 0.1
    Dataset train = synth_generate(spec, 512, Split::train);
    Dataset test = synth_generate(spec, 256, Split::test);
    Rng rng(5);
    Network net = make_mlp({256, 64, 8}, Activation::relu, Activation::identity, rng);
    TrainConfig tc;
    tc.epochs = 50;
    tc.lr = 1e-3;
    tc.seed = 5;
    train_classifier(net, train, tc);
    CHECK(evaluate_classifier(net, test).accuracy >= 0.9);
}

TEST_CASE("dataset files: roundtrip bit-exact, empty file is 20 bytes") {
    SynthSpec spec;
    Dataset ds = synth_generate(spec, 30, Split::train);
    auto path = tmp_path("ds.mds");
    save_dataset(ds, path);
    Dataset back = load_dataset(path);
    CHECK(back.height == ds.height);
    CHECK(back.labels == ds.labels);
    for (size_t i = 0; i < ds.images.size(); ++i)
        CHECK(static_cast<float>(back.images[i]) == static_cast<float>(ds.images[i]));

    // save(load(x)) is byte-identical to save(x)
    auto path2 = tmp_path("ds2.mds");
    save_dataset(back, path2);
    CHECK(detail::read_file_bytes(path) == detail::read_file_bytes(path2));

    Dataset empty;
    empty.height = 16;
    empty.width = 16;
    empty.classes = 8;
    auto path3 = tmp_path("empty.mds");
    CHECK(save_dataset(empty, path3) == 20);
}

TEST_CASE("load_dataset: validation errors on crafted files") {
    using detail::put_f32;
    using detail::put_u16;
    using detail::put_u32;

    auto write_file = [&](const std::vector<uint8_t>& bytes, const std::string& name) {
        auto p = tmp_path(name);
        detail::write_file_bytes(p, bytes);
        return p;
    };

    SECTION("bad magic") {
        std::vector<uint8_t> bytes{'M', 'D', 'S', '9'};
        for (int i = 0; i < 4; ++i) put_u32(bytes, 0);
        CHECK_THROWS_AS(load_dataset(write_file(bytes, "magic.mds")), ParseError);
    }
    SECTION("pixel outside [0,1]") {
        std::vector<uint8_t> bytes{'M', 'D', 'S', '1'};
        put_u32(bytes, 1);
        put_u32(bytes, 1);
        put_u32(bytes, 1);
        put_u32(bytes, 2);
        put_u16(bytes, 0);
        put_f32(bytes, 1.5f);
        CHECK_THROWS_WITH(load_dataset(write_file(bytes, "pixel.mds")),
                          Catch::Matchers::ContainsSubstring("outside [0,1]"));
    }
    SECTION("label >= K") {
        std::vector<uint8_t> bytes{'M', 'D', 'S', '1'};
        put_u32(bytes, 1);
        put_u32(bytes, 1);
        put_u32(bytes, 1);
        put_u32(bytes, 2);
        put_u16(bytes, 2);
        put_f32(bytes, 0.5f);
        CHECK_THROWS_AS(load_dataset(write_file(bytes, "label.mds")), ParseError);
    }
    SECTION("truncated pixels") {
        std::vector<uint8_t> bytes{'M', 'D', 'S', '1'};
        put_u32(bytes, 1);
        put_u32(bytes, 2);
        put_u32(bytes, 2);
        put_u32(bytes, 2);
        put_u16(bytes, 0);
        put_f32(bytes, 0.5f);  // 1 of 4 pixels
        CHECK_THROWS_AS(load_dataset(write_file(bytes, "trunc.mds")), ParseError);
    }
    SECTION("trailing bytes") {
        std::vector<uint8_t> bytes{'M', 'D', 'S', '1'};
        put_u32(bytes, 0);
        put_u32(bytes, 1);
        put_u32(bytes, 1);
        put_u32(bytes, 2);
        bytes.push_back(0);
        CHECK_THROWS_AS(load_dataset(write_file(bytes, "trail.mds")), ParseError);
    }
}

TEST_CASE("save_dataset refuses pixels outside the unit range") {
    Dataset ds;
    ds.height = 1;
    ds.width = 1;
    ds.classes = 2;
    ds.labels = {0};
    ds.images = {1.5};
    CHECK_THROWS_AS(save_dataset(ds, tmp_path("bad.mds")), NumericError);
}

TEST_CASE("noise_dataset: deterministic and in range") {
    Dataset a = noise_dataset(8, 8, 4, {0, 1, 2, 3}, 42);
    Dataset b = noise_dataset(8, 8, 4, {0, 1, 2, 3}, 42);
    CHECK(a.images == b.images);
    for (double v : a.images) {
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}
