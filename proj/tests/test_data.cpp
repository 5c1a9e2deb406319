#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "fusionnet/data.hpp"
#include "fusionnet/png_io.hpp"
#include "fusionnet/rng.hpp"

using namespace fusionnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fusionnet_test_" + std::to_string(Rng(::time(nullptr)).next_u64() % 1000000));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_constant_png(const fs::path& path, int64_t h, int64_t w, uint8_t value, int64_t channels = 1) {
    ImageU8 img;
    img.height = h;
    img.width = w;
    img.channels = channels;
    img.pixels.assign(static_cast<size_t>(h * w * channels), value);
    write_png(path.string(), img);
}

}  // namespace

TEST_CASE("preprocess maps the 8-bit endpoints to exactly -1 and +1") {
    TempDir tmp;
    write_constant_png(tmp.path / "white.png", 8, 8, 255);
    write_constant_png(tmp.path / "black.png", 8, 8, 0);

    const Tensor white = load_and_preprocess((tmp.path / "white.png").string(), Shape{8, 8, 1});
    for (double v : white.data) CHECK(v == 1.0);

    const Tensor black = load_and_preprocess((tmp.path / "black.png").string(), Shape{8, 8, 1});
    for (double v : black.data) CHECK(v == -1.0);
}

TEST_CASE("same-size resize is the identity") {
    Rng rng(1);
    Tensor img = Tensor::zeros(Shape{9, 7, 3});
    for (double& v : img.data) v = rng.uniform(0.0, 255.0);
    const Tensor out = resize_bilinear(img, 9, 7);
    for (int64_t i = 0; i < img.size(); ++i) {
        CHECK(std::abs(out.data[static_cast<size_t>(i)] - img.data[static_cast<size_t>(i)]) <= 1e-12);
    }
}

TEST_CASE("2x2 to 4x4 bilinear matches the hand-evaluated formula") {
    const Tensor img(Shape{2, 2, 1}, {0, 255, 255, 0});
    const Tensor out = resize_bilinear(img, 4, 4);
    // independent evaluation: source coords (x+0.5)/2 - 0.5, edge clamped
    auto sample = [&](double sy, double sx) {
        const double cy = std::clamp(sy, 0.0, 1.0), cx = std::clamp(sx, 0.0, 1.0);
        const int y0 = static_cast<int>(std::floor(cy)), x0 = static_cast<int>(std::floor(cx));
        const int y1 = std::min(y0 + 1, 1), x1 = std::min(x0 + 1, 1);
        const double fy = cy - y0, fx = cx - x0;
        auto at = [&](int y, int x) { return img.data[static_cast<size_t>(y * 2 + x)]; };
        return (at(y0, x0) * (1 - fx) + at(y0, x1) * fx) * (1 - fy) + (at(y1, x0) * (1 - fx) + at(y1, x1) * fx) * fy;
    };
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const double expected = sample((y + 0.5) * 0.5 - 0.5, (x + 0.5) * 0.5 - 0.5);
            CHECK(std::abs(out.data[static_cast<size_t>(y * 4 + x)] - expected) <= 1e-12);
        }
    }
}

TEST_CASE("grayscale replicates into rgb targets; rgb averages into gray") {
    TempDir tmp;
    write_constant_png(tmp.path / "gray.png", 4, 4, 100, 1);
    const Tensor rgb = load_and_preprocess((tmp.path / "gray.png").string(), Shape{4, 4, 3});
    CHECK(rgb.shape == Shape{4, 4, 3});
    for (int64_t i = 0; i < 16; ++i) {
        CHECK(rgb.data[static_cast<size_t>(i * 3)] == rgb.data[static_cast<size_t>(i * 3 + 1)]);
        CHECK(rgb.data[static_cast<size_t>(i * 3)] == rgb.data[static_cast<size_t>(i * 3 + 2)]);
    }

    ImageU8 color;
    color.height = color.width = 2;
    color.channels = 3;
    color.pixels = {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255};
    write_png((tmp.path / "color.png").string(), color);
    const Tensor gray = load_and_preprocess((tmp.path / "color.png").string(), Shape{2, 2, 1});
    CHECK(gray.data[0] == doctest::Approx(85.0 / 127.5 - 1.0));
    CHECK(gray.data[3] == doctest::Approx(1.0));
}

TEST_CASE("png round trip and missing-file error") {
    TempDir tmp;
    ImageU8 img;
    img.height = 3;
    img.width = 5;
    img.channels = 1;
    Rng rng(2);
    img.pixels.resize(15);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));
    write_png((tmp.path / "a.png").string(), img);
    const ImageU8 back = read_png((tmp.path / "a.png").string());
    CHECK(back.pixels == img.pixels);
    CHECK(back.height == 3);
    CHECK(back.width == 5);

    CHECK_THROWS(read_png((tmp.path / "missing.png").string()));
}

TEST_CASE("warp_affine: identity parameters are exact") {
    Rng rng(3);
    Tensor img = Tensor::zeros(Shape{16, 16, 1});
    for (double& v : img.data) v = rng.uniform(-1.0, 1.0);
    const Tensor out = warp_affine(img, 0.0, 1.0);
    for (int64_t i = 0; i < img.size(); ++i) {
        CHECK(std::abs(out.data[static_cast<size_t>(i)] - img.data[static_cast<size_t>(i)]) <= 1e-12);
    }
}

TEST_CASE("augment: same seed gives bit-identical output") {
    Rng rng(4);
    Tensor img = Tensor::zeros(Shape{16, 16, 1});
    for (double& v : img.data) v = rng.uniform(-1.0, 1.0);
    const Tensor a = augment(img, 99);
    const Tensor b = augment(img, 99);
    CHECK(a.data == b.data);
    const Tensor c = augment(img, 100);
    CHECK(a.data != c.data);
}

TEST_CASE("zoom grows a centered disk by the zoom factor") {
    // 64x64 disk of radius 12; thresholded area ~ pi r^2
    const int64_t n = 64;
    Tensor img = Tensor::full(Shape{n, n, 1}, -1.0);
    const double c = (n - 1) / 2.0;
    for (int64_t y = 0; y < n; ++y) {
        for (int64_t x = 0; x < n; ++x) {
            if (std::hypot(y - c, x - c) <= 12.0) img.data[static_cast<size_t>(y * n + x)] = 1.0;
        }
    }
    auto area = [&](const Tensor& t) {
        int64_t count = 0;
        for (double v : t.data) count += v > 0.0;
        return static_cast<double>(count);
    };
    const Tensor zoomed = warp_affine(img, 0.0, 1.1);
    const double radius_ratio = std::sqrt(area(zoomed) / area(img));
    CHECK(radius_ratio == doctest::Approx(1.1).epsilon(0.02));
}

TEST_CASE("synthesize: determinism, arity, and class statistics") {
    const LabelledData a = synthesize(5, 42);
    const LabelledData b = synthesize(5, 42);
    REQUIRE(a.images.size() == 15);
    CHECK(a.labels == b.labels);
    for (size_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i].data == b.images[i].data);

    const LabelledData single = synthesize(1, 7);
    CHECK(single.images.size() == 3);

    // class 0's lower-left quadrant mean is far above class 2's
    const LabelledData big = synthesize(20, 9);
    auto quadrant_mean = [](const Tensor& img) {
        double sum = 0.0;
        for (int64_t y = 16; y < 32; ++y) {
            for (int64_t x = 0; x < 16; ++x) sum += img.data[static_cast<size_t>(y * 32 + x)];
        }
        return sum / 256.0;
    };
    double class0 = 0.0, class2 = 0.0;
    for (int i = 0; i < 20; ++i) {
        class0 += quadrant_mean(big.images[static_cast<size_t>(i)]);
        class2 += quadrant_mean(big.images[static_cast<size_t>(40 + i)]);
    }
    class0 /= 20;
    class2 /= 20;
    CHECK(class0 - class2 > 3.0 * 0.1);  // three noise sigmas
}

TEST_CASE("values stay inside [-1, 1]") {
    const LabelledData data = synthesize(10, 5);
    for (const Tensor& img : data.images) {
        for (double v : img.data) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

namespace {
DatasetManifest fake_manifest(const std::vector<int64_t>& class_sizes) {
    DatasetManifest manifest;
    for (size_t c = 0; c < class_sizes.size(); ++c) {
        manifest.classes.push_back("class" + std::to_string(c));
        for (int64_t i = 0; i < class_sizes[c]; ++i) {
            manifest.samples.emplace_back("img" + std::to_string(c) + "_" + std::to_string(i), static_cast<int>(c));
        }
    }
    return manifest;
}
}  // namespace

TEST_CASE("split: the published 21272-sample partition") {
    const DatasetManifest manifest = fake_manifest({21272});
    const SplitIndices s = split(manifest, SplitSpec{});
    CHECK(s.train.size() == 12157);
    CHECK(s.val.size() == 3219);
    CHECK(s.test.size() == 5896);
}

TEST_CASE("split: thirds on nine balanced samples") {
    const DatasetManifest manifest = fake_manifest({3, 3, 3});
    SplitSpec spec;
    spec.train = spec.val = spec.test = 1.0 / 3.0;
    const SplitIndices s = split(manifest, spec);
    CHECK(s.train.size() == 3);
    CHECK(s.val.size() == 3);
    CHECK(s.test.size() == 3);
}

TEST_CASE("split: deterministic, disjoint, exhaustive, stratified") {
    const DatasetManifest manifest = fake_manifest({40, 25, 35});
    SplitSpec spec;
    spec.seed = 11;
    const SplitIndices a = split(manifest, spec);
    const SplitIndices b = split(manifest, spec);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);

    std::set<int64_t> all;
    for (int64_t i : a.train) all.insert(i);
    for (int64_t i : a.val) all.insert(i);
    for (int64_t i : a.test) all.insert(i);
    CHECK(all.size() == manifest.samples.size());  // disjoint and exhaustive

    // per-class val counts stay within one sample of the exact ratio
    for (int cls = 0; cls < 3; ++cls) {
        int64_t n_class = 0, n_val = 0;
        for (const auto& [path, label] : manifest.samples) n_class += label == cls;
        for (int64_t i : a.val) n_val += manifest.samples[static_cast<size_t>(i)].second == cls;
        CHECK(std::abs(static_cast<double>(n_val) - spec.val * static_cast<double>(n_class)) <= 1.0);
    }
}

TEST_CASE("split: rejects ratio and size violations") {
    SplitSpec bad;
    bad.train = 0.5;
    bad.val = 0.2;
    bad.test = 0.2;
    CHECK_THROWS_AS(split(fake_manifest({10}), bad), std::invalid_argument);
    CHECK_THROWS_AS(split(fake_manifest({2}), SplitSpec{}), std::invalid_argument);
}

TEST_CASE("dataset scan and manifest csv") {
    TempDir tmp;
    for (const char* cls : {"covid", "pneumonia", "normal"}) {
        fs::create_directories(tmp.path / cls);
        write_constant_png(tmp.path / cls / "a.png", 4, 4, 128);
        write_constant_png(tmp.path / cls / "b.png", 4, 4, 128);
    }
    const DatasetManifest manifest = scan_dataset(tmp.path.string());
    CHECK(manifest.classes == std::vector<std::string>{"covid", "pneumonia", "normal"});
    CHECK(manifest.samples.size() == 6);
    CHECK(manifest.samples[0].second == 0);

    write_manifest_csv(manifest, (tmp.path / "manifest.csv").string());
    CHECK(fs::exists(tmp.path / "manifest.csv"));

    CHECK_THROWS(scan_dataset((tmp.path / "nope").string()));
}
