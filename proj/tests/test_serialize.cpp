#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "fusionnet/rng.hpp"
#include "fusionnet/serialize.hpp"

using namespace fusionnet;

TEST_CASE("base64 round trip at every padding length") {
    Rng rng(1);
    for (size_t len = 0; len <= 32; ++len) {
        std::vector<uint8_t> bytes(len);
        for (auto& b : bytes) b = static_cast<uint8_t>(rng.uniform_int(256));
        const std::string text = base64_encode(bytes.data(), bytes.size());
        CHECK(base64_decode(text) == bytes);
    }
    CHECK(base64_encode(nullptr, 0).empty());
    CHECK_THROWS(base64_decode("abc"));     // not a multiple of 4
    CHECK_THROWS(base64_decode("ab!d"));    // invalid character
}

TEST_CASE("checkpoint json round trip is bit exact") {
    Rng rng(2);
    std::map<std::string, Tensor> params;
    Tensor w = Tensor::zeros(Shape{3, 4});
    for (double& v : w.data) v = rng.normal();
    params.emplace("layer/kernel", std::move(w));
    params.emplace("layer/bias", Tensor(Shape{4}, {0.0, -1.5, 1e-300, 12345.6789}));

    const std::string json = checkpoint_to_json(params);
    const auto back = checkpoint_from_json(json);
    REQUIRE(back.size() == 2);
    CHECK(back.at("layer/kernel").data == params.at("layer/kernel").data);
    CHECK(back.at("layer/bias").data == params.at("layer/bias").data);
    CHECK(back.at("layer/kernel").shape == Shape{3, 4});

    // identical parameters serialize to identical bytes
    CHECK(checkpoint_to_json(params) == json);
}

TEST_CASE("checkpoint file io and version gate") {
    const auto path = std::filesystem::temp_directory_path() / "fusionnet_ckpt_test.json";
    std::map<std::string, Tensor> params;
    params.emplace("w", Tensor(Shape{2}, {1.0, 2.0}));
    save_checkpoint(path.string(), params);
    const auto back = load_checkpoint(path.string());
    CHECK(back.at("w").data == std::vector<double>{1.0, 2.0});
    std::filesystem::remove(path);

    CHECK_THROWS(checkpoint_from_json("{\"version\":2,\"params\":{}}"));
    CHECK_THROWS(load_checkpoint("/nonexistent/checkpoint.json"));
}
