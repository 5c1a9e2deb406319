#include "fusionnet/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fusionnet {

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int8_t decode_char(char ch) {
    if (ch >= 'A' && ch <= 'Z') return static_cast<int8_t>(ch - 'A');
    if (ch >= 'a' && ch <= 'z') return static_cast<int8_t>(ch - 'a' + 26);
    if (ch >= '0' && ch <= '9') return static_cast<int8_t>(ch - '0' + 52);
    if (ch == '+') return 62;
    if (ch == '/') return 63;
    return -1;
}
}  // namespace

std::string base64_encode(const uint8_t* data, size_t size) {
    std::string out;
    out.reserve((size + 2) / 3 * 4);
    for (size_t i = 0; i < size; i += 3) {
        uint32_t chunk = static_cast<uint32_t>(data[i]) << 16;
        if (i + 1 < size) chunk |= static_cast<uint32_t>(data[i + 1]) << 8;
        if (i + 2 < size) chunk |= static_cast<uint32_t>(data[i + 2]);
        out.push_back(kAlphabet[(chunk >> 18) & 0x3f]);
        out.push_back(kAlphabet[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < size ? kAlphabet[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < size ? kAlphabet[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw std::invalid_argument("base64: length must be a multiple of 4");
    std::vector<uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (size_t i = 0; i < text.size(); i += 4) {
        uint32_t chunk = 0;
        int pad = 0;
        for (size_t j = 0; j < 4; ++j) {
            const char ch = text[i + j];
            if (ch == '=') {
                ++pad;
                chunk <<= 6;
                continue;
            }
            const int8_t v = decode_char(ch);
            if (v < 0 || pad > 0) throw std::invalid_argument("base64: invalid character");
            chunk = (chunk << 6) | static_cast<uint32_t>(v);
        }
        out.push_back(static_cast<uint8_t>((chunk >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<uint8_t>((chunk >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<uint8_t>(chunk & 0xff));
    }
    return out;
}

namespace {

std::string encode_doubles(const std::vector<double>& values) {
    static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
    return base64_encode(reinterpret_cast<const uint8_t*>(values.data()), values.size() * sizeof(double));
}

std::vector<double> decode_doubles(const std::string& text) {
    const std::vector<uint8_t> bytes = base64_decode(text);
    if (bytes.size() % sizeof(double) != 0) throw std::invalid_argument("checkpoint: payload size is not 8-byte aligned");
    std::vector<double> values(bytes.size() / sizeof(double));
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return values;
}

}  // namespace

std::string checkpoint_to_json(const std::map<std::string, Tensor>& params) {
    nlohmann::json doc;
    doc["version"] = 1;
    nlohmann::json& out = doc["params"];
    out = nlohmann::json::object();
    for (const auto& [name, tensor] : params) {
        out[name] = {{"shape", tensor.shape.dims()}, {"data_b64", encode_doubles(tensor.data)}};
    }
    return doc.dump(2) + "\n";
}

std::map<std::string, Tensor> checkpoint_from_json(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    if (!doc.contains("version") || doc["version"].get<int>() != 1) {
        throw std::invalid_argument("checkpoint: unsupported version");
    }
    std::map<std::string, Tensor> params;
    for (const auto& [name, entry] : doc.at("params").items()) {
        Shape shape(entry.at("shape").get<std::vector<int64_t>>());
        std::vector<double> data = decode_doubles(entry.at("data_b64").get<std::string>());
        params.emplace(name, Tensor(std::move(shape), std::move(data)));
    }
    return params;
}

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out << checkpoint_to_json(params);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_json(text);
}

}  // namespace fusionnet
