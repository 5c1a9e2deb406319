#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fusionnet {

/// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct ImageU8 {
    int64_t height = 0;
    int64_t width = 0;
    int64_t channels = 0;
    std::vector<uint8_t> pixels;
};

/// Reads an 8-bit grayscale or RGB PNG. Palette images are expanded to RGB,
/// alpha is stripped; 16-bit files are rejected.
ImageU8 read_png(const std::string& path);

void write_png(const std::string& path, const ImageU8& image);

}  // namespace fusionnet
