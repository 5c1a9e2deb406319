#include "fusionnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "fusionnet/png_io.hpp"
#include "fusionnet/rng.hpp"

namespace fusionnet {

namespace fs = std::filesystem;

DatasetManifest scan_dataset(const std::string& root, const std::vector<std::string>& classes) {
    if (!fs::is_directory(root)) throw std::runtime_error("scan_dataset: not a directory: " + root);

    std::vector<std::string> class_names = classes;
    const bool defaults_present = std::all_of(class_names.begin(), class_names.end(), [&](const std::string& name) {
        return fs::is_directory(fs::path(root) / name);
    });
    if (!defaults_present) {
        // fall back to whatever class directories exist, alphabetically
        class_names.clear();
        for (const auto& entry : fs::directory_iterator(root)) {
            if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
        }
        std::sort(class_names.begin(), class_names.end());
    }
    if (class_names.empty()) throw std::runtime_error("scan_dataset: no class directories under " + root);

    DatasetManifest manifest;
    manifest.root = root;
    manifest.classes = class_names;
    for (size_t c = 0; c < class_names.size(); ++c) {
        std::vector<std::string> paths;
        const fs::path dir = fs::path(root) / class_names[c];
        if (!fs::is_directory(dir)) throw std::runtime_error("scan_dataset: missing class directory " + dir.string());
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".png") {
                paths.push_back(entry.path().string());
            }
        }
        if (paths.empty()) throw std::runtime_error("scan_dataset: class '" + class_names[c] + "' has no png files");
        std::sort(paths.begin(), paths.end());
        for (std::string& path : paths) manifest.samples.emplace_back(std::move(path), static_cast<int>(c));
    }
    return manifest;
}

void write_manifest_csv(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_manifest_csv: cannot write " + path);
    out << "path,label\n";
    for (const auto& [sample_path, label] : manifest.samples) out << sample_path << "," << label << "\n";
}

SplitIndices split(const DatasetManifest& manifest, const SplitSpec& spec) {
    if (spec.train <= 0.0 || spec.val <= 0.0 || spec.test <= 0.0) {
        throw std::invalid_argument("split: ratios must be positive");
    }
    if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
        throw std::invalid_argument("split: ratios must sum to 1");
    }

    std::vector<std::vector<int64_t>> per_class;
    for (size_t i = 0; i < manifest.samples.size(); ++i) {
        const int label = manifest.samples[i].second;
        if (label >= static_cast<int>(per_class.size())) per_class.resize(static_cast<size_t>(label) + 1);
        per_class[static_cast<size_t>(label)].push_back(static_cast<int64_t>(i));
    }

    SplitIndices out;
    Rng master(spec.seed);
    for (size_t c = 0; c < per_class.size(); ++c) {
        std::vector<int64_t>& indices = per_class[c];
        const int64_t n = static_cast<int64_t>(indices.size());
        if (n < 3) {
            throw std::invalid_argument("split: class " + std::to_string(c) + " has only " + std::to_string(n) +
                                        " samples (need >= 3)");
        }
        Rng rng = master.fork(c);
        shuffle(indices, rng);
        // val/test round half-up; the remainder goes to train
        const int64_t n_val = std::llround(static_cast<double>(n) * spec.val);
        const int64_t n_test = std::llround(static_cast<double>(n) * spec.test);
        const int64_t n_train = n - n_val - n_test;
        if (n_train < 0) throw std::invalid_argument("split: ratios leave no training samples for class " + std::to_string(c));
        for (int64_t i = 0; i < n_train; ++i) out.train.push_back(indices[static_cast<size_t>(i)]);
        for (int64_t i = n_train; i < n_train + n_val; ++i) out.val.push_back(indices[static_cast<size_t>(i)]);
        for (int64_t i = n_train + n_val; i < n; ++i) out.test.push_back(indices[static_cast<size_t>(i)]);
    }
    return out;
}

Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w) {
    if (image.shape.rank() != 3) throw std::invalid_argument("resize_bilinear: expects rank-3 (H,W,C)");
    const int64_t in_h = image.shape.dim(0), in_w = image.shape.dim(1), c = image.shape.dim(2);
    Tensor out = Tensor::zeros(Shape{out_h, out_w, c});
    const double scale_h = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double scale_w = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (int64_t y = 0; y < out_h; ++y) {
        const double sy = (static_cast<double>(y) + 0.5) * scale_h - 0.5;
        const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sy)), 0, in_h - 1);
        const int64_t y1 = std::min<int64_t>(y0 + 1, in_h - 1);
        const double fy = std::clamp(sy - static_cast<double>(y0), 0.0, 1.0);
        for (int64_t x = 0; x < out_w; ++x) {
            const double sx = (static_cast<double>(x) + 0.5) * scale_w - 0.5;
            const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sx)), 0, in_w - 1);
            const int64_t x1 = std::min<int64_t>(x0 + 1, in_w - 1);
            const double fx = std::clamp(sx - static_cast<double>(x0), 0.0, 1.0);
            for (int64_t ch = 0; ch < c; ++ch) {
                const double top = image.data[(y0 * in_w + x0) * c + ch] * (1.0 - fx) +
                                   image.data[(y0 * in_w + x1) * c + ch] * fx;
                const double bottom = image.data[(y1 * in_w + x0) * c + ch] * (1.0 - fx) +
                                      image.data[(y1 * in_w + x1) * c + ch] * fx;
                out.data[(y * out_w + x) * c + ch] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    return out;
}

Tensor load_and_preprocess(const std::string& path, const Shape& target) {
    if (target.rank() != 3) throw std::invalid_argument("load_and_preprocess: target must be rank-3 (H,W,C)");
    const int64_t want_c = target.dim(2);
    if (want_c != 1 && want_c != 3) throw std::invalid_argument("load_and_preprocess: target channels must be 1 or 3");

    const ImageU8 raw = read_png(path);
    Tensor image = Tensor::zeros(Shape{raw.height, raw.width, want_c});
    const int64_t pixels = raw.height * raw.width;
    for (int64_t i = 0; i < pixels; ++i) {
        if (raw.channels == want_c) {
            for (int64_t ch = 0; ch < want_c; ++ch) {
                image.data[i * want_c + ch] = static_cast<double>(raw.pixels[i * raw.channels + ch]);
            }
        } else if (raw.channels == 1) {
            for (int64_t ch = 0; ch < want_c; ++ch) {
                image.data[i * want_c + ch] = static_cast<double>(raw.pixels[i]);
            }
        } else {
            double sum = 0.0;
            for (int64_t ch = 0; ch < raw.channels; ++ch) sum += static_cast<double>(raw.pixels[i * raw.channels + ch]);
            image.data[i] = sum / static_cast<double>(raw.channels);
        }
    }
    if (raw.height != target.dim(0) || raw.width != target.dim(1)) {
        image = resize_bilinear(image, target.dim(0), target.dim(1));
    }
    for (double& v : image.data) v = v / 127.5 - 1.0;
    return image;
}

Tensor warp_affine(const Tensor& image, double shear, double zoom) {
    if (image.shape.rank() != 3) throw std::invalid_argument("warp_affine: expects rank-3 (H,W,C)");
    if (zoom <= 0.0) throw std::invalid_argument("warp_affine: zoom must be positive");
    const int64_t h = image.shape.dim(0), w = image.shape.dim(1), c = image.shape.dim(2);
    const double cy = static_cast<double>(h - 1) / 2.0;
    const double cx = static_cast<double>(w - 1) / 2.0;
    Tensor out = Tensor::zeros(image.shape);
    for (int64_t y = 0; y < h; ++y) {
        const double dy = static_cast<double>(y) - cy;
        const double sy = cy + dy / zoom;
        for (int64_t x = 0; x < w; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double sx = cx + (dx - shear * dy) / zoom;
            // bilinear sample with edge replication
            const double fy_pos = std::clamp(sy, 0.0, static_cast<double>(h - 1));
            const double fx_pos = std::clamp(sx, 0.0, static_cast<double>(w - 1));
            const int64_t y0 = static_cast<int64_t>(std::floor(fy_pos));
            const int64_t x0 = static_cast<int64_t>(std::floor(fx_pos));
            const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
            const int64_t x1 = std::min<int64_t>(x0 + 1, w - 1);
            const double fy = fy_pos - static_cast<double>(y0);
            const double fx = fx_pos - static_cast<double>(x0);
            for (int64_t ch = 0; ch < c; ++ch) {
                const double top =
                    image.data[(y0 * w + x0) * c + ch] * (1.0 - fx) + image.data[(y0 * w + x1) * c + ch] * fx;
                const double bottom =
                    image.data[(y1 * w + x0) * c + ch] * (1.0 - fx) + image.data[(y1 * w + x1) * c + ch] * fx;
                out.data[(y * w + x) * c + ch] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    return out;
}

Tensor augment(const Tensor& image, uint64_t seed) {
    Rng rng(seed);
    const double shear = rng.uniform(-0.1, 0.1);
    const double zoom = rng.uniform(0.9, 1.1);
    return warp_affine(image, shear, zoom);
}

LabelledData synthesize(int64_t n_per_class, uint64_t seed, int classes, int64_t size) {
    if (n_per_class < 1) throw std::invalid_argument("synthesize: n_per_class must be >= 1");
    if (classes < 2 || classes > 3) throw std::invalid_argument("synthesize: classes must be 2 or 3");

    LabelledData data;
    data.classes = classes;
    Rng rng(seed);
    const double background = -0.8;
    const double noise_sigma = 0.1;

    for (int cls = 0; cls < classes; ++cls) {
        for (int64_t i = 0; i < n_per_class; ++i) {
            Tensor img = Tensor::full(Shape{size, size, 1}, background);
            if (cls == 0) {
                // bright blob centered in the lower-left quadrant
                const double blob_cy = 0.75 * static_cast<double>(size) + rng.uniform(-2.0, 2.0);
                const double blob_cx = 0.25 * static_cast<double>(size) + rng.uniform(-2.0, 2.0);
                const double sigma = 3.5;
                for (int64_t y = 0; y < size; ++y) {
                    for (int64_t x = 0; x < size; ++x) {
                        const double dy = static_cast<double>(y) - blob_cy;
                        const double dx = static_cast<double>(x) - blob_cx;
                        img.data[y * size + x] += 1.6 * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                    }
                }
            } else if (cls == 1) {
                const double phase = rng.uniform(0.0, 8.0);
                for (int64_t y = 0; y < size; ++y) {
                    const double band = 0.5 * std::sin(2.0 * M_PI * (static_cast<double>(y) + phase) / 8.0);
                    for (int64_t x = 0; x < size; ++x) img.data[y * size + x] += band;
                }
            }
            for (double& v : img.data) v = std::clamp(v + rng.normal(0.0, noise_sigma), -1.0, 1.0);
            data.images.push_back(std::move(img));
            data.labels.push_back(cls);
        }
    }
    return data;
}

Tensor stack(const std::vector<Tensor>& images) {
    std::vector<int64_t> all(images.size());
    for (size_t i = 0; i < images.size(); ++i) all[i] = static_cast<int64_t>(i);
    return stack(images, all);
}

Tensor stack(const std::vector<Tensor>& images, const std::vector<int64_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("stack: no images");
    const Shape& base = images.at(static_cast<size_t>(indices[0])).shape;
    std::vector<int64_t> dims{static_cast<int64_t>(indices.size())};
    for (int64_t d : base.dims()) dims.push_back(d);
    Tensor out = Tensor::zeros(Shape(dims));
    const int64_t stride = base.elements();
    for (size_t i = 0; i < indices.size(); ++i) {
        const Tensor& img = images.at(static_cast<size_t>(indices[i]));
        if (!(img.shape == base)) throw std::invalid_argument("stack: image shapes differ");
        std::copy(img.data.begin(), img.data.end(), out.data.begin() + static_cast<int64_t>(i) * stride);
    }
    return out;
}

}  // namespace fusionnet
