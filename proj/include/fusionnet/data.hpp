#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusionnet/tensor.hpp"

namespace fusionnet {

/// Directory-per-class dataset listing. Class ids follow the order of
/// `classes`; samples are sorted by path within each class.
struct DatasetManifest {
    std::string root;
    std::vector<std::string> classes;
    std::vector<std::pair<std::string, int>> samples;  // (path, class id)
};

/// Scans root/<class-name>/*.png. Default class order is covid, pneumonia,
/// normal (ids 0, 1, 2); other directories are picked up alphabetically.
DatasetManifest scan_dataset(const std::string& root,
                             const std::vector<std::string>& classes = {"covid", "pneumonia", "normal"});

void write_manifest_csv(const DatasetManifest& manifest, const std::string& path);

struct SplitSpec {
    // Full-precision fractions of the published 12157/3219/5896 partition of
    // 21272 samples; they round to 0.5715/0.1513/0.2772.
    double train = 12157.0 / 21272.0;
    double val = 3219.0 / 21272.0;
    double test = 5896.0 / 21272.0;
    uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<int64_t> train;
    std::vector<int64_t> val;
    std::vector<int64_t> test;
};

/// Stratified split: per class, val and test sizes round half-up from the
/// ratios and train takes the remainder; assignment order is a seeded
/// shuffle. Rejects classes smaller than 3 samples.
SplitIndices split(const DatasetManifest& manifest, const SplitSpec& spec);

/// Decode, bilinear-resize to (height, width) and map pixel values through
/// x/127.5 - 1 into [-1, 1]. Grayscale replicates across channels when
/// channels == 3; RGB averages down when channels == 1.
Tensor load_and_preprocess(const std::string& path, const Shape& target);

/// Bilinear resample with pixel-center alignment ((x+0.5)*scale - 0.5) and
/// edge clamping; rank-3 (H,W,C).
Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w);

/// Affine warp: horizontal shear by `shear`, uniform zoom about the image
/// center, bilinear sampling with edge replication. shear=0, zoom=1 is the
/// identity.
Tensor warp_affine(const Tensor& image, double shear, double zoom);

/// Random augmentation: shear ~ U[-0.1, 0.1], zoom ~ U[0.9, 1.1], both
/// drawn from the seed.
Tensor augment(const Tensor& image, uint64_t seed);

/// In-memory labelled image set.
struct LabelledData {
    std::vector<Tensor> images;  // rank-3 (H,W,C)
    std::vector<int> labels;
    int classes = 0;
};

/// Synthetic 3-class 32x32 single-channel set, n per class, deterministic
/// per seed: class 0 = bright blob in the lower-left quadrant, class 1 =
/// horizontal bands, class 2 = low-amplitude noise only.
LabelledData synthesize(int64_t n_per_class, uint64_t seed, int classes = 3, int64_t size = 32);

/// Stack rank-3 images (all same shape) into one (N,H,W,C) batch tensor.
Tensor stack(const std::vector<Tensor>& images);
Tensor stack(const std::vector<Tensor>& images, const std::vector<int64_t>& indices);

}  // namespace fusionnet
