#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qufleet/segmentation.hpp"

namespace qufleet {

struct LabeledImage {
    Image image;
    int label = 0;
};

struct Dataset {
    std::vector<LabeledImage> samples;

    std::vector<int> labels() const;
    std::vector<int> distinct_labels() const;  // sorted, unique
};

// IDX container files (big-endian magic 0x00000803 for images, 0x00000801 for
// labels). Pixels are min-max scaled to [0, 1] over the whole file.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CSV fallback: one row per image, label first, then height*width pixel
// values (row-major). All rows must agree on --rows/--cols inferred from the
// first row unless height/width are supplied. Values are min-max scaled to
// [0, 1] over the whole file.
Dataset load_csv(const std::string& path, std::uint32_t height = 0, std::uint32_t width = 0);

void save_csv(const Dataset& dataset, const std::string& path);

// Two tightly clustered classes: class labels[0] draws pixels near 0.15 and
// labels[1] near 0.85, with +-0.1 jitter. Linearly separable by construction.
Dataset make_synthetic_two_class(std::size_t n_samples, std::uint32_t height, std::uint32_t width,
                                 std::uint64_t seed, int label_low = 0, int label_high = 1);

} // namespace qufleet
