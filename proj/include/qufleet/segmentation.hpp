#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qufleet {

// Row-major intensity grid with values in [0, 1].
struct Image {
    std::string id;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<double> pixels;

    double at(std::uint32_t row, std::uint32_t col) const { return pixels[row * width + col]; }
};

struct Patch {
    std::string source_id;
    std::uint32_t row = 0;  // offset of the patch's top-left pixel
    std::uint32_t col = 0;
    std::vector<double> pixels;  // flattened width x width block, row-major
};

// Valid-only patches at offsets (i*stride, j*stride), row-major; no padding.
// Count is (floor((H-w)/s)+1) * (floor((W-w)/s)+1).
std::vector<Patch> segment(const Image& image, std::uint32_t stride, std::uint32_t width);

// Frozen classical reduction from a flattened patch to encoding angles:
// y = W^T h + b, squashed elementwise to [0, pi] via pi * sigmoid(y).
struct DenseLayer {
    std::uint32_t input_dim = 0;
    std::uint32_t output_dim = 0;
    std::vector<double> weights;  // input_dim x output_dim, row-major (row = input index)
    std::vector<double> bias;     // output_dim

    double weight(std::uint32_t i, std::uint32_t j) const { return weights[i * output_dim + j]; }
};

// Weights drawn uniformly from [0, pi]; the bias centers the pre-squash
// output for mean-level ([0,1]-scaled) inputs so the sigmoid is not pinned.
DenseLayer make_dense(std::uint32_t input_dim, std::uint32_t output_dim, std::uint64_t seed);

std::vector<double> dense_forward_linear(const DenseLayer& layer, std::span<const double> h);
std::vector<double> dense_forward(const DenseLayer& layer, std::span<const double> h);

} // namespace qufleet
