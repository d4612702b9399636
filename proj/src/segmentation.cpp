#include "qufleet/segmentation.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "qufleet/errors.hpp"

namespace qufleet {

std::vector<Patch> segment(const Image& image, std::uint32_t stride, std::uint32_t width) {
    if (width == 0 || stride == 0) throw ArgumentError("stride and filter width must be positive");
    if (image.height < width || image.width < width)
        throw ShapeError("filter width " + std::to_string(width) + " exceeds image " +
                         std::to_string(image.height) + "x" + std::to_string(image.width));
    if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width)
        throw ShapeError("pixel buffer does not match image dimensions");

    const std::uint32_t rows = (image.height - width) / stride + 1;
    const std::uint32_t cols = (image.width - width) / stride + 1;
    std::vector<Patch> patches;
    patches.reserve(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j) {
            Patch p;
            p.source_id = image.id;
            p.row = i * stride;
            p.col = j * stride;
            p.pixels.reserve(static_cast<std::size_t>(width) * width);
            for (std::uint32_t r = 0; r < width; ++r)
                for (std::uint32_t c = 0; c < width; ++c) p.pixels.push_back(image.at(p.row + r, p.col + c));
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

DenseLayer make_dense(std::uint32_t input_dim, std::uint32_t output_dim, std::uint64_t seed) {
    if (input_dim == 0 || output_dim == 0) throw ShapeError("dense layer needs positive dimensions");
    DenseLayer layer;
    layer.input_dim = input_dim;
    layer.output_dim = output_dim;
    layer.weights.resize(static_cast<std::size_t>(input_dim) * output_dim);
    layer.bias.assign(output_dim, 0.0);

    std::mt19937_64 eng(seed);
    auto uniform = [&eng]() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; };
    for (auto& w : layer.weights) w = uniform() * std::numbers::pi;
    // Center the output at zero for an input of all 0.5.
    for (std::uint32_t j = 0; j < output_dim; ++j) {
        double col_sum = 0;
        for (std::uint32_t i = 0; i < input_dim; ++i) col_sum += layer.weight(i, j);
        layer.bias[j] = -0.5 * col_sum;
    }
    return layer;
}

std::vector<double> dense_forward_linear(const DenseLayer& layer, std::span<const double> h) {
    if (h.size() != layer.input_dim)
        throw ShapeError("dense input length " + std::to_string(h.size()) + " != " +
                         std::to_string(layer.input_dim));
    std::vector<double> y(layer.output_dim, 0.0);
    for (std::uint32_t i = 0; i < layer.input_dim; ++i) {
        const double hi = h[i];
        for (std::uint32_t j = 0; j < layer.output_dim; ++j) y[j] += layer.weight(i, j) * hi;
    }
    for (std::uint32_t j = 0; j < layer.output_dim; ++j) y[j] += layer.bias[j];
    return y;
}

std::vector<double> dense_forward(const DenseLayer& layer, std::span<const double> h) {
    std::vector<double> y = dense_forward_linear(layer, h);
    for (auto& v : y) v = std::numbers::pi / (1.0 + std::exp(-v));
    return y;
}

} // namespace qufleet
