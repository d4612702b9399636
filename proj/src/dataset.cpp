#include "qufleet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "qufleet/errors.hpp"
#include "qufleet/textio.hpp"

namespace qufleet {

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

std::vector<int> Dataset::distinct_labels() const {
    std::set<int> uniq;
    for (const auto& s : samples) uniq.insert(s.label);
    return {uniq.begin(), uniq.end()};
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4)) throw ConfigError("truncated IDX file: " + path);
    return (std::uint32_t{buf[0]} << 24) | (std::uint32_t{buf[1]} << 16) | (std::uint32_t{buf[2]} << 8) |
           std::uint32_t{buf[3]};
}

void min_max_scale(Dataset& ds) {
    double lo = 0, hi = 0;
    bool first = true;
    for (const auto& s : ds.samples)
        for (double v : s.image.pixels) {
            if (first) { lo = hi = v; first = false; }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const double span = hi - lo;
    for (auto& s : ds.samples)
        for (double& v : s.image.pixels) v = span > 0 ? (v - lo) / span : 0.0;
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw ConfigError("cannot open " + images_path);
    if (read_be32(imgs, images_path) != 0x00000803u) throw ConfigError("bad IDX image magic in " + images_path);
    const std::uint32_t count = read_be32(imgs, images_path);
    const std::uint32_t height = read_be32(imgs, images_path);
    const std::uint32_t width = read_be32(imgs, images_path);

    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) throw ConfigError("cannot open " + labels_path);
    if (read_be32(labels, labels_path) != 0x00000801u) throw ConfigError("bad IDX label magic in " + labels_path);
    if (read_be32(labels, labels_path) != count)
        throw ConfigError("IDX image/label counts disagree");

    Dataset ds;
    ds.samples.resize(count);
    std::vector<unsigned char> row(static_cast<std::size_t>(height) * width);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!imgs.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size())))
            throw ConfigError("truncated IDX image data: " + images_path);
        char lab = 0;
        if (!labels.read(&lab, 1)) throw ConfigError("truncated IDX label data: " + labels_path);
        auto& s = ds.samples[i];
        s.label = static_cast<unsigned char>(lab);
        s.image.id = "idx" + std::to_string(i);
        s.image.height = height;
        s.image.width = width;
        s.image.pixels.assign(row.begin(), row.end());
    }
    min_max_scale(ds);
    return ds;
}

Dataset load_csv(const std::string& path, std::uint32_t height, std::uint32_t width) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split(line, ',');
        if (fields.size() < 2) throw ConfigError(path + ":" + std::to_string(line_no) + ": too few fields");
        LabeledImage s;
        try {
            s.label = static_cast<int>(parse_i64(fields[0]));
            for (std::size_t i = 1; i < fields.size(); ++i) s.image.pixels.push_back(parse_double(fields[i]));
        } catch (const DecodeError& e) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const std::size_t n = s.image.pixels.size();
        if (height && width) {
            if (n != static_cast<std::size_t>(height) * width)
                throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(static_cast<std::size_t>(height) * width) + " pixels");
            s.image.height = height;
            s.image.width = width;
        } else {
            const auto side = static_cast<std::uint32_t>(std::lround(std::sqrt(static_cast<double>(n))));
            if (static_cast<std::size_t>(side) * side != n)
                throw ConfigError(path + ":" + std::to_string(line_no) +
                                  ": non-square row; pass explicit height/width");
            s.image.height = s.image.width = side;
        }
        s.image.id = "csv" + std::to_string(ds.samples.size());
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw ConfigError(path + ": no samples");
    for (const auto& s : ds.samples)
        if (s.image.pixels.size() != ds.samples[0].image.pixels.size())
            throw ConfigError(path + ": rows disagree on pixel count");
    min_max_scale(ds);
    return ds;
}

void save_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    for (const auto& s : dataset.samples) {
        out << s.label;
        for (double v : s.image.pixels) out << ',' << format_double(v);
        out << '\n';
    }
}

Dataset make_synthetic_two_class(std::size_t n_samples, std::uint32_t height, std::uint32_t width,
                                 std::uint64_t seed, int label_low, int label_high) {
    Dataset ds;
    std::mt19937_64 eng(seed);
    auto uniform = [&eng]() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; };
    for (std::size_t i = 0; i < n_samples; ++i) {
        LabeledImage s;
        const bool high = i % 2 == 1;
        s.label = high ? label_high : label_low;
        s.image.id = "syn" + std::to_string(i);
        s.image.height = height;
        s.image.width = width;
        const double center = high ? 0.85 : 0.15;
        s.image.pixels.resize(static_cast<std::size_t>(height) * width);
        for (auto& v : s.image.pixels) v = std::clamp(center + (uniform() - 0.5) * 0.2, 0.0, 1.0);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

} // namespace qufleet
