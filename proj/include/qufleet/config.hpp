#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qufleet {

// Line-oriented "key = value" files; '#' starts a comment, blank lines are
// skipped, repeated keys are allowed and preserved in order.
struct KvEntry {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

std::vector<KvEntry> parse_kv_text(const std::string& text, const std::string& origin);
std::vector<KvEntry> load_kv_file(const std::string& path);

class KvView {
public:
    explicit KvView(std::vector<KvEntry> entries, std::string origin)
        : entries_(std::move(entries)), origin_(std::move(origin)) {}

    std::optional<std::string> get(const std::string& key) const;  // last occurrence wins
    std::string get_or(const std::string& key, const std::string& fallback) const;
    std::vector<std::string> all(const std::string& key) const;

    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_i64(const std::string& key, std::int64_t fallback) const;
    std::uint32_t get_u32(const std::string& key, std::uint32_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::string& origin() const { return origin_; }

private:
    std::vector<KvEntry> entries_;
    std::string origin_;
};

KvView load_kv_view(const std::string& path);

// host:port with a numeric port; ConfigError otherwise.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text);

} // namespace qufleet
