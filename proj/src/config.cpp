#include "qufleet/config.hpp"

#include <fstream>
#include <sstream>

#include "qufleet/errors.hpp"
#include "qufleet/textio.hpp"

namespace qufleet {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

} // namespace

std::vector<KvEntry> parse_kv_text(const std::string& text, const std::string& origin) {
    std::vector<KvEntry> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const std::size_t eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        KvEntry e;
        e.key = trim(std::string_view(trimmed).substr(0, eq));
        e.value = trim(std::string_view(trimmed).substr(eq + 1));
        e.line = line_no;
        if (e.key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<KvEntry> load_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_kv_text(buf.str(), path);
}

std::optional<std::string> KvView::get(const std::string& key) const {
    std::optional<std::string> found;
    for (const auto& e : entries_)
        if (e.key == key) found = e.value;
    return found;
}

std::string KvView::get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

std::vector<std::string> KvView::all(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
        if (e.key == key) out.push_back(e.value);
    return out;
}

double KvView::get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
        return parse_double(*v);
    } catch (const DecodeError&) {
        throw ConfigError(origin_ + ": bad number for '" + key + "': " + *v);
    }
}

std::int64_t KvView::get_i64(const std::string& key, std::int64_t fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
        return parse_i64(*v);
    } catch (const DecodeError&) {
        throw ConfigError(origin_ + ": bad integer for '" + key + "': " + *v);
    }
}

std::uint32_t KvView::get_u32(const std::string& key, std::uint32_t fallback) const {
    const auto v = get_i64(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(origin_ + ": '" + key + "' must be non-negative");
    return static_cast<std::uint32_t>(v);
}

bool KvView::get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
    if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
    throw ConfigError(origin_ + ": bad boolean for '" + key + "': " + *v);
}

KvView load_kv_view(const std::string& path) { return KvView(load_kv_file(path), path); }

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
    const std::size_t colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
        throw ConfigError("expected host:port, got '" + text + "'");
    std::uint32_t port;
    try {
        port = parse_u32(std::string_view(text).substr(colon + 1));
    } catch (const DecodeError&) {
        throw ConfigError("bad port in '" + text + "'");
    }
    if (port > 65535) throw ConfigError("port out of range in '" + text + "'");
    return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

} // namespace qufleet
