#include "qufleet/protocol.hpp"

#include <algorithm>

#include "qufleet/errors.hpp"
#include "qufleet/textio.hpp"

namespace qufleet::protocol {

namespace {

void put(std::string& out, std::string_view key, std::string_view value) {
    out += key;
    out += '=';
    out += escape_field(value);
    out += '\n';
}

void put_u64(std::string& out, std::string_view key, std::uint64_t v) { put(out, key, std::to_string(v)); }
void put_i64(std::string& out, std::string_view key, std::int64_t v) { put(out, key, std::to_string(v)); }
void put_f64(std::string& out, std::string_view key, double v) { put(out, key, format_double(v)); }

// Sequential field reader enforcing the canonical key order.
class FieldCursor {
public:
    explicit FieldCursor(std::string_view payload) {
        std::size_t offset = 0;
        while (offset < payload.size()) {
            const std::size_t eol = payload.find('\n', offset);
            if (eol == std::string_view::npos) throw DecodeError("payload line missing newline", offset);
            const std::string_view line = payload.substr(offset, eol - offset);
            const std::size_t eq = line.find('=');
            if (eq == std::string_view::npos || eq == 0) throw DecodeError("payload line missing key", offset);
            fields_.push_back({std::string(line.substr(0, eq)),
                               unescape_field(line.substr(eq + 1)), offset});
            offset = eol + 1;
        }
    }

    std::string require(std::string_view key) {
        if (pos_ >= fields_.size())
            throw DecodeError("missing field '" + std::string(key) + "'", end_offset());
        auto& f = fields_[pos_];
        if (f.key != key)
            throw DecodeError("expected field '" + std::string(key) + "', found '" + f.key + "'", f.offset);
        ++pos_;
        return std::move(f.value);
    }

    std::optional<std::string> accept(std::string_view key) {
        if (pos_ >= fields_.size() || fields_[pos_].key != key) return std::nullopt;
        return require(key);
    }

    void done() const {
        if (pos_ != fields_.size())
            throw DecodeError("unexpected field '" + fields_[pos_].key + "'", fields_[pos_].offset);
    }

private:
    struct Field {
        std::string key;
        std::string value;
        std::size_t offset;
    };
    std::size_t end_offset() const { return fields_.empty() ? 0 : fields_.back().offset; }
    std::vector<Field> fields_;
    std::size_t pos_ = 0;
};

ActiveCircuit parse_active(std::string_view text, std::size_t offset) {
    const std::size_t colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0)
        throw DecodeError("active entry missing ':demand'", offset);
    return {std::string(text.substr(0, colon)), parse_u32(text.substr(colon + 1))};
}

} // namespace

std::string_view submit_status_name(SubmitStatus s) {
    switch (s) {
    case SubmitStatus::Assigned: return "assigned";
    case SubmitStatus::Queued: return "queued";
    case SubmitStatus::Cached: return "cached";
    case SubmitStatus::Duplicate: return "duplicate";
    case SubmitStatus::Rejected: return "rejected";
    }
    throw ArgumentError("unknown submit status");
}

std::string_view type_name(const Body& body) {
    struct Visitor {
        std::string_view operator()(const Register&) { return "REGISTER"; }
        std::string_view operator()(const RegisterAck&) { return "REGISTER_ACK"; }
        std::string_view operator()(const Heartbeat&) { return "HEARTBEAT"; }
        std::string_view operator()(const Assign&) { return "ASSIGN"; }
        std::string_view operator()(const Result&) { return "RESULT"; }
        std::string_view operator()(const Submit&) { return "SUBMIT"; }
        std::string_view operator()(const SubmitAck&) { return "SUBMIT_ACK"; }
        std::string_view operator()(const JobResult&) { return "JOB_RESULT"; }
        std::string_view operator()(const ErrorMsg&) { return "ERROR"; }
    };
    return std::visit(Visitor{}, body);
}

std::string encode_payload(const Message& message) {
    std::string out;
    put(out, "type", type_name(message.body));
    put_u64(out, "corr", message.correlation_id);

    struct Visitor {
        std::string& out;
        void operator()(const Register& m) {
            put(out, "worker_id", m.worker_id);
            put_u64(out, "max_qubits", m.max_qubits);
            put_f64(out, "cru", m.cru);
            if (m.at) put_i64(out, "at", *m.at);
        }
        void operator()(const RegisterAck& m) {
            put(out, "status", m.ok ? "ok" : "rejected");
            put_i64(out, "period_ms", m.heartbeat_period_ms);
            put(out, "detail", m.detail);
        }
        void operator()(const Heartbeat& m) {
            put(out, "worker_id", m.worker_id);
            put_f64(out, "cru", m.cru);
            put_u64(out, "n_active", m.active.size());
            for (const auto& a : m.active) put(out, "active", a.circuit_id + ':' + std::to_string(a.demand));
            if (m.at) put_i64(out, "at", *m.at);
        }
        void operator()(const Assign& m) {
            put(out, "circuit_id", m.circuit_id);
            put_u64(out, "demand", m.demand);
            if (m.shots) put_u64(out, "shots", *m.shots);
            if (m.seed) put_u64(out, "seed", *m.seed);
            put(out, "circuit", m.circuit);
        }
        void operator()(const Result& m) {
            put(out, "circuit_id", m.circuit_id);
            put(out, "worker_id", m.worker_id);
            put(out, "status", m.ok ? "ok" : "error");
            if (m.ok) put_f64(out, "fidelity", m.fidelity);
            else put(out, "error", m.error);
        }
        void operator()(const Submit& m) {
            put(out, "client_id", m.client_id);
            put(out, "circuit_id", m.circuit_id);
            put_u64(out, "demand", m.demand);
            if (m.shots) put_u64(out, "shots", *m.shots);
            if (m.seed) put_u64(out, "seed", *m.seed);
            if (m.at) put_i64(out, "at", *m.at);
            put(out, "circuit", m.circuit);
        }
        void operator()(const SubmitAck& m) {
            put(out, "circuit_id", m.circuit_id);
            put(out, "status", submit_status_name(m.status));
            if (m.status == SubmitStatus::Assigned) put(out, "worker_id", m.worker_id);
            put(out, "detail", m.detail);
        }
        void operator()(const JobResult& m) {
            put(out, "circuit_id", m.circuit_id);
            put(out, "status", m.ok ? "ok" : "error");
            if (m.ok) put_f64(out, "fidelity", m.fidelity);
            else put(out, "error", m.error);
        }
        void operator()(const ErrorMsg& m) {
            put(out, "code", m.code);
            put(out, "detail", m.detail);
        }
    };
    std::visit(Visitor{out}, message.body);
    return out;
}

Message decode_payload(std::string_view payload) {
    FieldCursor cur(payload);
    const std::string type = cur.require("type");
    Message msg;
    msg.correlation_id = parse_u64(cur.require("corr"));

    if (type == "REGISTER") {
        Register m;
        m.worker_id = cur.require("worker_id");
        m.max_qubits = parse_u32(cur.require("max_qubits"));
        m.cru = parse_double(cur.require("cru"));
        if (auto at = cur.accept("at")) m.at = parse_i64(*at);
        msg.body = std::move(m);
    } else if (type == "REGISTER_ACK") {
        RegisterAck m;
        const std::string status = cur.require("status");
        if (status != "ok" && status != "rejected") throw DecodeError("bad status '" + status + "'", 0);
        m.ok = status == "ok";
        m.heartbeat_period_ms = parse_i64(cur.require("period_ms"));
        m.detail = cur.require("detail");
        msg.body = std::move(m);
    } else if (type == "HEARTBEAT") {
        Heartbeat m;
        m.worker_id = cur.require("worker_id");
        m.cru = parse_double(cur.require("cru"));
        const std::uint64_t n = parse_u64(cur.require("n_active"));
        if (n > 100000) throw DecodeError("implausible active count", 0);
        for (std::uint64_t i = 0; i < n; ++i) m.active.push_back(parse_active(cur.require("active"), 0));
        if (auto at = cur.accept("at")) m.at = parse_i64(*at);
        msg.body = std::move(m);
    } else if (type == "ASSIGN") {
        Assign m;
        m.circuit_id = cur.require("circuit_id");
        m.demand = parse_u32(cur.require("demand"));
        if (auto v = cur.accept("shots")) m.shots = parse_u64(*v);
        if (auto v = cur.accept("seed")) m.seed = parse_u64(*v);
        m.circuit = cur.require("circuit");
        msg.body = std::move(m);
    } else if (type == "RESULT") {
        Result m;
        m.circuit_id = cur.require("circuit_id");
        m.worker_id = cur.require("worker_id");
        const std::string status = cur.require("status");
        if (status == "ok") m.ok = true, m.fidelity = parse_double(cur.require("fidelity"));
        else if (status == "error") m.error = cur.require("error");
        else throw DecodeError("bad status '" + status + "'", 0);
        msg.body = std::move(m);
    } else if (type == "SUBMIT") {
        Submit m;
        m.client_id = cur.require("client_id");
        m.circuit_id = cur.require("circuit_id");
        m.demand = parse_u32(cur.require("demand"));
        if (auto v = cur.accept("shots")) m.shots = parse_u64(*v);
        if (auto v = cur.accept("seed")) m.seed = parse_u64(*v);
        if (auto v = cur.accept("at")) m.at = parse_i64(*v);
        m.circuit = cur.require("circuit");
        msg.body = std::move(m);
    } else if (type == "SUBMIT_ACK") {
        SubmitAck m;
        m.circuit_id = cur.require("circuit_id");
        const std::string status = cur.require("status");
        bool known = false;
        for (auto s : {SubmitStatus::Assigned, SubmitStatus::Queued, SubmitStatus::Cached,
                       SubmitStatus::Duplicate, SubmitStatus::Rejected}) {
            if (submit_status_name(s) == status) {
                m.status = s;
                known = true;
            }
        }
        if (!known) throw DecodeError("bad submit status '" + status + "'", 0);
        if (m.status == SubmitStatus::Assigned) m.worker_id = cur.require("worker_id");
        m.detail = cur.require("detail");
        msg.body = std::move(m);
    } else if (type == "JOB_RESULT") {
        JobResult m;
        m.circuit_id = cur.require("circuit_id");
        const std::string status = cur.require("status");
        if (status == "ok") m.ok = true, m.fidelity = parse_double(cur.require("fidelity"));
        else if (status == "error") m.error = cur.require("error");
        else throw DecodeError("bad status '" + status + "'", 0);
        msg.body = std::move(m);
    } else if (type == "ERROR") {
        ErrorMsg m;
        m.code = cur.require("code");
        m.detail = cur.require("detail");
        msg.body = std::move(m);
    } else {
        throw DecodeError("unknown message type '" + type + "'", 0);
    }
    cur.done();
    return msg;
}

std::string encode_frame(const Message& message) {
    const std::string payload = encode_payload(message);
    if (payload.size() > kMaxPayload) throw FrameError("payload exceeds 16 MiB");
    std::string out;
    out.reserve(kHeaderSize + payload.size());
    const auto len = static_cast<std::uint32_t>(payload.size());
    out += static_cast<char>((len >> 24) & 0xff);
    out += static_cast<char>((len >> 16) & 0xff);
    out += static_cast<char>((len >> 8) & 0xff);
    out += static_cast<char>(len & 0xff);
    out += static_cast<char>(kProtocolVersion);
    out += payload;
    return out;
}

void FrameReader::feed(std::string_view bytes) { buffer_.append(bytes); }

std::optional<std::string> FrameReader::next() {
    if (consumed_ > 0 && (consumed_ == buffer_.size() || consumed_ > (1u << 16))) {
        buffer_.erase(0, consumed_);
        consumed_ = 0;
    }
    const std::size_t available = buffer_.size() - consumed_;
    if (available < kHeaderSize) return std::nullopt;

    const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data() + consumed_);
    const std::uint32_t len = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                              (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
    if (len > kMaxPayload) throw FrameError("declared payload length " + std::to_string(len) + " exceeds 16 MiB");
    if (p[4] != kProtocolVersion)
        throw FrameError("unsupported protocol version " + std::to_string(static_cast<unsigned>(p[4])));
    if (available < kHeaderSize + len) return std::nullopt;

    std::string payload = buffer_.substr(consumed_ + kHeaderSize, len);
    consumed_ += kHeaderSize + len;
    return payload;
}

} // namespace qufleet::protocol
