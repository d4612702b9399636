#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace qufleet::protocol {

// Frame layout: 4-byte big-endian payload length, 1 version byte (0x01),
// then the UTF-8 payload. Payloads are "key=value\n" lines with backslash
// escaping and a fixed key order per message type ("type" first), so equal
// messages always encode to identical bytes. Documented field by field in
// PROTOCOL.md.
constexpr std::uint8_t kProtocolVersion = 0x01;
constexpr std::size_t kMaxPayload = 16 * 1024 * 1024;
constexpr std::size_t kHeaderSize = 5;

struct ActiveCircuit {
    std::string circuit_id;
    std::uint32_t demand = 0;
    bool operator==(const ActiveCircuit&) const = default;
};

struct Register {
    std::string worker_id;
    std::uint32_t max_qubits = 0;
    double cru = 0;
    std::optional<std::int64_t> at;  // virtual-clock timestamp (test mode)
    bool operator==(const Register&) const = default;
};

struct RegisterAck {
    bool ok = false;
    std::int64_t heartbeat_period_ms = 0;
    std::string detail;
    bool operator==(const RegisterAck&) const = default;
};

struct Heartbeat {
    std::string worker_id;
    double cru = 0;
    std::vector<ActiveCircuit> active;
    std::optional<std::int64_t> at;
    bool operator==(const Heartbeat&) const = default;
};

struct Assign {
    std::string circuit_id;
    std::uint32_t demand = 0;
    std::string circuit;  // serialized LogicalCircuit bytes
    std::optional<std::uint64_t> shots;
    std::optional<std::uint64_t> seed;
    bool operator==(const Assign&) const = default;
};

struct Result {
    std::string circuit_id;
    std::string worker_id;
    bool ok = false;
    double fidelity = 0;
    std::string error;
    bool operator==(const Result&) const = default;
};

struct Submit {
    std::string client_id;
    std::string circuit_id;
    std::uint32_t demand = 0;
    std::string circuit;
    std::optional<std::uint64_t> shots;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> at;
    bool operator==(const Submit&) const = default;
};

enum class SubmitStatus : std::uint8_t { Assigned, Queued, Cached, Duplicate, Rejected };
std::string_view submit_status_name(SubmitStatus s);

struct SubmitAck {
    std::string circuit_id;
    SubmitStatus status = SubmitStatus::Queued;
    std::string worker_id;  // set when status == Assigned
    std::string detail;
    bool operator==(const SubmitAck&) const = default;
};

struct JobResult {
    std::string circuit_id;
    bool ok = false;
    double fidelity = 0;
    std::string error;
    bool operator==(const JobResult&) const = default;
};

struct ErrorMsg {
    std::string code;
    std::string detail;
    bool operator==(const ErrorMsg&) const = default;
};

using Body = std::variant<Register, RegisterAck, Heartbeat, Assign, Result, Submit, SubmitAck,
                          JobResult, ErrorMsg>;

struct Message {
    std::uint64_t correlation_id = 0;
    Body body;
    bool operator==(const Message&) const = default;
};

std::string_view type_name(const Body& body);

// Canonical payload bytes (no frame header).
std::string encode_payload(const Message& message);
// Throws DecodeError (with offset) on any malformed input.
Message decode_payload(std::string_view payload);

// Full frame: header + payload. Throws FrameError when payload exceeds the cap.
std::string encode_frame(const Message& message);

// Incremental frame parser. feed() ingests bytes; next() yields complete
// payloads in order, or nullopt when more bytes are needed. Header and size
// violations throw FrameError; the parser never consumes past the declared
// payload length of a frame.
class FrameReader {
public:
    void feed(std::string_view bytes);
    std::optional<std::string> next();

private:
    std::string buffer_;
    std::size_t consumed_ = 0;
};

} // namespace qufleet::protocol
