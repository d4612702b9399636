#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "qufleet/trainer.hpp"

namespace qufleet {

struct DispatchOptions {
    std::string client_id = "client";
    std::uint32_t window = 32;   // circuits in flight at once
    std::uint32_t retries = 2;   // resubmissions after per-circuit failures
    std::optional<std::uint64_t> shots;
    std::uint64_t seed_base = 0; // per-circuit seeds derive from this and the id
};

// Pipelined submission over one connection: keeps up to `window` circuits
// unresolved, resubmits failed ones up to `retries` times, and returns only
// when every bank entry has a fidelity. Transport loss raises TransportError
// with no partial result map.
class ManagerClient {
public:
    ManagerClient(const std::string& host, std::uint16_t port);
    ~ManagerClient();

    ResultMap dispatch(const CircuitBank& bank, const DispatchOptions& options);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// CircuitExecutor adapter for the trainer.
class RemoteExecutor : public CircuitExecutor {
public:
    RemoteExecutor(std::string host, std::uint16_t port, DispatchOptions options)
        : host_(std::move(host)), port_(port), options_(std::move(options)) {}

    ResultMap execute(const CircuitBank& bank) override {
        ManagerClient client(host_, port_);
        return client.dispatch(bank, options_);
    }

private:
    std::string host_;
    std::uint16_t port_;
    DispatchOptions options_;
};

} // namespace qufleet
