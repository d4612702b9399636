#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qufleet {

enum class CruMode : std::uint8_t { Measured, Scripted };

struct WorkerOptions {
    std::string worker_id;
    std::uint32_t max_qubits = 5;
    std::string manager_host = "127.0.0.1";
    std::uint16_t manager_port = 0;
    std::optional<std::int64_t> period_ms;  // default: adopt the manager's period from the ack
    CruMode cru_mode = CruMode::Measured;
    std::vector<std::pair<std::int64_t, double>> cru_trace;  // scripted: (ms since start, value)
    std::uint32_t parallelism = 8;          // max concurrently executing circuits
    std::int64_t synthetic_delay_ms = 0;    // per-circuit latency knob for scheduler experiments
    std::int64_t backoff_base_ms = 1000;    // registration retry backoff
    std::int64_t backoff_cap_ms = 30000;
};

// Step interpolation: the value of the most recent trace point at or before
// t; before the first point, the first value.
double scripted_cru(const std::vector<std::pair<std::int64_t, double>>& trace, std::int64_t t_ms);

// Exponentially weighted process-CPU-busy fraction with a configurable
// half-life. Samples clamp to [0, 1]; an unavailable reading repeats the
// last known value.
class CruMeter {
public:
    explicit CruMeter(double half_life_ms);
    double sample(std::int64_t now_ms);
    double last() const { return value_; }

private:
    double half_life_ms_;
    double value_ = 0.0;
    bool primed_ = false;
    std::int64_t last_ms_ = 0;
    double last_cpu_ms_ = 0.0;
};

// Simulator daemon: registers with the manager (exponential backoff until
// acknowledged), heartbeats every period with its active set and CRU sample,
// executes assigned circuits on fresh statevectors, and reports one RESULT
// or one failure per accepted circuit.
class WorkerDaemon {
public:
    explicit WorkerDaemon(WorkerOptions options);
    ~WorkerDaemon();

    // Blocks until stop(). Throws ConfigError when the manager rejects the id
    // (fatal) and TransportError when the transport dies permanently.
    void run();
    void stop();

    std::int64_t effective_period_ms() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace qufleet
