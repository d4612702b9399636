#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <sys/types.h>
#include <vector>

#include "qufleet/comanager.hpp"
#include "qufleet/trainer.hpp"

namespace qufleet {

// Local process orchestration of one manager plus its workers.
struct FleetSpec {
    std::vector<FleetWorker> workers;  // spawned as separate processes
    double heartbeat_period_s = 5.0;
    bool allow_exact_fit = false;
    std::int64_t synthetic_delay_ms = 0;
    std::uint32_t parallelism = 8;
    std::optional<std::uint16_t> fixed_port;  // default: ephemeral
    // Control-plane-over-batch scheduling: keep assignment latency flat while
    // workers saturate every core. Best effort (needs privileges to lower).
    int manager_nice = -5;
    int worker_nice = 0;
    // Round-robin workers over cores so a worker's I/O threads contend only
    // with their own compute. Disable for fleets larger than the machine.
    bool pin_workers = true;
};

struct SpawnedProcess {
    pid_t pid = -1;
    std::string worker_id;  // empty for the manager
    std::string stderr_path;
};

struct FleetHandles {
    std::uint16_t port = 0;
    std::string dir;  // run artifacts: port file, event log, stderr captures
    std::string event_log_path;
    SpawnedProcess manager;
    std::vector<SpawnedProcess> workers;
    bool torn_down = false;
};

// Spawns the manager, waits for its port, spawns the workers, and waits until
// the manager's event log shows every worker registered. Throws
// TransportError with the child's stderr when startup fails (a port conflict
// surfaces here, naming the port).
FleetHandles spawn_fleet(const FleetSpec& spec, const std::string& qufleet_bin,
                         double startup_timeout_s = 20.0);

// SIGKILLs one worker (chaos testing).
void kill_worker(FleetHandles& fleet, std::size_t index);

// SIGTERM, then SIGKILL stragglers; safe to call twice.
void teardown_fleet(FleetHandles& fleet);

std::size_t count_registrations(const std::string& event_log_path);

struct ClientJobSpec {
    TrainConfig config;
    std::string dataset_path;  // CSV
};

struct ExperimentSpec {
    FleetSpec fleet;
    std::vector<ClientJobSpec> clients;
    std::uint32_t repetitions = 1;
    std::string output_csv;
    std::string mode = "single-client";  // or "multi-tenant"
};

struct ClientRunResult {
    std::string client_id;
    std::vector<EpochMetrics> epochs;
    bool failed = false;
    std::string error;
};

// Runs every repetition: spawn fleet, run all clients concurrently against
// it, tear down, append rows. Returns false when any client job failed; the
// CSV keeps the rows gathered so far plus a failure row per failed client.
// CSV schema: rep,client,epoch,wall_seconds,circuits,circuits_per_second,loss,accuracy
// with one aggregate row per (rep, client) using epoch=total.
bool run_experiment(const ExperimentSpec& spec, const std::string& qufleet_bin, std::ostream& log);

std::string experiment_csv_header();

TrainConfig load_train_config(const std::string& path);
ExperimentSpec load_experiment_spec(const std::string& path);

// Per-repetition derived seed.
std::uint64_t repetition_seed(std::uint64_t root_seed, std::uint32_t repetition);

} // namespace qufleet
