// Live-stack tests: a real ManagerServer on an ephemeral port, worker
// daemons on threads, and the pipelined client. Process-level behavior
// (spawning, kills) lives in the acceptance suite.
#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "qufleet/textio.hpp"

#include "qufleet/client.hpp"
#include "qufleet/errors.hpp"
#include "qufleet/harness.hpp"
#include "qufleet/manager_server.hpp"
#include "qufleet/net.hpp"
#include "qufleet/protocol.hpp"
#include "qufleet/trainer.hpp"
#include "qufleet/worker.hpp"

using namespace qufleet;
namespace proto = protocol;

namespace {

struct LiveWorker {
    explicit LiveWorker(WorkerOptions opts) : daemon(std::move(opts)) {
        thread = std::thread([this] {
            try {
                daemon.run();
            } catch (const Error& e) {
                error = e.what();
            }
        });
    }
    ~LiveWorker() {
        daemon.stop();
        if (thread.joinable()) thread.join();
    }
    WorkerDaemon daemon;
    std::thread thread;
    std::string error;
};

WorkerOptions worker_opts(const std::string& id, std::uint32_t mr, std::uint16_t port) {
    WorkerOptions o;
    o.worker_id = id;
    o.max_qubits = mr;
    o.manager_port = port;
    o.period_ms = 200;
    o.backoff_base_ms = 50;
    o.backoff_cap_ms = 400;
    return o;
}

ManagerServer make_server(std::int64_t period_ms = 200) {
    ManagerServerOptions opts;
    opts.core.heartbeat_period_ms = period_ms;
    return ManagerServer(opts);
}

void wait_for_workers(const ManagerServer& server, std::size_t n, int timeout_ms = 5000) {
    for (int waited = 0; waited < timeout_ms; waited += 10) {
        if (server.worker_count() >= n) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    FAIL("workers did not register in time");
}

} // namespace

TEST_CASE("distributed dispatch matches local execution exactly") {
    auto server = make_server();
    server.start();
    LiveWorker w1(worker_opts("w1", 6, server.port()));
    LiveWorker w2(worker_opts("w2", 6, server.port()));
    wait_for_workers(server, 2);

    TrainConfig config;
    config.n_filters = 2;
    config.class_labels = {0, 1};
    config.seed = 31;
    const auto ds = make_synthetic_two_class(3, 4, 4, 17);
    const auto models = init_models(config, 16);
    const auto bank = build_circuit_bank(ds, models, config, "dist");

    DispatchOptions opts;
    opts.client_id = "itest";
    opts.window = 8;
    ManagerClient client("127.0.0.1", server.port());
    const auto remote = client.dispatch(bank, opts);

    LocalExecutor local;
    const auto expected = local.execute(bank);
    REQUIRE(remote.size() == expected.size());
    for (const auto& [cid, fidelity] : expected) {
        REQUIRE(remote.count(cid) == 1);
        CHECK(remote.at(cid) == doctest::Approx(fidelity).epsilon(1e-12));
    }
    server.stop();
}

TEST_CASE("full remote training epoch is deterministic and complete") {
    auto server = make_server();
    server.start();
    LiveWorker w1(worker_opts("w1", 6, server.port()));
    wait_for_workers(server, 1);

    TrainConfig config;
    config.epochs = 2;
    config.alpha = 0.1;
    config.n_filters = 1;
    config.class_labels = {0, 1};
    config.seed = 7;
    const auto ds = make_synthetic_two_class(4, 4, 4, 21);

    auto run_remote = [&] {
        auto models = init_models(config, 16);
        DispatchOptions opts;
        opts.client_id = "job";
        RemoteExecutor exec("127.0.0.1", server.port(), opts);
        train(ds, models, config, exec);
        return models;
    };
    const auto remote_models = run_remote();

    auto local_models = init_models(config, 16);
    LocalExecutor local;
    train(ds, local_models, config, local);

    for (std::size_t c = 0; c < 2; ++c)
        CHECK(remote_models.at(c, 0).theta == local_models.at(c, 0).theta);
    server.stop();
}

TEST_CASE("duplicate worker ids are rejected while the original lives") {
    auto server = make_server();
    server.start();
    LiveWorker w1(worker_opts("w1", 6, server.port()));
    wait_for_workers(server, 1);

    WorkerDaemon dup(worker_opts("w1", 6, server.port()));
    CHECK_THROWS_AS(dup.run(), ConfigError);
    server.stop();
}

TEST_CASE("registration retries with backoff until the manager appears") {
    ManagerServerOptions opts;
    opts.core.heartbeat_period_ms = 200;
    opts.port = 39417;  // fixed so the worker can aim before the bind
    ManagerServer server(opts);

    LiveWorker w1(worker_opts("w1", 6, 39417));
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    server.start();
    wait_for_workers(server, 1, 8000);
    CHECK(w1.error.empty());
    server.stop();
}

TEST_CASE("resubmitting a completed circuit answers from the cache") {
    auto server = make_server();
    server.start();
    LiveWorker w1(worker_opts("w1", 6, server.port()));
    wait_for_workers(server, 1);

    TrainConfig config;
    config.n_filters = 1;
    config.class_labels = {0};
    const auto ds = make_synthetic_two_class(1, 4, 4, 3, 0, 0);
    const auto models = init_models(config, 16);
    const auto bank = build_circuit_bank(ds, models, config, "idem");

    DispatchOptions opts;
    opts.client_id = "idem";
    ManagerClient client("127.0.0.1", server.port());
    const auto first = client.dispatch(bank, opts);
    const auto second = client.dispatch(bank, opts);  // same ids, already completed
    CHECK(first == second);

    // Exactly one assignment per circuit id: the second round was cache hits.
    std::size_t assigns = 0;
    for (const auto& line : server.event_log_copy())
        if (line.find(" ev=assign ") != std::string::npos) ++assigns;
    CHECK(assigns == bank.size());
    std::size_t cached = 0;
    for (const auto& line : server.event_log_copy())
        if (line.find(" ev=submit_cached ") != std::string::npos) ++cached;
    CHECK(cached == bank.size());
    server.stop();
}

TEST_CASE("scripted CRU steers placement toward the quieter worker") {
    auto server = make_server();
    server.start();
    auto busy = worker_opts("busy", 8, server.port());
    busy.cru_mode = CruMode::Scripted;
    busy.cru_trace = {{0, 0.9}};
    auto quiet = worker_opts("quiet", 8, server.port());
    quiet.cru_mode = CruMode::Scripted;
    quiet.cru_trace = {{0, 0.05}};
    LiveWorker w1(std::move(busy));
    LiveWorker w2(std::move(quiet));
    wait_for_workers(server, 2);

    TrainConfig config;
    config.n_filters = 1;
    config.class_labels = {0};
    const auto ds = make_synthetic_two_class(1, 4, 4, 5, 0, 0);
    const auto bank = build_circuit_bank(ds, init_models(config, 16), config, "steer");

    DispatchOptions opts;
    opts.client_id = "steer";
    opts.window = 1;  // serialized submissions: both workers idle at each decision
    ManagerClient client("127.0.0.1", server.port());
    client.dispatch(bank, opts);

    for (const auto& line : server.event_log_copy())
        if (line.find(" ev=assign ") != std::string::npos)
            CHECK(line.find("worker=quiet") != std::string::npos);
    server.stop();
}

TEST_CASE("worker reports capacity violations and malformed circuits") {
    // A hand-rolled fake manager acks registration, then misbehaves.
    net::Listener listener("127.0.0.1", 0);
    WorkerOptions wopts = worker_opts("w1", 3, listener.port());
    LiveWorker w(std::move(wopts));

    auto conn = listener.accept();
    REQUIRE(conn.has_value());
    proto::FrameReader reader;
    std::vector<char> buf(16 * 1024);
    auto read_msg = [&]() -> proto::Message {
        while (true) {
            if (auto p = reader.next()) return proto::decode_payload(*p);
            const std::size_t n = conn->recv_some(buf.data(), buf.size());
            REQUIRE(n > 0);
            reader.feed({buf.data(), n});
        }
    };

    const auto reg = read_msg();
    REQUIRE(std::holds_alternative<proto::Register>(reg.body));
    conn->send_all(proto::encode_frame(
        proto::Message{reg.correlation_id, proto::RegisterAck{true, 200, ""}}));

    // Demand beyond MR: the manager should never do this; the worker says so.
    LayerSpec spec{1, 5};
    auto circuit = assemble_swap_circuit(
        "big", encode_features(std::vector<double>(4, 0.5), spec.data_register()),
        build_layers(spec, std::vector<double>(4, 0.5)), spec);
    conn->send_all(proto::encode_frame(proto::Message{
        9, proto::Assign{"big", circuit.qubit_demand, serialize_circuit(circuit), {}, {}}}));
    while (true) {
        const auto msg = read_msg();
        if (const auto* hb = std::get_if<proto::Heartbeat>(&msg.body)) {
            CHECK(hb->active.empty());
            continue;
        }
        const auto* result = std::get_if<proto::Result>(&msg.body);
        REQUIRE(result != nullptr);
        CHECK(result->circuit_id == "big");
        CHECK_FALSE(result->ok);
        CHECK(result->error.find("capacity violation") != std::string::npos);
        break;
    }

    conn->send_all(proto::encode_frame(proto::Message{10, proto::Assign{"bad", 2, "not-a-circuit", {}, {}}}));
    while (true) {
        const auto msg = read_msg();
        if (std::holds_alternative<proto::Heartbeat>(msg.body)) continue;
        const auto* result = std::get_if<proto::Result>(&msg.body);
        REQUIRE(result != nullptr);
        CHECK(result->circuit_id == "bad");
        CHECK_FALSE(result->ok);
        CHECK(result->error.find("malformed circuit") != std::string::npos);
        break;
    }
}

TEST_CASE("fleet spawning, registration, teardown idempotence, port conflicts") {
    const char* bin = std::getenv("QUFLEET_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "QUFLEET_BIN must point at the CLI binary");

    FleetSpec spec;
    spec.workers = {{"w1", 6}, {"w2", 8}};
    spec.heartbeat_period_s = 0.2;
    auto fleet = spawn_fleet(spec, bin);
    CHECK(fleet.port != 0);
    CHECK(count_registrations(fleet.event_log_path) == 2);

    // The port is taken while the fleet lives: a second manager must fail
    // with an error naming it.
    FleetSpec conflict = spec;
    conflict.fixed_port = fleet.port;
    try {
        auto second = spawn_fleet(conflict, bin);
        teardown_fleet(second);
        FAIL("expected a port conflict");
    } catch (const TransportError& e) {
        CHECK(std::string(e.what()).find(std::to_string(fleet.port)) != std::string::npos);
    }

    teardown_fleet(fleet);
    teardown_fleet(fleet);  // second call is a no-op
    CHECK(fleet.torn_down);
}

TEST_CASE("parallelism one preserves assignment order") {
    auto server = make_server();
    server.start();
    auto opts = worker_opts("serial", 20, server.port());
    opts.parallelism = 1;
    opts.synthetic_delay_ms = 15;  // keeps several circuits co-resident
    LiveWorker w(std::move(opts));
    wait_for_workers(server, 1);

    TrainConfig config;
    config.n_filters = 1;
    config.class_labels = {0};
    const auto ds = make_synthetic_two_class(1, 4, 4, 3, 0, 0);
    const auto bank = build_circuit_bank(ds, init_models(config, 16), config, "order");

    DispatchOptions dopts;
    dopts.client_id = "order";
    dopts.window = 6;  // MR 20 admits up to 3 demand-5 circuits at once
    ManagerClient client("127.0.0.1", server.port());
    client.dispatch(bank, dopts);

    // Completion order in the event log must match assignment order.
    std::vector<std::string> assigned, completed;
    for (const auto& line : server.event_log_copy()) {
        const auto grab = [&](const std::string& tag) -> std::string {
            const auto pos = line.find(tag);
            if (pos == std::string::npos) return {};
            const auto start = pos + tag.size();
            return line.substr(start, line.find(' ', start) - start);
        };
        if (line.find(" ev=assign ") != std::string::npos) assigned.push_back(grab("circuit="));
        if (line.find(" ev=complete ") != std::string::npos) completed.push_back(grab("circuit="));
    }
    REQUIRE(assigned.size() == bank.size());
    CHECK(assigned == completed);
    server.stop();
}

TEST_CASE("unreachable manager raises a transport error with no partial results") {
    TrainConfig config;
    config.n_filters = 1;
    config.class_labels = {0};
    const auto ds = make_synthetic_two_class(1, 4, 4, 3, 0, 0);
    const auto bank = build_circuit_bank(ds, init_models(config, 16), config, "down");
    CHECK_THROWS_AS(ManagerClient("127.0.0.1", 1), TransportError);

    // Manager that dies mid-dispatch: the whole dispatch fails, nothing is returned.
    auto server = make_server();
    server.start();
    auto opts = worker_opts("w1", 6, server.port());
    opts.synthetic_delay_ms = 50;
    LiveWorker w(std::move(opts));
    wait_for_workers(server, 1);
    DispatchOptions dopts;
    dopts.client_id = "down";
    ManagerClient client("127.0.0.1", server.port());
    std::thread killer([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(120));
        server.stop();
    });
    CHECK_THROWS_AS(client.dispatch(bank, dopts), TransportError);
    killer.join();
}

TEST_CASE("experiment harness writes a consistent CSV and flags failures") {
    const char* bin = std::getenv("QUFLEET_BIN");
    REQUIRE(bin != nullptr);
    const std::string dir = "/tmp/qufleet_exp_test";
    std::filesystem::create_directories(dir);
    const auto ds = make_synthetic_two_class(4, 4, 4, 77);
    save_csv(ds, dir + "/data.csv");

    ExperimentSpec spec;
    spec.fleet.workers = {{"w1", 6}};
    spec.fleet.heartbeat_period_s = 0.3;
    spec.repetitions = 2;
    spec.output_csv = dir + "/out.csv";
    ClientJobSpec job;
    job.config.n_filters = 1;
    job.config.epochs = 2;
    job.config.class_labels = {0, 1};
    job.config.client_id = "exp";
    job.dataset_path = dir + "/data.csv";
    spec.clients.push_back(job);

    std::ostringstream log;
    REQUIRE(run_experiment(spec, bin, log));

    std::ifstream in(spec.output_csv);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == experiment_csv_header());
    std::size_t rows = 0, totals = 0;
    while (std::getline(in, line)) {
        ++rows;
        const auto f = split(line, ',');
        REQUIRE(f.size() == 8);
        const double wall = parse_double(f[3]);
        const double circuits = parse_double(f[4]);
        const double cps = parse_double(f[5]);
        CHECK(std::abs(cps - circuits / wall) < 1e-9 * std::max(1.0, cps));
        if (std::string(f[2]) == "total") ++totals;
    }
    CHECK(rows == 2 * (2 + 1));  // 2 reps x (2 epochs + total)
    CHECK(totals == 2);

    // A client with a bad dataset fails the experiment but leaves the CSV.
    spec.clients[0].dataset_path = dir + "/missing.csv";
    spec.repetitions = 1;
    spec.output_csv = dir + "/fail.csv";
    std::ostringstream log2;
    CHECK_FALSE(run_experiment(spec, bin, log2));
    std::ifstream fin(spec.output_csv);
    std::string all((std::istreambuf_iterator<char>(fin)), std::istreambuf_iterator<char>());
    CHECK(all.find(",failed,") != std::string::npos);
}
