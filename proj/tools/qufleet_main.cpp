// qufleet: distributed variational-circuit training on a fleet of simulated
// quantum workers. Subcommands: manager, worker, train, experiment.
#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "qufleet/client.hpp"
#include "qufleet/comanager.hpp"
#include "qufleet/config.hpp"
#include "qufleet/dataset.hpp"
#include "qufleet/errors.hpp"
#include "qufleet/harness.hpp"
#include "qufleet/manager_server.hpp"
#include "qufleet/textio.hpp"
#include "qufleet/trainer.hpp"
#include "qufleet/worker.hpp"

namespace {

std::atomic<bool> g_shutdown{false};

void install_signal_handlers() {
    struct sigaction sa{};
    sa.sa_handler = [](int) { g_shutdown.store(true); };
    sigaction(SIGINT, &sa, nullptr);
    sigaction(SIGTERM, &sa, nullptr);
}

std::vector<std::pair<std::int64_t, double>> load_cru_trace(const std::string& path) {
    // One "<seconds> <value>" pair per line.
    std::vector<std::pair<std::int64_t, double>> trace;
    std::ifstream in(path);
    if (!in) throw qufleet::ConfigError("cannot open " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        double at_s = 0, value = 0;
        if (!(fields >> at_s >> value))
            throw qufleet::ConfigError(path + ": expected '<seconds> <value>' per line");
        trace.emplace_back(static_cast<std::int64_t>(at_s * 1000.0), value);
    }
    return trace;
}

int run_manager(const std::string& listen, double period_s, bool virtual_clock, bool allow_exact_fit,
                const std::string& fleet_config, const std::string& event_log,
                const std::string& port_file) {
    qufleet::ManagerServerOptions opts;
    const auto [host, port] = qufleet::parse_endpoint(listen);
    opts.host = host;
    opts.port = port;
    if (!fleet_config.empty()) opts.core = qufleet::load_fleet_config(fleet_config);
    opts.core.heartbeat_period_ms = static_cast<std::int64_t>(period_s * 1000.0);
    opts.core.allow_exact_fit = allow_exact_fit || opts.core.allow_exact_fit;
    opts.virtual_clock = virtual_clock;
    opts.event_log_path = event_log;
    opts.port_file = port_file;

    qufleet::ManagerServer server(opts);
    server.start();
    std::cerr << "manager listening on " << host << ":" << server.port() << " (heartbeat period "
              << qufleet::format_double(period_s) << " s)\n";
    while (!g_shutdown.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
    return 0;
}

int run_worker(const qufleet::WorkerOptions& opts) {
    qufleet::WorkerDaemon daemon(opts);
    std::thread watcher([&daemon] {
        while (!g_shutdown.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        daemon.stop();
    });
    int rc = 0;
    try {
        daemon.run();
    } catch (const qufleet::ConfigError& e) {
        std::cerr << "fatal: " << e.what() << '\n';
        rc = 2;
    } catch (const qufleet::Error& e) {
        std::cerr << "worker stopped: " << e.what() << '\n';
        rc = g_shutdown.load() ? 0 : 2;
    }
    g_shutdown.store(true);
    watcher.join();
    return rc;
}

int run_train(const std::string& config_path, const std::string& dataset_csv,
              const std::string& idx_images, const std::string& idx_labels,
              const std::string& manager, const std::string& metrics_out) {
    qufleet::TrainConfig config = qufleet::load_train_config(config_path);
    qufleet::Dataset dataset;
    if (!dataset_csv.empty()) dataset = qufleet::load_csv(dataset_csv);
    else if (!idx_images.empty() && !idx_labels.empty())
        dataset = qufleet::load_idx(idx_images, idx_labels);
    else
        throw qufleet::ConfigError("pass --dataset or both --idx-images and --idx-labels");

    const auto [host, port] = qufleet::parse_endpoint(manager);
    qufleet::DispatchOptions opts;
    opts.client_id = config.client_id;
    opts.window = config.in_flight_window;
    opts.retries = config.retries;
    opts.shots = config.shots;
    opts.seed_base = config.seed;
    qufleet::RemoteExecutor executor(host, port, opts);

    qufleet::ModelSet models =
        qufleet::init_models(config, config.filter_width * config.filter_width);
    const auto metrics = qufleet::train(dataset, models, config, executor);
    for (const auto& m : metrics)
        std::cerr << "epoch " << m.epoch_index << ": loss " << qufleet::format_double(m.loss)
                  << ", accuracy " << qufleet::format_double(m.accuracy) << ", "
                  << m.circuits_executed << " circuits in " << qufleet::format_double(m.wall_seconds)
                  << " s (" << qufleet::format_double(m.circuits_per_second) << "/s)\n";
    if (!metrics_out.empty()) qufleet::write_metrics_csv(metrics, metrics_out);
    return 0;
}

int run_experiment_cmd(const std::string& spec_path, const std::string& output,
                       double synthetic_delay_s, int repetitions, const std::string& self_bin) {
    qufleet::ExperimentSpec spec = qufleet::load_experiment_spec(spec_path);
    if (!output.empty()) spec.output_csv = output;
    if (synthetic_delay_s >= 0)
        spec.fleet.synthetic_delay_ms = static_cast<std::int64_t>(synthetic_delay_s * 1000.0);
    if (repetitions > 0) spec.repetitions = static_cast<std::uint32_t>(repetitions);
    const bool ok = qufleet::run_experiment(spec, self_bin, std::cerr);
    std::cerr << (ok ? "experiment complete: " : "experiment FAILED: ") << spec.output_csv << '\n';
    return ok ? 0 : 2;
}

std::string self_binary_path(const char* argv0) {
    char buf[4096];
    const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
    if (n > 0) {
        buf[n] = '\0';
        return buf;
    }
    return argv0;
}

} // namespace

int main(int argc, char** argv) {
    install_signal_handlers();
    CLI::App app{"distributed quantum-classical training fleet"};
    app.require_subcommand(1);

    // manager
    auto* manager = app.add_subcommand("manager", "run the scheduling manager");
    std::string listen = "127.0.0.1:7077";
    double period_s = 5.0;
    bool virtual_clock = false, allow_exact_fit = false;
    std::string fleet_config, event_log, port_file;
    manager->add_option("--listen", listen, "host:port to listen on (port 0 = ephemeral)");
    manager->add_option("--heartbeat-period", period_s, "heartbeat period in seconds")->check(CLI::PositiveNumber);
    manager->add_flag("--virtual-clock", virtual_clock, "test mode: clock advances only via 'at' message fields");
    manager->add_flag("--allow-exact-fit", allow_exact_fit, "place circuits when AR == demand as well");
    manager->add_option("--fleet-config", fleet_config, "statically known workers (key-value file)");
    manager->add_option("--event-log", event_log, "append one record per registry transition");
    manager->add_option("--port-file", port_file, "write the bound port here once listening");

    // worker
    auto* worker = app.add_subcommand("worker", "run a simulated quantum worker");
    qufleet::WorkerOptions wopts;
    std::string manager_addr = "127.0.0.1:7077";
    std::string cru_mode = "measured", cru_trace_path;
    double wperiod_s = 0, synthetic_delay_s = 0, backoff_s = 1.0;
    worker->add_option("--id", wopts.worker_id, "worker id")->required();
    worker->add_option("--max-qubits", wopts.max_qubits, "qubit capacity (MR)")->required();
    worker->add_option("--manager", manager_addr, "manager host:port");
    worker->add_option("--period", wperiod_s, "heartbeat period in seconds (default: manager's)");
    worker->add_option("--cru-mode", cru_mode, "measured | scripted")
        ->check(CLI::IsMember({"measured", "scripted"}));
    worker->add_option("--cru-trace", cru_trace_path, "scripted CRU trace file");
    worker->add_option("--parallelism", wopts.parallelism, "max concurrently executing circuits");
    worker->add_option("--synthetic-delay", synthetic_delay_s, "per-circuit latency in seconds");
    worker->add_option("--register-backoff", backoff_s, "registration backoff base in seconds");

    // train
    auto* train = app.add_subcommand("train", "submit a training job to a running manager");
    std::string train_config, dataset_csv, idx_images, idx_labels, train_manager = "127.0.0.1:7077",
                                                                   metrics_out;
    train->add_option("--config", train_config, "training config file")->required();
    train->add_option("--dataset", dataset_csv, "dataset CSV (label,pixels... per row)");
    train->add_option("--idx-images", idx_images, "IDX image file");
    train->add_option("--idx-labels", idx_labels, "IDX label file");
    train->add_option("--manager", train_manager, "manager host:port");
    train->add_option("--metrics-out", metrics_out, "per-epoch metrics CSV path");

    // experiment
    auto* experiment = app.add_subcommand("experiment", "spawn a fleet and run client jobs against it");
    std::string exp_spec, exp_output;
    double exp_delay_s = -1;
    int exp_reps = 0;
    experiment->add_option("--spec", exp_spec, "experiment spec file")->required();
    experiment->add_option("--output", exp_output, "metrics CSV path (overrides the spec file)");
    experiment->add_option("--synthetic-delay", exp_delay_s, "per-circuit worker latency in seconds");
    experiment->add_option("--repetitions", exp_reps, "repetition count (overrides the spec file)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(manager))
            return run_manager(listen, period_s, virtual_clock, allow_exact_fit, fleet_config,
                               event_log, port_file);
        if (app.got_subcommand(worker)) {
            const auto [host, port] = qufleet::parse_endpoint(manager_addr);
            wopts.manager_host = host;
            wopts.manager_port = port;
            if (wperiod_s > 0) wopts.period_ms = static_cast<std::int64_t>(wperiod_s * 1000.0);
            wopts.cru_mode = cru_mode == "scripted" ? qufleet::CruMode::Scripted : qufleet::CruMode::Measured;
            if (!cru_trace_path.empty()) wopts.cru_trace = load_cru_trace(cru_trace_path);
            wopts.synthetic_delay_ms = static_cast<std::int64_t>(synthetic_delay_s * 1000.0);
            wopts.backoff_base_ms = std::max<std::int64_t>(1, static_cast<std::int64_t>(backoff_s * 1000.0));
            return run_worker(wopts);
        }
        if (app.got_subcommand(train))
            return run_train(train_config, dataset_csv, idx_images, idx_labels, train_manager,
                             metrics_out);
        if (app.got_subcommand(experiment))
            return run_experiment_cmd(exp_spec, exp_output, exp_delay_s, exp_reps,
                                      self_binary_path(argv[0]));
    } catch (const qufleet::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
