#include "qufleet/harness.hpp"

#include <fcntl.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "qufleet/client.hpp"
#include "qufleet/config.hpp"
#include "qufleet/dataset.hpp"
#include "qufleet/errors.hpp"
#include "qufleet/textio.hpp"

namespace qufleet {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) return {};
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// fork/exec with stderr redirected to a capture file.
pid_t spawn(const std::vector<std::string>& argv, const std::string& stderr_path, int nice_level,
            int pin_cpu = -1) {
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    const pid_t pid = fork();
    if (pid < 0) throw TransportError("fork failed: " + std::string(std::strerror(errno)));
    if (pid == 0) {
        const int fd = ::open(stderr_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            ::dup2(fd, 2);
            ::close(fd);
        }
        if (nice_level != 0) (void)::setpriority(PRIO_PROCESS, 0, nice_level);  // best effort
        if (pin_cpu >= 0) {
            cpu_set_t mask;
            CPU_ZERO(&mask);
            CPU_SET(static_cast<unsigned>(pin_cpu), &mask);
            (void)::sched_setaffinity(0, sizeof(mask), &mask);
        }
        ::execv(cargv[0], cargv.data());
        ::_exit(127);
    }
    return pid;
}

bool still_running(pid_t pid) {
    if (pid <= 0) return false;
    return ::waitpid(pid, nullptr, WNOHANG) == 0;
}

void reap(pid_t pid, int grace_ms) {
    if (pid <= 0) return;
    ::kill(pid, SIGTERM);
    for (int waited = 0; waited < grace_ms; waited += 20) {
        if (::waitpid(pid, nullptr, WNOHANG) != 0) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ::kill(pid, SIGKILL);
    ::waitpid(pid, nullptr, 0);
}

std::string make_run_dir() {
    char tmpl[] = "/tmp/qufleet-run-XXXXXX";
    const char* dir = ::mkdtemp(tmpl);
    if (!dir) throw TransportError("mkdtemp failed");
    return dir;
}

} // namespace

std::size_t count_registrations(const std::string& event_log_path) {
    std::ifstream in(event_log_path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line))
        if (line.find(" ev=register worker=") != std::string::npos &&
            line.find("register_conflict") == std::string::npos)
            ++n;
    return n;
}

FleetHandles spawn_fleet(const FleetSpec& spec, const std::string& qufleet_bin,
                         double startup_timeout_s) {
    FleetHandles fleet;
    fleet.dir = make_run_dir();
    fleet.event_log_path = fleet.dir + "/events.log";
    const std::string port_file = fleet.dir + "/port";

    std::vector<std::string> margv{
        qufleet_bin,
        "manager",
        "--listen",
        "127.0.0.1:" + std::to_string(spec.fixed_port.value_or(0)),
        "--heartbeat-period",
        format_double(spec.heartbeat_period_s),
        "--port-file",
        port_file,
        "--event-log",
        fleet.event_log_path,
    };
    if (spec.allow_exact_fit) margv.push_back("--allow-exact-fit");
    fleet.manager.stderr_path = fleet.dir + "/manager.stderr";
    fleet.manager.pid = spawn(margv, fleet.manager.stderr_path, spec.manager_nice);

    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::duration<double>(startup_timeout_s);
    while (true) {
        std::ifstream in(port_file);
        if (in) {
            int port = 0;
            in >> port;
            if (port > 0) {
                fleet.port = static_cast<std::uint16_t>(port);
                break;
            }
        }
        if (!still_running(fleet.manager.pid)) {
            const std::string err = read_file(fleet.manager.stderr_path);
            teardown_fleet(fleet);
            throw TransportError("manager failed to start: " + err);
        }
        if (std::chrono::steady_clock::now() > deadline) {
            teardown_fleet(fleet);
            throw TransportError("manager did not report a port in time");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }

    for (const auto& w : spec.workers) {
        std::vector<std::string> wargv{
            qufleet_bin,
            "worker",
            "--id",
            w.worker_id,
            "--max-qubits",
            std::to_string(w.max_qubits),
            "--manager",
            "127.0.0.1:" + std::to_string(fleet.port),
            "--period",
            format_double(spec.heartbeat_period_s),
            "--parallelism",
            std::to_string(spec.parallelism),
            "--register-backoff",
            "0.1",
        };
        if (spec.synthetic_delay_ms > 0) {
            wargv.push_back("--synthetic-delay");
            wargv.push_back(format_double(static_cast<double>(spec.synthetic_delay_ms) / 1000.0));
        }
        SpawnedProcess proc;
        proc.worker_id = w.worker_id;
        proc.stderr_path = fleet.dir + "/" + w.worker_id + ".stderr";
        const int pin = spec.pin_workers
                            ? static_cast<int>(fleet.workers.size() %
                                               std::max(1u, std::thread::hardware_concurrency()))
                            : -1;
        proc.pid = spawn(wargv, proc.stderr_path, spec.worker_nice, pin);
        fleet.workers.push_back(std::move(proc));
    }

    while (count_registrations(fleet.event_log_path) < spec.workers.size()) {
        for (const auto& w : fleet.workers) {
            if (!still_running(w.pid)) {
                const std::string err = read_file(w.stderr_path);
                teardown_fleet(fleet);
                throw TransportError("worker " + w.worker_id + " failed to start: " + err);
            }
        }
        if (std::chrono::steady_clock::now() > deadline) {
            teardown_fleet(fleet);
            throw TransportError("workers did not register in time");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return fleet;
}

void kill_worker(FleetHandles& fleet, std::size_t index) {
    if (index >= fleet.workers.size()) throw ArgumentError("no such worker");
    auto& proc = fleet.workers[index];
    if (proc.pid > 0) {
        ::kill(proc.pid, SIGKILL);
        ::waitpid(proc.pid, nullptr, 0);
        proc.pid = -1;
    }
}

void teardown_fleet(FleetHandles& fleet) {
    if (fleet.torn_down) return;
    fleet.torn_down = true;
    for (auto& w : fleet.workers) {
        reap(w.pid, 1000);
        w.pid = -1;
    }
    reap(fleet.manager.pid, 2000);
    fleet.manager.pid = -1;
}

std::uint64_t repetition_seed(std::uint64_t root_seed, std::uint32_t repetition) {
    return repetition == 0 ? root_seed : seed_mix(root_seed, repetition);
}

std::string experiment_csv_header() {
    return "rep,client,epoch,wall_seconds,circuits,circuits_per_second,loss,accuracy";
}

namespace {

std::string experiment_row(std::uint32_t rep, const std::string& client, const std::string& epoch,
                           double wall, std::uint64_t circuits, double cps, double loss, double acc) {
    return std::to_string(rep) + ',' + client + ',' + epoch + ',' + format_double(wall) + ',' +
           std::to_string(circuits) + ',' + format_double(cps) + ',' + format_double(loss) + ',' +
           format_double(acc);
}

ClientRunResult run_client(const ClientJobSpec& job, std::uint16_t port, std::uint32_t rep,
                           std::size_t index) {
    ClientRunResult result;
    // Clients are namespaced by position so two jobs sharing a config file
    // can never collide on circuit ids.
    result.client_id = job.config.client_id + "#" + std::to_string(index);
    try {
        const Dataset dataset = load_csv(job.dataset_path);
        TrainConfig config = job.config;
        config.seed = repetition_seed(index == 0 ? config.seed : seed_mix(config.seed, index), rep);
        config.client_id = result.client_id + "/r" + std::to_string(rep);
        ModelSet models = init_models(config, config.filter_width * config.filter_width);
        DispatchOptions opts;
        opts.client_id = config.client_id;
        opts.window = config.in_flight_window;
        opts.retries = config.retries;
        opts.shots = config.shots;
        opts.seed_base = config.seed;
        RemoteExecutor executor("127.0.0.1", port, opts);
        result.epochs = train(dataset, models, config, executor);
    } catch (const std::exception& e) {
        result.failed = true;
        result.error = e.what();
    }
    return result;
}

} // namespace

bool run_experiment(const ExperimentSpec& spec, const std::string& qufleet_bin, std::ostream& log) {
    if (spec.fleet.workers.empty()) throw ConfigError("experiment needs at least one worker");
    if (spec.clients.empty()) throw ConfigError("experiment needs at least one client");

    std::ofstream csv(spec.output_csv, std::ios::trunc);
    if (!csv) throw ConfigError("cannot write " + spec.output_csv);
    csv << experiment_csv_header() << '\n';
    csv.flush();

    bool all_ok = true;
    for (std::uint32_t rep = 0; rep < spec.repetitions; ++rep) {
        log << "rep " << rep << ": spawning fleet of " << spec.fleet.workers.size() << " worker(s)\n";
        FleetHandles fleet = spawn_fleet(spec.fleet, qufleet_bin);
        log << "rep " << rep << ": manager on port " << fleet.port << ", running "
            << spec.clients.size() << " client job(s)\n";

        std::vector<ClientRunResult> results(spec.clients.size());
        {
            std::vector<std::thread> threads;
            for (std::size_t i = 0; i < spec.clients.size(); ++i)
                threads.emplace_back(
                    [&, i] { results[i] = run_client(spec.clients[i], fleet.port, rep, i); });
            for (auto& t : threads) t.join();
        }
        teardown_fleet(fleet);

        for (const auto& r : results) {
            if (r.failed) {
                all_ok = false;
                log << "rep " << rep << ": client " << r.client_id << " FAILED: " << r.error << '\n';
                csv << experiment_row(rep, r.client_id, "failed", 0, 0, 0, 0, 0) << '\n';
                continue;
            }
            double wall = 0;
            std::uint64_t circuits = 0;
            for (const auto& m : r.epochs) {
                csv << experiment_row(rep, r.client_id, std::to_string(m.epoch_index), m.wall_seconds,
                                      m.circuits_executed, m.circuits_per_second, m.loss, m.accuracy)
                    << '\n';
                wall += m.wall_seconds;
                circuits += m.circuits_executed;
            }
            const auto& last = r.epochs.back();
            csv << experiment_row(rep, r.client_id, "total", wall, circuits,
                                  static_cast<double>(circuits) / std::max(wall, 1e-9), last.loss,
                                  last.accuracy)
                << '\n';
            log << "rep " << rep << ": client " << r.client_id << " done (" << circuits
                << " circuits, " << format_double(wall) << " s)\n";
        }
        csv.flush();
    }
    return all_ok;
}

TrainConfig load_train_config(const std::string& path) {
    const KvView view = load_kv_view(path);
    TrainConfig config;
    config.alpha = view.get_double("alpha", config.alpha);
    config.epochs = view.get_u32("epochs", config.epochs);
    config.stride = view.get_u32("stride", config.stride);
    config.filter_width = view.get_u32("filter_width", config.filter_width);
    config.n_filters = view.get_u32("n_filters", config.n_filters);
    config.n_layers = view.get_u32("n_layers", config.n_layers);
    config.qubit_count = view.get_u32("qubit_count", config.qubit_count);
    const std::uint64_t shots = static_cast<std::uint64_t>(view.get_i64("shots", 0));
    if (shots > 0) config.shots = shots;
    config.seed = static_cast<std::uint64_t>(view.get_i64("seed", 0));
    if (const auto labels = view.get("class_labels")) {
        config.class_labels.clear();
        for (const auto part : split(*labels, ','))
            if (!part.empty()) config.class_labels.push_back(static_cast<int>(parse_i64(part)));
    }
    config.in_flight_window = view.get_u32("in_flight_window", config.in_flight_window);
    config.retries = view.get_u32("retries", config.retries);
    config.client_id = view.get_or("client_id", config.client_id);
    config.train_dense = view.get_bool("train_dense", config.train_dense);
    config.validate();
    return config;
}

ExperimentSpec load_experiment_spec(const std::string& path) {
    const KvView view = load_kv_view(path);
    ExperimentSpec spec;
    spec.mode = view.get_or("mode", spec.mode);
    spec.repetitions = view.get_u32("repetitions", 1);
    spec.output_csv = view.get_or("output", "experiment.csv");
    spec.fleet.heartbeat_period_s = view.get_double("heartbeat_period", 5.0);
    spec.fleet.allow_exact_fit = view.get_bool("allow_exact_fit", false);
    spec.fleet.synthetic_delay_ms = view.get_i64("synthetic_delay_ms", 0);
    spec.fleet.parallelism = view.get_u32("parallelism", 8);
    for (const auto& w : view.all("worker")) {
        std::vector<std::string_view> fields;
        for (auto p : split(w, ' '))
            if (!p.empty()) fields.push_back(p);
        if (fields.size() != 2) throw ConfigError(path + ": worker entry needs '<id> <max_qubits>'");
        spec.fleet.workers.push_back({std::string(fields[0]), parse_u32(fields[1])});
    }
    for (const auto& c : view.all("client")) {
        std::vector<std::string_view> fields;
        for (auto p : split(c, ' '))
            if (!p.empty()) fields.push_back(p);
        if (fields.size() != 2)
            throw ConfigError(path + ": client entry needs '<train_config> <dataset_csv>'");
        ClientJobSpec job;
        job.config = load_train_config(std::string(fields[0]));
        job.dataset_path = std::string(fields[1]);
        spec.clients.push_back(std::move(job));
    }
    return spec;
}

} // namespace qufleet
