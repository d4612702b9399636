#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "oracle.hpp"
#include "qufleet/errors.hpp"
#include "qufleet/executor.hpp"
#include "qufleet/trainer.hpp"

using namespace qufleet;

namespace {

constexpr double kPi = std::numbers::pi;

TrainConfig small_config() {
    TrainConfig c;
    c.alpha = 0.05;
    c.epochs = 1;
    c.stride = 2;
    c.filter_width = 4;
    c.n_filters = 1;
    c.n_layers = 1;
    c.qubit_count = 5;
    c.seed = 99;
    c.class_labels = {0, 1};
    return c;
}

// Test-local forward pass: total loss over the dataset at the given models,
// evaluated by direct circuit simulation. Used as the finite-difference
// baseline; it never touches compute_gradient.
double total_loss(const Dataset& ds, const ModelSet& models, const TrainConfig& config) {
    double total = 0;
    for (const auto& sample : ds.samples) {
        const auto patches = segment(sample.image, config.stride, config.filter_width);
        std::vector<double> class_fid(models.class_labels.size(), 0.0);
        for (std::size_t c = 0; c < models.class_labels.size(); ++c) {
            for (std::uint32_t f = 0; f < models.n_filters; ++f) {
                const auto& fm = models.at(c, f);
                for (const auto& patch : patches) {
                    const auto angles = dense_forward(fm.dense, patch.pixels);
                    auto circuit = assemble_swap_circuit(
                        "fd", encode_features(angles, models.spec.data_register()),
                        build_layers(models.spec, fm.theta), models.spec);
                    class_fid[c] += run_circuit(circuit);
                }
            }
        }
        for (auto& f : class_fid) f /= static_cast<double>(models.n_filters * patches.size());
        total += loss_and_predict(class_fid, models.class_labels, sample.label).loss;
    }
    return total;
}

// Analytic d(fidelity)/d(angle of gate at `gate_pos`), via the generator of
// the rotation inserted into a dense matrix product. Exact, no finite
// differences and no shift rule.
double analytic_fidelity_derivative(const LogicalCircuit& circuit, std::size_t gate_pos) {
    using oracle::C;
    using oracle::Mat;
    const auto& g = circuit.gates[gate_pos];
    Mat gen;  // generator H with U(t) = exp(-i t/2 H)
    const Mat I2 = oracle::identity(2);
    const Mat X{{C(0), C(1)}, {C(1), C(0)}};
    const Mat Y{{C(0), C(0, -1)}, {C(0, 1), C(0)}};
    const Mat Z{{C(1), C(0)}, {C(0), C(-1)}};
    auto kron_low_first = [](const Mat& low, const Mat& high) {
        Mat out(4, std::vector<C>(4, C(0)));
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                out[r][c] = low[r & 1][c & 1] * high[r >> 1][c >> 1];
        return out;
    };
    const Mat P0{{C(1), C(0)}, {C(0), C(0)}};
    const Mat P1{{C(0), C(0)}, {C(0), C(1)}};
    switch (g.kind) {
    case GateKind::RX: gen = X; break;
    case GateKind::RY: gen = Y; break;
    case GateKind::RZ: gen = Z; break;
    case GateKind::RYY: gen = kron_low_first(Y, Y); break;
    case GateKind::RZZ: gen = kron_low_first(Z, Z); break;
    case GateKind::CRY: {
        auto a = kron_low_first(P0, I2);
        const auto b = kron_low_first(P1, Y);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) a[r][c] += b[r][c];
        gen = a;
        break;
    }
    case GateKind::CRZ: {
        auto a = kron_low_first(P0, I2);
        const auto b = kron_low_first(P1, Z);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) a[r][c] += b[r][c];
        gen = a;
        break;
    }
    default: throw std::logic_error("not a parameterized gate");
    }

    const std::size_t n = circuit.qubit_demand;
    oracle::Vec state(std::size_t{1} << n, C(0));
    state[0] = C(1);
    oracle::Vec deriv;
    for (std::size_t pos = 0; pos < circuit.gates.size(); ++pos) {
        const auto& gate = circuit.gates[pos];
        state = oracle::mat_vec(oracle::embed(n, oracle::gate_matrix(gate), gate.targets), state);
        if (pos == gate_pos) {
            // d/dt exp(-i t/2 H) = (-i H / 2) U(t)
            auto scaled = gen;
            for (auto& row : scaled)
                for (auto& v : row) v *= C(0, -0.5);
            deriv = oracle::mat_vec(oracle::embed(n, scaled, gate.targets), state);
        } else if (pos > gate_pos) {
            deriv = oracle::mat_vec(oracle::embed(n, oracle::gate_matrix(gate), gate.targets), deriv);
        }
    }
    const std::uint64_t bit = std::uint64_t{1} << circuit.ancilla_index;
    double d = 0;
    for (std::uint64_t i = 0; i < state.size(); ++i)
        if (!(i & bit)) d += 2 * std::real(std::conj(state[i]) * deriv[i]);
    return d;
}

} // namespace

TEST_CASE("bank counting rule") {
    SUBCASE("1 sample, 1 filter, 1 class, 4 params: 8 shifted + 1 eval") {
        auto config = small_config();
        config.class_labels = {7};
        const auto ds = make_synthetic_two_class(1, 4, 4, 3, 7, 8);
        const auto models = init_models(config, 16);
        const auto bank = build_circuit_bank(ds, models, config, "t");
        CHECK(bank.param_shift_count == 8);
        CHECK(bank.eval_count == 1);
        CHECK(bank.size() == 9);
    }
    SUBCASE("shifted count matches |X| * nF * classes * params * 2 on one-patch samples") {
        std::mt19937_64 eng(5);
        for (int trial = 0; trial < 10; ++trial) {
            auto config = small_config();
            config.n_filters = 1 + static_cast<std::uint32_t>(eng() % 3);
            config.n_layers = 1 + static_cast<std::uint32_t>(eng() % 3);
            const std::size_t n = 1 + eng() % 5;
            const auto ds = make_synthetic_two_class(n, 4, 4, trial);
            const auto models = init_models(config, 16);
            const auto bank = build_circuit_bank(ds, models, config, "t");
            const std::size_t P = param_count(config.layer_spec());
            CHECK(bank.param_shift_count == n * config.n_filters * 2 * P * 2);
            CHECK(bank.eval_count == n * config.n_filters * 2);
        }
    }
    SUBCASE("multi-patch samples scale by the patch count") {
        auto config = small_config();
        const auto ds = make_synthetic_two_class(2, 6, 6, 1);  // 2x2 patches each
        const auto models = init_models(config, 16);
        const auto bank = build_circuit_bank(ds, models, config, "t");
        CHECK(bank.patches_per_sample == std::vector<std::size_t>{4, 4});
        CHECK(bank.param_shift_count == 2 * 4 * 1 * 2 * 4 * 2);
    }
    SUBCASE("the 45-sample, 4-filter, single-class, 4-parameter setting banks 1440 shifted circuits") {
        auto config = small_config();
        config.n_filters = 4;
        config.class_labels = {0};
        const auto ds = make_synthetic_two_class(45, 4, 4, 11, 0, 0);
        const auto models = init_models(config, 16);
        const auto bank = build_circuit_bank(ds, models, config, "t");
        CHECK(bank.param_shift_count == 1440);
    }
    SUBCASE("empty samples are rejected") {
        auto config = small_config();
        const auto models = init_models(config, 16);
        CHECK_THROWS_AS(build_circuit_bank(Dataset{}, models, config, "t"), ArgumentError);
    }
    SUBCASE("circuit ids are unique") {
        auto config = small_config();
        config.n_filters = 2;
        const auto ds = make_synthetic_two_class(3, 6, 6, 2);
        const auto bank = build_circuit_bank(ds, init_models(config, 16), config, "t");
        std::set<std::string> ids;
        for (const auto& e : bank.entries) CHECK(ids.insert(e.circuit.circuit_id).second);
    }
}

TEST_CASE("raw shift term arithmetic flows through the chain") {
    // Single sample/filter/parameterless chain factor worked out by hand.
    auto config = small_config();
    config.class_labels = {0};
    config.n_layers = 1;
    const auto ds = make_synthetic_two_class(1, 4, 4, 3, 0, 0);
    const auto models = init_models(config, 16);
    auto bank = build_circuit_bank(ds, models, config, "t");

    ResultMap results;
    const double f_eval = 0.8;
    for (const auto& e : bank.entries) {
        if (e.role == BankEntry::Role::Eval) results[e.circuit.circuit_id] = f_eval;
        else if (e.param == 0) results[e.circuit.circuit_id] = e.direction > 0 ? 0.9 : 0.7;
        else results[e.circuit.circuit_id] = 0.75;  // fwd == bck: zero shift term
    }
    const auto grads = compute_gradient(results, bank, ds, models, config);
    // p = 2(0.8 - 0.5) = 0.6, dL/dF = -2/p; raw term (0.9 - 0.7)/2 = 0.1.
    const double expected = -2.0 / 0.6 * 0.1;
    CHECK(grads.theta[0][0][0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(grads.theta[0][0][1] == doctest::Approx(0.0));
    CHECK(grads.theta[0][0][2] == doctest::Approx(0.0));
}

TEST_CASE("parameter-shift equals the analytic fidelity derivative for every layer kind") {
    std::mt19937_64 eng(41);
    for (std::uint32_t nl : {1u, 2u, 3u}) {
        const LayerSpec spec{nl, 5};
        std::vector<double> params(param_count(spec));
        for (auto& p : params) p = static_cast<double>(eng() >> 11) * 0x1.0p-53 * kPi;
        std::vector<double> angles(2 * spec.n_data_qubits());
        for (auto& a : angles) a = static_cast<double>(eng() >> 11) * 0x1.0p-53 * kPi;

        const auto circuit = assemble_swap_circuit("ps", encode_features(angles, spec.data_register()),
                                                   build_layers(spec, params), spec);
        for (std::size_t k = 0; k < circuit.param_count(); ++k) {
            const double fwd = run_circuit(shift_parameter(circuit, k, kPi / 2));
            const double bck = run_circuit(shift_parameter(circuit, k, -kPi / 2));
            const double shift_term = (fwd - bck) / 2;
            const double analytic =
                analytic_fidelity_derivative(circuit, circuit.param_bindings[k].gate_pos);
            CAPTURE(nl);
            CAPTURE(k);
            CHECK(std::abs(shift_term - analytic) < 1e-8);
        }
    }
}

TEST_CASE("chained gradient matches finite differences") {
    std::mt19937_64 eng(43);
    for (int trial = 0; trial < 3; ++trial) {
        TrainConfig config = small_config();
        config.n_layers = 1 + static_cast<std::uint32_t>(trial % 3);
        config.n_filters = 1 + static_cast<std::uint32_t>(trial % 2);
        config.seed = 1000 + trial;
        const auto ds = make_synthetic_two_class(2, 4, 4, trial);
        auto models = init_models(config, 16);

        const auto bank = build_circuit_bank(ds, models, config, "fd");
        LocalExecutor exec;
        const auto grads = compute_gradient(exec.execute(bank), bank, ds, models, config);

        const double eps = 1e-5;
        for (std::size_t c = 0; c < models.class_labels.size(); ++c) {
            for (std::uint32_t f = 0; f < config.n_filters; ++f) {
                for (std::size_t k = 0; k < param_count(config.layer_spec()); ++k) {
                    auto perturbed = models;
                    perturbed.at(c, f).theta[k] += eps;
                    const double up = total_loss(ds, perturbed, config);
                    perturbed.at(c, f).theta[k] -= 2 * eps;
                    const double down = total_loss(ds, perturbed, config);
                    const double fd = (up - down) / (2 * eps);
                    CAPTURE(c);
                    CAPTURE(f);
                    CAPTURE(k);
                    CHECK(std::abs(grads.theta[c][f][k] - fd) < 1e-4);
                }
            }
        }
    }
}

TEST_CASE("dense-layer gradients match finite differences when enabled") {
    TrainConfig config = small_config();
    config.filter_width = 2;
    config.stride = 2;
    config.qubit_count = 3;
    config.train_dense = true;
    config.class_labels = {0, 1};
    const auto ds = make_synthetic_two_class(2, 2, 2, 8);
    auto models = init_models(config, 4);

    const auto bank = build_circuit_bank(ds, models, config, "fdw");
    CHECK(bank.encoding_shift_count ==
          2ull * bank.eval_count * 2 * config.layer_spec().n_data_qubits());
    LocalExecutor exec;
    const auto grads = compute_gradient(exec.execute(bank), bank, ds, models, config);

    const double eps = 1e-5;
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t widx : {std::size_t{0}, std::size_t{3}, std::size_t{5}}) {
            auto perturbed = models;
            perturbed.at(c, 0).dense.weights[widx] += eps;
            const double up = total_loss(ds, perturbed, config);
            perturbed.at(c, 0).dense.weights[widx] -= 2 * eps;
            const double down = total_loss(ds, perturbed, config);
            CHECK(std::abs(grads.dense[c][0].weights[widx] - (up - down) / (2 * eps)) < 1e-4);
        }
        auto perturbed = models;
        perturbed.at(c, 0).dense.bias[1] += eps;
        const double up = total_loss(ds, perturbed, config);
        perturbed.at(c, 0).dense.bias[1] -= 2 * eps;
        const double down = total_loss(ds, perturbed, config);
        CHECK(std::abs(grads.dense[c][0].bias[1] - (up - down) / (2 * eps)) < 1e-4);
    }
}

TEST_CASE("update_params") {
    const auto out = update_params(std::vector<double>{1.0}, std::vector<double>{0.5}, 0.1);
    CHECK(out[0] == doctest::Approx(0.95).epsilon(1e-15));
    const auto zero_g = update_params(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0}, 0.1);
    CHECK(zero_g == std::vector<double>{1.0, 2.0});
    const auto zero_a = update_params(std::vector<double>{1.0, 2.0}, std::vector<double>{3.0, 4.0}, 0.0);
    CHECK(zero_a == std::vector<double>{1.0, 2.0});
    CHECK_THROWS_AS(update_params(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, 0.1),
                    ShapeError);
}

TEST_CASE("loss_and_predict") {
    const std::vector<int> labels{0, 1};

    SUBCASE("perfect separation scores ~zero loss") {
        const auto r = loss_and_predict(std::vector<double>{1.0, 0.5}, labels, 0);
        CHECK(r.loss < 1e-6);
        CHECK(r.predicted_label == 0);
    }
    SUBCASE("ties go to the lowest class index") {
        const auto r = loss_and_predict(std::vector<double>{0.8, 0.8}, labels, 1);
        CHECK(r.predicted_label == 0);
    }
    SUBCASE("single-class loss at F = 0.75 is -ln(1/2)") {
        const auto r = loss_and_predict(std::vector<double>{0.75}, {4}, 4);
        CHECK(r.loss == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
    }
    SUBCASE("fidelity outside [0.5, 1] is a range error") {
        CHECK_THROWS_AS(loss_and_predict(std::vector<double>{0.4, 0.8}, labels, 0), RangeError);
        CHECK_THROWS_AS(loss_and_predict(std::vector<double>{0.8, 1.1}, labels, 0), RangeError);
    }
}

TEST_CASE("incomplete results are rejected") {
    auto config = small_config();
    const auto ds = make_synthetic_two_class(1, 4, 4, 3);
    const auto models = init_models(config, 16);
    const auto bank = build_circuit_bank(ds, models, config, "t");
    LocalExecutor exec;
    auto results = exec.execute(bank);

    SUBCASE("missing result") {
        results.erase(results.begin());
        CHECK_THROWS_AS(compute_gradient(results, bank, ds, models, config), JobError);
    }
    SUBCASE("missing shift direction in the bank") {
        auto broken = bank;
        const auto it = std::find_if(broken.entries.begin(), broken.entries.end(),
                                     [](const BankEntry& e) { return e.role == BankEntry::Role::ParamShift; });
        broken.entries.erase(it);
        CHECK_THROWS_AS(compute_gradient(results, broken, ds, models, config), JobError);
    }
}

TEST_CASE("epochs are deterministic under a fixed seed") {
    auto config = small_config();
    config.epochs = 2;
    const auto ds = make_synthetic_two_class(4, 4, 4, 21);

    auto run_once = [&]() {
        auto models = init_models(config, 16);
        LocalExecutor exec;
        auto metrics = train(ds, models, config, exec);
        return std::pair{models, metrics};
    };
    const auto [m1, r1] = run_once();
    const auto [m2, r2] = run_once();
    for (std::size_t c = 0; c < 2; ++c)
        for (std::uint32_t f = 0; f < config.n_filters; ++f)
            CHECK(m1.at(c, f).theta == m2.at(c, f).theta);  // bitwise identical
    REQUIRE(r1.size() == r2.size());
    for (std::size_t e = 0; e < r1.size(); ++e) {
        CHECK(r1[e].loss == r2[e].loss);
        CHECK(r1[e].accuracy == r2[e].accuracy);
        CHECK(r1[e].circuits_executed == r2[e].circuits_executed);
    }
}

TEST_CASE("relabeling classes permutes model blocks identically") {
    auto config = small_config();
    config.epochs = 2;
    const auto ds = make_synthetic_two_class(4, 4, 4, 33);

    auto run_with_labels = [&](std::vector<int> labels) {
        auto c = config;
        c.class_labels = std::move(labels);
        auto models = init_models(c, 16);
        LocalExecutor exec;
        train(ds, models, c, exec);
        return models;
    };
    const auto fwd = run_with_labels({0, 1});
    const auto rev = run_with_labels({1, 0});
    for (std::uint32_t f = 0; f < config.n_filters; ++f) {
        CHECK(fwd.at(0, f).theta == rev.at(1, f).theta);  // label 0 block
        CHECK(fwd.at(1, f).theta == rev.at(0, f).theta);  // label 1 block
    }
}

TEST_CASE("run_epoch metrics bookkeeping") {
    auto config = small_config();
    const auto ds = make_synthetic_two_class(4, 4, 4, 2);
    auto models = init_models(config, 16);
    LocalExecutor exec;
    const auto m = run_epoch(ds, models, config, exec, 0);
    const std::size_t P = param_count(config.layer_spec());
    CHECK(m.circuits_executed == 4 * 1 * 2 * (2 * P + 1));
    CHECK(m.circuits_per_second ==
          doctest::Approx(static_cast<double>(m.circuits_executed) / m.wall_seconds).epsilon(1e-12));
    CHECK(m.loss > 0);
    CHECK(m.accuracy >= 0);
    CHECK(m.accuracy <= 1);
}

TEST_CASE("loss decreases on a separable synthetic set") {
    auto config = small_config();
    config.epochs = 5;
    config.alpha = 0.1;
    const auto ds = make_synthetic_two_class(8, 4, 4, 77);
    auto models = init_models(config, 16);
    LocalExecutor exec;
    const auto metrics = train(ds, models, config, exec);
    for (std::size_t e = 1; e < metrics.size(); ++e) CHECK(metrics[e].loss < metrics[e - 1].loss);
}
