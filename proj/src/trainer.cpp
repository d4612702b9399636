#include "qufleet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "qufleet/errors.hpp"
#include "qufleet/executor.hpp"
#include "qufleet/textio.hpp"

namespace qufleet {

namespace {

constexpr double kProbClip = 1e-9;
constexpr double kFidelitySlack = 1e-9;

double uniform01(std::mt19937_64& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

// sigmoid-squash derivative in terms of the squashed angle a = pi*sigmoid(y)
double squash_slope(double angle) { return angle * (std::numbers::pi - angle) / std::numbers::pi; }

std::string entry_base_id(const std::string& prefix, std::size_t sample, std::size_t patch,
                          std::uint32_t filter, int class_label) {
    return prefix + "/s" + std::to_string(sample) + "/t" + std::to_string(patch) + "/f" +
           std::to_string(filter) + "/c" + std::to_string(class_label);
}

} // namespace

void TrainConfig::validate() const {
    if (!(alpha > 0)) throw ArgumentError("learning rate must be positive");
    if (epochs < 1) throw ArgumentError("epoch count must be positive");
    if (n_filters < 1) throw ArgumentError("filter count must be positive");
    if (filter_width < 1 || stride < 1) throw ArgumentError("filter width and stride must be positive");
    layer_spec().validate();
    if (class_labels.empty()) throw ArgumentError("class label list is empty");
    if (std::set<int>(class_labels.begin(), class_labels.end()).size() != class_labels.size())
        throw ArgumentError("class labels must be distinct");
    if (in_flight_window < 1) throw ArgumentError("in-flight window must be positive");
    if (shots && *shots == 0) throw ArgumentError("shots must be positive when given");
    if (client_id.empty()) throw ArgumentError("client id must be non-empty");
}

ModelSet init_models(const TrainConfig& config, std::uint32_t dense_input_dim) {
    config.validate();
    ModelSet set;
    set.spec = config.layer_spec();
    set.class_labels = config.class_labels;
    set.n_filters = config.n_filters;
    const std::size_t n_params = param_count(set.spec);
    const std::uint32_t out_dim = 2 * set.spec.n_data_qubits();

    set.models.resize(config.class_labels.size());
    for (std::size_t c = 0; c < config.class_labels.size(); ++c) {
        const auto label = static_cast<std::uint64_t>(static_cast<std::int64_t>(config.class_labels[c]));
        set.models[c].resize(config.n_filters);
        for (std::uint32_t f = 0; f < config.n_filters; ++f) {
            FilterModel& fm = set.models[c][f];
            fm.dense = make_dense(dense_input_dim, out_dim,
                                  seed_mix(seed_mix(config.seed, hash_str("dense")), seed_mix(label, f)));
            std::mt19937_64 eng(seed_mix(seed_mix(config.seed, hash_str("theta")), seed_mix(label, f)));
            fm.theta.resize(n_params);
            for (auto& t : fm.theta) t = uniform01(eng) * std::numbers::pi;
        }
    }
    return set;
}

CircuitBank build_circuit_bank(const Dataset& samples, const ModelSet& models,
                               const TrainConfig& config, const std::string& id_prefix) {
    config.validate();
    if (samples.samples.empty()) throw ArgumentError("cannot build a circuit bank from zero samples");
    const LayerSpec spec = models.spec;
    const auto data_register = spec.data_register();

    CircuitBank bank;
    bank.patches_per_sample.reserve(samples.samples.size());

    for (std::size_t s = 0; s < samples.samples.size(); ++s) {
        const auto patches = segment(samples.samples[s].image, config.stride, config.filter_width);
        bank.patches_per_sample.push_back(patches.size());
        for (std::size_t t = 0; t < patches.size(); ++t) {
            for (std::size_t c = 0; c < models.class_labels.size(); ++c) {
                for (std::uint32_t f = 0; f < models.n_filters; ++f) {
                    const FilterModel& fm = models.at(c, f);
                    const auto angles = dense_forward(fm.dense, patches[t].pixels);
                    auto encoding = encode_features(angles, data_register);
                    auto layers = build_layers(spec, fm.theta);
                    LogicalCircuit base = assemble_swap_circuit(
                        entry_base_id(id_prefix, s, t, f, models.class_labels[c]), std::move(encoding),
                        std::move(layers), spec);

                    for (std::size_t k = 0; k < base.param_count(); ++k) {
                        bank.entries.push_back({BankEntry::Role::ParamShift, +1, s, t, f, c, k,
                                                shift_parameter(base, k, std::numbers::pi / 2)});
                        bank.entries.push_back({BankEntry::Role::ParamShift, -1, s, t, f, c, k,
                                                shift_parameter(base, k, -std::numbers::pi / 2)});
                        bank.param_shift_count += 2;
                    }
                    if (config.train_dense) {
                        // Encoding gates sit first: angle e lives at gate position e.
                        for (std::size_t e = 0; e < angles.size(); ++e) {
                            for (int dir : {+1, -1}) {
                                LogicalCircuit shifted = base;
                                shifted.gates[e].angle += dir * std::numbers::pi / 2;
                                shifted.circuit_id += (dir > 0 ? "+e" : "-e") + std::to_string(e);
                                bank.entries.push_back(
                                    {BankEntry::Role::EncodingShift, dir, s, t, f, c, e, std::move(shifted)});
                                ++bank.encoding_shift_count;
                            }
                        }
                    }
                    bank.entries.push_back({BankEntry::Role::Eval, 0, s, t, f, c, 0, std::move(base)});
                    ++bank.eval_count;
                }
            }
        }
    }
    return bank;
}

ResultMap LocalExecutor::execute(const CircuitBank& bank) {
    ResultMap results;
    for (const auto& entry : bank.entries) {
        const std::uint64_t seed = seed_mix(seed_base_, hash_str(entry.circuit.circuit_id));
        double fidelity = run_circuit(entry.circuit, shots_, seed);
        results[entry.circuit.circuit_id] = fidelity;
    }
    if (results.size() != bank.entries.size()) throw ArgumentError("bank contains duplicate circuit ids");
    return results;
}

LossResult loss_and_predict(std::span<const double> class_fidelities,
                            const std::vector<int>& class_labels, int true_label) {
    if (class_fidelities.size() != class_labels.size())
        throw ShapeError("one fidelity per class model expected");
    if (class_fidelities.empty()) throw ArgumentError("no class fidelities");
    const auto y = std::find(class_labels.begin(), class_labels.end(), true_label);
    if (y == class_labels.end()) throw ArgumentError("true label not in the class list");
    const std::size_t y_index = static_cast<std::size_t>(y - class_labels.begin());

    double loss = 0;
    std::size_t best = 0;
    for (std::size_t c = 0; c < class_fidelities.size(); ++c) {
        const double f = class_fidelities[c];
        if (f < 0.5 - kFidelitySlack || f > 1.0 + kFidelitySlack)
            throw RangeError("fidelity " + format_double(f) + " outside [0.5, 1]");
        const double p = std::clamp(2.0 * (f - 0.5), kProbClip, 1.0 - kProbClip);
        loss += (c == y_index) ? -std::log(p) : -std::log(1.0 - p);
        if (class_fidelities[c] > class_fidelities[best]) best = c;  // ties keep the lowest index
    }
    return {loss, class_labels[best]};
}

std::vector<double> loss_fidelity_gradient(std::span<const double> class_fidelities,
                                           const std::vector<int>& class_labels, int true_label) {
    const auto y = std::find(class_labels.begin(), class_labels.end(), true_label);
    if (y == class_labels.end()) throw ArgumentError("true label not in the class list");
    const std::size_t y_index = static_cast<std::size_t>(y - class_labels.begin());
    std::vector<double> grad(class_fidelities.size(), 0.0);
    for (std::size_t c = 0; c < class_fidelities.size(); ++c) {
        const double p = 2.0 * (class_fidelities[c] - 0.5);
        if (p <= kProbClip || p >= 1.0 - kProbClip) continue;  // clip region is flat
        grad[c] = (c == y_index) ? -2.0 / p : 2.0 / (1.0 - p);
    }
    return grad;
}

EvalTable evaluate_results(const ResultMap& results, const CircuitBank& bank, const Dataset& samples,
                           const ModelSet& models) {
    const std::size_t n_samples = samples.samples.size();
    const std::size_t n_classes = models.class_labels.size();
    EvalTable table;
    table.class_fidelity.assign(n_samples, std::vector<double>(n_classes, 0.0));

    std::vector<std::vector<std::size_t>> counts(n_samples, std::vector<std::size_t>(n_classes, 0));
    for (const auto& entry : bank.entries) {
        if (entry.role != BankEntry::Role::Eval) continue;
        const auto it = results.find(entry.circuit.circuit_id);
        if (it == results.end()) throw JobError("incomplete results: missing " + entry.circuit.circuit_id);
        table.class_fidelity[entry.sample][entry.class_index] += it->second;
        ++counts[entry.sample][entry.class_index];
    }
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::size_t expected = models.n_filters * bank.patches_per_sample[s];
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (counts[s][c] != expected) throw JobError("evaluation circuits missing for sample " + std::to_string(s));
            double f = table.class_fidelity[s][c] / static_cast<double>(expected);
            // Shot estimates can dip below the exact bound; the pooled value
            // is clamped back into the meaningful range.
            table.class_fidelity[s][c] = std::clamp(f, 0.5, 1.0);
        }
    }

    double loss_sum = 0;
    std::size_t correct = 0;
    table.sample_loss.resize(n_samples);
    table.predicted.resize(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const auto r = loss_and_predict(table.class_fidelity[s], models.class_labels,
                                        samples.samples[s].label);
        table.sample_loss[s] = r.loss;
        table.predicted[s] = r.predicted_label;
        loss_sum += r.loss;
        if (r.predicted_label == samples.samples[s].label) ++correct;
    }
    table.mean_loss = loss_sum / static_cast<double>(n_samples);
    table.accuracy = static_cast<double>(correct) / static_cast<double>(n_samples);
    return table;
}

Gradients compute_gradient(const ResultMap& results, const CircuitBank& bank, const Dataset& samples,
                           const ModelSet& models, const TrainConfig& config) {
    for (const auto& entry : bank.entries)
        if (!results.count(entry.circuit.circuit_id))
            throw JobError("incomplete results: missing " + entry.circuit.circuit_id);

    const EvalTable table = evaluate_results(results, bank, samples, models);
    std::vector<std::vector<double>> dldf(samples.samples.size());
    for (std::size_t s = 0; s < samples.samples.size(); ++s)
        dldf[s] = loss_fidelity_gradient(table.class_fidelity[s], models.class_labels,
                                         samples.samples[s].label);

    const std::size_t n_params = param_count(models.spec);
    Gradients grads;
    grads.theta.assign(models.class_labels.size(),
                       std::vector<std::vector<double>>(models.n_filters, std::vector<double>(n_params, 0.0)));
    if (config.train_dense) {
        grads.dense.resize(models.class_labels.size());
        for (std::size_t c = 0; c < models.class_labels.size(); ++c) {
            grads.dense[c].resize(models.n_filters);
            for (std::uint32_t f = 0; f < models.n_filters; ++f) {
                const auto& d = models.at(c, f).dense;
                grads.dense[c][f].weights.assign(d.weights.size(), 0.0);
                grads.dense[c][f].bias.assign(d.bias.size(), 0.0);
            }
        }
    }

    // Both shift directions must be present for every shifted key.
    std::map<std::tuple<int, std::size_t, std::size_t, std::uint32_t, std::size_t, std::size_t>, int> seen;

    // Cached per-sample patches (pixels and angles) for the dense chain rule.
    std::vector<std::vector<Patch>> patch_cache(samples.samples.size());
    auto patches_of = [&](std::size_t s) -> const std::vector<Patch>& {
        if (patch_cache[s].empty())
            patch_cache[s] = segment(samples.samples[s].image, config.stride, config.filter_width);
        return patch_cache[s];
    };

    for (const auto& entry : bank.entries) {
        if (entry.role == BankEntry::Role::Eval) continue;
        const double fidelity = results.at(entry.circuit.circuit_id);
        const double pool = static_cast<double>(models.n_filters) *
                            static_cast<double>(bank.patches_per_sample[entry.sample]);
        const double chain = dldf[entry.sample][entry.class_index] / pool;
        const double half = entry.direction * fidelity / 2.0;
        seen[{static_cast<int>(entry.role), entry.sample, entry.patch, entry.filter, entry.class_index,
              entry.param}] |= entry.direction > 0 ? 1 : 2;

        if (entry.role == BankEntry::Role::ParamShift) {
            grads.theta[entry.class_index][entry.filter][entry.param] += chain * half;
        } else if (config.train_dense) {
            const auto& patch = patches_of(entry.sample)[entry.patch];
            const auto& fm = models.at(entry.class_index, entry.filter);
            const auto angles = dense_forward(fm.dense, patch.pixels);
            const double slope = squash_slope(angles[entry.param]);
            auto& dg = grads.dense[entry.class_index][entry.filter];
            for (std::uint32_t i = 0; i < fm.dense.input_dim; ++i)
                dg.weights[i * fm.dense.output_dim + entry.param] += chain * half * slope * patch.pixels[i];
            dg.bias[entry.param] += chain * half * slope;
        }
    }
    for (const auto& [key, mask] : seen)
        if (mask != 3) throw JobError("incomplete results: a shift direction is missing");
    return grads;
}

std::vector<double> update_params(std::span<const double> params, std::span<const double> gradient,
                                  double alpha) {
    if (params.size() != gradient.size()) throw ShapeError("parameter/gradient length mismatch");
    std::vector<double> out(params.begin(), params.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= alpha * gradient[i];
    return out;
}

void apply_gradients(ModelSet& models, const Gradients& gradients, double alpha) {
    for (std::size_t c = 0; c < models.models.size(); ++c) {
        for (std::size_t f = 0; f < models.models[c].size(); ++f) {
            auto& fm = models.models[c][f];
            fm.theta = update_params(fm.theta, gradients.theta[c][f], alpha);
            if (!gradients.dense.empty()) {
                const auto& dg = gradients.dense[c][f];
                for (std::size_t i = 0; i < fm.dense.weights.size(); ++i)
                    fm.dense.weights[i] -= alpha * dg.weights[i];
                for (std::size_t i = 0; i < fm.dense.bias.size(); ++i) fm.dense.bias[i] -= alpha * dg.bias[i];
            }
        }
    }
}

EpochMetrics run_epoch(const Dataset& samples, ModelSet& models, const TrainConfig& config,
                       CircuitExecutor& executor, std::uint32_t epoch_index) {
    const auto start = std::chrono::steady_clock::now();
    const CircuitBank bank = build_circuit_bank(
        samples, models, config, config.client_id + "/e" + std::to_string(epoch_index));
    const ResultMap results = executor.execute(bank);
    const auto stop = std::chrono::steady_clock::now();

    const EvalTable table = evaluate_results(results, bank, samples, models);
    const Gradients grads = compute_gradient(results, bank, samples, models, config);
    apply_gradients(models, grads, config.alpha);

    EpochMetrics m;
    m.epoch_index = epoch_index;
    m.wall_seconds = std::max(std::chrono::duration<double>(stop - start).count(), 1e-9);
    m.circuits_executed = bank.size();
    m.circuits_per_second = static_cast<double>(m.circuits_executed) / m.wall_seconds;
    m.loss = table.mean_loss;
    m.accuracy = table.accuracy;
    return m;
}

std::vector<EpochMetrics> train(const Dataset& samples, ModelSet& models, const TrainConfig& config,
                                CircuitExecutor& executor) {
    std::vector<EpochMetrics> all;
    all.reserve(config.epochs);
    for (std::uint32_t e = 0; e < config.epochs; ++e)
        all.push_back(run_epoch(samples, models, config, executor, e));
    return all;
}

std::string metrics_csv_header() { return "epoch,wall_seconds,circuits,circuits_per_second,loss,accuracy"; }

std::string metrics_csv_row(const EpochMetrics& m) {
    return std::to_string(m.epoch_index) + ',' + format_double(m.wall_seconds) + ',' +
           std::to_string(m.circuits_executed) + ',' + format_double(m.circuits_per_second) + ',' +
           format_double(m.loss) + ',' + format_double(m.accuracy);
}

void write_metrics_csv(std::span<const EpochMetrics> metrics, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << metrics_csv_header() << '\n';
    for (const auto& m : metrics) out << metrics_csv_row(m) << '\n';
}

} // namespace qufleet
