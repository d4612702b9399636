#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qufleet/circuit.hpp"
#include "qufleet/dataset.hpp"
#include "qufleet/segmentation.hpp"

namespace qufleet {

struct TrainConfig {
    double alpha = 0.001;            // learning rate
    std::uint32_t epochs = 1;
    std::uint32_t stride = 2;        // pixels between patch offsets
    std::uint32_t filter_width = 4;  // patch side length
    std::uint32_t n_filters = 4;
    std::uint32_t n_layers = 1;
    std::uint32_t qubit_count = 5;   // ancilla + data + model, odd
    std::optional<std::uint64_t> shots;  // absent = exact expectations
    std::uint64_t seed = 0;
    std::vector<int> class_labels = {0, 1};
    std::uint32_t in_flight_window = 32;
    std::uint32_t retries = 2;       // resubmissions per failed circuit
    std::string client_id = "client";
    bool train_dense = false;        // also learn the dense layer via shifted encodings

    LayerSpec layer_spec() const { return {n_layers, qubit_count}; }
    void validate() const;
};

// One (class, filter) model: frozen dense reduction plus trainable angles.
struct FilterModel {
    DenseLayer dense;
    std::vector<double> theta;
};

struct ModelSet {
    LayerSpec spec;
    std::vector<int> class_labels;
    std::uint32_t n_filters = 1;
    std::vector<std::vector<FilterModel>> models;  // [class_index][filter]

    FilterModel& at(std::size_t class_index, std::size_t filter) { return models[class_index][filter]; }
    const FilterModel& at(std::size_t class_index, std::size_t filter) const { return models[class_index][filter]; }
};

// Seeds are keyed by class label and filter index, so relabeling the class
// list permutes whole model blocks without changing their contents.
ModelSet init_models(const TrainConfig& config, std::uint32_t dense_input_dim);

struct BankEntry {
    enum class Role : std::uint8_t { Eval, ParamShift, EncodingShift };
    Role role = Role::Eval;
    int direction = 0;  // +1 / -1 for shifted entries, 0 for Eval
    std::size_t sample = 0;
    std::size_t patch = 0;
    std::uint32_t filter = 0;
    std::size_t class_index = 0;
    std::size_t param = 0;  // theta index, or encoding-angle index for EncodingShift
    LogicalCircuit circuit;
};

// The +-pi/2-shifted circuits for one step, plus one unshifted evaluation
// circuit per (sample, patch, filter, class).
struct CircuitBank {
    std::vector<BankEntry> entries;
    std::size_t eval_count = 0;
    std::size_t param_shift_count = 0;
    std::size_t encoding_shift_count = 0;
    std::vector<std::size_t> patches_per_sample;

    std::size_t size() const { return entries.size(); }
};

// For every (sample, patch, filter, class, theta): one +pi/2 and one -pi/2
// circuit, plus the unshifted evaluation circuit per (sample, patch, filter,
// class). With train_dense, adds one shifted pair per encoding angle.
// `id_prefix` namespaces circuit ids (callers include client and epoch).
CircuitBank build_circuit_bank(const Dataset& samples, const ModelSet& models,
                               const TrainConfig& config, const std::string& id_prefix);

using ResultMap = std::map<std::string, double>;

class CircuitExecutor {
public:
    virtual ~CircuitExecutor() = default;
    virtual ResultMap execute(const CircuitBank& bank) = 0;
};

// In-process execution, single-threaded; the reference path for tests.
class LocalExecutor : public CircuitExecutor {
public:
    LocalExecutor() = default;
    LocalExecutor(std::optional<std::uint64_t> shots, std::uint64_t seed_base)
        : shots_(shots), seed_base_(seed_base) {}
    ResultMap execute(const CircuitBank& bank) override;

private:
    std::optional<std::uint64_t> shots_;
    std::uint64_t seed_base_ = 0;
};

// Rescales swap-test fidelities to p_c = 2(F_c - 1/2) and scores
// -ln p_y - sum_{c != y} ln(1 - p_c) with p clipped to [1e-9, 1 - 1e-9].
// Prediction is argmax fidelity, ties to the lowest class position.
struct LossResult {
    double loss = 0;
    int predicted_label = 0;
};
LossResult loss_and_predict(std::span<const double> class_fidelities,
                            const std::vector<int>& class_labels, int true_label);

// dLoss/dF per class for one sample; zero where the clip is active.
std::vector<double> loss_fidelity_gradient(std::span<const double> class_fidelities,
                                           const std::vector<int>& class_labels, int true_label);

struct EvalTable {
    std::vector<std::vector<double>> class_fidelity;  // [sample][class] mean over (filter, patch)
    std::vector<double> sample_loss;
    std::vector<int> predicted;
    double mean_loss = 0;
    double accuracy = 0;
};
EvalTable evaluate_results(const ResultMap& results, const CircuitBank& bank, const Dataset& samples,
                           const ModelSet& models);

struct DenseGradient {
    std::vector<double> weights;  // input_dim x output_dim, row-major
    std::vector<double> bias;
};

struct Gradients {
    std::vector<std::vector<std::vector<double>>> theta;  // [class][filter][param]
    std::vector<std::vector<DenseGradient>> dense;        // only filled when train_dense
};

// Chains the raw shift terms (F_fwd - F_bck)/2 with dLoss/dF, summed over
// samples and averaged over (filter, patch) exactly as the pooled fidelity is.
Gradients compute_gradient(const ResultMap& results, const CircuitBank& bank, const Dataset& samples,
                           const ModelSet& models, const TrainConfig& config);

// theta' = theta - alpha * g, elementwise.
std::vector<double> update_params(std::span<const double> params, std::span<const double> gradient,
                                  double alpha);
void apply_gradients(ModelSet& models, const Gradients& gradients, double alpha);

struct EpochMetrics {
    std::uint32_t epoch_index = 0;
    double wall_seconds = 0;
    std::uint64_t circuits_executed = 0;
    double circuits_per_second = 0;
    double loss = 0;      // mean over samples
    double accuracy = 0;  // training-set fraction correct
};

// One full pass: segment, dense-map, bank, dispatch, gradients, update.
// The wall clock brackets bank construction through the last result; the
// gradient step and bookkeeping fall outside it.
EpochMetrics run_epoch(const Dataset& samples, ModelSet& models, const TrainConfig& config,
                       CircuitExecutor& executor, std::uint32_t epoch_index);

std::vector<EpochMetrics> train(const Dataset& samples, ModelSet& models, const TrainConfig& config,
                                CircuitExecutor& executor);

// CSV columns: epoch,wall_seconds,circuits,circuits_per_second,loss,accuracy.
void write_metrics_csv(std::span<const EpochMetrics> metrics, const std::string& path);
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

} // namespace qufleet
