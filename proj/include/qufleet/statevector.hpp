#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace qufleet {

using Complex = std::complex<double>;

// Gate set required by the workload. Qubit 0 is the least-significant bit of
// the basis-state index throughout.
//
// Conventions:
//   RX/RY/RZ(t)  = exp(-i t/2 * X|Y|Z)
//   RYY/RZZ(t)   = exp(-i t/2 * Y(x)Y | Z(x)Z)
//   CRY/CRZ(t)   = exp(-i t/2 * (|0><0| (x) I + |1><1| (x) Y|Z))
//
// CRY/CRZ act as RY/RZ on the target when the control is set; the
// control-clear branch picks up the compensating phase e^{-i t/2}. Each
// generator squares to the identity, so the two-point +-pi/2 shift identity
// d<f>/dt = (<f>(t+pi/2) - <f>(t-pi/2)) / 2 is exact for every
// parameterized kind, controlled ones included.
enum class GateKind : std::uint8_t { H, RX, RY, RZ, RYY, RZZ, CRY, CRZ, CSWAP };

int gate_arity(GateKind kind);
bool gate_has_angle(GateKind kind);
std::string_view gate_name(GateKind kind);
std::optional<GateKind> gate_from_name(std::string_view name);

struct Gate {
    GateKind kind;
    std::vector<std::uint32_t> targets;  // (control, target) order for CRY/CRZ; (control, a, b) for CSWAP
    double angle = 0.0;                  // ignored for H and CSWAP

    static Gate h(std::uint32_t q) { return {GateKind::H, {q}, 0.0}; }
    static Gate rx(std::uint32_t q, double t) { return {GateKind::RX, {q}, t}; }
    static Gate ry(std::uint32_t q, double t) { return {GateKind::RY, {q}, t}; }
    static Gate rz(std::uint32_t q, double t) { return {GateKind::RZ, {q}, t}; }
    static Gate ryy(std::uint32_t a, std::uint32_t b, double t) { return {GateKind::RYY, {a, b}, t}; }
    static Gate rzz(std::uint32_t a, std::uint32_t b, double t) { return {GateKind::RZZ, {a, b}, t}; }
    static Gate cry(std::uint32_t control, std::uint32_t target, double t) { return {GateKind::CRY, {control, target}, t}; }
    static Gate crz(std::uint32_t control, std::uint32_t target, double t) { return {GateKind::CRZ, {control, target}, t}; }
    static Gate cswap(std::uint32_t control, std::uint32_t a, std::uint32_t b) { return {GateKind::CSWAP, {control, a, b}, 0.0}; }

    bool operator==(const Gate&) const = default;
};

// Throws on arity mismatch, duplicate targets, or targets >= n_qubits.
void validate_gate(const Gate& gate, std::uint32_t n_qubits);

// Dense complex amplitude vector over n qubits. Immutable through the public
// API; gate application returns a new value.
class StateVector {
public:
    static constexpr std::uint32_t kMaxQubits = 24;  // desk-scale cap

    explicit StateVector(std::uint32_t n_qubits, std::uint32_t max_qubits = kMaxQubits);

    // Accepts vectors normalized within 1e-9 and renormalizes exactly.
    static StateVector from_amplitudes(std::uint32_t n_qubits, std::vector<Complex> amplitudes,
                                       std::uint32_t max_qubits = kMaxQubits);

    std::uint32_t n_qubits() const noexcept { return n_qubits_; }
    std::uint64_t dimension() const noexcept { return amplitudes_.size(); }
    std::span<const Complex> amplitudes() const noexcept { return amplitudes_; }
    Complex amplitude(std::uint64_t basis_index) const;

    double norm() const;
    double prob_zero(std::uint32_t qubit) const;

    StateVector applied(const Gate& gate) const;
    StateVector applied(std::span<const Gate> gates) const;

private:
    void apply_in_place(const Gate& gate);

    std::uint32_t n_qubits_;
    std::vector<Complex> amplitudes_;

    friend StateVector joint_register(const StateVector&, const StateVector&);
};

// Spec-shaped free functions (also the surface the python module exposes).
StateVector new_state(std::uint32_t n_qubits);
StateVector apply_gate(const StateVector& state, const Gate& gate);
double prob_zero(const StateVector& state, std::uint32_t qubit);

// P(ancilla = 0) of the swap test between two equal-width states:
// builds the (1 + 2n)-qubit register |anc=0> (x) |psi> (x) |phi>, applies
// H(anc), one CSWAP per qubit pair controlled on anc, H(anc), and measures
// prob_zero(anc). Exact result is 1/2 + 1/2 |<psi|phi>|^2, bounded to
// [0.5, 1]. With `shots` present, returns the frequency of ancilla-0 over
// seeded Bernoulli draws of that exact probability.
double swap_test_fidelity(const StateVector& psi, const StateVector& phi,
                          std::optional<std::uint64_t> shots = std::nullopt,
                          std::uint64_t seed = 0);

// Frequency of `shots` Bernoulli(p) draws from a seeded mt19937_64 stream.
double sample_bernoulli_frequency(double p, std::uint64_t shots, std::uint64_t seed);

} // namespace qufleet
