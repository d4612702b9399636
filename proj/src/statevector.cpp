#include "qufleet/statevector.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qufleet/errors.hpp"

namespace qufleet {

namespace {

constexpr double kNormSlack = 1e-9;

struct Mat2 {
    Complex m[2][2];
};

struct Mat4 {
    Complex m[4][4]{};
};

Mat2 single_qubit_matrix(GateKind kind, double t) {
    const double c = std::cos(t / 2), s = std::sin(t / 2);
    const double r = 1.0 / std::sqrt(2.0);
    switch (kind) {
    case GateKind::H:
        return {{{Complex(r), Complex(r)}, {Complex(r), Complex(-r)}}};
    case GateKind::RX:
        return {{{Complex(c), Complex(0, -s)}, {Complex(0, -s), Complex(c)}}};
    case GateKind::RY:
        return {{{Complex(c), Complex(-s)}, {Complex(s), Complex(c)}}};
    case GateKind::RZ:
        return {{{std::polar(1.0, -t / 2), Complex(0)}, {Complex(0), std::polar(1.0, t / 2)}}};
    default:
        throw ArgumentError("not a single-qubit gate");
    }
}

// Matrix index = bit(targets[0]) + 2 * bit(targets[1]).
Mat4 two_qubit_matrix(GateKind kind, double t) {
    const double c = std::cos(t / 2), s = std::sin(t / 2);
    const Complex em = std::polar(1.0, -t / 2), ep = std::polar(1.0, t / 2);
    Mat4 g;
    switch (kind) {
    case GateKind::RYY:
        // cos(t/2) I - i sin(t/2) Y(x)Y
        g.m[0][0] = g.m[1][1] = g.m[2][2] = g.m[3][3] = Complex(c);
        g.m[0][3] = g.m[3][0] = Complex(0, s);
        g.m[1][2] = g.m[2][1] = Complex(0, -s);
        return g;
    case GateKind::RZZ:
        g.m[0][0] = g.m[3][3] = em;
        g.m[1][1] = g.m[2][2] = ep;
        return g;
    case GateKind::CRY:
        // control clear (idx 0,2): phase e^{-it/2}; control set (idx 1,3): RY(t)
        g.m[0][0] = g.m[2][2] = em;
        g.m[1][1] = Complex(c);
        g.m[1][3] = Complex(-s);
        g.m[3][1] = Complex(s);
        g.m[3][3] = Complex(c);
        return g;
    case GateKind::CRZ:
        g.m[0][0] = g.m[2][2] = em;
        g.m[1][1] = em;
        g.m[3][3] = ep;
        return g;
    default:
        throw ArgumentError("not a two-qubit gate");
    }
}

} // namespace

int gate_arity(GateKind kind) {
    switch (kind) {
    case GateKind::H:
    case GateKind::RX:
    case GateKind::RY:
    case GateKind::RZ:
        return 1;
    case GateKind::RYY:
    case GateKind::RZZ:
    case GateKind::CRY:
    case GateKind::CRZ:
        return 2;
    case GateKind::CSWAP:
        return 3;
    }
    throw ArgumentError("unknown gate kind");
}

bool gate_has_angle(GateKind kind) { return kind != GateKind::H && kind != GateKind::CSWAP; }

std::string_view gate_name(GateKind kind) {
    switch (kind) {
    case GateKind::H: return "H";
    case GateKind::RX: return "RX";
    case GateKind::RY: return "RY";
    case GateKind::RZ: return "RZ";
    case GateKind::RYY: return "RYY";
    case GateKind::RZZ: return "RZZ";
    case GateKind::CRY: return "CRY";
    case GateKind::CRZ: return "CRZ";
    case GateKind::CSWAP: return "CSWAP";
    }
    throw ArgumentError("unknown gate kind");
}

std::optional<GateKind> gate_from_name(std::string_view name) {
    for (auto kind : {GateKind::H, GateKind::RX, GateKind::RY, GateKind::RZ, GateKind::RYY,
                      GateKind::RZZ, GateKind::CRY, GateKind::CRZ, GateKind::CSWAP}) {
        if (gate_name(kind) == name) return kind;
    }
    return std::nullopt;
}

void validate_gate(const Gate& gate, std::uint32_t n_qubits) {
    const auto arity = static_cast<std::size_t>(gate_arity(gate.kind));
    if (gate.targets.size() != arity)
        throw ArgumentError(std::string(gate_name(gate.kind)) + " expects " + std::to_string(arity) +
                            " target(s), got " + std::to_string(gate.targets.size()));
    for (std::size_t i = 0; i < gate.targets.size(); ++i) {
        if (gate.targets[i] >= n_qubits)
            throw IndexError("gate target " + std::to_string(gate.targets[i]) + " out of range for " +
                             std::to_string(n_qubits) + " qubits");
        for (std::size_t j = i + 1; j < gate.targets.size(); ++j)
            if (gate.targets[i] == gate.targets[j]) throw ArgumentError("gate targets must be distinct");
    }
    if (!std::isfinite(gate.angle)) throw RangeError("gate angle must be finite");
}

StateVector::StateVector(std::uint32_t n_qubits, std::uint32_t max_qubits) : n_qubits_(n_qubits) {
    if (n_qubits < 1 || n_qubits > max_qubits)
        throw CapacityError("qubit count " + std::to_string(n_qubits) + " outside [1, " +
                            std::to_string(max_qubits) + "]");
    amplitudes_.assign(std::uint64_t{1} << n_qubits, Complex(0));
    amplitudes_[0] = Complex(1);
}

StateVector StateVector::from_amplitudes(std::uint32_t n_qubits, std::vector<Complex> amplitudes,
                                         std::uint32_t max_qubits) {
    StateVector sv(n_qubits, max_qubits);
    if (amplitudes.size() != sv.dimension())
        throw ShapeError("expected " + std::to_string(sv.dimension()) + " amplitudes, got " +
                         std::to_string(amplitudes.size()));
    sv.amplitudes_ = std::move(amplitudes);
    const double n = sv.norm();
    if (std::abs(n - 1.0) > kNormSlack) throw RangeError("amplitude vector not normalized (norm " + std::to_string(n) + ")");
    for (auto& a : sv.amplitudes_) a /= n;
    return sv;
}

Complex StateVector::amplitude(std::uint64_t basis_index) const {
    if (basis_index >= dimension()) throw IndexError("basis index out of range");
    return amplitudes_[basis_index];
}

double StateVector::norm() const {
    double sum = 0;
    for (const auto& a : amplitudes_) sum += std::norm(a);
    return std::sqrt(sum);
}

double StateVector::prob_zero(std::uint32_t qubit) const {
    if (qubit >= n_qubits_) throw IndexError("qubit " + std::to_string(qubit) + " out of range");
    const std::uint64_t bit = std::uint64_t{1} << qubit;
    double p = 0;
    for (std::uint64_t i = 0; i < dimension(); ++i)
        if (!(i & bit)) p += std::norm(amplitudes_[i]);
    if (p < 0) p = 0;
    if (p > 1) p = 1;
    return p;
}

void StateVector::apply_in_place(const Gate& gate) {
    validate_gate(gate, n_qubits_);
    const std::uint64_t dim = dimension();
    auto& amp = amplitudes_;

    if (gate.kind == GateKind::CSWAP) {
        const std::uint64_t cb = std::uint64_t{1} << gate.targets[0];
        const std::uint64_t ab = std::uint64_t{1} << gate.targets[1];
        const std::uint64_t bb = std::uint64_t{1} << gate.targets[2];
        for (std::uint64_t i = 0; i < dim; ++i) {
            if ((i & cb) && (i & ab) && !(i & bb)) std::swap(amp[i], amp[(i & ~ab) | bb]);
        }
        return;
    }

    if (gate_arity(gate.kind) == 1) {
        const Mat2 g = single_qubit_matrix(gate.kind, gate.angle);
        const std::uint64_t bit = std::uint64_t{1} << gate.targets[0];
        for (std::uint64_t i = 0; i < dim; ++i) {
            if (i & bit) continue;
            const Complex a0 = amp[i], a1 = amp[i | bit];
            amp[i] = g.m[0][0] * a0 + g.m[0][1] * a1;
            amp[i | bit] = g.m[1][0] * a0 + g.m[1][1] * a1;
        }
        return;
    }

    const Mat4 g = two_qubit_matrix(gate.kind, gate.angle);
    const std::uint64_t b0 = std::uint64_t{1} << gate.targets[0];
    const std::uint64_t b1 = std::uint64_t{1} << gate.targets[1];
    for (std::uint64_t i = 0; i < dim; ++i) {
        if (i & (b0 | b1)) continue;
        const std::uint64_t idx[4] = {i, i | b0, i | b1, i | b0 | b1};
        const Complex v[4] = {amp[idx[0]], amp[idx[1]], amp[idx[2]], amp[idx[3]]};
        for (int r = 0; r < 4; ++r) {
            Complex acc(0);
            for (int c = 0; c < 4; ++c) acc += g.m[r][c] * v[c];
            amp[idx[r]] = acc;
        }
    }
}

StateVector StateVector::applied(const Gate& gate) const {
    StateVector out = *this;
    out.apply_in_place(gate);
    return out;
}

StateVector StateVector::applied(std::span<const Gate> gates) const {
    StateVector out = *this;
    for (const auto& g : gates) out.apply_in_place(g);
    return out;
}

StateVector new_state(std::uint32_t n_qubits) { return StateVector(n_qubits); }

StateVector apply_gate(const StateVector& state, const Gate& gate) { return state.applied(gate); }

double prob_zero(const StateVector& state, std::uint32_t qubit) { return state.prob_zero(qubit); }

// |anc> (x) |psi> (x) |phi> with anc at qubit 0, psi at 1..n, phi at n+1..2n.
StateVector joint_register(const StateVector& psi, const StateVector& phi) {
    const std::uint32_t n = psi.n_qubits();
    StateVector joint(1 + 2 * n);
    auto& amp = joint.amplitudes_;
    amp[0] = Complex(0);
    for (std::uint64_t i = 0; i < psi.dimension(); ++i) {
        const Complex pi = psi.amplitudes()[i];
        if (pi == Complex(0)) continue;
        for (std::uint64_t j = 0; j < phi.dimension(); ++j)
            amp[(i << 1) | (j << (n + 1))] = pi * phi.amplitudes()[j];
    }
    return joint;
}

double swap_test_fidelity(const StateVector& psi, const StateVector& phi,
                          std::optional<std::uint64_t> shots, std::uint64_t seed) {
    if (psi.n_qubits() != phi.n_qubits())
        throw ShapeError("swap test requires equal qubit counts (" + std::to_string(psi.n_qubits()) +
                         " vs " + std::to_string(phi.n_qubits()) + ")");
    if (std::abs(psi.norm() - 1.0) > kNormSlack || std::abs(phi.norm() - 1.0) > kNormSlack)
        throw RangeError("swap test inputs must be normalized");
    if (shots && *shots == 0) throw ArgumentError("shots must be positive when given");

    const std::uint32_t n = psi.n_qubits();
    StateVector joint = joint_register(psi, phi);
    joint = joint.applied(Gate::h(0));
    for (std::uint32_t k = 0; k < n; ++k) joint = joint.applied(Gate::cswap(0, 1 + k, 1 + n + k));
    joint = joint.applied(Gate::h(0));
    const double exact = joint.prob_zero(0);

    if (!shots) return exact;
    // The estimator stays inside the bound the exact value satisfies.
    return std::clamp(sample_bernoulli_frequency(exact, *shots, seed), 0.5, 1.0);
}

double sample_bernoulli_frequency(double p, std::uint64_t shots, std::uint64_t seed) {
    if (shots == 0) throw ArgumentError("shots must be positive");
    std::mt19937_64 eng(seed);
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < shots; ++i) {
        const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
        if (u < p) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(shots);
}

} // namespace qufleet
