#pragma once

// Shared helpers for the test suites: fixture paths and small programmatic
// models expressed directly in per unit (1 V, 1 VA bases make ohms equal pu).

#include <complex>
#include <cstdlib>
#include <random>
#include <string>
#include <vector>

#include "harmflow/network.hpp"

#ifndef HARMFLOW_FIXTURES_DIR
#define HARMFLOW_FIXTURES_DIR "fixtures"
#endif

namespace testsupport {

using harmflow::Branch;
using harmflow::Bus;
using harmflow::Complex;
using harmflow::ComplexMatrix;
using harmflow::HarmonicSource;
using harmflow::Load;
using harmflow::NetworkModel;
using harmflow::PhaseId;
using harmflow::Phasor;
using harmflow::SpectrumEntry;

inline std::string fixture_path(const std::string& name) {
    if (const char* env = std::getenv("HARMFLOW_FIXTURES"))
        return std::string(env) + "/" + name;
    return std::string(HARMFLOW_FIXTURES_DIR) + "/" + name;
}

inline ComplexMatrix matrix1(Complex z) {
    ComplexMatrix m(1, 1);
    m(0, 0) = z;
    return m;
}

inline ComplexMatrix diagonal3(Complex z) {
    ComplexMatrix m = ComplexMatrix::Zero(3, 3);
    m(0, 0) = m(1, 1) = m(2, 2) = z;
    return m;
}

inline ComplexMatrix coupled3(Complex z_self, Complex z_mutual) {
    ComplexMatrix m(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = i == j ? z_self : z_mutual;
    return m;
}

/// Single-phase two-bus model in per unit: source 1 at 0 behind z_source,
/// one branch, optional constant-power load at the far bus.
inline NetworkModel pu_two_bus(Complex z_branch, Complex z_source, Complex load_power,
                               double source_angle_rad = 0.0) {
    NetworkModel m;
    m.base_frequency_hz = 60.0;
    m.base_power_va = 1.0;
    m.buses.push_back({"sub", {PhaseId::A}, 1.0});
    m.buses.push_back({"b1", {PhaseId::A}, 1.0});
    Branch br;
    br.id = "ln1";
    br.from = "sub";
    br.to = "b1";
    br.phases = {PhaseId::A};
    br.series_impedance_ohm = matrix1(z_branch);
    m.branches.push_back(br);
    if (load_power != Complex{0.0, 0.0}) {
        Load ld;
        ld.id = "ld1";
        ld.bus = "b1";
        ld.phases = {PhaseId::A};
        ld.power_va = {load_power};
        m.loads.push_back(ld);
    }
    m.substation.bus = "sub";
    m.substation.phases = {PhaseId::A};
    m.substation.source_voltage_v = {Phasor(1.0, source_angle_rad)};
    m.substation.source_impedance_ohm = matrix1(z_source);
    return m;
}

/// Balanced three-phase two-bus model in per unit with decoupled phases.
inline NetworkModel pu_balanced_three_phase(Complex z_branch, Complex z_source,
                                            Complex load_power) {
    NetworkModel m;
    m.base_frequency_hz = 60.0;
    m.base_power_va = 1.0;
    const std::vector<PhaseId> abc{PhaseId::A, PhaseId::B, PhaseId::C};
    m.buses.push_back({"sub", abc, 1.0});
    m.buses.push_back({"b1", abc, 1.0});
    Branch br;
    br.id = "ln1";
    br.from = "sub";
    br.to = "b1";
    br.phases = abc;
    br.series_impedance_ohm = diagonal3(z_branch);
    m.branches.push_back(br);
    Load ld;
    ld.id = "ld1";
    ld.bus = "b1";
    ld.phases = abc;
    ld.power_va = {load_power, load_power, load_power};
    m.loads.push_back(ld);
    m.substation.bus = "sub";
    m.substation.phases = abc;
    for (PhaseId p : abc)
        m.substation.source_voltage_v.emplace_back(
            1.0, harmflow::to_radians(-harmflow::phase_offset_deg(p)));
    m.substation.source_impedance_ohm = diagonal3(z_source);
    return m;
}

/// Appends a three-phase source with a single spectrum line at `order`.
inline void add_source(NetworkModel& m, const std::string& id, const std::string& bus,
                       std::vector<PhaseId> phases, double base_a, int order, double pct,
                       double angle_deg) {
    HarmonicSource src;
    src.id = id;
    src.bus = bus;
    src.phases = std::move(phases);
    src.fundamental_base_a = base_a;
    src.spectrum.push_back(SpectrumEntry{order, pct, angle_deg});
    m.sources.push_back(std::move(src));
}

/// Random well-conditioned radial model on 1 V / 1 VA bases: a tree grown
/// bus by bus, phase sets shrinking down laterals, coupled impedances,
/// scattered loads and shunts. Branch declarations flip direction at random.
inline NetworkModel random_radial_model(std::mt19937& rng, int extra_buses) {
    std::uniform_real_distribution<double> r_self(0.004, 0.02);
    std::uniform_real_distribution<double> x_self(0.01, 0.04);
    std::uniform_real_distribution<double> frac(0.2, 0.45);
    std::uniform_real_distribution<double> p_load(0.02, 0.12);
    std::uniform_real_distribution<double> q_load(-0.03, 0.05);
    std::uniform_int_distribution<int> coin(0, 1);

    NetworkModel m;
    m.base_power_va = 1.0;
    const std::vector<PhaseId> abc{PhaseId::A, PhaseId::B, PhaseId::C};
    m.buses.push_back({"sub", abc, 1.0});

    for (int b = 1; b <= extra_buses; ++b) {
        const int parent = static_cast<int>(rng() % m.buses.size());
        const std::vector<PhaseId>& parent_phases = m.buses[parent].phases;

        // Child keeps all parent phases or drops to a random single phase.
        std::vector<PhaseId> child_phases = parent_phases;
        if (parent_phases.size() > 1 && coin(rng) == 0)
            child_phases = {parent_phases[rng() % parent_phases.size()]};

        Bus bus;
        bus.id = "b" + std::to_string(b);
        bus.phases = child_phases;
        bus.nominal_voltage_v = 1.0;
        m.buses.push_back(bus);

        const auto n = static_cast<Eigen::Index>(child_phases.size());
        Branch br;
        br.id = "ln" + std::to_string(b);
        br.phases = child_phases;
        br.series_impedance_ohm = ComplexMatrix::Zero(n, n);
        const Complex z_self{r_self(rng), x_self(rng)};
        const Complex z_mutual = frac(rng) * z_self;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                br.series_impedance_ohm(i, j) = i == j ? z_self : z_mutual;
        if (coin(rng) == 0) {
            br.shunt_admittance_s = ComplexMatrix::Zero(n, n);
            for (Eigen::Index i = 0; i < n; ++i)
                br.shunt_admittance_s(i, i) = Complex{0.0, 0.02 + 0.04 * frac(rng)};
        }
        if (coin(rng) == 0) {
            br.from = bus.id;
            br.to = m.buses[parent].id;
        } else {
            br.from = m.buses[parent].id;
            br.to = bus.id;
        }
        m.branches.push_back(br);

        if (coin(rng) == 0) {
            Load ld;
            ld.id = "ld" + std::to_string(b);
            ld.bus = bus.id;
            ld.phases = child_phases;
            for (std::size_t k = 0; k < child_phases.size(); ++k)
                ld.power_va.emplace_back(p_load(rng), q_load(rng));
            m.loads.push_back(ld);
        }
    }

    m.substation.bus = "sub";
    m.substation.phases = abc;
    for (PhaseId p : abc)
        m.substation.source_voltage_v.emplace_back(1.0, harmflow::to_radians(-harmflow::phase_offset_deg(p)));
    m.substation.source_impedance_ohm = diagonal3({0.002, 0.012});
    return m;
}

/// Zeroes every off-diagonal impedance entry (branches and substation).
inline NetworkModel without_mutual_coupling(NetworkModel m) {
    auto strip = [](ComplexMatrix& z) {
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            for (Eigen::Index j = 0; j < z.cols(); ++j)
                if (i != j) z(i, j) = Complex{0.0, 0.0};
    };
    for (Branch& br : m.branches) {
        strip(br.series_impedance_ohm);
        if (br.shunt_admittance_s.size() != 0) strip(br.shunt_admittance_s);
    }
    strip(m.substation.source_impedance_ohm);
    return m;
}

} // namespace testsupport
