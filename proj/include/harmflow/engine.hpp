#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "harmflow/csv.hpp"
#include "harmflow/indices.hpp"
#include "harmflow/network.hpp"

namespace harmflow {

// ---------------------------------------------------------------------------
// Configuration and results
// ---------------------------------------------------------------------------

struct AssessmentConfig {
    std::vector<HarmonicOrder> orders{3, 5, 7, 9, 11};
    double power_flow_tolerance = 1e-8; // max per-unit voltage change
    int max_iterations = 100;
    bool skin_effect = false;
};

inline void validate_config(const AssessmentConfig& cfg) {
    if (cfg.power_flow_tolerance <= 0.0) throw QueryError("tolerance must be > 0");
    if (cfg.max_iterations < 1) throw QueryError("max_iterations must be >= 1");
    for (std::size_t i = 0; i < cfg.orders.size(); ++i) {
        if (cfg.orders[i] < 2) throw QueryError("harmonic orders must be >= 2");
        if (i > 0 && cfg.orders[i] <= cfg.orders[i - 1])
            throw QueryError("harmonic orders must be strictly ascending");
    }
}

/// Node voltages and branch currents for one harmonic order, in SI units.
/// Branch currents are the series current on the `to` side, positive in the
/// file's from->to direction; the substation current flows source->bus.
struct PerOrderSolution {
    HarmonicOrder order = 1;
    std::map<std::string, std::map<PhaseId, Phasor>> node_voltages;   // volts L-N
    std::map<std::string, std::map<PhaseId, Phasor>> branch_currents; // amps
    std::map<PhaseId, Phasor> substation_current;                     // amps
};

struct SolveStats {
    int fundamental_iterations = 0;
    double fundamental_mismatch = 0.0; // final per-unit voltage change
    double max_residual = 0.0;         // worst harmonic nodal residual (pu)
};

/// Everything one assessment produced: the fundamental power flow plus one
/// linear solve per requested harmonic order.
struct ResultStore {
    AssessmentConfig config;
    double base_frequency_hz = 60.0;
    PerOrderSolution fundamental;
    std::map<HarmonicOrder, PerOrderSolution> harmonics;
    SolveStats stats;
};

// ---------------------------------------------------------------------------
// Internals (per-unit solves)
// ---------------------------------------------------------------------------

namespace detail {

struct SolutionPu {
    ComplexVector node_voltage;              // node-indexed
    std::vector<ComplexVector> branch_current; // per branch, file orientation
    ComplexVector source_current;            // over substation phases
    int iterations = 0;
    double mismatch = 0.0;
    double residual = 0.0;
};

inline Eigen::Index phase_slot(const std::vector<PhaseId>& phases, PhaseId p) {
    for (std::size_t i = 0; i < phases.size(); ++i)
        if (phases[i] == p) return static_cast<Eigen::Index>(i);
    throw QueryError("phase not present");
}

/// Per-source injection phasors at order h (amps). The sequence rule decides
/// the per-phase angle; explicit overrides replace the automatic rule.
inline Phasor injection_phasor(const HarmonicSource& src, HarmonicOrder h, std::size_t phase_pos) {
    for (const SpectrumEntry& e : src.spectrum) {
        if (e.order != h) continue;
        const double mag_a = e.magnitude_pct / 100.0 * src.fundamental_base_a;
        for (const SequenceOverride& ov : src.sequence)
            if (ov.order == h)
                return Phasor(mag_a, to_radians(e.base_angle_deg + ov.offsets_deg[phase_pos]));
        const double auto_deg =
            e.base_angle_deg - h * phase_offset_deg(src.phases[phase_pos]);
        return Phasor(mag_a, to_radians(auto_deg));
    }
    return Phasor{};
}

inline ComplexVector injections_pu(const PreparedNetwork& net, HarmonicOrder h) {
    const NetworkIndex& idx = net.index();
    ComplexVector inj = ComplexVector::Zero(idx.node_count());
    for (const HarmonicSource& src : net.model().sources) {
        const int bus = idx.bus_index(src.bus);
        for (std::size_t k = 0; k < src.phases.size(); ++k) {
            const Phasor p = injection_phasor(src, h, k);
            if (p.magnitude() == 0.0) continue;
            inj(idx.node(bus, src.phases[k])) += p.to_complex() / net.i_base(bus);
        }
    }
    return inj;
}

/// Backward current accumulation from the node injections `drain`, giving the
/// downstream (parent->child) current of every oriented branch and the
/// substation current. Used with converged voltages to report consistent
/// branch currents.
struct SweepCurrents {
    std::vector<ComplexVector> down; // per branch, over branch phases
    ComplexVector root;              // over substation phases
};

inline SweepCurrents accumulate_currents(const PreparedNetwork& net, const ComplexVector& v,
                                         HarmonicOrder h) {
    const NetworkIndex& idx = net.index();
    const NetworkModel& m = net.model();
    ComplexVector drain = ComplexVector::Zero(idx.node_count());

    for (const PreparedNetwork::LoadPu& lp : net.loads_pu())
        for (std::size_t k = 0; k < lp.nodes.size(); ++k)
            if (lp.power_pu[k] != Complex{0.0, 0.0})
                drain(lp.nodes[k]) += std::conj(lp.power_pu[k] / v(lp.nodes[k]));

    for (std::size_t u = 0; u < m.buses.size(); ++u) {
        const ComplexMatrix ysh = net.bus_shunt_pu(static_cast<int>(u), h);
        if (ysh.size() == 0 || ysh.cwiseAbs().maxCoeff() == 0.0) continue;
        const std::vector<PhaseId>& phases = m.buses[u].phases;
        ComplexVector vb(static_cast<Eigen::Index>(phases.size()));
        for (std::size_t k = 0; k < phases.size(); ++k)
            vb(static_cast<Eigen::Index>(k)) = v(idx.node(static_cast<int>(u), phases[k]));
        const ComplexVector ish = ysh * vb;
        for (std::size_t k = 0; k < phases.size(); ++k)
            drain(idx.node(static_cast<int>(u), phases[k])) += ish(static_cast<Eigen::Index>(k));
    }

    SweepCurrents out;
    out.down.resize(m.branches.size());
    const auto& traversal = idx.traversal();
    for (auto it = traversal.rbegin(); it != traversal.rend(); ++it) {
        const OrientedBranch& ob = *it;
        const Branch& br = m.branches[ob.branch];
        const auto n = static_cast<Eigen::Index>(br.phases.size());
        ComplexVector idown(n);
        for (Eigen::Index k = 0; k < n; ++k)
            idown(k) = drain(idx.node(ob.child_bus, br.phases[static_cast<std::size_t>(k)]));
        const double transfer = ob.reversed ? br.tap : 1.0 / br.tap;
        for (Eigen::Index k = 0; k < n; ++k)
            drain(idx.node(ob.parent_bus, br.phases[static_cast<std::size_t>(k)])) +=
                transfer * idown(k);
        out.down[ob.branch] = std::move(idown);
    }

    const std::vector<PhaseId>& sub_phases = m.substation.phases;
    out.root.resize(static_cast<Eigen::Index>(sub_phases.size()));
    for (std::size_t k = 0; k < sub_phases.size(); ++k)
        out.root(static_cast<Eigen::Index>(k)) = drain(idx.node(idx.root_bus(), sub_phases[k]));
    return out;
}

/// Backward/forward sweep power flow at the fundamental. Loads are constant
/// power, the substation is a source behind its impedance, and the iteration
/// stops when the largest per-unit voltage change falls below tolerance.
inline SolutionPu solve_fundamental_pu(const PreparedNetwork& net, const AssessmentConfig& cfg) {
    const NetworkIndex& idx = net.index();
    const NetworkModel& m = net.model();
    const std::vector<PhaseId>& sub_phases = m.substation.phases;

    // Flat start: every bus-phase takes the source voltage of its phase.
    ComplexVector v(idx.node_count());
    for (std::size_t u = 0; u < m.buses.size(); ++u)
        for (PhaseId p : m.buses[u].phases)
            v(idx.node(static_cast<int>(u), p)) = net.source_voltage_pu()(phase_slot(sub_phases, p));

    SweepCurrents currents;
    double mismatch = 0.0;
    int iterations = 0;
    bool converged = false;

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        currents = accumulate_currents(net, v, 1);

        ComplexVector v_new = v;
        const ComplexVector v_root =
            net.source_voltage_pu() - net.source_impedance_pu() * currents.root;
        for (std::size_t k = 0; k < sub_phases.size(); ++k)
            v_new(idx.node(idx.root_bus(), sub_phases[k])) = v_root(static_cast<Eigen::Index>(k));

        for (const OrientedBranch& ob : idx.traversal()) {
            const Branch& br = m.branches[ob.branch];
            const auto n = static_cast<Eigen::Index>(br.phases.size());
            const double a = ob.reversed ? br.tap : 1.0 / br.tap;
            ComplexMatrix zeff = net.branch_impedance_pu(ob.branch);
            if (ob.reversed) zeff *= br.tap * br.tap;
            ComplexVector vp(n);
            for (Eigen::Index k = 0; k < n; ++k)
                vp(k) = v_new(idx.node(ob.parent_bus, br.phases[static_cast<std::size_t>(k)]));
            const ComplexVector vc = a * vp - zeff * currents.down[ob.branch];
            for (Eigen::Index k = 0; k < n; ++k)
                v_new(idx.node(ob.child_bus, br.phases[static_cast<std::size_t>(k)])) = vc(k);
        }

        mismatch = (v_new - v).cwiseAbs().maxCoeff();
        v = v_new;
        iterations = it;
        if (mismatch < cfg.power_flow_tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw SolveError("fundamental power flow did not converge within " +
                             std::to_string(cfg.max_iterations) +
                             " iterations (last mismatch " + format_sig9(mismatch) + " pu)",
                         mismatch);

    // One more backward pass so reported currents match the final voltages.
    currents = accumulate_currents(net, v, 1);

    SolutionPu out;
    out.node_voltage = std::move(v);
    out.iterations = iterations;
    out.mismatch = mismatch;
    out.branch_current.resize(m.branches.size());
    for (const OrientedBranch& ob : idx.traversal()) {
        const double tap = m.branches[ob.branch].tap;
        out.branch_current[ob.branch] =
            ob.reversed ? ComplexVector(-tap * currents.down[ob.branch]) : currents.down[ob.branch];
    }
    out.source_current = currents.root;
    return out;
}

/// Direct linear solve Y(h) V = I for one harmonic order; branch and source
/// currents follow from the branch equations.
inline SolutionPu solve_harmonic_pu(const PreparedNetwork& net, HarmonicOrder h,
                                    const ComplexVector& v1_pu, const AssessmentConfig& cfg) {
    const NetworkIndex& idx = net.index();
    const NetworkModel& m = net.model();

    const ComplexMatrix y = net.admittance_at_order(h, v1_pu, cfg.skin_effect);
    const ComplexVector inj = injections_pu(net, h);

    Eigen::PartialPivLU<ComplexMatrix> lu(y);
    const ComplexVector v = lu.solve(inj);

    const double inj_norm = inj.size() ? inj.cwiseAbs().maxCoeff() : 0.0;
    const double residual = (y * v - inj).cwiseAbs().maxCoeff();
    const double bound = 1e-10 * std::max(1.0, inj_norm);
    if (!(residual <= bound))
        throw SolveError("harmonic solve at order " + std::to_string(h) +
                             " failed the residual bound (residual " + format_sig9(residual) +
                             "); the admittance matrix may be singular",
                         residual);

    SolutionPu out;
    out.node_voltage = v;
    out.residual = residual;
    out.branch_current.resize(m.branches.size());
    for (std::size_t bi = 0; bi < m.branches.size(); ++bi) {
        const Branch& br = m.branches[bi];
        const auto n = static_cast<Eigen::Index>(br.phases.size());
        const std::vector<int> fn = idx.from_nodes(static_cast<int>(bi));
        const std::vector<int> tn = idx.to_nodes(static_cast<int>(bi));
        ComplexVector dv(n);
        for (Eigen::Index k = 0; k < n; ++k)
            dv(k) = v(fn[static_cast<std::size_t>(k)]) / br.tap - v(tn[static_cast<std::size_t>(k)]);
        const ComplexMatrix z_h = net.branch_impedance_pu(static_cast<int>(bi), h, cfg.skin_effect);
        out.branch_current[bi] = Eigen::PartialPivLU<ComplexMatrix>(z_h).solve(dv);
    }

    const std::vector<PhaseId>& sub_phases = m.substation.phases;
    ComplexVector v_sub(static_cast<Eigen::Index>(sub_phases.size()));
    for (std::size_t k = 0; k < sub_phases.size(); ++k)
        v_sub(static_cast<Eigen::Index>(k)) = v(idx.node(idx.root_bus(), sub_phases[k]));
    out.source_current =
        Eigen::PartialPivLU<ComplexMatrix>(net.source_impedance_pu(h)).solve(ComplexVector(-v_sub));
    return out;
}

inline PerOrderSolution to_solution(const PreparedNetwork& net, HarmonicOrder order,
                                    const SolutionPu& pu) {
    const NetworkIndex& idx = net.index();
    const NetworkModel& m = net.model();
    PerOrderSolution out;
    out.order = order;
    for (std::size_t u = 0; u < m.buses.size(); ++u) {
        auto& per_phase = out.node_voltages[m.buses[u].id];
        for (PhaseId p : m.buses[u].phases)
            per_phase[p] = Phasor::from_complex(
                pu.node_voltage(idx.node(static_cast<int>(u), p)) * net.v_base(static_cast<int>(u)));
    }
    for (std::size_t bi = 0; bi < m.branches.size(); ++bi) {
        const Branch& br = m.branches[bi];
        const double ibase = net.i_base(idx.bus_index(br.to));
        auto& per_phase = out.branch_currents[br.id];
        for (std::size_t k = 0; k < br.phases.size(); ++k)
            per_phase[br.phases[k]] = Phasor::from_complex(
                pu.branch_current[bi](static_cast<Eigen::Index>(k)) * ibase);
    }
    const double ibase_sub = net.i_base(idx.root_bus());
    for (std::size_t k = 0; k < m.substation.phases.size(); ++k)
        out.substation_current[m.substation.phases[k]] = Phasor::from_complex(
            pu.source_current(static_cast<Eigen::Index>(k)) * ibase_sub);
    return out;
}

inline ComplexVector voltages_to_pu(const PreparedNetwork& net, const PerOrderSolution& sol) {
    const NetworkIndex& idx = net.index();
    const NetworkModel& m = net.model();
    ComplexVector v(idx.node_count());
    for (std::size_t u = 0; u < m.buses.size(); ++u) {
        auto it = sol.node_voltages.find(m.buses[u].id);
        if (it == sol.node_voltages.end())
            throw QueryError("fundamental solution is missing bus \"" + m.buses[u].id + "\"");
        for (PhaseId p : m.buses[u].phases)
            v(idx.node(static_cast<int>(u), p)) =
                it->second.at(p).to_complex() / net.v_base(static_cast<int>(u));
    }
    return v;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Fundamental power flow on a validated radial model.
inline PerOrderSolution solve_fundamental(const NetworkModel& m,
                                          const AssessmentConfig& cfg = {}) {
    validate_config(cfg);
    PreparedNetwork net(m);
    return detail::to_solution(net, 1, detail::solve_fundamental_pu(net, cfg));
}

/// Net injected current per bus and phase at order h, in amps. Injections
/// from multiple sources at one bus-phase sum as phasors; orders absent from
/// every source yield an empty map.
inline std::map<std::string, std::map<PhaseId, Phasor>>
injection_currents(const NetworkModel& m, HarmonicOrder h) {
    std::map<std::string, std::map<PhaseId, Complex>> acc;
    for (const HarmonicSource& src : m.sources) {
        for (std::size_t k = 0; k < src.phases.size(); ++k) {
            const Phasor p = detail::injection_phasor(src, h, k);
            if (p.magnitude() == 0.0) continue;
            acc[src.bus][src.phases[k]] += p.to_complex();
        }
    }
    std::map<std::string, std::map<PhaseId, Phasor>> out;
    for (const auto& [bus, phases] : acc)
        for (const auto& [p, c] : phases) out[bus][p] = Phasor::from_complex(c);
    return out;
}

/// Linear harmonic solve for one order given the solved fundamental.
inline PerOrderSolution solve_harmonic_order(const NetworkModel& m,
                                             const PerOrderSolution& fundamental, HarmonicOrder h,
                                             const AssessmentConfig& cfg = {}) {
    if (h < 2) throw QueryError("harmonic order must be >= 2");
    PreparedNetwork net(m);
    const ComplexVector v1 = detail::voltages_to_pu(net, fundamental);
    return detail::to_solution(net, h, detail::solve_harmonic_pu(net, h, v1, cfg));
}

/// Nodal admittance matrix at order h derived from the model and the solved
/// fundamental (loads become constant admittances), indexed by bus-phase in
/// model declaration order.
inline ComplexMatrix admittance_at_order(const NetworkModel& m,
                                         const PerOrderSolution& fundamental, HarmonicOrder h,
                                         bool skin_effect = false) {
    if (h < 2) throw QueryError("harmonic order must be >= 2");
    PreparedNetwork net(m);
    return net.admittance_at_order(h, detail::voltages_to_pu(net, fundamental), skin_effect);
}

/// The full assessment loop: fundamental power flow, then per order a
/// rebuilt admittance matrix, fresh injections and one linear solve, with
/// every solution stored.
inline ResultStore run_assessment(const NetworkModel& m, const AssessmentConfig& cfg = {}) {
    validate_config(cfg);
    PreparedNetwork net(m);

    ResultStore store;
    store.config = cfg;
    store.base_frequency_hz = m.base_frequency_hz;

    detail::SolutionPu fundamental = detail::solve_fundamental_pu(net, cfg);
    store.fundamental = detail::to_solution(net, 1, fundamental);
    store.stats.fundamental_iterations = fundamental.iterations;
    store.stats.fundamental_mismatch = fundamental.mismatch;

    for (HarmonicOrder h : cfg.orders) {
        try {
            detail::SolutionPu sol =
                detail::solve_harmonic_pu(net, h, fundamental.node_voltage, cfg);
            store.stats.max_residual = std::max(store.stats.max_residual, sol.residual);
            store.harmonics[h] = detail::to_solution(net, h, sol);
        } catch (const SolveError& e) {
            throw SolveError("order " + std::to_string(h) + ": " + e.what(), e.last_mismatch);
        }
    }
    return store;
}

enum class QuantityKind { voltage, current };

/// Assembles the per-order phasors at one solution point (fundamental
/// included) into a spectrum. Voltage spectra live at buses, current spectra
/// at branches; asking for the other kind is an error.
inline HarmonicSpectrum spectrum_at(const ResultStore& store, const std::string& point,
                                    QuantityKind kind) {
    const auto& fundamental_map = kind == QuantityKind::voltage ? store.fundamental.node_voltages
                                                                : store.fundamental.branch_currents;
    auto it = fundamental_map.find(point);
    if (it == fundamental_map.end()) {
        const char* where = kind == QuantityKind::voltage ? "bus" : "branch";
        const char* other = kind == QuantityKind::voltage ? "branch" : "bus";
        throw QueryError("no " + std::string(where) + " named \"" + point +
                         "\" in the solution (is it a " + other + "?)");
    }

    std::vector<PhaseId> phases;
    for (const auto& [p, unused] : it->second) phases.push_back(p);
    HarmonicSpectrum spec(phases, store.base_frequency_hz);
    for (const auto& [p, value] : it->second) spec.set(1, p, value);
    for (const auto& [h, sol] : store.harmonics) {
        const auto& point_map =
            kind == QuantityKind::voltage ? sol.node_voltages : sol.branch_currents;
        for (const auto& [p, value] : point_map.at(point)) spec.set(h, p, value);
    }
    return spec;
}

/// Voltage and current spectra at a measurement point (a bus id): the bus
/// voltage paired with the current supplied into the bus from the substation
/// side. At the substation bus itself the current through the source
/// equivalent is used.
struct MeasurementSpectra {
    HarmonicSpectrum voltage;
    HarmonicSpectrum current;
};

inline MeasurementSpectra measurement_spectra(const NetworkModel& m, const ResultStore& store,
                                              const std::string& bus_id) {
    MeasurementSpectra out;
    out.voltage = spectrum_at(store, bus_id, QuantityKind::voltage);

    NetworkIndex idx(m);
    const int bus = idx.bus_index(bus_id);
    if (bus < 0) throw QueryError("no bus named \"" + bus_id + "\"");

    auto source_spectrum = [&]() {
        HarmonicSpectrum spec(m.substation.phases, store.base_frequency_hz);
        for (const auto& [p, value] : store.fundamental.substation_current) spec.set(1, p, value);
        for (const auto& [h, sol] : store.harmonics)
            for (const auto& [p, value] : sol.substation_current) spec.set(h, p, value);
        return spec;
    };

    if (bus == idx.root_bus()) {
        out.current = source_spectrum();
        return out;
    }

    const int bi = idx.parent_branch(bus);
    const Branch& br = m.branches[bi];
    const bool reversed = idx.bus_index(br.to) != bus;
    const double ratio_to_child = m.base_power_va / m.buses[bus].nominal_voltage_v /
                                  (m.base_power_va / m.buses[idx.bus_index(br.to)].nominal_voltage_v);

    HarmonicSpectrum spec(br.phases, store.base_frequency_hz);
    auto oriented = [&](const Phasor& file_current) {
        if (!reversed) return file_current;
        // parent is the file's `to` side: downstream current is -I/tap,
        // rebased onto the child bus.
        const Complex c = -file_current.to_complex() / br.tap * ratio_to_child;
        return Phasor::from_complex(c);
    };
    for (const auto& [p, value] : store.fundamental.branch_currents.at(br.id))
        spec.set(1, p, oriented(value));
    for (const auto& [h, sol] : store.harmonics)
        for (const auto& [p, value] : sol.branch_currents.at(br.id)) spec.set(h, p, oriented(value));
    out.current = spec;
    return out;
}

/// THDV/THDI/TPF/PHI-V/PHI-I per phase at a measurement point.
inline IndexReport index_report(const NetworkModel& m, const ResultStore& store,
                                const std::string& bus_id) {
    const MeasurementSpectra spectra = measurement_spectra(m, store, bus_id);
    IndexReport report;
    report.point_id = bus_id;
    for (PhaseId p : spectra.current.phases())
        report.per_phase[p] = indices_from_spectra(spectra.voltage, spectra.current, p);
    return report;
}

/// Results CSV: one row per point-order-phase, rows sorted by
/// (point_id, kind, phase, order), magnitudes in SI units, angles in degrees.
inline void write_results_csv(const ResultStore& store, std::ostream& os) {
    os << "point_id,kind,phase,order,magnitude,angle_deg\n";

    struct Row {
        std::string point;
        std::string kind;
        char phase;
        HarmonicOrder order;
        Phasor value;
    };
    std::vector<Row> rows;
    auto collect = [&](const PerOrderSolution& sol) {
        for (const auto& [id, per_phase] : sol.branch_currents)
            for (const auto& [p, value] : per_phase)
                rows.push_back({id, "current", to_char(p), sol.order, value});
        for (const auto& [id, per_phase] : sol.node_voltages)
            for (const auto& [p, value] : per_phase)
                rows.push_back({id, "voltage", to_char(p), sol.order, value});
    };
    collect(store.fundamental);
    for (const auto& [h, sol] : store.harmonics) collect(sol);

    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return std::tie(a.point, a.kind, a.phase, a.order) <
               std::tie(b.point, b.kind, b.phase, b.order);
    });
    for (const Row& r : rows) {
        os << r.point << ',' << r.kind << ',' << r.phase << ',' << r.order << ','
           << format_sig9(r.value.magnitude()) << ',' << format_sig9(to_degrees(r.value.angle()))
           << '\n';
    }
}

} // namespace harmflow
