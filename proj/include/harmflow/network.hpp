#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "harmflow/phasor.hpp"

namespace harmflow {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

// ---------------------------------------------------------------------------
// Model types (SI units: ohms, siemens, volts, VA, amps)
// ---------------------------------------------------------------------------

struct Bus {
    std::string id;
    std::vector<PhaseId> phases;
    double nominal_voltage_v = 0.0; // line-to-neutral
};

/// A series element between two buses: line, cable, or transformer.
/// The impedance matrix is indexed by `phases` (off-diagonals are mutual
/// coupling) and is referred to the `to` side; `tap` is an off-nominal real
/// turns ratio applied on the `from` side. `shunt_admittance_s` is the total
/// branch shunt, split half per terminal (pi model); empty means none.
struct Branch {
    std::string id;
    std::string from;
    std::string to;
    std::vector<PhaseId> phases;
    ComplexMatrix series_impedance_ohm;
    ComplexMatrix shunt_admittance_s;
    double tap = 1.0;
};

enum class Connection { wye };

struct Load {
    std::string id;
    std::string bus;
    std::vector<PhaseId> phases;
    Connection connection = Connection::wye;
    std::vector<Complex> power_va; // per phase, fundamental
};

struct SpectrumEntry {
    HarmonicOrder order = 0;
    double magnitude_pct = 0.0; // percent of fundamental_base_a
    double base_angle_deg = 0.0;
};

/// Explicit per-order phase offsets, replacing the automatic sequence rule.
struct SequenceOverride {
    HarmonicOrder order = 0;
    std::vector<double> offsets_deg; // aligned with the source phase list
};

/// A fixed harmonic current injection. Under the automatic sequence rule the
/// injection angle on phase p at order h is base_angle - h * (0,120,240)[p]
/// degrees, which places triplen orders in zero sequence, 5th/11th in
/// negative and 7th in positive sequence on balanced three-phase sources.
struct HarmonicSource {
    std::string id;
    std::string bus;
    std::vector<PhaseId> phases; // one or three
    double fundamental_base_a = 0.0;
    std::vector<SpectrumEntry> spectrum;
    std::vector<SequenceOverride> sequence; // empty -> automatic rule
};

/// Field-measured inverter current spectrum, percent of the fundamental
/// base, zero base angles: the default source content used by the bundled
/// feeders (dominant odd orders through 11).
inline std::vector<SpectrumEntry> default_source_spectrum() {
    return {{3, 2.83, 0.0}, {5, 0.52, 0.0}, {7, 0.84, 0.0}, {9, 0.21, 0.0}, {11, 0.03, 0.0}};
}

struct SubstationEquivalent {
    std::string bus;
    std::vector<PhaseId> phases;
    std::vector<Phasor> source_voltage_v; // per phase, fundamental
    ComplexMatrix source_impedance_ohm;
};

struct NetworkModel {
    double base_frequency_hz = 60.0;
    double base_power_va = 0.0; // per-phase VA base
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Load> loads;
    std::vector<HarmonicSource> sources;
    SubstationEquivalent substation;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Finding {
    std::string code;    // short machine-readable class, e.g. "cycle"
    std::string element; // offending element id
    std::string detail;

    std::string to_string() const { return code + " [" + element + "]: " + detail; }
};

namespace detail {

inline bool phases_subset(const std::vector<PhaseId>& sub, const std::vector<PhaseId>& super) {
    for (PhaseId p : sub)
        if (std::find(super.begin(), super.end(), p) == super.end()) return false;
    return true;
}

inline bool matrix_symmetric(const ComplexMatrix& m, double rel_tol = 1e-9) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline bool matrix_invertible(const ComplexMatrix& m) {
    if (m.rows() == 0 || m.rows() != m.cols()) return false;
    return Eigen::FullPivLU<ComplexMatrix>(m).isInvertible();
}

} // namespace detail

/// Checks every structural invariant of a model and returns one finding per
/// violation; an empty list means the model is ready to solve.
inline std::vector<Finding> validate_topology(const NetworkModel& m) {
    std::vector<Finding> findings;
    auto add = [&](std::string code, std::string element, std::string detail) {
        findings.push_back({std::move(code), std::move(element), std::move(detail)});
    };

    if (m.base_power_va <= 0.0) add("base", "base", "power_va must be > 0");
    if (m.base_frequency_hz <= 0.0) add("base", "base", "frequency_hz must be > 0");

    std::map<std::string, int> bus_of;
    for (std::size_t i = 0; i < m.buses.size(); ++i) {
        const Bus& b = m.buses[i];
        if (bus_of.count(b.id)) {
            add("duplicate-id", b.id, "bus id declared twice");
            continue;
        }
        bus_of[b.id] = static_cast<int>(i);
        if (b.phases.empty()) add("empty-phases", b.id, "bus has no phases");
        std::vector<PhaseId> ps = b.phases;
        std::sort(ps.begin(), ps.end());
        if (std::adjacent_find(ps.begin(), ps.end()) != ps.end())
            add("duplicate-phase", b.id, "bus lists a phase twice");
        if (b.nominal_voltage_v <= 0.0) add("bad-voltage", b.id, "nominal_voltage must be > 0");
    }

    std::map<std::string, int> branch_of;
    for (const Branch& br : m.branches) {
        if (branch_of.count(br.id)) {
            add("duplicate-id", br.id, "branch id declared twice");
            continue;
        }
        branch_of[br.id] = static_cast<int>(branch_of.size());
        const auto n = static_cast<Eigen::Index>(br.phases.size());
        if (br.phases.empty()) add("empty-phases", br.id, "branch has no phases");
        for (const std::string& end : {br.from, br.to}) {
            if (!bus_of.count(end)) {
                add("unknown-bus", br.id, "branch references unknown bus \"" + end + "\"");
            } else if (!detail::phases_subset(br.phases, m.buses[bus_of[end]].phases)) {
                add("phase-mismatch", br.id, "branch phases not carried by bus \"" + end + "\"");
            }
        }
        if (br.series_impedance_ohm.rows() != n || br.series_impedance_ohm.cols() != n) {
            add("dimension-mismatch", br.id,
                "series impedance is " + std::to_string(br.series_impedance_ohm.rows()) + "x" +
                    std::to_string(br.series_impedance_ohm.cols()) + " for " + std::to_string(n) +
                    " phases");
        } else {
            if (!detail::matrix_symmetric(br.series_impedance_ohm))
                add("asymmetric", br.id, "series impedance matrix is not symmetric");
            if (!detail::matrix_invertible(br.series_impedance_ohm))
                add("singular", br.id, "series impedance singular at fundamental");
        }
        if (br.shunt_admittance_s.size() != 0 &&
            (br.shunt_admittance_s.rows() != n || br.shunt_admittance_s.cols() != n))
            add("dimension-mismatch", br.id, "shunt admittance dimension mismatch");
        if (br.tap <= 0.0) add("bad-tap", br.id, "tap must be > 0");
    }

    for (const Load& ld : m.loads) {
        if (!bus_of.count(ld.bus)) {
            add("unknown-bus", ld.id, "load references unknown bus \"" + ld.bus + "\"");
        } else if (!detail::phases_subset(ld.phases, m.buses[bus_of[ld.bus]].phases)) {
            add("phase-mismatch", ld.id, "load phases not carried by bus \"" + ld.bus + "\"");
        }
        if (ld.power_va.size() != ld.phases.size())
            add("dimension-mismatch", ld.id, "one complex power entry per phase required");
        for (const Complex& s : ld.power_va)
            if (s.real() < 0.0) add("bad-power", ld.id, "active power must be >= 0");
    }

    for (const HarmonicSource& src : m.sources) {
        if (!bus_of.count(src.bus)) {
            add("unknown-bus", src.id, "source references unknown bus \"" + src.bus + "\"");
        } else if (!detail::phases_subset(src.phases, m.buses[bus_of[src.bus]].phases)) {
            add("phase-mismatch", src.id, "source phases not carried by bus \"" + src.bus + "\"");
        }
        if (src.phases.size() != 1 && src.phases.size() != 3)
            add("bad-phases", src.id, "source must inject on one or three phases");
        if (src.fundamental_base_a < 0.0) add("bad-base", src.id, "fundamental base must be >= 0");
        std::vector<HarmonicOrder> seen;
        for (const SpectrumEntry& e : src.spectrum) {
            if (e.order < 2) add("bad-order", src.id, "spectrum orders must be >= 2");
            if (e.magnitude_pct < 0.0) add("bad-magnitude", src.id, "magnitudes must be >= 0");
            seen.push_back(e.order);
        }
        std::sort(seen.begin(), seen.end());
        if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
            add("duplicate-order", src.id, "spectrum lists an order twice");
        for (const SequenceOverride& ov : src.sequence)
            if (ov.offsets_deg.size() != src.phases.size())
                add("dimension-mismatch", src.id, "sequence override needs one offset per phase");
    }

    int root = -1;
    {
        const SubstationEquivalent& sub = m.substation;
        if (!bus_of.count(sub.bus)) {
            add("unknown-bus", "substation", "substation references unknown bus \"" + sub.bus + "\"");
        } else {
            root = bus_of[sub.bus];
            const auto n = static_cast<Eigen::Index>(sub.phases.size());
            if (sub.phases != m.buses[root].phases)
                add("phase-mismatch", "substation", "substation phases must equal bus phases");
            if (sub.source_voltage_v.size() != sub.phases.size())
                add("dimension-mismatch", "substation", "one source voltage per phase required");
            for (const Phasor& v : sub.source_voltage_v)
                if (v.magnitude() <= 0.0)
                    add("bad-voltage", "substation", "source voltage magnitudes must be > 0");
            if (sub.source_impedance_ohm.rows() != n || sub.source_impedance_ohm.cols() != n)
                add("dimension-mismatch", "substation", "source impedance dimension mismatch");
            else if (!detail::matrix_invertible(sub.source_impedance_ohm))
                add("singular", "substation", "source impedance singular");
        }
    }

    // Graph checks only make sense once ids resolve.
    if (!findings.empty() || root < 0) return findings;

    // Radiality: BFS from the substation; a branch whose far end was already
    // visited closes a cycle.
    std::vector<std::vector<std::pair<int, int>>> adjacency(m.buses.size()); // (branch, other bus)
    for (std::size_t bi = 0; bi < m.branches.size(); ++bi) {
        const int f = bus_of[m.branches[bi].from];
        const int t = bus_of[m.branches[bi].to];
        adjacency[f].push_back({static_cast<int>(bi), t});
        adjacency[t].push_back({static_cast<int>(bi), f});
    }
    std::vector<bool> bus_seen(m.buses.size(), false);
    std::vector<bool> branch_seen(m.branches.size(), false);
    std::deque<int> queue{root};
    bus_seen[root] = true;
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (auto [bi, v] : adjacency[u]) {
            if (branch_seen[bi]) continue;
            branch_seen[bi] = true;
            if (bus_seen[v]) {
                add("cycle", m.branches[bi].id, "non-radial cycle through branch");
                continue;
            }
            bus_seen[v] = true;
            queue.push_back(v);
        }
    }
    for (std::size_t i = 0; i < m.buses.size(); ++i)
        if (!bus_seen[i]) add("disconnected", m.buses[i].id, "bus unreachable from substation");

    if (!findings.empty()) return findings;

    // Phase continuity: in a radial network each branch must carry every
    // phase of its downstream bus, or that bus-phase has no path to the
    // source and the harmonic system is singular.
    std::deque<int> order{root};
    std::vector<int> parent_branch(m.buses.size(), -1);
    std::vector<bool> seen2(m.buses.size(), false);
    seen2[root] = true;
    while (!order.empty()) {
        const int u = order.front();
        order.pop_front();
        for (auto [bi, v] : adjacency[u]) {
            if (seen2[v]) continue;
            seen2[v] = true;
            parent_branch[v] = bi;
            order.push_back(v);
            if (!detail::phases_subset(m.buses[v].phases, m.branches[bi].phases))
                add("isolated-phase", m.buses[v].id,
                    "bus phase not carried by supplying branch \"" + m.branches[bi].id + "\"");
        }
    }

    return findings;
}

// ---------------------------------------------------------------------------
// Indexing and traversal
// ---------------------------------------------------------------------------

/// One branch oriented along the tree: parent is the endpoint closer to the
/// substation. `reversed` means the file's `from` is the child side.
struct OrientedBranch {
    int branch = -1;
    int parent_bus = -1;
    int child_bus = -1;
    bool reversed = false;
};

/// Node numbering (bus-phase pairs) and the root-to-leaf branch ordering of a
/// validated radial model.
class NetworkIndex {
public:
    explicit NetworkIndex(const NetworkModel& m) : model_(&m) {
        auto findings = validate_topology(m);
        if (!findings.empty()) {
            std::string msg = "invalid network model: " + findings.front().to_string();
            if (findings.size() > 1)
                msg += " (+" + std::to_string(findings.size() - 1) + " more)";
            throw ValidationError(msg);
        }

        for (std::size_t i = 0; i < m.buses.size(); ++i) {
            bus_index_[m.buses[i].id] = static_cast<int>(i);
            for (PhaseId p : m.buses[i].phases) {
                node_of_[{static_cast<int>(i), p}] = node_count_;
                ++node_count_;
            }
        }
        for (std::size_t i = 0; i < m.branches.size(); ++i)
            branch_index_[m.branches[i].id] = static_cast<int>(i);

        root_bus_ = bus_index_.at(m.substation.bus);
        std::vector<std::vector<std::pair<int, int>>> adjacency(m.buses.size());
        for (std::size_t bi = 0; bi < m.branches.size(); ++bi) {
            const int f = bus_index_.at(m.branches[bi].from);
            const int t = bus_index_.at(m.branches[bi].to);
            adjacency[f].push_back({static_cast<int>(bi), t});
            adjacency[t].push_back({static_cast<int>(bi), f});
        }
        parent_branch_.assign(m.buses.size(), -1);
        std::vector<bool> seen(m.buses.size(), false);
        std::deque<int> queue{root_bus_};
        seen[root_bus_] = true;
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop_front();
            for (auto [bi, v] : adjacency[u]) {
                if (seen[v]) continue;
                seen[v] = true;
                OrientedBranch ob;
                ob.branch = bi;
                ob.parent_bus = u;
                ob.child_bus = v;
                ob.reversed = (bus_index_.at(m.branches[bi].to) == u);
                traversal_.push_back(ob);
                parent_branch_[v] = bi;
                queue.push_back(v);
            }
        }
    }

    const NetworkModel& model() const { return *model_; }
    int node_count() const { return node_count_; }
    int root_bus() const { return root_bus_; }

    int bus_index(const std::string& id) const {
        auto it = bus_index_.find(id);
        return it == bus_index_.end() ? -1 : it->second;
    }

    int branch_index(const std::string& id) const {
        auto it = branch_index_.find(id);
        return it == branch_index_.end() ? -1 : it->second;
    }

    /// Node number of (bus, phase); -1 when the bus lacks the phase.
    int node(int bus, PhaseId p) const {
        auto it = node_of_.find({bus, p});
        return it == node_of_.end() ? -1 : it->second;
    }

    /// Nodes of a branch's phase list on its from / to side.
    std::vector<int> from_nodes(int branch) const { return side_nodes(branch, true); }
    std::vector<int> to_nodes(int branch) const { return side_nodes(branch, false); }

    /// Branches ordered root to leaf; every entry's parent bus was visited
    /// before it. Reversing the list gives a leaf-to-root sweep.
    const std::vector<OrientedBranch>& traversal() const { return traversal_; }

    /// Branch feeding a bus from the substation side; -1 for the root.
    int parent_branch(int bus) const { return parent_branch_[bus]; }

private:
    std::vector<int> side_nodes(int branch, bool from_side) const {
        const Branch& br = model_->branches[branch];
        const int bus = bus_index_.at(from_side ? br.from : br.to);
        std::vector<int> out;
        out.reserve(br.phases.size());
        for (PhaseId p : br.phases) out.push_back(node(bus, p));
        return out;
    }

    const NetworkModel* model_;
    int node_count_ = 0;
    int root_bus_ = -1;
    std::map<std::string, int> bus_index_;
    std::map<std::string, int> branch_index_;
    std::map<std::pair<int, PhaseId>, int> node_of_;
    std::vector<OrientedBranch> traversal_;
    std::vector<int> parent_branch_;
};

/// Branch ids ordered so every branch appears after the branch feeding its
/// parent bus (root to leaf). Throws ValidationError on non-radial models.
inline std::vector<std::string> traversal_order(const NetworkModel& m) {
    NetworkIndex idx(m);
    std::vector<std::string> out;
    out.reserve(idx.traversal().size());
    for (const OrientedBranch& ob : idx.traversal()) out.push_back(m.branches[ob.branch].id);
    return out;
}

// ---------------------------------------------------------------------------
// Frequency scaling
// ---------------------------------------------------------------------------

/// Series impedance at order h: reactance scales linearly with h, resistance
/// stays constant unless the sqrt(h) skin-effect correction is enabled.
inline Complex scale_series_impedance(Complex z1, HarmonicOrder h, bool skin_effect) {
    const double r = skin_effect ? z1.real() * std::sqrt(static_cast<double>(h)) : z1.real();
    return {r, z1.imag() * static_cast<double>(h)};
}

/// Shunt admittance at order h: susceptance scales linearly, conductance constant.
inline Complex scale_shunt_admittance(Complex y1, HarmonicOrder h) {
    return {y1.real(), y1.imag() * static_cast<double>(h)};
}

inline ComplexMatrix scale_series_impedance(const ComplexMatrix& z1, HarmonicOrder h,
                                            bool skin_effect) {
    ComplexMatrix out = z1;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            out(i, j) = scale_series_impedance(z1(i, j), h, skin_effect);
    return out;
}

inline ComplexMatrix scale_shunt_admittance(const ComplexMatrix& y1, HarmonicOrder h) {
    ComplexMatrix out = y1;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            out(i, j) = scale_shunt_admittance(y1(i, j), h);
    return out;
}

// ---------------------------------------------------------------------------
// Per-unit preparation and admittance assembly
// ---------------------------------------------------------------------------

/// A validated model converted to per unit on the system power base and each
/// bus's nominal voltage; owns the nodal admittance assembly for any order.
class PreparedNetwork {
public:
    explicit PreparedNetwork(const NetworkModel& m) : index_(m) {
        const double s_base = m.base_power_va;
        v_base_.reserve(m.buses.size());
        for (const Bus& b : m.buses) v_base_.push_back(b.nominal_voltage_v);

        z_series_pu_.reserve(m.branches.size());
        y_shunt_from_pu_.reserve(m.branches.size());
        y_shunt_to_pu_.reserve(m.branches.size());
        for (const Branch& br : m.branches) {
            const int f = index_.bus_index(br.from);
            const int t = index_.bus_index(br.to);
            const auto n = static_cast<Eigen::Index>(br.phases.size());
            z_series_pu_.push_back(br.series_impedance_ohm / z_base(t));
            ComplexMatrix half = br.shunt_admittance_s.size() == 0
                                     ? ComplexMatrix::Zero(n, n)
                                     : ComplexMatrix(0.5 * br.shunt_admittance_s);
            y_shunt_from_pu_.push_back(half * z_base(f));
            y_shunt_to_pu_.push_back(half * z_base(t));
        }

        const int sub = index_.root_bus();
        z_source_pu_ = m.substation.source_impedance_ohm / z_base(sub);
        v_source_pu_.resize(static_cast<Eigen::Index>(m.substation.phases.size()));
        for (std::size_t i = 0; i < m.substation.phases.size(); ++i) {
            const Phasor& v = m.substation.source_voltage_v[i];
            v_source_pu_(static_cast<Eigen::Index>(i)) =
                std::polar(v.magnitude() / v_base(sub), v.angle());
        }

        for (const Load& ld : m.loads) {
            LoadPu lp;
            lp.bus = index_.bus_index(ld.bus);
            for (std::size_t i = 0; i < ld.phases.size(); ++i) {
                lp.nodes.push_back(index_.node(lp.bus, ld.phases[i]));
                lp.power_pu.push_back(ld.power_va[i] / s_base);
            }
            loads_pu_.push_back(std::move(lp));
        }
    }

    const NetworkIndex& index() const { return index_; }
    const NetworkModel& model() const { return index_.model(); }

    double v_base(int bus) const { return v_base_[bus]; }
    double z_base(int bus) const { return v_base_[bus] * v_base_[bus] / model().base_power_va; }
    double i_base(int bus) const { return model().base_power_va / v_base_[bus]; }

    const ComplexMatrix& branch_impedance_pu(int branch) const { return z_series_pu_[branch]; }

    ComplexMatrix branch_impedance_pu(int branch, HarmonicOrder h, bool skin_effect) const {
        return scale_series_impedance(z_series_pu_[branch], h, skin_effect);
    }

    const ComplexMatrix& source_impedance_pu() const { return z_source_pu_; }

    ComplexMatrix source_impedance_pu(HarmonicOrder h) const {
        return scale_series_impedance(z_source_pu_, h, /*skin_effect=*/false);
    }

    const ComplexVector& source_voltage_pu() const { return v_source_pu_; }

    struct LoadPu {
        int bus = -1;
        std::vector<int> nodes;
        std::vector<Complex> power_pu;
    };
    const std::vector<LoadPu>& loads_pu() const { return loads_pu_; }

    /// Total shunt admittance hanging at one bus (incident branch halves),
    /// as a matrix over the bus's phase list, at order h.
    ComplexMatrix bus_shunt_pu(int bus, HarmonicOrder h) const {
        const std::vector<PhaseId>& phases = model().buses[bus].phases;
        const auto n = static_cast<Eigen::Index>(phases.size());
        ComplexMatrix out = ComplexMatrix::Zero(n, n);
        for (std::size_t bi = 0; bi < model().branches.size(); ++bi) {
            const Branch& br = model().branches[bi];
            const bool at_from = index_.bus_index(br.from) == bus;
            const bool at_to = index_.bus_index(br.to) == bus;
            if (!at_from && !at_to) continue;
            const ComplexMatrix& half = at_from ? y_shunt_from_pu_[bi] : y_shunt_to_pu_[bi];
            if (half.cwiseAbs().maxCoeff() == 0.0) continue;
            const ComplexMatrix scaled = scale_shunt_admittance(half, h);
            for (std::size_t i = 0; i < br.phases.size(); ++i) {
                const auto bi_row = phase_slot(phases, br.phases[i]);
                for (std::size_t j = 0; j < br.phases.size(); ++j)
                    out(bi_row, phase_slot(phases, br.phases[j])) += scaled(i, j);
            }
        }
        return out;
    }

    /// Nodal admittance matrix at harmonic order h (h >= 2): branch series
    /// impedances rescaled for frequency, shunt susceptances scaled by h, the
    /// substation equivalent as a grounding shunt, and loads converted to
    /// constant admittances from the fundamental node voltages (per unit).
    ComplexMatrix admittance_at_order(HarmonicOrder h, const ComplexVector& v1_pu,
                                      bool skin_effect) const {
        const int n = index_.node_count();
        ComplexMatrix y = ComplexMatrix::Zero(n, n);

        for (std::size_t bi = 0; bi < model().branches.size(); ++bi) {
            const Branch& br = model().branches[bi];
            const ComplexMatrix z_h = branch_impedance_pu(static_cast<int>(bi), h, skin_effect);
            Eigen::FullPivLU<ComplexMatrix> lu(z_h);
            if (!lu.isInvertible())
                throw SolveError("branch \"" + br.id + "\" impedance singular at order " +
                                 std::to_string(h));
            const ComplexMatrix yb = lu.inverse();
            const std::vector<int> fn = index_.from_nodes(static_cast<int>(bi));
            const std::vector<int> tn = index_.to_nodes(static_cast<int>(bi));
            const double t = br.tap;
            for (std::size_t i = 0; i < fn.size(); ++i) {
                for (std::size_t j = 0; j < fn.size(); ++j) {
                    y(tn[i], tn[j]) += yb(i, j);
                    y(fn[i], fn[j]) += yb(i, j) / (t * t);
                    y(fn[i], tn[j]) -= yb(i, j) / t;
                    y(tn[i], fn[j]) -= yb(i, j) / t;
                }
            }
            const ComplexMatrix sh_f = scale_shunt_admittance(y_shunt_from_pu_[bi], h);
            const ComplexMatrix sh_t = scale_shunt_admittance(y_shunt_to_pu_[bi], h);
            for (std::size_t i = 0; i < fn.size(); ++i) {
                for (std::size_t j = 0; j < fn.size(); ++j) {
                    y(fn[i], fn[j]) += sh_f(i, j);
                    y(tn[i], tn[j]) += sh_t(i, j);
                }
            }
        }

        // Substation equivalent: the fundamental source is shorted at
        // harmonic frequencies, leaving its impedance to ground.
        {
            const ComplexMatrix zs = source_impedance_pu(h);
            Eigen::FullPivLU<ComplexMatrix> lu(zs);
            if (!lu.isInvertible())
                throw SolveError("substation impedance singular at order " + std::to_string(h));
            const ComplexMatrix ys = lu.inverse();
            const int sub = index_.root_bus();
            const std::vector<PhaseId>& phases = model().substation.phases;
            for (std::size_t i = 0; i < phases.size(); ++i)
                for (std::size_t j = 0; j < phases.size(); ++j)
                    y(index_.node(sub, phases[i]), index_.node(sub, phases[j])) += ys(i, j);
        }

        // Loads as constant admittances derived from the fundamental solution.
        for (const LoadPu& lp : loads_pu_) {
            for (std::size_t i = 0; i < lp.nodes.size(); ++i) {
                if (lp.power_pu[i] == Complex{0.0, 0.0}) continue;
                const Complex v1 = v1_pu(lp.nodes[i]);
                const double mag2 = std::norm(v1);
                if (mag2 == 0.0)
                    throw SolveError("zero fundamental voltage at a load bus; "
                                     "cannot convert load to admittance");
                y(lp.nodes[i], lp.nodes[i]) += std::conj(lp.power_pu[i]) / mag2;
            }
        }

        return y;
    }

private:
    static Eigen::Index phase_slot(const std::vector<PhaseId>& phases, PhaseId p) {
        for (std::size_t i = 0; i < phases.size(); ++i)
            if (phases[i] == p) return static_cast<Eigen::Index>(i);
        throw QueryError("phase not present on bus");
    }

    NetworkIndex index_;
    std::vector<double> v_base_;
    std::vector<ComplexMatrix> z_series_pu_;
    std::vector<ComplexMatrix> y_shunt_from_pu_;
    std::vector<ComplexMatrix> y_shunt_to_pu_;
    ComplexMatrix z_source_pu_;
    ComplexVector v_source_pu_;
    std::vector<LoadPu> loads_pu_;
};

} // namespace harmflow
