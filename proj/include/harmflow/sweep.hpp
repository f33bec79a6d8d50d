#pragma once

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>
#include <vector>

#include "harmflow/engine.hpp"

namespace harmflow {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

enum class Metric { thdv, thdi, phi_v, phi_i };

inline std::string to_string(Metric m) {
    switch (m) {
        case Metric::thdv: return "thdv";
        case Metric::thdi: return "thdi";
        case Metric::phi_v: return "phi_v";
        case Metric::phi_i: return "phi_i";
    }
    return "?";
}

inline Metric metric_from_string(const std::string& s) {
    if (s == "thdv") return Metric::thdv;
    if (s == "thdi") return Metric::thdi;
    if (s == "phi_v") return Metric::phi_v;
    if (s == "phi_i") return Metric::phi_i;
    throw QueryError("unknown metric \"" + s + "\" (thdv, thdi, phi_v, phi_i)");
}

inline double metric_value(const PhaseIndices& x, Metric m) {
    switch (m) {
        case Metric::thdv: return x.thdv_pct;
        case Metric::thdi: return x.thdi_pct;
        case Metric::phi_v: return x.phi_v;
        case Metric::phi_i: return x.phi_i;
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

namespace detail {

/// Runs fn(0..n-1) across hardware threads; cell order must not matter.
/// The first exception wins and is rethrown on the calling thread.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    const unsigned hw = std::thread::hardware_concurrency();
    const int workers = std::min<int>(n, hw == 0 ? 1 : static_cast<int>(hw));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline HarmonicSource& find_source(NetworkModel& m, const std::string& id) {
    for (HarmonicSource& src : m.sources)
        if (src.id == id) return src;
    throw QueryError("no source named \"" + id + "\"");
}

/// Rigid rotation of a source: the offset is added to the base angle of
/// every spectrum entry, so all orders turn together.
inline void offset_source_angles(NetworkModel& m, const std::string& id, double offset_deg) {
    for (SpectrumEntry& e : find_source(m, id).spectrum) e.base_angle_deg += offset_deg;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Two-source angle sweep
// ---------------------------------------------------------------------------

inline std::vector<double> default_sweep_angles() { return {0, 15, 30, 45, 60, 75, 90}; }

struct SweepSpec {
    std::string source1;
    std::string source2;
    std::vector<double> angles_deg = default_sweep_angles();
    Metric metric = Metric::thdv;
    std::string point;              // measurement bus
    PhaseId phase = PhaseId::B;
};

struct SweepGrid {
    SweepSpec spec;
    std::vector<std::vector<double>> values; // values[i][j]: source1 + angles[i], source2 + angles[j]
};

/// One sweep cell evaluated standalone: both sources rotated by their offsets,
/// a full assessment run, and the metric read at the point/phase.
inline double evaluate_sweep_cell(const NetworkModel& m, const AssessmentConfig& cfg,
                                  const SweepSpec& spec, double alpha_deg, double beta_deg) {
    NetworkModel variant = m;
    detail::offset_source_angles(variant, spec.source1, alpha_deg);
    detail::offset_source_angles(variant, spec.source2, beta_deg);
    const ResultStore store = run_assessment(variant, cfg);
    const IndexReport report = index_report(variant, store, spec.point);
    auto it = report.per_phase.find(spec.phase);
    if (it == report.per_phase.end())
        throw QueryError("phase " + to_string(spec.phase) + " not measured at \"" + spec.point +
                         "\"");
    const double value = metric_value(it->second, spec.metric);
    if (!std::isfinite(value))
        throw SolveError("non-finite " + to_string(spec.metric) + " at \"" + spec.point + "\"");
    return value;
}

/// Fills the |angles| x |angles| metric surface over both sources' angle
/// offsets. Source magnitudes are untouched; only base angles move. Cells are
/// independent assessments and run concurrently; assembly is ordered by
/// (row, column), so the grid is identical to evaluating every cell standalone.
inline SweepGrid angle_sweep(const NetworkModel& m, const AssessmentConfig& cfg,
                             const SweepSpec& spec) {
    validate_config(cfg);
    {
        NetworkModel probe = m; // verify ids up front
        detail::find_source(probe, spec.source1);
        detail::find_source(probe, spec.source2);
    }
    const int n = static_cast<int>(spec.angles_deg.size());
    if (n == 0) throw QueryError("sweep needs at least one angle");

    SweepGrid grid;
    grid.spec = spec;
    grid.values.assign(n, std::vector<double>(n, 0.0));
    detail::parallel_for(n * n, [&](int cell) {
        const int i = cell / n;
        const int j = cell % n;
        try {
            grid.values[i][j] =
                evaluate_sweep_cell(m, cfg, spec, spec.angles_deg[i], spec.angles_deg[j]);
        } catch (const Error& e) {
            throw SolveError("sweep cell (alpha=" + format_sig9(spec.angles_deg[i]) +
                             ", beta=" + format_sig9(spec.angles_deg[j]) + "): " + e.what());
        }
    });
    return grid;
}

// ---------------------------------------------------------------------------
// Single-phase injection / mutual coupling study
// ---------------------------------------------------------------------------

/// Varies the base angle of every source over `angles_deg` (full cartesian
/// product across sources), evaluates the metric (PHI-I by default, the one
/// index that stays informative on phases that only receive coupled
/// harmonics) for each phase at the measurement point per combination, and
/// aggregates each phase's series into box stats. Every source must inject
/// on exactly the given phase.
inline std::map<PhaseId, BoxStats> coupled_phase_study(const NetworkModel& m,
                                                       const AssessmentConfig& cfg,
                                                       PhaseId injected_phase,
                                                       const std::vector<double>& angles_deg,
                                                       const std::string& point,
                                                       Metric metric = Metric::phi_i) {
    validate_config(cfg);
    if (m.sources.empty()) throw QueryError("model has no harmonic sources");
    for (const HarmonicSource& src : m.sources)
        if (src.phases != std::vector<PhaseId>{injected_phase})
            throw ValidationError("source \"" + src.id + "\" is not restricted to phase " +
                                  to_string(injected_phase));
    if (angles_deg.empty()) throw QueryError("study needs at least one angle");

    const int k = static_cast<int>(m.sources.size());
    const int base = static_cast<int>(angles_deg.size());
    long long combos = 1;
    for (int i = 0; i < k; ++i) {
        combos *= base;
        if (combos > 100000) throw QueryError("angle combination count too large");
    }
    const int total = static_cast<int>(combos);

    // One PHI-I series per phase at the point, indexed by combination.
    std::map<PhaseId, std::vector<double>> series;
    {
        // Phase set comes from the measurement current spectrum.
        const ResultStore probe = run_assessment(m, cfg);
        const HarmonicSpectrum probe_current = measurement_spectra(m, probe, point).current;
        for (PhaseId p : probe_current.phases()) series[p].assign(total, 0.0);
    }

    detail::parallel_for(total, [&](int combo) {
        NetworkModel variant = m;
        int digits = combo;
        for (HarmonicSource& src : variant.sources) {
            const double offset = angles_deg[digits % base];
            digits /= base;
            for (SpectrumEntry& e : src.spectrum) e.base_angle_deg += offset;
        }
        const ResultStore store = run_assessment(variant, cfg);
        const MeasurementSpectra spectra = measurement_spectra(variant, store, point);
        for (auto& [p, values] : series)
            values[combo] = metric_value(indices_from_spectra(spectra.voltage, spectra.current, p),
                                         metric);
    });

    std::map<PhaseId, BoxStats> out;
    for (const auto& [p, values] : series) out[p] = box_stats(values);
    return out;
}

// ---------------------------------------------------------------------------
// Point comparison
// ---------------------------------------------------------------------------

struct ComparisonReport {
    IndexReport point_a;
    IndexReport point_b;
};

/// One assessment, all indices per phase at two measurement points.
inline ComparisonReport compare_points(const NetworkModel& m, const AssessmentConfig& cfg,
                                       const std::string& point_a, const std::string& point_b) {
    validate_config(cfg);
    const ResultStore store = run_assessment(m, cfg);
    ComparisonReport out;
    out.point_a = index_report(m, store, point_a);
    out.point_b = index_report(m, store, point_b);
    return out;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// Plain matrix surface: header row carries the beta angles, one row per
/// alpha, consumable by any surface-plotting tool.
inline void write_surface_csv(const SweepGrid& grid, std::ostream& os) {
    os << "alpha_deg\\beta_deg";
    for (double b : grid.spec.angles_deg) os << ',' << format_sig9(b);
    os << '\n';
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
        os << format_sig9(grid.spec.angles_deg[i]);
        for (double v : grid.values[i]) os << ',' << format_sig9(v);
        os << '\n';
    }
}

inline void write_box_stats_csv(const std::map<PhaseId, BoxStats>& stats, std::ostream& os) {
    os << "phase,min,max,mean,median\n";
    for (const auto& [p, b] : stats)
        os << to_char(p) << ',' << format_sig9(b.min) << ',' << format_sig9(b.max) << ','
           << format_sig9(b.mean) << ',' << format_sig9(b.median) << '\n';
}

inline void write_index_csv(const std::vector<IndexReport>& reports, std::ostream& os) {
    os << "point_id,phase,thdv_pct,thdi_pct,tpf,phi_v,phi_i\n";
    for (const IndexReport& r : reports)
        for (const auto& [p, x] : r.per_phase)
            os << r.point_id << ',' << to_char(p) << ',' << format_sig9(x.thdv_pct) << ','
               << format_sig9(x.thdi_pct) << ',' << format_sig9(x.tpf) << ','
               << format_sig9(x.phi_v) << ',' << format_sig9(x.phi_i) << '\n';
}

} // namespace harmflow
