#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "harmflow/phasor.hpp"

namespace harmflow {

/// Total harmonic distortion in percent:
/// 100 * sqrt(sum_{h>=2} M_h^2) / M_1.
///
/// Magnitude-only by construction; the same formula serves current (THDI)
/// and voltage (THDV). All orders present in the spectrum with h >= 2 enter
/// the sum, whichever set the configuration chose.
inline double thd(const HarmonicSpectrum& s, PhaseId phase) {
    const double fundamental = s.at(1, phase).magnitude();
    if (!s.has_order(1) || fundamental <= 0.0)
        throw QueryError(std::string("THD undefined: missing or zero fundamental on phase ") +
                         to_char(phase));
    double sum_sq = 0.0;
    for (HarmonicOrder h : s.orders()) {
        if (h < 2) continue;
        const double m = s.at(h, phase).magnitude();
        sum_sq += m * m;
    }
    return 100.0 * std::sqrt(sum_sq) / fundamental;
}

/// Total power factor cos(delta1) / sqrt(1 + THDI^2), with THDI as a
/// per-unit fraction and delta1 the fundamental voltage-current angle.
inline double total_power_factor(double delta1_rad, double thdi_fraction) {
    return std::cos(delta1_rad) / std::sqrt(1.0 + thdi_fraction * thdi_fraction);
}

/// Controls whether the fundamental participates in the PHI sums.
enum class PhiRange { all_orders, harmonics_only };

/// Phasor harmonic index: sum_h |M_h * cos(theta_h)| / sum_h M_h.
///
/// Uses rms magnitudes consistently in numerator and denominator, so the
/// triangle-inequality bound PHI <= 1 holds; PHI = 1 exactly when every
/// component angle is 0 or pi. Serves both PHI-I and PHI-V.
inline double phi(const HarmonicSpectrum& s, PhaseId phase,
                  PhiRange range = PhiRange::all_orders) {
    double numerator = 0.0;
    double denominator = 0.0;
    for (HarmonicOrder h : s.orders()) {
        if (range == PhiRange::harmonics_only && h < 2) continue;
        const Phasor p = s.at(h, phase);
        numerator += std::abs(p.magnitude() * std::cos(p.angle()));
        denominator += p.magnitude();
    }
    if (denominator <= 0.0)
        throw QueryError(std::string("PHI undefined: empty or all-zero spectrum on phase ") +
                         to_char(phase));
    return numerator / denominator;
}

// ---------------------------------------------------------------------------
// Descriptive statistics
// ---------------------------------------------------------------------------

struct BoxStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double median = 0.0;
};

/// Min/max/mean/median of a series. The median of an even-length series is
/// the midpoint of the two central order statistics.
inline BoxStats box_stats(std::span<const double> series) {
    if (series.empty()) throw QueryError("box_stats: empty series");
    std::vector<double> sorted(series.begin(), series.end());
    std::sort(sorted.begin(), sorted.end());
    BoxStats out;
    out.min = sorted.front();
    out.max = sorted.back();
    double sum = 0.0;
    for (double v : sorted) sum += v;
    // Summation rounding may spill a few ulp past the extremes; the true
    // mean always lies within them.
    out.mean = std::clamp(sum / static_cast<double>(sorted.size()), out.min, out.max);
    const std::size_t n = sorted.size();
    out.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    return out;
}

// ---------------------------------------------------------------------------
// Per-point index reports
// ---------------------------------------------------------------------------

struct PhaseIndices {
    double thdv_pct = 0.0;
    double thdi_pct = 0.0;
    double tpf = 0.0;
    double phi_v = 0.0;
    double phi_i = 0.0;
};

/// All five indices per phase at one measurement point.
struct IndexReport {
    std::string point_id;
    std::map<PhaseId, PhaseIndices> per_phase;
};

/// Evaluates THDV/THDI/TPF/PHI-V/PHI-I on one phase from the voltage and
/// current spectra observed at a point. delta1 is taken as the angle of the
/// fundamental voltage minus the angle of the fundamental current.
inline PhaseIndices indices_from_spectra(const HarmonicSpectrum& voltage,
                                         const HarmonicSpectrum& current, PhaseId phase) {
    PhaseIndices out;
    out.thdv_pct = thd(voltage, phase);
    out.thdi_pct = thd(current, phase);
    const double delta1 = voltage.at(1, phase).angle() - current.at(1, phase).angle();
    out.tpf = total_power_factor(delta1, out.thdi_pct / 100.0);
    out.phi_v = phi(voltage, phase);
    out.phi_i = phi(current, phase);
    return out;
}

} // namespace harmflow
