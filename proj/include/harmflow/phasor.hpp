#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "harmflow/errors.hpp"

namespace harmflow {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kSqrt2 = 1.41421356237309504880;

inline double to_radians(double deg) { return deg * kPi / 180.0; }
inline double to_degrees(double rad) { return rad * 180.0 / kPi; }

/// Harmonic frequency order; 1 is the fundamental.
using HarmonicOrder = int;

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

enum class PhaseId : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::array<PhaseId, 3> kAllPhases{PhaseId::A, PhaseId::B, PhaseId::C};

inline constexpr char to_char(PhaseId p) {
    switch (p) {
        case PhaseId::A: return 'A';
        case PhaseId::B: return 'B';
        case PhaseId::C: return 'C';
    }
    return '?';
}

inline std::string to_string(PhaseId p) { return std::string(1, to_char(p)); }

inline PhaseId phase_from_char(char c) {
    switch (c) {
        case 'A': case 'a': return PhaseId::A;
        case 'B': case 'b': return PhaseId::B;
        case 'C': case 'c': return PhaseId::C;
        default:
            throw QueryError(std::string("unknown phase '") + c + "'");
    }
}

/// Parses a compact phase list such as "ABC" or "B".
inline std::vector<PhaseId> phases_from_string(const std::string& s) {
    std::vector<PhaseId> out;
    out.reserve(s.size());
    for (char c : s) out.push_back(phase_from_char(c));
    return out;
}

inline std::string phases_to_string(const std::vector<PhaseId>& ps) {
    std::string out;
    for (PhaseId p : ps) out.push_back(to_char(p));
    return out;
}

/// Fundamental angle lag of each phase in a balanced abc set, degrees.
inline constexpr double phase_offset_deg(PhaseId p) {
    switch (p) {
        case PhaseId::A: return 0.0;
        case PhaseId::B: return 120.0;
        case PhaseId::C: return 240.0;
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Phasor
// ---------------------------------------------------------------------------

/// Maps an angle into (-pi, pi].
inline double normalize_angle(double rad) {
    double r = std::remainder(rad, kTwoPi);
    if (r <= -kPi) r = kPi;
    return r;
}

/// An rms magnitude with a phase angle. The angle is kept normalized to
/// (-pi, pi] by every constructor and operation; a zero-magnitude phasor has
/// the canonical angle 0 so equality comparisons are well defined.
class Phasor {
public:
    Phasor() = default;

    Phasor(double magnitude_rms, double angle_rad) {
        if (magnitude_rms < 0.0) {
            magnitude_rms = -magnitude_rms;
            angle_rad += kPi;
        }
        mag_ = magnitude_rms;
        ang_ = (mag_ == 0.0) ? 0.0 : normalize_angle(angle_rad);
    }

    static Phasor from_complex(Complex c) {
        const double m = std::abs(c);
        if (m == 0.0) return Phasor{};
        return Phasor(m, std::atan2(c.imag(), c.real()));
    }

    double magnitude() const { return mag_; }
    double angle() const { return ang_; }

    Complex to_complex() const { return std::polar(mag_, ang_); }

    Phasor scaled(double k) const { return Phasor(mag_ * k, ang_); }

    bool operator==(const Phasor& o) const { return mag_ == o.mag_ && ang_ == o.ang_; }

private:
    double mag_ = 0.0;
    double ang_ = 0.0;
};

/// Complex sum of two phasors, returned in polar form.
inline Phasor phasor_add(const Phasor& a, const Phasor& b) {
    return Phasor::from_complex(a.to_complex() + b.to_complex());
}

inline Phasor operator+(const Phasor& a, const Phasor& b) { return phasor_add(a, b); }

/// sqrt(2) * M * cos(theta): the component aligned with the sin(h*w0*t) reference.
inline double in_phase_component(const Phasor& p) {
    return kSqrt2 * p.magnitude() * std::cos(p.angle());
}

/// sqrt(2) * M * sin(theta): the component aligned with the cos(h*w0*t) reference.
inline double in_quadrature_component(const Phasor& p) {
    return kSqrt2 * p.magnitude() * std::sin(p.angle());
}

// ---------------------------------------------------------------------------
// HarmonicSpectrum
// ---------------------------------------------------------------------------

/// A complete per-order, per-phase phasor description of one electrical
/// quantity (a voltage or a current) at one network location.
///
/// The phase set is fixed at construction; every stored order carries a value
/// for each declared phase (zero until set). Angles are sin-referenced: order
/// h contributes sqrt(2)*M_h*sin(h*w0*t + theta_h) to the waveform.
class HarmonicSpectrum {
public:
    HarmonicSpectrum() = default;

    explicit HarmonicSpectrum(std::vector<PhaseId> phases, double base_frequency_hz = 60.0)
        : phases_(std::move(phases)), base_frequency_hz_(base_frequency_hz) {}

    const std::vector<PhaseId>& phases() const { return phases_; }
    double base_frequency() const { return base_frequency_hz_; }

    bool has_phase(PhaseId p) const {
        for (PhaseId q : phases_)
            if (q == p) return true;
        return false;
    }

    void set(HarmonicOrder order, PhaseId phase, const Phasor& value) {
        if (order < 1) throw QueryError("harmonic order must be >= 1");
        require_phase(phase);
        entries_[order][static_cast<std::size_t>(phase)] = value;
    }

    /// Value for (order, phase); zero phasor when the order is absent.
    Phasor at(HarmonicOrder order, PhaseId phase) const {
        require_phase(phase);
        auto it = entries_.find(order);
        if (it == entries_.end()) return Phasor{};
        return it->second[static_cast<std::size_t>(phase)];
    }

    bool has_order(HarmonicOrder order) const { return entries_.count(order) != 0; }

    std::vector<HarmonicOrder> orders() const {
        std::vector<HarmonicOrder> out;
        out.reserve(entries_.size());
        for (const auto& [h, unused] : entries_) out.push_back(h);
        return out;
    }

    bool empty() const { return entries_.empty(); }

private:
    void require_phase(PhaseId p) const {
        if (!has_phase(p))
            throw QueryError(std::string("phase ") + to_char(p) + " not present in spectrum");
    }

    std::vector<PhaseId> phases_;
    double base_frequency_hz_ = 60.0;
    std::map<HarmonicOrder, std::array<Phasor, 3>> entries_;
};

/// Instantaneous value of the spectrum's waveform on one phase at time t:
/// sum_h sqrt(2) * M_h * sin(h*w0*t + theta_h), w0 = 2*pi*base_frequency.
inline double synthesize_waveform(const HarmonicSpectrum& s, PhaseId phase, double t_seconds) {
    if (!s.has_phase(phase))
        throw QueryError(std::string("phase ") + to_char(phase) + " not present in spectrum");
    const double w0 = kTwoPi * s.base_frequency();
    double value = 0.0;
    for (HarmonicOrder h : s.orders()) {
        const Phasor p = s.at(h, phase);
        value += kSqrt2 * p.magnitude() * std::sin(h * w0 * t_seconds + p.angle());
    }
    return value;
}

/// True rms of the composite waveform: sqrt(sum_h M_h^2).
inline double spectrum_rms(const HarmonicSpectrum& s, PhaseId phase) {
    if (!s.has_phase(phase))
        throw QueryError(std::string("phase ") + to_char(phase) + " not present in spectrum");
    double sum_sq = 0.0;
    for (HarmonicOrder h : s.orders()) {
        const double m = s.at(h, phase).magnitude();
        sum_sq += m * m;
    }
    return std::sqrt(sum_sq);
}

} // namespace harmflow
