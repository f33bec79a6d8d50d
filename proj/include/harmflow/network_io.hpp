#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "harmflow/network.hpp"

namespace harmflow {

namespace detail {

using nlohmann::json;

inline const json& require_key(const json& j, const char* key, const std::string& ctx) {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(ctx + ": missing key \"" + key + "\"");
    return *it;
}

inline Complex parse_complex(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ParseError(ctx + ": complex values are [real, imag] pairs");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline ComplexMatrix parse_complex_matrix(const json& j, const std::string& ctx) {
    if (!j.is_array()) throw ParseError(ctx + ": expected a matrix (list of rows)");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = 0;
    for (const json& row : j) {
        if (!row.is_array()) throw ParseError(ctx + ": matrix rows must be lists");
        cols = std::max(cols, static_cast<Eigen::Index>(row.size()));
    }
    ComplexMatrix out = ComplexMatrix::Zero(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != cols)
            throw ParseError(ctx + ": ragged matrix rows");
        for (Eigen::Index c = 0; c < cols; ++c)
            out(r, c) = parse_complex(row[static_cast<std::size_t>(c)], ctx);
    }
    return out;
}

inline std::vector<PhaseId> parse_phases(const json& j, const std::string& ctx) {
    if (!j.is_string()) throw ParseError(ctx + ": phases must be a string such as \"ABC\"");
    try {
        return phases_from_string(j.get<std::string>());
    } catch (const QueryError& e) {
        throw ParseError(ctx + ": " + e.what());
    }
}

} // namespace detail

/// Parses a network file without validating it; cross-reference and topology
/// problems surface later through validate_topology.
inline NetworkModel parse_network(const std::string& path) {
    using detail::json;
    using detail::parse_complex;
    using detail::parse_complex_matrix;
    using detail::parse_phases;
    using detail::require_key;

    std::ifstream in(path);
    if (!in) throw IoError("cannot open network file \"" + path + "\"");

    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("malformed network file \"" + path + "\": " + e.what());
    }

    NetworkModel m;
    const json& base = require_key(doc, "base", "base");
    m.base_frequency_hz = require_key(base, "frequency_hz", "base").get<double>();
    m.base_power_va = require_key(base, "power_va", "base").get<double>();

    for (const json& jb : require_key(doc, "buses", "file")) {
        Bus b;
        b.id = require_key(jb, "id", "bus").get<std::string>();
        b.phases = parse_phases(require_key(jb, "phases", "bus " + b.id), "bus " + b.id);
        b.nominal_voltage_v = require_key(jb, "nominal_voltage_v", "bus " + b.id).get<double>();
        m.buses.push_back(std::move(b));
    }

    for (const json& jb : require_key(doc, "branches", "file")) {
        Branch br;
        br.id = require_key(jb, "id", "branch").get<std::string>();
        const std::string ctx = "branch " + br.id;
        br.from = require_key(jb, "from", ctx).get<std::string>();
        br.to = require_key(jb, "to", ctx).get<std::string>();
        br.phases = parse_phases(require_key(jb, "phases", ctx), ctx);
        br.series_impedance_ohm = parse_complex_matrix(require_key(jb, "z", ctx), ctx + " z");
        if (jb.contains("b_shunt"))
            br.shunt_admittance_s = parse_complex_matrix(jb["b_shunt"], ctx + " b_shunt");
        if (jb.contains("tap")) br.tap = jb["tap"].get<double>();
        m.branches.push_back(std::move(br));
    }

    if (doc.contains("loads")) {
        for (const json& jl : doc["loads"]) {
            Load ld;
            ld.id = require_key(jl, "id", "load").get<std::string>();
            const std::string ctx = "load " + ld.id;
            ld.bus = require_key(jl, "bus", ctx).get<std::string>();
            ld.phases = parse_phases(require_key(jl, "phases", ctx), ctx);
            if (jl.contains("connection")) {
                const std::string conn = jl["connection"].get<std::string>();
                if (conn != "wye")
                    throw ParseError(ctx + ": unsupported connection \"" + conn + "\"");
            }
            for (const json& s : require_key(jl, "power_va", ctx))
                ld.power_va.push_back(parse_complex(s, ctx + " power_va"));
            m.loads.push_back(std::move(ld));
        }
    }

    if (doc.contains("sources")) {
        for (const json& js : doc["sources"]) {
            HarmonicSource src;
            src.id = require_key(js, "id", "source").get<std::string>();
            const std::string ctx = "source " + src.id;
            src.bus = require_key(js, "bus", ctx).get<std::string>();
            src.phases = parse_phases(require_key(js, "phases", ctx), ctx);
            src.fundamental_base_a = require_key(js, "fundamental_base_a", ctx).get<double>();
            for (const json& je : require_key(js, "spectrum", ctx)) {
                SpectrumEntry e;
                e.order = require_key(je, "order", ctx).get<int>();
                e.magnitude_pct = require_key(je, "magnitude_pct", ctx).get<double>();
                if (je.contains("angle_deg")) e.base_angle_deg = je["angle_deg"].get<double>();
                src.spectrum.push_back(e);
            }
            if (js.contains("sequence") && !js["sequence"].is_string()) {
                for (const json& jo : js["sequence"]) {
                    SequenceOverride ov;
                    ov.order = require_key(jo, "order", ctx).get<int>();
                    for (const json& d : require_key(jo, "offsets_deg", ctx))
                        ov.offsets_deg.push_back(d.get<double>());
                    src.sequence.push_back(std::move(ov));
                }
            } else if (js.contains("sequence") && js["sequence"].get<std::string>() != "auto") {
                throw ParseError(ctx + ": sequence must be \"auto\" or a list of overrides");
            }
            m.sources.push_back(std::move(src));
        }
    }

    const json& js = require_key(doc, "substation", "file");
    m.substation.bus = require_key(js, "bus", "substation").get<std::string>();
    for (const json& jv : require_key(js, "source_voltage", "substation")) {
        const std::string pc = require_key(jv, "phase", "substation").get<std::string>();
        if (pc.size() != 1) throw ParseError("substation: phase must be a single letter");
        m.substation.phases.push_back(phase_from_char(pc[0]));
        const double mag = require_key(jv, "magnitude_v", "substation").get<double>();
        const double ang = jv.contains("angle_deg") ? jv["angle_deg"].get<double>() : 0.0;
        m.substation.source_voltage_v.emplace_back(mag, to_radians(ang));
    }
    m.substation.source_impedance_ohm = parse_complex_matrix(
        require_key(js, "source_impedance", "substation"), "substation source_impedance");

    return m;
}

/// Loads and fully validates a network file. Throws IoError when the file
/// cannot be read, ParseError on malformed content, and ValidationError
/// (naming the offending element) when the model breaks an invariant.
inline NetworkModel load_network(const std::string& path) {
    NetworkModel m = parse_network(path);
    const std::vector<Finding> findings = validate_topology(m);
    if (!findings.empty()) {
        std::string msg = "network file \"" + path + "\" is invalid:";
        for (const Finding& f : findings) msg += "\n  " + f.to_string();
        throw ValidationError(msg);
    }
    return m;
}

} // namespace harmflow
