#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "harmflow/network_io.hpp"
#include "test_support.hpp"

using namespace harmflow;
using namespace testsupport;

namespace {

bool has_finding(const std::vector<Finding>& fs, const std::string& code,
                 const std::string& element) {
    for (const Finding& f : fs)
        if (f.code == code && f.element == element) return true;
    return false;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        path = std::string("harmflow_test_tmp_") + std::to_string(counter++) + ".json";
        std::ofstream out(path);
        out << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
    static inline int counter = 0;
};

} // namespace

TEST_CASE("load_network: bundled feeders parse with expected element counts") {
    const NetworkModel two = load_network(fixture_path("feeder_2bus.json"));
    CHECK(two.buses.size() == 2);
    CHECK(two.branches.size() == 1);
    CHECK(two.loads.size() == 1);
    CHECK(two.sources.size() == 1);
    CHECK(two.base_frequency_hz == 60.0);

    const NetworkModel y13 = load_network(fixture_path("feeder_y13.json"));
    CHECK(y13.buses.size() == 13);
    CHECK(y13.branches.size() == 12);
}

TEST_CASE("load_network: dangling bus reference is named in the error") {
    NetworkModel m = load_network(fixture_path("feeder_2bus.json"));
    m.branches[0].to = "X9";
    const auto findings = validate_topology(m);
    REQUIRE(!findings.empty());
    bool named = false;
    for (const Finding& f : findings)
        if (f.detail.find("X9") != std::string::npos) named = true;
    CHECK(named);

    TempFile bad(R"({
      "base": {"frequency_hz": 60, "power_va": 1000},
      "buses": [{"id": "sub", "phases": "A", "nominal_voltage_v": 100.0}],
      "branches": [{"id": "ln1", "from": "sub", "to": "X9", "phases": "A",
                    "z": [[[0.1, 0.2]]]}],
      "substation": {"bus": "sub",
        "source_voltage": [{"phase": "A", "magnitude_v": 100.0}],
        "source_impedance": [[[0.01, 0.05]]]}
    })");
    CHECK_THROWS_WITH_AS(load_network(bad.path), doctest::Contains("X9"), ValidationError);
}

TEST_CASE("load_network: missing file and malformed JSON") {
    CHECK_THROWS_AS(load_network("no_such_file.json"), IoError);
    TempFile junk("{ this is not json");
    CHECK_THROWS_AS(load_network(junk.path), ParseError);
}

TEST_CASE("parse_network: schema violations raise ParseError naming the context") {
    const std::string skeleton_head = R"({
      "base": {"frequency_hz": 60, "power_va": 1000},
      "buses": [{"id": "sub", "phases": "AB", "nominal_voltage_v": 100.0},
                {"id": "b1", "phases": "AB", "nominal_voltage_v": 100.0}],
      )";
    const std::string skeleton_tail = R"(
      "substation": {"bus": "sub",
        "source_voltage": [{"phase": "A", "magnitude_v": 100.0},
                           {"phase": "B", "magnitude_v": 100.0, "angle_deg": -120}],
        "source_impedance": [[[0.01, 0.05], [0.0, 0.0]],
                             [[0.0, 0.0], [0.01, 0.05]]]}
    })";

    // Branch without its impedance matrix.
    {
        TempFile f(skeleton_head +
                   R"("branches": [{"id": "ln1", "from": "sub", "to": "b1", "phases": "AB"}],)" +
                   skeleton_tail);
        CHECK_THROWS_WITH_AS(parse_network(f.path), doctest::Contains("ln1"), ParseError);
    }
    // Complex entries must be [real, imag] pairs.
    {
        TempFile f(skeleton_head +
                   R"("branches": [{"id": "ln1", "from": "sub", "to": "b1", "phases": "AB",
                       "z": [[0.1, 0.2], [0.2, 0.1]]}],)" +
                   skeleton_tail);
        CHECK_THROWS_AS(parse_network(f.path), ParseError);
    }
    // Ragged impedance matrix.
    {
        TempFile f(skeleton_head +
                   R"("branches": [{"id": "ln1", "from": "sub", "to": "b1", "phases": "AB",
                       "z": [[[0.1, 0.2], [0.0, 0.0]], [[0.1, 0.2]]]}],)" +
                   skeleton_tail);
        CHECK_THROWS_AS(parse_network(f.path), ParseError);
    }
    // Unknown phase letter.
    {
        TempFile f(skeleton_head +
                   R"("branches": [{"id": "ln1", "from": "sub", "to": "b1", "phases": "AX",
                       "z": [[[0.1, 0.2], [0.0, 0.0]], [[0.0, 0.0], [0.1, 0.2]]]}],)" +
                   skeleton_tail);
        CHECK_THROWS_AS(parse_network(f.path), ParseError);
    }
    // Sequence must be "auto" or a list of overrides.
    {
        TempFile f(skeleton_head +
                   R"("branches": [{"id": "ln1", "from": "sub", "to": "b1", "phases": "AB",
                       "z": [[[0.1, 0.2], [0.0, 0.0]], [[0.0, 0.0], [0.1, 0.2]]]}],
                      "sources": [{"id": "hs1", "bus": "b1", "phases": "A",
                       "fundamental_base_a": 1.0, "sequence": "zigzag",
                       "spectrum": [{"order": 3, "magnitude_pct": 1.0}]}],)" +
                   skeleton_tail);
        CHECK_THROWS_WITH_AS(parse_network(f.path), doctest::Contains("sequence"), ParseError);
    }
    // Delta loads are not modeled.
    {
        TempFile f(skeleton_head +
                   R"("branches": [{"id": "ln1", "from": "sub", "to": "b1", "phases": "AB",
                       "z": [[[0.1, 0.2], [0.0, 0.0]], [[0.0, 0.0], [0.1, 0.2]]]}],
                      "loads": [{"id": "ld1", "bus": "b1", "phases": "A",
                       "connection": "delta", "power_va": [[10.0, 2.0]]}],)" +
                   skeleton_tail);
        CHECK_THROWS_WITH_AS(parse_network(f.path), doctest::Contains("delta"), ParseError);
    }
}

TEST_CASE("validate_topology: clean fixtures produce no findings") {
    for (const char* name : {"feeder_2bus.json", "feeder_cancel.json", "feeder_stiff.json",
                             "feeder_coupled3.json", "feeder_y13.json"}) {
        const NetworkModel m = load_network(fixture_path(name));
        CHECK(validate_topology(m).empty());
    }
}

TEST_CASE("validate_topology: loop branch reports a cycle through the branch id") {
    NetworkModel m = load_network(fixture_path("feeder_stiff.json"));
    Branch loop = m.branches[0];
    loop.id = "loop1";
    loop.from = "sub";
    loop.to = "cust";
    m.branches.push_back(loop);
    const auto findings = validate_topology(m);
    REQUIRE(!findings.empty());
    CHECK(findings.front().code == "cycle");
    // The cycle is reported through whichever branch closes it.
    bool through_known_branch = false;
    for (const Finding& f : findings)
        if (f.code == "cycle" &&
            (f.element == "loop1" || f.element == "ln1" || f.element == "ln2"))
            through_known_branch = true;
    CHECK(through_known_branch);
}

TEST_CASE("validate_topology: dimension mismatch on a three-phase branch") {
    NetworkModel m = load_network(fixture_path("feeder_2bus.json"));
    m.branches[0].series_impedance_ohm = ComplexMatrix::Identity(2, 2);
    CHECK(has_finding(validate_topology(m), "dimension-mismatch", "ln1"));
}

TEST_CASE("validate_topology: disconnected bus, asymmetric and singular impedance") {
    NetworkModel m = load_network(fixture_path("feeder_2bus.json"));
    m.buses.push_back({"island", {PhaseId::A}, 7621.0});
    CHECK(has_finding(validate_topology(m), "disconnected", "island"));

    NetworkModel m2 = load_network(fixture_path("feeder_2bus.json"));
    m2.branches[0].series_impedance_ohm(0, 1) += Complex{1.0, 0.0};
    CHECK(has_finding(validate_topology(m2), "asymmetric", "ln1"));

    NetworkModel m3 = load_network(fixture_path("feeder_2bus.json"));
    m3.branches[0].series_impedance_ohm.setZero();
    CHECK(has_finding(validate_topology(m3), "singular", "ln1"));
}

TEST_CASE("validate_topology: bus-phase without a supplying path is flagged") {
    NetworkModel m = load_network(fixture_path("feeder_y13.json"));
    // b08 is a single-phase-B bus; pretend it also declares phase C, which
    // its supplying branch ln08 does not carry.
    for (Bus& b : m.buses)
        if (b.id == "b08") b.phases = {PhaseId::B, PhaseId::C};
    CHECK(has_finding(validate_topology(m), "isolated-phase", "b08"));
}

TEST_CASE("traversal_order: single branch, chain, and parent-before-child on y13") {
    const NetworkModel two = load_network(fixture_path("feeder_2bus.json"));
    CHECK(traversal_order(two) == std::vector<std::string>{"ln1"});

    const NetworkModel stiff = load_network(fixture_path("feeder_stiff.json"));
    CHECK(traversal_order(stiff) == std::vector<std::string>{"ln1", "ln2"});

    const NetworkModel y13 = load_network(fixture_path("feeder_y13.json"));
    const std::vector<std::string> order = traversal_order(y13);
    CHECK(order.size() == y13.branches.size());

    // Brute-force check: walking the list, a branch may only appear once one
    // of its endpoints was already reached from the substation.
    std::vector<std::string> reached{y13.substation.bus};
    auto is_reached = [&](const std::string& bus) {
        return std::find(reached.begin(), reached.end(), bus) != reached.end();
    };
    for (const std::string& id : order) {
        const Branch* br = nullptr;
        for (const Branch& b : y13.branches)
            if (b.id == id) br = &b;
        REQUIRE(br != nullptr);
        const bool from_reached = is_reached(br->from);
        const bool to_reached = is_reached(br->to);
        CHECK((from_reached || to_reached));
        reached.push_back(from_reached ? br->to : br->from);
    }
}

TEST_CASE("traversal handles branches declared child-to-parent") {
    NetworkModel m = load_network(fixture_path("feeder_stiff.json"));
    std::swap(m.branches[1].from, m.branches[1].to); // now cust -> mid
    CHECK(validate_topology(m).empty());
    CHECK(traversal_order(m) == std::vector<std::string>{"ln1", "ln2"});
    const NetworkIndex idx(m);
    CHECK(idx.traversal()[1].reversed);
}

TEST_CASE("traversal_order rejects non-radial models") {
    NetworkModel m = load_network(fixture_path("feeder_stiff.json"));
    Branch loop = m.branches[0];
    loop.id = "loop1";
    loop.from = "sub";
    loop.to = "cust";
    m.branches.push_back(loop);
    CHECK_THROWS_AS(traversal_order(m), ValidationError);
}

TEST_CASE("frequency scaling: reactance linear in h, resistance constant") {
    const Complex z1{0.01, 0.02};
    CHECK(scale_series_impedance(z1, 5, false) == Complex{0.01, 0.10});
    CHECK(scale_series_impedance(Complex{0.7, 0.0}, 9, false) == Complex{0.7, 0.0});

    // Optional skin-effect correction multiplies resistance by sqrt(h).
    const Complex z9 = scale_series_impedance(z1, 9, true);
    CHECK(z9.real() == doctest::Approx(0.03).epsilon(1e-15));
    CHECK(z9.imag() == doctest::Approx(0.18).epsilon(1e-15));

    // Shunt: susceptance scales, conductance constant.
    CHECK(scale_shunt_admittance(Complex{1e-4, 2e-3}, 7) == Complex{1e-4, 1.4e-2});
}

TEST_CASE("admittance assembly: two-bus blocks against hand nodal assembly") {
    const NetworkModel m = pu_two_bus({0.01, 0.02}, {0.0, 0.05}, {0.0, 0.0});
    PreparedNetwork net(m);
    const ComplexVector v1 = ComplexVector::Ones(2);

    for (int h : {2, 3, 5, 11}) {
        const ComplexMatrix y = net.admittance_at_order(h, v1, false);
        const Complex z_h = scale_series_impedance(Complex{0.01, 0.02}, h, false);
        const Complex zs_h = scale_series_impedance(Complex{0.0, 0.05}, h, false);
        // Dense oracle for the 2x2 case.
        CHECK(std::abs(y(0, 1) - (-1.0 / z_h)) < 1e-12 * std::abs(1.0 / z_h));
        CHECK(std::abs(y(1, 0) - (-1.0 / z_h)) < 1e-12 * std::abs(1.0 / z_h));
        CHECK(std::abs(y(1, 1) - 1.0 / z_h) < 1e-12 * std::abs(1.0 / z_h));
        CHECK(std::abs(y(0, 0) - (1.0 / z_h + 1.0 / zs_h)) < 1e-12 * std::abs(y(0, 0)));
    }
}

TEST_CASE("admittance matrix is symmetric on every fixture and order") {
    for (const char* name : {"feeder_2bus.json", "feeder_stiff.json", "feeder_coupled3.json",
                             "feeder_y13.json"}) {
        const NetworkModel m = load_network(fixture_path(name));
        PreparedNetwork net(m);
        const ComplexVector v1 = ComplexVector::Ones(net.index().node_count());
        for (int h : {2, 3, 5, 7, 9, 11}) {
            const ComplexMatrix y = net.admittance_at_order(h, v1, false);
            const double scale = y.cwiseAbs().maxCoeff();
            CHECK((y - y.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale);
        }
    }
}

TEST_CASE("admittance row sums vanish except at the grounded substation") {
    // No loads, no shunts: every row of Y(h) away from the substation block
    // sums to zero (each branch contributes equal and opposite terms).
    NetworkModel m = load_network(fixture_path("feeder_stiff.json"));
    m.loads.clear();
    PreparedNetwork net(m);
    const ComplexVector v1 = ComplexVector::Ones(net.index().node_count());
    const ComplexMatrix y = net.admittance_at_order(5, v1, false);
    const double scale = y.cwiseAbs().maxCoeff();

    const NetworkIndex& idx = net.index();
    for (int u = 0; u < static_cast<int>(m.buses.size()); ++u) {
        for (PhaseId p : m.buses[u].phases) {
            const Complex row_sum = y.row(idx.node(u, p)).sum();
            if (u == idx.root_bus())
                CHECK(std::abs(row_sum) > 1e-6 * scale);
            else
                CHECK(std::abs(row_sum) <= 1e-12 * scale);
        }
    }
}

TEST_CASE("default source spectrum matches the bundled feeders") {
    const auto spectrum = default_source_spectrum();
    std::vector<HarmonicOrder> orders;
    for (const SpectrumEntry& e : spectrum) orders.push_back(e.order);
    CHECK(orders == std::vector<HarmonicOrder>{3, 5, 7, 9, 11});

    const NetworkModel m = load_network(fixture_path("feeder_2bus.json"));
    REQUIRE(m.sources[0].spectrum.size() == spectrum.size());
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        CHECK(m.sources[0].spectrum[i].order == spectrum[i].order);
        CHECK(m.sources[0].spectrum[i].magnitude_pct == spectrum[i].magnitude_pct);
    }
}

TEST_CASE("per-unit conversion: bases derived from bus voltage and system power") {
    const NetworkModel m = load_network(fixture_path("feeder_2bus.json"));
    PreparedNetwork net(m);
    const double z_base = 7621.0 * 7621.0 / 1e6;
    CHECK(net.z_base(0) == doctest::Approx(z_base));
    CHECK(net.i_base(0) == doctest::Approx(1e6 / 7621.0));
    CHECK(net.branch_impedance_pu(0)(0, 0).real() == doctest::Approx(0.58 / z_base));
}
