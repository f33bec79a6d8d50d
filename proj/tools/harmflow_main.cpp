// harmflow: harmonic penetration studies on unbalanced radial feeders.
//
// Exit codes: 0 success, 1 domain or validation failure, 2 I/O failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "harmflow/engine.hpp"
#include "harmflow/network_io.hpp"
#include "harmflow/sweep.hpp"

namespace {

using namespace harmflow;

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open output file \"" + path + "\"");
    return out;
}

std::vector<double> make_angles(double start, double stop, double step) {
    if (step <= 0.0) throw QueryError("--angle-step must be > 0");
    if (stop < start) throw QueryError("--angle-stop must be >= --angle-start");
    std::vector<double> out;
    for (int k = 0;; ++k) {
        const double a = start + k * step;
        if (a > stop + 1e-9) break;
        out.push_back(a);
    }
    return out;
}

AssessmentConfig make_config(const std::vector<int>& orders, bool skin_effect) {
    AssessmentConfig cfg;
    cfg.orders = orders;
    cfg.skin_effect = skin_effect;
    validate_config(cfg);
    return cfg;
}

/// Keeps only the selected phase of a report ("ALL" keeps everything).
IndexReport select_phase(IndexReport report, const std::string& phase_flag) {
    if (phase_flag == "ALL" || phase_flag == "all") return report;
    const PhaseId keep = phase_from_char(phase_flag.at(0));
    if (!report.per_phase.count(keep))
        throw QueryError("phase " + phase_flag + " not measured at \"" + report.point_id + "\"");
    IndexReport out;
    out.point_id = report.point_id;
    out.per_phase[keep] = report.per_phase.at(keep);
    return out;
}

void print_index_table(std::ostream& os, const std::vector<IndexReport>& reports) {
    os << "point,phase,thdv_pct,thdi_pct,tpf,phi_v,phi_i\n";
    for (const IndexReport& r : reports)
        for (const auto& [p, x] : r.per_phase)
            os << r.point_id << ',' << to_char(p) << ',' << format_sig9(x.thdv_pct) << ','
               << format_sig9(x.thdi_pct) << ',' << format_sig9(x.tpf) << ','
               << format_sig9(x.phi_v) << ',' << format_sig9(x.phi_i) << '\n';
}

int cmd_validate(const std::string& network_path) {
    NetworkModel m;
    try {
        m = parse_network(network_path);
    } catch (const ParseError& e) {
        std::cout << e.what() << '\n';
        return 1;
    }
    const std::vector<Finding> findings = validate_topology(m);
    for (const Finding& f : findings) std::cout << f.to_string() << '\n';
    return findings.empty() ? 0 : 1;
}

int cmd_solve(const std::string& network_path, const std::vector<int>& orders, bool skin_effect,
              const std::string& out_path) {
    const NetworkModel m = load_network(network_path);
    const AssessmentConfig cfg = make_config(orders, skin_effect);
    const ResultStore store = run_assessment(m, cfg);

    std::ofstream out = open_output(out_path);
    write_results_csv(store, out);
    if (!out) throw IoError("failed writing \"" + out_path + "\"");

    std::cout << "orders solved:";
    for (HarmonicOrder h : cfg.orders) std::cout << ' ' << h;
    std::cout << "\nfundamental iterations: " << store.stats.fundamental_iterations
              << "\nmax harmonic residual: " << format_sig9(store.stats.max_residual) << '\n';
    return 0;
}

int cmd_indices(const std::string& network_path, const std::string& point,
                const std::string& phase_flag, const std::vector<int>& orders, bool skin_effect,
                const std::string& out_path) {
    const NetworkModel m = load_network(network_path);
    const ResultStore store = run_assessment(m, make_config(orders, skin_effect));
    const IndexReport report = select_phase(index_report(m, store, point), phase_flag);

    print_index_table(std::cout, {report});
    if (!out_path.empty()) {
        std::ofstream out = open_output(out_path);
        write_index_csv({report}, out);
    }
    return 0;
}

int cmd_sweep(const std::string& network_path, const std::vector<std::string>& sources,
              const std::string& metric, const std::string& point, const std::string& phase_flag,
              double start, double stop, double step, const std::vector<int>& orders,
              bool skin_effect, const std::string& out_path) {
    if (sources.size() != 2) throw QueryError("--sources needs exactly two ids: --sources s1,s2");
    const NetworkModel m = load_network(network_path);

    SweepSpec spec;
    spec.source1 = sources[0];
    spec.source2 = sources[1];
    spec.angles_deg = make_angles(start, stop, step);
    spec.metric = metric_from_string(metric);
    spec.point = point;
    spec.phase = phase_from_char(phase_flag.at(0));

    const SweepGrid grid = angle_sweep(m, make_config(orders, skin_effect), spec);
    std::ofstream out = open_output(out_path);
    write_surface_csv(grid, out);
    std::cout << "wrote " << spec.angles_deg.size() << "x" << spec.angles_deg.size() << ' '
              << to_string(spec.metric) << " surface to " << out_path << '\n';
    return 0;
}

int cmd_couple(const std::string& network_path, const std::string& point,
               const std::string& phase_flag, const std::string& metric, double start, double stop,
               double step, const std::vector<int>& orders, bool skin_effect,
               const std::string& out_path) {
    const NetworkModel m = load_network(network_path);
    const PhaseId injected = phase_from_char(phase_flag.at(0));
    const auto stats =
        coupled_phase_study(m, make_config(orders, skin_effect), injected,
                            make_angles(start, stop, step), point, metric_from_string(metric));
    std::ofstream out = open_output(out_path);
    write_box_stats_csv(stats, out);
    std::cout << "wrote " << metric << " box stats for injection on phase " << phase_flag
              << " to " << out_path << '\n';
    return 0;
}

int cmd_compare(const std::string& network_path, const std::vector<std::string>& points,
                const std::vector<int>& orders, bool skin_effect, const std::string& out_path) {
    if (points.size() != 2) throw QueryError("--points needs exactly two ids: --points a,b");
    const NetworkModel m = load_network(network_path);
    const ComparisonReport r =
        compare_points(m, make_config(orders, skin_effect), points[0], points[1]);

    print_index_table(std::cout, {r.point_a, r.point_b});
    if (!out_path.empty()) {
        std::ofstream out = open_output(out_path);
        write_index_csv({r.point_a, r.point_b}, out);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Harmonic penetration studies on unbalanced multi-phase radial feeders"};
    app.require_subcommand(1);

    const std::vector<int> default_orders{3, 5, 7, 9, 11};

    std::string network;
    std::vector<int> orders = default_orders;
    bool skin_effect = false;
    std::string out_path;
    std::string point;
    std::string phase_flag = "ALL";
    std::vector<std::string> sources;
    std::vector<std::string> points;
    std::string metric = "thdv";
    double angle_start = 0.0, angle_stop = 90.0, angle_step = 15.0;

    auto add_network = [&](CLI::App* sub) {
        sub->add_option("network", network, "network model file")->required();
    };
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--orders", orders, "harmonic orders to solve")->delimiter(',');
        sub->add_flag("--skin-effect", skin_effect, "scale branch resistance by sqrt(h)");
    };
    auto add_angles = [&](CLI::App* sub) {
        sub->add_option("--angle-start", angle_start, "first angle offset, degrees");
        sub->add_option("--angle-stop", angle_stop, "last angle offset, degrees");
        sub->add_option("--angle-step", angle_step, "angle step, degrees");
    };

    CLI::App* validate = app.add_subcommand("validate", "check a network file");
    add_network(validate);

    CLI::App* solve = app.add_subcommand("solve", "run the assessment, write the results CSV");
    add_network(solve);
    add_common(solve);
    solve->add_option("--out", out_path, "results CSV path")->required();

    CLI::App* indices = app.add_subcommand("indices", "distortion indices at a point");
    add_network(indices);
    add_common(indices);
    indices->add_option("--point", point, "measurement bus")->required();
    indices->add_option("--phase", phase_flag, "A, B, C or ALL");
    indices->add_option("--out", out_path, "optional CSV path");

    CLI::App* sweep = app.add_subcommand("sweep", "two-source phase-angle sensitivity surface");
    add_network(sweep);
    add_common(sweep);
    add_angles(sweep);
    sweep->add_option("--sources", sources, "the two source ids")->delimiter(',')->required();
    sweep->add_option("--metric", metric, "thdv, thdi, phi_v or phi_i");
    sweep->add_option("--point", point, "measurement bus")->required();
    sweep->add_option("--phase", phase_flag, "measured phase")->required();
    sweep->add_option("--out", out_path, "surface CSV path")->required();

    std::string couple_metric = "phi_i";
    CLI::App* couple = app.add_subcommand("couple",
                                          "single-phase injection study with box stats per phase");
    add_network(couple);
    add_common(couple);
    add_angles(couple);
    couple->add_option("--phase", phase_flag, "injected phase")->required();
    couple->add_option("--point", point, "measurement bus")->required();
    couple->add_option("--metric", couple_metric, "aggregated metric, default phi_i");
    couple->add_option("--out", out_path, "box stats CSV path")->required();

    CLI::App* compare = app.add_subcommand("compare", "indices at two points side by side");
    add_network(compare);
    add_common(compare);
    compare->add_option("--points", points, "the two measurement buses")->delimiter(',')->required();
    compare->add_option("--out", out_path, "optional CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (validate->parsed()) return cmd_validate(network);
        if (solve->parsed()) return cmd_solve(network, orders, skin_effect, out_path);
        if (indices->parsed())
            return cmd_indices(network, point, phase_flag, orders, skin_effect, out_path);
        if (sweep->parsed())
            return cmd_sweep(network, sources, metric, point, phase_flag, angle_start, angle_stop,
                             angle_step, orders, skin_effect, out_path);
        if (couple->parsed())
            return cmd_couple(network, point, phase_flag, couple_metric, angle_start, angle_stop,
                              angle_step, orders, skin_effect, out_path);
        if (compare->parsed()) return cmd_compare(network, points, orders, skin_effect, out_path);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
