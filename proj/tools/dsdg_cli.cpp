// Command-line driver: run / converge / compare / schedule / mesh.
#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "dsdg/comms.hpp"
#include "dsdg/errors.hpp"
#include "dsdg/harness.hpp"
#include "dsdg/layout.hpp"
#include "dsdg/msh_io.hpp"

namespace {

struct ConfigArgs {
    std::string file;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;  // key → value, filled by per-key options
};

// Every config key gets a flag named after its short form (--tau, --nx, ...)
// unless the short form is ambiguous, in which case the dotted name is used.
void add_config_options(CLI::App* app, ConfigArgs& args) {
    app->add_option("-c,--config", args.file, "Config file (key = value, [section] headers)");
    app->add_option("--set", args.sets, "Override a config key, e.g. --set time.tau=0.005")->take_all();
    std::map<std::string, int> count;
    for (const auto& key : dsdg::RunConfig::keys()) ++count[key.substr(key.find('.') + 1)];
    for (const auto& key : dsdg::RunConfig::keys()) {
        const std::string s = key.substr(key.find('.') + 1);
        const std::string flag = count[s] == 1 ? s : key;
        app->add_option_function<std::string>(
               "--" + flag, [&args, key](const std::string& v) { args.flags[key] = v; }, "config key " + key)
            ->group("Config keys");
    }
}

dsdg::RunConfig resolve(const ConfigArgs& args) {
    dsdg::RunConfig c;
    if (!args.file.empty()) c = dsdg::load_config(args.file);
    for (const auto& [k, v] : args.flags) c.set(k, v);
    for (const auto& s : args.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw dsdg::ConfigError("--set expects key=value, got '" + s + "'");
        c.set(s.substr(0, eq), s.substr(eq + 1));
    }
    c.validate();
    return c;
}

std::vector<std::size_t> parse_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
    return out;
}

void print_report(const dsdg::ErrorReport& r) {
    std::cout << "method        " << r.method << "\n"
              << "cells / dofs  " << r.cells << " / " << r.dofs << "\n"
              << "h_min / h_max " << r.h_min << " / " << r.h_max << "\n"
              << "tau / steps   " << r.tau << " / " << r.steps << "\n";
    if (r.method == "ds") std::cout << "subdomains    " << r.subdomains << ", layers " << r.layers << "\n";
    if (r.reference != "none") {
        std::cout << "reference     " << r.reference << "\n"
                  << "rel L2 u      " << r.rel_l2_u << "\n"
                  << "rel a x L2    " << r.rel_combined << "\n";
    }
    std::cout << "time mesh/setup/step/total [s]  " << r.mesh_seconds << " / " << r.setup_seconds << " / "
              << r.step_seconds << " / " << r.total_seconds << "\n";
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DG wave solver with overlapping domain splitting"};
    app.require_subcommand(1);

    ConfigArgs run_args, conv_args, cmp_args, sched_args, gen_args;

    auto* run = app.add_subcommand("run", "Run one simulation and report errors");
    add_config_options(run, run_args);

    auto* conv = app.add_subcommand("converge", "Convergence table under tau or h refinement");
    add_config_options(conv, conv_args);
    std::string axis = "time";
    std::size_t levels = 3;
    conv->add_option("--axis", axis, "time | space")->check(CLI::IsMember({"time", "space"}));
    conv->add_option("--levels", levels, "Number of refinement levels");

    auto* cmp = app.add_subcommand("compare", "Splitting vs global Crank-Nicolson for several overlaps");
    add_config_options(cmp, cmp_args);
    std::string layer_list = "2,4,8";
    cmp->add_option("--layer-list", layer_list, "Comma-separated overlap layers");

    auto* sched = app.add_subcommand("schedule", "Print the greedy communication schedule");
    std::string graph_file, schedule_out;
    sched->add_option("--graph", graph_file, "Edge list file: one 'i j M' per line");
    sched->add_option("-o,--out", schedule_out, "Write the schedule to this file");
    add_config_options(sched, sched_args);

    auto* mesh = app.add_subcommand("mesh", "Generate or inspect meshes");
    mesh->require_subcommand(1);
    auto* gen = mesh->add_subcommand("generate", "Build the configured mesh and write it as MSH");
    std::string mesh_out;
    gen->add_option("-o,--out", mesh_out, "Output .msh path")->required();
    std::string vtk_out;
    gen->add_option("--kappa-vtk", vtk_out, "Also write kappa as VTK");
    add_config_options(gen, gen_args);
    auto* inspect = mesh->add_subcommand("inspect", "Print mesh statistics");
    std::string inspect_file;
    inspect->add_option("file", inspect_file, "MSH file")->required();
    std::vector<int> inspect_dirichlet{1};
    inspect->add_option("--dirichlet-tags", inspect_dirichlet, "Line tags read as Dirichlet");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            const auto config = resolve(run_args);
            print_report(dsdg::run_experiment(config));
        } else if (*conv) {
            const auto config = resolve(conv_args);
            const auto rows = axis == "time" ? dsdg::converge_time(config, levels) : dsdg::converge_space(config, levels);
            dsdg::write_convergence_table(std::cout, rows);
        } else if (*cmp) {
            const auto config = resolve(cmp_args);
            dsdg::write_compare_table(std::cout, dsdg::compare_to_cn(config, parse_list(layer_list)));
        } else if (*sched) {
            dsdg::CommGraph graph;
            if (!graph_file.empty()) {
                graph = dsdg::read_graph_file(graph_file);
            } else {
                const auto config = resolve(sched_args);
                const dsdg::Mesh m = dsdg::build_mesh(config);
                const dsdg::BrokenSpace space(m, config.degree);
                const auto layout =
                    dsdg::build_layout(m, dsdg::partition_cells(m, config.subdomains, config.seed), config.layers);
                graph = dsdg::build_comm_graph(layout, space);
            }
            const std::string text = dsdg::format_schedule(dsdg::greedy_schedule(graph));
            std::cout << text;
            if (!schedule_out.empty()) {
                std::ofstream out(schedule_out);
                if (!out) throw dsdg::ConfigError("cannot open " + schedule_out);
                out << text;
            }
        } else if (*gen) {
            const auto config = resolve(gen_args);
            dsdg::Mesh m = dsdg::build_mesh(config);
            // κ is not part of the MSH format: tag cells by distinct κ value instead
            std::vector<double> values(m.kappa().begin(), m.kappa().end());
            std::sort(values.begin(), values.end());
            values.erase(std::unique(values.begin(), values.end()), values.end());
            std::vector<int> regions(m.num_cells());
            for (std::size_t c = 0; c < m.num_cells(); ++c)
                regions[c] = 1 + static_cast<int>(std::lower_bound(values.begin(), values.end(), m.kappa(c)) - values.begin());
            m.set_regions(std::move(regions));
            dsdg::write_msh(m, mesh_out);
            for (std::size_t i = 0; i < values.size(); ++i)
                std::cout << "region " << i + 1 << ": kappa " << values[i] << "\n";
            if (!vtk_out.empty()) {
                const dsdg::BrokenSpace space(m, 0);
                dsdg::write_vtk(dsdg::Field(space, m.kappa()), vtk_out, "kappa");
            }
            std::cout << "wrote " << m.num_cells() << " cells to " << mesh_out << "\n";
        } else if (*inspect) {
            dsdg::MshImportOptions options;
            options.dirichlet_tags.insert(inspect_dirichlet.begin(), inspect_dirichlet.end());
            const dsdg::Mesh m = dsdg::read_msh(inspect_file, options);
            std::map<int, std::size_t> per_region;
            for (std::size_t c = 0; c < m.num_cells(); ++c) ++per_region[m.region(c)];
            std::size_t dirichlet = 0, neumann = 0, unlabeled = 0;
            for (const auto& f : m.faces()) {
                if (!f.is_boundary()) continue;
                if (f.label == dsdg::BoundaryLabel::Dirichlet) ++dirichlet;
                else if (f.label == dsdg::BoundaryLabel::Neumann) ++neumann;
                else ++unlabeled;
            }
            double kmin = m.kappa(0), kmax = m.kappa(0);
            for (double k : m.kappa()) {
                kmin = std::min(kmin, k);
                kmax = std::max(kmax, k);
            }
            std::cout << "vertices " << m.num_vertices() << "\ncells " << m.num_cells() << "\nfaces " << m.num_faces()
                      << " (" << m.num_interior_faces() << " interior)\n"
                      << "boundary faces: " << dirichlet << " Dirichlet, " << neumann << " Neumann, " << unlabeled
                      << " unlabeled\n"
                      << "h_min " << m.min_diameter() << ", h_max " << m.max_diameter() << "\nkappa in [" << kmin << ", "
                      << kmax << "]\n";
            for (const auto& [tag, n] : per_region) std::cout << "region " << tag << ": " << n << " cells\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dsdg::exit_code(e);
    }
    return 0;
}
