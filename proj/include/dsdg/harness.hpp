/**
 * @file harness.hpp
 * @brief Run configuration, problem data vocabulary and experiment drivers:
 *        single runs with error reports, τ/h convergence tables and the
 *        splitting-vs-Crank-Nicolson comparison.
 *
 * Config files are line-based "key = value" text. "[section]" headers prefix
 * the following keys ("[time]" then "tau = 0.01" sets "time.tau"); '#' starts
 * a comment. Data is specified by a closed vocabulary of named forms such as
 * "constant(1.5)", "standing_wave", "window_sine(0.0125)" and
 * "triangle_region(3,1,5,1,4,3,1.0,1.5)".
 */
#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dsdg/integrators.hpp"
#include "dsdg/layout.hpp"
#include "dsdg/mesh.hpp"
#include "dsdg/splitting.hpp"

namespace dsdg {

struct RunConfig {
    // mesh
    std::string mesh_file;  ///< empty: structured mesh
    std::size_t nx = 16, ny = 16;
    Rectangle extent{0.0, 0.0, 1.0, 1.0};
    std::string band = "none";  ///< "x0,y0,x1,y1": grid intervals inside are split
    std::size_t band_factor = 2;
    std::size_t refine = 0;  ///< uniform refinements applied after building
    std::string kappa = "constant(1)";
    std::string dirichlet = "all";
    // discretization
    std::size_t degree = 1;
    double eta = 0.0;  ///< 0: default penalty
    std::string method = "cn";
    double tau = 0.01;
    double T = 1.0;
    // splitting
    std::size_t subdomains = 1;
    std::size_t layers = 2;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    bool debug_checks = false;
    // solver
    double tol = 1e-10;
    std::size_t maxit = 5000;
    std::string preconditioner = "ic0";
    // data
    std::string u0 = "zero";
    std::string v0 = "zero";
    std::string f = "zero";
    std::string g = "zero";
    std::string exact = "none";
    // reference
    std::string reference = "none";  ///< none | exact | refined_lf | fine_tau
    double reference_tau = 0.0;      ///< refined_lf step (0: largest stable divisor of tau)
    std::size_t reference_factor = 16;
    // output
    std::string csv;
    std::string vtk;  ///< snapshot path prefix
    std::size_t snapshot_every = 0;
    std::string diagnostics;
    std::string energy;
    std::string coefficients;

    /// Sets a key ("time.tau" or the unique short form "tau"); throws ConfigError
    /// naming the key on unknown keys or malformed values.
    void set(const std::string& key, const std::string& value);
    /// Every key with its current value, in canonical order.
    std::vector<std::pair<std::string, std::string>> entries() const;
    static std::vector<std::string> keys();
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
std::string format_config(const RunConfig& config);

/// Smooth window: 0 on y ≤ 0.5 and y ≥ 3.5, 1 on [1, 3], quintic smoothstep between.
double window_profile(double y);

/// Exact standing wave cos(√2 π t) sin(πx) sin(πy) and its time derivative.
double standing_wave_u(Point x, double t);
double standing_wave_v(Point x, double t);

/// Parses a data form; `component` selects u (0) or v (1) for forms that
/// describe a full solution (standing_wave).
SpaceTimeFunction parse_data(const std::string& spec, int component = 0);

/// Mesh with κ and boundary labels applied.
Mesh build_mesh(const RunConfig& config);

/// Mesh, space and data of a configuration. Not movable (the space points to the mesh).
struct Setup {
    explicit Setup(const RunConfig& config);
    Setup(const Setup&) = delete;
    Setup& operator=(const Setup&) = delete;

    RunConfig config;
    std::vector<std::string> warnings;
    double mesh_seconds;  // set while building the mesh
    Mesh mesh;
    BrokenSpace space;
    ProblemData data;
    SpaceTimeFunction exact_u, exact_v;
};

struct Simulation {
    State final;
    double tau = 0.0;
    std::size_t steps = 0;
    std::size_t iterations = 0;
    double setup_seconds = 0.0;
    double step_seconds = 0.0;
    std::vector<std::string> warnings;
};

/// Runs the configured method to T, writing the configured per-step artifacts.
Simulation simulate(const Setup& setup);

/// Reference solution for error evaluation.
struct Reference {
    std::string kind;
    std::unique_ptr<Setup> fine;  ///< refined_lf: refined setup; fine_tau: nullptr
    State state;                  ///< on `fine` or on the coarse space
    double seconds = 0.0;
};

Reference compute_reference(const Setup& setup);

struct ErrorReport {
    std::string method;
    std::size_t cells = 0;
    std::size_t dofs = 0;
    double h_min = 0.0;
    double h_max = 0.0;
    double tau = 0.0;
    std::size_t steps = 0;
    std::size_t subdomains = 1;
    std::size_t layers = 0;
    std::size_t degree = 0;
    std::string reference = "none";
    double rel_l2_u = std::numeric_limits<double>::quiet_NaN();
    double rel_combined = std::numeric_limits<double>::quiet_NaN();  ///< ‖·‖_a × L2
    double mesh_seconds = 0.0;
    double setup_seconds = 0.0;
    double step_seconds = 0.0;  ///< per step
    double total_seconds = 0.0;
    double reference_seconds = 0.0;
    std::size_t iterations = 0;
    std::vector<std::string> warnings;
};

/// Errors of `state` (on the setup's space) against the reference.
void evaluate_errors(const Setup& setup, const State& state, const Reference& reference, ErrorReport& report);

ErrorReport run_experiment(const RunConfig& config);

struct ConvergenceRow {
    ErrorReport report;
    double order_u = std::numeric_limits<double>::quiet_NaN();
    double order_combined = std::numeric_limits<double>::quiet_NaN();
};

/// τ, τ/2, ... (`levels` runs) against one shared reference.
std::vector<ConvergenceRow> converge_time(const RunConfig& config, std::size_t levels);
/// nx, 2nx, ... with the exact solution as reference.
std::vector<ConvergenceRow> converge_space(const RunConfig& config, std::size_t levels);

struct CompareReport {
    std::size_t layers = 0;
    double rel_a_u = 0.0;       ///< ‖u_DS − u_CN‖_a / ‖u_CN‖_a
    double rel_l2_v = 0.0;      ///< ‖v_DS − v_CN‖ / ‖v_CN‖
    double rel_combined = 0.0;  ///< combined ‖·‖_a × L2, relative
    ErrorReport ds;
    ErrorReport cn;
};

/// Runs splitting for each ℓ and one global CN on the same mesh, τ and data.
/// Error fields of `ds`/`cn` are filled when a reference is configured.
std::vector<CompareReport> compare_to_cn(const RunConfig& config, const std::vector<std::size_t>& layers);

void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, const ErrorReport& r);
void write_reports_csv(const std::string& path, const std::vector<ErrorReport>& reports);
void write_convergence_table(std::ostream& out, const std::vector<ConvergenceRow>& rows);
void write_compare_table(std::ostream& out, const std::vector<CompareReport>& rows);

/// 0 success, 2 configuration, 3 solver failure, 4 instability, 1 other.
int exit_code(const std::exception& e);

}  // namespace dsdg
