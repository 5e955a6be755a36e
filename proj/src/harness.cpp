#include "dsdg/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include "dsdg/errors.hpp"
#include "dsdg/msh_io.hpp"

namespace dsdg {

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t) {
    return std::chrono::duration<double>(clock_type::now() - t).count();
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string unquote(std::string s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double d) {
    std::ostringstream s;
    s << std::setprecision(17) << d;
    return s.str();
}

struct KeyDef {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define DSDG_STR(field, key) \
    KeyDef { key, [](RunConfig& c, const std::string& v) { c.field = v; }, [](const RunConfig& c) { return c.field; } }
#define DSDG_NUM(field, key)                                                               \
    KeyDef {                                                                               \
        key, [](RunConfig& c, const std::string& v) { c.field = to_double(key, v); },      \
            [](const RunConfig& c) { return fmt(c.field); }                                \
    }
#define DSDG_INT(field, key)                                                               \
    KeyDef {                                                                               \
        key, [](RunConfig& c, const std::string& v) { c.field = to_uint(key, v); },        \
            [](const RunConfig& c) { return std::to_string(c.field); }                     \
    }

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = {
        DSDG_STR(mesh_file, "mesh.file"),
        DSDG_INT(nx, "mesh.nx"),
        DSDG_INT(ny, "mesh.ny"),
        DSDG_NUM(extent.x0, "mesh.x0"),
        DSDG_NUM(extent.y0, "mesh.y0"),
        DSDG_NUM(extent.x1, "mesh.x1"),
        DSDG_NUM(extent.y1, "mesh.y1"),
        DSDG_STR(band, "mesh.band"),
        DSDG_INT(band_factor, "mesh.band_factor"),
        DSDG_INT(refine, "mesh.refine"),
        DSDG_STR(kappa, "mesh.kappa"),
        DSDG_STR(dirichlet, "mesh.dirichlet"),
        DSDG_INT(degree, "dg.degree"),
        DSDG_NUM(eta, "dg.eta"),
        DSDG_STR(method, "time.method"),
        DSDG_NUM(tau, "time.tau"),
        DSDG_NUM(T, "time.T"),
        DSDG_INT(subdomains, "split.subdomains"),
        DSDG_INT(layers, "split.layers"),
        DSDG_INT(seed, "split.seed"),
        DSDG_INT(workers, "split.workers"),
        KeyDef{"split.debug", [](RunConfig& c, const std::string& v) { c.debug_checks = to_bool("split.debug", v); },
               [](const RunConfig& c) { return std::string(c.debug_checks ? "true" : "false"); }},
        DSDG_NUM(tol, "solver.tol"),
        DSDG_INT(maxit, "solver.maxit"),
        DSDG_STR(preconditioner, "solver.preconditioner"),
        DSDG_STR(u0, "problem.u0"),
        DSDG_STR(v0, "problem.v0"),
        DSDG_STR(f, "problem.f"),
        DSDG_STR(g, "problem.g"),
        DSDG_STR(exact, "problem.exact"),
        DSDG_STR(reference, "reference.kind"),
        DSDG_NUM(reference_tau, "reference.lf_tau"),
        DSDG_INT(reference_factor, "reference.factor"),
        DSDG_STR(csv, "output.csv"),
        DSDG_STR(vtk, "output.vtk"),
        DSDG_INT(snapshot_every, "output.snapshot_every"),
        DSDG_STR(diagnostics, "output.diagnostics"),
        DSDG_STR(energy, "output.energy"),
        DSDG_STR(coefficients, "output.coefficients"),
    };
    return table;
}

#undef DSDG_STR
#undef DSDG_NUM
#undef DSDG_INT

const KeyDef& find_key(const std::string& key) {
    const auto& table = key_table();
    for (const KeyDef& k : table)
        if (key == k.name) return k;
    const KeyDef* match = nullptr;
    for (const KeyDef& k : table) {
        const std::string name = k.name;
        if (name.size() > key.size() && name.compare(name.size() - key.size(), key.size(), key) == 0 &&
            name[name.size() - key.size() - 1] == '.') {
            if (match) throw ConfigError("ambiguous key '" + key + "'");
            match = &k;
        }
    }
    if (!match) throw ConfigError("unknown key '" + key + "'");
    return *match;
}

struct Form {
    std::string name;
    std::vector<std::string> args;
};

Form parse_form(const std::string& spec) {
    const std::string s = trim(spec);
    Form form;
    const auto open = s.find('(');
    if (open == std::string::npos) {
        form.name = s;
        return form;
    }
    if (s.back() != ')') throw ConfigError("malformed data form '" + spec + "'");
    form.name = trim(s.substr(0, open));
    std::string inner = s.substr(open + 1, s.size() - open - 2);
    std::stringstream ss(inner);
    std::string arg;
    while (std::getline(ss, arg, ',')) form.args.push_back(trim(arg));
    if (form.args.size() == 1 && form.args[0].empty()) form.args.clear();
    return form;
}

std::vector<double> numeric_args(const Form& form, std::size_t count) {
    if (form.args.size() != count) {
        throw ConfigError(form.name + ": expected " + std::to_string(count) + " arguments, got " +
                          std::to_string(form.args.size()));
    }
    std::vector<double> v;
    for (const auto& a : form.args) v.push_back(to_double(form.name, a));
    return v;
}

bool in_triangle(Point p, Point a, Point b, Point c) {
    auto cross = [](Point o, Point u, Point w) { return (u.x - o.x) * (w.y - o.y) - (u.y - o.y) * (w.x - o.x); };
    const double d1 = cross(a, b, p), d2 = cross(b, c, p), d3 = cross(c, a, p);
    const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
    const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
    return !(neg && pos);
}

void apply_kappa(Mesh& mesh, const std::string& spec, std::vector<std::string>& warnings) {
    const Form form = parse_form(spec);
    const std::size_t n = mesh.num_cells();
    if (form.name == "constant") {
        const double k = numeric_args(form, 1)[0];
        mesh.set_kappa(std::vector<double>(n, k));
    } else if (form.name == "triangle_region") {
        const auto a = numeric_args(form, 8);
        const Point p0{a[0], a[1]}, p1{a[2], a[3]}, p2{a[4], a[5]};
        std::vector<double> kappa(n);
        std::vector<int> regions(n);
        bool straddles = false;
        for (std::size_t c = 0; c < n; ++c) {
            const bool inside = in_triangle(mesh.centroid(c), p0, p1, p2);
            kappa[c] = inside ? a[6] : a[7];
            regions[c] = inside ? 1 : 2;
            int corners = 0;
            for (std::size_t v : mesh.cell(c)) corners += in_triangle(mesh.vertices()[v], p0, p1, p2);
            if (corners != 0 && corners != 3) straddles = true;
        }
        mesh.set_kappa(std::move(kappa));
        mesh.set_regions(std::move(regions));
        if (straddles) warnings.push_back("kappa region not matched by the mesh; sampled at cell centroids");
    } else if (form.name == "tags") {
        std::map<int, double> by_tag;
        for (const auto& arg : form.args) {
            const auto colon = arg.find(':');
            if (colon == std::string::npos) throw ConfigError("mesh.kappa: tags expects 'tag:value' entries");
            by_tag[static_cast<int>(to_uint("mesh.kappa", trim(arg.substr(0, colon))))] =
                to_double("mesh.kappa", trim(arg.substr(colon + 1)));
        }
        std::vector<double> kappa(n, 1.0);
        for (std::size_t c = 0; c < n; ++c) {
            auto it = by_tag.find(mesh.region(c));
            if (it == by_tag.end()) throw ConfigError("mesh.kappa: no value for region tag " + std::to_string(mesh.region(c)));
            kappa[c] = it->second;
        }
        mesh.set_kappa(std::move(kappa));
    } else {
        throw ConfigError("mesh.kappa: unknown form '" + form.name + "'");
    }
}

void apply_dirichlet(Mesh& mesh, const std::string& spec) {
    const Form form = parse_form(spec);
    if (form.name == "all") {
        mesh = classify_boundary(std::move(mesh), [](Point) { return true; });
    } else if (form.name == "none") {
        mesh = classify_boundary(std::move(mesh), [](Point) { return false; });
    } else if (form.name == "x_eq" || form.name == "y_eq") {
        const double v = numeric_args(form, 1)[0];
        const double scale = std::max(1.0, mesh.max_diameter());
        const bool x = form.name == "x_eq";
        mesh = classify_boundary(std::move(mesh), [=](Point p) { return std::abs((x ? p.x : p.y) - v) < 1e-9 * scale; });
    } else if (form.name == "tags") {
        std::vector<int> tags;
        for (const auto& a : form.args) tags.push_back(static_cast<int>(to_uint("mesh.dirichlet", a)));
        for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
            if (!mesh.face(f).is_boundary()) continue;
            const bool d = std::find(tags.begin(), tags.end(), mesh.boundary_tag(f)) != tags.end();
            mesh.set_label(f, d ? BoundaryLabel::Dirichlet : BoundaryLabel::Neumann);
        }
    } else {
        throw ConfigError("mesh.dirichlet: unknown form '" + form.name + "'");
    }
}

Mesh build_mesh_impl(const RunConfig& config, std::vector<std::string>& warnings) {
    Mesh mesh;
    if (!config.mesh_file.empty()) {
        mesh = read_msh(config.mesh_file);
    } else if (trim(config.band) == "none" || trim(config.band).empty()) {
        mesh = build_structured_mesh(config.nx, config.ny, config.extent);
    } else {
        std::vector<double> b;
        std::stringstream ss(config.band);
        std::string item;
        while (std::getline(ss, item, ',')) b.push_back(to_double("mesh.band", trim(item)));
        if (b.size() != 4) throw ConfigError("mesh.band: expected 'x0,y0,x1,y1'");
        const auto xs = banded_coordinates(config.extent.x0, config.extent.x1, config.nx, b[0], b[2], config.band_factor);
        const auto ys = banded_coordinates(config.extent.y0, config.extent.y1, config.ny, b[1], b[3], config.band_factor);
        mesh = build_tensor_mesh(xs, ys);
    }
    apply_kappa(mesh, config.kappa, warnings);
    apply_dirichlet(mesh, config.dirichlet);
    for (std::size_t r = 0; r < config.refine; ++r) mesh = refine_uniform(mesh);
    return mesh;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

void RunConfig::set(const std::string& key, const std::string& value) {
    find_key(trim(key)).set(*this, unquote(trim(value)));
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const KeyDef& k : key_table()) out.emplace_back(k.name, k.get(*this));
    return out;
}

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> out;
    for (const KeyDef& k : key_table()) out.emplace_back(k.name);
    return out;
}

void RunConfig::validate() const {
    if (mesh_file.empty() && (nx < 1 || ny < 1)) throw ConfigError("mesh.nx, mesh.ny: must be at least 1");
    if (!(extent.x1 > extent.x0) || !(extent.y1 > extent.y0)) throw ConfigError("mesh.x0..mesh.y1: degenerate extent");
    if (band_factor < 1) throw ConfigError("mesh.band_factor: must be at least 1");
    if (degree > 6) throw ConfigError("dg.degree: supported range is 0..6");
    if (eta < 0.0) throw ConfigError("dg.eta: must be non-negative");
    if (method != "cn" && method != "lf" && method != "ds") throw ConfigError("time.method: expected cn, lf or ds");
    if (!(tau > 0.0)) throw ConfigError("time.tau: must be positive");
    if (!(T >= 0.0)) throw ConfigError("time.T: must be non-negative");
    if (method == "ds" && layers < 1) throw ConfigError("split.layers: must be at least 1 for method ds");
    if (subdomains < 1) throw ConfigError("split.subdomains: must be at least 1");
    if (!(tol > 0.0)) throw ConfigError("solver.tol: must be positive");
    if (maxit < 1) throw ConfigError("solver.maxit: must be at least 1");
    parse_preconditioner(preconditioner);
    if (reference != "none" && reference != "exact" && reference != "refined_lf" && reference != "fine_tau") {
        throw ConfigError("reference.kind: expected none, exact, refined_lf or fine_tau");
    }
    if (reference == "exact" && exact == "none") throw ConfigError("reference.kind: exact requires problem.exact");
    if (reference_factor < 1) throw ConfigError("reference.factor: must be at least 1");
    for (const auto& [key, spec] : {std::pair{"problem.u0", u0}, std::pair{"problem.v0", v0},
                                    std::pair{"problem.f", f}, std::pair{"problem.g", g}}) {
        try {
            parse_data(spec);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(key) + ": " + e.what());
        }
    }
    if (exact != "none") parse_data(exact);
    try {
        const Form k = parse_form(kappa);
        if (k.name == "constant") numeric_args(k, 1);
        else if (k.name == "triangle_region") numeric_args(k, 8);
        else if (k.name != "tags" || k.args.empty()) throw ConfigError("unknown form '" + k.name + "'");
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("mesh.kappa: ") + e.what());
    }
    try {
        const Form d = parse_form(dirichlet);
        if (d.name == "all" || d.name == "none") numeric_args(d, 0);
        else if (d.name == "x_eq" || d.name == "y_eq") numeric_args(d, 1);
        else if (d.name != "tags" || d.args.empty()) throw ConfigError("unknown form '" + d.name + "'");
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("mesh.dirichlet: ") + e.what());
    }
}

RunConfig parse_config(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line, section;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("malformed section header", number);
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", number);
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        try {
            base.set(key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ParseError(e.what(), number);
        }
    }
    return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string format_config(const RunConfig& config) {
    std::ostringstream out;
    std::string section;
    for (const auto& [key, value] : config.entries()) {
        const auto dot = key.find('.');
        const std::string s = key.substr(0, dot);
        if (s != section) {
            out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
            section = s;
        }
        out << key.substr(dot + 1) << " = " << value << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// data

double window_profile(double y) {
    auto s = [](double t) { return t * t * t * (t * (6.0 * t - 15.0) + 10.0); };
    if (y <= 0.5 || y >= 3.5) return 0.0;
    if (y >= 1.0 && y <= 3.0) return 1.0;
    if (y < 1.0) return s((y - 0.5) / 0.5);
    return s((3.5 - y) / 0.5);
}

double standing_wave_u(Point x, double t) {
    using std::numbers::pi;
    return std::cos(std::numbers::sqrt2 * pi * t) * std::sin(pi * x.x) * std::sin(pi * x.y);
}

double standing_wave_v(Point x, double t) {
    using std::numbers::pi;
    const double w = std::numbers::sqrt2 * pi;
    return -w * std::sin(w * t) * std::sin(pi * x.x) * std::sin(pi * x.y);
}

SpaceTimeFunction parse_data(const std::string& spec, int component) {
    const Form form = parse_form(spec);
    if (form.name == "zero" || form.name == "none") {
        if (!form.args.empty()) throw ConfigError("zero takes no arguments");
        return {};
    }
    if (form.name == "constant") {
        const double c = numeric_args(form, 1)[0];
        return [c](Point, double) { return c; };
    }
    if (form.name == "standing_wave") {
        numeric_args(form, 0);
        return component == 0 ? SpaceTimeFunction(standing_wave_u) : SpaceTimeFunction(standing_wave_v);
    }
    if (form.name == "window_sine") {
        const double omega = numeric_args(form, 1)[0];
        if (!(omega > 0.0)) throw ConfigError("window_sine: omega must be positive");
        return [omega](Point x, double t) { return std::sin(t / omega) * window_profile(x.y); };
    }
    if (form.name == "gaussian") {
        const auto a = numeric_args(form, 3);
        return [a](Point x, double) {
            const double dx = x.x - a[0], dy = x.y - a[1];
            return std::exp(-(dx * dx + dy * dy) / (a[2] * a[2]));
        };
    }
    throw ConfigError("unknown data form '" + form.name + "'");
}

Mesh build_mesh(const RunConfig& config) {
    std::vector<std::string> warnings;
    return build_mesh_impl(config, warnings);
}

namespace {

Mesh timed_mesh(const RunConfig& config, double& seconds, std::vector<std::string>& warnings) {
    const auto t = clock_type::now();
    Mesh m = build_mesh_impl(config, warnings);
    seconds = seconds_since(t);
    return m;
}

SpaceFunction at_zero(const SpaceTimeFunction& f) {
    if (!f) return {};
    return [f](Point x) { return f(x, 0.0); };
}

}  // namespace

Setup::Setup(const RunConfig& c)
    : config(c), mesh_seconds(0.0), mesh((c.validate(), timed_mesh(c, mesh_seconds, warnings))), space(mesh, c.degree) {
    data.u0 = at_zero(parse_data(c.u0, 0));
    data.v0 = at_zero(parse_data(c.v0, 1));
    data.f = parse_data(c.f);
    data.g = parse_data(c.g);
    if (c.exact != "none") {
        exact_u = parse_data(c.exact, 0);
        exact_v = parse_data(c.exact, 1);
    }
}

// ---------------------------------------------------------------------------
// simulation

namespace {

SolverOptions solver_options(const RunConfig& c) {
    SolverOptions s;
    s.tol = c.tol;
    s.maxit = c.maxit;
    return s;
}

double eta_for(const RunConfig& c) { return c.eta > 0.0 ? c.eta : default_penalty(c.degree); }

class StepWriter {
public:
    StepWriter(const Setup& s) : setup_(s) {
        const RunConfig& c = s.config;
        if (!c.energy.empty()) {
            energy_.open(c.energy);
            if (!energy_) throw ConfigError("output.energy: cannot open " + c.energy);
            energy_ << "step,time,energy\n" << std::setprecision(17);
        }
    }

    bool wants_state(std::size_t step) const {
        const RunConfig& c = setup_.config;
        return energy_.is_open() || (!c.vtk.empty() && c.snapshot_every > 0 && step % c.snapshot_every == 0);
    }

    void write(const State& s, const Discretization* global, bool leapfrog) {
        const RunConfig& c = setup_.config;
        if (energy_.is_open() && global) {
            const double e = leapfrog ? leapfrog_energy(*global, s) : cn_energy(*global, s);
            energy_ << s.step << ',' << s.time() << ',' << e << '\n';
        }
        if (!c.vtk.empty() && c.snapshot_every > 0 && s.step % c.snapshot_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "_%06zu.vtk", s.step);
            write_vtk(Field(setup_.space, s.u), c.vtk + name, "u");
        }
    }

private:
    const Setup& setup_;
    std::ofstream energy_;
};

}  // namespace

Simulation simulate(const Setup& setup) {
    const RunConfig& c = setup.config;
    Simulation sim;
    const auto [steps, tau] = time_grid(c.tau, c.T);
    if (std::abs(tau - c.tau) > 1e-14 * c.tau) {
        sim.warnings.push_back("tau adjusted from " + fmt(c.tau) + " to " + fmt(tau) + " so that T/tau is an integer");
    }
    sim.tau = tau;
    sim.steps = steps;
    StepWriter writer(setup);
    const PreconditionerKind pk = parse_preconditioner(c.preconditioner);
    const double eta = eta_for(c);

    if (c.method == "cn" || c.method == "lf") {
        auto t = clock_type::now();
        const Discretization d = make_global_discretization(setup.space, eta);
        State s = initial_state(d, setup.data, tau);
        const bool lf = c.method == "lf";
        std::unique_ptr<CrankNicolson> cn;
        std::unique_ptr<Leapfrog> leap;
        if (lf) {
            leap = std::make_unique<Leapfrog>(d, tau, true);
            leap->set_reference_norm(std::max(1.0, std::sqrt(dot(s.u, s.u) + dot(s.v, s.v))));
        } else {
            cn = std::make_unique<CrankNicolson>(d, tau, solver_options(c), pk);
        }
        sim.setup_seconds = seconds_since(t);
        t = clock_type::now();
        if (writer.wants_state(0)) writer.write(s, &d, lf);
        for (std::size_t n = 0; n < steps; ++n) {
            if (lf) {
                leap->step(s, setup.data);
            } else {
                sim.iterations += cn->step(s, setup.data).iterations;
            }
            if (writer.wants_state(s.step)) writer.write(s, &d, lf);
        }
        sim.step_seconds = seconds_since(t);
        sim.final = std::move(s);
        return sim;
    }

    // splitting
    auto t = clock_type::now();
    const OwnerMap owner = partition_cells(setup.mesh, c.subdomains, c.seed);
    const SubdomainLayout layout = build_layout(setup.mesh, owner, c.layers);
    sim.warnings.insert(sim.warnings.end(), layout.warnings.begin(), layout.warnings.end());
    SplitOptions so;
    so.solver = solver_options(c);
    so.preconditioner = pk;
    so.eta = eta;
    so.workers = c.workers;
    so.debug_checks = c.debug_checks;
    SplitState split = ds_init(setup.space, layout, setup.data, tau, so);
    std::unique_ptr<Discretization> global;
    if (!c.energy.empty()) global = std::make_unique<Discretization>(make_global_discretization(setup.space, eta));
    sim.setup_seconds = seconds_since(t);

    std::ofstream diag;
    if (!c.diagnostics.empty()) {
        diag.open(c.diagnostics);
        if (!diag) throw ConfigError("output.diagnostics: cannot open " + c.diagnostics);
        diag << std::setprecision(17);
        write_diagnostics_header(diag, layout.count());
    }
    t = clock_type::now();
    if (writer.wants_state(0)) writer.write(assemble_global(split), global.get(), false);
    for (std::size_t n = 0; n < steps; ++n) {
        const StepDiagnostics d = ds_step(split, setup.data);
        for (std::size_t it : d.iterations) sim.iterations += it;
        if (diag.is_open()) write_diagnostics_row(diag, d);
        if (writer.wants_state(split.step)) writer.write(assemble_global(split), global.get(), false);
    }
    sim.step_seconds = seconds_since(t);
    sim.final = assemble_global(split);
    return sim;
}

// ---------------------------------------------------------------------------
// references and errors

namespace {

/// Coefficients on the refined space of a coarse field (exact: children are
/// affine sub-triangles, so parent polynomials are reproduced).
std::vector<double> prolongate(const BrokenSpace& coarse, std::span<const double> u, const BrokenSpace& fine) {
    const std::size_t nd = fine.dofs_per_cell();
    const QuadratureRule& rule = fine.volume_rule();
    const auto& table = fine.volume_values();
    std::vector<double> out(fine.num_dofs(), 0.0);
    for (std::size_t c = 0; c < fine.mesh().num_cells(); ++c) {
        const std::size_t parent = c / 4;
        const auto block = u.subspan(coarse.block(parent), nd);
        double* dst = out.data() + fine.block(c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double val = evaluate_unchecked(coarse, block, parent, fine.to_physical(c, rule.points[q]));
            for (std::size_t i = 0; i < nd; ++i) dst[i] += rule.weights[q] * val * table[q * nd + i];
        }
    }
    return out;
}

struct Norms {
    double l2_u_err = 0, l2_u_ref = 0;        // squared
    double comb_err = 0, comb_ref = 0;        // squared
};

Norms discrete_norms(const SwipOperator& op, std::span<const double> u, std::span<const double> v,
                     std::span<const double> ur, std::span<const double> vr) {
    const std::size_t n = op.size();
    std::vector<double> eu(n), ev(n);
    for (std::size_t i = 0; i < n; ++i) {
        eu[i] = u[i] - ur[i];
        ev[i] = v[i] - vr[i];
    }
    Norms out;
    double evv = 0, vrr = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out.l2_u_err += op.mass[i] * eu[i] * eu[i];
        out.l2_u_ref += op.mass[i] * ur[i] * ur[i];
        evv += op.mass[i] * ev[i] * ev[i];
        vrr += op.mass[i] * vr[i] * vr[i];
    }
    const double ae = a_norm(op, eu), ar = a_norm(op, ur);
    out.comb_err = ae * ae + evv;
    out.comb_ref = ar * ar + vrr;
    return out;
}

double safe_ratio(double num, double den) { return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num); }

}  // namespace

Reference compute_reference(const Setup& setup) {
    const RunConfig& c = setup.config;
    Reference ref;
    ref.kind = c.reference;
    const auto t = clock_type::now();
    if (c.reference == "refined_lf") {
        RunConfig fc = c;
        fc.refine += 1;
        fc.method = "lf";
        fc.csv.clear();
        fc.vtk.clear();
        fc.energy.clear();
        fc.diagnostics.clear();
        ref.fine = std::make_unique<Setup>(fc);
        const auto [steps, tau] = time_grid(c.tau, c.T);
        const Discretization d = make_global_discretization(ref.fine->space, eta_for(c));
        double sub = c.reference_tau;
        if (sub <= 0.0) {
            const double limit = leapfrog_stable_step(d.op);
            sub = tau / std::ceil(tau / limit);
        }
        RunOptions opts;
        ref.state = run(Method::Leapfrog, d, ref.fine->data, sub, c.T, opts).final;
    } else if (c.reference == "fine_tau") {
        const auto [steps, tau] = time_grid(c.tau, c.T);
        const Discretization d = make_global_discretization(setup.space, eta_for(c));
        RunOptions opts;
        opts.solver = solver_options(c);
        opts.preconditioner = parse_preconditioner(c.preconditioner);
        ref.state = run(Method::CrankNicolson, d, setup.data, tau / static_cast<double>(c.reference_factor), c.T, opts).final;
    }
    ref.seconds = seconds_since(t);
    return ref;
}

void evaluate_errors(const Setup& setup, const State& state, const Reference& ref, ErrorReport& report) {
    const RunConfig& c = setup.config;
    report.reference = ref.kind;
    report.reference_seconds = ref.seconds;
    if (ref.kind == "none") return;
    if (ref.kind == "exact") {
        // L2 error of u against the exact function with an over-integrating rule
        const double time = state.time();
        const QuadratureRule rule = triangle_rule(2 * c.degree + 6);
        const std::size_t nd = setup.space.dofs_per_cell();
        double err = 0.0, nrm = 0.0;
        for (std::size_t cell = 0; cell < setup.mesh.num_cells(); ++cell) {
            const double det = std::abs(setup.space.geometry(cell).det);
            const auto block = std::span<const double>(state.u).subspan(setup.space.block(cell), nd);
            for (std::size_t q = 0; q < rule.points.size(); ++q) {
                const Point x = setup.space.to_physical(cell, rule.points[q]);
                const double ue = setup.exact_u(x, time);
                const double e = evaluate_unchecked(setup.space, block, cell, x) - ue;
                err += rule.weights[q] * det * e * e;
                nrm += rule.weights[q] * det * ue * ue;
            }
        }
        report.rel_l2_u = safe_ratio(err, nrm);
        const SwipOperator op = assemble_global_swip(setup.space, eta_for(c));
        const auto pu = l2_project(setup.space, [&](Point x) { return setup.exact_u(x, time); }).values;
        const auto pv = l2_project(setup.space, [&](Point x) { return setup.exact_v(x, time); }).values;
        const Norms n = discrete_norms(op, state.u, state.v, pu, pv);
        report.rel_combined = safe_ratio(n.comb_err, n.comb_ref);
        return;
    }
    if (ref.kind == "refined_lf") {
        const BrokenSpace& fine = ref.fine->space;
        const auto u = prolongate(setup.space, state.u, fine);
        const auto v = prolongate(setup.space, state.v, fine);
        const SwipOperator op = assemble_global_swip(fine, eta_for(c));
        const Norms n = discrete_norms(op, u, v, ref.state.u, ref.state.v);
        report.rel_l2_u = safe_ratio(n.l2_u_err, n.l2_u_ref);
        report.rel_combined = safe_ratio(n.comb_err, n.comb_ref);
        return;
    }
    const SwipOperator op = assemble_global_swip(setup.space, eta_for(c));
    const Norms n = discrete_norms(op, state.u, state.v, ref.state.u, ref.state.v);
    report.rel_l2_u = safe_ratio(n.l2_u_err, n.l2_u_ref);
    report.rel_combined = safe_ratio(n.comb_err, n.comb_ref);
}

namespace {

ErrorReport base_report(const Setup& setup, const Simulation& sim) {
    const RunConfig& c = setup.config;
    ErrorReport r;
    r.method = c.method;
    r.cells = setup.mesh.num_cells();
    r.dofs = setup.space.num_dofs();
    r.h_min = setup.mesh.min_diameter();
    r.h_max = setup.mesh.max_diameter();
    r.tau = sim.tau;
    r.steps = sim.steps;
    r.subdomains = c.method == "ds" ? c.subdomains : 1;
    r.layers = c.method == "ds" ? c.layers : 0;
    r.degree = c.degree;
    r.mesh_seconds = setup.mesh_seconds;
    r.setup_seconds = sim.setup_seconds;
    r.step_seconds = sim.steps ? sim.step_seconds / static_cast<double>(sim.steps) : 0.0;
    r.iterations = sim.iterations;
    r.warnings = setup.warnings;
    r.warnings.insert(r.warnings.end(), sim.warnings.begin(), sim.warnings.end());
    return r;
}

void write_outputs(const Setup& setup, const State& final, const ErrorReport& report) {
    const RunConfig& c = setup.config;
    if (!c.csv.empty()) write_reports_csv(c.csv, {report});
    if (!c.coefficients.empty()) write_coefficients_csv(Field(setup.space, final.u), c.coefficients);
}

double observed_order(double e_coarse, double e_fine, double ratio) {
    if (!(e_coarse > 0.0) || !(e_fine > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return std::log(e_coarse / e_fine) / std::log(ratio);
}

void fill_orders(std::vector<ConvergenceRow>& rows) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        rows[i].order_u = observed_order(rows[i - 1].report.rel_l2_u, rows[i].report.rel_l2_u, 2.0);
        rows[i].order_combined = observed_order(rows[i - 1].report.rel_combined, rows[i].report.rel_combined, 2.0);
    }
}

}  // namespace

ErrorReport run_experiment(const RunConfig& config) {
    const auto t = clock_type::now();
    Setup setup(config);
    const Simulation sim = simulate(setup);
    ErrorReport report = base_report(setup, sim);
    const Reference ref = compute_reference(setup);
    evaluate_errors(setup, sim.final, ref, report);
    report.total_seconds = seconds_since(t);
    write_outputs(setup, sim.final, report);
    return report;
}

std::vector<ConvergenceRow> converge_time(const RunConfig& config, std::size_t levels) {
    if (levels < 2) throw ConfigError("converge: at least two levels are required");
    std::vector<ConvergenceRow> rows;
    RunConfig c = config;
    c.csv.clear();
    // one reference for all levels, tied to the finest step
    RunConfig ref_config = config;
    ref_config.tau = config.tau / std::pow(2.0, static_cast<double>(levels - 1));
    Setup ref_setup(ref_config);
    const Reference ref = compute_reference(ref_setup);
    for (std::size_t l = 0; l < levels; ++l) {
        c.tau = config.tau / std::pow(2.0, static_cast<double>(l));
        const auto t = clock_type::now();
        Setup setup(c);
        const Simulation sim = simulate(setup);
        ConvergenceRow row;
        row.report = base_report(setup, sim);
        evaluate_errors(setup, sim.final, ref, row.report);
        row.report.total_seconds = seconds_since(t);
        rows.push_back(std::move(row));
    }
    fill_orders(rows);
    if (!config.csv.empty()) {
        std::vector<ErrorReport> reports;
        for (const auto& r : rows) reports.push_back(r.report);
        write_reports_csv(config.csv, reports);
    }
    return rows;
}

std::vector<ConvergenceRow> converge_space(const RunConfig& config, std::size_t levels) {
    if (levels < 2) throw ConfigError("converge: at least two levels are required");
    if (config.exact == "none") throw ConfigError("problem.exact: spatial convergence needs an exact solution");
    std::vector<ConvergenceRow> rows;
    RunConfig c = config;
    c.csv.clear();
    c.reference = "exact";
    for (std::size_t l = 0; l < levels; ++l) {
        c.nx = config.nx << l;
        c.ny = config.ny << l;
        rows.push_back({run_experiment(c)});
    }
    fill_orders(rows);
    if (!config.csv.empty()) {
        std::vector<ErrorReport> reports;
        for (const auto& r : rows) reports.push_back(r.report);
        write_reports_csv(config.csv, reports);
    }
    return rows;
}

std::vector<CompareReport> compare_to_cn(const RunConfig& config, const std::vector<std::size_t>& layers) {
    RunConfig cn_config = config;
    cn_config.method = "cn";
    cn_config.csv.clear();
    Setup cn_setup(cn_config);
    const Simulation cn_sim = simulate(cn_setup);
    ErrorReport cn_report = base_report(cn_setup, cn_sim);
    const Reference ref = compute_reference(cn_setup);
    evaluate_errors(cn_setup, cn_sim.final, ref, cn_report);
    const SwipOperator op = assemble_global_swip(cn_setup.space, eta_for(config));

    std::vector<CompareReport> out;
    for (std::size_t l : layers) {
        RunConfig c = config;
        c.method = "ds";
        c.layers = l;
        c.csv.clear();
        Setup setup(c);
        const Simulation sim = simulate(setup);
        CompareReport row;
        row.layers = l;
        row.cn = cn_report;
        row.ds = base_report(setup, sim);
        evaluate_errors(setup, sim.final, ref, row.ds);
        const Norms n = discrete_norms(op, sim.final.u, sim.final.v, cn_sim.final.u, cn_sim.final.v);
        const double au_ref = a_norm(op, cn_sim.final.u);
        std::vector<double> eu(op.size());
        double ev = 0.0, vr = 0.0;
        for (std::size_t i = 0; i < op.size(); ++i) {
            eu[i] = sim.final.u[i] - cn_sim.final.u[i];
            const double dv = sim.final.v[i] - cn_sim.final.v[i];
            ev += op.mass[i] * dv * dv;
            vr += op.mass[i] * cn_sim.final.v[i] * cn_sim.final.v[i];
        }
        const double au = a_norm(op, eu);
        row.rel_a_u = au_ref > 0.0 ? au / au_ref : au;
        row.rel_l2_v = safe_ratio(ev, vr);
        row.rel_combined = safe_ratio(n.comb_err, n.comb_ref);
        out.push_back(std::move(row));
    }
    if (!config.csv.empty()) {
        std::vector<ErrorReport> reports{cn_report};
        for (const auto& r : out) reports.push_back(r.ds);
        write_reports_csv(config.csv, reports);
    }
    return out;
}

// ---------------------------------------------------------------------------
// output

void write_report_header(std::ostream& out) {
    out << "method,cells,dofs,h_min,h_max,tau,steps,subdomains,layers,degree,reference,rel_l2_u,rel_combined,"
           "mesh_s,setup_s,step_s,total_s,reference_s,iterations\n";
}

void write_report_row(std::ostream& out, const ErrorReport& r) {
    out << std::setprecision(10) << r.method << ',' << r.cells << ',' << r.dofs << ',' << r.h_min << ',' << r.h_max
        << ',' << r.tau << ',' << r.steps << ',' << r.subdomains << ',' << r.layers << ',' << r.degree << ','
        << r.reference << ',' << r.rel_l2_u << ',' << r.rel_combined << ',' << r.mesh_seconds << ','
        << r.setup_seconds << ',' << r.step_seconds << ',' << r.total_seconds << ',' << r.reference_seconds << ','
        << r.iterations << '\n';
}

void write_reports_csv(const std::string& path, const std::vector<ErrorReport>& reports) {
    std::ofstream out(path);
    if (!out) throw ConfigError("output.csv: cannot open " + path);
    write_report_header(out);
    for (const auto& r : reports) write_report_row(out, r);
}

void write_convergence_table(std::ostream& out, const std::vector<ConvergenceRow>& rows) {
    out << std::left << std::setw(8) << "method" << std::setw(10) << "cells" << std::setw(14) << "h_min"
        << std::setw(14) << "tau" << std::setw(14) << "rel_l2_u" << std::setw(10) << "order" << std::setw(14)
        << "rel_comb" << "order\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(8) << r.report.method << std::setw(10) << r.report.cells << std::setw(14)
            << std::setprecision(6) << r.report.h_min << std::setw(14) << r.report.tau << std::setw(14)
            << r.report.rel_l2_u << std::setw(10) << std::setprecision(3) << r.order_u << std::setw(14)
            << std::setprecision(6) << r.report.rel_combined << std::setprecision(3) << r.order_combined << '\n';
    }
}

void write_compare_table(std::ostream& out, const std::vector<CompareReport>& rows) {
    out << std::left << std::setw(8) << "layers" << std::setw(16) << "rel_a_u" << std::setw(16) << "rel_l2_v"
        << std::setw(16) << "rel_combined" << std::setw(16) << "ds_rel_l2_u" << "cn_rel_l2_u\n";
    for (const auto& r : rows) {
        out << std::left << std::setprecision(6) << std::setw(8) << r.layers << std::setw(16) << r.rel_a_u
            << std::setw(16) << r.rel_l2_v << std::setw(16) << r.rel_combined << std::setw(16) << r.ds.rel_l2_u
            << r.cn.rel_l2_u << '\n';
    }
}

int exit_code(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const UnsupportedElementError*>(&e))
        return 2;
    if (dynamic_cast<const SolverError*>(&e)) return 3;
    if (dynamic_cast<const InstabilityError*>(&e)) return 4;
    return 1;
}

}  // namespace dsdg
