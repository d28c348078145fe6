#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "energy.hpp"
#include "flow.hpp"
#include "grid.hpp"
#include "mobility.hpp"
#include "solver.hpp"

namespace jkoflow {

/// Thrown for unreadable or invalid configurations. what() lists every
/// problem found, one per line.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), problems_(std::move(problems))
    {
    }
    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p)
    {
        std::string s;
        for (const auto& line : p) s += (s.empty() ? "" : "\n") + line;
        return s;
    }
    std::vector<std::string> problems_;
};

struct MobilityChoice {
    std::string kind = "linear";  // linear | power | bounded
    double mbar = 1.0;
    double c = 1.0;
    double alpha = 0.5;
    double alpha1 = 1.0;
    double alpha2 = 1.0;
    double max = 1.0;

    MobilitySpec build() const
    {
        if (kind == "linear") return MobilitySpec::linear(mbar);
        if (kind == "power") return MobilitySpec::power(c, alpha);
        if (kind == "bounded") return MobilitySpec::bounded(c, alpha1, alpha2, max);
        throw ConfigError({"[mobility] kind: unknown mobility '" + kind + "'"});
    }
};

struct EnergyChoice {
    std::string internal = "none";  // none | entropy | power | double-well
    double q = 2.0;
    std::string potential = "zero";  // zero | quadratic | table
    double a = 0.0;
    double center = 0.5;
    std::vector<double> potential_table;
    std::string gradient = "none";  // none | dirichlet
    double theta = 1.0;

    EnergyForm build() const
    {
        EnergyForm f;
        if (internal == "none") f.internal = NoInternal{};
        else if (internal == "entropy") f.internal = Entropy{};
        else if (internal == "power") f.internal = PowerLawInternal{q};
        else if (internal == "double-well") f.internal = DoubleWell{};
        else throw ConfigError({"[energy] internal: unknown internal energy '" + internal + "'"});

        if (potential == "zero") f.potential = ZeroPotential{};
        else if (potential == "quadratic") f.potential = QuadraticPotential{a, center};
        else if (potential == "table") f.potential = TablePotential{potential_table};
        else throw ConfigError({"[energy] potential: unknown potential '" + potential + "'"});

        if (gradient == "none") f.gradient = NoGradient{};
        else if (gradient == "dirichlet") f.gradient = QuadraticDirichlet{theta};
        else throw ConfigError({"[energy] gradient: unknown gradient energy '" + gradient + "'"});
        return f;
    }
};

/// Builtin initial data on [0,1]:
///   cos8       cos(8 pi x) + 1
///   half-cos8  0.5 (cos(8 pi x) + 1)
///   quartic    (x - 0.5)^4 + 0.001
///   constant   value
///   table      equally spaced samples, piecewise linear
struct InitialDatum {
    std::string profile = "constant";
    double value = 1.0;
    std::vector<double> table;

    static const std::vector<std::string>& names()
    {
        static const std::vector<std::string> n{"cos8", "half-cos8", "quartic", "constant",
                                                "table"};
        return n;
    }

    Eigen::VectorXd averages(int nx) const
    {
        using std::numbers::pi;
        if (profile == "cos8") return cell_average([](double x) { return std::cos(8 * pi * x) + 1; }, nx);
        if (profile == "half-cos8") {
            return cell_average([](double x) { return 0.5 * (std::cos(8 * pi * x) + 1); }, nx);
        }
        if (profile == "quartic") {
            return cell_average([](double x) { return std::pow(x - 0.5, 4) + 0.001; }, nx);
        }
        if (profile == "constant") return Eigen::VectorXd::Constant(nx, value);
        if (profile == "table") return cell_average(SampledProfile{table}, nx);
        throw ConfigError({"[initial] profile: unknown initial datum '" + profile + "'"});
    }
};

struct ExperimentConfig {
    std::optional<std::string> preset;
    int nt = 2;
    int nx = 100;
    double tau = 1e-3;
    int steps = 100;
    double epsilon = 1e-8;
    int snapshot_every = 10;
    MobilityChoice mobility;
    EnergyChoice energy;
    InitialDatum initial;
    SolveOptions solver;
    double max_clamped_mass = 1e-6;
    std::filesystem::path out_dir = "out";
    /// Desk-scale factor: nx is divided by it and tau multiplied by it.
    int scale = 1;
    std::uint64_t seed = 0;  // reserved; the core is deterministic

    int scaled_nx() const
    {
        return std::max(2, static_cast<int>(std::lround(static_cast<double>(nx) / scale)));
    }
    double scaled_tau() const { return tau * scale; }

    FlowConfig flow_config() const
    {
        FlowConfig f;
        f.tau = scaled_tau();
        f.steps = steps;
        f.epsilon = epsilon;
        f.grid = GridSpec(nt, scaled_nx());
        f.mobility = mobility.build();
        f.energy = energy.build();
        f.snapshot_every = snapshot_every;
        f.solver = solver;
        f.max_clamped_mass = max_clamped_mass;
        return f;
    }

    /// All validation failures; empty when the configuration is runnable.
    std::vector<std::string> violations() const
    {
        std::vector<std::string> v;
        if (nt < 1) v.push_back("[grid] nt: must be >= 1");
        if (nx < 2) v.push_back("[grid] nx: must be >= 2");
        if (!(tau > 0.0)) v.push_back("[run] tau: must be positive");
        if (steps < 0) v.push_back("[run] steps: must be >= 0");
        if (!(epsilon > 0.0 && epsilon < 1.0)) v.push_back("[run] epsilon: must lie in (0,1)");
        if (snapshot_every < 1) v.push_back("[run] snapshot_every: must be >= 1");
        if (scale < 1) v.push_back("[run] scale: must be >= 1");
        if (!(max_clamped_mass >= 0.0)) v.push_back("[run] max_clamped_mass: must be >= 0");
        try {
            (void)mobility.build();
            if (mobility.kind == "linear" && !(mobility.mbar > 0.0)) {
                v.push_back("[mobility] mbar: must be positive");
            }
            if (mobility.kind == "power") {
                if (!(mobility.c > 0.0)) v.push_back("[mobility] c: must be positive");
                if (!(mobility.alpha > 0.0 && mobility.alpha < 1.0)) {
                    v.push_back("[mobility] alpha: must lie in (0,1)");
                }
            }
            if (mobility.kind == "bounded") {
                if (!(mobility.c > 0.0)) v.push_back("[mobility] c: must be positive");
                if (!(mobility.max > 0.0)) v.push_back("[mobility] max: must be positive");
                for (auto [name, val] : {std::pair{"alpha1", mobility.alpha1},
                                         std::pair{"alpha2", mobility.alpha2}}) {
                    if (!(val > 0.0 && val <= 1.0)) {
                        v.push_back(std::string("[mobility] ") + name + ": must lie in (0,1]");
                    }
                }
                if (epsilon > 0.0 && !(epsilon < 0.5 * mobility.max)) {
                    v.push_back("[run] epsilon: must be below M/2 for a bounded mobility");
                }
            }
        } catch (const ConfigError& e) {
            v.insert(v.end(), e.problems().begin(), e.problems().end());
        }
        try {
            (void)energy.build();
            if (energy.internal == "power" && !(energy.q > 1.0)) {
                v.push_back("[energy] q: must be > 1");
            }
            if (energy.gradient == "dirichlet" && !(energy.theta > 0.0)) {
                v.push_back("[energy] theta: must be positive");
            }
            if (energy.potential == "table" && energy.potential_table.empty()) {
                v.push_back("[energy] potential_table: required for a table potential");
            }
        } catch (const ConfigError& e) {
            v.insert(v.end(), e.problems().begin(), e.problems().end());
        }
        if (std::find(InitialDatum::names().begin(), InitialDatum::names().end(),
                      initial.profile) == InitialDatum::names().end()) {
            v.push_back("[initial] profile: unknown initial datum '" + initial.profile + "'");
        } else if (initial.profile == "table" && initial.table.empty()) {
            v.push_back("[initial] table: required for a table initial datum");
        }
        const auto& s = solver;
        if (!(s.fraction_to_boundary > 0.0 && s.fraction_to_boundary < 1.0)) {
            v.push_back("[solver] fraction_to_boundary: must lie in (0,1)");
        }
        if (!(s.grad_tol_abs > 0.0)) v.push_back("[solver] grad_tol_abs: must be positive");
        if (!(s.grad_tol_rel > 0.0)) v.push_back("[solver] grad_tol_rel: must be positive");
        if (s.max_iter < 1) v.push_back("[solver] max_iter: must be >= 1");
        if (!(s.armijo_slope > 0.0 && s.armijo_slope < 0.5)) {
            v.push_back("[solver] armijo_slope: must lie in (0,1/2)");
        }
        if (!(s.backtrack_factor > 0.0 && s.backtrack_factor < 1.0)) {
            v.push_back("[solver] backtrack_factor: must lie in (0,1)");
        }
        if (!(s.damping_init > 0.0)) v.push_back("[solver] damping_init: must be positive");
        if (!(s.damping_growth > 1.0)) v.push_back("[solver] damping_growth: must be > 1");
        return v;
    }
};

// ---------------------------------------------------------------------------
// Presets of the published experiments. Step counts and snapshot spacing are
// read off the reported figure times.

struct PresetInfo {
    std::string name;
    std::string description;
};

inline const std::vector<PresetInfo>& preset_list()
{
    static const std::vector<PresetInfo> list{
        {"fp-linear", "Fokker-Planck, linear diffusion (q=1), quadratic confinement"},
        {"fp-porous", "Fokker-Planck, porous-medium diffusion (q=2), quadratic confinement"},
        {"cahn-hilliard-a", "Cahn-Hilliard, theta=0.004, tau=0.06"},
        {"cahn-hilliard-b", "Cahn-Hilliard, theta=0.001, tau=0.01"},
        {"thin-film", "thin film (Hele-Shaw) equation, Dirichlet energy"},
    };
    return list;
}

inline std::string known_presets()
{
    std::string s;
    for (const auto& p : preset_list()) s += (s.empty() ? "" : ", ") + p.name;
    return s;
}

inline ExperimentConfig preset_config(const std::string& name)
{
    ExperimentConfig c;
    c.preset = name;
    c.nt = 2;
    if (name == "fp-linear" || name == "fp-porous") {
        c.nx = 300;
        c.tau = 1e-4;
        c.epsilon = 1e-8;
        c.steps = 5000;
        c.snapshot_every = 10;
        c.mobility.kind = "linear";
        c.mobility.mbar = 1.0;
        c.energy.internal = name == "fp-linear" ? "entropy" : "power";
        c.energy.q = 2.0;
        c.energy.potential = "quadratic";
        c.energy.a = 50.0;
        c.energy.center = 0.5;
        c.initial.profile = "cos8";
    } else if (name == "cahn-hilliard-a" || name == "cahn-hilliard-b") {
        const bool a = name == "cahn-hilliard-a";
        c.nx = 200;
        c.epsilon = 1e-9;
        c.tau = a ? 0.06 : 0.01;
        c.steps = a ? 11000 : 10000;
        c.snapshot_every = a ? 100 : 50;
        c.mobility = {"bounded", 1.0, 1.0, 0.5, 1.0, 1.0, 1.0};
        c.energy.internal = "double-well";
        c.energy.gradient = "dirichlet";
        c.energy.theta = a ? 0.004 : 0.001;
        c.initial.profile = "half-cos8";
    } else if (name == "thin-film") {
        c.nx = 400;
        c.epsilon = 1e-12;
        c.tau = 1e-5;
        c.steps = 4000;
        c.snapshot_every = 200;
        c.mobility.kind = "linear";
        c.energy.gradient = "dirichlet";
        c.energy.theta = 1.0;
        c.initial.profile = "quartic";
    } else {
        throw ConfigError({"unknown preset '" + name + "' (known presets: " + known_presets() + ")"});
    }
    c.out_dir = std::filesystem::path("out") / name;
    return c;
}

// ---------------------------------------------------------------------------
// Config files: INI-style key/value text with [sections]. Unknown keys are
// rejected. A top-level `preset = NAME` seeds the defaults.

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema()
{
    static const std::map<std::string, std::set<std::string>> schema{
        {"", {"preset"}},
        {"grid", {"nt", "nx"}},
        {"run",
         {"tau", "steps", "epsilon", "snapshot_every", "scale", "seed", "max_clamped_mass"}},
        {"mobility", {"kind", "mbar", "c", "alpha", "alpha1", "alpha2", "max"}},
        {"energy",
         {"internal", "q", "potential", "a", "center", "potential_table", "gradient", "theta"}},
        {"initial", {"profile", "value", "table"}},
        {"solver",
         {"grad_tol_abs", "grad_tol_rel", "max_iter", "fraction_to_boundary", "armijo_slope",
          "backtrack_factor", "damping_init", "damping_growth"}},
        {"output", {"dir"}},
    };
    return schema;
}

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
bool parse_number(const std::string& text, T& out)
{
    std::istringstream in(trim(text));
    in.imbue(std::locale::classic());
    T v{};
    in >> v;
    if (in.fail() || !(in >> std::ws).eof()) return false;
    out = v;
    return true;
}

inline bool parse_list(const std::string& text, std::vector<double>& out)
{
    std::vector<double> values;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        double v;
        if (!parse_number(item, v)) return false;
        values.push_back(v);
    }
    if (values.empty()) return false;
    out = std::move(values);
    return true;
}

}  // namespace detail

/// Apply the keys of an INI document on top of `base`.
inline ExperimentConfig apply_config(const boost::property_tree::ptree& tree, ExperimentConfig base)
{
    using detail::parse_number;
    std::vector<std::string> problems;
    const auto& schema = detail::config_schema();

    for (const auto& [section, node] : tree) {
        if (node.empty()) {
            if (!section.empty() && schema.count(section)) continue;  // empty section
            if (!schema.at("").count(section)) {
                problems.push_back("unknown top-level key '" + section + "'");
            }
            continue;
        }
        auto it = schema.find(section);
        if (it == schema.end() || section.empty()) {
            problems.push_back("unknown section [" + section + "]");
            continue;
        }
        for (const auto& [key, leaf] : node) {
            if (!it->second.count(key)) problems.push_back("[" + section + "] unknown key '" + key + "'");
        }
    }

    auto text = [&](const std::string& path) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(boost::property_tree::ptree::path_type(path, '.'))) {
            return detail::trim(*v);
        }
        return std::nullopt;
    };
    auto number = [&](const std::string& path, auto& target) {
        if (auto t = text(path)) {
            const auto dot = path.find('.');
            if (!parse_number(*t, target)) {
                problems.push_back("[" + path.substr(0, dot) + "] " + path.substr(dot + 1) +
                                   ": cannot parse '" + *t + "' as a number");
            }
        }
    };
    auto word = [&](const std::string& path, std::string& target) {
        if (auto t = text(path)) target = *t;
    };
    auto list = [&](const std::string& path, std::vector<double>& target) {
        if (auto t = text(path)) {
            const auto dot = path.find('.');
            if (!detail::parse_list(*t, target)) {
                problems.push_back("[" + path.substr(0, dot) + "] " + path.substr(dot + 1) +
                                   ": expected a comma-separated list of numbers");
            }
        }
    };

    ExperimentConfig c = std::move(base);
    number("grid.nt", c.nt);
    number("grid.nx", c.nx);
    number("run.tau", c.tau);
    number("run.steps", c.steps);
    number("run.epsilon", c.epsilon);
    number("run.snapshot_every", c.snapshot_every);
    number("run.scale", c.scale);
    number("run.seed", c.seed);
    number("run.max_clamped_mass", c.max_clamped_mass);
    word("mobility.kind", c.mobility.kind);
    number("mobility.mbar", c.mobility.mbar);
    number("mobility.c", c.mobility.c);
    number("mobility.alpha", c.mobility.alpha);
    number("mobility.alpha1", c.mobility.alpha1);
    number("mobility.alpha2", c.mobility.alpha2);
    number("mobility.max", c.mobility.max);
    word("energy.internal", c.energy.internal);
    number("energy.q", c.energy.q);
    word("energy.potential", c.energy.potential);
    number("energy.a", c.energy.a);
    number("energy.center", c.energy.center);
    list("energy.potential_table", c.energy.potential_table);
    word("energy.gradient", c.energy.gradient);
    number("energy.theta", c.energy.theta);
    word("initial.profile", c.initial.profile);
    number("initial.value", c.initial.value);
    list("initial.table", c.initial.table);
    number("solver.grad_tol_abs", c.solver.grad_tol_abs);
    number("solver.grad_tol_rel", c.solver.grad_tol_rel);
    number("solver.max_iter", c.solver.max_iter);
    number("solver.fraction_to_boundary", c.solver.fraction_to_boundary);
    number("solver.armijo_slope", c.solver.armijo_slope);
    number("solver.backtrack_factor", c.solver.backtrack_factor);
    number("solver.damping_init", c.solver.damping_init);
    number("solver.damping_growth", c.solver.damping_growth);
    if (auto d = text("output.dir")) c.out_dir = *d;

    if (problems.empty()) {
        auto v = c.violations();
        problems.insert(problems.end(), v.begin(), v.end());
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));
    return c;
}

/// Parse INI text. `origin` names the source in error messages.
inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& origin = "<config>")
{
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError({origin + ":" + std::to_string(e.line()) + ": " + e.message()});
    }
    ExperimentConfig base;
    if (auto p = tree.get_optional<std::string>("preset")) {
        const auto name = detail::trim(*p);
        try {
            base = preset_config(name);
        } catch (const ConfigError& e) {
            throw ConfigError({origin + ": " + e.what()});
        }
    }
    return apply_config(tree, std::move(base));
}

/// Resolve a config file path, or a preset name when no such file exists.
inline ExperimentConfig parse_config(const std::string& path_or_preset)
{
    const std::filesystem::path p(path_or_preset);
    if (!std::filesystem::exists(p)) {
        for (const auto& info : preset_list()) {
            if (info.name == path_or_preset) return preset_config(path_or_preset);
        }
        throw ConfigError({"'" + path_or_preset + "' is neither a readable config file nor a "
                           "known preset (known presets: " + known_presets() + ")"});
    }
    std::ifstream in(p);
    if (!in) throw ConfigError({p.string() + ": cannot open config file"});
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), p.string());
}

// ---------------------------------------------------------------------------
// CSV output.

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string snapshot_name(int step)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "snap_%06d.csv", step);
    return buf;
}

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Header `x,u`, one row per cell at the cell center, 17 significant digits.
inline void write_snapshot_csv(const Eigen::VectorXd& profile, const GridSpec& grid,
                               const std::filesystem::path& path)
{
    if (profile.size() != grid.nx) {
        throw std::invalid_argument("write_snapshot_csv: profile must have length nx");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "x,u\n";
    for (int j = 0; j < grid.nx; ++j) {
        out << format_double(grid.cell_center(j)) << ',' << format_double(profile[j]) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

struct SnapshotData {
    std::vector<double> x;
    std::vector<double> u;
};

inline SnapshotData read_snapshot_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "x,u") throw IoError(path.string() + ": bad header");
    SnapshotData d;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError(path.string() + ": malformed row");
        d.x.push_back(std::strtod(line.substr(0, comma).c_str(), nullptr));
        d.u.push_back(std::strtod(line.substr(comma + 1).c_str(), nullptr));
    }
    return d;
}

/// Sibling files of the snapshots: index.csv (step,time) and diagnostics.csv.
inline void write_diagnostics_csv(const Trajectory& traj, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "step,time,mass,energy,action,newton_iters,grad_norm,clamped_mass\n";
    for (std::size_t k = 0; k < traj.diagnostics.size(); ++k) {
        const auto& d = traj.diagnostics[k];
        out << k << ',' << format_double(traj.times[k]) << ',' << format_double(d.mass) << ','
            << format_double(d.energy) << ',' << format_double(d.action) << ','
            << d.newton_iters << ',' << format_double(d.grad_norm) << ','
            << format_double(d.clamped_mass) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------

struct InvariantReport {
    bool passed = true;
    double max_mass_drift = 0.0;  // relative
    SlackReport slack;
    int unconverged_steps = 0;
};

inline InvariantReport check_trajectory(const Trajectory& traj, const FlowConfig& config)
{
    InvariantReport r;
    const double m0 = traj.diagnostics.front().mass;
    for (const auto& d : traj.diagnostics) {
        r.max_mass_drift = std::max(r.max_mass_drift, std::abs(d.mass - m0) / std::abs(m0));
        if (!d.converged) ++r.unconverged_steps;
    }
    r.slack = check_energy_slack(traj, config);
    r.passed = r.max_mass_drift <= 1e-12 && r.slack.passed;
    return r;
}

enum ExitCode : int {
    exit_ok = 0,
    exit_config = 1,
    exit_io = 2,
    exit_solver = 3,
    exit_check = 4,
};

struct ExperimentOutcome {
    int status = exit_ok;
    std::optional<Trajectory> trajectory;
};

/// Run the flow, write snapshots every `snapshot_every` steps plus
/// index.csv and diagnostics.csv, and print one line per snapshot.
inline ExperimentOutcome run_experiment_detailed(const ExperimentConfig& config, std::ostream& log,
                                                 bool check = false)
{
    ExperimentOutcome outcome;
    FlowConfig flow;
    Eigen::VectorXd averages;
    try {
        if (auto v = config.violations(); !v.empty()) throw ConfigError(v);
        flow = config.flow_config();
        validate_mobility(flow.mobility);
        averages = config.initial.averages(flow.grid.nx);
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        outcome.status = exit_config;
        return outcome;
    }

    std::ofstream index;
    try {
        std::filesystem::create_directories(config.out_dir);
        index.open(config.out_dir / "index.csv", std::ios::binary);
        if (!index) throw IoError("cannot open " + (config.out_dir / "index.csv").string());
        index << "step,time\n";
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        outcome.status = exit_io;
        return outcome;
    }

    const auto observer = [&](int k, const Trajectory& t) {
        if (k % flow.snapshot_every != 0) return;
        write_snapshot_csv(t.profiles.back(), flow.grid, config.out_dir / snapshot_name(k));
        index << k << ',' << format_double(t.times.back()) << '\n';
        if (!index) throw IoError("write failed: index.csv");
        const auto& d = t.diagnostics.back();
        log << "step " << k << "  t=" << format_double(t.times.back())
            << "  mass=" << format_double(d.mass) << "  energy=" << format_double(d.energy)
            << "  newton=" << d.newton_iters << (d.converged ? "" : " (not converged)") << '\n';
    };

    try {
        outcome.trajectory = run_flow(flow, averages, observer);
        index.close();
        write_diagnostics_csv(*outcome.trajectory, config.out_dir / "diagnostics.csv");
    } catch (const IoError& e) {
        log << "error: " << e.what() << '\n';
        outcome.status = exit_io;
        return outcome;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        outcome.status = exit_solver;
        return outcome;
    }

    if (check) {
        const auto r = check_trajectory(*outcome.trajectory, flow);
        log << "check: mass drift " << format_double(r.max_mass_drift) << " (limit 1e-12), "
            << "energy slack violation " << format_double(r.slack.max_violation)
            << " at step " << r.slack.worst_step << " (limit 1e-9), " << r.unconverged_steps
            << " unconverged steps: " << (r.passed ? "PASS" : "FAIL") << '\n';
        if (!r.passed) outcome.status = exit_check;
    }
    return outcome;
}

inline int run_experiment(const ExperimentConfig& config, std::ostream& log, bool check = false)
{
    return run_experiment_detailed(config, log, check).status;
}

}  // namespace jkoflow
