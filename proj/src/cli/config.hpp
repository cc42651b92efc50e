#pragma once

// JSON experiment configs for the command-line driver.  Parsing is strict:
// unknown keys anywhere in the document are rejected with a path-qualified
// message, as are type mismatches and out-of-range values.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "isdiff/action.hpp"
#include "isdiff/catalog.hpp"
#include "isdiff/pde1d.hpp"
#include "isdiff/simulate.hpp"

namespace isdiff::cli {

struct ControlChoice {
    enum class Kind { Zero, FromSubsolution, Constant };
    Kind kind = Kind::Zero;
    Vec value;          // Constant only
    std::string label;  // defaults to the kind name
};

struct CheckSettings {
    int t_points = 21;
    int x_points = 101;
    double tolerance = 1e-8;
    bool have_box = false;
    Vec box_lo, box_hi;  // default: problem-derived box
};

struct PdeSettings {
    bool auto_grid = true;
    Grid1D grid;
    std::vector<std::string> solve = {"psi"};  // psi / phi / v0
};

struct ExpansionSettings {
    int steps = 400;
    bool with_mc = true;
    bool have_box = false;
    Vec box_lo, box_hi;
};

struct ExperimentConfig {
    BuiltinProblem problem;
    std::vector<ControlChoice> controls;  // at least one; first is primary
    std::vector<double> epsilons;         // defaults to the problem's eps
    SimulationConfig sim;
    SolverOptions action;
    ExpansionSettings expansion;
    PdeSettings pde;
    CheckSettings check;
    bool compare_with_expansion = true;
    std::string out_dir = "runs/out";
    nlohmann::json echo;  // parsed document, for the manifest
};

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_json(const nlohmann::json& doc);

// Resolve a control choice against the problem (throws ConfigError when a
// subsolution control is requested but the problem has none attached).
ControlPolicy make_policy(const BuiltinProblem& bp, const ControlChoice& choice);

}  // namespace isdiff::cli
