#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fdsyn/synthesis.hpp"

namespace fdsyn {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw InputError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

std::vector<double> doubles(const json& j) {
    std::vector<double> out;
    for (const auto& v : j) out.push_back(v.get<double>());
    return out;
}

WeightSpec parse_weight(const json& j, const std::string& where) {
    if (!j.is_object()) throw InputError(where + " must be an object");
    reject_unknown(j, {"num", "den", "constant", "matrix", "dim"}, where);
    if (j.contains("constant")) {
        return WeightSpec::constant(j["constant"].get<double>(), j.value("dim", 1));
    }
    if (j.contains("matrix")) {
        const auto rows = j["matrix"];
        Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c].get<double>();
        }
        return WeightSpec::constant_matrix(m);
    }
    if (j.contains("num") && j.contains("den")) {
        return WeightSpec::scalar_rational(doubles(j["num"]), doubles(j["den"]), j.value("dim", 1));
    }
    throw InputError(where + " needs either constant, matrix, or num/den");
}

MatrixPolynomial parse_polymatrix(const json& j, char variable, const std::string& where) {
    reject_unknown(j, {"coeffs"}, where);
    if (!j.contains("coeffs")) throw InputError(where + " needs a coeffs list");
    MatrixPolynomial mp;
    mp.variable = variable;
    for (const auto& cj : j["coeffs"]) {
        Matrix m(cj.size(), cj.empty() ? 0 : cj[0].size());
        for (std::size_t r = 0; r < cj.size(); ++r) {
            for (std::size_t c = 0; c < cj[r].size(); ++c) m(r, c) = cj[r][c].get<double>();
        }
        mp.coeffs.push_back(std::move(m));
    }
    mp.validate();
    return mp;
}

BoolMatrix parse_mask(const json& j, const std::string& where) {
    BoolMatrix m(j.size(), j.empty() ? 0 : j[0].size());
    for (std::size_t r = 0; r < j.size(); ++r) {
        for (std::size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<bool>();
    }
    if (m.size() == 0) throw InputError(where + " mask must be nonempty");
    return m;
}

}  // namespace

SynthesisConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j,
                   {"objective", "weights", "controller", "grid", "max_iterations", "stop_tol",
                    "stop_abs_tol", "delta_feas", "quadrature", "certify_stability", "initializer",
                    "initial_controller", "dense_factor", "seed", "random_trials", "solver_tol",
                    "solver_max_iterations", "unstable_pole_count"},
                   "config");

    SynthesisConfig cfg;

    const std::string obj = j.value("objective", "hinf-mixed");
    if (obj == "hinf-mixed") {
        cfg.design.objective = Objective::MixedSensHinf;
    } else if (obj == "h2") {
        cfg.design.objective = Objective::H2;
    } else if (obj == "ls-hinf") {
        cfg.design.objective = Objective::LoopshapeHinf;
    } else if (obj == "ls-h2") {
        cfg.design.objective = Objective::LoopshapeH2;
    } else {
        throw InputError("objective must be one of hinf-mixed, h2, ls-hinf, ls-h2");
    }

    if (!j.contains("controller")) throw InputError("config needs a controller section");
    {
        const json& cj = j["controller"];
        reject_unknown(cj,
                       {"order", "outputs", "inputs", "variable", "mask", "mask_X", "mask_Y", "Fx",
                        "Fy", "boundary_poles"},
                       "controller");
        const int n = cj.at("outputs").get<int>();
        const int m = cj.at("inputs").get<int>();
        const int p = cj.at("order").get<int>();
        const std::string var = cj.value("variable", "s");
        if (var != "s" && var != "z") throw InputError("controller variable must be 's' or 'z'");
        MaskKind mask = MaskKind::Full;
        if (cj.contains("mask")) {
            const std::string mk = cj["mask"].get<std::string>();
            if (mk == "full") {
                mask = MaskKind::Full;
            } else if (mk == "diag" || mk == "diagonal") {
                mask = MaskKind::Diagonal;
            } else {
                throw InputError("controller mask must be 'full' or 'diag'");
            }
        }
        cfg.controller = ControllerParametrization::make(n, m, p, var[0], mask);
        if (cj.contains("mask_X")) cfg.controller.mask_X = parse_mask(cj["mask_X"], "mask_X");
        if (cj.contains("mask_Y")) cfg.controller.mask_Y = parse_mask(cj["mask_Y"], "mask_Y");
        if (cj.contains("Fx")) cfg.controller.Fx = parse_polymatrix(cj["Fx"], var[0], "Fx");
        if (cj.contains("Fy")) cfg.controller.Fy = parse_polymatrix(cj["Fy"], var[0], "Fy");
        if (cj.contains("boundary_poles")) cfg.controller.boundary_poles = doubles(cj["boundary_poles"]);
        cfg.controller.validate();
    }

    if (j.contains("weights")) {
        const json& wj = j["weights"];
        reject_unknown(wj, {"W1", "W2", "Ld", "W1_uncertainty", "W2_uncertainty"}, "weights");
        if (wj.contains("W1")) cfg.design.W1 = parse_weight(wj["W1"], "weights.W1");
        if (wj.contains("W2")) cfg.design.W2 = parse_weight(wj["W2"], "weights.W2");
        if (wj.contains("Ld")) cfg.design.Ld = parse_weight(wj["Ld"], "weights.Ld");
        if (wj.contains("W1_uncertainty")) {
            cfg.design.W1_uncertainty = parse_weight(wj["W1_uncertainty"], "weights.W1_uncertainty");
        }
        if (wj.contains("W2_uncertainty")) {
            cfg.design.W2_uncertainty = parse_weight(wj["W2_uncertainty"], "weights.W2_uncertainty");
        }
    }

    if (j.contains("grid")) {
        const json& gj = j["grid"];
        reject_unknown(gj, {"min", "max", "points", "excluded"}, "grid");
        cfg.grid_min = gj.value("min", cfg.grid_min);
        cfg.grid_max = gj.value("max", cfg.grid_max);
        cfg.grid_points = gj.value("points", cfg.grid_points);
        if (gj.contains("excluded")) cfg.excluded = doubles(gj["excluded"]);
    }

    cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
    cfg.stop_tol = j.value("stop_tol", cfg.stop_tol);
    cfg.stop_abs_tol = j.value("stop_abs_tol", cfg.stop_abs_tol);
    cfg.delta_feas = j.value("delta_feas", cfg.delta_feas);
    if (j.contains("quadrature")) {
        const std::string qr = j["quadrature"].get<std::string>();
        if (qr == "trapezoid") {
            cfg.quadrature = QuadratureRule::Trapezoid;
        } else if (qr == "uniform_sum") {
            cfg.quadrature = QuadratureRule::UniformSum;
        } else {
            throw InputError("quadrature must be 'trapezoid' or 'uniform_sum'");
        }
    }
    cfg.design.certify_stability = j.value("certify_stability", cfg.design.certify_stability);
    if (j.contains("initializer")) {
        const std::string init = j["initializer"].get<std::string>();
        if (init == "epsilon_static") {
            cfg.initializer = InitializerKind::EpsilonStatic;
        } else if (init == "user") {
            cfg.initializer = InitializerKind::UserSupplied;
        } else if (init == "random_restart") {
            cfg.initializer = InitializerKind::RandomRestart;
        } else {
            throw InputError("initializer must be epsilon_static, user, or random_restart");
        }
    }
    if (j.contains("initial_controller")) {
        cfg.initial_controller = read_controller_file(j["initial_controller"].get<std::string>());
    }
    cfg.dense_factor = j.value("dense_factor", cfg.dense_factor);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.random_trials = j.value("random_trials", cfg.random_trials);
    cfg.solver_tol = j.value("solver_tol", cfg.solver_tol);
    cfg.solver_max_iterations = j.value("solver_max_iterations", cfg.solver_max_iterations);
    if (j.contains("unstable_pole_count")) {
        for (const auto& v : j["unstable_pole_count"]) {
            cfg.unstable_pole_count.push_back(v.get<int>());
        }
    }
    return cfg;
}

SynthesisConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string config_schema() {
    return R"({
  "objective": "hinf-mixed | h2 | ls-hinf | ls-h2",
  "weights": {
    "W1": {"num": [..], "den": [..], "dim": n} | {"constant": c, "dim": n} | {"matrix": [[..]]},
    "W2": "...", "Ld": "...",
    "W1_uncertainty": "...", "W2_uncertainty": "..."
  },
  "controller": {
    "order": "p", "outputs": "n", "inputs": "m", "variable": "s | z",
    "mask": "full | diag", "mask_X": "[[bool]]", "mask_Y": "[[bool]]",
    "Fx": {"coeffs": ["[[..]] per degree, ascending"]}, "Fy": "...",
    "boundary_poles": "[rad/s]"
  },
  "grid": {"min": 0.01, "max": 100.0, "points": 100, "excluded": []},
  "max_iterations": 50, "stop_tol": 1e-4, "stop_abs_tol": 1e-10, "delta_feas": 1e-8,
  "quadrature": "trapezoid | uniform_sum",
  "certify_stability": true,
  "initializer": "epsilon_static | user | random_restart",
  "initial_controller": "path to a CTRL file",
  "dense_factor": 10, "seed": 0, "random_trials": 8,
  "solver_tol": 1e-8, "solver_max_iterations": 100,
  "unstable_pole_count": "[per-model N_G, default 0]"
})";
}

}  // namespace fdsyn
