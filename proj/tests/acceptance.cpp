// Runs every acceptance criterion through the shipped configs and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>

#include "cns/harness.hpp"

#ifndef CNS_ACCEPTANCE_DIR
#error "CNS_ACCEPTANCE_DIR must point at configs/acceptance"
#endif

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Run {
    cns::ExperimentResult result;
    double seconds = 0.0;
};

std::string config_path(const std::string& file) { return std::string(CNS_ACCEPTANCE_DIR) + "/" + file; }

std::map<std::string, Run>& cache() {
    static std::map<std::string, Run> c;
    return c;
}

/// Each config runs once; several criteria may read the same run.
const Run& run_config(const std::string& file) {
    auto it = cache().find(file);
    if (it != cache().end()) return it->second;
    const auto t0 = Clock::now();
    auto cfg = cns::load_config(config_path(file));
    Run r;
    r.result = cns::run_experiment(cfg);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return cache().emplace(file, std::move(r)).first->second;
}

const cns::Json* gate(const Run& r, const std::string& name) {
    for (const auto& g : r.result.summary["gates"])
        if (g["name"] == name) return &g;
    return nullptr;
}

std::string fmt(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.6g", v);
    return b;
}

double value_of(const cns::Json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

/// All named gates pass; the detail lists value vs threshold for each.
Outcome gates(const Run& r, std::initializer_list<const char*> names) {
    Outcome o{true, {}};
    for (const char* n : names) {
        const auto* g = gate(r, n);
        if (!g) {
            o.pass = false;
            o.detail += std::string(n) + "=missing ";
            continue;
        }
        o.pass = o.pass && (*g)["pass"].get<bool>();
        o.detail += std::string(n) + "=" + fmt(value_of((*g)["value"])) + " (limit " +
                    fmt(value_of((*g)["threshold"])) + ") ";
    }
    if (r.result.summary["status"] == "fault") {
        o.pass = false;
        o.detail += "fault: " + r.result.summary["fault"].get<std::string>();
    }
    return o;
}

Outcome within_runtime(Outcome o, const Run& r, double limit) {
    o.detail += "runtime=" + fmt(r.seconds) + "s (limit " + fmt(limit) + "s)";
    o.pass = o.pass && r.seconds <= limit;
    return o;
}

Outcome criterion_mass() {
    const auto& r = run_config("01-02-05-deterministic.json");
    return within_runtime(gates(r, {"mass"}), r, 60.0);
}

Outcome criterion_max_principle() { return gates(run_config("01-02-05-deterministic.json"), {"max_principle"}); }

Outcome criterion_consumption() {
    return gates(run_config("03-consumption-decay.json"), {"consumption_error", "order_ratio"});
}

Outcome criterion_transport() {
    auto o = gates(run_config("04-transport.json"), {"transport_error"});
    const auto& m = run_config("04-transport.json").result.summary["reports"]["manufactured"];
    const double crossings = m["crossings"].get<double>();
    o.detail += "crossings=" + fmt(crossings);
    o.pass = o.pass && std::abs(crossings - 1.0) < 1e-9;
    return o;
}

Outcome criterion_budget() {
    const auto& r = run_config("01-02-05-deterministic.json");
    auto o = gates(r, {"budget"});
    const auto& c = r.result.summary["constants"];
    const double l0 = c["lambda0"].get<double>(), c0 = c["c0_linf"].get<double>();
    // the paper's formulas, evaluated here without the library
    const double l1 = std::min(1.0 / 24.0, 2.0 - l0);
    const double l2 = 2.0 + 16.0 * c0 / (2.0 - l0);
    const bool verbatim = c["lambda1"].get<double>() == l1 && c["lambda2"].get<double>() == l2;
    const bool frozen = !c["c_budget_calibrated"].get<bool>();
    o.detail += "lambda1=" + fmt(l1) + " lambda2=" + fmt(l2) + (frozen ? " C_budget frozen" : " C_budget NOT frozen");
    o.pass = o.pass && verbatim && frozen;
    return o;
}

Outcome criterion_lambda0() {
    const double closed = 1.0 / (2187.0 * 386.0 * 386.0);
    const double reported = cns::lambda0_threshold(1.0);
    const bool digits = std::abs(reported - closed) <= 5e-13 * closed;
    const auto grad = cns::check_hypotheses(cns::load_config(config_path("06-hypotheses-gradient.json")));
    const auto mult = cns::check_hypotheses(cns::load_config(config_path("06-hypotheses-multiplicative.json")));
    Outcome o;
    o.pass = digits && grad.c0_linf == 1.0 && mult.c0_linf == 1.0 && grad.lambda0_estimate > grad.lambda0_threshold &&
             !grad.lambda0_pass && !grad.pass() && mult.lambda0_pass && mult.pass();
    o.detail = "threshold=" + fmt(reported) + " closed-form=" + fmt(closed) + " gradient estimate=" +
               fmt(grad.lambda0_estimate) + (grad.pass() ? " (PASSED)" : " (FAILED)") +
               " multiplicative estimate=" + fmt(mult.lambda0_estimate) + (mult.pass() ? " (PASSED)" : " (FAILED)");
    return o;
}

Outcome criterion_uniqueness() {
    return gates(run_config("07-uniqueness.json"), {"twin_identical", "a0_scaling", "gronwall_ratio"});
}

Outcome criterion_jumps() {
    const auto& r = run_config("08-09-noise-statistics.json");
    return within_runtime(gates(r, {"jump_second_moment", "jump_martingale"}), r, 120.0);
}

Outcome criterion_ito() { return gates(run_config("08-09-noise-statistics.json"), {"ito_isometry"}); }

Outcome criterion_convergence() {
    const auto& r = run_config("10-convergence.json");
    return within_runtime(gates(r, {"convergence_decreasing", "no_fault"}), r, 300.0);
}

Outcome criterion_escape() {
    const auto& r = run_config("11-escape.json");
    auto o = gates(r, {"escape_monotone", "escape_largest_D"});
    const auto& e = r.result.summary["reports"]["escape"];
    const bool shape = e["trajectories"].get<int>() == 100 && e["D_list"].size() == 3;
    o.pass = o.pass && shape;
    o.detail += "fractions=" + e["fractions"].dump();
    return o;
}

Outcome criterion_moments() {
    return gates(run_config("12-moments.json"),
                 {"moments_finite_m32", "moments_finite_m64", "m_stability_m32_m64", "no_fault_m32", "no_fault_m64"});
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"1 mass conservation", criterion_mass},
        {"2 maximum principle", criterion_max_principle},
        {"3 exact consumption decay", criterion_consumption},
        {"4 exact transport", criterion_transport},
        {"5 entropy-energy budget", criterion_budget},
        {"6 lambda0 gate", criterion_lambda0},
        {"7 pathwise uniqueness", criterion_uniqueness},
        {"8 jump-noise statistics", criterion_jumps},
        {"9 Ito isometry", criterion_ito},
        {"10 Galerkin convergence", criterion_convergence},
        {"11 escape probability", criterion_escape},
        {"12 moment finiteness", criterion_moments},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << "  " << o.detail << std::endl;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
    return failures == 0 ? 0 : 1;
}
