#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "cns/config.hpp"

namespace cns {

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

/// splitmix64 finaliser (a bijection of 64-bit words).
inline std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Per-trajectory seed: mix(master + (index + 1) * 0x9E3779B97F4A7C15) mod 2^64.
/// The golden-ratio increment is odd and the mix is a bijection, so distinct
/// indices under one master seed never collide.
inline std::uint64_t seed_derivation(std::uint64_t master, std::uint64_t index) {
    return splitmix64_mix(master + (index + 1) * 0x9E3779B97F4A7C15ull);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum ExitCode : int { kExitPass = 0, kExitGateFailure = 1, kExitConfigError = 2, kExitRuntimeFault = 3 };

inline constexpr int kSummaryVersion = 1;

/// JSON has no Inf or NaN; they are written as null.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

struct Gate {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

class Report {
public:
    Report(std::string name, std::string kind) : name_(std::move(name)), kind_(std::move(kind)) {
        reports_ = Json::object();
        constants_ = Json::object();
    }

    void gate(Gate g) { gates_.push_back(std::move(g)); }
    void gate(std::string name, bool pass, double value, double threshold, std::string detail = {}) {
        gates_.push_back({std::move(name), pass, value, threshold, std::move(detail)});
    }
    void fault(std::string what) { fault_ = std::move(what); }
    void note(std::string n) { notes_.push_back(std::move(n)); }
    void artifact(std::string a) { artifacts_.push_back(std::move(a)); }
    void seed(std::uint64_t s) { seed_ = s; }
    Json& reports() { return reports_; }
    Json& constants() { return constants_; }
    const std::vector<Gate>& gates() const { return gates_; }
    bool faulted() const { return fault_.has_value(); }

    bool all_pass() const {
        return std::all_of(gates_.begin(), gates_.end(), [](const Gate& g) { return g.pass; });
    }
    int exit_code() const {
        if (fault_) return kExitRuntimeFault;
        return all_pass() ? kExitPass : kExitGateFailure;
    }

    Json summary() const {
        Json s;
        s["schema_version"] = kSummaryVersion;
        s["name"] = name_;
        s["kind"] = kind_;
        s["status"] = fault_ ? "fault" : (all_pass() ? "pass" : "fail");
        s["exit_code"] = exit_code();
        s["seed"] = seed_;
        s["fault"] = fault_ ? Json(*fault_) : Json(nullptr);
        Json gates = Json::array();
        for (const auto& g : gates_)
            gates.push_back({{"name", g.name},
                             {"pass", g.pass},
                             {"value", num(g.value)},
                             {"threshold", num(g.threshold)},
                             {"detail", g.detail}});
        s["gates"] = gates;
        s["constants"] = constants_;
        s["reports"] = reports_;
        s["artifacts"] = artifacts_;
        s["notes"] = notes_;
        return s;
    }

private:
    std::string name_, kind_;
    std::vector<Gate> gates_;
    std::optional<std::string> fault_;
    std::vector<std::string> notes_, artifacts_;
    std::uint64_t seed_ = 0;
    Json reports_, constants_;
};

struct ExperimentResult {
    Json summary;
    int exit_code = 0;
    std::filesystem::path dir;
};

// ---------------------------------------------------------------------------
// Output tree
// ---------------------------------------------------------------------------

/// Relative output directories are placed under $CNS_OUTPUT_ROOT when it is set.
inline std::filesystem::path resolve_output_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    const char* root = std::getenv("CNS_OUTPUT_ROOT");
    if (root && *root && p.is_relative()) p = std::filesystem::path(root) / p;
    return p;
}

class OutputTree {
public:
    explicit OutputTree(std::filesystem::path root) : root_(std::move(root)) {
        std::error_code ec;
        std::filesystem::create_directories(root_, ec);
        if (ec || !std::filesystem::is_directory(root_))
            throw IoError("cannot create output directory " + root_.string() + ": " + ec.message());
    }
    const std::filesystem::path& root() const { return root_; }

    void write(const std::string& rel, std::string_view text) const {
        const auto p = prepare(rel);
        std::ofstream out(p, std::ios::binary);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("cannot write " + p.string());
    }
    void write(const std::string& rel, const std::vector<std::uint8_t>& bytes) const {
        write(rel, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    }

private:
    std::filesystem::path prepare(const std::string& rel) const {
        const auto p = root_ / rel;
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
        return p;
    }
    std::filesystem::path root_;
};

inline std::string zero_pad(std::uint64_t v, int width) {
    std::string s = std::to_string(v);
    if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return s;
}

// ---------------------------------------------------------------------------
// Workers
// ---------------------------------------------------------------------------

inline int worker_count(int configured) {
    if (configured > 0) return configured;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Run f(i) for i in [0, count) on up to `workers` threads. Results must be
/// written to per-index slots; the first exception is rethrown.
template <class F>
void parallel_for(std::size_t count, int workers, F&& f) {
    const std::size_t nthreads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(workers, 1)));
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < count; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(count);
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

inline Json constants_json(const ExperimentConfig& cfg, const DiagnosticParams& p) {
    Json c;
    c["lambda0"] = p.lambda0;
    c["c0_linf"] = p.c0_linf;
    c["lambda0_threshold"] = lambda0_threshold(p.c0_linf);
    c["lambda1"] = p.lambda1();
    c["lambda2"] = p.lambda2();
    c["c_budget"] = num(p.c_budget);
    c["c_budget_calibrated"] = cfg.c_budget.calibrate();
    Json margins = Json::array();
    for (double q : cfg.experiment.p_list)
        margins.push_back({{"p", q},
                           {"lambda3", num(entropy_lambda3(q, p.lambda0, p.c0_linf))},
                           {"margin_holds", entropy_margin_holds(q, p.lambda0, p.c0_linf)}});
    c["lambda3_margin"] = margins;
    return c;
}

/// Resolution for a cutoff: the configured N at the configured m, otherwise
/// the smallest power of two that dealiases m.
inline GridPtr grid_for_cutoff(const ExperimentConfig& cfg, int m, std::optional<int> N = std::nullopt) {
    if (N) return make_grid(cfg.grid, m, *N);
    if (m == cfg.grid.m) return make_grid(cfg);
    for (int n = 4; n <= (1 << 16); n *= 2) {
        try {
            return TorusGrid::create(cfg.grid.L, n, m, cfg.grid.dealias_rule);
        } catch (const InvalidArgument&) {
        }
    }
    throw ConfigError("experiment.m_list", "no grid size dealiases m = " + std::to_string(m));
}

inline std::vector<GridPtr> grids_for_m_list(const ExperimentConfig& cfg) {
    const auto& e = cfg.experiment;
    std::vector<GridPtr> grids;
    if (e.m_list.empty()) {
        grids.push_back(make_grid(cfg));
        return grids;
    }
    for (std::size_t i = 0; i < e.m_list.size(); ++i)
        grids.push_back(grid_for_cutoff(cfg, e.m_list[i],
                                        e.N_list.empty() ? std::nullopt : std::optional<int>(e.N_list[i])));
    return grids;
}

struct TrajectoryAnalysis {
    std::vector<Gate> gates;
    Json report;
};

inline bool wants(const std::vector<std::string>& gates, const std::string& g) {
    return std::find(gates.begin(), gates.end(), g) != gates.end();
}

/// Lemma 3.1 invariants, the entropy budget and the exponential L2 bound of
/// one ledger. Calibrates C_budget and C~2 when the config asks for it and
/// rewrites the budget column under the constant actually used.
inline TrajectoryAnalysis analyse_trajectory(std::vector<EntropyLedgerRow>& ledger, const ExperimentConfig& cfg,
                                             DiagnosticParams& params) {
    TrajectoryAnalysis a;
    const auto& gates = cfg.experiment.gates;
    InvariantTolerances tol{cfg.tol.mass_rel, cfg.tol.linf_overshoot};

    if (cfg.c_budget.calibrate()) params.c_budget = calibrate_budget_constant(ledger, params);
    apply_budget(ledger, params);

    const auto inv = lemma31_check(ledger, tol);
    a.report["lemma31"] = {{"mass0", inv.mass0},
                           {"max_mass_drift", num(inv.max_mass_drift)},
                           {"mass_violation_t", inv.mass_violation_t ? num(*inv.mass_violation_t) : Json(nullptr)},
                           {"c0_linf", inv.c0_linf},
                           {"max_linf_overshoot", num(inv.max_linf_overshoot)},
                           {"linf_violation_t", inv.linf_violation_t ? num(*inv.linf_violation_t) : Json(nullptr)},
                           {"min_n", num(inv.min_n)},
                           {"min_c", num(inv.min_c)}};
    if (wants(gates, "mass"))
        a.gates.push_back({"mass", inv.mass_pass, inv.max_mass_drift, tol.mass_rel,
                           inv.mass_violation_t ? "first violation at t = " + std::to_string(*inv.mass_violation_t)
                                                : "relative drift of the integral of n"});
    if (wants(gates, "max_principle"))
        a.gates.push_back({"max_principle", inv.linf_pass, inv.max_linf_overshoot, tol.linf_overshoot,
                           inv.linf_violation_t ? "first violation at t = " + std::to_string(*inv.linf_violation_t)
                                                : "max_t ||c||_inf - ||c0||_inf"});

    const auto bud = budget_check(ledger, params);
    a.report["budget"] = {{"c_budget", num(bud.c_budget)},
                          {"calibrated_on_this_run", cfg.c_budget.calibrate()},
                          {"lambda1", bud.lambda1},
                          {"lambda2", bud.lambda2},
                          {"max_residual", num(bud.max_residual)},
                          {"first_violation_t", bud.first_violation_t ? num(*bud.first_violation_t) : Json(nullptr)},
                          {"flagged_rows", bud.flagged_rows}};
    if (wants(gates, "budget"))
        a.gates.push_back({"budget", bud.pass, bud.max_residual, 0.0,
                           cfg.c_budget.calibrate() ? "C_budget calibrated on this run"
                                                    : "C_budget frozen from the reference calibration"});

    double c2 = NAN;
    std::string cor32_error;
    try {
        c2 = cfg.cor32_c2.value ? *cfg.cor32_c2.value : calibrate_cor32_constant(ledger);
        if (std::isfinite(c2)) (void)cor32_bound(ledger, c2);
    } catch (const InvalidArgument& e) {
        cor32_error = e.what();
        c2 = NAN;
    }
    if (!cor32_error.empty()) {
        a.report["cor32"] = {{"c2", nullptr}, {"note", cor32_error}};
        if (wants(gates, "cor32")) a.gates.push_back({"cor32", false, NAN, 1.0, cor32_error});
    } else if (std::isfinite(c2)) {
        const auto b = cor32_bound(ledger, c2);
        double worst = 0.0;
        for (std::size_t i = 0; i < b.lhs.size(); ++i)
            if (b.envelope[i] > 0.0) worst = std::max(worst, b.lhs[i] / b.envelope[i]);
        a.report["cor32"] = {{"c1", b.c1},
                             {"c2", c2},
                             {"c2_calibrated_on_this_run", cfg.cor32_c2.calibrate()},
                             {"max_lhs_over_envelope", num(worst)},
                             {"final_lhs", num(b.lhs.back())},
                             {"final_envelope", num(b.envelope.back())},
                             {"envelope_finite", b.envelope_finite},
                             {"first_violation_t", b.first_violation_t ? num(*b.first_violation_t) : Json(nullptr)},
                             {"note", "C~2 is calibrated: the interpolation constant on the torus differs from R^2"}};
        if (wants(gates, "cor32")) a.gates.push_back({"cor32", b.pass(), worst, 1.0, "max LHS / envelope"});
    } else {
        a.report["cor32"] = {{"c2", nullptr}, {"note", "LHS exceeds C~1 before any Laplacian mass accrues"}};
        if (wants(gates, "cor32")) a.gates.push_back({"cor32", false, 0.0, 1.0, "no finite C~2 fits"});
    }
    return a;
}

// ---------------------------------------------------------------------------
// single
// ---------------------------------------------------------------------------

namespace detail {

inline void write_trajectory(const OutputTree& out, Report& rep, const TrajectoryRecord& rec,
                             const std::vector<EntropyLedgerRow>& ledger) {
    out.write("ledger.csv", to_csv(ledger));
    rep.artifact("ledger.csv");
    out.write("final.ckpt", checkpoint(rec.final_state));
    rep.artifact("final.ckpt");
    if (rec.fault) {
        out.write("fault.ckpt", checkpoint(rec.final_state));
        rep.artifact("fault.ckpt");
    }
}

inline void finish_single(const ExperimentConfig& cfg, const OutputTree& out, Report& rep, TrajectoryRecord& rec,
                          DiagnosticParams& params) {
    auto analysis = analyse_trajectory(rec.ledger, cfg, params);
    for (auto& g : analysis.gates) rep.gate(std::move(g));
    rep.reports() = analysis.report;
    rep.constants() = constants_json(cfg, params);
    rep.constants()["cor32_c2"] = analysis.report["cor32"]["c2"];
    rep.reports()["trajectory"] = {{"steps", rec.steps()},
                                   {"t_final", rec.final_state.t},
                                   {"stopped_at", rec.stopped_at ? num(*rec.stopped_at) : Json(nullptr)},
                                   {"radius_final", num(rec.ledger.back().radius)},
                                   {"flagged_rows", std::count_if(rec.ledger.begin(), rec.ledger.end(),
                                                                  [](const auto& r) { return r.flagged(); })}};
    rep.gate("no_fault", !rec.fault, rec.fault ? 1.0 : 0.0, 0.0, rec.fault.value_or("all steps finite"));
    if (rec.fault) rep.fault(*rec.fault);
    write_trajectory(out, rep, rec, rec.ledger);
}

inline RunHooks snapshot_hooks(const ExperimentConfig& cfg, const OutputTree& out, Report& rep) {
    RunHooks hooks;
    if (cfg.snapshot_stride > 0)
        hooks.on_step = [&cfg, &out, &rep](const SimulationState& s) {
            if (s.step % cfg.snapshot_stride != 0) return;
            const std::string name = "snapshots/step_" + zero_pad(s.step, 8) + ".ckpt";
            out.write(name, checkpoint(s));
            rep.artifact(name);
        };
    return hooks;
}

}  // namespace detail

inline void run_single(const ExperimentConfig& cfg, const OutputTree& out, Report& rep) {
    const auto g = make_grid(cfg);
    const auto seed = seed_derivation(cfg.experiment.seed, 0);
    rep.seed(seed);
    const auto s0 = make_initial_state(cfg, g, seed);
    const auto d = make_drivers(cfg, g);
    auto params = make_params(cfg, s0);
    auto rec = run(s0, cfg.scheme, d, params, detail::snapshot_hooks(cfg, out, rep));
    detail::finish_single(cfg, out, rep, rec, params);
}

/// Continue a `single` run from a checkpoint. Rows of an existing ledger up to
/// the checkpoint's step are kept so the result matches an uninterrupted run.
inline void run_resume(const ExperimentConfig& cfg, const std::vector<std::uint8_t>& bytes, const OutputTree& out,
                       Report& rep) {
    if (cfg.experiment.kind != "single") throw ConfigError("experiment.kind", "resume supports kind \"single\" only");
    const auto g = make_grid(cfg);
    SimulationState s = restore(bytes, g);
    if (!(s.grid() == *g)) throw ConfigError("grid", "checkpoint grid does not match the config grid");
    rep.seed(seed_derivation(cfg.experiment.seed, 0));
    const auto s0 = make_initial_state(cfg, g, 0);
    auto params = make_params(cfg, s0);
    const auto d = make_drivers(cfg, g);

    std::vector<EntropyLedgerRow> prefix;
    const auto ledger_path = out.root() / "ledger.csv";
    if (std::filesystem::exists(ledger_path)) {
        auto old = from_csv(read_text(ledger_path.string()));
        if (old.size() > s.step && old[s.step].t == s.t) prefix.assign(old.begin(), old.begin() + s.step + 1);
    }
    std::optional<EntropyLedgerRow> first;
    if (!prefix.empty()) first = prefix.back();
    else rep.note("no matching ledger prefix found; the resumed ledger starts at the checkpoint");
    auto rec = run(s, cfg.scheme, d, params, detail::snapshot_hooks(cfg, out, rep), first);
    if (!prefix.empty()) {
        prefix.pop_back();
        rec.ledger.insert(rec.ledger.begin(), prefix.begin(), prefix.end());
    }
    rep.note("resumed from step " + std::to_string(s.step));
    detail::finish_single(cfg, out, rep, rec, params);
}

// ---------------------------------------------------------------------------
// ensembles (shared by ensemble and escape)
// ---------------------------------------------------------------------------

struct EnsembleRun {
    std::vector<std::vector<EntropyLedgerRow>> ledgers;
    std::vector<std::optional<std::string>> faults;
    std::vector<double> radius0;
};

inline EnsembleRun run_ensemble_at(const ExperimentConfig& cfg, const GridPtr& g, std::uint64_t K) {
    const auto base = make_initial_state(cfg, g, 0);
    const auto d = make_drivers(cfg, g);
    const auto params = make_params(cfg, base);
    EnsembleRun er;
    er.ledgers.resize(K);
    er.faults.resize(K);
    er.radius0.resize(K);
    parallel_for(K, worker_count(cfg.experiment.workers), [&](std::size_t k) {
        SimulationState s = base;
        s.rng.seed(seed_derivation(cfg.experiment.seed, k));
        auto rec = run(std::move(s), cfg.scheme, d, params);
        er.radius0[k] = rec.ledger.front().radius;
        er.faults[k] = rec.fault;
        er.ledgers[k] = std::move(rec.ledger);
    });
    return er;
}

namespace detail {

inline std::vector<LedgerView> views(const EnsembleRun& er) {
    return std::vector<LedgerView>(er.ledgers.begin(), er.ledgers.end());
}

inline Json estimate_json(const MomentEstimate& e) { return {{"mean", num(e.mean)}, {"stderr", num(e.stderr_)}}; }

inline Json moments_json(const MomentReport& r) {
    Json rows = Json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"p", row.p},
                        {"sup_F", estimate_json(row.sup_F)},
                        {"int_G", estimate_json(row.int_G)},
                        {"sup_c_h1_2p", estimate_json(row.sup_c_h1)},
                        {"sup_u_2p", estimate_json(row.sup_u)}});
    return {{"trajectories", r.trajectories},
            {"rows", rows},
            {"all_finite", r.all_finite},
            {"jensen_consistent", r.jensen_consistent}};
}

inline void record_faults(Report& rep, const EnsembleRun& er, const std::string& label) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < er.faults.size(); ++k)
        if (er.faults[k]) {
            if (n == 0) rep.fault(label + " trajectory " + std::to_string(k) + ": " + *er.faults[k]);
            ++n;
        }
    rep.gate(label == "escape" ? "no_fault" : "no_fault_" + label, n == 0, static_cast<double>(n), 0.0,
             label + ": trajectories with a non-finite step");
}

inline void write_ledgers(const ExperimentConfig& cfg, const OutputTree& out, Report& rep, const EnsembleRun& er,
                          const std::string& dir) {
    if (!cfg.write_trajectory_ledgers) return;
    for (std::size_t k = 0; k < er.ledgers.size(); ++k)
        out.write(dir + "/traj_" + zero_pad(k, 4) + ".csv", to_csv(er.ledgers[k]));
    rep.artifact(dir + "/traj_*.csv");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Statistical checks on a frozen velocity
// ---------------------------------------------------------------------------

namespace detail {

struct SampleStats {
    double mean = 0.0, var = 0.0;
    std::size_t n = 0;
    double stderr_mean() const { return std::sqrt(var / static_cast<double>(n)); }
};

inline SampleStats stats_of(const std::vector<double>& xs) {
    SampleStats s;
    s.n = xs.size();
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(s.n);
    for (double x : xs) s.var += (x - s.mean) * (x - s.mean);
    s.var /= static_cast<double>(s.n - 1);
    return s;
}

}  // namespace detail

inline void run_statistics(const ExperimentConfig& cfg, const StatisticsSpec& st, Report& rep) {
    const auto g = make_grid(cfg);
    const auto nc = make_noise(cfg, g);
    const SolenoidalField u = leray_project(build_vector(st.frozen_u, g));
    const SolenoidalField test =
        st.test_function.type == "zero" ? u : leray_project(build_vector(st.test_function, g));
    const double sig = cfg.tol.sigma;
    Json out;
    out["frozen_u_l2"] = std::sqrt(l2_sq(u));
    out["paths"] = st.paths;
    out["steps"] = st.steps;
    out["dt"] = st.dt;
    out["wiener_modes"] = nc.wiener.mode_count();

    for (std::size_t ci = 0; ci < st.checks.size(); ++ci) {
        const auto& check = st.checks[ci];
        Rng rng(seed_derivation(cfg.experiment.seed, 0x5157A7ull + ci));
        if (check == "ito_isometry") {
            if (!nc.wiener.active()) throw ConfigError("wiener", "ito_isometry needs an active Wiener driver");
            // <int G dW, g> is Gaussian with variance sum_steps dt sum_i <G_i u, g>^2.
            double qv = 0.0;
            for (const auto& col : gaussian_columns(u, nc.wiener)) {
                const double p = inner(col, test);
                qv += p * p;
            }
            qv *= st.steps * st.dt;
            std::vector<double> xs;
            xs.reserve(st.paths);
            for (std::uint64_t k = 0; k < st.paths; ++k) {
                double x = 0.0;
                for (int j = 0; j < st.steps; ++j) x += inner(apply_gaussian(u, sample_increment(nc, st.dt, rng), nc.wiener), test);
                xs.push_back(x);
            }
            const auto s = detail::stats_of(xs);
            // the sample variance of a Gaussian has variance 2 sigma^4 / (n - 1)
            const double band = sig * qv * std::sqrt(2.0 / static_cast<double>(s.n - 1));
            out["ito_isometry"] = {{"sample_variance", s.var}, {"quadratic_variation", qv}, {"band", band}};
            rep.gate("ito_isometry", std::abs(s.var - qv) <= band, std::abs(s.var - qv), band,
                     "|sample variance - analytic quadratic variation|");
        } else if (check == "jump_second_moment") {
            if (!nc.jumps.active()) throw ConfigError("jumps.rate", "jump checks need a positive rate");
            // Quadratic variation of the jump part per unit time: sum_j ||r_j u||^2 / dt.
            const double target = l2_sq(u) * nc.jumps.mu(2);
            const std::uint64_t steps = st.paths;
            std::vector<double> xs;
            xs.reserve(steps);
            for (std::uint64_t k = 0; k < steps; ++k) {
                double x = 0.0;
                for (const auto& j : sample_increment(nc, st.dt, rng).jumps) x += l2_sq(apply_jump(u, j.radius));
                xs.push_back(x / st.dt);
            }
            const auto s = detail::stats_of(xs);
            const double band = sig * s.stderr_mean();
            out["jump_second_moment"] = {{"estimate", s.mean}, {"target", target}, {"stderr", s.stderr_mean()},
                                         {"mu2", nc.jumps.mu(2)}, {"steps", steps}};
            rep.gate("jump_second_moment", std::abs(s.mean - target) <= band, std::abs(s.mean - target), band,
                     "|E sum_j ||F(u; z_j)||^2 / dt - ||u||^2 mu_2|");
        } else if (check == "jump_martingale") {
            if (!nc.jumps.active()) throw ConfigError("jumps.rate", "jump checks need a positive rate");
            std::vector<double> xs;
            xs.reserve(st.paths);
            for (std::uint64_t k = 0; k < st.paths; ++k) {
                SolenoidalField m = SolenoidalField::zero(g);
                for (int j = 0; j < st.steps; ++j) {
                    const auto inc = sample_increment(nc, st.dt, rng);
                    m += compensator_drift(u, nc.jumps, st.dt);
                    for (const auto& jp : inc.jumps) m += apply_jump(u, jp.radius);
                }
                // F(u; z) is parallel to u
                xs.push_back(inner(m, u));
            }
            const auto s = detail::stats_of(xs);
            const double band = sig * s.stderr_mean();
            out["jump_martingale"] = {{"mean", s.mean}, {"stderr", s.stderr_mean()}};
            rep.gate("jump_martingale", std::abs(s.mean) <= band, std::abs(s.mean), band,
                     "|ensemble mean of the compensated jump contribution|");
        }
    }
    rep.reports()["statistics"] = out;
}

// ---------------------------------------------------------------------------
// ensemble
// ---------------------------------------------------------------------------

inline void run_ensemble(const ExperimentConfig& cfg, const OutputTree& out, Report& rep) {
    const auto& e = cfg.experiment;
    rep.seed(e.seed);
    if (e.statistics) run_statistics(cfg, *e.statistics, rep);
    if (e.K < 2) return;

    const auto grids = grids_for_m_list(cfg);
    std::vector<MomentReport> reports;
    Json per_m = Json::array();
    bool any_fault = false;
    for (const auto& g : grids) {
        const auto er = run_ensemble_at(cfg, g, e.K);
        const std::string label = "m" + std::to_string(g->m());
        for (const auto& f : er.faults) any_fault = any_fault || f.has_value();
        detail::record_faults(rep, er, label);
        detail::write_ledgers(cfg, out, rep, er, "ledgers/" + label);
        const auto v = detail::views(er);
        auto mr = moment_estimates(v, e.p_list);
        Json j = detail::moments_json(mr);
        j["m"] = g->m();
        j["N"] = g->N();
        per_m.push_back(j);
        rep.gate("moments_finite_" + label, mr.all_finite, mr.all_finite ? 0.0 : 1.0, 0.0,
                 "all moment estimates and standard errors finite");
        rep.gate("jensen_" + label, mr.jensen_consistent, 0.0, 0.0, "E[X] <= E[X^3]^(1/3) on the same sample");
        reports.push_back(std::move(mr));
    }
    rep.reports()["moments"] = per_m;

    for (std::size_t i = 1; i < reports.size(); ++i) {
        bool ok = true;
        double worst = 0.0;
        for (std::size_t r = 0; r < reports[i].rows.size(); ++r) {
            const auto& a = reports[i - 1].rows[r];
            const auto& b = reports[i].rows[r];
            for (const auto& [x, y] : {std::pair{a.sup_F, b.sup_F}, std::pair{a.int_G, b.int_G}}) {
                ok = ok && overlap_3sigma(x, y);
                const double spread = 3.0 * (x.stderr_ + y.stderr_);
                const double gap = std::abs(x.mean - y.mean);
                worst = std::max(worst, spread > 0.0 ? gap / spread : (gap > 0.0 ? INFINITY : 0.0));
            }
        }
        rep.gate("m_stability_m" + std::to_string(grids[i - 1]->m()) + "_m" + std::to_string(grids[i]->m()), ok,
                 worst, 1.0, "max |difference| / (3 sigma_a + 3 sigma_b) over E[sup F]^p and E[int G]^p");
    }
    const auto s0 = make_initial_state(cfg, grids.front(), 0);
    rep.constants() = constants_json(cfg, make_params(cfg, s0));
    if (any_fault) rep.note("at least one trajectory hit a non-finite state");
}

// ---------------------------------------------------------------------------
// escape
// ---------------------------------------------------------------------------

inline void run_escape(const ExperimentConfig& cfg, const OutputTree& out, Report& rep) {
    const auto& e = cfg.experiment;
    rep.seed(e.seed);
    const auto g = make_grid(cfg);
    const auto er = run_ensemble_at(cfg, g, e.K);
    detail::record_faults(rep, er, "escape");
    detail::write_ledgers(cfg, out, rep, er, "ledgers/m" + std::to_string(g->m()));
    const auto v = detail::views(er);
    const auto r = escape_probability(v, e.D_list);
    std::vector<double> peaks;
    for (const auto& l : v) peaks.push_back(max_radius(l));
    std::sort(peaks.begin(), peaks.end());
    rep.reports()["escape"] = {{"trajectories", r.trajectories},
                               {"D_list", r.d_list},
                               {"fractions", r.fractions},
                               {"counts", r.counts},
                               {"monotone", r.monotone},
                               {"initial_radius", er.radius0.front()},
                               {"peak_radius_min", peaks.front()},
                               {"peak_radius_median", peaks[peaks.size() / 2]},
                               {"peak_radius_max", peaks.back()}};
    rep.gate("escape_monotone", r.monotone, 0.0, 0.0, "exceedance fractions non-increasing in D");
    rep.gate("escape_largest_D", r.fractions.back() <= cfg.tol.max_escape_fraction, r.fractions.back(),
             cfg.tol.max_escape_fraction, "fraction exceeding the largest D");
    rep.constants() = constants_json(cfg, make_params(cfg, make_initial_state(cfg, g, 0)));
}

// ---------------------------------------------------------------------------
// convergence
// ---------------------------------------------------------------------------

/// Runs at every m in lockstep on one noise path and accumulates
/// ||u^{m_{i+1}} - u^{m_i}||_{L^2(0,T;H)} for consecutive pairs.
inline void run_convergence(const ExperimentConfig& cfg, const OutputTree& out, Report& rep) {
    const auto& e = cfg.experiment;
    const auto seed = seed_derivation(e.seed, 0);
    rep.seed(seed);
    const auto grids = grids_for_m_list(cfg);
    const std::size_t M = grids.size();
    std::vector<SimulationState> states;
    std::vector<Drivers> drivers;
    std::vector<DiagnosticParams> params;
    std::vector<std::vector<EntropyLedgerRow>> ledgers(M);
    for (const auto& g : grids) {
        states.push_back(make_initial_state(cfg, g, seed));
        drivers.push_back(make_drivers(cfg, g));
        params.push_back(make_params(cfg, states.back()));
    }
    for (std::size_t i = 0; i < M; ++i) ledgers[i].push_back(entropy_row(states[i], nullptr, {}, params[i]));

    auto pair_diff = [&](std::size_t i) {
        return l2_sq(transfer(states[i].u, grids[i + 1]) - states[i + 1].u);
    };
    std::vector<double> prev(M - 1), integral(M - 1, 0.0);
    for (std::size_t i = 0; i + 1 < M; ++i) prev[i] = pair_diff(i);

    const auto total = cfg.scheme.total_steps();
    std::optional<std::string> fault;
    std::uint64_t k = 0;
    for (; k < total; ++k) {
        bool stopped = false;
        for (std::size_t i = 0; i < M; ++i) {
            StepOutput o;
            try {
                o = step(states[i], cfg.scheme, drivers[i]);
            } catch (const NonFiniteState& ex) {
                fault = "m = " + std::to_string(grids[i]->m()) + ": " + ex.what();
                break;
            }
            states[i] = std::move(o.state);
            ledgers[i].push_back(entropy_row(states[i], &ledgers[i].back(),
                                             {cfg.scheme.dt, o.noise_work, o.jump_work}, params[i]));
            stopped = stopped || states[i].stopped();
        }
        if (fault) break;
        for (std::size_t i = 0; i + 1 < M; ++i) {
            const double cur = pair_diff(i);
            integral[i] += 0.5 * (prev[i] + cur) * cfg.scheme.dt;
            prev[i] = cur;
        }
        if (stopped) {
            rep.note("a resolution reached the stopping radius; the table covers [0, " +
                     std::to_string(states[0].t) + "]");
            break;
        }
    }
    Json table = Json::array();
    std::vector<double> norms_l2;
    for (std::size_t i = 0; i + 1 < M; ++i) {
        norms_l2.push_back(std::sqrt(integral[i]));
        table.push_back({{"m_coarse", grids[i]->m()},
                         {"m_fine", grids[i + 1]->m()},
                         {"N_coarse", grids[i]->N()},
                         {"N_fine", grids[i + 1]->N()},
                         {"l2_time_h_difference", num(norms_l2.back())}});
    }
    rep.reports()["convergence"] = {{"pairs", table}, {"steps", k}, {"T", cfg.scheme.T}};
    for (std::size_t i = 0; i < M; ++i) {
        const std::string name = "ledgers/m" + std::to_string(grids[i]->m()) + ".csv";
        out.write(name, to_csv(ledgers[i]));
        rep.artifact(name);
    }
    bool decreasing = true;
    double worst = 0.0;
    for (std::size_t i = 1; i < norms_l2.size(); ++i) {
        decreasing = decreasing && norms_l2[i] < norms_l2[i - 1];
        worst = std::max(worst, norms_l2[i] / norms_l2[i - 1]);
    }
    rep.gate("convergence_decreasing", decreasing && !fault, worst, 1.0,
             "max ratio of consecutive ||u^{2m} - u^m||_{L2(0,T;H)}");
    rep.gate("no_fault", !fault, fault ? 1.0 : 0.0, 0.0, fault.value_or("all steps finite"));
    if (fault) rep.fault(*fault);
    rep.constants() = constants_json(cfg, params.front());
}

// ---------------------------------------------------------------------------
// uniqueness
// ---------------------------------------------------------------------------

/// Real mean-free field with a Gaussian-decaying random spectrum.
inline ScalarField random_smooth_field(const GridPtr& g, Rng& rng, double decay) {
    std::normal_distribution<double> z(0.0, 1.0);
    ScalarField f(g);
    const int m = g->m();
    for (int ky = 0; ky <= m; ++ky)
        for (int kx = -m; kx <= m; ++kx) {
            if (ky == 0 && kx <= 0) continue;
            const double a = std::exp(-decay * (kx * kx + ky * ky));
            const cplx v(a * z(rng), a * z(rng));
            f.at(kx, ky) = v;
            f.at(-kx, -ky) = std::conj(v);
        }
    return f;
}

inline void run_uniqueness(const ExperimentConfig& cfg, const OutputTree& out, Report& rep) {
    const auto& e = cfg.experiment;
    const auto seed = seed_derivation(e.seed, 0);
    rep.seed(seed);
    const auto g = make_grid(cfg);
    const auto d = make_drivers(cfg, g);
    const auto n0 = build_scalar(cfg.n0, g);
    const auto c0 = build_scalar(cfg.c0, g);
    const auto u0 = build_vector(cfg.u0, g);

    // perturbation of unit A-norm inside the Galerkin range
    Rng prng(e.perturbation_seed);
    ScalarField pn = random_smooth_field(g, prng, 0.1);
    ScalarField pc = random_smooth_field(g, prng, 0.1);
    SolenoidalField pu = leray_project(VectorField(random_smooth_field(g, prng, 0.1), random_smooth_field(g, prng, 0.1)));
    const double unit = std::sqrt(l2_sq(pn) + l2_sq(pc) + grad_sq(pc) + l2_sq(pu));
    pn *= e.delta / unit;
    pc *= e.delta / unit;
    pu *= e.delta / unit;

    SimulationState a = initialize(n0, c0, u0, seed);
    SimulationState b = initialize(n0, c0, u0, seed);
    VectorField up = u0;
    up += pu.components();
    SimulationState p = initialize(n0 + pn, c0 + pc, up, seed);
    const auto params = make_params(cfg, a);

    std::vector<EntropyLedgerRow> la{entropy_row(a, nullptr, {}, params)}, lb{entropy_row(b, nullptr, {}, params)};
    std::string table = "t,A_twin,A,B,C,int_C\n";
    auto row = [&](double t, double at, const UniquenessMetrics& m, double ic) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", t, at, m.A, m.B, m.C, ic);
        table += buf;
    };
    auto m = uniqueness_metrics(a, p);
    const double A0 = m.A;
    double max_twin = uniqueness_metrics(a, b).A;
    double int_c = 0.0, prev_c = m.C;
    row(0.0, max_twin, m, int_c);

    const auto total = cfg.scheme.total_steps();
    std::optional<std::string> fault;
    for (std::uint64_t k = 0; k < total && !a.stopped() && !p.stopped(); ++k) {
        try {
            auto oa = step(a, cfg.scheme, d);
            auto ob = step(b, cfg.scheme, d);
            auto op = step(p, cfg.scheme, d);
            a = std::move(oa.state);
            b = std::move(ob.state);
            p = std::move(op.state);
            la.push_back(entropy_row(a, &la.back(), {cfg.scheme.dt, oa.noise_work, oa.jump_work}, params));
            lb.push_back(entropy_row(b, &lb.back(), {cfg.scheme.dt, ob.noise_work, ob.jump_work}, params));
        } catch (const NonFiniteState& ex) {
            fault = ex.what();
            break;
        }
        const double at = uniqueness_metrics(a, b).A;
        max_twin = std::max(max_twin, at);
        m = uniqueness_metrics(a, p);
        int_c += 0.5 * (prev_c + m.C) * cfg.scheme.dt;
        prev_c = m.C;
        row(a.t, at, m, int_c);
    }
    const std::string ca = to_csv(la), cb = to_csv(lb);
    out.write("ledger_a.csv", ca);
    out.write("ledger_b.csv", cb);
    out.write("uniqueness.csv", table);
    rep.artifact("ledger_a.csv");
    rep.artifact("ledger_b.csv");
    rep.artifact("uniqueness.csv");

    const double d2 = e.delta * e.delta;
    const double ratio = m.A / A0;
    const double bound = std::exp(int_c);
    rep.reports()["uniqueness"] = {{"delta", e.delta},
                                   {"A0", A0},
                                   {"A_T", m.A},
                                   {"ratio", num(ratio)},
                                   {"int_C", num(int_c)},
                                   {"gronwall_bound", num(bound)},
                                   {"twin_max_A", max_twin},
                                   {"twin_ledgers_identical", ca == cb},
                                   {"t_final", a.t}};
    rep.gate("twin_identical", ca == cb && max_twin == 0.0, max_twin, 0.0,
             "same-seed twin ledgers byte-identical and A(t) = 0 at every step");
    rep.gate("a0_scaling", std::abs(A0 - d2) <= cfg.tol.a0_rel * d2, std::abs(A0 - d2) / d2, cfg.tol.a0_rel,
             "|A(0) - delta^2| / delta^2");
    rep.gate("gronwall_ratio", ratio <= bound, ratio, bound, "A(T)/A(0) against exp(int_0^T C dt)");
    rep.gate("no_fault", !fault, fault ? 1.0 : 0.0, 0.0, fault.value_or("all steps finite"));
    if (fault) rep.fault(*fault);
    rep.constants() = constants_json(cfg, params);
}

// ---------------------------------------------------------------------------
// manufactured solutions
// ---------------------------------------------------------------------------

namespace detail {

inline bool uniform(const ScalarField& f) {
    for (std::size_t i = 0; i < f.coeffs().size(); ++i)
        if ((f.grid().kx_of(i) != 0 || f.grid().ky_of(i) != 0) && f.coeffs()[i] != cplx{}) return false;
    return true;
}

inline void require_quiet(const ExperimentConfig& cfg) {
    if (cfg.noise.amplitude != 0.0 && !cfg.noise.modes.empty())
        throw ConfigError("wiener.amplitude", "manufactured solutions need the noise off");
    if (cfg.noise.jump_rate != 0.0) throw ConfigError("jumps.rate", "manufactured solutions need the noise off");
}

inline double linf_diff(const ScalarField& a, const ScalarField& b) {
    double w = 0.0;
    const auto va = inverse_transform(a), vb = inverse_transform(b);
    for (std::size_t i = 0; i < va.size(); ++i) w = std::max(w, std::abs(va[i] - vb[i]));
    return w;
}

}  // namespace detail

inline void run_manufactured(const ExperimentConfig& cfg, const OutputTree& out, Report& rep) {
    const auto& problem = cfg.experiment.manufactured->problem;
    detail::require_quiet(cfg);
    const auto g = make_grid(cfg);
    const auto d = make_drivers(cfg, g);
    const double T = cfg.scheme.T;
    DiagnosticParams params;

    if (problem == "consumption_decay") {
        // n = nbar, u = 0, c uniform: c(t) = c0 exp(-nbar t)
        const auto n0 = build_scalar(cfg.n0, g);
        const auto c0 = build_scalar(cfg.c0, g);
        if (!detail::uniform(n0)) throw ConfigError("initial.n", "consumption_decay needs a uniform n");
        if (!detail::uniform(c0)) throw ConfigError("initial.c", "consumption_decay needs a uniform c");
        if (cfg.u0.type != "zero") throw ConfigError("initial.u", "consumption_decay needs u = 0");
        const double nbar = n0.mean();
        const ScalarField exact = std::exp(-nbar * T) * c0;
        auto err_at = [&](double dt, const std::string& ledger) {
            StepScheme sc = cfg.scheme;
            sc.dt = dt;
            SimulationState s{n0, c0, SolenoidalField::zero(g)};
            const auto rec = run(s, sc, d, params);
            if (rec.fault) throw NonFiniteState(*rec.fault);
            out.write(ledger, to_csv(rec.ledger));
            rep.artifact(ledger);
            return detail::linf_diff(rec.final_state.c, exact);
        };
        const double dt = cfg.scheme.dt;
        const double e1 = err_at(dt, "ledger_dt.csv");
        const double e2 = err_at(0.5 * dt, "ledger_dt_half.csv");
        const double ratio = e1 / e2;
        rep.reports()["manufactured"] = {{"problem", problem}, {"T", T},        {"dt", dt},
                                         {"nbar", nbar},       {"error_dt", e1}, {"error_dt_half", e2},
                                         {"ratio", num(ratio)}};
        rep.gate("consumption_error", e1 <= cfg.tol.consumption_abs, e1, cfg.tol.consumption_abs,
                 "||c(T) - c0 exp(-nbar T)||_inf at dt");
        rep.gate("order_ratio", ratio >= cfg.tol.order_ratio_min && ratio <= cfg.tol.order_ratio_max, ratio,
                 cfg.tol.order_ratio_max,
                 "error(dt) / error(dt/2) must lie in [" + std::to_string(cfg.tol.order_ratio_min) + ", " +
                     std::to_string(cfg.tol.order_ratio_max) + "]");
    } else {
        // constant u, c = 0, flat potential: n(t, x) = n0(x - U t), diffused when diffusion is on
        const auto n0 = build_scalar(cfg.n0, g);
        const auto c0 = build_scalar(cfg.c0, g);
        const auto phi = make_phi(cfg, g);
        if (cfg.u0.type != "uniform") throw ConfigError("initial.u", "transport needs a uniform velocity");
        for (const auto& z : c0.coeffs())
            if (z != cplx{}) throw ConfigError("initial.c", "transport needs c = 0");
        if (phi.grad_phi_linf() != 0.0) throw ConfigError("phi", "transport needs a constant potential");
        if (cfg.scheme.diffusion == DiffusionMode::Implicit)
            throw ConfigError("scheme.diffusion", "transport compares against the exact semigroup; use "
                                                  "\"none\" or \"integrating-factor\"");
        const auto u = leray_project(build_vector(cfg.u0, g));
        const double U = u.x().mean(), V = u.y().mean();
        SimulationState s{n0, c0, u};
        const auto rec = run(s, cfg.scheme, d, params);
        if (rec.fault) throw NonFiniteState(*rec.fault);
        out.write("ledger.csv", to_csv(rec.ledger));
        rep.artifact("ledger.csv");
        ScalarField exact = n0;
        std::vector<cplx> shift(g->mode_count());
        const double t = rec.final_state.t;
        for (std::size_t i = 0; i < shift.size(); ++i) {
            const double kx = g->k0() * g->kx_of(i), ky = g->k0() * g->ky_of(i);
            const double heat = cfg.scheme.diffusion == DiffusionMode::None ? 1.0 : std::exp(-g->k2(i) * t);
            shift[i] = heat * std::polar(1.0, -(kx * U + ky * V) * t);
        }
        exact.scale_modes(shift);
        const double rel = std::sqrt(l2_sq(rec.final_state.n - exact) / l2_sq(exact));
        rep.reports()["manufactured"] = {{"problem", problem},    {"T", t},      {"dt", cfg.scheme.dt},
                                         {"velocity", {U, V}},    {"crossings", t * std::hypot(U, V) / g->L()},
                                         {"relative_l2_error", rel}};
        rep.gate("transport_error", rel <= cfg.tol.transport_rel, rel, cfg.tol.transport_rel,
                 "relative L2 error against the translated profile");
    }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

namespace detail {

inline ExperimentResult finish(const ExperimentConfig& cfg, const OutputTree& out, Report& rep) {
    out.write("config.json", cfg.raw.dump(2) + "\n");
    rep.artifact("config.json");
    rep.artifact("summary.json");
    ExperimentResult r;
    r.summary = rep.summary();
    r.exit_code = rep.exit_code();
    r.dir = out.root();
    out.write("summary.json", r.summary.dump(2) + "\n");
    return r;
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const OutputTree out(resolve_output_dir(cfg.output_dir));
    Report rep(cfg.name, cfg.experiment.kind);
    try {
        const auto& kind = cfg.experiment.kind;
        if (kind == "single") run_single(cfg, out, rep);
        else if (kind == "ensemble") run_ensemble(cfg, out, rep);
        else if (kind == "escape") run_escape(cfg, out, rep);
        else if (kind == "convergence") run_convergence(cfg, out, rep);
        else if (kind == "uniqueness") run_uniqueness(cfg, out, rep);
        else if (kind == "manufactured") run_manufactured(cfg, out, rep);
    } catch (const NonFiniteState& e) {
        rep.fault(e.what());
    }
    return detail::finish(cfg, out, rep);
}

inline ExperimentResult resume_experiment(const ExperimentConfig& cfg, const std::vector<std::uint8_t>& bytes) {
    const OutputTree out(resolve_output_dir(cfg.output_dir));
    Report rep(cfg.name, "resume");
    run_resume(cfg, bytes, out, rep);
    return detail::finish(cfg, out, rep);
}

inline Json hypotheses_json(const HypothesisReport& r) {
    return {{"wiener_modes", r.wiener_modes},
            {"samples", r.samples},
            {"c0_linf", r.c0_linf},
            {"growth_constant", r.growth_constant},
            {"lambda0_estimate", num(r.lambda0_estimate)},
            {"lambda0_threshold", r.lambda0_threshold},
            {"lambda0_inconclusive", r.lambda0_inconclusive},
            {"lambda0_pass", r.lambda0_pass},
            {"lipschitz_estimate", num(r.lipschitz_estimate)},
            {"lipschitz_inconclusive", r.lipschitz_inconclusive},
            {"lipschitz_pass", r.lipschitz_pass},
            {"jump_mu2", num(r.jump_lipschitz)},
            {"jump_mu4", num(r.jump_fourth_moment)},
            {"jump_pass", r.jump_pass},
            {"pass", r.pass()},
            {"note", r.note}};
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::filesystem::path> sorted_csvs(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    if (!std::filesystem::is_directory(dir)) return out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".csv") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<std::vector<EntropyLedgerRow>> load_ledgers(const std::vector<std::filesystem::path>& files) {
    std::vector<std::vector<EntropyLedgerRow>> out;
    for (const auto& f : files) out.push_back(from_csv(read_text(f.string())));
    return out;
}

inline void verify_invariants(const ExperimentConfig& cfg, Report& rep, const std::string& label,
                              const std::vector<EntropyLedgerRow>& rows) {
    const auto inv = lemma31_check(rows, {cfg.tol.mass_rel, cfg.tol.linf_overshoot});
    if (wants(cfg.experiment.gates, "mass"))
        rep.gate("mass_" + label, inv.mass_pass, inv.max_mass_drift, cfg.tol.mass_rel, "relative drift of the integral of n");
    if (wants(cfg.experiment.gates, "max_principle"))
        rep.gate("max_principle_" + label, inv.linf_pass, inv.max_linf_overshoot, cfg.tol.linf_overshoot,
                 "max_t ||c||_inf - ||c0||_inf");
}

inline std::vector<std::vector<double>> read_table(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::size_t pos = text.find('\n');
    while (pos != std::string::npos && pos + 1 < text.size()) {
        const std::size_t end = text.find('\n', pos + 1);
        const std::string line = text.substr(pos + 1, end == std::string::npos ? std::string::npos : end - pos - 1);
        pos = end;
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t a = 0;
        for (;;) {
            const std::size_t b = line.find(',', a);
            row.push_back(std::strtod(line.substr(a, b == std::string::npos ? std::string::npos : b - a).c_str(), nullptr));
            if (b == std::string::npos) break;
            a = b + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

/// Recompute the ledger-derived gates of a finished run directory.
inline ExperimentResult verify_directory(const std::filesystem::path& dir) {
    const auto cfg_path = dir / "config.json";
    if (!std::filesystem::exists(cfg_path)) throw ConfigError(cfg_path.string(), "not a run directory (config.json missing)");
    const ExperimentConfig cfg = load_config(cfg_path.string());
    Report rep(cfg.name, "verify:" + cfg.experiment.kind);
    const auto& kind = cfg.experiment.kind;

    if (kind == "single") {
        auto rows = from_csv(read_text((dir / "ledger.csv").string()));
        const auto g = make_grid(cfg);
        auto params = make_params(cfg, make_initial_state(cfg, g, 0));
        auto a = analyse_trajectory(rows, cfg, params);
        for (auto& gt : a.gates) rep.gate(std::move(gt));
        rep.reports() = a.report;
    } else if (kind == "ensemble" || kind == "escape") {
        std::vector<std::filesystem::path> dirs;
        if (std::filesystem::is_directory(dir / "ledgers"))
            for (const auto& e : std::filesystem::directory_iterator(dir / "ledgers"))
                if (e.is_directory()) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end(), [](const auto& a, const auto& b) {
            return std::stoi(a.filename().string().substr(1)) < std::stoi(b.filename().string().substr(1));
        });
        if (dirs.empty()) rep.note("no trajectory ledgers stored; nothing to verify");
        std::vector<MomentReport> moments;
        for (const auto& d : dirs) {
            const auto ledgers = detail::load_ledgers(detail::sorted_csvs(d));
            const std::vector<LedgerView> v(ledgers.begin(), ledgers.end());
            const std::string label = d.filename().string();
            if (kind == "escape") {
                const auto r = escape_probability(v, cfg.experiment.D_list);
                rep.reports()["escape"] = {{"fractions", r.fractions}, {"D_list", r.d_list}};
                rep.gate("escape_monotone", r.monotone, 0.0, 0.0, "exceedance fractions non-increasing in D");
                rep.gate("escape_largest_D", r.fractions.back() <= cfg.tol.max_escape_fraction, r.fractions.back(),
                         cfg.tol.max_escape_fraction, "fraction exceeding the largest D");
            } else if (v.size() >= 2) {
                auto mr = moment_estimates(v, cfg.experiment.p_list);
                rep.reports()["moments_" + label] = detail::moments_json(mr);
                rep.gate("moments_finite_" + label, mr.all_finite, mr.all_finite ? 0.0 : 1.0, 0.0, "");
                rep.gate("jensen_" + label, mr.jensen_consistent, 0.0, 0.0, "");
                moments.push_back(std::move(mr));
            }
        }
        for (std::size_t i = 1; i < moments.size(); ++i) {
            bool ok = true;
            for (std::size_t r = 0; r < moments[i].rows.size(); ++r)
                ok = ok && overlap_3sigma(moments[i - 1].rows[r].sup_F, moments[i].rows[r].sup_F) &&
                     overlap_3sigma(moments[i - 1].rows[r].int_G, moments[i].rows[r].int_G);
            rep.gate("m_stability_" + dirs[i - 1].filename().string() + "_" + dirs[i].filename().string(), ok, 0.0,
                     0.0, "3-sigma overlap of E[sup F]^p and E[int G]^p");
        }
        if (cfg.experiment.statistics) rep.note("statistical checks are not stored as ledgers and are not re-verified");
    } else if (kind == "uniqueness") {
        const std::string la = read_text((dir / "ledger_a.csv").string());
        const std::string lb = read_text((dir / "ledger_b.csv").string());
        const auto t = detail::read_table(read_text((dir / "uniqueness.csv").string()));
        if (t.empty()) throw ConfigError("uniqueness.csv", "empty table");
        double twin = 0.0;
        for (const auto& r : t) twin = std::max(twin, r.at(1));
        const double d2 = cfg.experiment.delta * cfg.experiment.delta;
        const double A0 = t.front().at(2), AT = t.back().at(2), ic = t.back().at(5);
        rep.gate("twin_identical", la == lb && twin == 0.0, twin, 0.0, "");
        rep.gate("a0_scaling", std::abs(A0 - d2) <= cfg.tol.a0_rel * d2, std::abs(A0 - d2) / d2, cfg.tol.a0_rel, "");
        rep.gate("gronwall_ratio", AT / A0 <= std::exp(ic), AT / A0, std::exp(ic), "");
    } else {
        for (const auto& f : detail::sorted_csvs(dir))
            detail::verify_invariants(cfg, rep, f.stem().string(), from_csv(read_text(f.string())));
        for (const auto& f : detail::sorted_csvs(dir / "ledgers"))
            detail::verify_invariants(cfg, rep, f.stem().string(), from_csv(read_text(f.string())));
        rep.note("field-level gates of this kind need the solver; only ledger invariants are re-checked");
    }
    ExperimentResult r;
    r.summary = rep.summary();
    r.exit_code = rep.exit_code();
    r.dir = dir;
    OutputTree(dir).write("verify.json", r.summary.dump(2) + "\n");
    return r;
}

/// Noise hypotheses on the initial velocity plus random smooth solenoidal samples.
inline HypothesisReport check_hypotheses(const ExperimentConfig& cfg) {
    const auto g = make_grid(cfg);
    const auto nc = make_noise(cfg, g);
    std::vector<SolenoidalField> samples;
    const auto u0 = leray_project(build_vector(cfg.u0, g));
    if (l2_sq(u0) > 0.0) samples.push_back(u0);
    Rng rng(cfg.hypotheses.seed);
    while (static_cast<int>(samples.size()) < std::max(cfg.hypotheses.samples, 1))
        samples.push_back(leray_project(VectorField(random_smooth_field(g, rng, cfg.hypotheses.decay),
                                                    random_smooth_field(g, rng, cfg.hypotheses.decay))));
    const double c0_linf = norms(build_scalar(cfg.c0, g)).linf;
    return verify_hypotheses(nc, samples, c0_linf, cfg.noise.growth_constant.value_or(-1.0));
}

}  // namespace cns
