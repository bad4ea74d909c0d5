#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cns/checkpoint.hpp"
#include "cns/integrator.hpp"

namespace cns {

using Json = nlohmann::json;

inline constexpr int kConfigVersion = 1;

// ---------------------------------------------------------------------------
// Validation cursor
// ---------------------------------------------------------------------------

/// A JSON value together with its dotted path, so every error names the key.
class ConfigNode {
public:
    ConfigNode(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {}

    const Json& json() const { return *j_; }
    const std::string& path() const { return path_; }
    bool is_object() const { return j_->is_object(); }
    bool is_string() const { return j_->is_string(); }
    bool is_number() const { return j_->is_number(); }

    std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string index_path(std::size_t i) const { return path_ + "[" + std::to_string(i) + "]"; }

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_.empty() ? "<root>" : path_, what); }

    void require_object() const {
        if (!j_->is_object()) fail("expected an object");
    }
    /// Reject keys outside `allowed` so typos surface as errors.
    void only_keys(std::initializer_list<const char*> allowed) const {
        require_object();
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [k, v] : j_->items())
            if (!ok.count(k)) ConfigNode(v, child_path(k)).fail("unknown key");
    }
    bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

    ConfigNode at(const std::string& key) const {
        require_object();
        if (!j_->contains(key)) throw ConfigError(child_path(key), "missing required key");
        return ConfigNode((*j_)[key], child_path(key));
    }
    std::optional<ConfigNode> opt(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return ConfigNode((*j_)[key], child_path(key));
    }
    ConfigNode operator[](std::size_t i) const { return ConfigNode((*j_)[i], index_path(i)); }
    std::size_t size() const { return j_->size(); }

    double number() const {
        if (!j_->is_number()) fail("expected a number");
        const double v = j_->get<double>();
        if (!std::isfinite(v)) fail("expected a finite number");
        return v;
    }
    double positive() const {
        const double v = number();
        if (!(v > 0.0)) fail("must be > 0");
        return v;
    }
    double non_negative() const {
        const double v = number();
        if (!(v >= 0.0)) fail("must be >= 0");
        return v;
    }
    long long integer() const {
        if (!j_->is_number_integer()) fail("expected an integer");
        return j_->get<long long>();
    }
    std::uint64_t uint64() const {
        if (j_->is_number_unsigned()) return j_->get<std::uint64_t>();
        const long long v = integer();
        if (v < 0) fail("must be >= 0");
        return static_cast<std::uint64_t>(v);
    }
    std::string string() const {
        if (!j_->is_string()) fail("expected a string");
        return j_->get<std::string>();
    }
    bool boolean() const {
        if (!j_->is_boolean()) fail("expected true or false");
        return j_->get<bool>();
    }
    void require_array() const {
        if (!j_->is_array()) fail("expected an array");
    }
    std::vector<double> numbers() const {
        require_array();
        std::vector<double> v;
        for (std::size_t i = 0; i < size(); ++i) v.push_back((*this)[i].number());
        return v;
    }
    std::vector<int> integers() const {
        require_array();
        std::vector<int> v;
        for (std::size_t i = 0; i < size(); ++i) v.push_back(static_cast<int>((*this)[i].integer()));
        return v;
    }
    std::vector<std::string> strings() const {
        require_array();
        std::vector<std::string> v;
        for (std::size_t i = 0; i < size(); ++i) v.push_back((*this)[i].string());
        return v;
    }

private:
    const Json* j_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Field presets
// ---------------------------------------------------------------------------

/// Analytic or file-backed scalar field: constant, modes, gaussian_bump,
/// snapshot (one component of a checkpoint file).
struct ScalarSpec {
    std::string type = "constant";
    double value = 0.0;
    struct Term {
        int kx = 0, ky = 0;
        double cos = 0.0, sin = 0.0;
    };
    std::vector<Term> terms;
    double base = 0.0, amplitude = 1.0, width = 1.0;
    std::optional<std::array<double, 2>> center;
    std::string path, field;
    std::string where;  // config path, for build-time errors
};

/// zero, uniform, taylor_green, components, snapshot; optional L2 rescale.
struct VectorSpec {
    std::string type = "zero";
    std::array<double, 2> value{0.0, 0.0};
    double amplitude = 1.0;
    int k = 1;
    std::shared_ptr<ScalarSpec> x, y;
    std::string path;
    std::optional<double> l2_norm;
    std::string where;
};

inline ScalarSpec parse_scalar(const ConfigNode& n) {
    ScalarSpec s;
    s.where = n.path();
    if (n.is_number()) {
        s.value = n.number();
        return s;
    }
    s.type = n.at("type").string();
    if (s.type == "zero") {
        n.only_keys({"type"});
    } else if (s.type == "constant") {
        n.only_keys({"type", "value"});
        s.value = n.at("value").number();
    } else if (s.type == "modes") {
        n.only_keys({"type", "mean", "terms"});
        if (auto m = n.opt("mean")) s.value = m->number();
        const auto t = n.at("terms");
        t.require_array();
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto e = t[i];
            e.only_keys({"kx", "ky", "cos", "sin"});
            ScalarSpec::Term term;
            if (auto v = e.opt("kx")) term.kx = static_cast<int>(v->integer());
            if (auto v = e.opt("ky")) term.ky = static_cast<int>(v->integer());
            if (auto v = e.opt("cos")) term.cos = v->number();
            if (auto v = e.opt("sin")) term.sin = v->number();
            s.terms.push_back(term);
        }
    } else if (s.type == "gaussian_bump") {
        n.only_keys({"type", "base", "amplitude", "width", "center"});
        if (auto v = n.opt("base")) s.base = v->number();
        if (auto v = n.opt("amplitude")) s.amplitude = v->number();
        s.width = n.at("width").positive();
        if (auto v = n.opt("center")) {
            const auto c = v->numbers();
            if (c.size() != 2) v->fail("expected [x, y]");
            s.center = std::array<double, 2>{c[0], c[1]};
        }
    } else if (s.type == "snapshot") {
        n.only_keys({"type", "path", "field"});
        s.path = n.at("path").string();
        s.field = n.at("field").string();
        if (s.field != "n" && s.field != "c") n.at("field").fail("expected \"n\" or \"c\"");
    } else {
        n.at("type").fail("unknown scalar field type '" + s.type + "'");
    }
    return s;
}

inline VectorSpec parse_vector(const ConfigNode& n) {
    VectorSpec v;
    v.where = n.path();
    v.type = n.at("type").string();
    auto norm = [&] {
        if (auto x = n.opt("l2_norm")) v.l2_norm = x->non_negative();
    };
    if (v.type == "zero") {
        n.only_keys({"type"});
    } else if (v.type == "uniform") {
        n.only_keys({"type", "value", "l2_norm"});
        const auto c = n.at("value").numbers();
        if (c.size() != 2) n.at("value").fail("expected [ux, uy]");
        v.value = {c[0], c[1]};
        norm();
    } else if (v.type == "taylor_green") {
        n.only_keys({"type", "amplitude", "k", "l2_norm"});
        if (auto x = n.opt("amplitude")) v.amplitude = x->number();
        if (auto x = n.opt("k")) {
            v.k = static_cast<int>(x->integer());
            if (v.k < 1) x->fail("must be >= 1");
        }
        norm();
    } else if (v.type == "components") {
        n.only_keys({"type", "x", "y", "l2_norm"});
        v.x = std::make_shared<ScalarSpec>(parse_scalar(n.at("x")));
        v.y = std::make_shared<ScalarSpec>(parse_scalar(n.at("y")));
        norm();
    } else if (v.type == "snapshot") {
        n.only_keys({"type", "path", "l2_norm"});
        v.path = n.at("path").string();
        norm();
    } else {
        n.at("type").fail("unknown vector field type '" + v.type + "'");
    }
    return v;
}

namespace detail {

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path, "cannot open file");
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline double periodic_offset(double d, double L) { return d - L * std::round(d / L); }

}  // namespace detail

inline ScalarField build_scalar(const ScalarSpec& s, const GridPtr& g) {
    const double L = g->L();
    const double k0 = g->k0();
    if (s.type == "zero") return ScalarField(g);
    if (s.type == "constant") return sample(g, [&](double, double) { return s.value; });
    if (s.type == "modes") {
        for (const auto& t : s.terms)
            if (std::max(std::abs(t.kx), std::abs(t.ky)) > g->m())
                throw ConfigError(s.where, "mode (" + std::to_string(t.kx) + ", " + std::to_string(t.ky) +
                                               ") lies above the cutoff m = " + std::to_string(g->m()));
        return sample(g, [&](double x, double y) {
            double v = s.value;
            for (const auto& t : s.terms) {
                const double a = k0 * (t.kx * x + t.ky * y);
                v += t.cos * std::cos(a) + t.sin * std::sin(a);
            }
            return v;
        });
    }
    if (s.type == "gaussian_bump") {
        const double cx = s.center ? (*s.center)[0] : 0.5 * L;
        const double cy = s.center ? (*s.center)[1] : 0.5 * L;
        const double w2 = 2.0 * s.width * s.width;
        // sum of the nearest periodic images keeps the field smooth across the boundary
        return sample(g, [&](double x, double y) {
            const double dx = detail::periodic_offset(x - cx, L);
            const double dy = detail::periodic_offset(y - cy, L);
            double v = 0.0;
            for (int i = -1; i <= 1; ++i)
                for (int j = -1; j <= 1; ++j) {
                    const double ax = dx + i * L, ay = dy + j * L;
                    v += std::exp(-(ax * ax + ay * ay) / w2);
                }
            return s.base + s.amplitude * v;
        });
    }
    if (s.type == "snapshot") {
        const auto st = restore(detail::read_bytes(s.path));
        return transfer(s.field == "n" ? st.n : st.c, g);
    }
    throw ConfigError(s.where, "unknown scalar field type");
}

inline VectorField build_vector(const VectorSpec& v, const GridPtr& g) {
    VectorField out(g);
    if (v.type == "uniform") {
        out.x.at(0, 0) = v.value[0];
        out.y.at(0, 0) = v.value[1];
    } else if (v.type == "taylor_green") {
        const double k = v.k * g->k0();
        const double a = v.amplitude;
        if (v.k > g->m()) throw ConfigError(v.where, "Taylor-Green wavenumber lies above the cutoff");
        out.x = sample(g, [&](double x, double y) { return a * std::sin(k * x) * std::cos(k * y); });
        out.y = sample(g, [&](double x, double y) { return -a * std::cos(k * x) * std::sin(k * y); });
    } else if (v.type == "components") {
        out.x = build_scalar(*v.x, g);
        out.y = build_scalar(*v.y, g);
    } else if (v.type == "snapshot") {
        out = transfer(restore(detail::read_bytes(v.path)).u, g).components();
    }
    if (v.l2_norm) {
        const SolenoidalField p = leray_project(out);
        const double nrm = std::sqrt(l2_sq(p));
        if (nrm == 0.0) throw ConfigError(v.where + ".l2_norm", "cannot rescale a field with zero L2 norm");
        out = p.components();
        out *= *v.l2_norm / nrm;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct GridSpec {
    double L = 2.0 * std::numbers::pi;
    int N = 64;
    int m = 21;
    double dealias_rule = 2.0 / 3.0;
};

struct WienerModeSpec {
    std::optional<VectorSpec> b;
    std::optional<ScalarSpec> c;
};

struct NoiseSpec {
    double amplitude = 0.0;
    std::vector<WienerModeSpec> modes;
    double lambda0 = 0.0;
    std::optional<double> growth_constant;
    double jump_rate = 0.0;
    double beta_a = 2.0, beta_b = 2.0;
};

struct StatisticsSpec {
    VectorSpec frozen_u;
    VectorSpec test_function;
    std::uint64_t paths = 10000;
    int steps = 1;
    double dt = 1e-2;
    std::vector<std::string> checks;
};

struct ManufacturedSpec {
    std::string problem;  // consumption_decay | transport
};

struct HypothesisSpec {
    int samples = 8;
    std::uint64_t seed = 0;
    double decay = 0.05;
};

struct ExperimentSpec {
    std::string kind = "single";
    std::uint64_t seed = 0;
    std::uint64_t K = 1;
    int workers = 0;  // 0 = hardware concurrency
    std::vector<int> m_list;
    std::vector<int> N_list;
    double delta = 1e-6;
    std::uint64_t perturbation_seed = 1;
    std::vector<double> D_list;
    std::vector<double> p_list{1.0, 2.0, 3.0};
    std::vector<std::string> gates;
    std::optional<StatisticsSpec> statistics;
    std::optional<ManufacturedSpec> manufactured;
};

struct Tolerances {
    double mass_rel = 1e-10;
    double linf_overshoot = 1e-6;
    double consumption_abs = 1e-6;
    double order_ratio_min = 1.8;
    double order_ratio_max = 2.2;
    double transport_rel = 1e-8;
    double a0_rel = 1e-3;
    double max_escape_fraction = 0.05;
    double sigma = 3.0;
};

/// A constant is either frozen (a number) or calibrated on this run.
struct Calibrated {
    std::optional<double> value;
    bool calibrate() const { return !value.has_value(); }
};

struct ExperimentConfig {
    int version = kConfigVersion;
    std::string name = "experiment";
    GridSpec grid;
    StepScheme scheme;
    ScalarSpec n0, c0;
    VectorSpec u0;
    std::optional<ScalarSpec> phi;  // default sin(2 pi y / L)
    NoiseSpec noise;
    ExperimentSpec experiment;
    HypothesisSpec hypotheses;
    std::string output_dir;
    std::uint64_t snapshot_stride = 0;
    bool write_trajectory_ledgers = true;
    Tolerances tol;
    Calibrated c_budget;
    Calibrated cor32_c2;
    Json raw;  // the parsed document, copied into the output tree
};

namespace detail {

inline const std::set<std::string>& known_gates() {
    static const std::set<std::string> g{"mass", "max_principle", "budget", "cor32", "no_fault"};
    return g;
}

inline bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace detail

inline ExperimentConfig parse_config(const Json& doc) {
    ExperimentConfig cfg;
    cfg.raw = doc;
    const ConfigNode root(doc, "");
    root.only_keys({"version", "name", "grid", "scheme", "initial", "phi", "wiener", "jumps", "experiment",
                    "hypotheses", "output", "tolerances", "calibration"});
    if (auto v = root.opt("version")) {
        cfg.version = static_cast<int>(v->integer());
        if (cfg.version != kConfigVersion)
            v->fail("unsupported config version " + std::to_string(cfg.version) + " (expected " +
                    std::to_string(kConfigVersion) + ")");
    }
    if (auto v = root.opt("name")) cfg.name = v->string();

    const auto grid = root.at("grid");
    grid.only_keys({"L", "N", "m", "dealias_rule"});
    if (auto v = grid.opt("L")) cfg.grid.L = v->positive();
    cfg.grid.N = static_cast<int>(grid.at("N").integer());
    cfg.grid.m = static_cast<int>(grid.at("m").integer());
    if (auto v = grid.opt("dealias_rule")) cfg.grid.dealias_rule = v->positive();
    if (!detail::power_of_two(cfg.grid.N)) grid.at("N").fail("must be a power of two");
    if (cfg.grid.m < 0) grid.at("m").fail("must be >= 0");

    const auto sc = root.at("scheme");
    sc.only_keys({"dt", "T", "D", "diffusion"});
    cfg.scheme.dt = sc.at("dt").positive();
    cfg.scheme.T = sc.at("T").non_negative();
    if (auto v = sc.opt("D")) cfg.scheme.D = v->positive();
    if (auto v = sc.opt("diffusion")) {
        const auto d = v->string();
        if (d == "integrating-factor") cfg.scheme.diffusion = DiffusionMode::IntegratingFactor;
        else if (d == "implicit") cfg.scheme.diffusion = DiffusionMode::Implicit;
        else if (d == "none") cfg.scheme.diffusion = DiffusionMode::None;
        else v->fail("expected \"integrating-factor\", \"implicit\" or \"none\"");
    }

    const auto init = root.at("initial");
    init.only_keys({"n", "c", "u"});
    cfg.n0 = parse_scalar(init.at("n"));
    cfg.c0 = parse_scalar(init.at("c"));
    cfg.u0 = init.has("u") ? parse_vector(init.at("u")) : VectorSpec{};
    if (auto v = root.opt("phi")) cfg.phi = parse_scalar(*v);

    if (auto w = root.opt("wiener")) {
        w->only_keys({"amplitude", "modes", "lambda0", "growth_constant"});
        if (auto v = w->opt("amplitude")) cfg.noise.amplitude = v->number();
        if (auto v = w->opt("lambda0")) {
            cfg.noise.lambda0 = v->non_negative();
            if (!(cfg.noise.lambda0 < 2.0)) v->fail("must be < 2");
        }
        if (auto v = w->opt("growth_constant")) cfg.noise.growth_constant = v->non_negative();
        if (auto modes = w->opt("modes")) {
            modes->require_array();
            for (std::size_t i = 0; i < modes->size(); ++i) {
                const auto md = (*modes)[i];
                md.only_keys({"b", "c"});
                WienerModeSpec ms;
                if (auto b = md.opt("b")) ms.b = parse_vector(*b);
                if (auto c = md.opt("c")) ms.c = parse_scalar(*c);
                cfg.noise.modes.push_back(std::move(ms));
            }
        }
    }
    if (auto j = root.opt("jumps")) {
        j->only_keys({"rate", "beta"});
        if (auto v = j->opt("rate")) cfg.noise.jump_rate = v->non_negative();
        if (auto v = j->opt("beta")) {
            const auto ab = v->numbers();
            if (ab.size() != 2 || !(ab[0] > 0.0) || !(ab[1] > 0.0)) v->fail("expected [a, b] with a, b > 0");
            cfg.noise.beta_a = ab[0];
            cfg.noise.beta_b = ab[1];
        }
    }

    const auto ex = root.at("experiment");
    ex.only_keys({"kind", "seed", "K", "workers", "m_list", "N_list", "delta", "perturbation_seed", "D_list",
                  "p_list", "gates", "statistics", "manufactured"});
    auto& e = cfg.experiment;
    e.kind = ex.at("kind").string();
    static const std::set<std::string> kinds{"single", "ensemble", "convergence", "uniqueness", "escape",
                                             "manufactured"};
    if (!kinds.count(e.kind)) ex.at("kind").fail("unknown experiment kind '" + e.kind + "'");
    if (auto v = ex.opt("seed")) e.seed = v->uint64();
    if (auto v = ex.opt("K")) e.K = v->uint64();
    if (auto v = ex.opt("workers")) {
        e.workers = static_cast<int>(v->integer());
        if (e.workers < 0) v->fail("must be >= 0");
    }
    if (auto v = ex.opt("m_list")) {
        e.m_list = v->integers();
        for (std::size_t i = 1; i < e.m_list.size(); ++i)
            if (e.m_list[i] <= e.m_list[i - 1]) v->fail("must be strictly increasing");
    }
    if (auto v = ex.opt("N_list")) {
        e.N_list = v->integers();
        if (e.N_list.size() != e.m_list.size()) v->fail("must have one entry per m_list entry");
        for (int N : e.N_list)
            if (!detail::power_of_two(N)) v->fail("entries must be powers of two");
    }
    if (auto v = ex.opt("delta")) e.delta = v->positive();
    if (auto v = ex.opt("perturbation_seed")) e.perturbation_seed = v->uint64();
    if (auto v = ex.opt("D_list")) {
        e.D_list = v->numbers();
        for (std::size_t i = 1; i < e.D_list.size(); ++i)
            if (e.D_list[i] <= e.D_list[i - 1]) v->fail("must be strictly increasing");
    }
    if (auto v = ex.opt("p_list")) {
        e.p_list = v->numbers();
        for (double p : e.p_list)
            if (!(p >= 1.0 && p <= 3.0)) v->fail("entries must lie in [1, 3]");
    }
    if (auto v = ex.opt("gates")) {
        e.gates = v->strings();
        for (const auto& gname : e.gates)
            if (!detail::known_gates().count(gname)) v->fail("unknown gate '" + gname + "'");
    }
    if (auto st = ex.opt("statistics")) {
        st->only_keys({"frozen_u", "test_function", "paths", "steps", "dt", "checks"});
        StatisticsSpec s;
        s.frozen_u = parse_vector(st->at("frozen_u"));
        if (auto v = st->opt("test_function")) s.test_function = parse_vector(*v);
        if (auto v = st->opt("paths")) s.paths = v->uint64();
        if (auto v = st->opt("steps")) s.steps = static_cast<int>(v->integer());
        if (auto v = st->opt("dt")) s.dt = v->positive();
        s.checks = st->at("checks").strings();
        for (const auto& c : s.checks)
            if (c != "ito_isometry" && c != "jump_second_moment" && c != "jump_martingale")
                st->at("checks").fail("unknown statistical check '" + c + "'");
        if (s.paths < 2) st->at("paths").fail("must be >= 2");
        if (s.steps < 1) st->at("steps").fail("must be >= 1");
        e.statistics = std::move(s);
    }
    if (auto mf = ex.opt("manufactured")) {
        mf->only_keys({"problem"});
        ManufacturedSpec m;
        m.problem = mf->at("problem").string();
        if (m.problem != "consumption_decay" && m.problem != "transport")
            mf->at("problem").fail("expected \"consumption_decay\" or \"transport\"");
        e.manufactured = m;
    }

    // kind-specific requirements
    if (e.kind == "ensemble" && e.K < 2 && !e.statistics) ex.at("K").fail("ensemble needs K >= 2");
    if (e.kind == "escape") {
        if (e.K < 1) ex.at("K").fail("escape needs K >= 1");
        if (e.D_list.empty()) ex.at("D_list").fail("escape needs a non-empty D_list");
    }
    if (e.kind == "convergence" && e.m_list.size() < 2) ex.at("m_list").fail("convergence needs at least two m");
    if (e.kind == "manufactured" && !e.manufactured) ex.at("manufactured").fail("missing manufactured block");
    if (e.kind == "uniqueness" && !(e.delta > 0.0)) ex.at("delta").fail("must be > 0");

    if (auto h = root.opt("hypotheses")) {
        h->only_keys({"samples", "seed", "decay"});
        if (auto v = h->opt("samples")) {
            cfg.hypotheses.samples = static_cast<int>(v->integer());
            if (cfg.hypotheses.samples < 1) v->fail("must be >= 1");
        }
        if (auto v = h->opt("seed")) cfg.hypotheses.seed = v->uint64();
        if (auto v = h->opt("decay")) cfg.hypotheses.decay = v->positive();
    }

    cfg.output_dir = "out/" + cfg.name;
    if (auto o = root.opt("output")) {
        o->only_keys({"dir", "snapshot_stride", "trajectory_ledgers"});
        if (auto v = o->opt("dir")) cfg.output_dir = v->string();
        if (auto v = o->opt("snapshot_stride")) cfg.snapshot_stride = v->uint64();
        if (auto v = o->opt("trajectory_ledgers")) cfg.write_trajectory_ledgers = v->boolean();
    }

    if (auto t = root.opt("tolerances")) {
        t->only_keys({"mass_rel", "linf_overshoot", "consumption_abs", "order_ratio", "transport_rel", "a0_rel",
                      "max_escape_fraction", "sigma"});
        if (auto v = t->opt("mass_rel")) cfg.tol.mass_rel = v->non_negative();
        if (auto v = t->opt("linf_overshoot")) cfg.tol.linf_overshoot = v->non_negative();
        if (auto v = t->opt("consumption_abs")) cfg.tol.consumption_abs = v->non_negative();
        if (auto v = t->opt("order_ratio")) {
            const auto r = v->numbers();
            if (r.size() != 2 || r[0] > r[1]) v->fail("expected [min, max]");
            cfg.tol.order_ratio_min = r[0];
            cfg.tol.order_ratio_max = r[1];
        }
        if (auto v = t->opt("transport_rel")) cfg.tol.transport_rel = v->non_negative();
        if (auto v = t->opt("a0_rel")) cfg.tol.a0_rel = v->non_negative();
        if (auto v = t->opt("max_escape_fraction")) cfg.tol.max_escape_fraction = v->non_negative();
        if (auto v = t->opt("sigma")) cfg.tol.sigma = v->positive();
    }

    if (auto c = root.opt("calibration")) {
        c->only_keys({"c_budget", "cor32_c2"});
        auto read = [](const ConfigNode& n, Calibrated& out) {
            if (n.is_string()) {
                if (n.string() != "calibrate") n.fail("expected a number or \"calibrate\"");
                out.value.reset();
            } else {
                out.value = n.non_negative();
            }
        };
        if (auto v = c->opt("c_budget")) read(*v, cfg.c_budget);
        if (auto v = c->opt("cor32_c2")) read(*v, cfg.cor32_c2);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open config file");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path, std::string("malformed JSON: ") + e.what());
    }
    return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Building runtime objects
// ---------------------------------------------------------------------------

inline GridPtr make_grid(const GridSpec& g, int m, int N) {
    try {
        return TorusGrid::create(g.L, N, m, g.dealias_rule);
    } catch (const InvalidArgument& e) {
        throw ConfigError("grid", e.what());
    }
}

inline GridPtr make_grid(const ExperimentConfig& cfg) { return make_grid(cfg.grid, cfg.grid.m, cfg.grid.N); }

/// Coefficient fields are defined analytically, so every resolution sees the
/// same noise operator restricted to its own modes.
inline NoiseConfig make_noise(const ExperimentConfig& cfg, const GridPtr& g) {
    std::vector<WienerMode> modes;
    for (const auto& ms : cfg.noise.modes) {
        WienerMode w{ms.b ? build_vector(*ms.b, g) : VectorField(g), ms.c ? build_scalar(*ms.c, g) : ScalarField(g)};
        modes.push_back(std::move(w));
    }
    NoiseConfig nc;
    try {
        nc.wiener = WienerDriverConfig(std::move(modes), cfg.noise.amplitude);
        nc.jumps = JumpDriverConfig(cfg.noise.jump_rate, cfg.noise.beta_a, cfg.noise.beta_b);
    } catch (const InvalidArgument& e) {
        throw ConfigError("wiener", e.what());
    }
    return nc;
}

inline PotentialField make_phi(const ExperimentConfig& cfg, const GridPtr& g) {
    return cfg.phi ? PotentialField(build_scalar(*cfg.phi, g)) : PotentialField::standard(g);
}

inline Drivers make_drivers(const ExperimentConfig& cfg, const GridPtr& g) {
    return Drivers{make_phi(cfg, g), make_noise(cfg, g)};
}

/// The all-zero state is the trivial solution and is accepted as is; any other
/// data must pass the positivity check of `initialize`.
inline SimulationState make_initial_state(const ExperimentConfig& cfg, const GridPtr& g, std::uint64_t seed) {
    auto n0 = build_scalar(cfg.n0, g);
    auto c0 = build_scalar(cfg.c0, g);
    auto u0 = build_vector(cfg.u0, g);
    const ScalarField zero(g);
    if (n0 == zero && c0 == zero && u0 == VectorField(g)) {
        SimulationState s{std::move(n0), std::move(c0), SolenoidalField::zero(g)};
        s.rng.seed(seed);
        return s;
    }
    return initialize(n0, c0, u0, seed);
}

inline DiagnosticParams make_params(const ExperimentConfig& cfg, const SimulationState& s0) {
    DiagnosticParams p;
    p.lambda0 = cfg.noise.lambda0;
    p.c0_linf = norms(s0.c).linf;
    p.c_budget = cfg.c_budget.value.value_or(0.0);
    return p;
}

}  // namespace cns
