#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbrw/branching.hpp"
#include "sbrw/common.hpp"
#include "sbrw/critical_ode.hpp"
#include "sbrw/numerics.hpp"
#include "sbrw/rng.hpp"
#include "sbrw/spine_law.hpp"
#include "sbrw/stable_process.hpp"
#include "sbrw/stats.hpp"
#include "sbrw/tube_prob.hpp"
#include "sbrw/version.hpp"

// Experiment orchestration: a RunConfig names one experiment kind plus its
// parameters; run() validates everything up front, executes, and emits three
// artifacts under the output directory (records.jsonl for trial-level data,
// summary.csv for plot-ready tables, report.txt for the narrative).  All
// randomness is keyed off the config seed, so rerunning a config reproduces
// its outputs bit for bit.

namespace sbrw {

// ---------------------------------------------------------------------------
// configuration

struct RunConfig {
    std::string kind;
    std::map<std::string, std::string> params;  // textual, mirrors the CLI flags
    std::string out_dir;                        // empty: keep results in memory only

    bool has(const std::string& key) const { return params.find(key) != params.end(); }

    std::string str(const std::string& key, const std::string& fallback) const {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }

    double real(const std::string& key, double fallback) const;
    double real_required(const std::string& key) const;
    long integer(const std::string& key, long fallback) const;
    std::vector<double> real_list_required(const std::string& key) const;
    std::vector<long> integer_list(const std::string& key, const std::vector<long>& fallback) const;

    std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed", 20240801)); }
};

namespace detail {

inline std::string trim_copy(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("parameter '" + key + "' is not a number: '" + text + "'");
    }
}

inline long parse_integer(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        long v = std::stol(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("parameter '" + key + "' is not an integer: '" + text + "'");
    }
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, ',')) {
        cur = trim_copy(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

} // namespace detail

inline double RunConfig::real(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : detail::parse_real(key, it->second);
}

inline double RunConfig::real_required(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end())
        throw std::invalid_argument("'" + kind + "' requires --" + key);
    return detail::parse_real(key, it->second);
}

inline long RunConfig::integer(const std::string& key, long fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : detail::parse_integer(key, it->second);
}

inline std::vector<double> RunConfig::real_list_required(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end())
        throw std::invalid_argument("'" + kind + "' requires --" + key);
    std::vector<double> out;
    for (const auto& piece : detail::split_list(it->second))
        out.push_back(detail::parse_real(key, piece));
    if (out.empty())
        throw std::invalid_argument("parameter '" + key + "' is an empty list");
    return out;
}

inline std::vector<long> RunConfig::integer_list(const std::string& key,
                                                 const std::vector<long>& fallback) const {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    std::vector<long> out;
    for (const auto& piece : detail::split_list(it->second))
        out.push_back(detail::parse_integer(key, piece));
    if (out.empty())
        throw std::invalid_argument("parameter '" + key + "' is an empty list");
    return out;
}

// Plain key = value lines; '#' starts a comment, blank lines are skipped.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim_copy(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        " is not 'key = value': '" + line + "'");
        std::string key = detail::trim_copy(line.substr(0, eq));
        std::string val = detail::trim_copy(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + " has an empty key");
        out[key] = val;
    }
    return out;
}

inline std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

// Flags override file entries; the output directory never enters params.
inline RunConfig make_run_config(const std::string& kind,
                                 const std::map<std::string, std::string>& file_params,
                                 const std::map<std::string, std::string>& flag_params,
                                 const std::string& out_dir = "") {
    RunConfig cfg;
    cfg.kind = kind;
    cfg.params = file_params;
    for (const auto& [k, v] : flag_params) cfg.params[k] = v;
    cfg.out_dir = out_dir;
    return cfg;
}

// Hash of the canonical serialization (kind plus sorted key=value lines).
// The output directory is excluded: it changes where results land, not what
// they are.
inline std::uint64_t config_hash(const RunConfig& cfg) {
    std::string canon = cfg.kind;
    canon.push_back('\n');
    for (const auto& [k, v] : cfg.params) {
        canon += k;
        canon.push_back('=');
        canon += v;
        canon.push_back('\n');
    }
    return fnv1a(canon);
}

namespace detail {

inline std::string hex16(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Deterministic short decimal form; CSV and reports share it.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// output writer

// Streams trial-level records as JSON lines (one flush per record, so a
// killed run keeps everything already produced) and buffers the CSV summary
// and report text until finish().  Every record and CSV row carries the hash
// of the config that produced it.
class Reporter {
  public:
    Reporter(std::string out_dir, std::uint64_t cfg_hash)
        : out_dir_(std::move(out_dir)), hash_hex_(detail::hex16(cfg_hash)) {
        if (!out_dir_.empty()) {
            std::filesystem::create_directories(out_dir_);
            records_file_.open(out_dir_ + "/records.jsonl", std::ios::trunc);
            if (!records_file_)
                throw std::runtime_error("cannot open " + out_dir_ + "/records.jsonl");
        }
    }

    const std::string& config_hex() const { return hash_hex_; }

    void record(nlohmann::json j) {
        j["config"] = hash_hex_;
        const std::string line = j.dump();
        if (records_file_) records_file_ << line << std::endl;
        ++records_;
    }

    // First column of every summary row is the config hash.
    void csv_header(const std::string& columns) {
        if (!csv_.empty()) throw std::logic_error("summary header already written");
        csv_.push_back("config," + columns);
    }

    void csv_row(const std::string& columns) {
        if (csv_.empty()) throw std::logic_error("summary header missing");
        csv_.push_back(hash_hex_ + "," + columns);
    }

    void note(const std::string& line) {
        report_ += line;
        report_.push_back('\n');
    }

    void finish() { write_files(); }

    // Flush partial outputs with an explicit marker so a truncated run is
    // never mistaken for a complete one.
    void truncate_with(const std::string& reason) {
        record({{"truncated", reason}});
        csv_.push_back("# truncated: " + reason);
        note("TRUNCATED: " + reason);
        write_files();
    }

    long records() const { return records_; }
    const std::vector<std::string>& csv() const { return csv_; }
    const std::string& report_text() const { return report_; }

  private:
    void write_files() {
        if (records_file_) records_file_.flush();
        if (out_dir_.empty()) return;
        std::ofstream csv(out_dir_ + "/summary.csv", std::ios::trunc);
        for (const auto& line : csv_) csv << line << '\n';
        std::ofstream rep(out_dir_ + "/report.txt", std::ios::trunc);
        rep << report_;
    }

    std::string out_dir_;
    std::string hash_hex_;
    std::ofstream records_file_;
    std::vector<std::string> csv_;
    std::string report_;
    long records_ = 0;
};

struct RunRecord {
    std::string kind;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string version;
    double wall_seconds = 0.0;
    long records_written = 0;
    std::vector<std::string> summary_csv;
    std::string report;
};

// ---------------------------------------------------------------------------
// parameter resolution

namespace detail {

// Offspring model shared by the branching experiment kinds.  The binary
// model is pinned to alpha = 2; the heavy-tailed model defaults to the
// calibration used throughout the corpus.
struct ModelChoice {
    OffspringModel model;
    double alpha = 0.0;
    std::string name;
};

inline ModelChoice resolve_model(const RunConfig& cfg) {
    const double alpha = cfg.real("alpha", 2.0);
    validate_stability_index(alpha);
    const std::string which = cfg.str("model", alpha == 2.0 ? "binary" : "poisson");
    ModelChoice out;
    out.alpha = alpha;
    out.name = which;
    if (which == "binary") {
        require(alpha == 2.0, "the binary model is defined at alpha = 2; drop --alpha or use --model poisson");
        out.model = make_binary_gaussian_model();
    } else if (which == "poisson") {
        const auto spine = make_pareto_spine(alpha, cfg.real("c", 0.01), cfg.real("y0", 0.3));
        out.model = make_poisson_boundary_model(spine, cfg.real("cut-T", 5.0));
    } else {
        throw std::invalid_argument("unknown model '" + which + "' (choices: binary, poisson)");
    }
    if (cfg.has("cap-R")) {
        const long cap = cfg.integer("cap-R", 0);
        require(cap >= 1, "--cap-R must be a positive brood size");
        out.model.cap = cap;
    }
    return out;
}

inline SurvivalCaps resolve_caps(const RunConfig& cfg) {
    SurvivalCaps caps;
    caps.max_pop = cfg.integer("max-pop", caps.max_pop);
    require(caps.max_pop >= 2, "--max-pop must be at least 2");
    return caps;
}

// Confinement constant for the model behind a run: closed form for the
// binary (Gaussian) case, --cstar otherwise.
inline double resolve_cstar_for_model(const RunConfig& cfg, const ModelChoice& mc) {
    if (cfg.has("cstar")) {
        const double v = cfg.real_required("cstar");
        require(v > 0.0, "--cstar must be positive");
        return v;
    }
    if (mc.name == "binary") return gaussian_confinement_rate(std::sqrt(2.0 * std::log(2.0)));
    throw std::invalid_argument("'" + cfg.kind + "' requires --cstar for the heavy-tailed model");
}

inline PathFunctional resolve_functional(const RunConfig& cfg) {
    const std::string name = cfg.str("functional", "one");
    if (name == "one") return PathFunctional::constant_one;
    if (name == "nonpositive") return PathFunctional::indicator_nonpositive;
    if (name == "tube") return PathFunctional::indicator_tube;
    if (name == "exp") return PathFunctional::exp_bounded;
    if (name == "bivariate") return PathFunctional::bivariate_box;
    throw std::invalid_argument("unknown functional '" + name +
                                "' (choices: one, nonpositive, tube, exp, bivariate)");
}

inline long resolve_trials(const RunConfig& cfg, long fallback) {
    const long trials = cfg.integer("trials", fallback);
    require(trials >= 1, "--trials must be positive");
    return trials;
}

inline std::string estimate_cells(const Estimate& e) {
    return fmt(e.value) + "," + fmt(e.std_error) + "," + fmt(e.lo) + "," + fmt(e.hi);
}

inline nlohmann::json estimate_json(const Estimate& e) {
    return {{"value", e.value}, {"std_error", e.std_error}, {"lo", e.lo}, {"hi", e.hi}};
}

} // namespace detail

// ---------------------------------------------------------------------------
// pipeline

struct PipelineOptions {
    // Heavy-tailed model calibration (ignored at alpha = 2, where the binary
    // model pins the step variance to 2 log 2).
    double tail_const = 0.01;
    double tail_threshold = 0.3;
    double right_cut = 5.0;

    std::vector<long> horizons{250, 500, 1000};
    long trials = 300;
    SurvivalCaps caps{};
    std::uint64_t seed = 20240801;

    bool with_mc = false;  // direct simulation of the confinement rate is slow; opt in
    ConfinementMcOptions mc{};
    ConfinementSpectralOptions spectral{};
};

struct PipelineStageRecord {
    std::string name;
    std::uint64_t seed = 0;
};

struct PipelineReport {
    double alpha = 0.0;
    double motion_scale = 0.0;
    double motion_spread = 0.0;

    double cstar_closed = std::numeric_limits<double>::quiet_NaN();  // alpha = 2 only
    double cstar_mc = std::numeric_limits<double>::quiet_NaN();
    double cstar_mc_se = std::numeric_limits<double>::quiet_NaN();
    double cstar_spectral = 0.0;
    double cstar_spectral_unc = 0.0;
    double cstar_used = 0.0;

    double predicted_a = 0.0;
    double predicted_a_unc = 0.0;

    std::vector<double> a_grid;
    std::vector<Estimate> survival;
    std::vector<long> survival_capped;

    std::vector<long> horizons;
    std::vector<double> crossings;  // finite-n estimates of the critical coefficient
    std::string drift;              // position of the crossings relative to the prediction

    std::vector<PipelineStageRecord> stages;
};

// End-to-end chain: motion scale, confinement rate, predicted critical
// coefficient, survival curve around the prediction, and a bisection search
// for the finite-n crossing at every horizon.  Each stage draws from its own
// derived seed, and a failing stage is reported under its stage name.
inline PipelineReport pipeline_critical_comparison(double alpha, const PipelineOptions& opt) {
    validate_stability_index(alpha);
    require(!opt.horizons.empty(), "pipeline needs at least one horizon");
    for (long n : opt.horizons) require(n >= 2, "pipeline horizons must be at least 2");
    require(opt.trials >= 10, "pipeline needs at least 10 trials per estimate");

    PipelineReport rep;
    rep.alpha = alpha;
    rep.horizons = opt.horizons;

    auto stage_seed = [&](std::uint64_t idx) { return derive_key(opt.seed, 0x50, idx); };
    auto run_stage = [&](const char* name, std::uint64_t idx, auto&& body) {
        rep.stages.push_back({name, stage_seed(idx)});
        try {
            body(stage_seed(idx));
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("stage ") + name + ": " + e.what());
        }
    };

    const bool gaussian = alpha == 2.0;
    const double sigma2 = 2.0 * std::log(2.0);
    std::optional<StableMotion> motion;
    OffspringModel model;

    run_stage("scale", 0, [&](std::uint64_t) {
        if (gaussian) {
            motion.emplace(gaussian_motion(std::sqrt(sigma2)));
            rep.motion_scale = motion->scale;
            rep.motion_spread = 0.0;
            rep.cstar_closed = gaussian_confinement_rate(std::sqrt(sigma2));
            model = make_binary_gaussian_model();
        } else {
            double spread = 0.0;
            const double scale = fit_motion_scale(alpha, opt.tail_const, &spread);
            motion.emplace(alpha, scale);
            rep.motion_scale = scale;
            rep.motion_spread = spread;
            const auto spine = make_pareto_spine(alpha, opt.tail_const, opt.tail_threshold);
            model = make_poisson_boundary_model(spine, opt.right_cut);
        }
    });

    run_stage("confinement", 1, [&](std::uint64_t seed) {
        ConfinementSpectralOptions sp_opt = opt.spectral;
        ConfinementMcOptions mc_opt = opt.mc;
        if (!gaussian) {
            // Budgets are expressed in the motion's own time unit; see the
            // confinement estimators for the scale*dt resolution coupling.
            sp_opt.dt /= motion->scale;
            mc_opt.dt /= motion->scale;
            mc_opt.t_total /= motion->scale;
        }
        const auto sp = estimate_confinement_spectral(*motion, sp_opt);
        rep.cstar_spectral = sp.rate;
        rep.cstar_spectral_unc = sp.uncertainty;
        if (opt.with_mc) {
            const auto mc = estimate_confinement_mc(*motion, mc_opt, seed);
            rep.cstar_mc = mc.rate;
            rep.cstar_mc_se = mc.std_error;
        }
        rep.cstar_used = sp.rate;
    });

    run_stage("prediction", 2, [&](std::uint64_t) {
        rep.predicted_a = critical_coefficient(alpha, rep.cstar_used);
        // First-order propagation of the confinement uncertainty through
        // a ~ cstar^{1/(1+alpha)}.
        rep.predicted_a_unc =
            rep.predicted_a * rep.cstar_spectral_unc / ((1.0 + alpha) * rep.cstar_used);
    });

    run_stage("survival", 3, [&](std::uint64_t seed) {
        for (double mult : {0.6, 0.8, 1.0, 1.2, 1.4}) rep.a_grid.push_back(mult * rep.predicted_a);
        const auto curve =
            survival_curve(model, rep.a_grid, opt.horizons.front(), opt.trials, opt.caps, seed);
        rep.survival = curve.estimates;
        rep.survival_capped = curve.capped_trials;
    });

    run_stage("search", 4, [&](std::uint64_t seed) {
        const double lo = 0.4 * rep.predicted_a, hi = 2.2 * rep.predicted_a;
        for (std::size_t i = 0; i < opt.horizons.size(); ++i) {
            const std::uint64_t key = derive_key(seed, static_cast<std::uint64_t>(i));
            const long n = opt.horizons[i];
            const double s_lo = survival_prob(model, power_barrier(lo, alpha), n, opt.trials,
                                              opt.caps, key, 0).estimate.value;
            const double s_hi = survival_prob(model, power_barrier(hi, alpha), n, opt.trials,
                                              opt.caps, key, 0).estimate.value;
            if (!(s_hi > s_lo))
                throw std::runtime_error("survival is flat across the search bracket at horizon " +
                                         std::to_string(n));
            const double threshold = 0.5 * (s_lo + s_hi);
            const auto found =
                critical_a_search(model, n, opt.trials, lo, hi, threshold, opt.caps, key, 8);
            rep.crossings.push_back(found.crossing);
        }
        bool below = true, above = true;
        for (double c : rep.crossings) {
            below = below && c < rep.predicted_a;
            above = above && c > rep.predicted_a;
        }
        rep.drift = below ? "below the prediction" : above ? "above the prediction" : "mixed";
    });

    return rep;
}

// ---------------------------------------------------------------------------
// experiment kinds

namespace detail {

inline void exec_calibrate(const RunConfig& cfg, Reporter& rep) {
    const double alpha = cfg.real("alpha", 1.5);
    validate_stability_index(alpha);
    const double c = cfg.real("c", 0.01);
    const double y0 = cfg.real("y0", 0.3);
    const auto law = make_pareto_spine(alpha, c, y0);
    const auto cal = validate_boundary_tail(law);

    double scale = std::numeric_limits<double>::quiet_NaN();
    double spread = std::numeric_limits<double>::quiet_NaN();
    if (alpha < 2.0) scale = fit_motion_scale(alpha, c, &spread);

    rep.csv_header("alpha,c,y0,left_weight,left_rate,mass_dev,mean_abs,max_tail_dev,"
                   "motion_scale,motion_spread");
    rep.csv_row(fmt(alpha) + "," + fmt(c) + "," + fmt(y0) + "," + fmt(law.left_weight) + "," +
                fmt(law.left_rate) + "," + fmt(cal.mass_dev) + "," + fmt(cal.mean_abs) + "," +
                fmt(cal.max_tail_dev) + "," + fmt(scale) + "," + fmt(spread));
    rep.record({{"alpha", alpha},
                {"c", c},
                {"y0", y0},
                {"left_weight", law.left_weight},
                {"left_rate", law.left_rate},
                {"mass_dev", cal.mass_dev},
                {"mean_abs", cal.mean_abs},
                {"max_tail_dev", cal.max_tail_dev},
                {"motion_scale", scale},
                {"motion_spread", spread}});

    rep.note("step law: alpha = " + fmt(alpha) + ", tail constant " + fmt(c) + ", threshold " +
             fmt(y0));
    rep.note("left ramp: weight " + fmt(law.left_weight) + ", rate " + fmt(law.left_rate));
    rep.note("boundary residuals: mass " + fmt(cal.mass_dev) + ", mean " + fmt(cal.mean_abs) +
             ", tail " + fmt(cal.max_tail_dev));
    if (alpha < 2.0)
        rep.note("fitted motion scale: " + fmt(scale) + " (grid spread " + fmt(spread) + ")");
    else
        rep.note("alpha = 2: the limiting motion is Gaussian and is parameterized by sigma directly");
}

inline void exec_cstar(const RunConfig& cfg, Reporter& rep) {
    const double alpha = cfg.real("alpha", 2.0);
    validate_stability_index(alpha);

    double closed = std::numeric_limits<double>::quiet_NaN();
    std::optional<StableMotion> motion;
    if (alpha == 2.0) {
        const double sigma = cfg.real("sigma", 1.0);
        motion.emplace(gaussian_motion(sigma));
        closed = gaussian_confinement_rate(sigma);
    } else {
        motion.emplace(alpha, fit_motion_scale(alpha, cfg.real("c", 1.0)));
    }

    ConfinementMcOptions mc_opt;
    mc_opt.dt = cfg.real("dt", mc_opt.dt);
    mc_opt.n_particles = static_cast<int>(cfg.integer("particles", mc_opt.n_particles));
    const bool with_mc = cfg.integer("mc", 1) != 0;

    ConfinementSpectralOptions sp_opt;
    sp_opt.n_bins = static_cast<int>(cfg.integer("bins", sp_opt.n_bins));
    sp_opt.dt_levels = static_cast<int>(cfg.integer("levels", sp_opt.dt_levels));

    if (alpha < 2.0) {
        // Kernel resolution is set by scale*dt and the decay time by
        // 1/(scale*rate), so express both budgets in the motion's own time
        // unit; a small fitted scale would otherwise starve the grid.
        mc_opt.dt /= motion->scale;
        mc_opt.t_total /= motion->scale;
        sp_opt.dt /= motion->scale;
    }

    rep.csv_header("method,rate,uncertainty");
    if (alpha == 2.0) {
        rep.csv_row("closed," + fmt(closed) + ",0");
        rep.note("confinement rate, closed form: " + fmt(closed));
    } else {
        rep.note("motion scale fitted from the step tail: " + fmt(motion->scale));
    }

    if (with_mc) {
        const auto mc = estimate_confinement_mc(*motion, mc_opt, derive_key(cfg.seed(), 0x4D));
        rep.csv_row("mc," + fmt(mc.rate) + "," + fmt(mc.std_error));
        for (std::size_t i = 0; i < mc.replicate_rates.size(); ++i)
            rep.record({{"method", "mc"}, {"replicate", i}, {"rate", mc.replicate_rates[i]}});
        rep.note("confinement rate, direct simulation: " + fmt(mc.rate) + " +/- " +
                 fmt(mc.std_error) + " (dt " + fmt(mc.dt) +
                 (mc.bridged ? ", bridge-corrected)" : ")"));
        if (alpha == 2.0)
            rep.note("  relative gap to closed form: " + fmt((mc.rate - closed) / closed));
    }

    const auto sp = estimate_confinement_spectral(*motion, sp_opt);
    rep.csv_row("spectral," + fmt(sp.rate) + "," + fmt(sp.uncertainty));
    for (std::size_t i = 0; i < sp.dts.size(); ++i)
        rep.record({{"method", "spectral"}, {"dt", sp.dts[i]}, {"rate", sp.skeleton_rates[i]}});
    rep.note("confinement rate, spectral extrapolation: " + fmt(sp.rate) + " (uncertainty " +
             fmt(sp.uncertainty) + ", bin gap " + fmt(sp.bin_gap) + ")");
    if (alpha == 2.0)
        rep.note("  relative gap to closed form: " + fmt((sp.rate - closed) / closed));
}

inline void exec_tube(const RunConfig& cfg, Reporter& rep) {
    const double alpha = cfg.real("alpha", 2.0);
    validate_stability_index(alpha);
    const double width = cfg.real("width", 1.0);
    require(width > 0.0, "--width must be positive");
    const auto horizons = cfg.integer_list("horizons", {200, 400, 800});
    const long trials = resolve_trials(cfg, 4000);

    const auto lower = PiecewiseLinear::constant(-0.5 * width);
    const auto upper = PiecewiseLinear::constant(0.5 * width);

    RateTrendReport out;
    if (alpha == 2.0) {
        const double sigma = cfg.real("sigma", 1.0);
        const double cstar = cfg.real("cstar", gaussian_confinement_rate(sigma));
        out = empirical_rate(GaussianStepLaw(sigma), lower, upper, alpha, cstar, horizons, trials,
                             cfg.seed());
    } else {
        const auto spine = make_pareto_spine(alpha, cfg.real("c", 0.01), cfg.real("y0", 0.3));
        double cstar = cfg.real("cstar", 0.0);
        if (cstar <= 0.0) {
            const StableMotion motion(alpha, fit_motion_scale(alpha, spine.tail_const));
            ConfinementSpectralOptions sp_opt;
            sp_opt.dt /= motion.scale;
            cstar = estimate_confinement_spectral(motion, sp_opt).rate;
        }
        out = empirical_rate(spine, lower, upper, alpha, cstar, horizons, trials, cfg.seed());
    }

    rep.csv_header("horizon,prob_estimate,fitted_rate");
    for (std::size_t i = 0; i < out.horizons.size(); ++i) {
        rep.csv_row(std::to_string(out.horizons[i]) + "," + fmt(out.prob_estimates[i]) + "," +
                    fmt(out.per_horizon[i]));
        rep.record({{"horizon", out.horizons[i]},
                    {"prob", out.prob_estimates[i]},
                    {"rate", out.per_horizon[i]}});
    }
    rep.note("corridor width " + fmt(width) + ", trials " + std::to_string(trials));
    rep.note("rate functional for this corridor: " + fmt(out.functional));
    rep.note("extrapolated empirical rate: " + fmt(out.extrapolated) + " (relative gap " +
             fmt(out.gap) + ")");
    if (!out.excluded.empty()) {
        std::string hs;
        for (long n : out.excluded) hs += (hs.empty() ? "" : ", ") + std::to_string(n);
        rep.note("horizons with no surviving paths were excluded from the fit: " + hs);
    }
}

inline void exec_manytoone(const RunConfig& cfg, Reporter& rep) {
    const auto mc = resolve_model(cfg);
    const long n = cfg.integer("n", 1);
    const auto functional = resolve_functional(cfg);
    const long trials = resolve_trials(cfg, 20000);

    const auto out = many_to_one_check(mc.model, n, functional, trials, cfg.seed());

    rep.csv_header("model,n,functional,tree,tree_se,walk,walk_se,cut_bias,consistent");
    rep.csv_row(mc.name + "," + std::to_string(n) + "," + cfg.str("functional", "one") + "," +
                fmt(out.tree_side.value) + "," + fmt(out.tree_side.std_error) + "," +
                fmt(out.walk_side.value) + "," + fmt(out.walk_side.std_error) + "," +
                fmt(out.cut_bias) + "," + (out.consistent ? "1" : "0"));
    rep.record({{"model", mc.name},
                {"n", n},
                {"functional", cfg.str("functional", "one")},
                {"tree", estimate_json(out.tree_side)},
                {"walk", estimate_json(out.walk_side)},
                {"cut_bias", out.cut_bias},
                {"consistent", out.consistent}});

    rep.note("generation-" + std::to_string(n) + " identity, " + std::to_string(trials) +
             " trials per side");
    rep.note("tree side: " + fmt(out.tree_side.value) + " +/- " + fmt(out.tree_side.std_error));
    rep.note("walk side: " + fmt(out.walk_side.value) + " +/- " + fmt(out.walk_side.std_error));
    rep.note("cut bias allowance: " + fmt(out.cut_bias));
    rep.note(out.consistent ? "confidence intervals overlap within the bias allowance"
                            : "MISMATCH: intervals fail to overlap within the bias allowance");
}

inline void exec_survival(const RunConfig& cfg, Reporter& rep) {
    const auto mc = resolve_model(cfg);
    const auto caps = resolve_caps(cfg);
    const long horizon = cfg.integer("n", 1000);
    require(horizon >= 1, "--n must be positive");
    const long trials = resolve_trials(cfg, 2000);

    rep.csv_header("barrier,a,estimate,std_error,lo,hi,capped_trials");

    if (cfg.has("eps")) {
        const double eps = cfg.real_required("eps");
        const auto out = linear_barrier_check(mc.model, eps, horizon, trials, caps, cfg.seed());
        rep.csv_row("linear," + fmt(eps) + "," + estimate_cells(out.estimate) + "," +
                    std::to_string(out.capped_trials));
        rep.record({{"barrier", "linear"},
                    {"eps", eps},
                    {"estimate", estimate_json(out.estimate)},
                    {"capped_trials", out.capped_trials}});
        rep.note("linear wall at slope " + fmt(eps) + ", horizon " + std::to_string(horizon) +
                 ": survival " + fmt(out.estimate.value) + " +/- " + fmt(out.estimate.std_error));
        return;
    }

    const auto a_list = cfg.real_list_required("a");
    for (double a : a_list) require(a > 0.0, "barrier coefficients must be positive");

    if (a_list.size() == 1) {
        const auto out = survival_prob(mc.model, power_barrier(a_list[0], mc.alpha), horizon,
                                       trials, caps, cfg.seed());
        rep.csv_row("power," + fmt(a_list[0]) + "," + estimate_cells(out.estimate) + "," +
                    std::to_string(out.capped_trials));
        rep.record({{"barrier", "power"},
                    {"a", a_list[0]},
                    {"estimate", estimate_json(out.estimate)},
                    {"capped_trials", out.capped_trials},
                    {"aux_runs", out.aux_runs},
                    {"aux_extinctions", out.aux_extinctions}});
        rep.note("survival at a = " + fmt(a_list[0]) + ", horizon " + std::to_string(horizon) +
                 ": " + fmt(out.estimate.value) + " +/- " + fmt(out.estimate.std_error));
        if (out.capped_trials > 0)
            rep.note("capped trials: " + std::to_string(out.capped_trials) + "; continuation audit " +
                     std::to_string(out.aux_extinctions) + "/" + std::to_string(out.aux_runs) +
                     " extinctions");
        return;
    }

    const auto curve = survival_curve(mc.model, a_list, horizon, trials, caps, cfg.seed());
    for (std::size_t i = 0; i < a_list.size(); ++i) {
        rep.csv_row("power," + fmt(a_list[i]) + "," + estimate_cells(curve.estimates[i]) + "," +
                    std::to_string(curve.capped_trials[i]));
        rep.record({{"barrier", "power"},
                    {"a", a_list[i]},
                    {"estimate", estimate_json(curve.estimates[i])},
                    {"capped_trials", curve.capped_trials[i]}});
    }
    rep.note("survival curve over " + std::to_string(a_list.size()) + " barrier coefficients, horizon " +
             std::to_string(horizon) + ", " + std::to_string(trials) +
             " trials each (common random numbers)");
    rep.note("estimates run from " + fmt(curve.estimates.front().value) + " to " +
             fmt(curve.estimates.back().value));
}

inline void exec_critical(const RunConfig& cfg, Reporter& rep) {
    const double alpha = cfg.real("alpha", 2.0);
    validate_stability_index(alpha);
    double cstar;
    if (cfg.has("cstar")) {
        cstar = cfg.real_required("cstar");
    } else if (alpha == 2.0) {
        cstar = gaussian_confinement_rate(cfg.real("sigma", 1.0));
    } else {
        throw std::invalid_argument("'critical' requires --cstar for alpha < 2");
    }
    require(cstar > 0.0, "confinement constant must be positive");
    const auto a_list = cfg.real_list_required("a");

    const double a_crit = critical_coefficient(alpha, cstar);
    rep.note("critical coefficient at alpha " + fmt(alpha) + ", cstar " + fmt(cstar) + ": " +
             fmt(a_crit));

    rep.csv_header("alpha,cstar,a_alpha,a,r_a,t_max,K");
    for (double a : a_list) {
        require(a > 0.0, "barrier coefficients must be positive");
        double r_a = std::numeric_limits<double>::quiet_NaN();
        double t_max = std::numeric_limits<double>::infinity();
        double decay = std::numeric_limits<double>::quiet_NaN();
        bool exhausted = false;
        if (a >= a_crit) {
            r_a = tradeoff_upper_root(a, alpha, cstar);
        } else {
            const auto sol = solve_profile(a, alpha, cstar, 1.0, 1e-12);
            t_max = sol.t_max;
            if (sol.blew_down)
                decay = sol.decay_scale;
            else
                exhausted = true;  // barely subcritical: collapse beyond the step budget
        }
        rep.csv_row(fmt(alpha) + "," + fmt(cstar) + "," + fmt(a_crit) + "," + fmt(a) + "," +
                    fmt(r_a) + "," + fmt(t_max) + "," + fmt(decay));
        rep.record({{"a", a}, {"r_a", r_a}, {"t_max", t_max}, {"K", decay}});
        if (a >= a_crit)
            rep.note("a = " + fmt(a) + ": supercritical, corridor depth r_a = " + fmt(r_a));
        else if (exhausted)
            rep.note("a = " + fmt(a) + ": subcritical but too close to critical, no blow-down "
                     "inside the step budget");
        else
            rep.note("a = " + fmt(a) + ": subcritical, blow-down at " + fmt(t_max) +
                     ", decay constant " + fmt(decay));
    }
}

inline void exec_ode(const RunConfig& cfg, Reporter& rep) {
    const double alpha = cfg.real("alpha", 1.5);
    validate_stability_index(alpha);
    const double cstar = cfg.real("cstar", 1.0);
    require(cstar > 0.0, "--cstar must be positive");
    const double a = cfg.real("a", 0.0);
    require(a >= 0.0, "--a must be nonnegative");
    const double h0 = cfg.real("h0", 1.0);
    require(h0 > 0.0, "--h0 must be positive");

    const auto sol = solve_profile(a, alpha, cstar, h0);

    rep.csv_header("t,h,confine");
    const std::size_t stride = std::max<std::size_t>(1, sol.t.size() / 512);
    for (std::size_t i = 0; i < sol.t.size(); i += stride) {
        rep.csv_row(fmt(sol.t[i]) + "," + fmt(sol.h[i]) + "," + fmt(sol.confine[i]));
        rep.record({{"t", sol.t[i]}, {"h", sol.h[i]}, {"confine", sol.confine[i]}});
    }

    rep.note("profile from h0 = " + fmt(h0) + " at a = " + fmt(a) + ", alpha " + fmt(alpha) +
             ", cstar " + fmt(cstar));
    rep.note(sol.blew_down ? "blow-down time: " + fmt(sol.t_max)
                           : "no blow-down inside the step budget");
    if (sol.blew_down) rep.note("decay constant: " + fmt(sol.decay_scale));
    rep.note("conservation residual: " + fmt(sol.conservation_residual));
    if (a == 0.0) {
        const double t_closed = std::pow(h0, 1.0 + alpha) / ((1.0 + alpha) * cstar);
        rep.note("drift-free closed-form blow-down: " + fmt(t_closed) + " (gap " +
                 fmt(sol.t_max - t_closed) + ")");
    }
}

inline void exec_bn(const RunConfig& cfg, Reporter& rep) {
    const auto mc = resolve_model(cfg);
    const auto caps = resolve_caps(cfg);
    const double cstar = resolve_cstar_for_model(cfg, mc);
    const double a_crit = critical_coefficient(mc.alpha, cstar);
    const double a = cfg.real("a", 1.5 * a_crit);
    require(a > a_crit, "the corridor experiment needs a supercritical coefficient (a > " +
                            fmt(a_crit) + ")");
    const double r_a = tradeoff_upper_root(a, mc.alpha, cstar);
    const double eps = cfg.real("eps", 0.8 * r_a);
    const long base_n = cfg.integer("base", 4);
    const int k_max = static_cast<int>(cfg.integer("kmax", 3));
    const long trials = resolve_trials(cfg, 1000);

    const auto out = bn_experiment(mc.model, a, base_n, k_max, eps, cstar, trials, caps, cfg.seed());

    rep.csv_header("k,checkpoint,threshold,frequency,std_error,lo,hi");
    for (std::size_t k = 0; k < out.checkpoints.size(); ++k) {
        rep.csv_row(std::to_string(k + 1) + "," + std::to_string(out.checkpoints[k]) + "," +
                    fmt(out.thresholds[k]) + "," + estimate_cells(out.frequency[k]));
        rep.record({{"k", k + 1},
                    {"checkpoint", out.checkpoints[k]},
                    {"threshold", out.thresholds[k]},
                    {"frequency", estimate_json(out.frequency[k])}});
    }
    rep.note("corridor occupation at a = " + fmt(a) + " (eps " + fmt(eps) + ", depth r_a " +
             fmt(out.tradeoff_root) + ")");
    rep.note("deepest checkpoint frequency: " + fmt(out.frequency.back().value) +
             " (95% lower bound " + fmt(out.frequency.back().lo) + ")");
    if (out.capped_trials > 0)
        rep.note("capped trials: " + std::to_string(out.capped_trials));
}

inline void exec_pipeline(const RunConfig& cfg, Reporter& rep) {
    const double alpha = cfg.real("alpha", 2.0);
    PipelineOptions opt;
    opt.tail_const = cfg.real("c", opt.tail_const);
    opt.tail_threshold = cfg.real("y0", opt.tail_threshold);
    opt.right_cut = cfg.real("cut-T", opt.right_cut);
    opt.horizons = cfg.integer_list("horizons", opt.horizons);
    opt.trials = resolve_trials(cfg, opt.trials);
    opt.caps = resolve_caps(cfg);
    opt.seed = cfg.seed();
    opt.with_mc = cfg.integer("mc", 0) != 0;
    opt.mc.dt = cfg.real("dt", opt.mc.dt);
    opt.mc.n_particles = static_cast<int>(cfg.integer("particles", opt.mc.n_particles));
    opt.spectral.n_bins = static_cast<int>(cfg.integer("bins", opt.spectral.n_bins));
    opt.spectral.dt_levels = static_cast<int>(cfg.integer("levels", opt.spectral.dt_levels));

    const auto out = pipeline_critical_comparison(alpha, opt);

    for (const auto& st : out.stages)
        rep.record({{"stage", st.name}, {"stage_seed", st.seed}});

    rep.csv_header("stage,quantity,value,uncertainty");
    rep.csv_row("scale,motion_scale," + fmt(out.motion_scale) + "," + fmt(out.motion_spread));
    if (!std::isnan(out.cstar_closed))
        rep.csv_row("confinement,cstar_closed," + fmt(out.cstar_closed) + ",0");
    if (!std::isnan(out.cstar_mc))
        rep.csv_row("confinement,cstar_mc," + fmt(out.cstar_mc) + "," + fmt(out.cstar_mc_se));
    rep.csv_row("confinement,cstar_spectral," + fmt(out.cstar_spectral) + "," +
                fmt(out.cstar_spectral_unc));
    rep.csv_row("prediction,a_alpha," + fmt(out.predicted_a) + "," + fmt(out.predicted_a_unc));
    for (std::size_t i = 0; i < out.a_grid.size(); ++i) {
        rep.csv_row("survival,s(" + fmt(out.a_grid[i]) + ")," + fmt(out.survival[i].value) + "," +
                    fmt(out.survival[i].std_error));
        rep.record({{"stage", "survival"},
                    {"a", out.a_grid[i]},
                    {"estimate", estimate_json(out.survival[i])},
                    {"capped_trials", out.survival_capped[i]}});
    }
    for (std::size_t i = 0; i < out.horizons.size(); ++i) {
        rep.csv_row("search,crossing(n=" + std::to_string(out.horizons[i]) + ")," +
                    fmt(out.crossings[i]) + ",nan");
        rep.record({{"stage", "search"}, {"horizon", out.horizons[i]}, {"crossing", out.crossings[i]}});
    }

    rep.note("pipeline at alpha = " + fmt(alpha));
    rep.note("motion scale: " + fmt(out.motion_scale));
    if (!std::isnan(out.cstar_closed))
        rep.note("confinement rate, closed form: " + fmt(out.cstar_closed));
    if (!std::isnan(out.cstar_mc))
        rep.note("confinement rate, direct simulation: " + fmt(out.cstar_mc) + " +/- " +
                 fmt(out.cstar_mc_se));
    rep.note("confinement rate, spectral: " + fmt(out.cstar_spectral) + " (uncertainty " +
             fmt(out.cstar_spectral_unc) + ")");
    rep.note("predicted critical coefficient: " + fmt(out.predicted_a) + " +/- " +
             fmt(out.predicted_a_unc));
    std::string xs;
    for (double c : out.crossings) xs += (xs.empty() ? "" : ", ") + fmt(c);
    rep.note("finite-horizon crossings: " + xs);
    rep.note("crossings sit " + out.drift);
}

// Parameter checks shared with run(): everything that can be rejected without
// computing is rejected here, before any output exists.
inline void prepare(const RunConfig& cfg) {
    const std::string& k = cfg.kind;
    if (k == "calibrate") {
        const double alpha = cfg.real("alpha", 1.5);
        validate_stability_index(alpha);
        make_pareto_spine(alpha, cfg.real("c", 0.01), cfg.real("y0", 0.3));
    } else if (k == "cstar") {
        const double alpha = cfg.real("alpha", 2.0);
        validate_stability_index(alpha);
        if (alpha == 2.0) gaussian_motion(cfg.real("sigma", 1.0));
        else StableMotion(alpha, fit_motion_scale(alpha, cfg.real("c", 1.0)));
    } else if (k == "tube") {
        const double alpha = cfg.real("alpha", 2.0);
        validate_stability_index(alpha);
        require(cfg.real("width", 1.0) > 0.0, "--width must be positive");
        const auto horizons = cfg.integer_list("horizons", {200, 400, 800});
        require(horizons.size() >= 2, "the rate fit needs two or more horizons");
        resolve_trials(cfg, 4000);
        if (alpha < 2.0) make_pareto_spine(alpha, cfg.real("c", 0.01), cfg.real("y0", 0.3));
    } else if (k == "manytoone") {
        const auto mc = resolve_model(cfg);
        const long n = cfg.integer("n", 1);
        require(n >= 1 && n <= 6, "--n must lie in 1..6 (the tree side is exponential in n)");
        if (resolve_functional(cfg) == PathFunctional::bivariate_box)
            require(n == 1, "the bivariate functional compares a single generation");
        resolve_trials(cfg, 20000);
        if (mc.model.kind == OffspringModel::Kind::poisson_boundary)
            require(mc.model.brood_mean <= 64.0, "mean brood size too large for the tree side");
    } else if (k == "survival") {
        resolve_model(cfg);
        resolve_caps(cfg);
        require(cfg.integer("n", 1000) >= 1, "--n must be positive");
        resolve_trials(cfg, 2000);
        if (!cfg.has("eps")) cfg.real_list_required("a");
    } else if (k == "critical") {
        const double alpha = cfg.real("alpha", 2.0);
        validate_stability_index(alpha);
        if (!cfg.has("cstar") && alpha != 2.0)
            throw std::invalid_argument("'critical' requires --cstar for alpha < 2");
        cfg.real_list_required("a");
    } else if (k == "ode") {
        const double alpha = cfg.real("alpha", 1.5);
        validate_stability_index(alpha);
        require(cfg.real("cstar", 1.0) > 0.0, "--cstar must be positive");
        require(cfg.real("a", 0.0) >= 0.0, "--a must be nonnegative");
        require(cfg.real("h0", 1.0) > 0.0, "--h0 must be positive");
    } else if (k == "bn") {
        const auto mc = resolve_model(cfg);
        resolve_caps(cfg);
        const double cstar = resolve_cstar_for_model(cfg, mc);
        const double a_crit = critical_coefficient(mc.alpha, cstar);
        const double a = cfg.real("a", 1.5 * a_crit);
        require(a > a_crit, "the corridor experiment needs a supercritical coefficient (a > " +
                                fmt(a_crit) + ")");
        const double r_a = tradeoff_upper_root(a, mc.alpha, cstar);
        const double eps = cfg.real("eps", 0.8 * r_a);
        require(eps > 0.0 && eps < r_a, "--eps must lie in (0, r_a)");
        require(cfg.integer("base", 4) >= 2, "--base must be at least 2");
        require(cfg.integer("kmax", 3) >= 1, "--kmax must be at least 1");
        resolve_trials(cfg, 1000);
    } else if (k == "pipeline") {
        const double alpha = cfg.real("alpha", 2.0);
        validate_stability_index(alpha);
        const auto horizons = cfg.integer_list("horizons", {250, 500, 1000});
        require(!horizons.empty(), "pipeline needs at least one horizon");
        require(resolve_trials(cfg, 300) >= 10, "pipeline needs at least 10 trials per estimate");
        if (alpha < 2.0) make_pareto_spine(alpha, cfg.real("c", 0.01), cfg.real("y0", 0.3));
    } else {
        throw std::invalid_argument(
            "unknown experiment kind '" + k +
            "' (choices: calibrate, cstar, tube, manytoone, survival, critical, ode, bn, pipeline)");
    }
}

inline void dispatch(const RunConfig& cfg, Reporter& rep) {
    if (cfg.kind == "calibrate") exec_calibrate(cfg, rep);
    else if (cfg.kind == "cstar") exec_cstar(cfg, rep);
    else if (cfg.kind == "tube") exec_tube(cfg, rep);
    else if (cfg.kind == "manytoone") exec_manytoone(cfg, rep);
    else if (cfg.kind == "survival") exec_survival(cfg, rep);
    else if (cfg.kind == "critical") exec_critical(cfg, rep);
    else if (cfg.kind == "ode") exec_ode(cfg, rep);
    else if (cfg.kind == "bn") exec_bn(cfg, rep);
    else exec_pipeline(cfg, rep);
}

} // namespace detail

inline void validate_run_config(const RunConfig& cfg) { detail::prepare(cfg); }

// Validate, execute, and persist one experiment.  Validation happens before
// the output directory is touched; a failure mid-run flushes whatever was
// produced together with a truncation marker and rethrows.
inline RunRecord run(const RunConfig& cfg) {
    detail::prepare(cfg);

    RunRecord rec;
    rec.kind = cfg.kind;
    rec.config_hash = config_hash(cfg);
    rec.seed = cfg.seed();
    rec.version = library_version;

    Reporter rep(cfg.out_dir, rec.config_hash);
    rep.note(cfg.kind + " run");
    rep.note("config " + rep.config_hex() + "  seed " + std::to_string(rec.seed) + "  version " +
             rec.version);
    rep.note("");

    const auto t0 = std::chrono::steady_clock::now();
    try {
        detail::dispatch(cfg, rep);
    } catch (const std::exception& e) {
        rep.truncate_with(e.what());
        throw;
    }
    rep.finish();

    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.records_written = rep.records();
    rec.summary_csv = rep.csv();
    rec.report = rep.report_text();
    return rec;
}

} // namespace sbrw
