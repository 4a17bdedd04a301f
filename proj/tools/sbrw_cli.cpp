// Command-line front end: one subcommand per experiment kind, flags mirrored
// by an optional key = value config file (flags win).  Results land under
// --out as records.jsonl, summary.csv, and report.txt; the report is echoed
// to stdout either way.

#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "sbrw/harness.hpp"

namespace {

struct FlagSpec {
    const char* flag;
    const char* key;
    const char* help;
};

// Shared across all subcommands; each kind reads the subset it understands
// and validation rejects what a kind requires but did not get.
constexpr FlagSpec kFlags[] = {
    {"--alpha", "alpha", "stability index in (1, 2]"},
    {"--c", "c", "step tail constant"},
    {"--y0", "y0", "step tail threshold"},
    {"--a", "a", "barrier coefficient (comma list where a curve is meant)"},
    {"--b", "b", "corridor offset"},
    {"--lambda", "lambda", "corridor segment ratio"},
    {"--n", "n", "horizon in generations"},
    {"--trials", "trials", "Monte Carlo trials"},
    {"--seed", "seed", "master seed"},
    {"--max-pop", "max-pop", "population cap per trial"},
    {"--cap-R", "cap-R", "brood-size cap"},
    {"--cut-T", "cut-T", "right cut of the offspring intensity"},
    {"--sigma", "sigma", "step standard deviation (alpha = 2)"},
    {"--cstar", "cstar", "confinement constant override"},
    {"--eps", "eps", "linear wall slope, or corridor shrink for bn"},
    {"--width", "width", "tube width"},
    {"--horizons", "horizons", "comma list of horizons"},
    {"--functional", "functional", "path functional: one, nonpositive, tube, exp, bivariate"},
    {"--model", "model", "offspring model: binary or poisson"},
    {"--base", "base", "checkpoint base N"},
    {"--kmax", "kmax", "number of checkpoints"},
    {"--h0", "h0", "initial profile value"},
    {"--dt", "dt", "time step for direct simulation"},
    {"--particles", "particles", "particles for direct simulation"},
    {"--bins", "bins", "spatial bins for the spectral estimate"},
    {"--levels", "levels", "dt levels for the spectral estimate"},
    {"--mc", "mc", "0/1: run the direct-simulation estimate"},
};

struct SubState {
    CLI::App* app = nullptr;
    std::string config_path;
    std::string out_dir;
    std::map<std::string, std::string> values;
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"branching random walk experiments"};
    app.require_subcommand(1);

    const std::pair<const char*, const char*> kinds[] = {
        {"calibrate", "step-law boundary calibration and motion scale"},
        {"cstar", "confinement constant estimates"},
        {"tube", "corridor probabilities and the empirical rate"},
        {"manytoone", "tree-versus-walk identity check"},
        {"survival", "barrier survival probabilities"},
        {"critical", "closed-form critical constants table"},
        {"ode", "critical profile solve"},
        {"bn", "corridor occupation frequencies"},
        {"pipeline", "end-to-end critical comparison"},
    };

    std::map<std::string, SubState> subs;
    for (const auto& [name, help] : kinds) {
        auto& st = subs[name];
        st.app = app.add_subcommand(name, help);
        st.app->add_option("--config", st.config_path, "key = value file mirroring the flags");
        st.app->add_option("--out", st.out_dir, "output directory");
        for (const auto& f : kFlags) st.app->add_option(f.flag, st.values[f.key], f.help);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        for (const auto& [name, st] : subs) {
            if (!st.app->parsed()) continue;
            std::map<std::string, std::string> file_params;
            if (!st.config_path.empty()) file_params = sbrw::load_config_file(st.config_path);
            std::map<std::string, std::string> flag_params;
            for (const auto& f : kFlags)
                if (st.app->count(f.flag) > 0) flag_params[f.key] = st.values.at(f.key);
            const auto cfg = sbrw::make_run_config(name, file_params, flag_params, st.out_dir);

            const auto rec = sbrw::run(cfg);
            std::cout << rec.report;
            if (!cfg.out_dir.empty())
                std::cout << "\nwrote " << cfg.out_dir << "/records.jsonl, summary.csv, report.txt ("
                          << rec.records_written << " records, " << sbrw::detail::fmt(rec.wall_seconds)
                          << " s)\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
