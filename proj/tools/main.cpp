#include <cstdio>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsgt/harness.hpp"

namespace {

nlohmann::json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dsgt::config_error("config: cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw dsgt::config_error(std::string("config: invalid JSON: ") + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-agent zero-order gradient-tracking engine"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    long long seed_override = -1;
    int reps_override = -1;
    bool quiet = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed_override, "override algorithm seed");
        sub->add_option("--reps", reps_override, "override repetition count");
        sub->add_flag("--quiet", quiet, "suppress progress output");
    };

    auto* c_run = app.add_subcommand("run", "execute an experiment, write trace + summary");
    add_common(c_run);
    auto* c_cert = app.add_subcommand("certify", "emit a rate certificate JSON");
    add_common(c_cert);
    auto* c_sweep = app.add_subcommand("sweep", "exponent-grid sweep, long-format CSV");
    add_common(c_sweep);

    auto* c_gen = app.add_subcommand("gen-data", "synthetic two-cluster dataset CSV");
    int gd_samples = 1000, gd_dim = 10;
    double gd_sep = 4.0;
    long long gd_seed = 1;
    std::string gd_out = "data.csv";
    c_gen->add_option("--samples", gd_samples, "number of rows");
    c_gen->add_option("--dim", gd_dim, "feature dimension");
    c_gen->add_option("--separation", gd_sep, "cluster separation");
    c_gen->add_option("--seed", gd_seed, "generator seed");
    c_gen->add_option("--out", gd_out, "output CSV path");
    c_gen->add_flag("--quiet", quiet, "suppress progress output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_gen->parsed()) {
            int rc = dsgt::cmd_gen_data(gd_samples, gd_dim, gd_sep,
                                        static_cast<std::uint64_t>(gd_seed), gd_out);
            if (!quiet) std::fprintf(stdout, "wrote %s\n", gd_out.c_str());
            return rc;
        }
        nlohmann::json cfg = load_config(config_path);
        if (seed_override >= 0) cfg["algorithm"]["seed"] = seed_override;
        if (reps_override >= 0) cfg["reps"] = reps_override;
        if (c_run->parsed()) return dsgt::cmd_run(cfg, out_dir, quiet);
        if (c_cert->parsed()) return dsgt::cmd_certify(cfg, out_dir, quiet);
        if (c_sweep->parsed()) return dsgt::cmd_sweep(cfg, out_dir, quiet);
    } catch (const dsgt::config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const dsgt::divergence_error& e) {
        std::fprintf(stderr, "diverged at k=%lld\n", e.at_k);
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
