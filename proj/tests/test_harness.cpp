#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsgt/harness.hpp"

using namespace dsgt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json small_quadratic_config() {
    return nlohmann::json{
        {"topology", {{"n", 5}, {"p", 0.6}, {"seed", 3}}},
        {"objective",
         {{"kind", "quadratic"}, {"d", 3}, {"condition", 2.0}, {"seed", 5}}},
        {"algorithm",
         {{"name", "onepoint_dsgt"},
          {"alpha0", 0.2},
          {"upsilon1", 0.75},
          {"gamma0", 1.3},
          {"upsilon2", 0.25},
          {"scale", 1.5},
          {"seed", 11},
          {"max_iters", 2000},
          {"x0_box", 0.5}}},
        {"stride", 10},
        {"reps", 2}};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config validation produces field-level messages") {
    nlohmann::json cfg = small_quadratic_config();
    cfg.erase("topology");
    REQUIRE_THROWS_WITH(parse_config(cfg), Catch::Matchers::ContainsSubstring("topology"));

    cfg = small_quadratic_config();
    cfg["topology"]["p"] = 1.5;
    REQUIRE_THROWS_WITH(parse_config(cfg), Catch::Matchers::ContainsSubstring("topology.p"));

    cfg = small_quadratic_config();
    cfg["objective"]["kind"] = "cubic";
    REQUIRE_THROWS_WITH(parse_config(cfg),
                        Catch::Matchers::ContainsSubstring("objective.kind"));

    cfg = small_quadratic_config();
    cfg["algorithm"].erase("alpha0");
    REQUIRE_THROWS_WITH(parse_config(cfg),
                        Catch::Matchers::ContainsSubstring("algorithm.alpha0"));

    cfg = small_quadratic_config();
    cfg["algorithm"]["upsilon1"] = 0.4;
    REQUIRE_THROWS_AS(parse_config(cfg), config_error);

    cfg = small_quadratic_config();
    cfg["reps"] = 0;
    REQUIRE_THROWS_WITH(parse_config(cfg), Catch::Matchers::ContainsSubstring("reps"));
}

TEST_CASE("paper-shaped configuration passes validation") {
    nlohmann::json cfg{
        {"topology", {{"n", 21}, {"p", 0.3}, {"seed", 7}}},
        {"objective",
         {{"kind", "quadratic"}, {"d", 5}, {"condition", 3.0}, {"seed", 1}}},
        {"algorithm",
         {{"alpha0", 0.2},
          {"upsilon1", 0.75},
          {"gamma0", 1.3},
          {"upsilon2", 0.25},
          {"scale", 1.5},
          {"max_iters", 100}}}};
    Experiment ex = parse_config(cfg);
    REQUIRE(ex.topology.n == 21);
    REQUIRE(ex.algo.perturbation.scale == 1.5);
    REQUIRE(ex.mixing.rho_w < 1.0);
}

TEST_CASE("trace csv round trip is exact") {
    Objective obj = make_quadratic(4, 3, 2.0, 2);
    MixingMatrix w = metropolis_weights(erdos_renyi(4, 0.7, 2));
    AlgoConfig cfg;
    cfg.schedule = Schedule{0.2, 0.75, 1.3, 0.25};
    cfg.perturbation = {3, 1.5};
    cfg.seed = 4;
    cfg.max_iters = 500;
    RunTrace t = run(obj, w, cfg, 25);

    TempDir dir("dsgt_trace_rt");
    std::string path = dir.str() + "/trace.csv";
    write_trace_csv(t, path, "deadbeef");
    RunTrace back = read_trace_csv(path);
    REQUIRE(back.rows.size() == t.rows.size());
    for (size_t i = 0; i < t.rows.size(); ++i) {
        REQUIRE(back.rows[i].k == t.rows[i].k);
        REQUIRE(back.rows[i].loss == t.rows[i].loss);
        REQUIRE(back.rows[i].divergence == t.rows[i].divergence);
        REQUIRE(back.rows[i].consensus == t.rows[i].consensus);
        REQUIRE(back.rows[i].cum_regret == t.rows[i].cum_regret);
    }
    REQUIRE(slurp(path).find("# config_hash=deadbeef") == 0);
}

TEST_CASE("cmd_run writes averaged trace and summary; reruns are byte-identical") {
    nlohmann::json cfg = small_quadratic_config();
    cfg["reps"] = 1;
    TempDir a("dsgt_run_a"), b("dsgt_run_b");
    REQUIRE(cmd_run(cfg, a.str(), true) == 0);
    REQUIRE(cmd_run(cfg, b.str(), true) == 0);
    REQUIRE(slurp(a.str() + "/trace.csv") == slurp(b.str() + "/trace.csv"));
    REQUIRE(slurp(a.str() + "/summary.json") == slurp(b.str() + "/summary.json"));

    auto summary = nlohmann::json::parse(slurp(a.str() + "/summary.json"));
    REQUIRE(summary["config_hash"] == config_hash(cfg));
    REQUIRE(summary.contains("final"));
    REQUIRE(summary.contains("certificate"));
    RunTrace t = read_trace_csv(a.str() + "/trace.csv");
    REQUIRE(t.rows.back().k == 2000);
}

TEST_CASE("cmd_run exit code 3 on divergence, partial outputs kept") {
    nlohmann::json cfg = small_quadratic_config();
    cfg["objective"]["d"] = 8;
    cfg["algorithm"]["alpha0"] = 50.0;
    TempDir dir("dsgt_run_div");
    REQUIRE(cmd_run(cfg, dir.str(), true) == 3);
    REQUIRE(fs::exists(dir.str() + "/trace.csv"));
    auto summary = nlohmann::json::parse(slurp(dir.str() + "/summary.json"));
    REQUIRE(summary["diverged"] == true);
}

TEST_CASE("averaging aligns on k and truncates at a diverged repetition") {
    RunTrace t1, t2;
    t1.has_accuracy = t2.has_accuracy = false;
    for (long long k = 1; k <= 3; ++k) {
        IterationRecord r;
        r.k = k * 10;
        r.loss = 1.0 * k;
        r.divergence = 2.0 * k;
        r.consensus = 3.0 * k;
        r.cum_regret = 4.0 * k;
        t1.rows.push_back(r);
        r.loss = 3.0 * k;
        if (k <= 2) t2.rows.push_back(r);
    }
    t2.diverged = true;
    t2.diverged_at = 25;
    RunTrace avg = average_traces({t1, t2});
    REQUIRE(avg.diverged);
    REQUIRE(avg.rows.size() == 2);
    REQUIRE(avg.rows[1].k == 20);
    REQUIRE(avg.rows[1].loss == Catch::Approx(4.0));
    REQUIRE(avg.rows[1].divergence == Catch::Approx(4.0));
}

TEST_CASE("gen-data: separable clusters are solvable, flat ones are chance level") {
    TempDir dir("dsgt_gendata");
    std::string train = dir.str() + "/train.csv";
    std::string eval = dir.str() + "/eval.csv";

    REQUIRE(cmd_gen_data(600, 6, 10.0, 5, train) == 0);
    Dataset ds = load_dataset_csv(train);
    REQUIRE(ds.m() == 600);
    ds.partition_equally(3);
    Objective obj = make_logistic(ds, 0.001, 0.0);
    REQUIRE(accuracy(obj.analytic->x_star, ds) >= 0.99);

    REQUIRE(cmd_gen_data(2000, 6, 0.0, 6, train) == 0);
    REQUIRE(cmd_gen_data(2000, 6, 0.0, 7, eval) == 0);
    Dataset flat = load_dataset_csv(train);
    flat.partition_equally(3);
    Objective obj_flat = make_logistic(flat, 0.001, 0.0);
    double acc = accuracy(obj_flat.analytic->x_star, load_dataset_csv(eval));
    REQUIRE(acc > 0.45);
    REQUIRE(acc < 0.55);

    std::string again = dir.str() + "/again.csv";
    REQUIRE(cmd_gen_data(2000, 6, 0.0, 7, again) == 0);
    REQUIRE(slurp(eval) == slurp(again));

    REQUIRE_THROWS_AS(cmd_gen_data(1, 6, 1.0, 1, train), config_error);
}

TEST_CASE("certify emits a well-formed certificate even in degenerate cases") {
    nlohmann::json cfg = small_quadratic_config();
    cfg["topology"] = {{"n", 2}, {"p", 1.0}, {"seed", 1}};  // rho_w = 0
    cfg["algorithm"]["max_iters"] = 500;
    cfg["reps"] = 1;
    TempDir dir("dsgt_cert");
    int rc = cmd_certify(cfg, dir.str(), true);
    REQUIRE((rc == 0 || rc == 3));
    auto cert = nlohmann::json::parse(slurp(dir.str() + "/certificate.json"));
    REQUIRE(cert.contains("constants"));
    REQUIRE(cert["constants"]["K2"].is_number());
    REQUIRE(cert.contains("rate_exponent"));
}

TEST_CASE("theorem-3 condition flag set when the step-size product is large enough") {
    nlohmann::json cfg = small_quadratic_config();
    cfg["objective"]["d"] = 2;  // stays stable even at the required product
    cfg["algorithm"]["alpha0"] = 1.0;
    cfg["algorithm"]["gamma0"] = 1.3;
    cfg["algorithm"]["scale"] = 2.0;
    cfg["algorithm"]["max_iters"] = 300;
    cfg["reps"] = 1;
    Experiment ex = parse_config(cfg);
    TheoryConstants tc = estimate_constants(ex, 300, 1000);
    CertificateReport rep =
        rate_certificate(tc, ex.algo.schedule, RunTrace{});
    // A = lambda * scale^2 / d; the product must reach 0.5 / A
    double need = 0.5 / tc.A;
    REQUIRE(rep.theorem3_condition == (1.0 * 1.3 >= need));
}

TEST_CASE("sweep: grid rows, warnings, and single-point equivalence") {
    nlohmann::json cfg = small_quadratic_config();
    cfg["objective"]["d"] = 2;
    cfg["algorithm"]["alpha0"] = 0.5;
    cfg["algorithm"]["max_iters"] = 4000;
    cfg["stride"] = 5;
    cfg["reps"] = 1;
    cfg["grid"] = {{"upsilon1", {0.75, 0.4}}, {"upsilon2", {0.25}}};
    TempDir dir("dsgt_sweep");
    REQUIRE(cmd_sweep(cfg, dir.str(), true) == 0);
    std::string csv = slurp(dir.str() + "/sweep.csv");
    REQUIRE(csv.find("upsilon1,upsilon2,metric,value,status") != std::string::npos);
    REQUIRE(csv.find("warning,nan,skipped") != std::string::npos);
    REQUIRE(csv.find("divergence") != std::string::npos);

    // a single valid grid point reproduces cmd_run + loglog_slope
    nlohmann::json cfg_single = cfg;
    cfg_single["grid"] = {{"upsilon1", {0.75}}, {"upsilon2", {0.25}}};
    TempDir dir2("dsgt_sweep_single"), dir3("dsgt_sweep_runref");
    REQUIRE(cmd_sweep(cfg_single, dir2.str(), true) == 0);
    Experiment ex = parse_config(cfg);
    RunTrace avg = average_traces(run_repetitions(ex));
    double ref = loglog_slope(avg, MetricField::divergence, 400, 4000);
    std::string line;
    std::istringstream ss(slurp(dir2.str() + "/sweep.csv"));
    double got = std::numeric_limits<double>::quiet_NaN();
    while (std::getline(ss, line)) {
        if (line.find(",divergence,") != std::string::npos) {
            auto pos = line.find(",divergence,") + 12;
            got = std::stod(line.substr(pos));
        }
    }
    REQUIRE(got == Catch::Approx(ref).margin(1e-12));

    nlohmann::json all_bad = cfg;
    all_bad["grid"] = {{"upsilon1", {0.4}}, {"upsilon2", {0.9}}};
    REQUIRE_THROWS_AS(cmd_sweep(all_bad, dir.str(), true), config_error);
}
