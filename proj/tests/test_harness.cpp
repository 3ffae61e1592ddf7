#include "oddm/harness.hpp"

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

using namespace oddm;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::string read_file(const std::filesystem::path &p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const std::string &text)
{
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
        out.push_back(line);
    return out;
}

std::filesystem::path scratch_dir()
{
    const auto dir = std::filesystem::temp_directory_path() / "oddm_harness_test";
    std::filesystem::create_directories(dir);
    return dir;
}

ExperimentConfig genie_config()
{
    ExperimentConfig cfg;
    cfg.schemes = {Scheme::GeniePerfect, Scheme::GenieOnGrid};
    cfg.snr_db = {0.0, 20.0};
    cfg.trials = 3;
    return cfg;
}

} // namespace

TEST_CASE("configuration defaults", "[harness][config]")
{
    const ExperimentConfig cfg;
    CHECK(cfg.system.M == 32);
    CHECK(cfg.system.N == 32);
    CHECK(cfg.system.fc == 4e9);
    CHECK_THAT(cfg.system.T, WithinRel(1.0 / 15e3, 1e-15));
    CHECK(cfg.system.D == 4);
    CHECK(cfg.system.kmax == 4);
    CHECK(cfg.grid.M_tau == 10);
    CHECK(cfg.grid.N_nu == 10);
    CHECK(cfg.sparse.N_inter1 == 500);
    CHECK(cfg.sparse.tol == 1e-3);
    CHECK(cfg.sparse.c1 == 2e-6);
    CHECK(cfg.sparse.d0_prior == 1e-6);
    CHECK(cfg.sparse.c == 1e-6);
    CHECK(cfg.sparse.d == 1e-6);
    CHECK(cfg.sparse.epsilon == 1e-4);
    CHECK(cfg.refinement.N_inter2 == 10);
    CHECK(cfg.refinement.N_exter == 5);
    CHECK(cfg.refinement.M_hat == 50);
    CHECK(cfg.refinement.N_hat == 50);
    CHECK(cfg.schemes.size() == 5);
    CHECK(cfg.trials == 50);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("configuration parsing", "[harness][config]")
{
    const auto j = nlohmann::json::parse(R"({
        "system": {"D": 3},
        "grid": {"M_tau": 8, "N_nu": 6},
        "refinement": {"N_exter": 2},
        "sbl": {"N_inter1": 100},
        "schemes": ["grasbi", "genie-perfect"],
        "snr_db": [5, 15],
        "trials": 7,
        "master_seed": 18446744073709551615,
        "channel_path": "time"
    })");
    const ExperimentConfig cfg = config_from_json(j);
    CHECK(cfg.system.D == 3);
    CHECK(cfg.system.kmax == 4);
    CHECK(cfg.grid.M_tau == 8);
    CHECK(cfg.grid.N_nu == 6);
    CHECK(cfg.refinement.N_exter == 2);
    CHECK(cfg.refinement.N_inter2 == 10);
    CHECK(cfg.sparse.N_inter1 == 100);
    CHECK(cfg.schemes == std::vector<Scheme>{Scheme::GRASBI, Scheme::GeniePerfect});
    CHECK(cfg.snr_db == std::vector<double>{5.0, 15.0});
    CHECK(cfg.trials == 7);
    CHECK(cfg.master_seed == 18446744073709551615ULL);
    CHECK(cfg.channel_path == ChannelPath::Time);

    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"trails": 3})")), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"grid": {"Mtau": 3}})")), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"trials": 0})")), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"trials": "many"})")), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"schemes": ["ogsbi"]})")), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"schemes": []})")), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"channel": {"speed_kmh": 2000}})")),
                    std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"channel_path": "air"})")), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse("[1, 2]")), std::invalid_argument);

    CHECK_THROWS_AS(load_config("/nonexistent/oddm.json"), std::runtime_error);
    const auto path = scratch_dir() / "cfg.json";
    write_text_file(path.string(), R"({"trials": 4, "snr_db": [0]})");
    CHECK(load_config(path.string()).trials == 4);
    write_text_file(path.string(), "{ not json");
    CHECK_THROWS_AS(load_config(path.string()), std::invalid_argument);
}

TEST_CASE("scheme names round-trip", "[harness][config]")
{
    for (Scheme s : {Scheme::SBL, Scheme::GRASBI, Scheme::TGRAESBI, Scheme::GenieOnGrid, Scheme::GeniePerfect})
        CHECK(parse_scheme(to_string(s)) == s);
    CHECK(to_string(Scheme::GenieOnGrid) == "genie-on-grid");
    CHECK_THROWS_AS(parse_scheme("GRASBI "), std::invalid_argument);
}

TEST_CASE("trial seeds", "[harness][seed]")
{
    CHECK(trial_seed(1, 0) == trial_seed(1, 0));
    std::set<std::uint64_t> seen;
    for (std::uint64_t m : {0ULL, 1ULL, 2ULL})
        for (std::uint64_t t = 0; t < 1000; ++t)
            seen.insert(trial_seed(m, t));
    CHECK(seen.size() == 3000);
    CHECK(noise_variance(10.0) == std::pow(10.0, -1.0));
    CHECK(noise_variance(0.0) == 1.0);
}

TEST_CASE("trial instances", "[harness][trial]")
{
    const ExperimentConfig cfg;
    const TrialInstance a = make_trial(cfg, 42), b = make_trial(cfg, 42), c = make_trial(cfg, 43);
    REQUIRE(a.paths.size() == 4);
    for (std::size_t p = 0; p < a.paths.size(); ++p) {
        CHECK(a.paths[p].rho == b.paths[p].rho);
        CHECK(a.paths[p].delay == b.paths[p].delay);
        CHECK(a.paths[p].doppler == b.paths[p].doppler);
    }
    CHECK(a.y_clean == b.y_clean);
    CHECK(a.unit_noise == b.unit_noise);
    CHECK(a.paths[0].delay != c.paths[0].delay);

    // QPSK data outside the guard, pilot inside
    const SystemParams &par = cfg.system;
    CHECK_THAT(std::norm(a.tx(par.l0, par.k0)), WithinRel(1000.0, 1e-12));
    CHECK_THAT(std::norm(a.tx(0, 0)), WithinRel(1.0, 1e-12));
    CHECK_THAT(std::abs(a.tx(0, 0).real()), WithinRel(1.0 / std::sqrt(2.0), 1e-12));
    CHECK(a.unit_noise.size() == 45);
    CHECK_THAT(a.unit_noise.squaredNorm() / 45.0, WithinAbs(1.0, 0.5));
    CHECK(a.y_clean == extract_region(apply_H_DD(a.H, a.tx), par));

    ExperimentConfig td = cfg;
    td.channel_path = ChannelPath::Time;
    const TrialInstance t = make_trial(td, 42);
    CHECK((t.y_clean - a.y_clean).norm() < 1e-8 * a.y_clean.norm());
}

TEST_CASE("record layout and seed paving", "[harness][run]")
{
    const ExperimentConfig cfg = genie_config();
    const auto recs = run_experiment(cfg);
    REQUIRE(recs.size() == 2 * 2 * 3);
    std::size_t k = 0;
    for (Scheme s : cfg.schemes)
        for (double snr : cfg.snr_db)
            for (int t = 0; t < cfg.trials; ++t, ++k) {
                CHECK(recs[k].scheme == s);
                CHECK(recs[k].snr_db == snr);
                CHECK(recs[k].trial == t);
                CHECK(recs[k].seed == trial_seed(cfg.master_seed, static_cast<std::uint64_t>(t)));
                CHECK(recs[k].total_mults == 0);
                CHECK(recs[k].runtime_ms == 0.0);
                CHECK_FALSE(recs[k].flagged);
                CHECK(std::isfinite(recs[k].nmse_db));
            }

    // both schemes were scored against the channel regenerated from the shared seed
    for (int t = 0; t < cfg.trials; ++t) {
        const TrialInstance inst = make_trial(cfg, recs[t].seed);
        const CVector y = inst.y_clean + std::sqrt(noise_variance(0.0)) * inst.unit_noise;
        const double perfect = nmse_db(inst.H, reconstruct_H_DD(genie_perfect(y, inst.paths, cfg.system), cfg.system));
        CHECK(recs[t].nmse_db == perfect);
        const double on_grid = nmse_db(
            inst.H, reconstruct_H_DD(genie_on_grid(y, inst.paths,
                                                   build_virtual_grid(cfg.grid.M_tau, cfg.grid.N_nu, cfg.system),
                                                   cfg.system),
                                     cfg.system));
        CHECK(recs[6 + t].nmse_db == on_grid);
        CHECK(recs[6 + t].seed == recs[t].seed);
    }

    // higher SNR helps the exact-location reference
    for (int t = 0; t < cfg.trials; ++t)
        CHECK(recs[3 + t].nmse_db < recs[t].nmse_db);
}

TEST_CASE("noiseless exact-location reference reaches the floor", "[harness][run]")
{
    ExperimentConfig cfg;
    cfg.schemes = {Scheme::GeniePerfect};
    cfg.trials = 1;
    cfg.noiseless = true;
    const auto recs = run_experiment(cfg);
    REQUIRE(recs.size() == 1);
    INFO("nmse " << recs[0].nmse_db);
    CHECK(recs[0].nmse_db < -100.0);
}

TEST_CASE("complexity is attached to each record", "[harness][run]")
{
    ExperimentConfig cfg;
    cfg.grid = {8, 8};
    CHECK(scheme_mults(Scheme::GRASBI, cfg) == 1298892500ULL);
    cfg.grid = {10, 10};
    CHECK(scheme_mults(Scheme::TGRAESBI, cfg) == 1222723500ULL);
    CHECK(scheme_mults(Scheme::GenieOnGrid, cfg) == 0);
    CHECK(scheme_mults(Scheme::SBL, cfg) == count_multiplications(ComplexityScheme::SBL, complexity_params(cfg)).total_mults);
}

TEST_CASE("experiments are deterministic across thread counts", "[harness][determinism]")
{
    ExperimentConfig cfg;
    cfg.schemes = {Scheme::SBL, Scheme::GeniePerfect, Scheme::GenieOnGrid};
    cfg.snr_db = {5.0, 15.0};
    cfg.trials = 4;
    const std::string seq = records_to_csv(run_experiment(cfg));
    CHECK(records_to_csv(run_experiment(cfg)) == seq);
    cfg.threads = 3;
    CHECK(records_to_csv(run_experiment(cfg)) == seq);
    cfg.threads = 8;
    CHECK(records_to_csv(run_experiment(cfg)) == seq);
}

TEST_CASE("CSV and summary output", "[harness][output]")
{
    std::vector<TrialRecord> recs;
    for (int t = 0; t < 4; ++t) {
        TrialRecord r;
        r.scheme = Scheme::GRASBI;
        r.snr_db = 10.0;
        r.trial = t;
        r.seed = 100 + t;
        r.nmse_db = -10.0 - t;
        r.total_mults = 1222723500ULL;
        r.exter_iters = 5;
        recs.push_back(r);
    }
    recs[3].nmse_db = std::nan("");
    recs[3].flagged = true;

    const auto lines = lines_of(records_to_csv(recs));
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "scheme,snr_db,trial,seed,nmse_db,total_mults,exter_iters,runtime_ms");
    CHECK(lines[1] == "grasbi,10,0,100,-10,1222723500,5,0");
    CHECK(lines[4] == "grasbi,10,3,103,nan,1222723500,5,0");

    const auto rows = summarize(recs);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].trials == 3);
    CHECK(rows[0].mean_nmse_db == -11.0);
    CHECK(rows[0].median_nmse_db == -11.0);

    const auto out = scratch_dir() / "records.csv";
    write_results(out.string(), recs);
    CHECK(read_file(out) == records_to_csv(recs));
    const auto summary = lines_of(read_file(out.string() + ".summary.csv"));
    REQUIRE(summary.size() == 2);
    CHECK(summary[1] == "grasbi,10,3,-11,-11");
    CHECK_THROWS_AS(write_results("/nonexistent-dir/x.csv", recs), std::runtime_error);

    // full precision survives the round trip
    TrialRecord r = recs[0];
    r.nmse_db = -12.345678901234567;
    const auto l = lines_of(records_to_csv({r}));
    CHECK(std::stod(l[1].substr(l[1].find(",-") + 1)) == r.nmse_db);
}

TEST_CASE("GRASBI beats plain SBL on paired trials", "[harness][run][trials]")
{
    ExperimentConfig cfg;
    cfg.schemes = {Scheme::SBL, Scheme::GRASBI};
    cfg.trials = 50;
    const auto rows = summarize(run_experiment(cfg));
    REQUIRE(rows.size() == 2);
    INFO("SBL " << rows[0].mean_nmse_db << " dB, GRASBI " << rows[1].mean_nmse_db << " dB");
    CHECK(rows[0].trials == 50);
    CHECK(rows[1].trials == 50);
    CHECK(rows[1].mean_nmse_db <= rows[0].mean_nmse_db);
}

#ifdef ODDM_SIM_PATH
TEST_CASE("command-line driver", "[harness][cli]")
{
    const auto dir = scratch_dir();
    const auto out = dir / "cli.csv";
    std::filesystem::remove(out);
    const std::string cmd = std::string("\"") + ODDM_SIM_PATH +
                            "\" --scheme genie-perfect --scheme genie-on-grid --snr 0,10 --trials 2 --seed 9 --out \"" +
                            out.string() + "\" > \"" + (dir / "cli.stdout").string() + "\"";
    REQUIRE(std::system(cmd.c_str()) == 0);
    const auto lines = lines_of(read_file(out));
    REQUIRE(lines.size() == 1 + 2 * 2 * 2);
    CHECK(lines[0] == csv_header);
    CHECK_THAT(lines[1], Catch::Matchers::StartsWith("genie-perfect,0,0," + std::to_string(trial_seed(9, 0)) + ","));
    CHECK(std::filesystem::exists(out.string() + ".summary.csv"));
    CHECK_THAT(read_file(dir / "cli.stdout"), ContainsSubstring("genie-on-grid,10,2,"));

    const std::string bad = std::string("\"") + ODDM_SIM_PATH + "\" --config /nonexistent/cfg.json 2>/dev/null";
    CHECK(std::system(bad.c_str()) != 0);
    const std::string unknown = std::string("\"") + ODDM_SIM_PATH + "\" --bogus 2>/dev/null >/dev/null";
    CHECK(std::system(unknown.c_str()) != 0);
}
#endif
