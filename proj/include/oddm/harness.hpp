// SPDX-License-Identifier: Apache-2.0
//
// oddm-chanest: delay-Doppler channel estimation toolkit for ODDM waveforms
// ------------------------------------------------------------------------

#pragma once

#include "oddm/evaluation.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace oddm {

enum class Scheme
{
    SBL,
    GRASBI,
    TGRAESBI,
    GenieOnGrid,
    GeniePerfect,
};

inline std::string_view to_string(Scheme s)
{
    switch (s) {
    case Scheme::SBL: return "sbl";
    case Scheme::GRASBI: return "grasbi";
    case Scheme::TGRAESBI: return "tgraesbi";
    case Scheme::GenieOnGrid: return "genie-on-grid";
    case Scheme::GeniePerfect: return "genie-perfect";
    }
    return "?";
}

inline Scheme parse_scheme(std::string_view name)
{
    for (Scheme s : {Scheme::SBL, Scheme::GRASBI, Scheme::TGRAESBI, Scheme::GenieOnGrid, Scheme::GeniePerfect})
        if (to_string(s) == name)
            return s;
    throw std::invalid_argument("unknown scheme '" + std::string(name) +
                                "' (expected sbl, grasbi, tgraesbi, genie-on-grid or genie-perfect)");
}

enum class ChannelPath
{
    DelayDoppler,
    Time,
};

struct ChannelConfig
{
    int P = 4;
    double speed_kmh = 450.0;
    std::optional<double> doppler_hz; ///< overrides speed_kmh when set

    double max_doppler_hz(const SystemParams &params) const
    {
        return doppler_hz ? *doppler_hz : doppler_from_speed(speed_kmh, params.fc);
    }
};

/// Settings shared by the two sparse-recovery stages.
struct SparseConfig
{
    int N_inter1 = 500;
    double tol = 1e-3;
    double c1 = 2e-6;
    double d0_prior = 1e-6;
    double c = 1e-6;
    double d = 1e-6;
    double epsilon = 1e-4;

    SBLOptions sbl_options() const
    {
        SBLOptions o;
        o.max_iters = N_inter1;
        o.tol = tol;
        return o;
    }

    TgOptions tg_options() const
    {
        TgOptions o;
        o.max_iters = N_inter1;
        o.tol = tol;
        o.c1 = c1;
        o.d0_prior = d0_prior;
        o.c = c;
        o.d = d;
        o.epsilon = epsilon;
        return o;
    }
};

struct ExperimentConfig
{
    SystemParams system;
    ChannelConfig channel;
    GridConfig grid;
    RefinementConfig refinement;
    SparseConfig sparse;
    std::vector<Scheme> schemes{Scheme::SBL, Scheme::GRASBI, Scheme::TGRAESBI, Scheme::GenieOnGrid,
                                Scheme::GeniePerfect};
    std::vector<double> snr_db{10.0};
    int trials = 50;
    std::uint64_t master_seed = 1;
    std::string output = "results.csv";
    int threads = 1;
    bool noiseless = false;
    bool timing = false;
    ChannelPath channel_path = ChannelPath::DelayDoppler;

    void validate() const
    {
        system.validate();
        if (channel.P < 1)
            throw std::invalid_argument("config: channel.P must be at least 1");
        const double fd = channel.max_doppler_hz(system);
        if (!(fd >= 0.0) || !(fd * system.N * system.T < system.kmax))
            throw std::invalid_argument("config: maximum Doppler must satisfy f_d*N*T < kmax");
        refinement.validate(build_virtual_grid(grid.M_tau, grid.N_nu, system));
        if (sparse.N_inter1 < 1 || !(sparse.tol > 0.0))
            throw std::invalid_argument("config: sbl.N_inter1 must be >= 1 and sbl.tol > 0");
        if (schemes.empty())
            throw std::invalid_argument("config: at least one scheme is required");
        if (snr_db.empty())
            throw std::invalid_argument("config: at least one SNR value is required");
        for (double s : snr_db)
            if (!std::isfinite(s))
                throw std::invalid_argument("config: SNR values must be finite");
        if (trials < 1)
            throw std::invalid_argument("config: trials must be at least 1");
        if (threads < 1)
            throw std::invalid_argument("config: threads must be at least 1");
        sparse.tg_options();
    }
};

namespace detail {

inline void check_keys(const nlohmann::json &obj, const std::string &where, std::initializer_list<const char *> allowed)
{
    if (!obj.is_object())
        throw std::invalid_argument("config: '" + where + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!ok.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
}

template <class T>
void read_opt(const nlohmann::json &obj, const char *key, T &out)
{
    if (obj.contains(key))
        out = obj.at(key).get<T>();
}

} // namespace detail

/// Parses a JSON configuration; absent keys keep their defaults, unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json &j)
{
    using detail::read_opt;
    ExperimentConfig cfg;
    detail::check_keys(j, "",
                       {"system", "channel", "grid", "refinement", "sbl", "schemes", "snr_db", "trials",
                        "master_seed", "output", "threads", "noiseless", "timing", "channel_path"});
    try {
        if (j.contains("system")) {
            const auto &s = j.at("system");
            detail::check_keys(s, "system",
                               {"M", "N", "T", "fc", "D", "kmax", "beta", "l0", "k0", "pilot_offset_db"});
            read_opt(s, "M", cfg.system.M);
            read_opt(s, "N", cfg.system.N);
            read_opt(s, "T", cfg.system.T);
            read_opt(s, "fc", cfg.system.fc);
            read_opt(s, "D", cfg.system.D);
            read_opt(s, "kmax", cfg.system.kmax);
            read_opt(s, "beta", cfg.system.beta);
            read_opt(s, "l0", cfg.system.l0);
            read_opt(s, "k0", cfg.system.k0);
            read_opt(s, "pilot_offset_db", cfg.system.pilot_offset_db);
        }
        if (j.contains("channel")) {
            const auto &c = j.at("channel");
            detail::check_keys(c, "channel", {"P", "speed_kmh", "doppler_hz"});
            read_opt(c, "P", cfg.channel.P);
            read_opt(c, "speed_kmh", cfg.channel.speed_kmh);
            if (c.contains("doppler_hz"))
                cfg.channel.doppler_hz = c.at("doppler_hz").get<double>();
        }
        if (j.contains("grid")) {
            const auto &g = j.at("grid");
            detail::check_keys(g, "grid", {"M_tau", "N_nu"});
            read_opt(g, "M_tau", cfg.grid.M_tau);
            read_opt(g, "N_nu", cfg.grid.N_nu);
        }
        if (j.contains("refinement")) {
            const auto &r = j.at("refinement");
            detail::check_keys(r, "refinement", {"M_hat", "N_hat", "delta1", "delta2", "N_inter2", "N_exter"});
            read_opt(r, "M_hat", cfg.refinement.M_hat);
            read_opt(r, "N_hat", cfg.refinement.N_hat);
            read_opt(r, "delta1", cfg.refinement.delta1);
            read_opt(r, "delta2", cfg.refinement.delta2);
            read_opt(r, "N_inter2", cfg.refinement.N_inter2);
            read_opt(r, "N_exter", cfg.refinement.N_exter);
        }
        if (j.contains("sbl")) {
            const auto &b = j.at("sbl");
            detail::check_keys(b, "sbl", {"N_inter1", "tol", "c1", "d0_prior", "c", "d", "epsilon"});
            read_opt(b, "N_inter1", cfg.sparse.N_inter1);
            read_opt(b, "tol", cfg.sparse.tol);
            read_opt(b, "c1", cfg.sparse.c1);
            read_opt(b, "d0_prior", cfg.sparse.d0_prior);
            read_opt(b, "c", cfg.sparse.c);
            read_opt(b, "d", cfg.sparse.d);
            read_opt(b, "epsilon", cfg.sparse.epsilon);
        }
        if (j.contains("schemes")) {
            cfg.schemes.clear();
            for (const auto &s : j.at("schemes"))
                cfg.schemes.push_back(parse_scheme(s.get<std::string>()));
        }
        if (j.contains("snr_db"))
            cfg.snr_db = j.at("snr_db").get<std::vector<double>>();
        read_opt(j, "trials", cfg.trials);
        read_opt(j, "master_seed", cfg.master_seed);
        read_opt(j, "output", cfg.output);
        read_opt(j, "threads", cfg.threads);
        read_opt(j, "noiseless", cfg.noiseless);
        read_opt(j, "timing", cfg.timing);
        if (j.contains("channel_path")) {
            const std::string p = j.at("channel_path").get<std::string>();
            if (p == "dd")
                cfg.channel_path = ChannelPath::DelayDoppler;
            else if (p == "time")
                cfg.channel_path = ChannelPath::Time;
            else
                throw std::invalid_argument("config: channel_path must be \"dd\" or \"time\"");
        }
    } catch (const nlohmann::json::exception &e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw std::invalid_argument("config '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Seeding and trial generation

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of trial t; independent of scheme and SNR so all schemes see the same instance.
inline std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t trial)
{
    return splitmix64(splitmix64(master_seed) ^ splitmix64(trial + 0x632BE59BD9B4E019ULL));
}

/// One Monte Carlo instance. The received region at SNR s is
/// y_clean + sqrt(sigma2(s)) * unit_noise.
struct TrialInstance
{
    PathSet paths;
    DDFrame tx;
    DDChannelOperator H;
    CVector y_clean;    ///< received region without thermal noise
    CVector unit_noise; ///< CN(0, 1) noise on the region
};

inline DDFrame qpsk_frame(const SystemParams &params, std::mt19937_64 &rng)
{
    std::uniform_int_distribution<int> bit(0, 1);
    const double a = 1.0 / std::sqrt(2.0);
    DDFrame frame(params.M, params.N);
    for (int l = 0; l < params.M; ++l)
        for (int k = 0; k < params.N; ++k) {
            const double re = bit(rng) ? a : -a;
            const double im = bit(rng) ? a : -a;
            frame(l, k) = cd{re, im};
        }
    return frame;
}

inline TrialInstance make_trial(const ExperimentConfig &cfg, std::uint64_t seed)
{
    const SystemParams &par = cfg.system;
    std::mt19937_64 rng(seed);
    TrialInstance inst;
    inst.paths = generate_jakes_channel(cfg.channel.P, cfg.channel.max_doppler_hz(par), par, rng);
    // noiseless drops both parts of the region disturbance: thermal noise and data leakage
    inst.tx = embed_pilot(cfg.noiseless ? DDFrame(par.M, par.N) : qpsk_frame(par, rng), par);
    inst.H = build_H_DD(inst.paths, par);

    DDFrame rx;
    if (cfg.channel_path == ChannelPath::Time) {
        std::mt19937_64 unused(0);
        rx = demodulate(apply_channel_time(modulate(inst.tx, par), inst.paths, 0.0, par, unused), par);
    } else {
        rx = apply_H_DD(inst.H, inst.tx);
    }
    inst.y_clean = extract_region(rx, par);

    std::mt19937_64 noise_rng(splitmix64(seed ^ 0xD1B54A32D192ED03ULL));
    inst.unit_noise.resize(inst.y_clean.size());
    for (Eigen::Index i = 0; i < inst.unit_noise.size(); ++i)
        inst.unit_noise(i) = complex_gaussian(noise_rng, 1.0);
    return inst;
}

inline double noise_variance(double snr_db)
{
    return std::pow(10.0, -snr_db / 10.0);
}

// ---------------------------------------------------------------------------
// Running schemes

struct TrialRecord
{
    Scheme scheme = Scheme::SBL;
    double snr_db = 0.0;
    int trial = 0;
    std::uint64_t seed = 0;
    double nmse_db = 0.0;
    std::uint64_t total_mults = 0;
    int exter_iters = 0;
    double runtime_ms = 0.0;
    bool flagged = false;
};

inline ComplexityParams complexity_params(const ExperimentConfig &cfg)
{
    const VirtualGrid grid = build_virtual_grid(cfg.grid.M_tau, cfg.grid.N_nu, cfg.system);
    ComplexityParams p;
    p.region = static_cast<std::uint64_t>(cfg.system.region_size());
    p.grid = static_cast<std::uint64_t>(grid.size());
    p.P_hat = static_cast<std::uint64_t>(estimate_P_hat(cfg.system, grid));
    p.refined = static_cast<std::uint64_t>(cfg.refinement.M_hat) * static_cast<std::uint64_t>(cfg.refinement.N_hat);
    p.N_inter1 = static_cast<std::uint64_t>(cfg.sparse.N_inter1);
    p.N_inter2 = static_cast<std::uint64_t>(cfg.refinement.N_inter2);
    p.N_exter = static_cast<std::uint64_t>(cfg.refinement.N_exter);
    return p;
}

/// Closed-form multiplication count of a harness scheme; zero for the genie references.
inline std::uint64_t scheme_mults(Scheme s, const ExperimentConfig &cfg)
{
    const ComplexityParams p = complexity_params(cfg);
    switch (s) {
    case Scheme::SBL: return count_multiplications(ComplexityScheme::SBL, p).total_mults;
    case Scheme::GRASBI: return count_multiplications(ComplexityScheme::GRASBI, p).total_mults;
    case Scheme::TGRAESBI: return count_multiplications(ComplexityScheme::TGRAESBI, p).total_mults;
    default: return 0;
    }
}

inline EstimateResult run_scheme(Scheme s, const CVector &y_T, const PathSet &true_paths, const ExperimentConfig &cfg)
{
    switch (s) {
    case Scheme::SBL: return sbl_estimate(y_T, cfg.system, cfg.grid, cfg.sparse.sbl_options());
    case Scheme::GRASBI: return grasbi_run(y_T, cfg.system, cfg.grid, cfg.refinement, cfg.sparse.sbl_options());
    case Scheme::TGRAESBI:
        return tgraesbi_run(y_T, cfg.system, cfg.grid, cfg.refinement, cfg.sparse.tg_options());
    case Scheme::GenieOnGrid:
        return genie_on_grid(y_T, true_paths, build_virtual_grid(cfg.grid.M_tau, cfg.grid.N_nu, cfg.system),
                             cfg.system);
    case Scheme::GeniePerfect: return genie_perfect(y_T, true_paths, cfg.system);
    }
    throw std::logic_error("run_scheme: unhandled scheme");
}

/// Records of one trial, ordered by (scheme, snr).
inline std::vector<TrialRecord> run_trial(const ExperimentConfig &cfg, int trial)
{
    const std::uint64_t seed = trial_seed(cfg.master_seed, static_cast<std::uint64_t>(trial));
    std::vector<TrialRecord> out;
    std::optional<TrialInstance> inst;
    try {
        inst = make_trial(cfg, seed);
    } catch (const std::exception &) {
        inst.reset();
    }

    for (Scheme s : cfg.schemes) {
        for (double snr : cfg.snr_db) {
            TrialRecord rec;
            rec.scheme = s;
            rec.snr_db = snr;
            rec.trial = trial;
            rec.seed = seed;
            rec.total_mults = scheme_mults(s, cfg);
            if (!inst) {
                rec.flagged = true;
                rec.nmse_db = std::numeric_limits<double>::quiet_NaN();
                out.push_back(rec);
                continue;
            }
            const double sigma2 = cfg.noiseless ? 0.0 : noise_variance(snr);
            const CVector y_T = inst->y_clean + std::sqrt(sigma2) * inst->unit_noise;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const EstimateResult est = run_scheme(s, y_T, inst->paths, cfg);
                rec.exter_iters = est.exter_iters;
                rec.nmse_db = nmse_db(inst->H, reconstruct_H_DD(est, cfg.system));
                rec.flagged = est.flagged || !std::isfinite(rec.nmse_db);
            } catch (const std::exception &) {
                rec.flagged = true;
                rec.nmse_db = std::numeric_limits<double>::quiet_NaN();
            }
            if (cfg.timing)
                rec.runtime_ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            out.push_back(rec);
        }
    }
    return out;
}

/// All records ordered by (scheme in config order, snr in config order, trial).
/// Trials run on cfg.threads workers; the output does not depend on the thread count.
inline std::vector<TrialRecord> run_experiment(const ExperimentConfig &cfg)
{
    cfg.validate();
    const std::size_t T = static_cast<std::size_t>(cfg.trials);
    std::vector<std::vector<TrialRecord>> per_trial(T);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < T; t = next++)
            per_trial[t] = run_trial(cfg, static_cast<int>(t));
    };
    const int nthreads = std::min<int>(cfg.threads, static_cast<int>(T));
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i)
            pool.emplace_back(worker);
        for (auto &th : pool)
            th.join();
    }

    const std::size_t per = cfg.schemes.size() * cfg.snr_db.size();
    std::vector<TrialRecord> records;
    records.reserve(per * T);
    for (std::size_t combo = 0; combo < per; ++combo)
        for (std::size_t t = 0; t < T; ++t)
            records.push_back(per_trial[t][combo]);
    return records;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string fmt_double(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline constexpr const char *csv_header = "scheme,snr_db,trial,seed,nmse_db,total_mults,exter_iters,runtime_ms";

inline std::string records_to_csv(const std::vector<TrialRecord> &records)
{
    std::ostringstream os;
    os << csv_header << '\n';
    for (const auto &r : records)
        os << to_string(r.scheme) << ',' << detail::fmt_double(r.snr_db) << ',' << r.trial << ',' << r.seed << ','
           << detail::fmt_double(r.nmse_db) << ',' << r.total_mults << ',' << r.exter_iters << ','
           << detail::fmt_double(r.runtime_ms) << '\n';
    return os.str();
}

struct SummaryRow
{
    Scheme scheme = Scheme::SBL;
    double snr_db = 0.0;
    int trials = 0; ///< finite records
    double mean_nmse_db = 0.0;
    double median_nmse_db = 0.0;
};

/// Mean and median NMSE per (scheme, snr) over the non-flagged finite records.
inline std::vector<SummaryRow> summarize(const std::vector<TrialRecord> &records)
{
    std::vector<SummaryRow> rows;
    std::vector<std::vector<double>> values;
    for (const auto &r : records) {
        std::size_t k = 0;
        while (k < rows.size() && !(rows[k].scheme == r.scheme && rows[k].snr_db == r.snr_db))
            ++k;
        if (k == rows.size()) {
            rows.push_back({r.scheme, r.snr_db, 0, 0.0, 0.0});
            values.emplace_back();
        }
        if (std::isfinite(r.nmse_db))
            values[k].push_back(r.nmse_db);
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
        auto &v = values[k];
        rows[k].trials = static_cast<int>(v.size());
        if (v.empty()) {
            rows[k].mean_nmse_db = rows[k].median_nmse_db = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        double sum = 0.0;
        for (double x : v)
            sum += x;
        rows[k].mean_nmse_db = sum / static_cast<double>(v.size());
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        rows[k].median_nmse_db = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
    return rows;
}

inline std::string summary_to_csv(const std::vector<SummaryRow> &rows)
{
    std::ostringstream os;
    os << "scheme,snr_db,trials,mean_nmse_db,median_nmse_db\n";
    for (const auto &r : rows)
        os << to_string(r.scheme) << ',' << detail::fmt_double(r.snr_db) << ',' << r.trials << ','
           << detail::fmt_double(r.mean_nmse_db) << ',' << detail::fmt_double(r.median_nmse_db) << '\n';
    return os.str();
}

inline void write_text_file(const std::string &path, const std::string &text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open output file '" + path + "'");
    out << text;
    if (!out)
        throw std::runtime_error("failed writing output file '" + path + "'");
}

/// Writes the record CSV and the `<path>.summary.csv` sidecar.
inline void write_results(const std::string &path, const std::vector<TrialRecord> &records)
{
    write_text_file(path, records_to_csv(records));
    write_text_file(path + ".summary.csv", summary_to_csv(summarize(records)));
}

} // namespace oddm
