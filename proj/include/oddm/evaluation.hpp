// SPDX-License-Identifier: Apache-2.0
//
// oddm-chanest: delay-Doppler channel estimation toolkit for ODDM waveforms
// ------------------------------------------------------------------------

#pragma once

#include "oddm/tgraesbi.hpp"

#include <cstdint>
#include <string_view>

namespace oddm {

inline constexpr double nmse_floor_db = -300.0;

/// Estimated paths; taps below 1e-6 of the strongest are dropped.
inline PathSet estimated_paths(const EstimateResult &est)
{
    double peak = 0.0;
    for (const auto &t : est.taps)
        peak = std::max(peak, std::abs(t.rho));
    PathSet paths;
    for (const auto &t : est.taps)
        if (peak > 0.0 && std::abs(t.rho) >= 1e-6 * peak)
            paths.push_back({t.rho, t.delay, t.doppler});
    return paths;
}

inline DDChannelOperator reconstruct_H_DD(const EstimateResult &est, const SystemParams &params)
{
    return build_H_DD(estimated_paths(est), params);
}

/// 10 log10(||H - H_hat||_F^2 / ||H||_F^2), floored at -300 dB.
inline double nmse_db(const CMatrix &H_true, const CMatrix &H_hat)
{
    if (H_true.rows() != H_hat.rows() || H_true.cols() != H_hat.cols())
        throw std::invalid_argument("nmse_db: operator dimensions differ");
    const double ref = H_true.squaredNorm();
    if (!(ref > 0.0))
        throw std::invalid_argument("nmse_db: reference channel is zero");
    const double err = (H_true - H_hat).squaredNorm();
    if (!std::isfinite(err))
        return std::numeric_limits<double>::quiet_NaN();
    if (err <= 0.0)
        return nmse_floor_db;
    return std::max(nmse_floor_db, 10.0 * std::log10(err / ref));
}

inline double nmse_db(const DDChannelOperator &H_true, const DDChannelOperator &H_hat)
{
    return nmse_db(H_true.H, H_hat.H);
}

namespace detail {

// Least-squares tap gains on the given dictionary points.
inline EstimateResult least_squares_fit(const CVector &y_T, const std::vector<DDPoint> &points,
                                        const SystemParams &params)
{
    if (y_T.size() != params.region_size())
        throw std::invalid_argument("least_squares_fit: observation length differs from M_T*N_T");
    const double d0 = pilot_amplitude(params);
    CMatrix A(params.region_size(), static_cast<Eigen::Index>(points.size()));
    for (std::size_t p = 0; p < points.size(); ++p)
        A.col(static_cast<Eigen::Index>(p)) = phi_column(points[p].delay, points[p].doppler, params, d0);
    EstimateResult est;
    est.mu = points.empty() ? CVector() : CVector(A.completeOrthogonalDecomposition().solve(y_T));
    for (std::size_t p = 0; p < points.size(); ++p)
        est.taps.push_back({gain_from_coefficient(est.mu(static_cast<Eigen::Index>(p)), points[p].delay,
                                                  points[p].doppler, params),
                            points[p].delay, points[p].doppler});
    est.flagged = !est.mu.allFinite();
    return est;
}

} // namespace detail

/// Nearest grid point in normalized (delay, Doppler) units; ties go to the lower index.
inline int nearest_grid_point(const VirtualGrid &grid, DDPoint p)
{
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid.size(); ++i) {
        const double dl = grid.l_bar[i] - p.delay, dk = grid.k_bar[i] - p.doppler;
        const double dist = dl * dl + dk * dk;
        if (dist < best_d) {
            best_d = dist;
            best = i;
        }
    }
    return best;
}

/// Reference with the true paths snapped to the virtual grid.
inline EstimateResult genie_on_grid(const CVector &y_T, const PathSet &true_paths, const VirtualGrid &grid,
                                    const SystemParams &params)
{
    validate_paths(true_paths, params);
    std::vector<int> idx;
    for (const auto &p : true_paths) {
        const int i = nearest_grid_point(grid, {p.delay, p.doppler});
        if (std::find(idx.begin(), idx.end(), i) == idx.end())
            idx.push_back(i);
    }
    std::vector<DDPoint> points;
    for (int i : idx)
        points.push_back(grid.point(i));
    EstimateResult est = detail::least_squares_fit(y_T, points, params);
    est.final_grid = grid;
    est.peaks = idx;
    return est;
}

/// Reference with exact knowledge of every path location.
inline EstimateResult genie_perfect(const CVector &y_T, const PathSet &true_paths, const SystemParams &params)
{
    validate_paths(true_paths, params);
    std::vector<DDPoint> points;
    for (const auto &p : true_paths)
        points.push_back({p.delay, p.doppler});
    return detail::least_squares_fit(y_T, points, params);
}

// ---------------------------------------------------------------------------
// Multiplication counts

enum class ComplexityScheme
{
    OGSBI,
    GESBI,
    TGEESBI,
    GRASBI,
    TGRAESBI,
    SBL,
};

inline std::string_view scheme_name(ComplexityScheme s)
{
    switch (s) {
    case ComplexityScheme::OGSBI: return "OGSBI";
    case ComplexityScheme::GESBI: return "GESBI";
    case ComplexityScheme::TGEESBI: return "T-GEESBI";
    case ComplexityScheme::GRASBI: return "GRASBI";
    case ComplexityScheme::TGRAESBI: return "T-GRAESBI";
    case ComplexityScheme::SBL: return "SBL";
    }
    return "?";
}

struct ComplexityParams
{
    std::uint64_t region = 45;      ///< M_T N_T
    std::uint64_t grid = 100;       ///< M_tau N_nu
    std::uint64_t P_hat = 9;
    std::uint64_t refined = 2500;   ///< M_hat N_hat
    std::uint64_t N_inter1 = 500;
    std::uint64_t N_inter2 = 10;
    std::uint64_t N_exter = 5;
};

struct ComplexityReport
{
    ComplexityScheme scheme = ComplexityScheme::GRASBI;
    ComplexityParams params;
    std::uint64_t total_mults = 0;
};

/// Per-operation counts for one iteration. A = M_T N_T, G = M_tau N_nu.
namespace mults {

/// Posterior covariance of the full E-step, scaled by 3 so the A^3/3 term stays integral.
inline std::uint64_t sigma_full_times3(std::uint64_t A, std::uint64_t G)
{
    return 2 * A * A * A + 3 * 2 * A * G * (A + 1);
}
inline std::uint64_t mu_full(std::uint64_t A, std::uint64_t G) { return (G * G + G) * A; }
inline std::uint64_t gamma_full(std::uint64_t G) { return 3 * G; }
inline std::uint64_t lambda_full(std::uint64_t A, std::uint64_t G) { return A * G + A + G; }
inline std::uint64_t q_s(std::uint64_t A, std::uint64_t P) { return 2 * P * (3 * A * A + 2 * A); }
inline std::uint64_t adjustment(std::uint64_t refined, std::uint64_t P) { return 2 * refined * P; }
inline std::uint64_t sigma_efficient(std::uint64_t G) { return G; }
inline std::uint64_t mu_efficient(std::uint64_t A, std::uint64_t G) { return (3 + A) * G * G + G * (1 + A); }
inline std::uint64_t varpi_efficient(std::uint64_t G) { return 3 * G; }
inline std::uint64_t gamma_efficient(std::uint64_t G) { return 7 * G; }
inline std::uint64_t lambda_efficient(std::uint64_t A) { return 2 * A; }

} // namespace mults

inline ComplexityReport count_multiplications(ComplexityScheme scheme, const ComplexityParams &p)
{
    const std::uint64_t A = p.region, G = p.grid, P = p.P_hat;
    if (A == 0 || G == 0 || P == 0 || p.refined == 0 || p.N_inter1 == 0 || p.N_exter == 0)
        throw std::invalid_argument("count_multiplications: parameters must be positive");

    // full E-step inner loop, times 3
    const std::uint64_t full3 =
        mults::sigma_full_times3(A, G) + 3 * (mults::mu_full(A, G) + mults::gamma_full(G) + mults::lambda_full(A, G));
    const std::uint64_t efficient = mults::sigma_efficient(G) + mults::mu_efficient(A, G) +
                                    mults::varpi_efficient(G) + mults::gamma_efficient(G) +
                                    mults::lambda_efficient(A) + 2 * P * (P + 1);
    const std::uint64_t refine_step = p.N_inter2 * (mults::q_s(A, P) + mults::adjustment(p.refined, P));
    const std::uint64_t ogsbi_extra = 2 * P * (P + 1);

    std::uint64_t total = 0;
    switch (scheme) {
    case ComplexityScheme::SBL: total = p.N_inter1 * full3 / 3; break;
    case ComplexityScheme::OGSBI: total = p.N_inter1 * full3 / 3 + p.N_inter1 * ogsbi_extra; break;
    case ComplexityScheme::GESBI:
        total = p.N_exter * (2 * A * P + p.N_inter1 * full3 / 3 + p.N_inter1 * ogsbi_extra);
        break;
    case ComplexityScheme::TGEESBI: total = p.N_exter * (2 * A * P + p.N_inter1 * efficient); break;
    case ComplexityScheme::GRASBI: total = p.N_exter * (refine_step + p.N_inter1 * full3 / 3); break;
    case ComplexityScheme::TGRAESBI: total = p.N_exter * (refine_step + p.N_inter1 * efficient); break;
    }
    return {scheme, p, total};
}

} // namespace oddm
