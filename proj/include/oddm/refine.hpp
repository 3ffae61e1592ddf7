// SPDX-License-Identifier: Apache-2.0
//
// oddm-chanest: delay-Doppler channel estimation toolkit for ODDM waveforms
// ------------------------------------------------------------------------

#pragma once

#include "oddm/estimate.hpp"
#include "oddm/sbl.hpp"

#include <limits>
#include <numeric>

namespace oddm {

/// Refined-grid search settings. Non-positive half-widths resolve to half of
/// the virtual-grid resolution.
struct RefinementConfig
{
    int M_hat = 50;
    int N_hat = 50;
    double delta1 = 0.0;
    double delta2 = 0.0;
    int N_inter2 = 10;
    int N_exter = 5;

    RefinementConfig resolved(const VirtualGrid &grid) const
    {
        RefinementConfig cfg = *this;
        if (!(cfg.delta1 > 0.0))
            cfg.delta1 = grid.r_tau / 2.0;
        if (!(cfg.delta2 > 0.0))
            cfg.delta2 = grid.r_nu / 2.0;
        return cfg;
    }

    void validate(const VirtualGrid &grid) const
    {
        const RefinementConfig cfg = resolved(grid);
        if (cfg.M_hat < 2 || cfg.N_hat < 2)
            throw std::invalid_argument("RefinementConfig: M_hat and N_hat must be at least 2");
        if (cfg.N_inter2 < 0 || cfg.N_exter < 1)
            throw std::invalid_argument("RefinementConfig: need N_inter2 >= 0 and N_exter >= 1");
        if (!(cfg.delta1 < grid.r_tau) || !(cfg.delta2 < grid.r_nu))
            throw std::invalid_argument("RefinementConfig: refined half-widths must stay below the grid resolution");
    }
};

struct GridConfig
{
    int M_tau = 10;
    int N_nu = 10;
};

/// Indices of the P_hat largest entries, descending; ties go to the lower index.
inline std::vector<int> select_peaks(const RVector &gamma, int P_hat)
{
    if (P_hat < 0 || P_hat > gamma.size())
        throw std::invalid_argument("select_peaks: P_hat exceeds the grid size");
    std::vector<int> idx(static_cast<std::size_t>(gamma.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + P_hat, idx.end(), [&](int a, int b) {
        return gamma(a) > gamma(b) || (gamma(a) == gamma(b) && a < b);
    });
    idx.resize(static_cast<std::size_t>(P_hat));
    return idx;
}

/// Separable M_hat x N_hat patch around a grid point; coordinates are clamped
/// to the region and deduplicated. Candidate (j, m) has delay delays[j] and
/// Doppler dopplers[m].
struct RefinedGrid
{
    std::vector<double> delays;
    std::vector<double> dopplers;

    std::size_t size() const { return delays.size() * dopplers.size(); }

    std::vector<DDPoint> points() const
    {
        std::vector<DDPoint> pts;
        pts.reserve(size());
        for (double l : delays)
            for (double k : dopplers)
                pts.push_back({l, k});
        return pts;
    }
};

namespace detail {

inline std::vector<double> refined_axis(double center, double half_width, int count, double lo, double hi)
{
    std::vector<double> axis;
    axis.reserve(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) {
        const double v = center - half_width + 2.0 * half_width * j / (count - 1);
        const double c = std::clamp(v, lo, hi);
        if (axis.empty() || c != axis.back())
            axis.push_back(c);
    }
    return axis;
}

} // namespace detail

inline RefinedGrid build_refined_grid(DDPoint center, const RefinementConfig &cfg, const VirtualGrid &grid)
{
    if (!grid.contains(center))
        throw std::invalid_argument("build_refined_grid: center outside the estimation region");
    const RefinementConfig r = cfg.resolved(grid);
    return {detail::refined_axis(center.delay, r.delta1, r.M_hat, 0.0, grid.delay_max),
            detail::refined_axis(center.doppler, r.delta2, r.N_hat, -grid.doppler_max, grid.doppler_max)};
}

struct DowndatedInverse
{
    CMatrix C_minus_inv;
    double logdet = 0.0;
};

/// (lambda I + sum_{m != exclude} gamma_m phi_m phi_m^H)^{-1} and its log-determinant,
/// computed densely.
inline DowndatedInverse downdated_inverse(const MeasurementModel &model, const RVector &gamma, double lambda,
                                          int exclude)
{
    if (!(lambda > 0.0))
        throw std::invalid_argument("downdated_inverse: lambda must be positive");
    RVector g = gamma;
    g(exclude) = 0.0;
    const CMatrix C = detail::marginal_covariance(model.Phi, g, lambda);
    Eigen::LLT<CMatrix> llt(C);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("downdated_inverse: covariance is not positive definite");
    DowndatedInverse out;
    out.C_minus_inv = llt.solve(CMatrix::Identity(C.rows(), C.cols()));
    out.C_minus_inv = (0.5 * (out.C_minus_inv + out.C_minus_inv.adjoint())).eval();
    out.logdet = 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
    return out;
}

struct QS
{
    double q = 0.0;
    double s = 0.0;
};

/// q = phi^H C^-1 y y^H C^-1 phi = |phi^H C^-1 y|^2 and s = phi^H C^-1 phi.
inline QS compute_q_s(const CVector &phi, const CMatrix &C_minus_inv, const CVector &y)
{
    const CVector w = C_minus_inv * phi;
    return {std::norm(w.dot(y)), phi.dot(w).real()};
}

/// Minimizer over gamma >= 0 of log(1 + gamma s) - q / (1/gamma + s).
inline double optimal_gamma(double q, double s)
{
    return q > s ? (q - s) / (s * s) : 0.0;
}

/// log(1 + gamma s) - q / (1/gamma + s): the part of the marginal-likelihood
/// objective that depends on one atom.
inline double atom_objective(double gamma, double q, double s)
{
    if (gamma <= 0.0)
        return 0.0;
    return std::log1p(gamma * s) - gamma * q / (1.0 + gamma * s);
}

struct ScoredCandidate
{
    DDPoint point;
    QS qs;
};

/// q/s for every candidate of a refined grid. Each atom factors into a real
/// delay profile times a Doppler-dependent complex pattern, so s reduces to an
/// M_T x M_T quadratic form per Doppler value.
inline std::vector<ScoredCandidate> score_refined_grid(const MeasurementModel &model, const CMatrix &C_minus_inv,
                                                       const RefinedGrid &refined)
{
    const SystemParams &par = model.params;
    const int MT = par.M_T(), NT = par.N_T();
    const CVector x = C_minus_inv * model.y;

    std::vector<RVector> profiles;
    profiles.reserve(refined.delays.size());
    for (double l : refined.delays) {
        RVector u(MT);
        for (int a = 0; a < MT; ++a)
            u(a) = raised_cosine(a - l, par.beta);
        profiles.push_back(u);
    }

    std::vector<ScoredCandidate> out(refined.size());
    CVector z(MT * NT), t(MT);
    CMatrix S(MT, MT), V(MT * NT, MT);
    for (std::size_t m = 0; m < refined.dopplers.size(); ++m) {
        const double k = refined.dopplers[m];
        for (int a = 0; a < MT; ++a) {
            const cd phase = model.d0 * std::polar(1.0, 2.0 * pi * (par.l0 + a) * k / par.MN());
            for (int b = 0; b < NT; ++b)
                z(a * NT + b) = phase * doppler_kernel(par.k0 + k - (par.k0 - par.kmax + b), par.N);
        }
        for (int a = 0; a < MT; ++a) {
            t(a) = z.segment(a * NT, NT).dot(x.segment(a * NT, NT));
            V.col(a) = C_minus_inv.middleCols(a * NT, NT) * z.segment(a * NT, NT);
        }
        for (int a = 0; a < MT; ++a)
            for (int b = 0; b < MT; ++b)
                S(a, b) = z.segment(a * NT, NT).dot(V.col(b).segment(a * NT, NT));

        for (std::size_t j = 0; j < refined.delays.size(); ++j) {
            const RVector &u = profiles[j];
            const cd proj = u.cast<cd>().dot(t);
            const double s = (u.cast<cd>().transpose() * S * u.cast<cd>()).value().real();
            out[j * refined.dopplers.size() + m] = {{refined.delays[j], k}, {std::norm(proj), s}};
        }
    }
    return out;
}

struct AdjustmentResult
{
    DDPoint point;
    double gamma = 0.0;
    bool changed = false;
};

/// Moves grid point i to the refined candidate maximizing q/s subject to q > s
/// and sets gamma_i to its optimal value. The current location competes as a
/// candidate. Without an admissible candidate the point stays and gamma_i = 0.
inline AdjustmentResult adjust_grid_point(MeasurementModel &model, VirtualGrid &grid, RVector &gamma, double lambda,
                                          int i, const RefinementConfig &cfg)
{
    const DowndatedInverse inv = downdated_inverse(model, gamma, lambda, i);
    const DDPoint current = grid.point(i);
    std::vector<ScoredCandidate> scored = score_refined_grid(model, inv.C_minus_inv, build_refined_grid(current, cfg, grid));
    scored.push_back({current, compute_q_s(model.Phi.col(i), inv.C_minus_inv, model.y)});

    const ScoredCandidate *best = nullptr;
    double best_ratio = -std::numeric_limits<double>::infinity();
    for (const auto &c : scored) {
        if (!(c.qs.q > c.qs.s) || !(c.qs.s > 0.0))
            continue;
        const double ratio = c.qs.q / c.qs.s;
        const bool better = ratio > best_ratio ||
                            (ratio == best_ratio && (c.point.delay < best->point.delay ||
                                                     (c.point.delay == best->point.delay &&
                                                      c.point.doppler < best->point.doppler)));
        if (better) {
            best = &c;
            best_ratio = ratio;
        }
    }

    if (best == nullptr) {
        gamma(i) = 0.0;
        return {current, 0.0, false};
    }
    gamma(i) = optimal_gamma(best->qs.q, best->qs.s);
    const bool changed = !(best->point == current);
    if (changed)
        move_grid_point(grid, model, i, best->point);
    return {best->point, gamma(i), changed};
}

/// N_inter2 sequential sweeps over the peaks; each adjustment sees all earlier ones.
inline void refine_peaks(MeasurementModel &model, VirtualGrid &grid, RVector &gamma, double lambda,
                         const std::vector<int> &peaks, const RefinementConfig &cfg)
{
    for (int sweep = 0; sweep < cfg.N_inter2; ++sweep)
        for (int i : peaks)
            adjust_grid_point(model, grid, gamma, lambda, i, cfg);
}

/// Outcome of the sparse-recovery stage of one exterior iteration, in the
/// variance convention used by the refinement step.
struct SparseStageResult
{
    RVector gamma;
    double lambda = 0.0;
    int iters = 0;
    bool finite = true;
};

namespace detail {

// Exterior loop shared by the estimators: sparse-recovery stage, peak selection,
// then N_inter2 sweeps of grid adjustment.
template <class Stage>
EstimateResult refinement_loop(const CVector &y_T, const SystemParams &params, const GridConfig &grid_cfg,
                               const RefinementConfig &refine_cfg, Stage &&stage)
{
    VirtualGrid grid = build_virtual_grid(grid_cfg.M_tau, grid_cfg.N_nu, params);
    refine_cfg.validate(grid);
    const RefinementConfig cfg = refine_cfg.resolved(grid);
    MeasurementModel model = build_measurement_matrix(y_T, grid, params, pilot_amplitude(params));
    const int P_hat = estimate_P_hat(params, grid);

    EstimateResult result;
    RVector gamma;
    double lambda = 0.0;
    for (int ell = 0; ell < cfg.N_exter; ++ell) {
        SparseStageResult st = stage(model);
        gamma = std::move(st.gamma);
        lambda = st.lambda;
        result.diagnostics.sbl_iters.push_back(st.iters);
        result.flagged |= !st.finite;

        result.peaks = select_peaks(gamma, P_hat);
        try {
            refine_peaks(model, grid, gamma, lambda, result.peaks, cfg);
        } catch (const std::runtime_error &) {
            result.flagged = true;
        }
        result.diagnostics.objective.push_back(sbl_objective(model, gamma, lambda));
        ++result.exter_iters;
    }

    result.mu = posterior_mean(model, gamma, lambda);
    result.gamma = gamma;
    result.lambda = lambda;
    result.taps = taps_from_indices(result.peaks, result.mu, grid, params);
    result.final_grid = std::move(grid);
    result.flagged |= !result.mu.allFinite();
    return result;
}

} // namespace detail

/// SBL plus likelihood-based grid refinement and adjustment.
inline EstimateResult grasbi_run(const CVector &y_T, const SystemParams &params, const GridConfig &grid_cfg,
                                 const RefinementConfig &refine_cfg, const SBLOptions &sbl_opts = {})
{
    return detail::refinement_loop(y_T, params, grid_cfg, refine_cfg, [&](const MeasurementModel &model) {
        const SBLState state = sbl_run(model, sbl_opts);
        return SparseStageResult{state.gamma, state.lambda, state.iters, state.mu.allFinite()};
    });
}

/// Plain SBL on the uniform virtual grid (no refinement).
inline EstimateResult sbl_estimate(const CVector &y_T, const SystemParams &params, const GridConfig &grid_cfg,
                                   const SBLOptions &sbl_opts = {})
{
    RefinementConfig cfg;
    cfg.N_exter = 1;
    cfg.N_inter2 = 0;
    return grasbi_run(y_T, params, grid_cfg, cfg, sbl_opts);
}

} // namespace oddm
