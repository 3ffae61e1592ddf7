// SPDX-License-Identifier: Apache-2.0
//
// oddm-chanest: delay-Doppler channel estimation toolkit for ODDM waveforms
// ------------------------------------------------------------------------

#pragma once

#include "oddm/refine.hpp"

namespace oddm {

struct TgOptions
{
    int max_iters = 500;
    double tol = 1e-3;
    double c1 = 2e-6;       ///< Gamma shape parameter of the precision prior, c1 = 2 c0 - 2
    double d0_prior = 1e-6; ///< Gamma rate parameter of the precision prior
    double c = 1e-6;        ///< noise prior shape
    double d = 1e-6;        ///< noise prior rate
    double epsilon = 1e-4;  ///< slack added to the Lipschitz constant
};

/// Hyperparameters of the Student's-t model. gamma holds precisions.
struct TStateHyper
{
    RVector gamma;
    double lambda = 1.0;
    CVector xi;
    double s0 = 0.0;
    double varpi = 0.0;
    double c0 = 0.0;
    double c1 = 0.0;
    double d0_prior = 0.0;
    double c = 0.0;
    double d = 0.0;
    double n1 = 0.0;
    double epsilon = 0.0;
};

/// Largest eigenvalue of Phi^H Phi plus epsilon, taken from the smaller of the
/// two Gram matrices.
inline double lipschitz_s0(const CMatrix &Phi, double epsilon = 1e-4)
{
    if (Phi.size() == 0)
        return epsilon;
    const CMatrix G = Phi.rows() <= Phi.cols() ? CMatrix(Phi * Phi.adjoint()) : CMatrix(Phi.adjoint() * Phi);
    const Eigen::SelfAdjointEigenSolver<CMatrix> es(G, Eigen::EigenvaluesOnly);
    return std::max(es.eigenvalues().maxCoeff(), 0.0) + epsilon;
}

/// ||y - Phi xi||^2 + 2 Re{(Phi xi - y)^H Phi (h - xi)} + s0 ||h - xi||^2,
/// a majorizer of ||y - Phi h||^2 that is tight at h = xi.
inline double tg_surrogate(const CMatrix &Phi, const CVector &y, const CVector &h, const CVector &xi, double s0)
{
    const CVector r = Phi * xi - y;
    const CVector dh = h - xi;
    return r.squaredNorm() + 2.0 * r.dot(Phi * dh).real() + s0 * dh.squaredNorm();
}

/// Quantities of the measurement model reused by every T-GRAESBI iteration.
struct TgModelCache
{
    CMatrix PhiHPhi;
    CVector PhiHy;

    explicit TgModelCache(const MeasurementModel &model)
        : PhiHPhi(model.Phi.adjoint() * model.Phi), PhiHy(model.Phi.adjoint() * model.y)
    {
    }
};

struct TgPosterior
{
    CVector mu;
    RVector Sigma_diag;
};

/// Diagonal posterior of the majorized model:
/// Sigma_ii = lambda / (lambda gamma_i + s0),
/// mu = lambda^{-1} Sigma (s0 xi - Phi^H Phi xi + Phi^H y).
inline TgPosterior tg_e_step(const TgModelCache &cache, const TStateHyper &state)
{
    const RVector denom = (state.lambda * state.gamma).array() + state.s0;
    const CVector rhs = state.s0 * state.xi - cache.PhiHPhi * state.xi + cache.PhiHy;
    TgPosterior post;
    post.Sigma_diag = state.lambda / denom.array();
    post.mu = rhs.array() / denom.cast<cd>().array();
    return post;
}

inline TgPosterior tg_e_step(const MeasurementModel &model, const TStateHyper &state)
{
    return tg_e_step(TgModelCache(model), state);
}

/// Initial hyperparameters: unit precisions, lambda = ||y||^2 / (100 M_T N_T), xi = 0.
inline TStateHyper tg_initial_state(const MeasurementModel &model, const TgOptions &opts)
{
    if (opts.c1 <= -2.0 || !(opts.d0_prior > 0.0) || !(opts.c >= 0.0) || !(opts.d > 0.0) || !(opts.epsilon > 0.0))
        throw std::invalid_argument("TgOptions: invalid prior constants");
    TStateHyper st;
    st.gamma = RVector::Ones(model.cols());
    st.lambda = initial_noise_variance(model);
    if (!(st.lambda > 0.0))
        st.lambda = opts.d;
    st.xi = CVector::Zero(model.cols());
    st.s0 = lipschitz_s0(model.Phi, opts.epsilon);
    st.c1 = opts.c1;
    st.c0 = (opts.c1 + 2.0) / 2.0;
    st.d0_prior = opts.d0_prior;
    st.c = opts.c;
    st.d = opts.d;
    st.epsilon = opts.epsilon;
    st.n1 = model.cols() + 2.0 - model.rows() - 2.0 * opts.c;
    return st;
}

/// Positive root of varpi lambda^2 - n1 lambda - r = 0, evaluated without
/// cancellation.
inline double tg_lambda_root(double n1, double varpi, double r)
{
    const double disc = std::sqrt(n1 * n1 + 4.0 * varpi * r);
    if (n1 >= 0.0)
        return (n1 + disc) / (2.0 * varpi);
    return 2.0 * r / (disc - n1);
}

/// Hyperparameter updates. Returns false when some scalar update was not
/// finite; that value keeps its previous state.
inline bool tg_hyper_update(const MeasurementModel &model, TStateHyper &state, const TgPosterior &post)
{
    bool ok = true;
    state.xi = post.mu;

    const double lambda = state.lambda, s0 = state.s0;
    double varpi = 0.0;
    for (Eigen::Index i = 0; i < state.gamma.size(); ++i)
        varpi += 1.0 / (lambda + s0 / state.gamma(i));
    if (std::isfinite(varpi) && varpi > 0.0)
        state.varpi = varpi;
    else
        ok = false;

    for (Eigen::Index i = 0; i < state.gamma.size(); ++i) {
        const double g = state.gamma(i);
        const double num = (state.c1 + 1.0) * s0 + state.c1 * lambda * g;
        const double den = (lambda + s0 / g) * (2.0 * state.d0_prior + std::norm(post.mu(i)));
        const double next = std::sqrt(num / den);
        if (std::isfinite(next) && next > 0.0)
            state.gamma(i) = next;
        else
            ok = false;
    }

    const double r = (model.y - model.Phi * state.xi).squaredNorm() + 2.0 * state.d;
    const double next_lambda = tg_lambda_root(state.n1, state.varpi, r);
    if (std::isfinite(next_lambda) && next_lambda > 0.0)
        state.lambda = next_lambda;
    else
        ok = false;
    return ok;
}

struct TgRunResult
{
    TStateHyper state;
    CVector mu;
    int iters = 0;
    bool converged = false;
    bool finite = true;
};

/// Efficient SBL: alternate the diagonal E-step and the hyperparameter
/// updates until mu moves by less than opts.tol.
inline TgRunResult tg_sbl_run(const MeasurementModel &model, const TgOptions &opts = {})
{
    TgRunResult out;
    out.state = tg_initial_state(model, opts);
    const TgModelCache cache(model);
    CVector mu_prev = CVector::Zero(model.cols());
    while (out.iters < opts.max_iters) {
        const TgPosterior post = tg_e_step(cache, out.state);
        if (!post.mu.allFinite()) {
            out.finite = false;
            break;
        }
        out.finite &= tg_hyper_update(model, out.state, post);
        ++out.iters;
        const double change = (post.mu - mu_prev).norm();
        mu_prev = post.mu;
        if (change < opts.tol) {
            out.converged = true;
            break;
        }
    }
    out.mu = mu_prev;
    return out;
}

/// Prior variances from precisions.
inline RVector precision_to_variance(const RVector &gamma)
{
    return gamma.cwiseInverse();
}

/// Efficient SBL with a Student's-t prior plus the same grid refinement as
/// grasbi_run, applied to the variances 1/gamma.
inline EstimateResult tgraesbi_run(const CVector &y_T, const SystemParams &params, const GridConfig &grid_cfg,
                                   const RefinementConfig &refine_cfg, const TgOptions &opts = {})
{
    return detail::refinement_loop(y_T, params, grid_cfg, refine_cfg, [&](const MeasurementModel &model) {
        const TgRunResult run = tg_sbl_run(model, opts);
        return SparseStageResult{precision_to_variance(run.state.gamma), run.state.lambda, run.iters, run.finite};
    });
}

} // namespace oddm
