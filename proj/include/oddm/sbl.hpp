// SPDX-License-Identifier: Apache-2.0
//
// oddm-chanest: delay-Doppler channel estimation toolkit for ODDM waveforms
// ------------------------------------------------------------------------

#pragma once

#include "oddm/pilot.hpp"

namespace oddm {

/// Sparse Bayesian learning state. gamma holds prior variances (h ~ CN(0, diag(gamma))).
struct SBLState
{
    RVector gamma;
    double lambda = 1.0;
    CVector mu;
    CMatrix Sigma;      ///< full posterior covariance, refreshed by sbl_e_step
    RVector Sigma_diag; ///< always current
    int iters = 0;
    bool converged = false;
};

struct SBLOptions
{
    int max_iters = 500;
    double tol = 1e-3;
    double lambda_floor = 1e-12;
    /// lambda is also kept above lambda_floor_rel * ||y||^2 / (M_T N_T)
    double lambda_floor_rel = 1e-10;
    double prune_rel = 1e-12;
};

namespace detail {

// C = lambda I + Phi diag(gamma) Phi^H
inline CMatrix marginal_covariance(const CMatrix &Phi, const RVector &gamma, double lambda)
{
    CMatrix PhiG = Phi * gamma.cast<cd>().asDiagonal();
    CMatrix C = PhiG * Phi.adjoint();
    C.diagonal().array() += lambda;
    return C;
}

} // namespace detail

/// Posterior mean Gamma Phi^H C^{-1} y (algebraically lambda^{-1} Sigma Phi^H y).
inline CVector posterior_mean(const MeasurementModel &model, const RVector &gamma, double lambda)
{
    const CMatrix C = detail::marginal_covariance(model.Phi, gamma, lambda);
    Eigen::LDLT<CMatrix> ldlt(C);
    const CVector x = ldlt.solve(model.y);
    return gamma.cast<cd>().asDiagonal() * (model.Phi.adjoint() * x);
}

/// E-step: Sigma = Gamma - Gamma Phi^H (lambda I + Phi Gamma Phi^H)^{-1} Phi Gamma and the
/// posterior mean. Returns false when the result is not finite.
inline bool sbl_e_step(const MeasurementModel &model, SBLState &state)
{
    const CMatrix C = detail::marginal_covariance(model.Phi, state.gamma, state.lambda);
    Eigen::LDLT<CMatrix> ldlt(C);
    const CMatrix PhiG = model.Phi * state.gamma.cast<cd>().asDiagonal();
    const CMatrix W = ldlt.solve(PhiG);
    state.Sigma = -(PhiG.adjoint() * W);
    state.Sigma.diagonal() += state.gamma.cast<cd>();
    state.Sigma = (0.5 * (state.Sigma + state.Sigma.adjoint())).eval();
    state.Sigma_diag = state.Sigma.diagonal().real();
    state.mu = PhiG.adjoint() * ldlt.solve(model.y);
    return state.Sigma.allFinite() && state.mu.allFinite();
}

/// E-step that only forms diag(Sigma); what the EM loop consumes.
inline bool sbl_e_step_diag(const MeasurementModel &model, SBLState &state)
{
    const CMatrix C = detail::marginal_covariance(model.Phi, state.gamma, state.lambda);
    Eigen::LDLT<CMatrix> ldlt(C);
    const CMatrix W = ldlt.solve(model.Phi);
    const auto &g = state.gamma;
    state.Sigma_diag.resize(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        const double quad = model.Phi.col(i).dot(W.col(i)).real();
        state.Sigma_diag(i) = std::max(0.0, g(i) - g(i) * g(i) * quad);
    }
    state.mu = g.cast<cd>().asDiagonal() * (model.Phi.adjoint() * ldlt.solve(model.y));
    return state.Sigma_diag.allFinite() && state.mu.allFinite();
}

/// M-step: gamma_i = |mu_i|^2 / (1 - Sigma_ii/gamma_i) and
/// lambda = ||y - Phi mu||^2 / (M_T N_T - M_tau N_nu + sum_i Sigma_ii/gamma_i).
/// Returns false when the lambda denominator is not positive; lambda is then kept.
inline bool sbl_m_step(const MeasurementModel &model, SBLState &state, double lambda_floor = 1e-12)
{
    const Eigen::Index G = state.gamma.size();
    double ratio_sum = 0.0;
    RVector next = state.gamma;
    for (Eigen::Index i = 0; i < G; ++i) {
        const double g = state.gamma(i);
        if (g <= 0.0) {
            next(i) = 0.0;
            continue;
        }
        const double ratio = state.Sigma_diag(i) / g;
        ratio_sum += ratio;
        const double denom = 1.0 - ratio;
        if (denom > 1e-12)
            next(i) = std::norm(state.mu(i)) / denom;
    }

    const double residual = (model.y - model.Phi * state.mu).squaredNorm();
    const double denom = static_cast<double>(model.rows()) - static_cast<double>(G) + ratio_sum;
    state.gamma = next;
    if (!(denom > 0.0) || !std::isfinite(residual))
        return false;
    state.lambda = std::max(residual / denom, lambda_floor);
    return true;
}

inline double initial_noise_variance(const MeasurementModel &model)
{
    return model.y.squaredNorm() / (100.0 * model.rows());
}

inline double noise_floor(const MeasurementModel &model, const SBLOptions &opts)
{
    return std::max(opts.lambda_floor, opts.lambda_floor_rel * model.y.squaredNorm() / model.rows());
}

/// Zeroes prior variances below rel * max(gamma).
inline void prune_gamma(RVector &gamma, double rel)
{
    const double cut = rel * (gamma.size() > 0 ? gamma.maxCoeff() : 0.0);
    for (Eigen::Index i = 0; i < gamma.size(); ++i)
        if (gamma(i) < cut || !(gamma(i) > 0.0))
            gamma(i) = 0.0;
}

/// EM iterations from Gamma = I, lambda = ||y||^2/(100 M_T N_T) until the
/// posterior mean moves by less than opts.tol or opts.max_iters is reached.
inline SBLState sbl_run(const MeasurementModel &model, const SBLOptions &opts = {})
{
    SBLState state;
    state.gamma = RVector::Ones(model.cols());
    const double floor = noise_floor(model, opts);
    state.lambda = std::max(initial_noise_variance(model), floor);
    state.mu = CVector::Zero(model.cols());

    CVector mu_prev = state.mu;
    while (state.iters < opts.max_iters) {
        const double lambda_prev = state.lambda;
        const RVector gamma_prev = state.gamma;
        if (!sbl_e_step_diag(model, state)) {
            // diagonal loading, then retry once from the previous hyperparameters
            state.gamma = gamma_prev;
            state.lambda = std::max(2.0 * lambda_prev, floor);
            if (!sbl_e_step_diag(model, state))
                break;
        }
        if (!sbl_m_step(model, state, floor))
            state.lambda = lambda_prev;
        ++state.iters;
        const double change = (state.mu - mu_prev).norm();
        mu_prev = state.mu;
        if (change < opts.tol) {
            state.converged = true;
            break;
        }
    }

    prune_gamma(state.gamma, opts.prune_rel);
    sbl_e_step(model, state);
    state.mu = posterior_mean(model, state.gamma, state.lambda);
    return state;
}

/// log|C| + y^H C^{-1} y; the negative log marginal likelihood up to a constant.
inline double sbl_objective(const MeasurementModel &model, const RVector &gamma, double lambda)
{
    const CMatrix C = detail::marginal_covariance(model.Phi, gamma, lambda);
    Eigen::LLT<CMatrix> llt(C);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
    return logdet + model.y.dot(llt.solve(model.y)).real();
}

} // namespace oddm
