// SPDX-License-Identifier: Apache-2.0
//
// oddm-chanest: delay-Doppler channel estimation toolkit for ODDM waveforms
// ------------------------------------------------------------------------

#pragma once

#include "oddm/core.hpp"
#include "oddm/txrx.hpp"

#include <algorithm>

namespace oddm {

/// Pilot amplitude for a given average data-symbol power.
inline double pilot_amplitude(const SystemParams &params, double data_power = 1.0)
{
    return std::sqrt(std::pow(10.0, params.pilot_offset_db / 10.0) * data_power);
}

/// Places the pilot at (l0, k0) and zeros the guard block
/// [l0-D, l0+D] x [k0-2kmax, k0+2kmax] around it. Data elsewhere is untouched.
inline DDFrame embed_pilot(const DDFrame &data, const SystemParams &params, double data_power = 1.0)
{
    params.validate();
    if (data.delay_bins() != params.M || data.doppler_bins() != params.N)
        throw std::invalid_argument("embed_pilot: frame dimensions do not match M x N");

    DDFrame frame = data;
    for (int l = params.l0 - params.D; l <= params.l0 + params.D; ++l)
        for (int k = params.k0 - 2 * params.kmax; k <= params.k0 + 2 * params.kmax; ++k)
            frame(l, k) = cd{0.0, 0.0};
    frame(params.l0, params.k0) = pilot_amplitude(params, data_power);
    return frame;
}

/// Received samples of the channel-estimation region
/// [l0, l0+D] x [k0-kmax, k0+kmax], row (l-l0)*N_T + (k-k0+kmax).
inline CVector extract_region(const DDFrame &Y, const SystemParams &params)
{
    const int MT = params.M_T(), NT = params.N_T();
    CVector y(MT * NT);
    for (int a = 0; a < MT; ++a)
        for (int b = 0; b < NT; ++b)
            y(a * NT + b) = Y(params.l0 + a, params.k0 - params.kmax + b);
    return y;
}

/// Dictionary atom for a path at normalized delay l and Doppler k, observed
/// through the pilot in the estimation region.
inline CVector phi_column(double l, double k, const SystemParams &params, double d0)
{
    if (!(l >= 0.0 && l <= params.D) || !(std::abs(k) <= params.kmax))
        throw std::invalid_argument("phi_column: (l, k) outside the estimation region");

    const int MT = params.M_T(), NT = params.N_T();
    CVector col(MT * NT);
    for (int a = 0; a < MT; ++a) {
        const int lg = params.l0 + a;
        const cd delay_part =
            d0 * raised_cosine(a - l, params.beta) * std::polar(1.0, 2.0 * pi * lg * k / params.MN());
        for (int b = 0; b < NT; ++b) {
            const int kg = params.k0 - params.kmax + b;
            col(a * NT + b) = delay_part * doppler_kernel(params.k0 + k - kg, params.N);
        }
    }
    return col;
}

struct DDPoint
{
    double delay = 0.0;
    double doppler = 0.0;

    friend bool operator==(const DDPoint &, const DDPoint &) = default;
};

/// Virtual grid over the estimation region; point i = b*N_nu + a sits at
/// delay b*r_tau and Doppler a*r_nu - kmax until it is adjusted.
struct VirtualGrid
{
    int M_tau = 0;
    int N_nu = 0;
    double r_tau = 0.0;
    double r_nu = 0.0;
    double delay_max = 0.0;
    double doppler_max = 0.0;
    std::vector<double> l_bar;
    std::vector<double> k_bar;

    int size() const { return M_tau * N_nu; }
    DDPoint point(int i) const { return {l_bar[i], k_bar[i]}; }

    DDPoint clamp(DDPoint p) const
    {
        return {std::clamp(p.delay, 0.0, delay_max), std::clamp(p.doppler, -doppler_max, doppler_max)};
    }

    bool contains(DDPoint p) const
    {
        return p.delay >= 0.0 && p.delay <= delay_max && std::abs(p.doppler) <= doppler_max;
    }
};

inline VirtualGrid build_virtual_grid(int M_tau, int N_nu, const SystemParams &params)
{
    if (M_tau < 2 || N_nu < 2)
        throw std::invalid_argument("build_virtual_grid: M_tau and N_nu must be at least 2");
    VirtualGrid grid;
    grid.M_tau = M_tau;
    grid.N_nu = N_nu;
    grid.delay_max = params.D;
    grid.doppler_max = params.kmax;
    grid.r_tau = static_cast<double>(params.D) / (M_tau - 1);
    grid.r_nu = 2.0 * params.kmax / (N_nu - 1);
    grid.l_bar.resize(grid.size());
    grid.k_bar.resize(grid.size());
    for (int i = 0; i < grid.size(); ++i) {
        const int b = i / N_nu;
        const int a = i - b * N_nu;
        // end points pinned exactly to the bounds
        grid.l_bar[i] = b == M_tau - 1 ? static_cast<double>(params.D) : b * grid.r_tau;
        grid.k_bar[i] = a == N_nu - 1 ? static_cast<double>(params.kmax) : a * grid.r_nu - params.kmax;
    }
    return grid;
}

/// Sparse-recovery instance y_T = Phi h + z for the current virtual grid.
struct MeasurementModel
{
    SystemParams params;
    double d0 = 0.0;
    CVector y;   ///< region observation
    CMatrix Phi; ///< one column per virtual grid point
    CMatrix R_y; ///< y y^H

    int rows() const { return static_cast<int>(Phi.rows()); }
    int cols() const { return static_cast<int>(Phi.cols()); }
};

inline MeasurementModel build_measurement_matrix(const CVector &y_T, const VirtualGrid &grid,
                                                 const SystemParams &params, double d0)
{
    if (y_T.size() != params.region_size())
        throw std::invalid_argument("build_measurement_matrix: observation length differs from M_T*N_T");
    MeasurementModel model;
    model.params = params;
    model.d0 = d0;
    model.y = y_T;
    model.R_y = y_T * y_T.adjoint();
    model.Phi.resize(params.region_size(), grid.size());
    for (int i = 0; i < grid.size(); ++i)
        model.Phi.col(i) = phi_column(grid.l_bar[i], grid.k_bar[i], params, d0);
    return model;
}

/// Moves grid point i and refreshes the matching dictionary column.
inline void move_grid_point(VirtualGrid &grid, MeasurementModel &model, int i, DDPoint p)
{
    if (!grid.contains(p))
        throw std::invalid_argument("move_grid_point: point outside the estimation region");
    grid.l_bar[i] = p.delay;
    grid.k_bar[i] = p.doppler;
    model.Phi.col(i) = phi_column(p.delay, p.doppler, model.params, model.d0);
}

/// Sparsity level from the compressed-sensing rule floor(M_T N_T / ln(M_tau N_nu)),
/// capped at the grid size.
inline int estimate_P_hat(int region_size, int grid_size)
{
    if (region_size < 1 || grid_size < 2)
        throw std::invalid_argument("estimate_P_hat: degenerate sizes");
    const int p = static_cast<int>(std::floor(region_size / std::log(static_cast<double>(grid_size))));
    return std::clamp(p, 1, grid_size);
}

inline int estimate_P_hat(const SystemParams &params, const VirtualGrid &grid)
{
    return estimate_P_hat(params.region_size(), grid.size());
}

} // namespace oddm
