// SPDX-License-Identifier: Apache-2.0
//
// oddm-chanest: delay-Doppler channel estimation toolkit for ODDM waveforms
// ------------------------------------------------------------------------

#pragma once

#include "oddm/pilot.hpp"

namespace oddm {

struct Tap
{
    cd rho{0.0, 0.0};
    double delay = 0.0;
    double doppler = 0.0;
};

struct EstimateDiagnostics
{
    std::vector<double> objective; ///< log|C| + y^H C^-1 y after each exterior iteration
    std::vector<int> sbl_iters;    ///< inner iterations used per exterior iteration
};

/// Output of every estimator. Tap gains undo the pilot-model phase:
/// rho = h * exp(+j2pi l k / MN).
struct EstimateResult
{
    std::vector<Tap> taps;
    VirtualGrid final_grid;
    CVector mu;
    RVector gamma; ///< prior variances on final_grid
    double lambda = 0.0;
    std::vector<int> peaks;
    EstimateDiagnostics diagnostics;
    int exter_iters = 0;
    bool flagged = false;
};

inline cd gain_from_coefficient(cd h, double delay, double doppler, const SystemParams &params)
{
    return h * std::polar(1.0, 2.0 * pi * delay * doppler / params.MN());
}

inline cd coefficient_from_gain(cd rho, double delay, double doppler, const SystemParams &params)
{
    return rho * std::polar(1.0, -2.0 * pi * delay * doppler / params.MN());
}

/// Taps at the given grid indices, one per distinct index.
inline std::vector<Tap> taps_from_indices(const std::vector<int> &indices, const CVector &mu,
                                          const VirtualGrid &grid, const SystemParams &params)
{
    std::vector<Tap> taps;
    std::vector<int> seen;
    for (int i : indices) {
        if (std::find(seen.begin(), seen.end(), i) != seen.end())
            continue;
        seen.push_back(i);
        const DDPoint p = grid.point(i);
        taps.push_back({gain_from_coefficient(mu(i), p.delay, p.doppler, params), p.delay, p.doppler});
    }
    return taps;
}

} // namespace oddm
