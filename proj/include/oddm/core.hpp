// SPDX-License-Identifier: Apache-2.0
//
// oddm-chanest: delay-Doppler channel estimation toolkit for ODDM waveforms
// ------------------------------------------------------------------------

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace oddm {

using cd = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

inline constexpr double pi = std::numbers::pi;

/// System and frame parameters. Delay/Doppler quantities are normalized to the
/// sample period Ts = T/M and the Doppler resolution 1/(NT) respectively.
struct SystemParams
{
    int M = 32;                 ///< delay bins (ODDM symbols)
    int N = 32;                 ///< Doppler bins (subcarriers)
    double T = 1.0 / 15e3;      ///< multicarrier symbol interval [s]
    double fc = 4e9;            ///< carrier frequency [Hz]
    int D = 4;                  ///< CP length in samples, also the maximum lag
    int kmax = 4;               ///< maximum normalized Doppler magnitude
    double beta = 0.15;         ///< root-raised-cosine roll-off
    int l0 = 16;                ///< pilot delay index
    int k0 = 16;                ///< pilot Doppler index
    double pilot_offset_db = 30.0;
    double snr_db = 10.0;

    double Ts() const { return T / M; }
    int MN() const { return M * N; }
    int M_T() const { return D + 1; }
    int N_T() const { return 2 * kmax + 1; }
    int region_size() const { return M_T() * N_T(); }

    void validate() const
    {
        if (M < 1 || N < 1)
            throw std::invalid_argument("SystemParams: M and N must be positive");
        if (D < 1)
            throw std::invalid_argument("SystemParams: D must be at least 1");
        if (kmax < 1)
            throw std::invalid_argument("SystemParams: kmax must be at least 1");
        if (!(beta >= 0.0 && beta <= 1.0))
            throw std::invalid_argument("SystemParams: beta must lie in [0, 1]");
        if (!(T > 0.0) || !std::isfinite(T))
            throw std::invalid_argument("SystemParams: T must be positive");
        if (l0 - D < 0 || l0 + D > M - 1)
            throw std::invalid_argument("SystemParams: delay guard region exceeds the frame");
        if (k0 - 2 * kmax < 0 || k0 + 2 * kmax > N - 1)
            throw std::invalid_argument("SystemParams: Doppler guard region exceeds the frame");
    }
};

/// M x N grid of delay-Doppler symbols, entry (l, k). Vectorization is
/// Doppler-innermost: i = l*N + k.
class DDFrame
{
  public:
    DDFrame() = default;
    DDFrame(int M, int N) : grid_(CMatrix::Zero(M, N)) {}
    explicit DDFrame(CMatrix grid) : grid_(std::move(grid)) {}

    int delay_bins() const { return static_cast<int>(grid_.rows()); }
    int doppler_bins() const { return static_cast<int>(grid_.cols()); }

    cd &operator()(int l, int k) { return grid_(l, k); }
    const cd &operator()(int l, int k) const { return grid_(l, k); }

    const CMatrix &grid() const { return grid_; }
    CMatrix &grid() { return grid_; }

  private:
    CMatrix grid_;
};

inline CVector vectorize(const DDFrame &frame)
{
    const int M = frame.delay_bins(), N = frame.doppler_bins();
    CVector v(static_cast<Eigen::Index>(M) * N);
    for (int l = 0; l < M; ++l)
        for (int k = 0; k < N; ++k)
            v(l * N + k) = frame(l, k);
    return v;
}

inline DDFrame devectorize(const CVector &v, int M, int N)
{
    if (M < 1 || N < 1 || v.size() != static_cast<Eigen::Index>(M) * N)
        throw std::invalid_argument("devectorize: vector length does not match M*N");
    DDFrame frame(M, N);
    for (int l = 0; l < M; ++l)
        for (int k = 0; k < N; ++k)
            frame(l, k) = v(l * N + k);
    return frame;
}

/// One propagation path: complex gain, normalized delay l_p = tau_p/Ts and
/// normalized Doppler k_p = nu_p*N*T.
struct Path
{
    cd rho{0.0, 0.0};
    double delay = 0.0;
    double doppler = 0.0;
};

using PathSet = std::vector<Path>;

/// Checks every path against the closed estimation-region bounds
/// [0, D] x [-kmax, kmax].
inline void validate_paths(const PathSet &paths, const SystemParams &params)
{
    for (const auto &p : paths) {
        if (!std::isfinite(p.delay) || !std::isfinite(p.doppler) || !std::isfinite(p.rho.real()) ||
            !std::isfinite(p.rho.imag()))
            throw std::invalid_argument("PathSet: non-finite path parameter");
        if (p.delay < 0.0 || p.delay > params.D)
            throw std::invalid_argument("PathSet: path delay outside [0, D]");
        if (std::abs(p.doppler) > params.kmax)
            throw std::invalid_argument("PathSet: path Doppler outside [-kmax, kmax]");
    }
}

// sin(pi t) and cos(pi t) with exact zeros at the integers / half-integers.
inline double sin_pi(double t)
{
    const double n = std::nearbyint(t);
    const double r = t - n;
    const double s = std::sin(pi * r);
    return (std::fmod(std::abs(n), 2.0) == 1.0) ? -s : s;
}

inline double cos_pi(double t)
{
    const double n = std::nearbyint(t);
    const double r = t - n;
    const double c = std::cos(pi * r);
    return (std::fmod(std::abs(n), 2.0) == 1.0) ? -c : c;
}

inline double sinc(double t)
{
    return t == 0.0 ? 1.0 : sin_pi(t) / (pi * t);
}

/// Raised-cosine pulse in units of the symbol period, g(0) = 1.
///
/// cos(pi u/2)/(1-u^2) with u = 2*beta*x is rewritten as
/// (pi/2) sinc((1-|u|)/2) / (1+|u|), which has no removable singularity at
/// |u| = 1.
inline double raised_cosine(double x, double beta)
{
    const double u = std::abs(2.0 * beta * x);
    return sinc(x) * (pi / 2.0) * sinc((1.0 - u) / 2.0) / (1.0 + u);
}

/// Effective transceiver pulse g(tau): autocorrelation of the root-raised
/// cosine a(t), i.e. the raised cosine with period Ts and roll-off beta.
inline double eval_effective_pulse(double tau, const SystemParams &params)
{
    return raised_cosine(tau / params.Ts(), params.beta);
}

template <class Rng>
cd complex_gaussian(Rng &rng, double variance)
{
    std::normal_distribution<double> dist(0.0, std::sqrt(variance / 2.0));
    const double re = dist(rng);
    const double im = dist(rng);
    return {re, im};
}

/// Normalized Doppler of a Jakes path arriving at angle theta.
inline double jakes_doppler(double theta, double doppler_hz, const SystemParams &params)
{
    return doppler_hz * std::cos(theta) * params.N * params.T;
}

inline double doppler_from_speed(double speed_kmh, double fc)
{
    constexpr double c_light = 299792458.0;
    return speed_kmh / 3.6 / c_light * fc;
}

/// Draws P paths: Jakes Doppler with uniform angle of arrival on (0, 2pi],
/// delay uniform on (0, D), gains CN(0, 1/P) so the expected total power is 1.
template <class Rng>
PathSet generate_jakes_channel(int P, double doppler_hz, const SystemParams &params, Rng &rng)
{
    if (P < 1)
        throw std::invalid_argument("generate_jakes_channel: P must be at least 1");
    if (!(doppler_hz >= 0.0) || !(doppler_hz * params.N * params.T < params.kmax))
        throw std::invalid_argument("generate_jakes_channel: f_d*N*T must lie in [0, kmax)");

    std::uniform_real_distribution<double> angle(0.0, 2.0 * pi);
    std::uniform_real_distribution<double> delay(0.0, static_cast<double>(params.D));

    PathSet paths(static_cast<std::size_t>(P));
    for (auto &p : paths) {
        const double theta = 2.0 * pi - angle(rng);
        p.doppler = jakes_doppler(theta, doppler_hz, params);
        do {
            p.delay = delay(rng);
        } while (p.delay <= 0.0);
        p.rho = complex_gaussian(rng, 1.0 / P);
    }
    return paths;
}

} // namespace oddm
