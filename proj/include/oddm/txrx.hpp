// SPDX-License-Identifier: Apache-2.0
//
// oddm-chanest: delay-Doppler channel estimation toolkit for ODDM waveforms
// ------------------------------------------------------------------------

#pragma once

#include "oddm/core.hpp"

#include <unsupported/Eigen/FFT>

namespace oddm {

/// Transmit chain: per-delay-row unitary IDFT over Doppler, serialization
/// x[q] = X_DT[q mod M, q / M], and a D-sample cyclic prefix.
/// Returns MN + D samples, CP first.
inline CVector modulate(const DDFrame &frame, const SystemParams &params)
{
    const int M = params.M, N = params.N, D = params.D;
    if (frame.delay_bins() != M || frame.doppler_bins() != N)
        throw std::invalid_argument("modulate: frame dimensions do not match M x N");

    Eigen::FFT<double> fft;
    const double scale = std::sqrt(static_cast<double>(N));
    std::vector<cd> row(N), out(N);
    CVector x(params.MN());
    for (int l = 0; l < M; ++l) {
        for (int k = 0; k < N; ++k)
            row[k] = frame(l, k);
        fft.inv(out, row); // (1/N) sum_k X[k] e^{+j2pi nk/N}
        for (int n = 0; n < N; ++n)
            x(n * M + l) = out[n] * scale;
    }

    CVector x_cp(params.MN() + D);
    x_cp.head(D) = x.tail(D);
    x_cp.tail(params.MN()) = x;
    return x_cp;
}

/// Sampled matched-filter output of the doubly-selective channel with lags
/// d = 0..D, CP removed: y[q] = sum_d h[d,q] x[q-d] + z[q].
template <class Rng>
CVector apply_channel_time(const CVector &x_cp, const PathSet &paths, double sigma2,
                           const SystemParams &params, Rng &rng)
{
    const int MN = params.MN(), D = params.D;
    if (x_cp.size() != MN + D)
        throw std::invalid_argument("apply_channel_time: expected MN + D samples");
    validate_paths(paths, params);
    if (!(sigma2 >= 0.0))
        throw std::invalid_argument("apply_channel_time: negative noise variance");

    // rho_{d,p} = rho_p g((d - l_p) Ts)
    std::vector<std::vector<cd>> tap(paths.size(), std::vector<cd>(D + 1));
    for (std::size_t p = 0; p < paths.size(); ++p)
        for (int d = 0; d <= D; ++d)
            tap[p][d] = paths[p].rho * raised_cosine(d - paths[p].delay, params.beta);

    CVector y = CVector::Zero(MN);
    for (int q = 0; q < MN; ++q) {
        cd acc{0.0, 0.0};
        for (std::size_t p = 0; p < paths.size(); ++p) {
            const cd rot = std::polar(1.0, 2.0 * pi * paths[p].doppler * (q - paths[p].delay) / MN);
            cd conv{0.0, 0.0};
            for (int d = 0; d <= D; ++d)
                conv += tap[p][d] * x_cp(q - d + D);
            acc += rot * conv;
        }
        y(q) = acc;
    }
    if (sigma2 > 0.0)
        for (int q = 0; q < MN; ++q)
            y(q) += complex_gaussian(rng, sigma2);
    return y;
}

/// Receive chain: Y_DT[l,n] = y[nM + l] followed by a per-row unitary DFT.
inline DDFrame demodulate(const CVector &y, const SystemParams &params)
{
    const int M = params.M, N = params.N;
    if (y.size() != params.MN())
        throw std::invalid_argument("demodulate: expected MN samples");

    Eigen::FFT<double> fft;
    const double scale = 1.0 / std::sqrt(static_cast<double>(N));
    std::vector<cd> row(N), out(N);
    DDFrame frame(M, N);
    for (int l = 0; l < M; ++l) {
        for (int n = 0; n < N; ++n)
            row[n] = y(n * M + l);
        fft.fwd(out, row);
        for (int k = 0; k < N; ++k)
            frame(l, k) = out[k] * scale;
    }
    return frame;
}

/// (1/N) (1 - e^{j2pi x}) / (1 - e^{j2pi x/N}); the 0/0 case x = mN
/// evaluates to its limit 1.
inline cd doppler_kernel(double x, int N)
{
    const double den = sin_pi(x / N);
    const double ratio = den == 0.0 ? cos_pi(x) / cos_pi(x / N) : sin_pi(x) / (N * den);
    return std::polar(ratio, pi * x * (N - 1) / N);
}

/// [A_{nu,p}]_{k, n_tilde}
inline cd doppler_kernel(int k, int n_tilde, double k_p, int N)
{
    return doppler_kernel(n_tilde + k_p - k, N);
}

/// h[l,d,p] = rho_p g((d - l_p) Ts) e^{j2pi (l - l_p) k_p / MN}
inline cd delay_tap(int l, int d, const Path &path, const SystemParams &params)
{
    return path.rho * raised_cosine(d - path.delay, params.beta) *
           std::polar(1.0, 2.0 * pi * (l - path.delay) * path.doppler / params.MN());
}

/// Psi[l,d,n_tilde]: 1 when the lag stays inside the current delay block,
/// otherwise the phase picked up by wrapping into the previous block.
inline cd phase_mask(int l, int d, int n_tilde, int N)
{
    return d <= l ? cd{1.0, 0.0} : std::polar(1.0, -2.0 * pi * n_tilde / N);
}

/// Equivalent sampled DD channel, y_DD = H x_DD + z_DD (Doppler-innermost
/// vectorization). Immutable after construction.
struct DDChannelOperator
{
    CMatrix H;
};

inline DDChannelOperator build_H_DD(const PathSet &paths, const SystemParams &params)
{
    validate_paths(paths, params);
    const int M = params.M, N = params.N, D = params.D;
    DDChannelOperator op{CMatrix::Zero(params.MN(), params.MN())};

    for (const auto &path : paths) {
        // kernel[k][n_tilde] depends only on n_tilde - k
        std::vector<cd> kernel(2 * N - 1);
        for (int diff = -(N - 1); diff <= N - 1; ++diff)
            kernel[diff + N - 1] = doppler_kernel(diff + path.doppler, N);

        for (int l = 0; l < M; ++l) {
            for (int d = 0; d <= D; ++d) {
                const cd h = delay_tap(l, d, path, params);
                const int src = ((l - d) % M + M) % M;
                for (int n_tilde = 0; n_tilde < N; ++n_tilde) {
                    const cd hp = h * phase_mask(l, d, n_tilde, N);
                    for (int k = 0; k < N; ++k)
                        op.H(l * N + k, src * N + n_tilde) += hp * kernel[n_tilde - k + N - 1];
                }
            }
        }
    }
    return op;
}

inline DDFrame apply_H_DD(const DDChannelOperator &op, const DDFrame &frame)
{
    const int M = frame.delay_bins(), N = frame.doppler_bins();
    if (op.H.rows() != static_cast<Eigen::Index>(M) * N || op.H.cols() != op.H.rows())
        throw std::invalid_argument("apply_H_DD: operator and frame dimensions differ");
    return devectorize(op.H * vectorize(frame), M, N);
}

template <class Rng>
DDFrame apply_H_DD(const DDChannelOperator &op, const DDFrame &frame, double sigma2, Rng &rng)
{
    if (!(sigma2 >= 0.0))
        throw std::invalid_argument("apply_H_DD: negative noise variance");
    DDFrame out = apply_H_DD(op, frame);
    if (sigma2 > 0.0)
        for (int l = 0; l < out.delay_bins(); ++l)
            for (int k = 0; k < out.doppler_bins(); ++k)
                out(l, k) += complex_gaussian(rng, sigma2);
    return out;
}

/// Matrix-free evaluation of the DD input-output relation (noiseless).
inline DDFrame apply_dd_relation(const PathSet &paths, const DDFrame &frame, const SystemParams &params)
{
    validate_paths(paths, params);
    const int M = params.M, N = params.N, D = params.D;
    if (frame.delay_bins() != M || frame.doppler_bins() != N)
        throw std::invalid_argument("apply_dd_relation: frame dimensions do not match M x N");

    DDFrame out(M, N);
    for (const auto &path : paths) {
        std::vector<cd> kernel(2 * N - 1);
        for (int diff = -(N - 1); diff <= N - 1; ++diff)
            kernel[diff + N - 1] = doppler_kernel(diff + path.doppler, N);
        for (int l = 0; l < M; ++l)
            for (int d = 0; d <= D; ++d) {
                const cd h = delay_tap(l, d, path, params);
                const int src = ((l - d) % M + M) % M;
                for (int n_tilde = 0; n_tilde < N; ++n_tilde) {
                    const cd hx = h * phase_mask(l, d, n_tilde, N) * frame(src, n_tilde);
                    if (hx == cd{0.0, 0.0})
                        continue;
                    for (int k = 0; k < N; ++k)
                        out(l, k) += hx * kernel[n_tilde - k + N - 1];
                }
            }
    }
    return out;
}

} // namespace oddm
