// Brute-force reference computations used to check the library. Everything
// here is dense and written from the definitions, with no shared code paths.

#ifndef HANKEL_SSR_TESTS_ORACLES_HPP
#define HANKEL_SSR_TESTS_ORACLES_HPP

#include <cmath>
#include <cstdlib>
#include <random>
#include <utility>

#include <Eigen/Dense>

#include "hankel_ssr/core.hpp"

namespace oracle
{

using Eigen::MatrixXd;
using Eigen::VectorXd;
using hankel_ssr::Index;

inline MatrixXd random_matrix(std::mt19937_64& rng, Index rows, Index cols)
{
    std::normal_distribution<double> n(0.0, 1.0);
    MatrixXd M(rows, cols);
    for (Index k = 0; k < M.size(); ++k)
        M.data()[k] = n(rng);
    return M;
}

inline VectorXd random_vector(std::mt19937_64& rng, Index n)
{
    return random_matrix(rng, n, 1);
}

inline MatrixXd random_spd(std::mt19937_64& rng, Index n, double shift = 0.5)
{
    const MatrixXd R = random_matrix(rng, n, n);
    return R * R.transpose() / double(n) + shift * MatrixXd::Identity(n, n);
}

// g_ij(k) for 1-based lag k, theta laid out channel-major.
inline double coefficient(const VectorXd& theta, Index m, Index T, Index i,
                          Index j, Index k)
{
    return theta[(i * m + j) * T + (k - 1)];
}

// yhat_i(t) = sum_j sum_{k=1..T} g_ij(k) u_j(t-k), stacked channel-major.
inline VectorXd convolution(const MatrixXd& u, const VectorXd& theta, Index p,
                            Index T)
{
    const Index N = u.rows(), m = u.cols();
    VectorXd y = VectorXd::Zero(N * p);
    for (Index i = 0; i < p; ++i)
        for (Index t = 0; t < N; ++t)
        {
            double acc = 0.0;
            for (Index j = 0; j < m; ++j)
                for (Index k = 1; k <= T; ++k)
                    if (t - k >= 0)
                        acc += coefficient(theta, m, T, i, j, k) * u(t - k, j);
            y[i * N + t] = acc;
        }
    return y;
}

// Block (a, b) of H holds g(a + b + 1) with 0-based block indices.
inline MatrixXd hankel(const VectorXd& theta, Index p, Index m, Index T,
                       Index r, Index c)
{
    MatrixXd H(r * p, c * m);
    for (Index a = 0; a < r; ++a)
        for (Index b = 0; b < c; ++b)
            for (Index i = 0; i < p; ++i)
                for (Index j = 0; j < m; ++j)
                    H(a * p + i, b * m + j) =
                        coefficient(theta, m, T, i, j, a + b + 1);
    return H;
}

// Column-major vec.
inline VectorXd vec(const MatrixXd& M)
{
    return Eigen::Map<const VectorXd>(M.data(), M.size());
}

// Dense 0/1 matrix P with P theta = vec(H^T), found column by column.
inline MatrixXd selection_matrix(Index p, Index m, Index T, Index r, Index c)
{
    const Index n = T * m * p;
    MatrixXd P(r * p * c * m, n);
    for (Index col = 0; col < n; ++col)
        P.col(col) = vec(hankel(VectorXd::Unit(n, col), p, m, T, r, c)
                             .transpose());
    return P;
}

inline MatrixXd kron(const MatrixXd& A, const MatrixXd& B)
{
    MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Index i = 0; i < A.rows(); ++i)
        for (Index j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) =
                A(i, j) * B;
    return K;
}

// P^T (W2 Q W2^T (x) W1^T W1) P with the full Kronecker product formed.
inline MatrixXd penalty(const MatrixXd& Q, const MatrixXd& W1,
                        const MatrixXd& W2, Index p, Index m, Index T, Index r,
                        Index c)
{
    const MatrixXd P = selection_matrix(p, m, T, r, c);
    return P.transpose() *
           kron(W2 * Q * W2.transpose(), W1.transpose() * W1) * P;
}

inline double logdet(const MatrixXd& M)
{
    return std::log(M.determinant());
}

// Y^T Lambda^{-1} Y + log|Lambda| with Lambda formed explicitly.
inline double evidence(const VectorXd& Y, const MatrixXd& Lambda)
{
    const Eigen::FullPivLU<MatrixXd> lu(Lambda);
    double logabs = 0.0;
    const MatrixXd U = lu.matrixLU().triangularView<Eigen::Upper>();
    for (Index k = 0; k < U.rows(); ++k)
        logabs += std::log(std::abs(U(k, k)));
    return Y.dot(lu.solve(Y)) + logabs;
}

// blockdiag(phi, ..., phi) with phi(t, j*T + k - 1) = u_j(t - k).
inline MatrixXd regressor(const MatrixXd& u, Index p, Index T)
{
    const Index N = u.rows(), m = u.cols();
    MatrixXd Phi = MatrixXd::Zero(N * p, T * m * p);
    for (Index i = 0; i < p; ++i)
        for (Index t = 0; t < N; ++t)
            for (Index j = 0; j < m; ++j)
                for (Index k = 1; k <= T; ++k)
                    Phi(i * N + t, i * T * m + j * T + k - 1) =
                        t - k >= 0 ? u(t - k, j) : 0.0;
    return Phi;
}

// Sigma (x) I_N as a dense diagonal.
inline MatrixXd noise_covariance(const VectorXd& sigma, Index N)
{
    VectorXd d(sigma.size() * N);
    for (Index i = 0; i < sigma.size(); ++i)
        d.segment(i * N, N).setConstant(sigma[i]);
    return d.asDiagonal();
}

// argmin ||Ybar - Phibar theta||^2 + theta^T A theta via QR of the stacked
// system [Phibar; R] with R^T R = A.
inline VectorXd augmented_least_squares(const MatrixXd& Phi,
                                        const VectorXd& Y,
                                        const VectorXd& sigma,
                                        const MatrixXd& A)
{
    const Index N = Y.size() / sigma.size();
    MatrixXd Pb = Phi;
    VectorXd Yb = Y;
    for (Index i = 0; i < sigma.size(); ++i)
    {
        Pb.middleRows(i * N, N) /= std::sqrt(sigma[i]);
        Yb.segment(i * N, N) /= std::sqrt(sigma[i]);
    }
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(A);
    const MatrixXd R = eig.eigenvalues().cwiseSqrt().asDiagonal() *
                       eig.eigenvectors().transpose();
    MatrixXd S(Pb.rows() + R.rows(), Pb.cols());
    S << Pb, R;
    VectorXd rhs = VectorXd::Zero(S.rows());
    rhs.head(Yb.size()) = Yb;
    return S.colPivHouseholderQr().solve(rhs);
}

// E[theta | Y] for Y = Phi theta + e, e ~ N(0, Sigma (x) I), theta ~ N(0, A^{-1}).
inline VectorXd posterior_mean(const MatrixXd& Phi, const VectorXd& Y,
                               const VectorXd& sigma, const MatrixXd& A)
{
    const Index N      = Y.size() / sigma.size();
    const MatrixXd C   = A.inverse();
    const MatrixXd Lam = Phi * C * Phi.transpose() + noise_covariance(sigma, N);
    return C * Phi.transpose() * Lam.ldlt().solve(Y);
}

// All (r, c) with r + c - 1 = T; returns the one minimizing |p r - m c|,
// preferring the larger r.
inline std::pair<Index, Index> hankel_shape(Index T, Index p, Index m)
{
    Index best_r = 1;
    Index best   = std::abs(p * 1 - m * T);
    for (Index r = 1; r <= T; ++r)
    {
        const Index c   = T - r + 1;
        const Index gap = std::abs(p * r - m * c);
        if (gap < best || (gap == best && r > best_r))
        {
            best   = gap;
            best_r = r;
        }
    }
    return {best_r, T - best_r + 1};
}

inline Index numerical_rank(const MatrixXd& M, double rel)
{
    const VectorXd s = Eigen::JacobiSVD<MatrixXd>(M).singularValues();
    Index k = 0;
    while (k < s.size() && s[k] > rel * s[0])
        ++k;
    return k;
}

} // namespace oracle

#endif // HANKEL_SSR_TESTS_ORACLES_HPP
