///
/// \file core.hpp
///
/// Impulse-response layout, regressors and block Hankel constructions for
/// MIMO output-error identification.
///
/// Conventions used throughout the library:
///
///  - `p` outputs, `m` inputs, truncation length `T`.
///  - The parameter vector stacks channel blocks (i,j) in row-major channel
///    order, (0,0),(0,1),...,(0,m-1),(1,0),...,(p-1,m-1); each block holds
///    the `T` coefficients [g(1)]_ij ... [g(T)]_ij.
///  - Lags are stored 0-based: `coefficient(k, i, j)` is [g(k+1)]_ij.
///  - Inputs before the first sample are zero.
///

#ifndef HANKEL_SSR_CORE_HPP
#define HANKEL_SSR_CORE_HPP

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace hankel_ssr
{

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Raised when a factorization or a numerical evaluation breaks down.
class NumericalError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

//-----------------------------------------------------------------------------
// ImpulseResponse
//-----------------------------------------------------------------------------

///
/// Truncated impulse response of a p x m system, g(1) ... g(T).
///
template <typename Scalar>
class ImpulseResponse
{
public:
    using Vector = VectorX<Scalar>;
    using Matrix = MatrixX<Scalar>;

    ImpulseResponse() = default;

    ImpulseResponse(Index outputs, Index inputs, Index length)
        : ImpulseResponse(outputs, inputs, length,
                          Vector::Zero(outputs * inputs * length))
    {
    }

    ImpulseResponse(Index outputs, Index inputs, Index length, Vector theta)
        : p_(outputs), m_(inputs), T_(length), theta_(std::move(theta))
    {
        if (p_ < 1 || m_ < 1 || T_ < 1)
            throw std::invalid_argument(
                "ImpulseResponse: dimensions must be positive");
        if (theta_.size() != p_ * m_ * T_)
            throw std::invalid_argument(
                "ImpulseResponse: theta length must equal T*m*p");
    }

    Index outputs() const { return p_; }
    Index inputs() const { return m_; }
    Index length() const { return T_; }

    /// Position of block (i,j) inside theta.
    Index offset(Index i, Index j) const { return (i * m_ + j) * T_; }
    /// Position of [g(lag+1)]_ij inside theta.
    Index index(Index lag, Index i, Index j) const
    {
        return offset(i, j) + lag;
    }

    Scalar coefficient(Index lag, Index i, Index j) const
    {
        return theta_[index(lag, i, j)];
    }
    Scalar& coefficient(Index lag, Index i, Index j)
    {
        return theta_[index(lag, i, j)];
    }

    /// The p x m Markov parameter g(lag+1).
    Matrix markov(Index lag) const
    {
        Matrix g(p_, m_);
        for (Index i = 0; i < p_; ++i)
            for (Index j = 0; j < m_; ++j)
                g(i, j) = coefficient(lag, i, j);
        return g;
    }

    auto channel(Index i, Index j) const
    {
        return theta_.segment(offset(i, j), T_);
    }
    auto channel(Index i, Index j) { return theta_.segment(offset(i, j), T_); }

    const Vector& theta() const { return theta_; }
    /// Mutable access; the length must not change.
    Vector& theta() { return theta_; }

private:
    Index p_ = 0;
    Index m_ = 0;
    Index T_ = 0;
    Vector theta_;
};

//-----------------------------------------------------------------------------
// Dataset
//-----------------------------------------------------------------------------

///
/// Input/output record: `u` is N x m, `y` is N x p, row t holds time t+1.
///
template <typename Scalar>
class Dataset
{
public:
    using Matrix = MatrixX<Scalar>;

    Dataset() = default;

    Dataset(Matrix u, Matrix y) : u_(std::move(u)), y_(std::move(y))
    {
        if (u_.rows() != y_.rows())
            throw std::invalid_argument(
                "Dataset: input and output sample counts differ");
        if (u_.rows() < 1 || u_.cols() < 1 || y_.cols() < 1)
            throw std::invalid_argument("Dataset: empty input or output");
    }

    const Matrix& inputs() const { return u_; }
    const Matrix& outputs() const { return y_; }
    Index samples() const { return u_.rows(); }
    Index input_count() const { return u_.cols(); }
    Index output_count() const { return y_.cols(); }

private:
    Matrix u_;
    Matrix y_;
};

/// Outputs stacked channel-major, time-inner: [y_1(1..N) | ... | y_p(1..N)].
template <typename Scalar>
VectorX<Scalar> stack_outputs(const Dataset<Scalar>& d)
{
    const auto& y = d.outputs();
    VectorX<Scalar> Y(y.size());
    for (Index i = 0; i < y.cols(); ++i)
        Y.segment(i * y.rows(), y.rows()) = y.col(i);
    return Y;
}

///
/// Single-output regressor phi (N x T*m): phi(t, j*T + k) = u_j(t - k - 1)
/// with 0-based t and k, i.e. delays 1..T, zero before the first sample.
///
template <typename Scalar>
MatrixX<Scalar> input_regressor(const Dataset<Scalar>& d, Index length)
{
    if (length < 1)
        throw std::invalid_argument("input_regressor: length must be >= 1");
    const auto& u = d.inputs();
    const Index N = d.samples();
    MatrixX<Scalar> phi = MatrixX<Scalar>::Zero(N, length * d.input_count());
    for (Index j = 0; j < d.input_count(); ++j)
        for (Index k = 0; k < length; ++k)
            for (Index t = k + 1; t < N; ++t)
                phi(t, j * length + k) = u(t - k - 1, j);
    return phi;
}

/// Full regressor Phi = blockdiag(phi, ..., phi) with p copies.
template <typename Scalar>
MatrixX<Scalar> build_regressor(const Dataset<Scalar>& d, Index length)
{
    const MatrixX<Scalar> phi = input_regressor(d, length);
    const Index p = d.output_count();
    MatrixX<Scalar> Phi =
        MatrixX<Scalar>::Zero(phi.rows() * p, phi.cols() * p);
    for (Index i = 0; i < p; ++i)
        Phi.block(i * phi.rows(), i * phi.cols(), phi.rows(), phi.cols()) =
            phi;
    return Phi;
}

//-----------------------------------------------------------------------------
// Hankel shape and vectorization
//-----------------------------------------------------------------------------

/// Block-row / block-column counts of the Hankel matrix, r + c - 1 = T.
struct HankelShape
{
    Index rows = 0;
    Index cols = 0;

    friend bool operator==(const HankelShape&, const HankelShape&) = default;
};

///
/// Most nearly square block Hankel shape: minimizes |p*r - m*c| subject to
/// r + c - 1 = T. Ties go to the larger r.
///
inline HankelShape choose_hankel_shape(Index length, Index outputs,
                                       Index inputs)
{
    if (length < 1 || outputs < 1 || inputs < 1)
        throw std::invalid_argument("choose_hankel_shape: bad dimensions");
    HankelShape best{1, length};
    Index best_gap = std::abs(outputs - inputs * length);
    for (Index r = 2; r <= length; ++r)
    {
        const Index c   = length - r + 1;
        const Index gap = std::abs(outputs * r - inputs * c);
        if (gap <= best_gap)
        {
            best_gap = gap;
            best     = {r, c};
        }
    }
    return best;
}

///
/// Selection map P with vec(H(theta)^T) = P theta. Stored as the source
/// index of every row; row a*(c*m) + b picks H(a, b).
///
class VectorizationMap
{
public:
    VectorizationMap() = default;

    VectorizationMap(Index length, Index outputs, Index inputs,
                     HankelShape shape)
        : cols_(length * outputs * inputs)
    {
        if (shape.rows + shape.cols - 1 != length)
            throw std::invalid_argument(
                "VectorizationMap: r + c - 1 must equal T");
        const Index hrows = shape.rows * outputs;
        const Index hcols = shape.cols * inputs;
        source_.resize(static_cast<std::size_t>(hrows * hcols));
        for (Index a = 0; a < hrows; ++a)
        {
            const Index rho = a / outputs, i = a % outputs;
            for (Index b = 0; b < hcols; ++b)
            {
                const Index kappa = b / inputs, j = b % inputs;
                source_[static_cast<std::size_t>(a * hcols + b)] =
                    (i * inputs + j) * length + rho + kappa;
            }
        }
    }

    Index rows() const { return static_cast<Index>(source_.size()); }
    Index cols() const { return cols_; }
    Index source(Index row) const
    {
        return source_[static_cast<std::size_t>(row)];
    }
    const std::vector<Index>& sources() const { return source_; }

    template <typename Derived>
    VectorX<typename Derived::Scalar>
    apply(const Eigen::MatrixBase<Derived>& theta) const
    {
        VectorX<typename Derived::Scalar> out(rows());
        for (Index k = 0; k < rows(); ++k)
            out[k] = theta[source(k)];
        return out;
    }

    /// Column sums: how many times each coefficient appears in H.
    Eigen::VectorXi multiplicity() const
    {
        Eigen::VectorXi counts = Eigen::VectorXi::Zero(cols_);
        for (Index s : source_)
            ++counts[s];
        return counts;
    }

    template <typename Scalar = double>
    Eigen::SparseMatrix<Scalar> matrix() const
    {
        std::vector<Eigen::Triplet<Scalar>> entries;
        entries.reserve(source_.size());
        for (Index k = 0; k < rows(); ++k)
            entries.emplace_back(k, source(k), Scalar(1));
        Eigen::SparseMatrix<Scalar> P(rows(), cols_);
        P.setFromTriplets(entries.begin(), entries.end());
        return P;
    }

private:
    Index cols_ = 0;
    std::vector<Index> source_;
};

inline VectorizationMap build_vectorization_map(Index length, Index outputs,
                                                Index inputs,
                                                HankelShape shape)
{
    return VectorizationMap(length, outputs, inputs, shape);
}

//-----------------------------------------------------------------------------
// HankelSpec
//-----------------------------------------------------------------------------

///
/// Hankel layout plus the weights of H~ = W2^T H W1^T.
/// W1 is (c*m) x (c*m), W2 is (r*p) x (r*p).
///
template <typename Scalar>
class HankelSpec
{
public:
    using Matrix = MatrixX<Scalar>;

    HankelSpec() = default;

    /// Unweighted spec (W1 = I, W2 = I) with the most nearly square shape.
    HankelSpec(Index length, Index outputs, Index inputs)
        : HankelSpec(length, outputs, inputs,
                     choose_hankel_shape(length, outputs, inputs))
    {
    }

    HankelSpec(Index length, Index outputs, Index inputs, HankelShape shape)
        : HankelSpec(length, outputs, inputs, shape,
                     Matrix::Identity(shape.cols * inputs,
                                      shape.cols * inputs),
                     Matrix::Identity(shape.rows * outputs,
                                      shape.rows * outputs))
    {
        weighted_ = false;
    }

    HankelSpec(Index length, Index outputs, Index inputs, HankelShape shape,
               Matrix W1, Matrix W2)
        : p_(outputs),
          m_(inputs),
          T_(length),
          shape_(shape),
          map_(length, outputs, inputs, shape),
          W1_(std::move(W1)),
          W2_(std::move(W2)),
          weighted_(true)
    {
        if (W1_.rows() != shape.cols * inputs ||
            W1_.cols() != shape.cols * inputs)
            throw std::invalid_argument("HankelSpec: W1 must be cm x cm");
        if (W2_.rows() != shape.rows * outputs ||
            W2_.cols() != shape.rows * outputs)
            throw std::invalid_argument("HankelSpec: W2 must be rp x rp");
    }

    Index outputs() const { return p_; }
    Index inputs() const { return m_; }
    Index length() const { return T_; }
    HankelShape shape() const { return shape_; }
    Index hankel_rows() const { return shape_.rows * p_; }
    Index hankel_cols() const { return shape_.cols * m_; }
    const VectorizationMap& map() const { return map_; }
    const Matrix& W1() const { return W1_; }
    const Matrix& W2() const { return W2_; }
    bool weighted() const { return weighted_; }

private:
    Index p_ = 0;
    Index m_ = 0;
    Index T_ = 0;
    HankelShape shape_;
    VectorizationMap map_;
    Matrix W1_;
    Matrix W2_;
    bool weighted_ = false;
};

/// Block Hankel matrix H (rp x cm); block (a,b) is g(a+b+1) for 0-based a,b.
template <typename Scalar>
MatrixX<Scalar> build_hankel(const ImpulseResponse<Scalar>& ir,
                             HankelShape shape)
{
    const Index p = ir.outputs(), m = ir.inputs();
    if (shape.rows + shape.cols - 1 != ir.length())
        throw std::invalid_argument("build_hankel: r + c - 1 must equal T");
    MatrixX<Scalar> H(shape.rows * p, shape.cols * m);
    for (Index rho = 0; rho < shape.rows; ++rho)
        for (Index kappa = 0; kappa < shape.cols; ++kappa)
            for (Index i = 0; i < p; ++i)
                for (Index j = 0; j < m; ++j)
                    H(rho * p + i, kappa * m + j) =
                        ir.coefficient(rho + kappa, i, j);
    return H;
}

template <typename Scalar>
MatrixX<Scalar> build_hankel(const ImpulseResponse<Scalar>& ir,
                             const HankelSpec<Scalar>& spec)
{
    return build_hankel(ir, spec.shape());
}

/// H~ = W2^T H W1^T.
template <typename Scalar>
MatrixX<Scalar> weighted_hankel(const ImpulseResponse<Scalar>& ir,
                                const HankelSpec<Scalar>& spec)
{
    if (!spec.weighted())
        return build_hankel(ir, spec);
    return spec.W2().transpose() * build_hankel(ir, spec) *
           spec.W1().transpose();
}

//-----------------------------------------------------------------------------
// Weighting
//-----------------------------------------------------------------------------

template <typename Scalar>
struct HankelWeights
{
    MatrixX<Scalar> W1;
    MatrixX<Scalar> W2;
};

template <typename Scalar>
HankelWeights<Scalar> identity_weights(Index outputs, Index inputs,
                                       HankelShape shape)
{
    return {MatrixX<Scalar>::Identity(shape.cols * inputs,
                                      shape.cols * inputs),
            MatrixX<Scalar>::Identity(shape.rows * outputs,
                                      shape.rows * outputs)};
}

namespace detail
{

template <typename Scalar>
MatrixX<Scalar> regularized_cholesky(MatrixX<Scalar> cov)
{
    const Index dim    = cov.rows();
    const Scalar level = cov.trace() / Scalar(dim);
    if (!(level > Scalar(0)) || !std::isfinite(static_cast<double>(level)))
        throw NumericalError("degenerate excitation");
    cov.diagonal().array() += Scalar(1e-8) * level;
    Eigen::LLT<MatrixX<Scalar>> llt(cov);
    if (llt.info() != Eigen::Success)
        throw NumericalError("degenerate excitation");
    MatrixX<Scalar> L = llt.matrixL();
    if ((L.diagonal().array() <= Scalar(0)).any())
        throw NumericalError("degenerate excitation");
    return L;
}

} // namespace detail

///
/// Data-driven Hankel weights. With R_f the sample covariance of stacked
/// future outputs [y(t); ...; y(t+r-1)] and R_p that of stacked past inputs
/// [u(t-1); ...; u(t-c)], and L_f, L_p their Cholesky factors:
///
///   W2^T = L_f^{-1},   W1^T = L_p,
///
/// so H~ = L_f^{-1} H L_p normalizes the output side and scales each input
/// direction by its excitation. White inputs and white unit outputs give
/// W1 ~ I and W2 ~ I.
///
template <typename Scalar>
HankelWeights<Scalar> surrogate_weights(const Dataset<Scalar>& d,
                                        HankelShape shape)
{
    const Index p = d.output_count(), m = d.input_count();
    const Index N = d.samples();
    const Index r = shape.rows, c = shape.cols;
    if (N < r * p + c * m)
        throw std::invalid_argument(
            "surrogate_weights: need at least r*p + c*m samples");
    // 0-based t runs over c .. N-r so that u(t-c) and y(t+r-1) exist.
    const Index count = N - r - c + 1;
    if (count < 2)
        throw NumericalError("degenerate excitation");

    MatrixX<Scalar> F(r * p, count), Pm(c * m, count);
    for (Index s = 0; s < count; ++s)
    {
        const Index t = c + s;
        for (Index rho = 0; rho < r; ++rho)
            F.col(s).segment(rho * p, p) = d.outputs().row(t + rho).transpose();
        for (Index kappa = 0; kappa < c; ++kappa)
            Pm.col(s).segment(kappa * m, m) =
                d.inputs().row(t - kappa - 1).transpose();
    }
    F.colwise() -= F.rowwise().mean();
    Pm.colwise() -= Pm.rowwise().mean();
    const MatrixX<Scalar> Rf = F * F.transpose() / Scalar(count);
    const MatrixX<Scalar> Rp = Pm * Pm.transpose() / Scalar(count);

    const MatrixX<Scalar> Lf = detail::regularized_cholesky<Scalar>(Rf);
    const MatrixX<Scalar> Lp = detail::regularized_cholesky<Scalar>(Rp);

    HankelWeights<Scalar> w;
    const MatrixX<Scalar> Lf_inv =
        Lf.template triangularView<Eigen::Lower>().solve(
            MatrixX<Scalar>::Identity(r * p, r * p));
    w.W2 = Lf_inv.transpose();
    w.W1 = Lp.transpose();
    return w;
}

template <typename Scalar>
HankelSpec<Scalar> weighted_spec(const Dataset<Scalar>& d, Index length)
{
    const HankelShape shape =
        choose_hankel_shape(length, d.output_count(), d.input_count());
    auto w = surrogate_weights(d, shape);
    return HankelSpec<Scalar>(length, d.output_count(), d.input_count(), shape,
                              std::move(w.W1), std::move(w.W2));
}

using ImpulseResponsed = ImpulseResponse<double>;
using Datasetd         = Dataset<double>;
using HankelSpecd      = HankelSpec<double>;

} // namespace hankel_ssr

#endif // HANKEL_SSR_CORE_HPP
