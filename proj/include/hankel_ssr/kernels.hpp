///
/// \file kernels.hpp
///
/// Stable-spline covariances for impulse-response priors.
///
/// For lags i, j = 1..T and decay rate alpha in (0, 1):
///
///   order 1:  K(i,j) = alpha^max(i,j)
///   order 2:  K(i,j) = alpha^(i+j+max(i,j)) / 2 - alpha^(3 max(i,j)) / 6
///
/// A KernelModel attaches one (alpha, scale) pair to every channel (i,j) and
/// assembles the block-diagonal prior covariance over the whole parameter
/// vector.
///

#ifndef HANKEL_SSR_KERNELS_HPP
#define HANKEL_SSR_KERNELS_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hankel_ssr/core.hpp"

namespace hankel_ssr
{

/// Relative diagonal jitter added by assemble_prior.
inline constexpr double prior_jitter = 1e-10;

template <typename Scalar = double>
MatrixX<Scalar> stable_spline_gram(int order, Scalar alpha, Index length)
{
    if (order != 1 && order != 2)
        throw std::invalid_argument("stable_spline_gram: order must be 1 or 2");
    if (!(alpha > Scalar(0) && alpha < Scalar(1)))
        throw std::invalid_argument(
            "stable_spline_gram: alpha must lie in (0, 1), got " +
            std::to_string(static_cast<double>(alpha)));
    if (length < 1)
        throw std::invalid_argument("stable_spline_gram: length must be >= 1");

    using std::pow;
    MatrixX<Scalar> K(length, length);
    for (Index i = 1; i <= length; ++i)
    {
        for (Index j = i; j <= length; ++j)
        {
            // j >= i, so max(i,j) = j.
            Scalar v;
            if (order == 1)
                v = pow(alpha, Scalar(j));
            else
                v = pow(alpha, Scalar(i + 2 * j)) / Scalar(2) -
                    pow(alpha, Scalar(3 * j)) / Scalar(6);
            K(i - 1, j - 1) = v;
            K(j - 1, i - 1) = v;
        }
    }
    return K;
}

///
/// Per-channel stable-spline prior. `alpha` and `scale` have one entry per
/// channel in parameter-vector order (i*m + j).
///
template <typename Scalar>
class KernelModel
{
public:
    using Vector = VectorX<Scalar>;
    using Matrix = MatrixX<Scalar>;

    KernelModel() = default;

    KernelModel(int order, Index length, Index outputs, Index inputs,
                Vector alpha, Vector scale)
        : order_(order),
          T_(length),
          p_(outputs),
          m_(inputs),
          alpha_(std::move(alpha)),
          scale_(std::move(scale))
    {
        if (order_ != 1 && order_ != 2)
            throw std::invalid_argument("KernelModel: order must be 1 or 2");
        if (alpha_.size() != p_ * m_ || scale_.size() != p_ * m_)
            throw std::invalid_argument(
                "KernelModel: need one (alpha, scale) per channel");
        for (Index k = 0; k < alpha_.size(); ++k)
        {
            if (!(alpha_[k] > Scalar(0) && alpha_[k] < Scalar(1)))
                throw std::invalid_argument(
                    "KernelModel: alpha must lie in (0, 1)");
            if (!(scale_[k] > Scalar(0)))
                throw std::invalid_argument(
                    "KernelModel: scale must be positive");
        }
    }

    /// Shares (alpha, scale) of output i across all its m input channels.
    static KernelModel per_output(int order, Index length, Index inputs,
                                  const Vector& alpha_per_output,
                                  const Vector& scale_per_output)
    {
        const Index p = alpha_per_output.size();
        Vector alpha(p * inputs), scale(p * inputs);
        for (Index i = 0; i < p; ++i)
        {
            alpha.segment(i * inputs, inputs).setConstant(alpha_per_output[i]);
            scale.segment(i * inputs, inputs).setConstant(scale_per_output[i]);
        }
        return KernelModel(order, length, p, inputs, std::move(alpha),
                           std::move(scale));
    }

    int order() const { return order_; }
    Index length() const { return T_; }
    Index outputs() const { return p_; }
    Index inputs() const { return m_; }
    const Vector& alpha() const { return alpha_; }
    const Vector& scale() const { return scale_; }

    /// scale_ij * K(alpha_ij), without jitter.
    Matrix channel_gram(Index i, Index j) const
    {
        const Index c = i * m_ + j;
        return scale_[c] * stable_spline_gram<Scalar>(order_, alpha_[c], T_);
    }

private:
    int order_ = 1;
    Index T_   = 0;
    Index p_   = 0;
    Index m_   = 0;
    Vector alpha_;
    Vector scale_;
};

///
/// Block-diagonal prior covariance K (Tmp x Tmp), block (i,j) regularizes
/// theta block (i,j). Adds prior_jitter * trace(K) / (Tmp) on the diagonal.
///
template <typename Scalar>
MatrixX<Scalar> assemble_prior(const KernelModel<Scalar>& km)
{
    const Index T = km.length();
    const Index n = T * km.outputs() * km.inputs();
    MatrixX<Scalar> K = MatrixX<Scalar>::Zero(n, n);
    for (Index i = 0; i < km.outputs(); ++i)
        for (Index j = 0; j < km.inputs(); ++j)
        {
            const Index off = (i * km.inputs() + j) * T;
            K.block(off, off, T, T) = km.channel_gram(i, j);
        }
    K.diagonal().array() += Scalar(prior_jitter) * K.trace() / Scalar(n);
    return K;
}

using KernelModeld = KernelModel<double>;

} // namespace hankel_ssr

#endif // HANKEL_SSR_KERNELS_HPP
