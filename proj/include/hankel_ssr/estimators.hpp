///
/// \file estimators.hpp
///
/// Impulse-response estimators:
///
///  - SS: stable-spline ridge regression, hyperparameters by empirical Bayes,
///    one output channel at a time.
///  - SSR: stable-spline prior combined with a log-det penalty on the
///    (weighted) block Hankel matrix, solved by block-coordinate descent over
///    theta, the variational matrix Q and the weights (lambda1, lambda2).
///  - ATOM: lasso over a dictionary of second-order impulse responses.
///
/// With Sigma = diag(sigma_1..sigma_p) the noise variances and
/// Ybar, Phibar the data scaled by Sigma^{-1/2}, the SSR penalty matrix is
///
///   A(Q, l1, l2) = l1 P^T (W2 Q W2^T (x) W1^T W1) P + l2 K^{-1},
///
/// the MAP estimate is (Phibar^T Phibar + A)^{-1} Phibar^T Ybar and the
/// hyperparameters minimize the negative log evidence
///
///   L = Y^T Lambda^{-1} Y + log|Lambda|,  Lambda = Sigma (x) I_N + Phi A^{-1} Phi^T.
///

#ifndef HANKEL_SSR_ESTIMATORS_HPP
#define HANKEL_SSR_ESTIMATORS_HPP

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "hankel_ssr/core.hpp"
#include "hankel_ssr/kernels.hpp"

namespace hankel_ssr
{

/// Floor applied to noise variance estimates.
inline constexpr double noise_variance_floor = 1e-12;

/// Per-output residual variances (1/N) sum_t (y_i(t) - yhat_i(t))^2.
Eigen::VectorXd estimate_noise_variance(const Datasetd& d,
                                        const ImpulseResponsed& theta);

//-----------------------------------------------------------------------------
// SS
//-----------------------------------------------------------------------------

///
/// Evidence of one output channel under the prior scale * K(alpha) on its m
/// input blocks and noise variance sigma. Factorizes only T*m sized matrices.
///
class SsChannelEvidence
{
public:
    SsChannelEvidence(const Datasetd& d, Index output, Index length,
                      int order);

    /// Y^T Lambda^{-1} Y + log|Lambda|, Lambda = sigma I + phi (scale K) phi^T.
    double negative_log_ml(double alpha, double scale, double sigma) const;
    /// Posterior mean of the T*m coefficients of this output.
    Eigen::VectorXd posterior_mean(double alpha, double scale,
                                   double sigma) const;

    Index samples() const { return phi_.rows(); }
    const Eigen::VectorXd& output() const { return y_; }
    int order() const { return order_; }

private:
    Eigen::MatrixXd prior_factor(double alpha) const;

    int order_;
    Index T_;
    Index m_;
    Eigen::MatrixXd phi_;
    Eigen::MatrixXd gram_;
    Eigen::VectorXd cross_;
    Eigen::VectorXd y_;
};

double ss_negative_log_ml(const Datasetd& d, Index output, Index length,
                          int order, double alpha, double scale,
                          double sigma);

/// Posterior mean of the whole theta with pinned per-output hyperparameters.
ImpulseResponsed ss_posterior_mean(const Datasetd& d, Index length,
                                   const KernelModeld& kernel,
                                   const Eigen::VectorXd& sigma);

struct SsChannelFit
{
    double alpha = 0.0;
    double scale = 0.0;
    double sigma = 0.0;
    double nll   = 0.0;
    bool converged = false;
};

struct SsResult
{
    ImpulseResponsed theta;
    KernelModeld kernel;
    /// Residual-based noise variances (estimate_noise_variance).
    Eigen::VectorXd sigma;
    std::vector<SsChannelFit> channels;
    /// Set when some channel's search did not converge within budget.
    bool warning = false;
};

/// Admissible alpha range of the hyperparameter search for a kernel order.
std::pair<double, double> ss_alpha_bounds(int order);

SsResult ss_estimate(const Datasetd& d, Index length, int order);

//-----------------------------------------------------------------------------
// SSR building blocks
//-----------------------------------------------------------------------------

/// P^T (W2 Q W2^T (x) W1^T W1) P, assembled through the selection map.
Eigen::MatrixXd hankel_penalty_matrix(const Eigen::MatrixXd& Q,
                                      const HankelSpecd& spec);

Eigen::MatrixXd a_matrix(const Eigen::MatrixXd& Q, double lambda1,
                         double lambda2, const Eigen::MatrixXd& K,
                         const HankelSpecd& spec);

/// (Phibar^T Phibar + A)^{-1} Phibar^T Ybar by Cholesky.
ImpulseResponsed map_estimate(const Datasetd& d, const Eigen::MatrixXd& A,
                              const Eigen::VectorXd& sigma);

struct QThresholds
{
    double threshold  = 0.0;
    double saturation = 0.0;
};

/// sqrt(c log(log N) / N) and 10 N / (c log(log N)), natural logarithms.
QThresholds q_thresholds(Index hankel_rows, Index samples);

/// Q = U diag(s^Q) U^T from the SVD of H~(theta); small singular values
/// saturate at the threshold level.
Eigen::MatrixXd update_q(const ImpulseResponsed& theta,
                         const HankelSpecd& spec, Index samples);

///
/// Evidence of the SSR model for fixed (data, K, Sigma, Hankel spec).
///
/// Works in whitened coordinates theta = L_K V beta, with K = L_K L_K^T and
/// V the eigenvectors of L_K^T S L_K (S = hankel_penalty_matrix(Q)), so that
/// A becomes diag(l2 + l1 mu) and every evaluation costs one Cholesky of a
/// Tmp x Tmp matrix. K^{-1} is never formed.
///
class SsrEvidence
{
public:
    SsrEvidence(const Datasetd& d, const Eigen::MatrixXd& K,
                const Eigen::VectorXd& sigma, const HankelSpecd& spec);

    void set_q(const Eigen::MatrixXd& Q);
    const Eigen::MatrixXd& q() const { return Q_; }

    double negative_log_ml(double lambda1, double lambda2) const;
    ImpulseResponsed estimate(double lambda1, double lambda2) const;

    Index samples() const { return N_; }
    const HankelSpecd& spec() const { return spec_; }

private:
    struct Solve
    {
        Eigen::VectorXd beta;
        Eigen::VectorXd diag;
        double logdet_c = 0.0;
    };
    Solve solve(double lambda1, double lambda2) const;

    HankelSpecd spec_;
    Index N_, p_, m_, T_;
    Eigen::MatrixXd Lk_;          // Cholesky factor of K
    Eigen::MatrixXd whitened_;    // Phibar L_K (block diagonal, dense)
    Eigen::VectorXd ybar_;
    double logdet_noise_ = 0.0;

    Eigen::MatrixXd Q_;
    Eigen::VectorXd mu_;          // eigenvalues of L_K^T S L_K
    Eigen::MatrixXd basis_;       // L_K V
    Eigen::MatrixXd design_;      // Phibar L_K V
    Eigen::MatrixXd gram_;        // design^T design
    Eigen::VectorXd cross_;       // design^T ybar
};

double ssr_negative_log_ml(const Datasetd& d, const Eigen::MatrixXd& Q,
                           double lambda1, double lambda2,
                           const Eigen::MatrixXd& K,
                           const Eigen::VectorXd& sigma,
                           const HankelSpecd& spec);

struct LambdaBounds
{
    double lambda1_min = 1e-8;
    double lambda1_max = 1e6;
    double lambda2_min = 1e-8;
    double lambda2_max = 1e8;
};

struct LambdaFit
{
    double lambda1     = 0.0;
    double lambda2     = 0.0;
    double nll         = 0.0;
    double initial_nll = 0.0;
    int evaluations    = 0;
    /// Every probe failed; the initial point was kept.
    bool failed        = false;
};

/// Minimizes the evidence over (log l1, log l2) with Q fixed in `evidence`.
LambdaFit optimize_lambdas(const SsrEvidence& evidence, double lambda1_init,
                           double lambda2_init, const LambdaBounds& bounds,
                           int budget = 200);

struct SsrOptions
{
    int max_iter = 30;
    /// Use the data-driven Hankel weights instead of W1 = I, W2 = I.
    bool weighted = false;
    /// Pin lambda1 = 0: only the stable-spline prior, lambda2 tuned.
    bool disable_rank_penalty = false;
    /// lambda2 floor as a fraction of the evidence-optimal lambda2 of the
    /// stable-spline-only model.
    double lambda2_floor_ratio = 1e-3;
    double lambda1_min         = 1e-8;
    double lambda1_max         = 1e6;
    int optimizer_budget       = 200;
};

/// One accepted iterate: hyperparameters, their evidence and the MAP theta
/// under them.
struct SsrState
{
    int iteration = 0;
    ImpulseResponsed theta;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    Eigen::MatrixXd Q;
    double nll = 0.0;
};

struct SsrResult
{
    ImpulseResponsed theta;
    std::vector<SsrState> trace;
    SsResult ss;
    Eigen::VectorXd sigma;
    HankelSpecd spec;
    double lambda2_ss    = 0.0;
    double lambda2_floor = 0.0;
    /// True when the loop stopped because the evidence did not decrease.
    bool stopped_on_evidence = false;
    bool warning             = false;
    std::string diagnostic;
};

SsrResult ssr_fit(const Datasetd& d, Index length, int order,
                  const SsrOptions& options = {});

//-----------------------------------------------------------------------------
// Log-det variational bound
//-----------------------------------------------------------------------------

struct VariationalBound
{
    double lhs = 0.0;
    double rhs = 0.0;
};

/// log|G| and tr[G Psi^{-1}] + log|Psi| - rp at Psi = G, G = H~ H~^T.
VariationalBound variational_bound_check(const ImpulseResponsed& theta,
                                         const HankelSpecd& spec);

/// tr[G Psi^{-1}] + log|Psi| - rp for a given positive definite Psi.
double variational_bound_rhs(const ImpulseResponsed& theta,
                             const HankelSpecd& spec,
                             const Eigen::MatrixXd& Psi);

//-----------------------------------------------------------------------------
// ATOM
//-----------------------------------------------------------------------------

struct AtomDictionary
{
    /// Upper-half-plane pole of each atom (the conjugate is implied).
    std::vector<std::complex<double>> poles;
    /// T x atom_count, unit-norm columns.
    Eigen::MatrixXd atoms;
};

/// 32 radii x 29 angles of second-order responses C z / ((z - p)(z - p*)).
AtomDictionary atom_dictionary(Index length);

struct LassoResult
{
    Eigen::VectorXd weights;
    int sweeps         = 0;
    double kkt_residual = 0.0;
};

/// Largest violation of the optimality conditions of
/// ||y - X w||^2 + mu ||w||_1 at w.
double lasso_kkt_residual(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double mu);

/// Cyclic coordinate descent with soft thresholding, warm-started at w0,
/// until the KKT residual falls to `tolerance`.
LassoResult lasso_coordinate_descent(const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& y, double mu,
                                     const Eigen::VectorXd& w0,
                                     double tolerance = 1e-8,
                                     int max_sweeps   = 20000);

struct AtomFit
{
    ImpulseResponsed theta;
    Eigen::VectorXd weights;
    double mu = 0.0;
    std::vector<double> grid;
    std::vector<double> validation_error;
};

/// SISO only. mu picked on a log grid by hold-out on the last 25% of samples,
/// then refit on all samples.
AtomFit atom_estimate(const Datasetd& d, Index length, int grid_size = 20);

/// Lasso fit of the dictionary for a fixed mu on the whole record.
AtomFit atom_estimate_fixed(const Datasetd& d, Index length, double mu);

} // namespace hankel_ssr

#endif // HANKEL_SSR_ESTIMATORS_HPP
