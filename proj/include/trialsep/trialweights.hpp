#pragma once

#include <span>
#include <vector>

#include <Eigen/Cholesky>

#include "trialsep/ffdiag.hpp"

namespace trialsep {

/// Regularized l1 trial-weighting problem over the simplex:
///
///   min_w  alpha / tr(D) * ||D w||_1
///          + 1 / (2 tr(G)) * (w - 1/K)^T G (w - 1/K)
///   s.t.   1^T w = 1,  w >= 0
///
/// with D = diag(p) and G(i,j) = trace(Q_i Q_j^T).
struct WeightProblem {
    Vector p;
    Matrix G;
    double alpha = 10.2;

    Eigen::Index size() const { return p.size(); }

    /// Validates: p finite and nonnegative with positive sum, G square,
    /// symmetric PSD within 1e-8 (relative), positive trace, alpha >= 0.
    static WeightProblem make(Vector p, Matrix G, double alpha);

    /// Value of the objective at w (l1 term uses |w_k|).
    double objective(const Vector& w) const;
};

struct AdmmConfig {
    double rho = 1.0;
    int max_iters = 5000;
    double tol_primal = 1e-8;
    double tol_dual = 1e-8;

    void validate() const;
};

struct AdmmState {
    Vector w;
    Vector v;
    Vector y;
    double xi = 0.0;
};

struct WeightSolution {
    Vector w;  ///< simplex-feasible weights (renormalized v)
    Vector v;
    Vector y;
    std::vector<double> xi;  ///< multiplier value per iteration
    int iterations = 0;
    bool converged = false;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double objective = 0.0;
};

/// Problem over `trial_indices`: p from the residues, G from the lag-0 Q matrices.
WeightProblem build_problem(const DiagResult& diag, std::span<const std::size_t> trial_indices,
                            double alpha);

/// Same, from explicit matrices and quality scalars.
WeightProblem build_problem(std::span<const Matrix> mats, std::span<const double> p, double alpha);

/// Factorization of (rho G / tr(G) + I) and the constant parts of the w-update,
/// reused across iterations.
class WStep {
public:
    WStep(const WeightProblem& problem, const AdmmConfig& cfg);

    /// Multiplier and w for the given (v, y); 1^T w = 1 by construction.
    std::pair<Vector, double> operator()(const Vector& v, const Vector& y) const;

private:
    double rho_;
    Eigen::LDLT<Matrix> system_;
    Vector constant_;     // rho (G 1 / (K tr G) - alpha / tr(D) D 1)
    Vector inv_ones_;     // system^{-1} 1
    double ones_inv_ones_ = 0.0;
};

/// w-update and multiplier for one iteration (factors the system each call).
std::pair<Vector, double> admm_w_step(const AdmmState& state, const WeightProblem& problem,
                                      const AdmmConfig& cfg);

/// v = max(0, w + y).
Vector admm_v_step(const Vector& w_next, const Vector& y);

/// y + w - v.
Vector admm_y_step(const Vector& y, const Vector& w_next, const Vector& v_next);

/// Runs the w / v / y iteration from w = v = 1/K, y = 0. Non-convergence is
/// reported through `converged`, not thrown.
WeightSolution solve_admm(const WeightProblem& problem, const AdmmConfig& cfg);

Vector equal_weights(Eigen::Index k);

/// w_k proportional to 1 / p_k, normalized to sum 1.
Vector quality_weights(std::span<const double> p);

/// sum_k w_k * mats_k.
Matrix weighted_covariance(std::span<const Matrix> mats, const Vector& w);

} // namespace trialsep
