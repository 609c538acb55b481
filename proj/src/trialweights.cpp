#include "trialsep/trialweights.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "trialsep/error.hpp"
#include "trialsep/kernels.hpp"

namespace trialsep {

WeightProblem WeightProblem::make(Vector p, Matrix G, double alpha)
{
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
        fail(ErrorKind::Config, "alpha must be a nonnegative number");
    if (p.size() < 1)
        fail(ErrorKind::Data, "weight problem needs at least one trial");
    if (!p.allFinite() || p.minCoeff() < 0.0)
        fail(ErrorKind::Data, "quality values must be finite and nonnegative");
    if (!(p.sum() > 0.0))
        fail(ErrorKind::Data, "degenerate quality vector: all residues are zero");
    if (G.rows() != p.size() || G.cols() != p.size())
        fail(ErrorKind::Data, "Gram matrix size does not match the quality vector");
    if (!G.allFinite())
        fail(ErrorKind::Data, "Gram matrix is not finite");
    const double tr = G.trace();
    if (!(tr > 0.0))
        fail(ErrorKind::Data, "degenerate Gram matrix: zero trace");
    if ((G - G.transpose()).cwiseAbs().maxCoeff() > 1e-8 * tr)
        fail(ErrorKind::Data, "Gram matrix is not symmetric");
    if (G.rows() > 1) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(G, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-8 * tr)
            fail(ErrorKind::Data, "Gram matrix is not positive semidefinite");
    }
    return WeightProblem{std::move(p), std::move(G), alpha};
}

double WeightProblem::objective(const Vector& w) const
{
    const double k = static_cast<double>(p.size());
    const Vector d = w - Vector::Constant(p.size(), 1.0 / k);
    const double l1 = p.cwiseProduct(w.cwiseAbs()).sum();
    return alpha / p.sum() * l1 + 0.5 / G.trace() * d.dot(G * d);
}

void AdmmConfig::validate() const
{
    if (!(rho > 0.0))
        fail(ErrorKind::Config, "ADMM rho must be positive");
    if (max_iters < 1)
        fail(ErrorKind::Config, "ADMM max_iters must be >= 1");
    if (!(tol_primal > 0.0) || !(tol_dual > 0.0))
        fail(ErrorKind::Config, "ADMM tolerances must be positive");
}

WeightProblem build_problem(std::span<const Matrix> mats, std::span<const double> p, double alpha)
{
    if (mats.empty() || mats.size() != p.size())
        fail(ErrorKind::Data, "need one matrix per quality value");
    Vector pv(static_cast<Eigen::Index>(p.size()));
    for (std::size_t k = 0; k < p.size(); ++k)
        pv[static_cast<Eigen::Index>(k)] = p[k];
    return WeightProblem::make(std::move(pv), kernels::parallel::trace_gram(mats), alpha);
}

WeightProblem build_problem(const DiagResult& diag, std::span<const std::size_t> trial_indices,
                            double alpha)
{
    if (trial_indices.empty())
        fail(ErrorKind::Data, "weight problem needs a nonempty trial subset");
    std::vector<Matrix> mats;
    std::vector<double> p;
    mats.reserve(trial_indices.size());
    for (auto k : trial_indices) {
        if (k >= diag.p.size())
            fail(ErrorKind::Data, "trial index out of range");
        mats.push_back(diag.lag0(k));
        p.push_back(diag.p[k]);
    }
    return build_problem(mats, p, alpha);
}

WStep::WStep(const WeightProblem& problem, const AdmmConfig& cfg)
    : rho_(cfg.rho)
{
    const auto k = problem.size();
    const double tr_g = problem.G.trace();
    const double tr_d = problem.p.sum();
    const Matrix system = cfg.rho * problem.G / tr_g + Matrix::Identity(k, k);
    system_.compute(system);
    if (system_.info() != Eigen::Success)
        fail(ErrorKind::Numerical, "ADMM system matrix could not be factored");
    constant_ = cfg.rho
        * (problem.G * Vector::Ones(k) / (static_cast<double>(k) * tr_g)
           - problem.alpha / tr_d * problem.p);
    inv_ones_ = system_.solve(Vector::Ones(k));
    ones_inv_ones_ = inv_ones_.sum();
}

std::pair<Vector, double> WStep::operator()(const Vector& v, const Vector& y) const
{
    const Vector base = system_.solve(v - y + constant_);
    const double xi = (base.sum() - 1.0) / (rho_ * ones_inv_ones_);
    Vector w = base - rho_ * xi * inv_ones_;
    return {std::move(w), xi};
}

std::pair<Vector, double> admm_w_step(const AdmmState& state, const WeightProblem& problem,
                                      const AdmmConfig& cfg)
{
    cfg.validate();
    return WStep(problem, cfg)(state.v, state.y);
}

Vector admm_v_step(const Vector& w_next, const Vector& y)
{
    return (w_next + y).cwiseMax(0.0);
}

Vector admm_y_step(const Vector& y, const Vector& w_next, const Vector& v_next)
{
    return y + w_next - v_next;
}

WeightSolution solve_admm(const WeightProblem& problem, const AdmmConfig& cfg)
{
    cfg.validate();
    const auto k = problem.size();
    const WStep step(problem, cfg);

    WeightSolution out;
    Vector v = Vector::Constant(k, 1.0 / static_cast<double>(k));
    Vector y = Vector::Zero(k);
    Vector w = v;
    for (int n = 1; n <= cfg.max_iters; ++n) {
        auto [w_next, xi] = step(v, y);
        Vector v_next = admm_v_step(w_next, y);
        y = admm_y_step(y, w_next, v_next);
        out.primal_residual = (w_next - v_next).norm();
        out.dual_residual = cfg.rho * (v_next - v).norm();
        out.xi.push_back(xi);
        out.iterations = n;
        w = std::move(w_next);
        v = std::move(v_next);
        if (out.primal_residual < cfg.tol_primal && out.dual_residual < cfg.tol_dual) {
            out.converged = true;
            break;
        }
    }

    out.v = v;
    out.y = y;
    const double total = v.sum();
    if (total > 0.0) {
        out.w = v / total;
    } else {
        // v can only vanish far from convergence; fall back to the affine iterate.
        out.w = w.cwiseMax(0.0);
        out.w = out.w.sum() > 0.0 ? Vector(out.w / out.w.sum()) : equal_weights(k);
    }
    out.objective = problem.objective(out.w);
    return out;
}

Vector equal_weights(Eigen::Index k)
{
    if (k < 1)
        fail(ErrorKind::Data, "equal weights need at least one trial");
    return Vector::Constant(k, 1.0 / static_cast<double>(k));
}

Vector quality_weights(std::span<const double> p)
{
    if (p.empty())
        fail(ErrorKind::Data, "quality weights need at least one trial");
    Vector inv(static_cast<Eigen::Index>(p.size()));
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (!(p[k] > 0.0) || !std::isfinite(p[k]))
            fail(ErrorKind::Data, "zero residue; use equal or sparse weights");
        inv[static_cast<Eigen::Index>(k)] = 1.0 / p[k];
    }
    if ((inv.array() == inv[0]).all())
        return equal_weights(inv.size());
    const double eta = 1.0 / inv.sum();
    return eta * inv;
}

Matrix weighted_covariance(std::span<const Matrix> mats, const Vector& w)
{
    if (mats.empty() || static_cast<Eigen::Index>(mats.size()) != w.size())
        fail(ErrorKind::Data, "weight count does not match matrix count");
    if (std::abs(w.sum() - 1.0) > 1e-6)
        fail(ErrorKind::Data, "weights must sum to one");
    Matrix out = w[0] * mats.front();
    for (std::size_t k = 1; k < mats.size(); ++k)
        out += w[static_cast<Eigen::Index>(k)] * mats[k];
    return out;
}

} // namespace trialsep
