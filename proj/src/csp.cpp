#include "trialsep/csp.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "trialsep/error.hpp"

namespace trialsep {

namespace {

Matrix ridge_loaded(const Matrix& s)
{
    const auto m = s.rows();
    const double load = 1e-10 * s.trace() / static_cast<double>(m);
    Matrix out = (s + s.transpose()) / 2.0;
    out.diagonal().array() += load;
    return out;
}

} // namespace

CspModel csp_filters(const Matrix& sigma1, const Matrix& sigma2, int m)
{
    const auto dim = sigma1.rows();
    if (sigma1.cols() != dim || sigma2.rows() != dim || sigma2.cols() != dim)
        fail(ErrorKind::Data, "class covariances must be square and of equal size");
    if (m < 1 || 2 * static_cast<Eigen::Index>(m) > dim)
        fail(ErrorKind::Config, "need 1 <= m and 2m <= channels for CSP");
    if (!sigma1.allFinite() || !sigma2.allFinite())
        fail(ErrorKind::Data, "class covariances must be finite");

    const Matrix s1 = ridge_loaded(sigma1);
    const Matrix composite = s1 + ridge_loaded(sigma2);
    Eigen::LLT<Matrix> chol(composite);
    if (chol.info() != Eigen::Success)
        fail(ErrorKind::Numerical, "composite class covariance is not positive definite");

    // Eigen normalizes eigenvectors to u^T B u = 1; eigenvalues ascend.
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> gev(s1, composite);
    if (gev.info() != Eigen::Success)
        fail(ErrorKind::Numerical, "generalized eigenproblem failed");
    const Vector& lambda = gev.eigenvalues();
    const Matrix& u = gev.eigenvectors();

    CspModel model;
    model.m = m;
    model.filters.resize(2 * m, dim);
    model.eigenvalues.resize(2 * m);
    for (int r = 0; r < m; ++r) {
        const Eigen::Index top = dim - 1 - r;
        model.filters.row(r) = u.col(top).transpose();
        model.eigenvalues[r] = lambda[top];
    }
    for (int r = 0; r < m; ++r) {
        const Eigen::Index bottom = m - 1 - r;
        model.filters.row(m + r) = u.col(bottom).transpose();
        model.eigenvalues[m + r] = lambda[bottom];
    }
    return model;
}

FeatureVector csp_features(const CspModel& model, const Trial& trial)
{
    if (model.filters.cols() != trial.data.rows())
        fail(ErrorKind::Data, "trial channel count does not match the CSP filters");
    const Matrix z = model.filters * trial.data;
    const auto n = z.cols();
    if (n < 2)
        fail(ErrorKind::Data, "need at least two samples for a variance");

    Vector var(z.rows());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mean = z.row(r).mean();
        var[r] = (z.row(r).array() - mean).square().sum() / static_cast<double>(n - 1);
    }
    const double total = var.sum();
    if (!(total > 0.0) || !std::isfinite(total))
        fail(ErrorKind::Data, "zero variance in filtered trial");

    FeatureVector out;
    out.label = trial.label;
    out.values = (var / total).array().log();
    if (!out.values.allFinite())
        fail(ErrorKind::Data, "zero variance in a filtered component");
    return out;
}

} // namespace trialsep
