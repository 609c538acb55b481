#include "trialsep/ffdiag.hpp"

#include <algorithm>
#include <cmath>

#include "trialsep/error.hpp"
#include "trialsep/kernels.hpp"

namespace trialsep {

void FfdiagConfig::validate() const
{
    if (epsilon && !(*epsilon > 0.0))
        fail(ErrorKind::Config, "ffdiag epsilon must be positive");
    if (max_iters < 1)
        fail(ErrorKind::Config, "ffdiag max_iters must be >= 1");
}

double offdiag_cost(std::span<const Matrix> mats)
{
    return kernels::parallel::offdiag_cost(mats);
}

namespace {

void check_set(std::span<const Matrix> mats)
{
    if (mats.empty())
        fail(ErrorKind::Data, "joint diagonalization needs at least one matrix");
    const auto m = mats.front().rows();
    for (const auto& c : mats) {
        if (c.rows() != c.cols())
            fail(ErrorKind::Data, "joint diagonalization needs square matrices");
        if (c.rows() != m)
            fail(ErrorKind::Data, "joint diagonalization needs matrices of one size");
        if (!c.allFinite())
            fail(ErrorKind::Data, "joint diagonalization input is not finite");
    }
}

void normalize_rows(Matrix& v)
{
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double norm = v.row(i).norm();
        if (!(norm > 0.0) || !std::isfinite(norm))
            fail(ErrorKind::Numerical, "demixing row " + std::to_string(i) + " collapsed");
        v.row(i) /= norm;
    }
}

} // namespace

Matrix compute_update_W(std::span<const Matrix> mats)
{
    check_set(mats);
    const auto m = mats.front().rows();
    Matrix z;
    Matrix y;
    kernels::parallel::accumulate_zy(mats, z, y);

    Matrix w = Matrix::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double zii = z(i, i);
            const double zjj = z(j, j);
            const double zij = z(i, j);
            const double det = zjj * zii - zij * zij;
            if (zii + zjj < 1e-300)
                fail(ErrorKind::Numerical, "singular update at (" + std::to_string(i) + ", "
                                               + std::to_string(j)
                                               + "): both diagonal entries vanish across the set");
            if (std::abs(det) > 1e-12 * zii * zjj) {
                w(i, j) = (z(j, i) * y(j, i) - zii * y(i, j)) / det;
                w(j, i) = (zij * y(i, j) - zjj * y(j, i)) / det;
            } else {
                // Rank one: the system matrix is u u^T with
                // u = (sqrt(z_jj), sign(z_ij) sqrt(z_ii)); pinv = u u^T / |u|^4.
                const double ua = std::sqrt(zjj);
                const double ub = std::copysign(std::sqrt(zii), zij);
                const double n2 = zjj + zii;
                const double proj = -(ua * y(i, j) + ub * y(j, i)) / (n2 * n2);
                w(i, j) = ua * proj;
                w(j, i) = ub * proj;
            }
        }
    }

    const double norm_inf = w.cwiseAbs().rowwise().sum().maxCoeff();
    if (norm_inf > 0.0) {
        int e = 0;
        std::frexp(norm_inf, &e);
        const int s = std::max(0, e);
        if (s > 0)
            w = w * std::ldexp(1.0, -s);
    }
    return w;
}

JointDiagonalization joint_diagonalize(std::span<const Matrix> mats, const FfdiagConfig& cfg)
{
    cfg.validate();
    check_set(mats);
    const auto m = mats.front().rows();

    JointDiagonalization out;
    out.V = Matrix::Identity(m, m);
    out.Q.assign(mats.begin(), mats.end());
    out.initial_cost = offdiag_cost(mats);
    const double eps = cfg.epsilon.value_or(1e-12 * (out.initial_cost + 1.0));

    if (out.initial_cost < eps) {
        out.converged = true;
        return out;
    }

    double prev = out.initial_cost;
    const Matrix eye = Matrix::Identity(m, m);
    for (int n = 1; n <= cfg.max_iters; ++n) {
        const Matrix w = compute_update_W(out.Q);
        out.V = (eye + w) * out.V;
        normalize_rows(out.V);
        out.Q = kernels::parallel::congruence_batch(out.V, mats);
        const double f = offdiag_cost(out.Q);
        out.cost_trace.push_back(f);
        out.iterations = n;
        if (std::abs(f - prev) < eps) {
            out.converged = true;
            break;
        }
        prev = f;
    }
    return out;
}

Matrix residue(const Matrix& q)
{
    Matrix e = q;
    e.diagonal().setZero();
    return e;
}

DiagResult ffdiag(const CovarianceSet& set, const FfdiagConfig& cfg)
{
    set.validate();
    if (std::find(set.taus.begin(), set.taus.end(), 0) == set.taus.end())
        fail(ErrorKind::Config, "residues need lag 0 among the covariance lags");

    DiagResult out;
    static_cast<JointDiagonalization&>(out) = joint_diagonalize(set.matrices, cfg);
    out.lag0_index.resize(set.trials);
    out.E.resize(set.trials);
    out.p.resize(set.trials);
    for (std::size_t k = 0; k < set.trials; ++k) {
        out.lag0_index[k] = *set.position(k, 0);
        out.E[k] = residue(out.Q[out.lag0_index[k]]);
        out.p[k] = out.E[k].norm();
    }
    return out;
}

TrialSet separate_sources(const Matrix& v, const TrialSet& set)
{
    if (v.rows() != set.channels() || v.cols() != set.channels())
        fail(ErrorKind::Data, "demixing matrix is " + std::to_string(v.rows()) + "x"
                                  + std::to_string(v.cols()) + " but trials have "
                                  + std::to_string(set.channels()) + " channels");
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        if (!(v.row(i).squaredNorm() > 0.0))
            fail(ErrorKind::Data, "degenerate demixing row " + std::to_string(i));

    TrialSet out = set;
    auto sources = kernels::parallel::left_multiply_batch(v, set.trials);
    for (std::size_t k = 0; k < out.size(); ++k)
        out.trials[k].data = std::move(sources[k]);
    return out;
}

IcaResult ica(const TrialSet& set, std::span<const int> taus, const FfdiagConfig& cfg)
{
    const auto cov = trial_covariance_set(set, taus);
    IcaResult out;
    out.diag = ffdiag(cov, cfg);
    out.sources = separate_sources(out.diag.V, set);
    return out;
}

double amari_index(const Matrix& p)
{
    const auto m = p.rows();
    if (m != p.cols() || m < 2)
        return 0.0;
    const Matrix a = p.cwiseAbs();
    double rows = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
        rows += a.row(i).sum() / a.row(i).maxCoeff() - 1.0;
    double cols = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
        cols += a.col(j).sum() / a.col(j).maxCoeff() - 1.0;
    return (rows + cols) / (2.0 * static_cast<double>(m) * static_cast<double>(m - 1));
}

} // namespace trialsep
