#include "trialsep/kernels.hpp"

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace trialsep::kernels {

Matrix lagged_product(const Matrix& x, int tau)
{
    const auto m = x.rows();
    const auto n = x.cols();
    Matrix c = Matrix::Zero(m, m);
    for (Eigen::Index t = 0; t + tau < n; ++t) {
        const double* a = x.col(t).data();
        const double* b = x.col(t + tau).data();
        for (Eigen::Index j = 0; j < m; ++j) {
            const double bj = b[j];
            double* cj = c.col(j).data();
            for (Eigen::Index i = 0; i < m; ++i)
                cj[i] += a[i] * bj;
        }
    }
    return c;
}

namespace {

Matrix lagged_covariance_of(const Matrix& x, int tau)
{
    const Matrix c0 = lagged_product(x, tau) / static_cast<double>(x.cols() - tau - 1);
    return (c0 + c0.transpose()) / 2.0;
}

Matrix congruence(const Matrix& v, const Matrix& c)
{
    const Matrix vc = v * c;
    return vc * v.transpose();
}

double offdiag_sq(const Matrix& c)
{
    double s = 0.0;
    for (Eigen::Index j = 0; j < c.cols(); ++j)
        for (Eigen::Index i = 0; i < c.rows(); ++i)
            if (i != j)
                s += c(i, j) * c(i, j);
    return s;
}

double frobenius_dot(const Matrix& a, const Matrix& b)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        s += a.data()[i] * b.data()[i];
    return s;
}

void zy_row(std::span<const Matrix> mats, Eigen::Index i, Matrix& z, Matrix& y)
{
    const auto m = mats.front().rows();
    for (Eigen::Index j = 0; j < m; ++j) {
        double zs = 0.0;
        double ys = 0.0;
        for (const auto& c : mats) {
            zs += c(i, i) * c(j, j);
            ys += 0.5 * c(j, j) * (c(i, j) + c(j, i));
        }
        z(i, j) = zs;
        y(i, j) = ys;
    }
}

} // namespace

namespace serial {

std::vector<Matrix> covariance_batch(std::span<const Trial> trials, std::span<const int> taus)
{
    std::vector<Matrix> out(trials.size() * taus.size());
    for (std::size_t k = 0; k < trials.size(); ++k)
        for (std::size_t t = 0; t < taus.size(); ++t)
            out[k * taus.size() + t] = lagged_covariance_of(trials[k].data, taus[t]);
    return out;
}

std::vector<Matrix> congruence_batch(const Matrix& v, std::span<const Matrix> mats)
{
    std::vector<Matrix> out(mats.size());
    for (std::size_t k = 0; k < mats.size(); ++k)
        out[k] = congruence(v, mats[k]);
    return out;
}

void accumulate_zy(std::span<const Matrix> mats, Matrix& z, Matrix& y)
{
    const auto m = mats.front().rows();
    z.resize(m, m);
    y.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        zy_row(mats, i, z, y);
}

Matrix trace_gram(std::span<const Matrix> mats)
{
    const auto k = static_cast<Eigen::Index>(mats.size());
    Matrix g(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            g(i, j) = g(j, i) = frobenius_dot(mats[i], mats[j]);
    return g;
}

std::vector<Matrix> left_multiply_batch(const Matrix& v, std::span<const Trial> trials)
{
    std::vector<Matrix> out(trials.size());
    for (std::size_t k = 0; k < trials.size(); ++k)
        out[k] = v * trials[k].data;
    return out;
}

double offdiag_cost(std::span<const Matrix> mats)
{
    double s = 0.0;
    for (const auto& c : mats)
        s += offdiag_sq(c);
    return s;
}

} // namespace serial

namespace parallel {

std::vector<Matrix> covariance_batch(std::span<const Trial> trials, std::span<const int> taus)
{
    const auto total = static_cast<std::ptrdiff_t>(trials.size() * taus.size());
    std::vector<Matrix> out(static_cast<std::size_t>(total));
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
        const auto k = static_cast<std::size_t>(idx) / taus.size();
        const auto t = static_cast<std::size_t>(idx) % taus.size();
        out[static_cast<std::size_t>(idx)] = lagged_covariance_of(trials[k].data, taus[t]);
    }
    return out;
}

std::vector<Matrix> congruence_batch(const Matrix& v, std::span<const Matrix> mats)
{
    const auto total = static_cast<std::ptrdiff_t>(mats.size());
    std::vector<Matrix> out(mats.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < total; ++k)
        out[static_cast<std::size_t>(k)] = congruence(v, mats[static_cast<std::size_t>(k)]);
    return out;
}

void accumulate_zy(std::span<const Matrix> mats, Matrix& z, Matrix& y)
{
    const auto m = mats.front().rows();
    z.resize(m, m);
    y.resize(m, m);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < m; ++i)
        zy_row(mats, i, z, y);
}

Matrix trace_gram(std::span<const Matrix> mats)
{
    const auto k = static_cast<Eigen::Index>(mats.size());
    Matrix g(k, k);
#pragma omp parallel for schedule(dynamic)
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            g(i, j) = g(j, i) = frobenius_dot(mats[i], mats[j]);
    return g;
}

std::vector<Matrix> left_multiply_batch(const Matrix& v, std::span<const Trial> trials)
{
    const auto total = static_cast<std::ptrdiff_t>(trials.size());
    std::vector<Matrix> out(trials.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < total; ++k)
        out[static_cast<std::size_t>(k)] = v * trials[static_cast<std::size_t>(k)].data;
    return out;
}

double offdiag_cost(std::span<const Matrix> mats)
{
    // Per-matrix partials, reduced in index order.
    const auto total = static_cast<std::ptrdiff_t>(mats.size());
    std::vector<double> partial(mats.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < total; ++k)
        partial[static_cast<std::size_t>(k)] = offdiag_sq(mats[static_cast<std::size_t>(k)]);
    double s = 0.0;
    for (double v : partial)
        s += v;
    return s;
}

} // namespace parallel

int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace trialsep::kernels
