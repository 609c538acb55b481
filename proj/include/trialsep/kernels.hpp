#pragma once

// Data-parallel inner loops. `serial` is the reference; `parallel` runs the
// same per-element code under OpenMP, so both produce bitwise-identical
// results (every output element has a fixed accumulation order).

#include <span>
#include <vector>

#include "trialsep/trialdata.hpp"

namespace trialsep::kernels {

/// C0 = X[:, 0:N-tau] * X[:, tau:N]^T, summed left to right over samples.
/// Unnormalized and not symmetrized.
Matrix lagged_product(const Matrix& x, int tau);

namespace serial {

/// Lagged covariances of every trial for every lag, trial-major
/// (index k * taus.size() + t).
std::vector<Matrix> covariance_batch(std::span<const Trial> trials, std::span<const int> taus);

/// V * C * V^T for each matrix.
std::vector<Matrix> congruence_batch(const Matrix& v, std::span<const Matrix> mats);

/// z(i,j) = sum_k C_k(i,i) C_k(j,j),  y(i,j) = sum_k C_k(j,j) (C_k(i,j) + C_k(j,i)) / 2.
void accumulate_zy(std::span<const Matrix> mats, Matrix& z, Matrix& y);

/// G(i,j) = trace(Q_i Q_j^T).
Matrix trace_gram(std::span<const Matrix> mats);

/// V * X for each trial.
std::vector<Matrix> left_multiply_batch(const Matrix& v, std::span<const Trial> trials);

/// Sum over the set of squared off-diagonal entries.
double offdiag_cost(std::span<const Matrix> mats);

} // namespace serial

namespace parallel {

std::vector<Matrix> covariance_batch(std::span<const Trial> trials, std::span<const int> taus);
std::vector<Matrix> congruence_batch(const Matrix& v, std::span<const Matrix> mats);
void accumulate_zy(std::span<const Matrix> mats, Matrix& z, Matrix& y);
Matrix trace_gram(std::span<const Matrix> mats);
std::vector<Matrix> left_multiply_batch(const Matrix& v, std::span<const Trial> trials);
double offdiag_cost(std::span<const Matrix> mats);

} // namespace parallel

/// Worker count OpenMP would use (1 when built without OpenMP).
int max_threads();

} // namespace trialsep::kernels
