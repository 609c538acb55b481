#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "trialsep/trialdata.hpp"

namespace trialsep {

inline constexpr int default_taus[] = {0, 1};

/// Lag-tau covariance of one mean-removed trial:
/// C0 = X[:, 0:N-tau] X[:, tau:N]^T / (N - tau - 1), returned as (C0 + C0^T) / 2.
Matrix lagged_covariance(const Trial& trial, int tau);

/// Per-trial, per-lag covariance matrices, trial-major.
struct CovarianceSet {
    std::vector<Matrix> matrices;
    std::vector<std::size_t> trial_index;
    std::vector<int> lag;
    std::size_t trials = 0;
    std::vector<int> taus;

    Eigen::Index dim() const { return matrices.front().rows(); }

    /// Position of (k, tau) in `matrices`, if present.
    std::optional<std::size_t> position(std::size_t k, int tau) const;
    const Matrix& at(std::size_t k, int tau) const;

    /// Throws Error(Data) if any invariant is broken.
    void validate() const;
};

CovarianceSet trial_covariance_set(const TrialSet& set,
                                   std::span<const int> taus = default_taus);

/// Symmetric within `rel_tol` relative to the largest magnitude entry, and finite.
bool is_symmetric(const Matrix& c, double rel_tol = 1e-10);

/// Writes one CSV per matrix as `cov_k{k}_tau{tau}.csv`.
void dump_covariance_csv(const CovarianceSet& set, const std::filesystem::path& dir);

} // namespace trialsep
