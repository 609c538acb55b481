#pragma once

#include <optional>
#include <span>
#include <vector>

#include "trialsep/covariance.hpp"
#include "trialsep/trialdata.hpp"

namespace trialsep {

struct FfdiagConfig {
    /// Stop when |f_n - f_{n-1}| < epsilon. Unset means 1e-12 * (f_0 + 1).
    std::optional<double> epsilon;
    int max_iters = 1000;

    void validate() const;
};

/// Outcome of joint diagonalization on a bare matrix set.
struct JointDiagonalization {
    Matrix V;                     ///< demixing matrix, unit-norm rows
    std::vector<Matrix> Q;        ///< V C_k V^T, indexed like the input
    std::vector<double> cost_trace;
    double initial_cost = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Joint diagonalization of a per-trial covariance set plus per-trial residues.
struct DiagResult : JointDiagonalization {
    std::vector<std::size_t> lag0_index;  ///< position of trial k's lag-0 matrix in Q
    std::vector<Matrix> E;                ///< off-diagonal part of trial k's lag-0 Q
    std::vector<double> p;                ///< ||E_k||_F

    const Matrix& lag0(std::size_t k) const { return Q.at(lag0_index.at(k)); }
};

/// Sum over the set of squared off-diagonal entries.
double offdiag_cost(std::span<const Matrix> mats);

/// FFDIAG update matrix for the current working set: zero diagonal, scaled by
/// a power of two so that ||W||_inf < 1.
///
/// Each off-diagonal pair (W_ij, W_ji) solves the 2x2 system
///   [z_jj z_ij; z_ij z_ii] [W_ij; W_ji] = -[y_ij; y_ji].
/// When that system is singular (a single matrix, or proportional diagonals)
/// it is still consistent, and the minimum-norm solution is used.
Matrix compute_update_W(std::span<const Matrix> mats);

/// Iterates V <- (I + W) V with row normalization until the off-diagonal cost
/// settles or `max_iters` is reached.
JointDiagonalization joint_diagonalize(std::span<const Matrix> mats, const FfdiagConfig& cfg);

/// Joint diagonalization over every matrix of `set` (all trials, all lags);
/// residues are taken from lag-0 matrices.
DiagResult ffdiag(const CovarianceSet& set, const FfdiagConfig& cfg);

/// Off-diagonal part of `q` (diagonal zeroed).
Matrix residue(const Matrix& q);

/// Returns V * X^k for every trial.
TrialSet separate_sources(const Matrix& v, const TrialSet& set);

struct IcaResult {
    DiagResult diag;
    TrialSet sources;
};

/// Lagged covariances -> ffdiag -> separation.
IcaResult ica(const TrialSet& set, std::span<const int> taus, const FfdiagConfig& cfg);

/// Amari index of P = V A in [0, 1]; 0 iff P is a scaled permutation.
double amari_index(const Matrix& p);

} // namespace trialsep
