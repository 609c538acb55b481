#pragma once

#include "trialsep/trialdata.hpp"

namespace trialsep {

/// Spatial filters from the generalized eigenproblem
/// sigma1 u = lambda (sigma1 + sigma2) u, with u^T (sigma1 + sigma2) u = 1.
/// Rows are ordered by descending lambda: the m largest, then the m smallest.
struct CspModel {
    Matrix filters;      // 2m x M
    Vector eigenvalues;  // 2m, in [0, 1]
    int m = 3;
};

struct FeatureVector {
    Vector values;
    Label label = 0;
};

/// Ridge loading (1e-10 * tr(S)/M * I) is added to both class covariances first.
CspModel csp_filters(const Matrix& sigma1, const Matrix& sigma2, int m);

/// value_j = log(var_j / sum_i var_i) of the filtered trial rows.
FeatureVector csp_features(const CspModel& model, const Trial& trial);

} // namespace trialsep
