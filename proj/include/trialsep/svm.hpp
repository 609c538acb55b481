#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trialsep/csp.hpp"

namespace trialsep {

enum class Kernel : std::uint32_t { Linear = 0, Rbf = 1 };

struct SvmConfig {
    Kernel kernel = Kernel::Rbf;
    double gamma = 1e-5;  ///< RBF width: k(a, b) = exp(-gamma |a - b|^2)
    double c = 1.0;
    double tol = 1e-3;
    /// SMO iterations are capped at max_passes * n.
    int max_passes = 1000;

    void validate() const;
};

/// Binary soft-margin SVM. The larger label is the positive class.
struct SvmModel {
    Matrix support_vectors;  ///< one row per support vector
    Vector dual_coeffs;      ///< alpha_i * y_i
    double bias = 0.0;
    SvmConfig config;
    Label negative_label = 0;
    Label positive_label = 1;
    int iterations = 0;
    bool converged = false;

    double decision(const Vector& x) const;
};

struct Prediction {
    Label label;
    double decision_value;
};

double kernel_value(const SvmConfig& cfg, const Vector& a, const Vector& b);

/// Dual soft-margin problem by SMO with maximal-violating-pair selection
/// (ties go to the lowest index).
SvmModel svm_train(std::span<const FeatureVector> samples, const SvmConfig& cfg);

/// Positive label when the decision value is >= 0.
Prediction svm_predict(const SvmModel& model, const FeatureVector& feature);

/// "SVM1" blob: config, labels, counts, then little-endian float64 arrays.
std::string serialize(const SvmModel& model);
SvmModel deserialize_svm(std::string_view blob);

} // namespace trialsep
