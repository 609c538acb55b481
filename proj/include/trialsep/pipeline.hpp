#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trialsep/csp.hpp"
#include "trialsep/ffdiag.hpp"
#include "trialsep/svm.hpp"
#include "trialsep/trialdata.hpp"
#include "trialsep/trialweights.hpp"

namespace trialsep {

enum class MethodVariant { IcaCspEqual, IcaCspQuality, IcaCspSparse, CspSparse };

inline constexpr std::array<MethodVariant, 4> all_variants{
    MethodVariant::IcaCspEqual, MethodVariant::IcaCspQuality, MethodVariant::IcaCspSparse,
    MethodVariant::CspSparse};

/// CLI spelling, e.g. "ica-csp-sparse".
std::string_view to_string(MethodVariant v);
MethodVariant parse_variant(std::string_view name);
/// Human-readable row title used in tables.
std::string_view display_name(MethodVariant v);

struct PipelineConfig {
    MethodVariant variant = MethodVariant::IcaCspSparse;
    double alpha = 10.2;
    SvmConfig svm;
    int folds = 10;
    int m = 3;
    std::vector<int> taus{0, 1};
    FfdiagConfig ffdiag;
    AdmmConfig admm;
    std::uint64_t seed = 1;
    std::optional<std::pair<Label, Label>> class_pair;
    /// One-vs-one over every declared label instead of a single pair.
    bool multiclass = false;
    PreprocessConfig preprocess;

    void validate() const;
};

/// Reads the JSON mirror of PipelineConfig on top of `base`. Unknown keys are
/// config errors.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
nlohmann::json to_json(const PipelineConfig& cfg);

struct StageTimes {
    double ica = 0.0;
    double weights = 0.0;
    double csp = 0.0;
    double svm = 0.0;

    StageTimes& operator+=(const StageTimes& o);
};

/// Weights of one class's training trials. `trials` index the set the weights
/// were fitted on.
struct ClassWeights {
    Label label = 0;
    std::vector<std::size_t> trials;
    Vector p;
    Vector w;
    bool converged = true;
};

/// CSP + SVM for one pair of classes.
struct PairModel {
    Label first = 0;
    Label second = 1;
    CspModel csp;
    SvmModel svm;
};

/// Everything fitted on a training fold. References no test data.
struct FoldModel {
    MethodVariant variant = MethodVariant::IcaCspSparse;
    std::optional<Matrix> demixing;
    std::vector<ClassWeights> weights;
    std::vector<PairModel> pairs;
    bool converged = true;
    StageTimes times;
};

/// Labels the pipeline classifies for this set and config.
std::vector<Label> task_labels(const TrialSet& set, const PipelineConfig& cfg);

/// Per-class trial weights for `train` under the configured variant, along
/// with the demixing matrix for ICA variants.
struct WeightFit {
    std::optional<Matrix> demixing;
    /// Domain the weighted covariances live in (sources for ICA variants).
    TrialSet domain;
    std::vector<ClassWeights> weights;
    std::vector<Matrix> class_covariances;
    bool converged = true;
    std::optional<DiagResult> diag;
    StageTimes times;
};

WeightFit fit_class_weights(const TrialSet& train, const std::vector<Label>& labels,
                            const PipelineConfig& cfg);

FoldModel fit_fold(const TrialSet& train, const PipelineConfig& cfg);
Label predict(const FoldModel& model, const Trial& trial);

struct FoldResult {
    double accuracy = 0.0;
    std::vector<Label> predictions;
    FoldModel model;
};

/// Fits on `train` only, then scores `test`.
FoldResult run_fold(const TrialSet& train, const TrialSet& test, const PipelineConfig& cfg);

/// Stratified fold id per trial: each class is shuffled with `seed`, classes
/// are concatenated in label order and dealt round-robin.
std::vector<int> stratified_folds(const TrialSet& set, int folds, std::uint64_t seed);

struct CvReport {
    MethodVariant variant = MethodVariant::IcaCspSparse;
    PipelineConfig config;
    std::vector<double> per_fold_accuracy;
    double mean_accuracy = 0.0;
    /// Per fold, per class; trial indices refer to the input set.
    std::vector<std::vector<ClassWeights>> fold_weights;
    StageTimes wall_time;
    bool converged = true;
};

CvReport cross_validate(const TrialSet& set, const PipelineConfig& cfg);

/// One report per variant, same folds and seed.
std::vector<CvReport> compare_variants(const TrialSet& set, const PipelineConfig& cfg);

enum class ReportFormat { Csv, Tsv, Table };
ReportFormat parse_report_format(std::string_view name);

/// A single report prints one row per fold plus a mean row; several reports
/// print one row per variant with the mean column last. Wall times are only
/// included when `timings` is set.
std::string emit_report(std::span<const CvReport> reports, ReportFormat format,
                        bool timings = false);

} // namespace trialsep
