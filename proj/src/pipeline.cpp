#include "trialsep/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <exception>
#include <map>
#include <set>

#include "trialsep/covariance.hpp"
#include "trialsep/error.hpp"
#include "trialsep/random.hpp"

namespace trialsep {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Variants and configuration

std::string_view to_string(MethodVariant v)
{
    switch (v) {
    case MethodVariant::IcaCspEqual: return "ica-csp-equal";
    case MethodVariant::IcaCspQuality: return "ica-csp-quality";
    case MethodVariant::IcaCspSparse: return "ica-csp-sparse";
    case MethodVariant::CspSparse: return "csp-sparse";
    }
    return "unknown";
}

std::string_view display_name(MethodVariant v)
{
    switch (v) {
    case MethodVariant::IcaCspEqual: return "ICA+CSP, equal weights";
    case MethodVariant::IcaCspQuality: return "ICA+CSP, inverse-residue weights";
    case MethodVariant::IcaCspSparse: return "ICA+CSP, sparse weights";
    case MethodVariant::CspSparse: return "CSP, sparse weights";
    }
    return "unknown";
}

MethodVariant parse_variant(std::string_view name)
{
    for (auto v : all_variants)
        if (to_string(v) == name)
            return v;
    fail(ErrorKind::Config, "unknown variant '" + std::string(name) + "'");
}

void PipelineConfig::validate() const
{
    if (folds < 2)
        fail(ErrorKind::Config, "need at least two folds");
    if (!(alpha >= 0.0))
        fail(ErrorKind::Config, "alpha must be nonnegative");
    if (m < 1)
        fail(ErrorKind::Config, "CSP needs m >= 1");
    if (std::find(taus.begin(), taus.end(), 0) == taus.end())
        fail(ErrorKind::Config, "lags must include 0");
    if (class_pair && class_pair->first == class_pair->second)
        fail(ErrorKind::Config, "class pair needs two distinct labels");
    svm.validate();
    ffdiag.validate();
    admm.validate();
    if (preprocess.bandpass) {
        const auto& b = *preprocess.bandpass;
        if (!(b.low_hz > 0.0 && b.low_hz < b.high_hz) || b.order < 1)
            fail(ErrorKind::Config, "invalid band edges");
    }
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where)
{
    if (!j.is_object())
        fail(ErrorKind::Config, std::string(where) + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            fail(ErrorKind::Config, "unknown key '" + key + "' in " + std::string(where));
    }
}

} // namespace

PipelineConfig config_from_json(const json& j, PipelineConfig cfg)
{
    try {
        check_keys(j,
                   {"variant", "alpha", "folds", "m", "taus", "seed", "class_pair", "multiclass",
                    "svm", "ffdiag", "admm", "preprocess"},
                   "config");
        if (j.contains("variant"))
            cfg.variant = parse_variant(j["variant"].get<std::string>());
        if (j.contains("alpha"))
            cfg.alpha = j["alpha"].get<double>();
        if (j.contains("folds"))
            cfg.folds = j["folds"].get<int>();
        if (j.contains("m"))
            cfg.m = j["m"].get<int>();
        if (j.contains("taus"))
            cfg.taus = j["taus"].get<std::vector<int>>();
        if (j.contains("seed"))
            cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("multiclass"))
            cfg.multiclass = j["multiclass"].get<bool>();
        if (j.contains("class_pair")) {
            if (j["class_pair"].is_null()) {
                cfg.class_pair.reset();
            } else {
                const auto pair = j["class_pair"].get<std::vector<Label>>();
                if (pair.size() != 2)
                    fail(ErrorKind::Config, "class_pair needs exactly two labels");
                cfg.class_pair = std::pair{pair[0], pair[1]};
            }
        }
        if (j.contains("svm")) {
            const auto& s = j["svm"];
            check_keys(s, {"kernel", "gamma", "c", "tol", "max_passes"}, "svm");
            if (s.contains("kernel")) {
                const auto k = s["kernel"].get<std::string>();
                if (k == "rbf")
                    cfg.svm.kernel = Kernel::Rbf;
                else if (k == "linear")
                    cfg.svm.kernel = Kernel::Linear;
                else
                    fail(ErrorKind::Config, "unknown kernel '" + k + "'");
            }
            if (s.contains("gamma"))
                cfg.svm.gamma = s["gamma"].get<double>();
            if (s.contains("c"))
                cfg.svm.c = s["c"].get<double>();
            if (s.contains("tol"))
                cfg.svm.tol = s["tol"].get<double>();
            if (s.contains("max_passes"))
                cfg.svm.max_passes = s["max_passes"].get<int>();
        }
        if (j.contains("ffdiag")) {
            const auto& f = j["ffdiag"];
            check_keys(f, {"epsilon", "max_iters"}, "ffdiag");
            if (f.contains("epsilon")) {
                if (f["epsilon"].is_null())
                    cfg.ffdiag.epsilon.reset();
                else
                    cfg.ffdiag.epsilon = f["epsilon"].get<double>();
            }
            if (f.contains("max_iters"))
                cfg.ffdiag.max_iters = f["max_iters"].get<int>();
        }
        if (j.contains("admm")) {
            const auto& a = j["admm"];
            check_keys(a, {"rho", "max_iters", "tol_primal", "tol_dual"}, "admm");
            if (a.contains("rho"))
                cfg.admm.rho = a["rho"].get<double>();
            if (a.contains("max_iters"))
                cfg.admm.max_iters = a["max_iters"].get<int>();
            if (a.contains("tol_primal"))
                cfg.admm.tol_primal = a["tol_primal"].get<double>();
            if (a.contains("tol_dual"))
                cfg.admm.tol_dual = a["tol_dual"].get<double>();
        }
        if (j.contains("preprocess")) {
            const auto& p = j["preprocess"];
            check_keys(p, {"remove_mean", "bandpass"}, "preprocess");
            if (p.contains("remove_mean"))
                cfg.preprocess.remove_mean = p["remove_mean"].get<bool>();
            if (p.contains("bandpass")) {
                if (p["bandpass"].is_null()) {
                    cfg.preprocess.bandpass.reset();
                } else {
                    const auto& b = p["bandpass"];
                    check_keys(b, {"low_hz", "high_hz", "order"}, "bandpass");
                    BandPass band;
                    band.low_hz = b.value("low_hz", band.low_hz);
                    band.high_hz = b.value("high_hz", band.high_hz);
                    band.order = b.value("order", band.order);
                    cfg.preprocess.bandpass = band;
                }
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, std::string("bad config value: ") + e.what());
    }
    return cfg;
}

json to_json(const PipelineConfig& cfg)
{
    json j;
    j["variant"] = std::string(to_string(cfg.variant));
    j["alpha"] = cfg.alpha;
    j["folds"] = cfg.folds;
    j["m"] = cfg.m;
    j["taus"] = cfg.taus;
    j["seed"] = cfg.seed;
    j["multiclass"] = cfg.multiclass;
    j["class_pair"] = cfg.class_pair ? json{cfg.class_pair->first, cfg.class_pair->second} : json(nullptr);
    j["svm"] = {{"kernel", cfg.svm.kernel == Kernel::Rbf ? "rbf" : "linear"},
                {"gamma", cfg.svm.gamma},
                {"c", cfg.svm.c},
                {"tol", cfg.svm.tol},
                {"max_passes", cfg.svm.max_passes}};
    j["ffdiag"] = {{"epsilon", cfg.ffdiag.epsilon ? json(*cfg.ffdiag.epsilon) : json(nullptr)},
                   {"max_iters", cfg.ffdiag.max_iters}};
    j["admm"] = {{"rho", cfg.admm.rho},
                 {"max_iters", cfg.admm.max_iters},
                 {"tol_primal", cfg.admm.tol_primal},
                 {"tol_dual", cfg.admm.tol_dual}};
    json pre;
    pre["remove_mean"] = cfg.preprocess.remove_mean;
    if (cfg.preprocess.bandpass)
        pre["bandpass"] = {{"low_hz", cfg.preprocess.bandpass->low_hz},
                           {"high_hz", cfg.preprocess.bandpass->high_hz},
                           {"order", cfg.preprocess.bandpass->order}};
    else
        pre["bandpass"] = nullptr;
    j["preprocess"] = std::move(pre);
    return j;
}

StageTimes& StageTimes::operator+=(const StageTimes& o)
{
    ica += o.ica;
    weights += o.weights;
    csp += o.csp;
    svm += o.svm;
    return *this;
}

// ---------------------------------------------------------------------------
// Fold fitting

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool is_ica(MethodVariant v)
{
    return v != MethodVariant::CspSparse;
}

std::vector<std::size_t> class_indices(const TrialSet& set, Label label)
{
    auto idx = set.indices_of(label);
    if (idx.empty())
        fail(ErrorKind::Data, "unstratified fold: class " + std::to_string(label)
                                  + " is missing from the training trials");
    return idx;
}

} // namespace

std::vector<Label> task_labels(const TrialSet& set, const PipelineConfig& cfg)
{
    const auto declared = [&](Label l) {
        return std::find(set.label_set.begin(), set.label_set.end(), l) != set.label_set.end();
    };
    if (cfg.multiclass) {
        auto labels = set.label_set;
        std::sort(labels.begin(), labels.end());
        return labels;
    }
    if (cfg.class_pair) {
        if (!declared(cfg.class_pair->first) || !declared(cfg.class_pair->second))
            fail(ErrorKind::Config, "class pair refers to an undeclared label");
        return {cfg.class_pair->first, cfg.class_pair->second};
    }
    return {set.label_set[0], set.label_set[1]};
}

WeightFit fit_class_weights(const TrialSet& train, const std::vector<Label>& labels,
                            const PipelineConfig& cfg)
{
    WeightFit out;
    for (auto label : labels)
        class_indices(train, label);

    auto t0 = Clock::now();
    if (is_ica(cfg.variant)) {
        auto result = ica(train, cfg.taus, cfg.ffdiag);
        out.times.ica = seconds_since(t0);
        t0 = Clock::now();
        out.converged = result.diag.converged;
        out.demixing = result.diag.V;
        out.domain = std::move(result.sources);

        for (auto label : labels) {
            ClassWeights cw;
            cw.label = label;
            cw.trials = class_indices(train, label);
            std::vector<Matrix> mats;
            std::vector<double> p;
            for (auto k : cw.trials) {
                mats.push_back(result.diag.lag0(k));
                p.push_back(result.diag.p[k]);
            }
            cw.p = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
            switch (cfg.variant) {
            case MethodVariant::IcaCspEqual:
                cw.w = equal_weights(static_cast<Eigen::Index>(cw.trials.size()));
                break;
            case MethodVariant::IcaCspQuality:
                cw.w = quality_weights(p);
                break;
            default: {
                const auto sol = solve_admm(build_problem(result.diag, cw.trials, cfg.alpha), cfg.admm);
                cw.w = sol.w;
                cw.converged = sol.converged;
                out.converged = out.converged && sol.converged;
                break;
            }
            }
            out.class_covariances.push_back(weighted_covariance(mats, cw.w));
            out.weights.push_back(std::move(cw));
        }
        out.diag = std::move(result.diag);
        out.times.weights = seconds_since(t0);
        return out;
    }

    // Mixture-domain baseline: residues from a per-class joint diagonalization.
    out.domain = train;
    for (auto label : labels) {
        ClassWeights cw;
        cw.label = label;
        cw.trials = class_indices(train, label);
        const auto cov = trial_covariance_set(train.subset(cw.trials), cfg.taus);
        const auto diag = ffdiag(cov, cfg.ffdiag);
        out.converged = out.converged && diag.converged;
        std::vector<Matrix> mats;
        for (std::size_t k = 0; k < cw.trials.size(); ++k)
            mats.push_back(cov.at(k, 0));
        const auto sol = solve_admm(build_problem(mats, diag.p, cfg.alpha), cfg.admm);
        cw.p = Eigen::Map<const Vector>(diag.p.data(), static_cast<Eigen::Index>(diag.p.size()));
        cw.w = sol.w;
        cw.converged = sol.converged;
        out.converged = out.converged && sol.converged;
        out.class_covariances.push_back(weighted_covariance(mats, cw.w));
        out.weights.push_back(std::move(cw));
    }
    out.times.weights = seconds_since(t0);
    return out;
}

FoldModel fit_fold(const TrialSet& train, const PipelineConfig& cfg)
{
    const auto labels = task_labels(train, cfg);

    FoldModel model;
    model.variant = cfg.variant;

    auto fit = fit_class_weights(train, labels, cfg);
    model.times = fit.times;
    model.demixing = fit.demixing;
    model.weights = fit.weights;
    model.converged = fit.converged;

    for (std::size_t a = 0; a < labels.size(); ++a) {
        for (std::size_t b = a + 1; b < labels.size(); ++b) {
            PairModel pair;
            pair.first = labels[a];
            pair.second = labels[b];

            auto t0 = Clock::now();
            pair.csp = csp_filters(fit.class_covariances[a], fit.class_covariances[b], cfg.m);
            std::vector<FeatureVector> features;
            for (const auto& trial : fit.domain.trials)
                if (trial.label == pair.first || trial.label == pair.second)
                    features.push_back(csp_features(pair.csp, trial));
            model.times.csp += seconds_since(t0);

            t0 = Clock::now();
            pair.svm = svm_train(features, cfg.svm);
            model.times.svm += seconds_since(t0);
            model.pairs.push_back(std::move(pair));
        }
    }
    return model;
}

Label predict(const FoldModel& model, const Trial& trial)
{
    Trial x = trial;
    if (model.demixing)
        x.data = *model.demixing * trial.data;

    if (model.pairs.size() == 1)
        return svm_predict(model.pairs.front().svm, csp_features(model.pairs.front().csp, x)).label;

    // One-vs-one voting; ties go to the larger summed margin, then the smaller label.
    std::map<Label, std::pair<int, double>> tally;
    for (const auto& pair : model.pairs) {
        const auto pred = svm_predict(pair.svm, csp_features(pair.csp, x));
        const double signed_margin = pred.decision_value;
        auto& win = tally[pred.label];
        ++win.first;
        const Label pos = pair.svm.positive_label;
        const Label neg = pair.svm.negative_label;
        tally[pos].second += signed_margin;
        tally[neg].second -= signed_margin;
    }
    Label best = tally.begin()->first;
    auto best_score = tally.begin()->second;
    for (const auto& [label, score] : tally) {
        if (score.first > best_score.first
            || (score.first == best_score.first && score.second > best_score.second)) {
            best = label;
            best_score = score;
        }
    }
    return best;
}

FoldResult run_fold(const TrialSet& train, const TrialSet& test, const PipelineConfig& cfg)
{
    FoldResult out;
    out.model = fit_fold(train, cfg);
    if (test.trials.empty())
        return out;
    std::size_t correct = 0;
    for (const auto& trial : test.trials) {
        const auto label = predict(out.model, trial);
        out.predictions.push_back(label);
        if (label == trial.label)
            ++correct;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

std::vector<int> stratified_folds(const TrialSet& set, int folds, std::uint64_t seed)
{
    if (folds < 2)
        fail(ErrorKind::Config, "need at least two folds");
    Rng rng(seed);
    std::set<Label> labels;
    for (const auto& t : set.trials)
        labels.insert(t.label);

    std::vector<std::size_t> dealt;
    for (auto label : labels) {
        auto idx = set.indices_of(label);
        shuffle(std::span<std::size_t>(idx), rng);
        dealt.insert(dealt.end(), idx.begin(), idx.end());
    }
    std::vector<int> fold(set.size(), 0);
    for (std::size_t i = 0; i < dealt.size(); ++i)
        fold[dealt[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    return fold;
}

CvReport cross_validate(const TrialSet& set, const PipelineConfig& cfg)
{
    cfg.validate();
    const auto labels = task_labels(set, cfg);

    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < set.size(); ++k)
        if (std::find(labels.begin(), labels.end(), set.trials[k].label) != labels.end())
            keep.push_back(k);
    const TrialSet work = preprocess(set.subset(keep), cfg.preprocess);

    if (work.size() < static_cast<std::size_t>(cfg.folds))
        fail(ErrorKind::Data, "insufficient trials: " + std::to_string(work.size()) + " for "
                                  + std::to_string(cfg.folds) + " folds");
    for (auto label : labels) {
        if (work.indices_of(label).size() < static_cast<std::size_t>(cfg.folds))
            fail(ErrorKind::Data, "insufficient trials: class " + std::to_string(label)
                                      + " has fewer trials than folds");
    }

    const auto fold_of = stratified_folds(work, cfg.folds, cfg.seed);
    std::vector<FoldResult> results(static_cast<std::size_t>(cfg.folds));
    std::vector<std::vector<std::size_t>> train_idx(static_cast<std::size_t>(cfg.folds));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.folds));

#pragma omp parallel for schedule(dynamic)
    for (int f = 0; f < cfg.folds; ++f) {
        try {
            std::vector<std::size_t> train;
            std::vector<std::size_t> test;
            for (std::size_t k = 0; k < work.size(); ++k)
                (fold_of[k] == f ? test : train).push_back(k);
            results[static_cast<std::size_t>(f)]
                = run_fold(work.subset(train), work.subset(test), cfg);
            train_idx[static_cast<std::size_t>(f)] = std::move(train);
        } catch (...) {
            errors[static_cast<std::size_t>(f)] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    CvReport report;
    report.variant = cfg.variant;
    report.config = cfg;
    double sum = 0.0;
    for (std::size_t f = 0; f < results.size(); ++f) {
        const auto& r = results[f];
        report.per_fold_accuracy.push_back(r.accuracy);
        sum += r.accuracy;
        report.wall_time += r.model.times;
        report.converged = report.converged && r.model.converged;
        auto weights = r.model.weights;
        for (auto& cw : weights)
            for (auto& k : cw.trials)
                k = keep[train_idx[f][k]];
        report.fold_weights.push_back(std::move(weights));
    }
    report.mean_accuracy = sum / static_cast<double>(results.size());
    return report;
}

std::vector<CvReport> compare_variants(const TrialSet& set, const PipelineConfig& cfg)
{
    std::vector<CvReport> out;
    for (auto v : all_variants) {
        auto c = cfg;
        c.variant = v;
        out.push_back(cross_validate(set, c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

ReportFormat parse_report_format(std::string_view name)
{
    if (name == "csv")
        return ReportFormat::Csv;
    if (name == "tsv")
        return ReportFormat::Tsv;
    if (name == "table")
        return ReportFormat::Table;
    fail(ErrorKind::Config, "unknown report format '" + std::string(name) + "'");
}

namespace {

std::string shortest(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

std::string fixed5(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.5f", v);
    return buf;
}

std::string pad(std::string s, std::size_t width, bool left)
{
    if (s.size() >= width)
        return s;
    const std::string fill(width - s.size(), ' ');
    return left ? s + fill : fill + s;
}

} // namespace

std::string emit_report(std::span<const CvReport> reports, ReportFormat format, bool timings)
{
    if (reports.empty())
        return {};
    const std::size_t folds = reports.front().per_fold_accuracy.size();

    if (format == ReportFormat::Table) {
        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> header{"Method \\ Fold"};
        for (std::size_t f = 0; f < folds; ++f)
            header.push_back(std::to_string(f + 1));
        header.push_back("Mean");
        if (timings)
            for (const char* h : {"ICA s", "Weights s", "CSP s", "SVM s"})
                header.push_back(h);
        rows.push_back(header);
        for (const auto& r : reports) {
            std::vector<std::string> row{std::string(display_name(r.variant))};
            for (double a : r.per_fold_accuracy)
                row.push_back(fixed5(a));
            row.push_back(fixed5(r.mean_accuracy));
            if (timings)
                for (double t : {r.wall_time.ica, r.wall_time.weights, r.wall_time.csp, r.wall_time.svm})
                    row.push_back(fixed5(t));
            rows.push_back(std::move(row));
        }
        std::vector<std::size_t> width(header.size(), 0);
        for (const auto& row : rows)
            for (std::size_t c = 0; c < row.size(); ++c)
                width[c] = std::max(width[c], row[c].size());
        std::string out;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < rows[r].size(); ++c) {
                if (c)
                    out += "  ";
                out += pad(rows[r][c], width[c], c == 0);
            }
            while (!out.empty() && out.back() == ' ')
                out.pop_back();
            out += '\n';
            if (r == 0) {
                std::size_t total = 0;
                for (auto w : width)
                    total += w;
                out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
            }
        }
        return out;
    }

    const char sep = format == ReportFormat::Csv ? ',' : '\t';
    std::string out;
    if (reports.size() == 1) {
        const auto& r = reports.front();
        out += "fold";
        out += sep;
        out += "accuracy\n";
        for (std::size_t f = 0; f < folds; ++f)
            out += std::to_string(f + 1) + sep + shortest(r.per_fold_accuracy[f]) + '\n';
        out += std::string("mean") + sep + shortest(r.mean_accuracy) + '\n';
        if (timings) {
            out += std::string("time_ica_s") + sep + shortest(r.wall_time.ica) + '\n';
            out += std::string("time_weights_s") + sep + shortest(r.wall_time.weights) + '\n';
            out += std::string("time_csp_s") + sep + shortest(r.wall_time.csp) + '\n';
            out += std::string("time_svm_s") + sep + shortest(r.wall_time.svm) + '\n';
        }
        return out;
    }

    out += "method";
    for (std::size_t f = 0; f < folds; ++f)
        out += sep + ("fold_" + std::to_string(f + 1));
    out += sep;
    out += "mean";
    if (timings)
        for (const char* h : {"time_ica_s", "time_weights_s", "time_csp_s", "time_svm_s"})
            out += sep + std::string(h);
    out += '\n';
    for (const auto& r : reports) {
        out += to_string(r.variant);
        for (double a : r.per_fold_accuracy)
            out += sep + shortest(a);
        out += sep + shortest(r.mean_accuracy);
        if (timings)
            for (double t : {r.wall_time.ica, r.wall_time.weights, r.wall_time.csp, r.wall_time.svm})
                out += sep + shortest(t);
        out += '\n';
    }
    return out;
}

} // namespace trialsep
