// trialsep: synthesize trial bundles, run the ICA/CSP/SVM pipeline variants
// under cross-validation, and dump joint-diagonalization diagnostics.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 non-convergence
// (only with --strict).

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "trialsep/covariance.hpp"
#include "trialsep/error.hpp"
#include "trialsep/ffdiag.hpp"
#include "trialsep/pipeline.hpp"
#include "trialsep/trialdata.hpp"
#include "trialsep/trialweights.hpp"

namespace {

using namespace trialsep;

constexpr int exit_config = 2;
constexpr int exit_data = 3;
constexpr int exit_nonconvergence = 4;

struct PipelineFlags {
    std::string bundle;
    std::string config_file;
    std::string variant;
    double alpha = 0.0;
    double gamma = 0.0;
    double c = 0.0;
    std::string kernel;
    int folds = 0;
    int m = 0;
    std::uint64_t seed = 0;
    std::string class_pair;
    std::string bandpass;
    std::vector<int> taus;
    bool multiclass = false;
    bool strict = false;

    CLI::Option* o_variant = nullptr;
    CLI::Option* o_alpha = nullptr;
    CLI::Option* o_gamma = nullptr;
    CLI::Option* o_c = nullptr;
    CLI::Option* o_kernel = nullptr;
    CLI::Option* o_folds = nullptr;
    CLI::Option* o_m = nullptr;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_pair = nullptr;
    CLI::Option* o_bandpass = nullptr;
    CLI::Option* o_taus = nullptr;
    CLI::Option* o_multiclass = nullptr;
};

void add_pipeline_flags(CLI::App* app, PipelineFlags& f, bool with_variant)
{
    app->add_option("--bundle", f.bundle, "Trial bundle directory")->required();
    app->add_option("--config", f.config_file, "JSON config (flags override it)");
    if (with_variant)
        f.o_variant = app->add_option("--variant", f.variant,
                                      "ica-csp-equal | ica-csp-quality | ica-csp-sparse | csp-sparse");
    f.o_alpha = app->add_option("--alpha", f.alpha, "Sparsity regularization (default 10.2)");
    f.o_gamma = app->add_option("--gamma", f.gamma, "RBF kernel width (default 1e-5)");
    f.o_c = app->add_option("--c", f.c, "SVM box constraint (default 1)");
    f.o_kernel = app->add_option("--kernel", f.kernel, "rbf | linear");
    f.o_folds = app->add_option("--folds", f.folds, "Cross-validation folds (default 10)");
    f.o_m = app->add_option("--m", f.m, "CSP filter pairs (default 3)");
    f.o_seed = app->add_option("--seed", f.seed, "Fold assignment seed");
    f.o_pair = app->add_option("--class-pair", f.class_pair, "Two labels, e.g. 1,2");
    f.o_bandpass = app->add_option("--bandpass", f.bandpass, "low,high,order (off by default)");
    f.o_taus = app->add_option("--taus", f.taus, "Covariance lags (default 0 1)");
    f.o_multiclass = app->add_flag("--multiclass", f.multiclass, "One-vs-one over every label");
    app->add_flag("--strict", f.strict, "Exit 4 if a solver did not converge");
}

std::vector<double> split_numbers(const std::string& text, std::string_view what)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size())
                throw std::invalid_argument(item);
        } catch (const std::exception&) {
            fail(ErrorKind::Config, "bad number '" + item + "' in " + std::string(what));
        }
    }
    return out;
}

PipelineConfig resolve_config(const PipelineFlags& f)
{
    PipelineConfig cfg;
    if (!f.config_file.empty()) {
        std::ifstream in(f.config_file);
        if (!in)
            fail(ErrorKind::Config, "cannot open config file " + f.config_file);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Config, std::string("malformed config file: ") + e.what());
        }
        cfg = config_from_json(j, cfg);
    }
    if (f.o_variant && f.o_variant->count())
        cfg.variant = parse_variant(f.variant);
    if (f.o_alpha->count())
        cfg.alpha = f.alpha;
    if (f.o_gamma->count())
        cfg.svm.gamma = f.gamma;
    if (f.o_c->count())
        cfg.svm.c = f.c;
    if (f.o_kernel->count()) {
        if (f.kernel == "rbf")
            cfg.svm.kernel = Kernel::Rbf;
        else if (f.kernel == "linear")
            cfg.svm.kernel = Kernel::Linear;
        else
            fail(ErrorKind::Config, "unknown kernel '" + f.kernel + "'");
    }
    if (f.o_folds->count())
        cfg.folds = f.folds;
    if (f.o_m->count())
        cfg.m = f.m;
    if (f.o_seed->count())
        cfg.seed = f.seed;
    if (f.o_taus->count())
        cfg.taus = f.taus;
    if (f.o_multiclass->count())
        cfg.multiclass = f.multiclass;
    if (f.o_pair->count()) {
        const auto v = split_numbers(f.class_pair, "--class-pair");
        if (v.size() != 2)
            fail(ErrorKind::Config, "--class-pair needs two labels");
        cfg.class_pair = std::pair{static_cast<Label>(v[0]), static_cast<Label>(v[1])};
    }
    if (f.o_bandpass->count()) {
        const auto v = split_numbers(f.bandpass, "--bandpass");
        if (v.size() != 3)
            fail(ErrorKind::Config, "--bandpass needs low,high,order");
        cfg.preprocess.bandpass = BandPass{v[0], v[1], static_cast<int>(v[2])};
    }
    cfg.validate();
    return cfg;
}

void write_text(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorKind::Io, "cannot write " + path);
    out << text;
}

std::string num(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

int finish(bool converged, bool strict)
{
    if (!converged) {
        std::cerr << "warning: a solver stopped at its iteration cap\n";
        if (strict)
            return exit_nonconvergence;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Trial weighting via fast joint diagonalization, CSP and SVM"};
    app.require_subcommand(1);

    // synth
    struct {
        Eigen::Index channels = 8;
        std::size_t trials_per_class = 40;
        Eigen::Index samples = 500;
        double contamination = 0.25;
        double artifact_gain = 20.0;
        std::uint64_t seed = 1;
        std::string out;
        double sample_rate = 250.0;
        int classes = 2;
        double condition_cap = 10.0;
        std::string mixing_out;
    } synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic mixture bundle");
    s->add_option("--channels", synth.channels, "Channels M")->capture_default_str();
    s->add_option("--trials-per-class", synth.trials_per_class)->capture_default_str();
    s->add_option("--samples", synth.samples, "Samples N per trial")->capture_default_str();
    s->add_option("--contamination", synth.contamination, "Fraction of trials with artifacts")
        ->capture_default_str();
    s->add_option("--artifact-gain", synth.artifact_gain)->capture_default_str();
    s->add_option("--seed", synth.seed)->capture_default_str();
    s->add_option("--sample-rate", synth.sample_rate)->capture_default_str();
    s->add_option("--classes", synth.classes, "Number of classes (labels 0..n-1)")
        ->capture_default_str();
    s->add_option("--condition-cap", synth.condition_cap)->capture_default_str();
    s->add_option("--mixing-out", synth.mixing_out, "Also write the mixing matrix as CSV");
    s->add_option("--out", synth.out, "Output bundle directory")->required();

    PipelineFlags run_flags;
    std::string run_report = "table";
    std::string run_out;
    bool run_timings = false;
    auto* r = app.add_subcommand("run", "Cross-validate one method variant");
    add_pipeline_flags(r, run_flags, true);
    r->add_option("--report", run_report, "csv | tsv | table")->capture_default_str();
    r->add_option("--out", run_out, "Write the report here instead of stdout");
    r->add_flag("--timings", run_timings, "Include per-stage wall time");

    PipelineFlags cmp_flags;
    std::string cmp_report = "table";
    std::string cmp_out;
    bool cmp_timings = false;
    auto* cmp = app.add_subcommand("compare", "Cross-validate all four variants");
    add_pipeline_flags(cmp, cmp_flags, false);
    cmp->add_option("--report", cmp_report, "csv | tsv | table")->capture_default_str();
    cmp->add_option("--out", cmp_out, "Write the report here instead of stdout");
    cmp->add_flag("--timings", cmp_timings, "Include per-stage wall time");

    PipelineFlags diag_flags;
    std::string diag_out;
    auto* d = app.add_subcommand("diag", "Joint diagonalization cost trace and residues");
    add_pipeline_flags(d, diag_flags, false);
    d->add_option("--out", diag_out, "Prefix for <prefix>_cost.csv and <prefix>_residues.csv");

    PipelineFlags weight_flags;
    std::string weight_out;
    auto* w = app.add_subcommand("weights", "Per-class trial weights on the whole bundle");
    add_pipeline_flags(w, weight_flags, true);
    w->add_option("--out", weight_out, "Write CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    try {
        if (s->parsed()) {
            const auto model = default_mixing_model(
                synth.channels, static_cast<std::size_t>(synth.classes), synth.sample_rate,
                synth.contamination, synth.artifact_gain, synth.seed, synth.condition_cap);
            SynthOptions opts;
            opts.classes.clear();
            for (int c = 0; c < synth.classes; ++c)
                opts.classes.push_back(c);
            opts.trials_per_class = synth.trials_per_class;
            opts.samples = synth.samples;
            opts.sample_rate_hz = synth.sample_rate;
            opts.seed = synth.seed;
            const auto result = synth_mixture(model, opts);
            write_trial_bundle(result.set, synth.out);
            if (!synth.mixing_out.empty()) {
                std::string text;
                for (Eigen::Index i = 0; i < model.mixing.rows(); ++i) {
                    for (Eigen::Index j = 0; j < model.mixing.cols(); ++j)
                        text += (j ? "," : "") + num(model.mixing(i, j));
                    text += '\n';
                }
                write_text(synth.mixing_out, text);
            }
            std::cerr << "wrote " << result.set.size() << " trials to " << synth.out << '\n';
            return 0;
        }

        if (r->parsed()) {
            const auto cfg = resolve_config(run_flags);
            const auto set = load_trial_bundle(run_flags.bundle);
            const auto report = cross_validate(set, cfg);
            write_text(run_out, emit_report(std::span(&report, 1), parse_report_format(run_report),
                                            run_timings));
            return finish(report.converged, run_flags.strict);
        }

        if (cmp->parsed()) {
            const auto cfg = resolve_config(cmp_flags);
            const auto set = load_trial_bundle(cmp_flags.bundle);
            const auto reports = compare_variants(set, cfg);
            write_text(cmp_out, emit_report(reports, parse_report_format(cmp_report), cmp_timings));
            bool converged = true;
            for (const auto& rep : reports)
                converged = converged && rep.converged;
            return finish(converged, cmp_flags.strict);
        }

        if (d->parsed()) {
            const auto cfg = resolve_config(diag_flags);
            const auto set = preprocess(load_trial_bundle(diag_flags.bundle), cfg.preprocess);
            const auto cov = trial_covariance_set(set, cfg.taus);
            const auto diag = ffdiag(cov, cfg.ffdiag);
            std::string cost = "iter,cost\n0," + num(diag.initial_cost) + '\n';
            for (std::size_t i = 0; i < diag.cost_trace.size(); ++i)
                cost += std::to_string(i + 1) + ',' + num(diag.cost_trace[i]) + '\n';
            std::string res = "k,label,p\n";
            for (std::size_t k = 0; k < diag.p.size(); ++k)
                res += std::to_string(k) + ',' + std::to_string(set.trials[k].label) + ','
                    + num(diag.p[k]) + '\n';
            if (diag_out.empty()) {
                std::cout << cost << '\n' << res;
            } else {
                write_text(diag_out + "_cost.csv", cost);
                write_text(diag_out + "_residues.csv", res);
            }
            return finish(diag.converged, diag_flags.strict);
        }

        if (w->parsed()) {
            const auto cfg = resolve_config(weight_flags);
            const auto raw = load_trial_bundle(weight_flags.bundle);
            const auto labels = task_labels(raw, cfg);
            std::vector<std::size_t> keep;
            for (std::size_t k = 0; k < raw.size(); ++k)
                if (std::find(labels.begin(), labels.end(), raw.trials[k].label) != labels.end())
                    keep.push_back(k);
            const auto set = preprocess(raw.subset(keep), cfg.preprocess);
            const auto fit = fit_class_weights(set, labels, cfg);
            std::string text = "class,k,p,w\n";
            for (const auto& cw : fit.weights)
                for (std::size_t i = 0; i < cw.trials.size(); ++i)
                    text += std::to_string(cw.label) + ',' + std::to_string(keep[cw.trials[i]]) + ','
                        + num(cw.p[static_cast<Eigen::Index>(i)]) + ','
                        + num(cw.w[static_cast<Eigen::Index>(i)]) + '\n';
            write_text(weight_out, text);
            return finish(fit.converged, weight_flags.strict);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::Config ? exit_config : exit_data;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_data;
    }
    return 0;
}
