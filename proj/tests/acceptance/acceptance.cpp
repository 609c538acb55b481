// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>

#include "../oracles.hpp"
#include "trialsep/covariance.hpp"
#include "trialsep/csp.hpp"
#include "trialsep/ffdiag.hpp"
#include "trialsep/pipeline.hpp"
#include "trialsep/svm.hpp"
#include "trialsep/trialweights.hpp"

using namespace trialsep;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double cost_at(const Matrix& v, const std::vector<Matrix>& mats)
{
    double f = 0.0;
    for (const auto& c : mats) {
        const Matrix q = v * c * v.transpose();
        f += q.squaredNorm() - q.diagonal().squaredNorm();
    }
    return f;
}

std::string fmt(const char* format, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

// 1. FFDIAG exact recovery on {A L_k A^T}.
Outcome ffdiag_recovery()
{
    Outcome out;
    Rng rng(1001);
    double worst_ratio = 0.0;
    double worst_amari = 0.0;
    double worst_time = 0.0;
    int worst_iters = 0;
    for (int inst = 0; inst < 20; ++inst) {
        const Eigen::Index m = inst % 2 ? 6 : 4;
        const Matrix a = random_mixing(m, 10.0, rng);
        std::vector<Matrix> mats;
        for (int k = 0; k < 5; ++k) {
            Vector d(m);
            for (Eigen::Index i = 0; i < m; ++i)
                d[i] = uniform(rng, 0.2, 5.0);
            mats.push_back(a * d.asDiagonal() * a.transpose());
        }
        const auto t0 = Clock::now();
        const auto r = joint_diagonalize(mats, {});
        const double dt = seconds_since(t0);
        const double initial = cost_at(Matrix::Identity(m, m), mats);
        const double ratio = cost_at(r.V, mats) / initial;
        const double amari = oracle::amari(r.V * a);
        worst_ratio = std::max(worst_ratio, ratio);
        worst_amari = std::max(worst_amari, amari);
        worst_time = std::max(worst_time, dt);
        worst_iters = std::max(worst_iters, r.iterations);
        if (!(ratio <= 1e-8) || !(amari < 0.05) || r.iterations > 1000 || !(dt < 1.0))
            out.pass = false;
    }
    out.detail = fmt("worst cost ratio %.3g, worst Amari %.3g, max iterations %d, max time %.3fs",
                     worst_ratio, worst_amari, worst_iters, worst_time);
    return out;
}

// 2. ADMM against exhaustive simplex grid search at step 1e-3.
Outcome admm_oracle()
{
    Outcome out;
    Rng rng(1002);
    const double alphas[] = {0.0, 1.0, 10.2};
    double worst_gap = -1e300;
    double worst_sum = 0.0;
    double worst_neg = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
        const int k = 1 + inst % 4;
        const double alpha = alphas[inst % 3];
        std::vector<Matrix> mats;
        std::vector<double> p;
        for (int i = 0; i < k; ++i) {
            mats.push_back(oracle::random_spd(3, rng, 0.1, 3.0));
            p.push_back(uniform(rng, 0.1, 5.0));
        }
        const auto problem = build_problem(mats, p, alpha);
        const auto sol = solve_admm(problem, {});
        const auto grid = oracle::simplex_grid_min(problem.p, problem.G, alpha, 1e-3);
        const double mine = oracle::weight_objective(problem.p, problem.G, alpha, sol.w);
        const double gap = (mine - grid.value) / (1.0 + std::abs(grid.value));
        worst_gap = std::max(worst_gap, gap);
        worst_sum = std::max(worst_sum, std::abs(sol.w.sum() - 1.0));
        worst_neg = std::min(worst_neg, sol.w.minCoeff());
        if (!(gap <= 1e-4) || !(std::abs(sol.w.sum() - 1.0) <= 1e-8) || !(sol.w.minCoeff() >= -1e-8))
            out.pass = false;
    }
    out.detail = fmt("worst relative gap to grid %.3g, worst |sum-1| %.3g, min w %.3g", worst_gap,
                     worst_sum, worst_neg);
    return out;
}

// 3. Sparsity behavior.
Outcome sparsity()
{
    Outcome out;
    Rng rng(1003);
    double worst_high = 0.0;
    double worst_flat = 0.0;
    for (int inst = 0; inst < 10; ++inst) {
        const int k = 3 + inst % 6;
        std::vector<Matrix> mats;
        for (int i = 0; i < k; ++i)
            mats.push_back(oracle::random_spd(4, rng, 0.5, 2.0));
        std::vector<double> p(static_cast<std::size_t>(k), 1.0);
        p.back() = 100.0;
        const auto sparse = solve_admm(build_problem(mats, p, 10.2), {});
        const auto flat = solve_admm(build_problem(mats, p, 0.0), {});
        worst_high = std::max(worst_high, sparse.w[k - 1]);
        worst_flat = std::max(worst_flat,
                              (flat.w.array() - 1.0 / static_cast<double>(k)).abs().maxCoeff());
    }
    out.pass = worst_high < 1e-3 && worst_flat < 1e-4;
    out.detail = fmt("max high-residue weight %.3g, max |w - 1/K| at alpha=0 %.3g", worst_high,
                     worst_flat);
    return out;
}

// 4. CSP identities.
Outcome csp_identities()
{
    Outcome out;
    Rng rng(1004);
    double worst_white = 0.0;
    double worst_diag = 0.0;
    bool in_range = true;
    for (int inst = 0; inst < 100; ++inst) {
        const Matrix s1 = oracle::random_spd(8, rng);
        const Matrix s2 = oracle::random_spd(8, rng);
        const auto model = csp_filters(s1, s2, 3);
        const Matrix& w = model.filters;
        worst_white = std::max(worst_white, (w * (s1 + s2) * w.transpose() - Matrix::Identity(6, 6))
                                                .cwiseAbs()
                                                .maxCoeff());
        Matrix d = w * s1 * w.transpose();
        d.diagonal().setZero();
        worst_diag = std::max(worst_diag, d.cwiseAbs().maxCoeff());
        in_range = in_range && model.eigenvalues.minCoeff() >= 0.0 && model.eigenvalues.maxCoeff() <= 1.0;
    }
    out.pass = worst_white <= 1e-8 && worst_diag <= 1e-8 && in_range;
    out.detail = fmt("max |W(S1+S2)W^T - I| %.3g, max offdiag(W S1 W^T) %.3g, lambda in [0,1]: %s",
                     worst_white, worst_diag, in_range ? "yes" : "no");
    return out;
}

// 5. SVM correctness.
Outcome svm_correctness()
{
    Outcome out;
    double worst_sum = 0.0;
    const auto accuracy = [](const SvmModel& model, const std::vector<FeatureVector>& data) {
        int ok = 0;
        for (const auto& s : data)
            ok += svm_predict(model, s).label == s.label;
        return static_cast<double>(ok) / static_cast<double>(data.size());
    };
    const auto vec = [](double a, double b) { return Vector{{a, b}}; };

    // Separable suites.
    std::vector<std::pair<std::vector<FeatureVector>, SvmConfig>> suites;
    {
        SvmConfig cfg;
        cfg.kernel = Kernel::Linear;
        cfg.c = 10.0;
        suites.push_back({{{Vector{{-1.0}}, 0}, {Vector{{1.0}}, 1}}, cfg});
    }
    Rng rng(1005);
    for (auto kernel : {Kernel::Linear, Kernel::Rbf}) {
        for (int rep = 0; rep < 5; ++rep) {
            std::vector<FeatureVector> data;
            for (int i = 0; i < 30; ++i) {
                data.push_back({vec(normal(rng) - 6.0, normal(rng)), 0});
                data.push_back({vec(normal(rng) + 6.0, normal(rng)), 1});
            }
            SvmConfig cfg;
            cfg.kernel = kernel;
            cfg.gamma = 0.1;
            cfg.c = 100.0;
            suites.push_back({data, cfg});
        }
    }
    double worst_acc = 1.0;
    for (const auto& [data, cfg] : suites) {
        const auto model = svm_train(data, cfg);
        worst_acc = std::min(worst_acc, accuracy(model, data));
        worst_sum = std::max(worst_sum, std::abs(model.dual_coeffs.sum()));
    }

    // XOR with RBF against the active-set QP oracle.
    const std::vector<FeatureVector> xor_data{{vec(1, 1), 0}, {vec(-1, -1), 0}, {vec(1, -1), 1}, {vec(-1, 1), 1}};
    SvmConfig cfg;
    cfg.gamma = 1.0;
    cfg.c = 10.0;
    const auto model = svm_train(xor_data, cfg);
    worst_sum = std::max(worst_sum, std::abs(model.dual_coeffs.sum()));
    Matrix k(4, 4);
    Vector y(4);
    for (int i = 0; i < 4; ++i) {
        y[i] = xor_data[i].label == 1 ? 1.0 : -1.0;
        for (int j = 0; j < 4; ++j)
            k(i, j) = std::exp(-(xor_data[i].values - xor_data[j].values).squaredNorm());
    }
    const auto qp = oracle::svm_dual_active_set(k, y, cfg.c);
    int sign_agree = 0;
    for (int i = 0; i < 4; ++i) {
        double f = qp.bias;
        for (int j = 0; j < 4; ++j)
            f += qp.alpha[j] * y[j] * k(i, j);
        sign_agree += (f > 0) == (model.decision(xor_data[i].values) > 0);
    }
    const double xor_acc = accuracy(model, xor_data);

    out.pass = worst_acc == 1.0 && xor_acc == 1.0 && sign_agree == 4 && worst_sum <= 1e-8;
    out.detail = fmt("separable suites min accuracy %.3f, XOR accuracy %.3f, oracle sign agreement "
                     "%d/4, max |sum dual| %.3g",
                     worst_acc, xor_acc, sign_agree, worst_sum);
    return out;
}

TrialSet synth_set(std::uint64_t seed)
{
    const auto model = default_mixing_model(8, 2, 250.0, 0.25, 20.0, seed);
    SynthOptions opts;
    opts.trials_per_class = 40;
    opts.seed = seed;
    return synth_mixture(model, opts).set;
}

// 6. End-to-end direction check.
Outcome direction()
{
    Outcome out;
    const auto t0 = Clock::now();
    double equal = 0.0;
    double sparse = 0.0;
    double mixture = 0.0;
    double quality = 0.0;
    const int seeds = 10;
    for (int s = 1; s <= seeds; ++s) {
        PipelineConfig cfg;
        cfg.folds = 5;
        cfg.seed = static_cast<std::uint64_t>(s);
        const auto reports = compare_variants(synth_set(static_cast<std::uint64_t>(s)), cfg);
        for (const auto& r : reports) {
            switch (r.variant) {
            case MethodVariant::IcaCspEqual: equal += r.mean_accuracy; break;
            case MethodVariant::IcaCspQuality: quality += r.mean_accuracy; break;
            case MethodVariant::IcaCspSparse: sparse += r.mean_accuracy; break;
            case MethodVariant::CspSparse: mixture += r.mean_accuracy; break;
            }
        }
    }
    equal /= seeds;
    sparse /= seeds;
    mixture /= seeds;
    quality /= seeds;
    const double dt = seconds_since(t0);
    out.pass = sparse - equal >= 0.03 && sparse >= mixture && dt < 120.0;
    out.detail = fmt("mean accuracy: ica-csp-equal %.4f, ica-csp-quality %.4f, ica-csp-sparse %.4f, "
                     "csp-sparse %.4f; sparse - equal = %+.4f; %.1fs",
                     equal, quality, sparse, mixture, sparse - equal, dt);
    return out;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 7. Determinism of `compare`, in process and through the CLI when available.
Outcome determinism(const char* cli)
{
    Outcome out;
    const auto set = synth_set(77);
    PipelineConfig cfg;
    cfg.folds = 5;
    cfg.seed = 77;
    std::string a;
    std::string b;
    for (auto format : {ReportFormat::Csv, ReportFormat::Table}) {
        a += emit_report(compare_variants(set, cfg), format);
        b += emit_report(compare_variants(set, cfg), format);
    }
    out.pass = a == b;
    out.detail = fmt("in-process reports %s", a == b ? "identical" : "differ");

    if (cli != nullptr) {
        const auto dir = std::filesystem::temp_directory_path() / "trialsep_acceptance_cli";
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        const std::string exe = std::string("\"") + cli + "\"";
        const std::string bundle = (dir / "bundle").string();
        int rc = std::system((exe + " synth --seed 77 --out \"" + bundle + "\" 2>/dev/null").c_str());
        for (const char* name : {"r1.txt", "r2.txt"}) {
            rc |= std::system((exe + " compare --bundle \"" + bundle + "\" --folds 5 --seed 77 --out \""
                               + (dir / name).string() + "\" 2>/dev/null")
                                  .c_str());
        }
        const auto r1 = slurp(dir / "r1.txt");
        const auto r2 = slurp(dir / "r2.txt");
        const bool same = rc == 0 && !r1.empty() && r1 == r2;
        out.pass = out.pass && same;
        out.detail += same ? ", CLI reports byte-identical" : ", CLI reports differ or failed";
        std::filesystem::remove_all(dir);
    }
    return out;
}

// 8. Lagged covariance against brute-force summation.
Outcome covariance_oracle()
{
    Outcome out;
    Rng rng(1008);
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        const Trial t{oracle::random_matrix(4, 64, rng), 0};
        for (int tau : {0, 1}) {
            const Matrix want = oracle::lagged_covariance(t.data, tau);
            const double rel = (lagged_covariance(t, tau) - want).norm() / want.norm();
            worst = std::max(worst, rel);
        }
    }
    out.pass = worst <= 1e-12;
    out.detail = fmt("worst relative error %.3g", worst);
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    const char* cli = argc > 1 ? argv[1] : nullptr;
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"FFDIAG exact recovery", ffdiag_recovery},
        {"ADMM grid-oracle equivalence", admm_oracle},
        {"sparsity behavior", sparsity},
        {"CSP identities", csp_identities},
        {"SVM correctness", svm_correctness},
        {"end-to-end direction", direction},
        {"compare determinism", [cli] { return determinism(cli); }},
        {"covariance oracle", covariance_oracle},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("threw: ") + e.what();
        }
        failed += !o.pass;
        std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
