#include <algorithm>
#include <chrono>

#include <doctest.h>

#include "../oracles.hpp"
#include "../support.hpp"
#include "trialsep/ffdiag.hpp"

using namespace trialsep;

namespace {

// W from the per-pair 2x2 systems, solved by a generic least-squares
// decomposition, then halved until its infinity norm drops below 1.
Matrix oracle_W(const std::vector<Matrix>& mats)
{
    const auto m = mats.front().rows();
    Matrix w = Matrix::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i + 1; j < m; ++j) {
            Matrix a = Matrix::Zero(2, 2);
            Vector b = Vector::Zero(2);
            for (const auto& c : mats) {
                a(0, 0) += c(j, j) * c(j, j);
                a(0, 1) += c(i, i) * c(j, j);
                a(1, 1) += c(i, i) * c(i, i);
                b(0) -= c(j, j) * (c(i, j) + c(j, i)) / 2.0;
                b(1) -= c(i, i) * (c(i, j) + c(j, i)) / 2.0;
            }
            a(1, 0) = a(0, 1);
            const Vector x = a.completeOrthogonalDecomposition().solve(b);
            w(i, j) = x(0);
            w(j, i) = x(1);
        }
    }
    double norm = w.cwiseAbs().rowwise().sum().maxCoeff();
    while (norm >= 1.0) {
        w /= 2.0;
        norm /= 2.0;
    }
    return w;
}

std::vector<Matrix> jd_instance(const Matrix& a, int count, Rng& rng)
{
    std::vector<Matrix> mats;
    for (int k = 0; k < count; ++k) {
        Vector d(a.rows());
        for (Eigen::Index i = 0; i < d.size(); ++i)
            d[i] = uniform(rng, 0.2, 5.0);
        mats.push_back(a * d.asDiagonal() * a.transpose());
    }
    return mats;
}

double cost_at(const Matrix& v, const std::vector<Matrix>& mats)
{
    double f = 0.0;
    for (const auto& c : mats) {
        const Matrix q = v * c * v.transpose();
        for (Eigen::Index i = 0; i < q.rows(); ++i)
            for (Eigen::Index j = 0; j < q.cols(); ++j)
                if (i != j)
                    f += q(i, j) * q(i, j);
    }
    return f;
}

} // namespace

TEST_CASE("W vanishes for diagonal input")
{
    std::vector<Matrix> mats{Vector::LinSpaced(3, 1, 3).asDiagonal(),
                             Vector::LinSpaced(3, 4, 2).asDiagonal()};
    CHECK(compute_update_W(mats) == Matrix::Zero(3, 3));
}

TEST_CASE("single 2x2 matrix matches the hand evaluation")
{
    Matrix c(2, 2);
    c << 2, 1, 1, 3;
    const std::vector<Matrix> mats{c};
    const Matrix w = compute_update_W(mats);
    // z = [[4,6],[6,9]], y_01 = 3, y_10 = 2: the 2x2 system is rank one and
    // its minimum-norm solution is -(3, 2) / 13.
    CHECK(w(0, 1) == doctest::Approx(-3.0 / 13.0).epsilon(1e-14));
    CHECK(w(1, 0) == doctest::Approx(-2.0 / 13.0).epsilon(1e-14));
    CHECK((w - oracle_W(mats)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("W agrees with the per-pair oracle and keeps its invariants")
{
    Rng rng(41);
    for (int rep = 0; rep < 30; ++rep) {
        const auto m = 2 + rep % 5;
        std::vector<Matrix> mats;
        for (int k = 0; k < 1 + rep % 4; ++k)
            mats.push_back(oracle::random_spd(m, rng, 0.1, 20.0));
        const Matrix w = compute_update_W(mats);
        CHECK(w.diagonal().cwiseAbs().maxCoeff() == 0.0);
        CHECK(w.cwiseAbs().rowwise().sum().maxCoeff() < 1.0);
        const Matrix want = oracle_W(mats);
        CHECK((w - want).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + want.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("already diagonal set stops immediately")
{
    std::vector<Matrix> mats{Vector{{1.0, 2.0}}.asDiagonal(), Vector{{3.0, 1.0}}.asDiagonal()};
    const auto r = joint_diagonalize(mats, {});
    CHECK(r.converged);
    CHECK(r.iterations <= 1);
    CHECK(r.V.cwiseAbs() == Matrix::Identity(2, 2));
    CHECK(offdiag_cost(r.Q) == 0.0);
}

TEST_CASE("recovers a known 2x2 mixing")
{
    Matrix a(2, 2);
    a << 1, 0.5, 0.3, 1;
    std::vector<Matrix> mats{a * Vector{{1.0, 2.0}}.asDiagonal() * a.transpose(),
                             a * Vector{{3.0, 1.0}}.asDiagonal() * a.transpose()};
    const auto r = joint_diagonalize(mats, {});
    CHECK(r.converged);
    CHECK(cost_at(r.V, mats) <= 1e-10);
    const Matrix p = r.V * a;
    // Generalized permutation: each row has one dominant entry.
    for (Eigen::Index i = 0; i < 2; ++i) {
        const auto row = p.row(i).cwiseAbs();
        CHECK(row.minCoeff() <= 1e-4 * row.maxCoeff());
    }
    CHECK(oracle::amari(p) < 0.05);
    CHECK(amari_index(p) == doctest::Approx(oracle::amari(p)).epsilon(1e-12));
}

TEST_CASE("random jointly diagonalizable sets: cost drops, rows stay unit")
{
    Rng rng(42);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix a = random_mixing(5, 10.0, rng);
        const auto mats = jd_instance(a, 4, rng);
        const auto r = joint_diagonalize(mats, {});
        CHECK(r.iterations <= 1000);
        CHECK(cost_at(r.V, mats) <= cost_at(Matrix::Identity(5, 5), mats));
        CHECK(cost_at(r.V, mats) == doctest::Approx(offdiag_cost(r.Q)).epsilon(1e-9));
        for (Eigen::Index i = 0; i < 5; ++i)
            CHECK(std::abs(r.V.row(i).norm() - 1.0) <= 1e-10);
        CHECK(amari_index(r.V * a) < 0.05);
    }
}

TEST_CASE("two generic SPD matrices: positive cost and residues")
{
    Rng rng(43);
    const Matrix c1 = oracle::random_spd(3, rng);
    const Matrix c2 = oracle::random_spd(3, rng);
    std::vector<Trial> trials;
    CovarianceSet set;
    set.matrices = {c1, c2};
    set.trial_index = {0, 1};
    set.lag = {0, 0};
    set.trials = 2;
    set.taus = {0};
    const auto r = ffdiag(set, {});
    CHECK(r.converged);
    CHECK(offdiag_cost(r.Q) > 0.0);
    CHECK(cost_at(r.V, set.matrices) == doctest::Approx(offdiag_cost(r.Q)).epsilon(1e-10));
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(r.p[k] > 0.0);
        Matrix q = r.V * set.matrices[k] * r.V.transpose();
        q.diagonal().setZero();
        CHECK(r.p[k] == doctest::Approx(q.norm()).epsilon(1e-12));
    }
}

TEST_CASE("ffdiag requires lag 0 and respects max_iters")
{
    Rng rng(44);
    CovarianceSet set;
    set.matrices = {oracle::random_spd(3, rng)};
    set.trial_index = {0};
    set.lag = {1};
    set.trials = 1;
    set.taus = {1};
    testing::require_error([&] { ffdiag(set, {}); }, ErrorKind::Config, "lag 0");

    std::vector<Matrix> mats{oracle::random_spd(4, rng), oracle::random_spd(4, rng),
                             oracle::random_spd(4, rng)};
    FfdiagConfig cfg;
    cfg.epsilon = 1e-300;
    cfg.max_iters = 7;
    const auto r = joint_diagonalize(mats, cfg);
    CHECK(r.iterations == 7);
    CHECK_FALSE(r.converged);
    CHECK(r.cost_trace.size() == 7);
}

TEST_CASE("source separation")
{
    Rng rng(45);
    const auto set = TrialSet::make({{oracle::random_matrix(3, 50, rng), 0},
                                     {oracle::random_matrix(3, 50, rng), 1}},
                                    250.0, {0, 1});
    CHECK(separate_sources(Matrix::Identity(3, 3), set) == set);

    Matrix bad = Matrix::Identity(3, 3);
    bad.row(1).setZero();
    testing::require_error([&] { separate_sources(bad, set); }, ErrorKind::Data,
                           "degenerate demixing row");
    CHECK_THROWS_AS(separate_sources(Matrix::Identity(2, 2), set), Error);

    // Sources with exactly orthogonal rows, mixed by A, unmixed by A^-1.
    Matrix s = oracle::random_matrix(50, 3, rng).householderQr().householderQ() * Matrix::Identity(50, 3);
    s.transposeInPlace();
    s *= 10.0;
    const Matrix a = random_mixing(3, 10.0, rng);
    const auto mixed = TrialSet::make({{a * s, 0}, {a * s, 1}}, 250.0, {0, 1});
    const auto out = separate_sources(a.inverse(), mixed);
    const Matrix c = lagged_covariance(out.trials[0], 0);
    CHECK(residue(c).norm() <= 1e-6);
}

TEST_CASE("ICA on clean identity-mixed sources")
{
    MixingModel model;
    model.mixing = Matrix::Identity(4, 4);
    model.source_spectra = default_source_spectra(4, 2, 250.0);
    SynthOptions opts;
    opts.trials_per_class = 10;
    const auto data = synth_mixture(model, opts);
    const auto r = ica(preprocess(data.set, {}), default_taus, {});
    CHECK(amari_index(r.diag.V) < 0.05);
}

TEST_CASE("ICA single trial, lag 0 only")
{
    Rng rng(46);
    const auto set = TrialSet::make({{oracle::random_matrix(3, 40, rng), 0}}, 250.0, {0, 1});
    const int taus[] = {0};
    const auto r = ica(set, taus, {});
    CHECK(r.diag.Q.size() == 1);
    CHECK(r.diag.p.size() == 1);
    for (Eigen::Index i = 0; i < 3; ++i)
        CHECK(std::abs(r.diag.V.row(i).norm() - 1.0) <= 1e-10);
}

TEST_CASE("contaminated trials carry larger residues")
{
    const auto model = default_mixing_model(8, 2, 250.0, 0.25, 20.0, 5);
    SynthOptions opts;
    opts.seed = 5;
    const auto data = synth_mixture(model, opts);
    const auto set = preprocess(data.set, {});
    const auto r = ica(set, default_taus, {});
    std::vector<double> dirty;
    std::vector<double> clean;
    for (std::size_t k = 0; k < set.size(); ++k)
        ((*set.contaminated)[k] ? dirty : clean).push_back(r.diag.p[k]);
    const auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const auto n = v.size();
        return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
    };
    CHECK(median(dirty) > median(clean));
}

TEST_CASE("Amari index")
{
    Matrix p(3, 3);
    p << 0, 2, 0, 0, 0, -1, 5, 0, 0;
    CHECK(amari_index(p) == 0.0);
    CHECK(amari_index(Matrix::Ones(3, 3)) == doctest::Approx(1.0));
    Rng rng(47);
    const Matrix r = oracle::random_matrix(4, 4, rng);
    CHECK(amari_index(r) == doctest::Approx(oracle::amari(r)).epsilon(1e-14));
}
