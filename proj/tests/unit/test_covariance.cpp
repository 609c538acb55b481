#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "../oracles.hpp"
#include "../support.hpp"
#include "trialsep/covariance.hpp"

using namespace trialsep;

TEST_CASE("zero trial gives a zero matrix")
{
    const Trial t{Matrix::Zero(2, 8), 0};
    CHECK(lagged_covariance(t, 0) == Matrix::Zero(2, 2));
}

TEST_CASE("alternating signal, lags 0 and 1")
{
    Trial t{Matrix(1, 4), 0};
    t.data << 1, -1, 1, -1;
    CHECK(lagged_covariance(t, 0)(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(lagged_covariance(t, 1)(0, 0) == doctest::Approx(-1.5).epsilon(1e-15));
}

TEST_CASE("matches brute-force summation")
{
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const Trial t{oracle::random_matrix(4, 64, rng), 0};
        for (int tau : {0, 1, 3}) {
            const Matrix want = oracle::lagged_covariance(t.data, tau);
            const Matrix got = lagged_covariance(t, tau);
            CHECK((got - want).norm() <= 1e-12 * want.norm());
            CHECK(is_symmetric(got));
        }
    }
}

TEST_CASE("lag must leave at least two samples")
{
    const Trial t{Matrix::Ones(2, 5), 0};
    CHECK_THROWS_AS(lagged_covariance(t, 4), Error);
    CHECK_THROWS_AS(lagged_covariance(t, -1), Error);
}

TEST_CASE("covariance set shape, tags and PSD lag 0")
{
    Rng rng(22);
    std::vector<Trial> trials;
    for (int k = 0; k < 3; ++k)
        trials.push_back({oracle::random_matrix(3, 30, rng), k % 2});
    trials.push_back(trials[0]);
    const auto set = TrialSet::make(trials, 250.0, {0, 1});
    const auto cov = trial_covariance_set(set, std::vector<int>{0, 1});
    CHECK(cov.matrices.size() == 8);
    for (std::size_t i = 0; i < cov.matrices.size(); ++i) {
        CHECK(cov.trial_index[i] == i / 2);
        CHECK(cov.lag[i] == static_cast<int>(i % 2));
    }
    CHECK(cov.at(3, 0) == cov.at(0, 0));
    CHECK(cov.at(3, 1) == cov.at(0, 1));
    CHECK_NOTHROW(cov.validate());

    const auto lag0 = trial_covariance_set(set, std::vector<int>{0});
    for (const auto& c : lag0.matrices) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * c.trace());
    }
}

TEST_CASE("CSV dump names one file per matrix")
{
    Rng rng(23);
    const auto set = TrialSet::make({{oracle::random_matrix(2, 10, rng), 0},
                                     {oracle::random_matrix(2, 10, rng), 1}},
                                    250.0, {0, 1});
    const auto cov = trial_covariance_set(set);
    testing::TempDir dir;
    dump_covariance_csv(cov, dir.path());
    CHECK(std::filesystem::exists(dir / "cov_k0_tau0.csv"));
    CHECK(std::filesystem::exists(dir / "cov_k1_tau1.csv"));
    const auto text = testing::slurp(dir / "cov_k0_tau0.csv");
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}
