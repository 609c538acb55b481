#include "trialsep/covariance.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <utility>

#include "trialsep/error.hpp"
#include "trialsep/kernels.hpp"

namespace trialsep {

namespace {

void check_tau(int tau, Eigen::Index samples)
{
    if (tau < 0)
        fail(ErrorKind::Config, "lag must be nonnegative");
    if (tau >= samples - 1)
        fail(ErrorKind::Config, "lag " + std::to_string(tau) + " leaves an empty product window for "
                                    + std::to_string(samples) + " samples");
}

} // namespace

Matrix lagged_covariance(const Trial& trial, int tau)
{
    const auto n = trial.data.cols();
    check_tau(tau, n);
    const Matrix c0 = kernels::lagged_product(trial.data, tau) / static_cast<double>(n - tau - 1);
    return (c0 + c0.transpose()) / 2.0;
}

std::optional<std::size_t> CovarianceSet::position(std::size_t k, int tau) const
{
    const auto t = std::find(taus.begin(), taus.end(), tau);
    if (t == taus.end() || k >= trials)
        return std::nullopt;
    return k * taus.size() + static_cast<std::size_t>(t - taus.begin());
}

const Matrix& CovarianceSet::at(std::size_t k, int tau) const
{
    const auto pos = position(k, tau);
    if (!pos)
        fail(ErrorKind::Data, "no covariance for trial " + std::to_string(k) + " at lag "
                                  + std::to_string(tau));
    return matrices[*pos];
}

void CovarianceSet::validate() const
{
    if (matrices.empty())
        fail(ErrorKind::Data, "covariance set is empty");
    if (trials * taus.size() != matrices.size() || trial_index.size() != matrices.size()
        || lag.size() != matrices.size())
        fail(ErrorKind::Data, "covariance set bookkeeping is inconsistent");
    std::set<std::pair<std::size_t, int>> seen;
    const auto m = matrices.front().rows();
    for (std::size_t i = 0; i < matrices.size(); ++i) {
        if (matrices[i].rows() != m || matrices[i].cols() != m)
            fail(ErrorKind::Data, "covariance matrices must share one square shape");
        if (!seen.emplace(trial_index[i], lag[i]).second)
            fail(ErrorKind::Data, "duplicate (trial, lag) pair in covariance set");
    }
}

CovarianceSet trial_covariance_set(const TrialSet& set, std::span<const int> taus)
{
    if (taus.empty())
        fail(ErrorKind::Config, "at least one lag is required");
    {
        std::vector<int> sorted(taus.begin(), taus.end());
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            fail(ErrorKind::Config, "lags must be distinct");
    }
    for (int tau : taus)
        check_tau(tau, set.samples());

    CovarianceSet out;
    out.trials = set.size();
    out.taus.assign(taus.begin(), taus.end());
    out.matrices = kernels::parallel::covariance_batch(set.trials, taus);
    for (std::size_t k = 0; k < set.size(); ++k) {
        for (int tau : taus) {
            out.trial_index.push_back(k);
            out.lag.push_back(tau);
        }
    }
    return out;
}

bool is_symmetric(const Matrix& c, double rel_tol)
{
    if (c.rows() != c.cols() || !c.allFinite())
        return false;
    const double scale = std::max(c.cwiseAbs().maxCoeff(), 1e-300);
    return (c - c.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

void dump_covariance_csv(const CovarianceSet& set, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        fail(ErrorKind::Io, "cannot create " + dir.string());
    char buf[64];
    for (std::size_t i = 0; i < set.matrices.size(); ++i) {
        const auto path = dir
            / ("cov_k" + std::to_string(set.trial_index[i]) + "_tau" + std::to_string(set.lag[i])
               + ".csv");
        std::ofstream out(path);
        if (!out)
            fail(ErrorKind::Io, "cannot write " + path.string());
        const auto& c = set.matrices[i];
        for (Eigen::Index r = 0; r < c.rows(); ++r) {
            for (Eigen::Index col = 0; col < c.cols(); ++col) {
                const auto res = std::to_chars(buf, buf + sizeof buf, c(r, col));
                if (col)
                    out << ',';
                out.write(buf, res.ptr - buf);
            }
            out << '\n';
        }
    }
}

} // namespace trialsep
