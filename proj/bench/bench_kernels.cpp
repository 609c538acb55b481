// Serial vs OpenMP timings for the batch kernels on a synthetic workload.
//
//   bench_kernels [trials=288] [channels=22] [samples=500] [reps=5]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "trialsep/kernels.hpp"
#include "trialsep/random.hpp"

using namespace trialsep;

namespace {

template <class F>
double best_of(int reps, F&& f)
{
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void row(const char* name, double serial_ms, double parallel_ms, bool same)
{
    std::printf("%-20s %10.3f %10.3f %8.2fx  %s\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms, same ? "identical" : "MISMATCH");
}

bool same_mats(const std::vector<Matrix>& a, const std::vector<Matrix>& b)
{
    if (a.size() != b.size())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i])
            return false;
    return true;
}

} // namespace

int main(int argc, char** argv)
{
    const auto arg = [&](int i, long def) { return argc > i ? std::atol(argv[i]) : def; };
    const auto k = static_cast<std::size_t>(arg(1, 288));
    const auto m = static_cast<Eigen::Index>(arg(2, 22));
    const auto n = static_cast<Eigen::Index>(arg(3, 500));
    const int reps = static_cast<int>(arg(4, 5));

    Rng rng(7);
    std::vector<Trial> trials(k);
    for (auto& t : trials) {
        t.data.resize(m, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < m; ++i)
                t.data(i, j) = normal(rng);
    }
    const int taus[] = {0, 1};
    Matrix v(m, m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < m; ++i)
            v(i, j) = (i == j ? 1.0 : 0.0) + 0.1 * normal(rng);

    std::printf("K=%zu M=%ld N=%ld threads=%d reps=%d\n", k, static_cast<long>(m),
                static_cast<long>(n), kernels::max_threads(), reps);
    std::printf("%-20s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

    std::vector<Matrix> cs, cp;
    const double t_cs = best_of(reps, [&] { cs = kernels::serial::covariance_batch(trials, taus); });
    const double t_cp = best_of(reps, [&] { cp = kernels::parallel::covariance_batch(trials, taus); });
    row("covariance_batch", t_cs, t_cp, same_mats(cs, cp));

    std::vector<Matrix> qs, qp;
    const double t_qs = best_of(reps, [&] { qs = kernels::serial::congruence_batch(v, cs); });
    const double t_qp = best_of(reps, [&] { qp = kernels::parallel::congruence_batch(v, cs); });
    row("congruence_batch", t_qs, t_qp, same_mats(qs, qp));

    Matrix zs, ys, zp, yp;
    const double t_zs = best_of(reps, [&] { kernels::serial::accumulate_zy(qs, zs, ys); });
    const double t_zp = best_of(reps, [&] { kernels::parallel::accumulate_zy(qs, zp, yp); });
    row("accumulate_zy", t_zs, t_zp, zs == zp && ys == yp);

    Matrix gs, gp;
    const double t_gs = best_of(reps, [&] { gs = kernels::serial::trace_gram(qs); });
    const double t_gp = best_of(reps, [&] { gp = kernels::parallel::trace_gram(qs); });
    row("trace_gram", t_gs, t_gp, gs == gp);

    std::vector<Matrix> ss, sp;
    const double t_ss = best_of(reps, [&] { ss = kernels::serial::left_multiply_batch(v, trials); });
    const double t_sp = best_of(reps, [&] { sp = kernels::parallel::left_multiply_batch(v, trials); });
    row("left_multiply_batch", t_ss, t_sp, same_mats(ss, sp));

    double fs = 0, fp = 0;
    const double t_fs = best_of(reps, [&] { fs = kernels::serial::offdiag_cost(qs); });
    const double t_fp = best_of(reps, [&] { fp = kernels::parallel::offdiag_cost(qs); });
    row("offdiag_cost", t_fs, t_fp, fs == fp);
    return 0;
}
