#include "trialsep/svm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "trialsep/error.hpp"

namespace trialsep {

void SvmConfig::validate() const
{
    if (kernel == Kernel::Rbf && !(gamma > 0.0))
        fail(ErrorKind::Config, "RBF gamma must be positive");
    if (!(c > 0.0))
        fail(ErrorKind::Config, "SVM box constraint c must be positive");
    if (!(tol > 0.0))
        fail(ErrorKind::Config, "SVM tolerance must be positive");
    if (max_passes < 1)
        fail(ErrorKind::Config, "SVM max_passes must be >= 1");
}

double kernel_value(const SvmConfig& cfg, const Vector& a, const Vector& b)
{
    if (cfg.kernel == Kernel::Linear)
        return a.dot(b);
    return std::exp(-cfg.gamma * (a - b).squaredNorm());
}

double SvmModel::decision(const Vector& x) const
{
    double f = bias;
    for (Eigen::Index i = 0; i < support_vectors.rows(); ++i)
        f += dual_coeffs[i] * kernel_value(config, support_vectors.row(i).transpose(), x);
    return f;
}

SvmModel svm_train(std::span<const FeatureVector> samples, const SvmConfig& cfg)
{
    cfg.validate();
    if (samples.empty())
        fail(ErrorKind::Data, "SVM training needs samples");
    const auto dim = samples.front().values.size();
    std::vector<Label> labels;
    for (const auto& s : samples) {
        if (s.values.size() != dim)
            fail(ErrorKind::Data, "SVM features must share one dimension");
        if (!s.values.allFinite())
            fail(ErrorKind::Data, "SVM features must be finite");
        if (std::find(labels.begin(), labels.end(), s.label) == labels.end())
            labels.push_back(s.label);
    }
    if (labels.size() != 2)
        fail(ErrorKind::Data, labels.size() < 2 ? "SVM training needs two classes (single-class input)"
                                                : "SVM training is binary; got more than two classes");
    std::sort(labels.begin(), labels.end());

    const auto n = static_cast<Eigen::Index>(samples.size());
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i)
        y[i] = samples[static_cast<std::size_t>(i)].label == labels[1] ? 1.0 : -1.0;

    Matrix kmat(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            kmat(i, j) = kmat(j, i) = kernel_value(cfg, samples[static_cast<std::size_t>(i)].values,
                                                   samples[static_cast<std::size_t>(j)].values);

    const double c = cfg.c;
    constexpr double tau = 1e-12;
    Vector alpha = Vector::Zero(n);
    Vector grad = Vector::Constant(n, -1.0);  // gradient of 1/2 a^T Q a - 1^T a

    const auto in_up = [&](Eigen::Index t) {
        return (y[t] > 0 && alpha[t] < c) || (y[t] < 0 && alpha[t] > 0);
    };
    const auto in_low = [&](Eigen::Index t) {
        return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < c);
    };

    SvmModel model;
    model.config = cfg;
    model.negative_label = labels[0];
    model.positive_label = labels[1];

    const long long cap = static_cast<long long>(cfg.max_passes) * std::max<Eigen::Index>(n, 1);
    long long iter = 0;
    for (;; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        double gmin = std::numeric_limits<double>::infinity();
        Eigen::Index i = -1;
        Eigen::Index j = -1;
        for (Eigen::Index t = 0; t < n; ++t) {
            const double v = -y[t] * grad[t];
            if (in_up(t) && v > gmax) {
                gmax = v;
                i = t;
            }
            if (in_low(t) && v < gmin) {
                gmin = v;
                j = t;
            }
        }
        if (i < 0 || j < 0 || gmax - gmin < cfg.tol) {
            model.converged = true;
            break;
        }
        if (iter >= cap)
            break;

        const double ai_old = alpha[i];
        const double aj_old = alpha[j];
        const double qij = y[i] * y[j] * kmat(i, j);
        if (y[i] != y[j]) {
            double quad = kmat(i, i) + kmat(j, j) + 2.0 * qij;
            if (quad <= 0.0)
                quad = tau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if (alpha[j] > c) {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            double quad = kmat(i, i) + kmat(j, j) - 2.0 * qij;
            if (quad <= 0.0)
                quad = tau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > c) {
                if (alpha[i] > c) {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > c) {
                if (alpha[j] > c) {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        const double di = alpha[i] - ai_old;
        const double dj = alpha[j] - aj_old;
        for (Eigen::Index t = 0; t < n; ++t)
            grad[t] += y[t] * (y[i] * kmat(t, i) * di + y[j] * kmat(t, j) * dj);
    }
    model.iterations = static_cast<int>(std::min<long long>(iter, std::numeric_limits<int>::max()));

    // Offset: average over free vectors, else midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    int n_free = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (alpha[t] >= c) {
            if (y[t] < 0)
                ub = std::min(ub, yg);
            else
                lb = std::max(lb, yg);
        } else if (alpha[t] <= 0.0) {
            if (y[t] > 0)
                ub = std::min(ub, yg);
            else
                lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / n_free : (ub + lb) / 2.0;
    model.bias = -rho;

    Eigen::Index n_sv = 0;
    for (Eigen::Index t = 0; t < n; ++t)
        if (alpha[t] > 0.0)
            ++n_sv;
    model.support_vectors.resize(n_sv, dim);
    model.dual_coeffs.resize(n_sv);
    Eigen::Index r = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        if (alpha[t] > 0.0) {
            model.support_vectors.row(r) = samples[static_cast<std::size_t>(t)].values.transpose();
            model.dual_coeffs[r] = alpha[t] * y[t];
            ++r;
        }
    }
    return model;
}

Prediction svm_predict(const SvmModel& model, const FeatureVector& feature)
{
    if (model.support_vectors.rows() > 0 && feature.values.size() != model.support_vectors.cols())
        fail(ErrorKind::Data, "feature dimension does not match the SVM model");
    const double f = model.decision(feature.values);
    return {f >= 0.0 ? model.positive_label : model.negative_label, f};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <class T>
void put(std::string& out, T value)
{
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    auto bits = std::bit_cast<U>(value);
    for (std::size_t b = 0; b < sizeof(T); ++b) {
        out.push_back(static_cast<char>(bits & 0xffu));
        bits >>= 8;
    }
}

class Reader {
public:
    explicit Reader(std::string_view data)
        : data_(data)
    {
    }

    template <class T>
    T get()
    {
        using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
        if (pos_ + sizeof(T) > data_.size())
            fail(ErrorKind::Data, "truncated SVM blob");
        U bits = 0;
        for (std::size_t b = 0; b < sizeof(T); ++b)
            bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }

    bool done() const { return pos_ == data_.size(); }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

constexpr char magic[4] = {'S', 'V', 'M', '1'};

} // namespace

std::string serialize(const SvmModel& model)
{
    std::string out(magic, 4);
    put(out, static_cast<std::uint32_t>(model.config.kernel));
    put(out, model.config.gamma);
    put(out, model.config.c);
    put(out, model.config.tol);
    put(out, static_cast<std::int32_t>(model.config.max_passes));
    put(out, static_cast<std::int32_t>(model.negative_label));
    put(out, static_cast<std::int32_t>(model.positive_label));
    put(out, static_cast<std::int32_t>(model.iterations));
    put(out, static_cast<std::uint32_t>(model.converged ? 1 : 0));
    put(out, static_cast<std::uint32_t>(model.support_vectors.rows()));
    put(out, static_cast<std::uint32_t>(model.support_vectors.cols()));
    put(out, model.bias);
    for (Eigen::Index i = 0; i < model.dual_coeffs.size(); ++i)
        put(out, model.dual_coeffs[i]);
    for (Eigen::Index i = 0; i < model.support_vectors.rows(); ++i)
        for (Eigen::Index j = 0; j < model.support_vectors.cols(); ++j)
            put(out, model.support_vectors(i, j));
    return out;
}

SvmModel deserialize_svm(std::string_view blob)
{
    if (blob.size() < 4 || std::memcmp(blob.data(), magic, 4) != 0)
        fail(ErrorKind::Data, "not an SVM1 blob");
    Reader in(blob.substr(4));
    SvmModel model;
    const auto kernel = in.get<std::uint32_t>();
    if (kernel > 1)
        fail(ErrorKind::Data, "unknown kernel id in SVM blob");
    model.config.kernel = static_cast<Kernel>(kernel);
    model.config.gamma = in.get<double>();
    model.config.c = in.get<double>();
    model.config.tol = in.get<double>();
    model.config.max_passes = in.get<std::int32_t>();
    model.negative_label = in.get<std::int32_t>();
    model.positive_label = in.get<std::int32_t>();
    model.iterations = in.get<std::int32_t>();
    model.converged = in.get<std::uint32_t>() != 0;
    const auto n_sv = in.get<std::uint32_t>();
    const auto dim = in.get<std::uint32_t>();
    model.bias = in.get<double>();
    model.dual_coeffs.resize(n_sv);
    for (std::uint32_t i = 0; i < n_sv; ++i)
        model.dual_coeffs[i] = in.get<double>();
    model.support_vectors.resize(n_sv, dim);
    for (std::uint32_t i = 0; i < n_sv; ++i)
        for (std::uint32_t j = 0; j < dim; ++j)
            model.support_vectors(i, j) = in.get<double>();
    if (!in.done())
        fail(ErrorKind::Data, "trailing bytes in SVM blob");
    return model;
}

} // namespace trialsep
