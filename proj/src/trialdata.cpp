#include "trialsep/trialdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "trialsep/error.hpp"

namespace trialsep {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// TrialSet

TrialSet TrialSet::make(std::vector<Trial> trials, double sample_rate_hz,
                        std::vector<Label> label_set, std::vector<int> session_ids,
                        std::optional<std::vector<bool>> contaminated)
{
    TrialSet set;
    set.trials = std::move(trials);
    set.sample_rate_hz = sample_rate_hz;
    set.label_set = std::move(label_set);
    set.session_ids = std::move(session_ids);
    if (set.session_ids.empty())
        set.session_ids.assign(set.trials.size(), 0);
    set.contaminated = std::move(contaminated);
    set.validate();
    return set;
}

void TrialSet::validate() const
{
    if (trials.empty())
        fail(ErrorKind::Data, "trial set is empty");
    if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
        fail(ErrorKind::Data, "sample rate must be positive");
    if (label_set.size() < 2)
        fail(ErrorKind::Data, "label set must declare at least two classes");
    {
        auto sorted = label_set;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            fail(ErrorKind::Data, "label set contains duplicates");
    }
    if (session_ids.size() != trials.size())
        fail(ErrorKind::Data, "session id count does not match trial count");
    if (contaminated && contaminated->size() != trials.size())
        fail(ErrorKind::Data, "contamination flag count does not match trial count");

    const auto m = trials.front().data.rows();
    const auto n = trials.front().data.cols();
    if (m < 1)
        fail(ErrorKind::Data, "trials must have at least one channel");
    if (n <= m)
        fail(ErrorKind::Data, "trials need more samples than channels");
    for (std::size_t k = 0; k < trials.size(); ++k) {
        const auto& t = trials[k];
        if (t.data.rows() != m || t.data.cols() != n)
            fail(ErrorKind::Data, "trial " + std::to_string(k) + " has inconsistent shape");
        if (!t.data.allFinite())
            fail(ErrorKind::Data, "trial " + std::to_string(k) + " has non-finite samples");
        if (std::find(label_set.begin(), label_set.end(), t.label) == label_set.end())
            fail(ErrorKind::Data, "unknown label " + std::to_string(t.label) + " on trial "
                                      + std::to_string(k));
    }
}

std::vector<std::size_t> TrialSet::indices_of(Label label) const
{
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < trials.size(); ++k)
        if (trials[k].label == label)
            out.push_back(k);
    return out;
}

TrialSet TrialSet::subset(const std::vector<std::size_t>& indices) const
{
    TrialSet out;
    out.sample_rate_hz = sample_rate_hz;
    out.label_set = label_set;
    out.trials.reserve(indices.size());
    std::vector<bool> flags;
    for (auto k : indices) {
        out.trials.push_back(trials.at(k));
        out.session_ids.push_back(session_ids.at(k));
        if (contaminated)
            flags.push_back((*contaminated)[k]);
    }
    if (contaminated)
        out.contaminated = std::move(flags);
    return out;
}

bool operator==(const TrialSet& a, const TrialSet& b)
{
    if (a.trials.size() != b.trials.size() || a.sample_rate_hz != b.sample_rate_hz
        || a.label_set != b.label_set || a.session_ids != b.session_ids
        || a.contaminated != b.contaminated)
        return false;
    for (std::size_t k = 0; k < a.trials.size(); ++k) {
        const auto& x = a.trials[k];
        const auto& y = b.trials[k];
        if (x.label != y.label || x.data.rows() != y.data.rows() || x.data.cols() != y.data.cols())
            return false;
        if (std::memcmp(x.data.data(), y.data.data(), sizeof(double) * x.data.size()) != 0)
            return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Bundle I/O

namespace {

std::string payload_name(std::size_t k)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "trial_%05zu.f32", k);
    return buf;
}

std::uint32_t to_little(std::uint32_t v)
{
    if constexpr (std::endian::native == std::endian::little)
        return v;
    else
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

std::vector<char> encode_payload(const Matrix& data)
{
    const auto m = data.rows();
    const auto n = data.cols();
    std::vector<char> bytes(static_cast<std::size_t>(4 * m * n));
    std::size_t off = 0;
    for (Eigen::Index r = 0; r < m; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
            const auto bits = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(data(r, c))));
            std::memcpy(bytes.data() + off, &bits, 4);
            off += 4;
        }
    }
    return bytes;
}

Matrix decode_payload(const std::vector<char>& bytes, Eigen::Index m, Eigen::Index n)
{
    Matrix out(m, n);
    std::size_t off = 0;
    for (Eigen::Index r = 0; r < m; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
            std::uint32_t bits = 0;
            std::memcpy(&bits, bytes.data() + off, 4);
            out(r, c) = static_cast<double>(std::bit_cast<float>(to_little(bits)));
            off += 4;
        }
    }
    return out;
}

std::vector<char> read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        fail(ErrorKind::Data, "cannot open payload " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const char* data, std::size_t size)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorKind::Io, "cannot open " + p.string() + " for writing");
    out.write(data, static_cast<std::streamsize>(size));
    if (!out)
        fail(ErrorKind::Io, "write failed for " + p.string());
}

} // namespace

void write_trial_bundle(const TrialSet& set, const fs::path& dir)
{
    set.validate();
    for (std::size_t k = 0; k < set.size(); ++k) {
        const auto& d = set.trials[k].data;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (!std::isfinite(static_cast<float>(d.data()[i])))
                fail(ErrorKind::Data, "trial " + std::to_string(k) + " overflows float32");
        }
    }

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

    json manifest;
    manifest["sample_rate_hz"] = set.sample_rate_hz;
    manifest["channels"] = set.channels();
    manifest["samples"] = set.samples();
    manifest["label_set"] = set.label_set;
    json trials = json::array();
    for (std::size_t k = 0; k < set.size(); ++k) {
        json t;
        t["file"] = payload_name(k);
        t["label"] = set.trials[k].label;
        t["session"] = set.session_ids[k];
        if (set.contaminated)
            t["contaminated"] = static_cast<bool>((*set.contaminated)[k]);
        trials.push_back(std::move(t));

        const auto bytes = encode_payload(set.trials[k].data);
        write_file(dir / payload_name(k), bytes.data(), bytes.size());
    }
    manifest["trials"] = std::move(trials);
    const auto text = manifest.dump(2) + "\n";
    write_file(dir / "manifest.json", text.data(), text.size());
}

TrialSet load_trial_bundle(const fs::path& dir)
{
    const auto manifest_path = dir / "manifest.json";
    if (!fs::is_regular_file(manifest_path))
        fail(ErrorKind::Data, "missing manifest: " + manifest_path.string());

    json manifest;
    try {
        std::ifstream in(manifest_path);
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::Data, std::string("malformed manifest: ") + e.what());
    }

    TrialSet set;
    try {
        set.sample_rate_hz = manifest.at("sample_rate_hz").get<double>();
        const auto m = manifest.at("channels").get<Eigen::Index>();
        const auto n = manifest.at("samples").get<Eigen::Index>();
        if (m < 1 || n < 1)
            fail(ErrorKind::Data, "manifest declares an empty trial shape");
        set.label_set = manifest.at("label_set").get<std::vector<Label>>();

        const auto& entries = manifest.at("trials");
        if (!entries.is_array())
            fail(ErrorKind::Data, "manifest 'trials' must be an array");
        std::vector<bool> flags;
        bool any_flag = false;
        for (const auto& entry : entries) {
            const auto file = entry.at("file").get<std::string>();
            Trial t;
            t.label = entry.at("label").get<Label>();
            if (std::find(set.label_set.begin(), set.label_set.end(), t.label)
                == set.label_set.end())
                fail(ErrorKind::Data, "unknown label " + std::to_string(t.label) + " in " + file);
            const auto bytes = read_file(dir / file);
            if (bytes.size() != static_cast<std::size_t>(4 * m * n))
                fail(ErrorKind::Data, "payload size mismatch in " + file + ": expected "
                                          + std::to_string(4 * m * n) + " bytes, found "
                                          + std::to_string(bytes.size()));
            t.data = decode_payload(bytes, m, n);
            if (!t.data.allFinite())
                fail(ErrorKind::Data, "non-finite sample in " + file);
            set.session_ids.push_back(entry.value("session", 0));
            if (entry.contains("contaminated")) {
                any_flag = true;
                flags.push_back(entry.at("contaminated").get<bool>());
            } else {
                flags.push_back(false);
            }
            set.trials.push_back(std::move(t));
        }
        if (any_flag)
            set.contaminated = std::move(flags);
    } catch (const json::exception& e) {
        fail(ErrorKind::Data, std::string("malformed manifest: ") + e.what());
    }
    set.validate();
    return set;
}

// ---------------------------------------------------------------------------
// Filtering

std::vector<Biquad> design_butter_bandpass(const BandPass& band, double fs)
{
    if (!(band.low_hz > 0.0 && band.low_hz < band.high_hz && band.high_hz < fs / 2.0))
        fail(ErrorKind::Config, "invalid band edges: need 0 < low < high < sample_rate/2");
    if (band.order < 1)
        fail(ErrorKind::Config, "filter order must be >= 1");

    using cd = std::complex<double>;
    const double fs2 = 2.0 * fs;
    const double wl = fs2 * std::tan(std::numbers::pi * band.low_hz / fs);
    const double wh = fs2 * std::tan(std::numbers::pi * band.high_hz / fs);
    const double bw = wh - wl;
    const double w0sq = wl * wh;

    const auto to_z = [fs2](cd s) { return (fs2 + s) / (fs2 - s); };
    const auto section = [](cd z1, cd z2) {
        return Biquad{1.0, 0.0, -1.0, -(z1 + z2).real(), (z1 * z2).real()};
    };

    std::vector<Biquad> sections;
    const int n = band.order;
    for (int k = 0; k < n; ++k) {
        // Left half-plane Butterworth prototype poles; keep the upper half (and the real one).
        const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n));
        if (p.imag() < -1e-12)
            continue;
        const cd pb = p * bw;
        const cd disc = std::sqrt(pb * pb - 4.0 * w0sq);
        const cd r1 = (pb + disc) / 2.0;
        const cd r2 = (pb - disc) / 2.0;
        if (std::abs(p.imag()) <= 1e-12) {
            sections.push_back(section(to_z(r1), to_z(r2)));
        } else {
            sections.push_back(section(to_z(r1), std::conj(to_z(r1))));
            sections.push_back(section(to_z(r2), std::conj(to_z(r2))));
        }
    }

    // Unit gain at the geometric center frequency.
    const double wc = 2.0 * std::atan(std::sqrt(w0sq) / fs2);
    const cd zc = std::polar(1.0, wc);
    for (auto& s : sections) {
        const cd zi = 1.0 / zc;
        const cd h = (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
        const double g = 1.0 / std::abs(h);
        s.b0 *= g;
        s.b1 *= g;
        s.b2 *= g;
    }
    return sections;
}

double cascade_magnitude(const std::vector<Biquad>& sections, double freq_hz, double fs)
{
    using cd = std::complex<double>;
    const cd zi = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / fs);
    cd h = 1.0;
    for (const auto& s : sections)
        h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
    return std::abs(h);
}

namespace {

// Transposed direct form II, started in steady state for a constant input x[0].
void sosfilt_inplace(const std::vector<Biquad>& sections, std::vector<double>& x)
{
    if (x.empty())
        return;
    double level = x.front();
    for (const auto& s : sections) {
        const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        const double yss = dc * level;
        double z1 = yss - s.b0 * level;
        double z2 = s.b2 * level - s.a2 * yss;
        for (auto& v : x) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
        level = yss;
    }
}

} // namespace

std::vector<double> filtfilt(const std::vector<Biquad>& sections, std::span<const double> x)
{
    const std::size_t n = x.size();
    if (n == 0)
        return {};
    const std::size_t pad = std::min<std::size_t>(n - 1, 3 * (2 * sections.size() + 1));

    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i)
        ext.push_back(x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i)
        ext.push_back(x[n - 1 - i]);

    sosfilt_inplace(sections, ext);
    std::reverse(ext.begin(), ext.end());
    sosfilt_inplace(sections, ext);
    std::reverse(ext.begin(), ext.end());

    return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

TrialSet preprocess(const TrialSet& set, const PreprocessConfig& cfg)
{
    std::vector<Biquad> sections;
    if (cfg.bandpass)
        sections = design_butter_bandpass(*cfg.bandpass, set.sample_rate_hz);

    TrialSet out = set;
    std::vector<double> row;
    for (auto& trial : out.trials) {
        auto& d = trial.data;
        for (Eigen::Index r = 0; r < d.rows(); ++r) {
            if (cfg.bandpass) {
                row.assign(d.cols(), 0.0);
                for (Eigen::Index c = 0; c < d.cols(); ++c)
                    row[c] = d(r, c);
                const auto y = filtfilt(sections, row);
                for (Eigen::Index c = 0; c < d.cols(); ++c)
                    d(r, c) = y[c];
            }
            if (cfg.remove_mean) {
                double sum = 0.0;
                for (Eigen::Index c = 0; c < d.cols(); ++c)
                    sum += d(r, c);
                const double mean = sum / static_cast<double>(d.cols());
                for (Eigen::Index c = 0; c < d.cols(); ++c)
                    d(r, c) -= mean;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthesis

namespace {

double condition_number(const Matrix& a)
{
    Eigen::JacobiSVD<Matrix> svd(a);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

double to_float32(double v)
{
    return static_cast<double>(static_cast<float>(v));
}

} // namespace

Matrix random_mixing(Eigen::Index channels, double condition_cap, Rng& rng)
{
    if (channels < 1)
        fail(ErrorKind::Config, "mixing needs at least one channel");
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Matrix a = Matrix::Identity(channels, channels);
        for (Eigen::Index c = 0; c < channels; ++c)
            for (Eigen::Index r = 0; r < channels; ++r)
                a(r, c) += 0.5 * normal(rng);
        if (condition_number(a) <= condition_cap)
            return a;
    }
    fail(ErrorKind::Config, "could not draw a mixing matrix under the condition cap");
}

std::vector<SourceBand> default_source_spectra(Eigen::Index channels, std::size_t classes,
                                               double sample_rate_hz)
{
    std::vector<SourceBand> bands;
    const auto designated = std::min<std::size_t>(classes, static_cast<std::size_t>(channels));
    for (std::size_t c = 0; c < designated; ++c) {
        SourceBand b;
        b.source = static_cast<int>(c);
        b.center_hz = std::min(10.0 + 4.0 * static_cast<double>(c), 0.4 * sample_rate_hz);
        b.width_hz = 2.0;
        b.class_amplitude.assign(classes, 0.5);
        b.class_amplitude[c] = 2.0;
        bands.push_back(std::move(b));
    }
    return bands;
}

MixingModel default_mixing_model(Eigen::Index channels, std::size_t classes,
                                 double sample_rate_hz, double contamination_rate,
                                 double artifact_gain, std::uint64_t seed, double condition_cap)
{
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    MixingModel model;
    model.mixing = random_mixing(channels, condition_cap, rng);
    model.source_spectra = default_source_spectra(channels, classes, sample_rate_hz);
    model.contamination_rate = contamination_rate;
    model.artifact_gain = artifact_gain;
    model.condition_cap = condition_cap;
    return model;
}

SynthResult synth_mixture(const MixingModel& model, const SynthOptions& opts)
{
    const auto m = model.mixing.rows();
    const auto n = opts.samples;
    if (model.mixing.cols() != m || m < 1)
        fail(ErrorKind::Config, "mixing matrix must be square");
    if (n <= m)
        fail(ErrorKind::Config, "need more samples than channels");
    if (!(model.contamination_rate >= 0.0 && model.contamination_rate <= 1.0))
        fail(ErrorKind::Config, "contamination rate must lie in [0, 1]");
    if (!(model.artifact_gain > 0.0))
        fail(ErrorKind::Config, "artifact gain must be positive");
    if (opts.classes.size() < 2 || opts.trials_per_class < 1)
        fail(ErrorKind::Config, "need at least two classes and one trial per class");
    if (!(condition_number(model.mixing) <= model.condition_cap))
        fail(ErrorKind::Config, "mixing matrix exceeds the condition cap");
    for (const auto& b : model.source_spectra) {
        if (b.source < 0 || b.source >= m)
            fail(ErrorKind::Config, "source band refers to a missing source");
        if (b.class_amplitude.size() != opts.classes.size())
            fail(ErrorKind::Config, "source band needs one amplitude per class");
    }

    Rng rng(opts.seed);
    const double fs = opts.sample_rate_hz;
    const std::size_t k_total = opts.trials_per_class * opts.classes.size();

    // Lag-1 coefficient per source: distinct temporal structure for each source.
    std::vector<double> ar(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j)
        ar[j] = -0.6 + 1.4 * (static_cast<double>(j) + 0.5) / static_cast<double>(m);

    std::vector<Trial> sources;
    std::vector<Trial> mixtures;
    sources.reserve(k_total);
    for (std::size_t t = 0; t < opts.trials_per_class; ++t) {
        for (std::size_t ci = 0; ci < opts.classes.size(); ++ci) {
            Matrix s(m, n);
            for (Eigen::Index j = 0; j < m; ++j) {
                const double gain = uniform(rng, 0.6, 1.4);
                const double innov = std::sqrt(1.0 - ar[j] * ar[j]);
                double prev = normal(rng);
                for (Eigen::Index i = 0; i < n; ++i) {
                    prev = ar[j] * prev + innov * normal(rng);
                    s(j, i) = gain * prev;
                }
            }
            for (const auto& b : model.source_spectra) {
                const double amp = b.class_amplitude[ci] * uniform(rng, 0.8, 1.2);
                constexpr int tones = 3;
                for (int q = 0; q < tones; ++q) {
                    const double f = b.center_hz + b.width_hz * (uniform01(rng) - 0.5);
                    const double phase = 2.0 * std::numbers::pi * uniform01(rng);
                    const double a = amp * std::sqrt(2.0 / tones);
                    for (Eigen::Index i = 0; i < n; ++i)
                        s(b.source, i) += a * std::sin(2.0 * std::numbers::pi * f * i / fs + phase);
                }
            }
            s = s.unaryExpr(&to_float32);
            sources.push_back({s, opts.classes[ci]});
        }
    }

    const auto contaminated_count
        = static_cast<std::size_t>(std::lround(model.contamination_rate * static_cast<double>(k_total)));
    std::vector<std::size_t> order(k_total);
    for (std::size_t k = 0; k < k_total; ++k)
        order[k] = k;
    shuffle(std::span<std::size_t>(order), rng);
    std::vector<bool> flags(k_total, false);
    for (std::size_t i = 0; i < contaminated_count; ++i)
        flags[order[i]] = true;

    mixtures.reserve(k_total);
    for (std::size_t k = 0; k < k_total; ++k) {
        Matrix x = model.mixing * sources[k].data;
        if (flags[k]) {
            std::vector<Eigen::Index> chans(static_cast<std::size_t>(m));
            for (Eigen::Index j = 0; j < m; ++j)
                chans[j] = j;
            shuffle(std::span<Eigen::Index>(chans), rng);
            const auto hit = 1 + static_cast<Eigen::Index>(
                                 uniform_index(rng, static_cast<std::uint64_t>(std::max<Eigen::Index>(1, m / 2))));
            const auto len = std::min<Eigen::Index>(
                n, static_cast<Eigen::Index>(std::ceil(uniform(rng, 0.25, 0.5) * static_cast<double>(n))));
            const auto start = static_cast<Eigen::Index>(
                uniform_index(rng, static_cast<std::uint64_t>(n - len + 1)));
            for (Eigen::Index c = 0; c < hit; ++c)
                for (Eigen::Index i = start; i < start + len; ++i)
                    x(chans[c], i) += model.artifact_gain * normal(rng);
        }
        mixtures.push_back({x.unaryExpr(&to_float32), sources[k].label});
    }

    SynthResult out;
    out.model = model;
    std::vector<int> sessions(k_total, 0);
    out.set = TrialSet::make(std::move(mixtures), fs, opts.classes, sessions, flags);
    out.sources = TrialSet::make(std::move(sources), fs, opts.classes, sessions, flags);
    return out;
}

} // namespace trialsep
