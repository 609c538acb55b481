#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "trialsep/random.hpp"

namespace trialsep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

using Label = int;

/// One recorded repetition: channels x samples.
struct Trial {
    Matrix data;
    Label label = 0;
};

/// Labeled collection of equally shaped trials.
///
/// Use `TrialSet::make` (or the loaders/generators) to obtain a validated set;
/// the fields stay public so algorithms can read them without accessors.
struct TrialSet {
    std::vector<Trial> trials;
    double sample_rate_hz = 250.0;
    std::vector<Label> label_set;
    std::vector<int> session_ids;
    std::optional<std::vector<bool>> contaminated;

    /// Validates the invariants below and throws Error(Data) on violation:
    /// K >= 1, shared M x N with N > M, finite samples, |label_set| >= 2,
    /// every label declared, per-trial metadata sized K.
    static TrialSet make(std::vector<Trial> trials, double sample_rate_hz,
                         std::vector<Label> label_set, std::vector<int> session_ids = {},
                         std::optional<std::vector<bool>> contaminated = std::nullopt);

    void validate() const;

    std::size_t size() const noexcept { return trials.size(); }
    Eigen::Index channels() const { return trials.front().data.rows(); }
    Eigen::Index samples() const { return trials.front().data.cols(); }

    /// Indices of trials carrying `label`, in set order.
    std::vector<std::size_t> indices_of(Label label) const;

    /// Copy of the trials at `indices` (metadata follows).
    TrialSet subset(const std::vector<std::size_t>& indices) const;
};

bool operator==(const TrialSet& a, const TrialSet& b);

struct BandPass {
    double low_hz = 8.0;
    double high_hz = 30.0;
    int order = 4;
};

struct PreprocessConfig {
    bool remove_mean = true;
    std::optional<BandPass> bandpass;
};

/// Reads a trial bundle directory (manifest.json + raw float32 payloads).
TrialSet load_trial_bundle(const std::filesystem::path& dir);

/// Writes `set` as a bundle. Samples are stored as float32; the whole set is
/// validated before anything touches the filesystem.
void write_trial_bundle(const TrialSet& set, const std::filesystem::path& dir);

/// Mean removal and optional zero-phase Butterworth band-pass, per trial and channel.
TrialSet preprocess(const TrialSet& set, const PreprocessConfig& cfg);

/// Second-order section, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2;
    double a1, a2;
};

/// Butterworth band-pass of prototype order `order` (2*order poles) as `order` biquads.
std::vector<Biquad> design_butter_bandpass(const BandPass& band, double sample_rate_hz);

/// |H(e^{jw})| of a biquad cascade at `freq_hz`.
double cascade_magnitude(const std::vector<Biquad>& sections, double freq_hz,
                         double sample_rate_hz);

/// Forward-backward filtering of one signal (mirror padding, steady-state init).
std::vector<double> filtfilt(const std::vector<Biquad>& sections, std::span<const double> x);

/// One class-dependent oscillation on a designated source.
struct SourceBand {
    int source = 0;
    double center_hz = 10.0;
    double width_hz = 2.0;
    /// Oscillation amplitude per class (indexed like the label set).
    std::vector<double> class_amplitude;
};

struct MixingModel {
    Matrix mixing;
    std::vector<SourceBand> source_spectra;
    double contamination_rate = 0.0;
    double artifact_gain = 20.0;
    double condition_cap = 10.0;
};

/// Random well-conditioned mixing matrix (identity plus Gaussian perturbation,
/// redrawn until cond(A) <= cap).
Matrix random_mixing(Eigen::Index channels, double condition_cap, Rng& rng);

/// Default class-dependent spectra: source c oscillates strongly for class c.
std::vector<SourceBand> default_source_spectra(Eigen::Index channels, std::size_t classes,
                                               double sample_rate_hz);

/// Mixing model used by `trialsep synth`: random_mixing drawn from a stream
/// derived from `seed`, plus default_source_spectra.
MixingModel default_mixing_model(Eigen::Index channels, std::size_t classes,
                                 double sample_rate_hz, double contamination_rate,
                                 double artifact_gain, std::uint64_t seed,
                                 double condition_cap = 10.0);

struct SynthOptions {
    std::vector<Label> classes{0, 1};
    std::size_t trials_per_class = 40;
    Eigen::Index samples = 500;
    double sample_rate_hz = 250.0;
    std::uint64_t seed = 1;
};

struct SynthResult {
    TrialSet set;
    /// Sources before mixing (same ordering and metadata as `set`).
    TrialSet sources;
    MixingModel model;
};

/// Generates X^k = A S^k with class-dependent sources and additive artifact
/// bursts on exactly round(rate * K) trials. Output samples are float32
/// representable.
SynthResult synth_mixture(const MixingModel& model, const SynthOptions& opts);

} // namespace trialsep
