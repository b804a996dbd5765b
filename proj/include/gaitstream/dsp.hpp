#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace gaitstream {

enum class FilterKind { bandpass, lowpass };

struct FilterDesign {
    FilterKind kind = FilterKind::bandpass;
    double low_hz = 0.0;  // unused for lowpass
    double high_hz = 0.0; // cutoff for lowpass
    int order = 4;        // prototype order per band edge
    double rate_hz = 0.0;
};

// One second-order section, a[0] == 1.
struct Biquad {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};

struct FilterCoefficients {
    std::vector<double> b; // expanded transfer function, a[0] == 1
    std::vector<double> a;
    FilterDesign design;
    std::vector<Biquad> sections; // cascade actually used for filtering
    std::vector<std::complex<double>> poles;

    std::complex<double> response(double hz) const;
    double gain_db(double hz) const;
    double max_pole_radius() const;
};

// Butterworth band-pass via bilinear transform with pre-warped edges.
// order must be one of {2, 4, 6, 8}; throws DesignError on invalid edges.
FilterCoefficients design_bandpass(double low_hz, double high_hz, int order, double rate_hz);
FilterCoefficients design_lowpass(double cutoff_hz, int order, double rate_hz);

// Delay line for causal application (transposed direct form II per section).
class FilterState {
public:
    explicit FilterState(const FilterCoefficients& c);

    double process(double x)
    {
        for (std::size_t s = 0; s < sections_.size(); ++s) {
            const Biquad& q = sections_[s];
            double* z = &state_[2 * s];
            const double y = q.b[0] * x + z[0];
            z[0] = q.b[1] * x - q.a[1] * y + z[1];
            z[1] = q.b[2] * x - q.a[2] * y;
            x = y;
        }
        return x;
    }

    void process(std::span<const double> in, std::span<double> out);
    void reset();
    std::size_t size() const { return state_.size(); }
    std::span<const double> values() const { return state_; }

private:
    std::vector<Biquad> sections_;
    std::vector<double> state_;
};

enum class FilterMode { causal, zero_phase };

// Throws InputError on non-finite samples and LengthError when a zero-phase
// input is not longer than the 3 x order reflection pad.
std::vector<double> apply_filter(std::span<const double> x, const FilterCoefficients& c, FilterMode mode);

struct GapRun {
    std::size_t start = 0;
    std::size_t length = 0;
    bool operator==(const GapRun&) const = default;
};

struct InterpolationResult {
    std::vector<double> samples;
    std::vector<std::uint8_t> gap_mask; // gaps still missing after filling
    std::vector<GapRun> unfilled;
};

// Interior gaps up to max_gap samples are bridged by a least-squares
// polynomial of degree poly_order fitted to the 2 * (poly_order + 1) nearest
// valid samples. Edge gaps take the nearest valid value.
InterpolationResult interpolate_gaps(std::span<const double> x, std::span<const std::uint8_t> gap_mask,
                                     int poly_order, std::size_t max_gap);

struct OutlierResult {
    std::vector<double> samples;
    std::vector<std::uint8_t> outlier_mask;
    double median = 0.0;
    double scale = 0.0;            // robust sigma estimate used for the threshold
    bool degenerate_scale = false; // MAD was zero; mean absolute deviation used instead
};

inline constexpr double kMadToSigma = 1.4826;
inline constexpr double kMeanAbsDevToSigma = 1.2533;

// Flags |x - median| > threshold_sigma * 1.4826 * MAD and refills flagged
// samples by linear interpolation. Samples marked in `ignore` take no part in
// the statistics and are never flagged.
OutlierResult remove_outliers(std::span<const double> x, double threshold_sigma,
                              std::span<const std::uint8_t> ignore = {});

// Centered running median over an odd window, edges use the available part.
// With exclude_center the sample itself is left out of its own window.
std::vector<double> running_median(std::span<const double> x, std::size_t window, bool exclude_center = false);

} // namespace gaitstream
