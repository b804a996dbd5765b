#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gaitstream/session.hpp"

namespace gaitstream {

struct WindowSpec {
    double window_ms = 200.0;
    double hop_ms = 100.0;

    // Sample counts at a given rate; throws InputError when the window is
    // shorter than 4 samples or the hop is not positive.
    std::size_t window_samples(double rate_hz) const;
    std::size_t hop_samples(double rate_hz) const;
};

// floor((L - W) / S) + 1 for L >= W, else 0.
std::size_t window_count(std::size_t length, std::size_t window, std::size_t hop);

double window_start_s(std::size_t index, std::size_t hop, double rate_hz);

struct Window {
    std::string channel_id;
    std::size_t index = 0;
    double start_s = 0.0;
    std::span<const double> samples;
    double rate_hz = 0.0;
};

// Windows aligned to t = 0. The channel must be gap-free.
std::vector<Window> segment_windows(const ChannelSeries& c, double window_ms = 200.0, double hop_ms = 100.0);

struct EmgFeatures {
    double rms = 0.0;
    double variance = 0.0;
    double mav = 0.0;
    double ssc = 0.0;
};

struct AxisFeatures {
    double rms = 0.0;
    double mean = 0.0;
    double std = 0.0;
    double jerk = 0.0;
};

struct ImuFeatures {
    std::array<AxisFeatures, 3> axes{};
    double sma = 0.0; // signal magnitude area over the 3-axis group
};

inline constexpr std::array<const char*, 4> kEmgFeatureNames{"rms", "variance", "mav", "ssc"};
inline constexpr std::array<const char*, 4> kAxisFeatureNames{"rms", "mean", "std", "jerk"};

EmgFeatures extract_emg_features(std::span<const double> w, double ssc_threshold = 0.0);

// Column order used by FeatureLayout: 4 values per EMG channel, 13 per IMU group.
inline constexpr std::size_t kEmgWidth = 4;
inline constexpr std::size_t kImuGroupWidth = 13;
void write_row(const EmgFeatures& f, double* out);
void write_row(const ImuFeatures& f, double* out);

// Throws AlignmentError when the axis windows differ in length.
ImuFeatures extract_imu_features(std::span<const double> x, std::span<const double> y, std::span<const double> z,
                                 double rate_hz);

// Feature rows for windows [0, count) of a contiguous sample buffer. The
// parallel kernels split windows across OpenMP threads; the serial versions
// are kept as the reference they are tested and benchmarked against.
std::vector<EmgFeatures> emg_feature_rows(std::span<const double> samples, std::size_t window, std::size_t hop,
                                          std::size_t count, double ssc_threshold);
std::vector<EmgFeatures> emg_feature_rows_serial(std::span<const double> samples, std::size_t window,
                                                 std::size_t hop, std::size_t count, double ssc_threshold);
std::vector<ImuFeatures> imu_feature_rows(std::span<const double> x, std::span<const double> y,
                                          std::span<const double> z, double rate_hz, std::size_t window,
                                          std::size_t hop, std::size_t count);
std::vector<ImuFeatures> imu_feature_rows_serial(std::span<const double> x, std::span<const double> y,
                                                 std::span<const double> z, double rate_hz, std::size_t window,
                                                 std::size_t hop, std::size_t count);

// IMU channel ids follow "<group>_x|_y|_z"; returns the group id or "" when
// the id carries no axis suffix.
std::string imu_group_of(std::string_view channel_id);

struct ChannelInfo {
    std::string channel_id;
    Modality modality = Modality::emg;
    double rate_hz = 0.0;
};

struct ModalitySelection {
    bool emg = true;
    bool imu = true;
    bool operator==(const ModalitySelection&) const = default;
};

// Ordered feature schema over a channel set, shared by the offline dataset
// builder and the online classifier so both assemble identical vectors.
class FeatureLayout {
public:
    struct ImuGroup {
        std::string group_id;
        std::array<std::string, 3> channel_ids; // x, y, z
        double rate_hz = 0.0;
    };

    FeatureLayout() = default;
    // Throws InputError if an IMU group is incomplete.
    FeatureLayout(std::span<const ChannelInfo> channels, ModalitySelection selection);

    const std::vector<std::string>& names() const { return names_; }
    const std::vector<ChannelInfo>& emg_channels() const { return emg_; }
    const std::vector<ImuGroup>& imu_groups() const { return imu_; }
    std::size_t size() const { return names_.size(); }
    bool empty() const { return names_.empty(); }

    // Channels needed to compute the named features. Throws ConfigError
    // naming the first feature that maps to no channel in the layout.
    std::vector<std::string> channels_for(std::span<const std::string> feature_names) const;

private:
    std::vector<ChannelInfo> emg_;
    std::vector<ImuGroup> imu_;
    std::vector<std::string> names_;
};

std::vector<ChannelInfo> channel_infos(const Session& s);

struct SessionFeatures {
    std::vector<std::string> names;
    std::vector<double> starts_s;          // per kept window
    std::vector<std::size_t> window_index; // per kept window
    std::vector<double> values;            // row-major, starts_s.size() x names.size()
    std::size_t dropped_gap_windows = 0;
};

// Aligned windows across the layout's channels; windows touching a remaining
// gap in any selected channel are dropped.
SessionFeatures featurize_session(const Session& s, const FeatureLayout& layout, const WindowSpec& spec,
                                  double ssc_threshold);

struct IntensitySeries {
    std::vector<double> starts_s;
    std::vector<std::pair<Placement, std::vector<double>>> series; // body segments in enum order
    std::vector<std::string> warnings;

    const std::vector<double>* find(Placement p) const;
};

IntensitySeries segment_intensity(const Session& s, double window_ms = 200.0, double hop_ms = 100.0);

} // namespace gaitstream
