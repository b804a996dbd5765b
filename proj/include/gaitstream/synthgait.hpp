#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gaitstream/session.hpp"

namespace gaitstream {

struct EmgChannelSpec {
    const char* id;
    Placement placement;
    Side side;       // body side, back channels use the side they sit on
    bool leg;
    bool wrist;
};

// The 13 surface EMG channels in session order.
const std::array<EmgChannelSpec, kEmgChannelCount>& emg_channel_specs();

// Rollator IMU channel ids in session order (left acc, left gyro, right acc, right gyro).
std::vector<std::string> rollator_imu_channel_ids();

struct SubjectParams {
    std::uint64_t seed = 0;
    double height_m = 1.7;
    double mass_kg = 70.0;
    double stride_hz = 0.95;
    std::array<double, kEmgChannelCount> amplitude_mv{};
    double noise_floor_mv = 0.01;
    Side suit_side = Side::left;
    double suit_abruptness_gain = 2.0;
    double compensation_gain = 1.3;
    double suit_amplitude_factor = 0.7;
    double suit_stride_factor = 0.88;
    double spike_rate_hz = 3.0;       // transient rate per restricted-capable channel without suit
    double spike_amplitude = 1.5;     // relative to the channel amplitude
    double rollator_wrist_tonic = 0.6;
    // Rollator handling style. Gyro components scale with `vigor`.
    double vigor = 1.0;
    double zigzag_dps = 11.0;
    double handle_tilt_deg = 0.0;
    double gyro_noise_dps = 0.5;
    double acc_noise_g = 0.01;
    double imu_glitch_rate_hz = 0.05;

    // Draws every field from `seed`; the same seed always gives the same params.
    static SubjectParams from_seed(std::uint64_t seed, Side suit_side = Side::left);
    bool valid() const;
};

enum class SegmentKind { forward, turn90, turn180 };

struct PlanSegment {
    SegmentKind kind = SegmentKind::forward;
    double duration_s = 1.0;
    double yaw_rate_dps = 0.0; // signed, positive = left
};

struct PathPlan {
    std::vector<PlanSegment> segments;

    double total_s() const;
    bool valid() const;

    // Walk an L-shaped path, turn around and walk back. The turn-around
    // direction alternates with the round. Turn durations follow from the
    // yaw rate so each turn covers its nominal angle.
    static PathPlan l_path(double yaw_rate_dps = 45.0, int round_index = 1);
};

struct GeneratorOptions {
    double drift_per_round = 0.0; // EMG amplitude x (1 + d * (round - 1))
    double gap_rate_hz = 0.0;     // dropout runs per second per EMG channel
};

// Throws ValidationError when params or plan are invalid.
Session generate_session(const SubjectParams& p, const std::string& subject_id, ScenarioTag scenario,
                         int round_index, const PathPlan& plan, const GeneratorOptions& opt = {});

struct StudyOptions {
    int n_subjects = 11;
    int rounds = 10;
    std::uint64_t master_seed = 42;
    GeneratorOptions generator;
};

struct SessionSpec {
    int subject_index = 0;
    ScenarioTag scenario;
    int round_index = 1;
};

// Lazily generated study: sessions can be produced one at a time (and in
// parallel) without holding the raw signals of the whole study.
class StudyDesign {
public:
    explicit StudyDesign(const StudyOptions& opt);

    const StudyOptions& options() const { return opt_; }
    const std::vector<SubjectParams>& subjects() const { return subjects_; }
    const std::vector<SessionSpec>& sessions() const { return specs_; }
    std::size_t size() const { return specs_.size(); }

    static std::string subject_id(int index);
    PathPlan plan_for(const SessionSpec& spec) const;
    Session generate(std::size_t i) const;

private:
    StudyOptions opt_;
    std::vector<SubjectParams> subjects_;
    std::vector<SessionSpec> specs_;
};

// Throws ValidationError when n_subjects < 2 or rounds < 2.
std::vector<Session> generate_study(const StudyOptions& opt);

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

} // namespace gaitstream
