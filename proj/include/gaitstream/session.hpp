#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace gaitstream {

inline constexpr double kEmgRateHz = 2000.0;
inline constexpr double kImuRateHz = 200.0;
inline constexpr int kEmgChannelCount = 13;
inline constexpr int kRollatorImuChannelCount = 12;
inline constexpr int kMaxRounds = 10;

enum class Modality { emg, acc, gyro };
enum class Placement { back, left_wrist, right_wrist, left_leg, right_leg, rollator_left, rollator_right };
enum class Axis { none, x, y, z };
enum class Side { left, right };
enum class MovementLabel { forward, turning };

std::string_view to_string(Modality m);
std::string_view to_string(Placement p);
std::string_view to_string(Axis a);
std::string_view to_string(Side s);
std::string_view to_string(MovementLabel l);

// Parsers throw ValidationError on unknown names.
Modality parse_modality(std::string_view s);
Placement parse_placement(std::string_view s);
Axis parse_axis(std::string_view s);
Side parse_side(std::string_view s);
MovementLabel parse_movement_label(std::string_view s);

bool is_body_segment(Placement p);
bool is_rollator(Placement p);

struct SubjectProfile {
    std::string subject_id;
    double height_m = 1.7;
    double mass_kg = 70.0;
    Side suit_side = Side::left;

    bool operator==(const SubjectProfile&) const = default;
};

// Scenario ids follow the study table: 1 = neither, 2 = suit, 3 = rollator, 4 = both.
struct ScenarioTag {
    bool rollator = false;
    bool suit = false;

    int id() const { return 1 + (rollator ? 2 : 0) + (suit ? 1 : 0); }
    static ScenarioTag from_id(int id);

    bool operator==(const ScenarioTag&) const = default;
};

struct ChannelSeries {
    std::string channel_id;
    Modality modality = Modality::emg;
    Placement placement = Placement::back;
    Axis axis = Axis::none;
    double rate_hz = kEmgRateHz;
    std::vector<double> samples;
    std::vector<std::uint8_t> gap_mask; // 1 = sample missing

    double duration_s() const { return static_cast<double>(samples.size()) / rate_hz; }
    bool has_gaps() const;

    bool operator==(const ChannelSeries&) const = default;
};

struct MovementSegment {
    double start_s = 0.0;
    double end_s = 0.0;
    MovementLabel label = MovementLabel::forward;

    bool operator==(const MovementSegment&) const = default;
};

struct Session {
    SubjectProfile subject;
    ScenarioTag scenario;
    int round_index = 1;
    std::vector<ChannelSeries> channels;
    std::vector<MovementSegment> movements;
    double duration_s = 0.0;

    const ChannelSeries* find_channel(std::string_view channel_id) const;
    std::string key() const; // "<subject>_sc<id>_r<round>"

    bool operator==(const Session&) const = default;
};

struct Violation {
    std::string where;   // channel id, segment pair, or field name
    std::string message;
};
using ValidationReport = std::vector<Violation>;

// Never throws. An empty report means every structural invariant holds.
ValidationReport validate_session(const Session& s);

std::string describe(const ValidationReport& report);

// Writes manifest.json plus one CSV per channel. `provenance` is stored
// verbatim under the manifest's "provenance" key when non-null.
void save_session(const Session& s, const std::filesystem::path& dir,
                  const nlohmann::json& provenance = nullptr);

// Throws FormatError for missing/malformed files and ValidationError when the
// loaded session violates an invariant.
Session load_session(const std::filesystem::path& dir);

// Session directories directly under `root` (those holding a manifest.json),
// sorted by name.
std::vector<std::filesystem::path> list_session_dirs(const std::filesystem::path& root);

} // namespace gaitstream
