#include "gaitstream/session.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gaitstream/errors.hpp"
#include "gaitstream/numfmt.hpp"

namespace gaitstream {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& values, const char* what)
{
    for (E v : values) {
        if (to_string(v) == s) {
            return v;
        }
    }
    throw ValidationError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::array kModalities{Modality::emg, Modality::acc, Modality::gyro};
constexpr std::array kPlacements{Placement::back,          Placement::left_wrist, Placement::right_wrist,
                                 Placement::left_leg,      Placement::right_leg,  Placement::rollator_left,
                                 Placement::rollator_right};
constexpr std::array kAxes{Axis::none, Axis::x, Axis::y, Axis::z};
constexpr std::array kSides{Side::left, Side::right};
constexpr std::array kLabels{MovementLabel::forward, MovementLabel::turning};

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + p.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write " + p.string());
    }
    out << content;
}

std::string channel_file_name(const ChannelSeries& c) { return c.channel_id + ".csv"; }

std::string channel_csv(const ChannelSeries& c)
{
    std::string out = "t,value,gap\n";
    out.reserve(c.samples.size() * 28);
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
        out += format_double(static_cast<double>(i) / c.rate_hz);
        out += ',';
        out += format_double(c.samples[i]);
        out += c.gap_mask[i] ? ",1\n" : ",0\n";
    }
    return out;
}

void parse_channel_csv(const fs::path& file, ChannelSeries& c)
{
    const std::string text = read_file(file);
    std::string_view rest(text);
    auto next_line = [&rest]() {
        auto nl = rest.find('\n');
        std::string_view line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        return line;
    };
    if (next_line() != "t,value,gap") {
        throw FormatError(file.string() + ": expected header 't,value,gap'");
    }
    std::size_t row = 0;
    while (!rest.empty()) {
        std::string_view line = next_line();
        if (line.empty()) {
            continue;
        }
        auto c1 = line.find(',');
        auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string_view::npos) {
            throw FormatError(file.string() + ": malformed row " + std::to_string(row + 1));
        }
        double t = 0.0;
        try {
            t = parse_double(line.substr(0, c1));
            c.samples.push_back(parse_double(line.substr(c1 + 1, c2 - c1 - 1)));
        } catch (const FormatError& e) {
            throw FormatError(file.string() + ": row " + std::to_string(row + 1) + ": " + e.what());
        }
        std::string_view gap = line.substr(c2 + 1);
        if (gap != "0" && gap != "1") {
            throw FormatError(file.string() + ": gap must be 0 or 1 at row " + std::to_string(row + 1));
        }
        c.gap_mask.push_back(gap == "1" ? 1 : 0);
        const double expected = static_cast<double>(row) / c.rate_hz;
        if (std::abs(t - expected) > 0.5 / c.rate_hz) {
            throw ValidationError(file.string() + ": timestamp " + std::string(line.substr(0, c1)) +
                                  " at row " + std::to_string(row + 1) + " does not match rate " +
                                  format_double(c.rate_hz) + " Hz");
        }
        ++row;
    }
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& where)
{
    if (!j.contains(key)) {
        throw FormatError(where + ": missing field '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(where + ": field '" + key + "': " + e.what());
    }
}

} // namespace

std::string_view to_string(Modality m)
{
    switch (m) {
    case Modality::emg: return "EMG";
    case Modality::acc: return "ACC";
    case Modality::gyro: return "GYRO";
    }
    return "?";
}

std::string_view to_string(Placement p)
{
    switch (p) {
    case Placement::back: return "back";
    case Placement::left_wrist: return "left_wrist";
    case Placement::right_wrist: return "right_wrist";
    case Placement::left_leg: return "left_leg";
    case Placement::right_leg: return "right_leg";
    case Placement::rollator_left: return "rollator_left";
    case Placement::rollator_right: return "rollator_right";
    }
    return "?";
}

std::string_view to_string(Axis a)
{
    switch (a) {
    case Axis::none: return "none";
    case Axis::x: return "x";
    case Axis::y: return "y";
    case Axis::z: return "z";
    }
    return "?";
}

std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }

std::string_view to_string(MovementLabel l) { return l == MovementLabel::forward ? "forward" : "turning"; }

Modality parse_modality(std::string_view s) { return parse_enum(s, kModalities, "modality"); }
Placement parse_placement(std::string_view s) { return parse_enum(s, kPlacements, "placement"); }
Axis parse_axis(std::string_view s) { return parse_enum(s, kAxes, "axis"); }
Side parse_side(std::string_view s) { return parse_enum(s, kSides, "suit_side"); }
MovementLabel parse_movement_label(std::string_view s) { return parse_enum(s, kLabels, "movement label"); }

bool is_body_segment(Placement p) { return !is_rollator(p); }
bool is_rollator(Placement p) { return p == Placement::rollator_left || p == Placement::rollator_right; }

ScenarioTag ScenarioTag::from_id(int id)
{
    if (id < 1 || id > 4) {
        throw ValidationError("scenario id must be 1..4, got " + std::to_string(id));
    }
    return ScenarioTag{.rollator = id >= 3, .suit = id % 2 == 0};
}

bool ChannelSeries::has_gaps() const
{
    return std::any_of(gap_mask.begin(), gap_mask.end(), [](std::uint8_t g) { return g != 0; });
}

const ChannelSeries* Session::find_channel(std::string_view channel_id) const
{
    for (const auto& c : channels) {
        if (c.channel_id == channel_id) {
            return &c;
        }
    }
    return nullptr;
}

std::string Session::key() const
{
    return subject.subject_id + "_sc" + std::to_string(scenario.id()) + "_r" + std::to_string(round_index);
}

ValidationReport validate_session(const Session& s)
{
    ValidationReport report;
    auto add = [&report](std::string where, std::string message) {
        report.push_back({std::move(where), std::move(message)});
    };

    if (s.subject.subject_id.empty()) {
        add("subject_id", "subject_id must be non-empty");
    }
    if (!(s.subject.height_m > 0.5 && s.subject.height_m < 2.5)) {
        add("height_m", "height_m must be in (0.5, 2.5)");
    }
    if (!(s.subject.mass_kg > 20.0 && s.subject.mass_kg < 250.0)) {
        add("mass_kg", "mass_kg must be in (20, 250)");
    }
    if (s.round_index < 1 || s.round_index > kMaxRounds) {
        add("round_index", "round_index must be in 1..10");
    }
    if (!(s.duration_s > 0.0) || !std::isfinite(s.duration_s)) {
        add("duration_s", "duration_s must be positive");
    }

    int n_emg = 0;
    int n_imu = 0;
    std::set<std::string> seen;
    for (const auto& c : s.channels) {
        const std::string& id = c.channel_id;
        if (id.empty()) {
            add("channels", "channel_id must be non-empty");
        } else if (!seen.insert(id).second) {
            add(id, "duplicate channel_id");
        }
        if (c.modality == Modality::emg) {
            ++n_emg;
            if (c.rate_hz != kEmgRateHz) {
                add(id, "EMG rate must be 2000");
            }
            if (c.axis != Axis::none) {
                add(id, "EMG axis must be none");
            }
            if (!is_body_segment(c.placement)) {
                add(id, "EMG placement must be a body segment");
            }
        } else {
            ++n_imu;
            const std::string mod(to_string(c.modality));
            if (c.rate_hz != kImuRateHz) {
                add(id, mod + " rate must be 200");
            }
            if (c.axis == Axis::none) {
                add(id, mod + " axis must be x, y or z");
            }
            if (!is_rollator(c.placement)) {
                add(id, mod + " placement must be a rollator sensor");
            }
        }
        if (c.samples.size() != c.gap_mask.size()) {
            add(id, "samples and gap_mask lengths differ");
        }
        if (c.rate_hz > 0.0 && std::abs(c.duration_s() - s.duration_s) > 1.0 / c.rate_hz) {
            add(id, "channel duration " + format_double(c.duration_s()) + " s differs from session duration " +
                        format_double(s.duration_s) + " s by more than one sample period");
        }
    }
    if (n_emg != kEmgChannelCount) {
        add("channels", "expected 13 EMG channels, found " + std::to_string(n_emg));
    }
    const int expected_imu = s.scenario.rollator ? kRollatorImuChannelCount : 0;
    if (n_imu != expected_imu) {
        add("channels", "expected " + std::to_string(expected_imu) + " rollator IMU channels, found " +
                            std::to_string(n_imu));
    }

    for (std::size_t i = 0; i < s.movements.size(); ++i) {
        const auto& m = s.movements[i];
        const std::string where = "movements[" + std::to_string(i) + "]";
        if (!(m.start_s < m.end_s)) {
            add(where, "start_s must be < end_s");
        }
        if (m.start_s < 0.0 || m.end_s > s.duration_s) {
            add(where, "segment outside [0, duration_s]");
        }
        if (i > 0) {
            const auto& prev = s.movements[i - 1];
            const std::string pair = "movements[" + std::to_string(i - 1) + "]/" + where;
            if (m.start_s < prev.start_s) {
                add(pair, "segments not sorted by start_s");
            } else if (m.start_s < prev.end_s) {
                add(pair, "segments overlap");
            }
        }
    }
    return report;
}

std::string describe(const ValidationReport& report)
{
    std::string out;
    for (const auto& v : report) {
        if (!out.empty()) {
            out += "; ";
        }
        out += v.where + ": " + v.message;
    }
    return out;
}

void save_session(const Session& s, const fs::path& dir, const json& provenance)
{
    fs::create_directories(dir);
    json manifest;
    manifest["subject_id"] = s.subject.subject_id;
    manifest["height_m"] = s.subject.height_m;
    manifest["mass_kg"] = s.subject.mass_kg;
    manifest["suit_side"] = to_string(s.subject.suit_side);
    manifest["scenario"] = {{"rollator", s.scenario.rollator}, {"suit", s.scenario.suit}};
    manifest["round_index"] = s.round_index;
    manifest["duration_s"] = s.duration_s;
    json channels = json::array();
    for (const auto& c : s.channels) {
        channels.push_back({{"channel_id", c.channel_id},
                            {"modality", to_string(c.modality)},
                            {"placement", to_string(c.placement)},
                            {"axis", to_string(c.axis)},
                            {"rate_hz", c.rate_hz},
                            {"file", channel_file_name(c)}});
        write_file(dir / channel_file_name(c), channel_csv(c));
    }
    manifest["channels"] = std::move(channels);
    json movements = json::array();
    for (const auto& m : s.movements) {
        movements.push_back({{"start_s", m.start_s}, {"end_s", m.end_s}, {"label", to_string(m.label)}});
    }
    manifest["movements"] = std::move(movements);
    if (!provenance.is_null()) {
        manifest["provenance"] = provenance;
    }
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Session load_session(const fs::path& dir)
{
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw FormatError(manifest_path.string() + ": missing manifest");
    }
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    const std::string where = manifest_path.string();

    Session s;
    s.subject.subject_id = get_field<std::string>(manifest, "subject_id", where);
    s.subject.height_m = get_field<double>(manifest, "height_m", where);
    s.subject.mass_kg = get_field<double>(manifest, "mass_kg", where);
    s.subject.suit_side = parse_side(get_field<std::string>(manifest, "suit_side", where));
    const json scenario = get_field<json>(manifest, "scenario", where);
    s.scenario.rollator = get_field<bool>(scenario, "rollator", where + ": scenario");
    s.scenario.suit = get_field<bool>(scenario, "suit", where + ": scenario");
    s.round_index = get_field<int>(manifest, "round_index", where);
    s.duration_s = get_field<double>(manifest, "duration_s", where);

    for (const json& jc : get_field<json>(manifest, "channels", where)) {
        ChannelSeries c;
        c.channel_id = get_field<std::string>(jc, "channel_id", where);
        c.modality = parse_modality(get_field<std::string>(jc, "modality", where));
        c.placement = parse_placement(get_field<std::string>(jc, "placement", where));
        c.axis = parse_axis(get_field<std::string>(jc, "axis", where));
        c.rate_hz = get_field<double>(jc, "rate_hz", where);
        if (!(c.rate_hz > 0.0)) {
            throw ValidationError(where + ": channel " + c.channel_id + " has non-positive rate_hz");
        }
        const fs::path file = dir / get_field<std::string>(jc, "file", where);
        if (!fs::exists(file)) {
            throw FormatError(where + ": channel file " + file.string() + " does not exist");
        }
        parse_channel_csv(file, c);
        s.channels.push_back(std::move(c));
    }
    for (const json& jm : get_field<json>(manifest, "movements", where)) {
        s.movements.push_back({get_field<double>(jm, "start_s", where), get_field<double>(jm, "end_s", where),
                               parse_movement_label(get_field<std::string>(jm, "label", where))});
    }

    if (auto report = validate_session(s); !report.empty()) {
        throw ValidationError(dir.string() + ": " + describe(report));
    }
    return s;
}

std::vector<fs::path> list_session_dirs(const fs::path& root)
{
    std::vector<fs::path> dirs;
    if (!fs::is_directory(root)) {
        throw FormatError(root.string() + ": not a directory");
    }
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

} // namespace gaitstream
