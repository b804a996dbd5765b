#include "gaitstream/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "gaitstream/errors.hpp"

namespace gaitstream {

namespace {

std::size_t to_samples(double ms, double rate_hz) { return static_cast<std::size_t>(std::llround(ms * rate_hz / 1000.0)); }

AxisFeatures axis_features(std::span<const double> x, double rate_hz)
{
    const std::size_t n = x.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double v : x) {
        sum += v;
        sum_sq += v * v;
    }
    AxisFeatures f;
    f.mean = sum * inv_n;
    f.rms = std::sqrt(sum_sq * inv_n);
    double var = 0.0;
    for (double v : x) {
        const double d = v - f.mean;
        var += d * d;
    }
    f.std = std::sqrt(var * inv_n);
    if (n >= 2) {
        double jerk_sq = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double d = (x[i + 1] - x[i]) * rate_hz;
            jerk_sq += d * d;
        }
        f.jerk = std::sqrt(jerk_sq / static_cast<double>(n - 1));
    }
    return f;
}

} // namespace

std::size_t WindowSpec::window_samples(double rate_hz) const
{
    const std::size_t w = to_samples(window_ms, rate_hz);
    if (w < 4) {
        throw InputError("window of " + std::to_string(window_ms) + " ms at " + std::to_string(rate_hz) +
                         " Hz is shorter than 4 samples");
    }
    return w;
}

std::size_t WindowSpec::hop_samples(double rate_hz) const
{
    const std::size_t s = to_samples(hop_ms, rate_hz);
    if (s < 1) {
        throw InputError("hop must be at least one sample");
    }
    return s;
}

std::size_t window_count(std::size_t length, std::size_t window, std::size_t hop)
{
    return length < window ? 0 : (length - window) / hop + 1;
}

double window_start_s(std::size_t index, std::size_t hop, double rate_hz)
{
    return static_cast<double>(index * hop) / rate_hz;
}

std::vector<Window> segment_windows(const ChannelSeries& c, double window_ms, double hop_ms)
{
    if (c.has_gaps()) {
        throw InputError("channel " + c.channel_id + " has gaps; interpolate before windowing");
    }
    const WindowSpec spec{window_ms, hop_ms};
    const std::size_t w = spec.window_samples(c.rate_hz);
    const std::size_t s = spec.hop_samples(c.rate_hz);
    const std::size_t n = window_count(c.samples.size(), w, s);
    std::vector<Window> out;
    out.reserve(n);
    const std::span<const double> all(c.samples);
    for (std::size_t k = 0; k < n; ++k) {
        out.push_back({c.channel_id, k, window_start_s(k, s, c.rate_hz), all.subspan(k * s, w), c.rate_hz});
    }
    return out;
}

EmgFeatures extract_emg_features(std::span<const double> w, double ssc_threshold)
{
    const std::size_t n = w.size();
    if (n < 3) {
        throw InputError("EMG window needs at least 3 samples");
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double sum = 0.0;
    double sum_sq = 0.0;
    double sum_abs = 0.0;
    for (double v : w) {
        sum += v;
        sum_sq += v * v;
        sum_abs += std::abs(v);
    }
    const double mean = sum * inv_n;
    double var = 0.0;
    for (double v : w) {
        const double d = v - mean;
        var += d * d;
    }
    int ssc = 0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if ((w[i] - w[i - 1]) * (w[i] - w[i + 1]) > ssc_threshold) {
            ++ssc;
        }
    }
    return {std::sqrt(sum_sq * inv_n), var * inv_n, sum_abs * inv_n, static_cast<double>(ssc)};
}

ImuFeatures extract_imu_features(std::span<const double> x, std::span<const double> y, std::span<const double> z,
                                 double rate_hz)
{
    if (x.size() != y.size() || x.size() != z.size()) {
        throw AlignmentError("IMU axis windows differ in length (" + std::to_string(x.size()) + ", " +
                             std::to_string(y.size()) + ", " + std::to_string(z.size()) + ")");
    }
    if (x.empty()) {
        throw AlignmentError("empty IMU window");
    }
    ImuFeatures f;
    f.axes[0] = axis_features(x, rate_hz);
    f.axes[1] = axis_features(y, rate_hz);
    f.axes[2] = axis_features(z, rate_hz);
    double sma = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sma += std::abs(x[i]) + std::abs(y[i]) + std::abs(z[i]);
    }
    f.sma = sma / static_cast<double>(x.size());
    return f;
}

std::vector<EmgFeatures> emg_feature_rows(std::span<const double> samples, std::size_t window, std::size_t hop,
                                          std::size_t count, double ssc_threshold)
{
    std::vector<EmgFeatures> rows(count);
    const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        rows[uk] = extract_emg_features(samples.subspan(uk * hop, window), ssc_threshold);
    }
    return rows;
}

std::vector<EmgFeatures> emg_feature_rows_serial(std::span<const double> samples, std::size_t window,
                                                 std::size_t hop, std::size_t count, double ssc_threshold)
{
    std::vector<EmgFeatures> rows(count);
    for (std::size_t k = 0; k < count; ++k) {
        rows[k] = extract_emg_features(samples.subspan(k * hop, window), ssc_threshold);
    }
    return rows;
}

std::vector<ImuFeatures> imu_feature_rows(std::span<const double> x, std::span<const double> y,
                                          std::span<const double> z, double rate_hz, std::size_t window,
                                          std::size_t hop, std::size_t count)
{
    std::vector<ImuFeatures> rows(count);
    const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const auto off = static_cast<std::size_t>(k) * hop;
        rows[static_cast<std::size_t>(k)] =
            extract_imu_features(x.subspan(off, window), y.subspan(off, window), z.subspan(off, window), rate_hz);
    }
    return rows;
}

std::vector<ImuFeatures> imu_feature_rows_serial(std::span<const double> x, std::span<const double> y,
                                                 std::span<const double> z, double rate_hz, std::size_t window,
                                                 std::size_t hop, std::size_t count)
{
    std::vector<ImuFeatures> rows(count);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t off = k * hop;
        rows[k] = extract_imu_features(x.subspan(off, window), y.subspan(off, window), z.subspan(off, window), rate_hz);
    }
    return rows;
}

void write_row(const EmgFeatures& f, double* out)
{
    out[0] = f.rms;
    out[1] = f.variance;
    out[2] = f.mav;
    out[3] = f.ssc;
}

void write_row(const ImuFeatures& f, double* out)
{
    for (std::size_t a = 0; a < 3; ++a) {
        out[4 * a + 0] = f.axes[a].rms;
        out[4 * a + 1] = f.axes[a].mean;
        out[4 * a + 2] = f.axes[a].std;
        out[4 * a + 3] = f.axes[a].jerk;
    }
    out[12] = f.sma;
}

std::string imu_group_of(std::string_view channel_id)
{
    if (channel_id.size() < 3) {
        return {};
    }
    const auto tail = channel_id.substr(channel_id.size() - 2);
    if (tail == "_x" || tail == "_y" || tail == "_z") {
        return std::string(channel_id.substr(0, channel_id.size() - 2));
    }
    return {};
}

FeatureLayout::FeatureLayout(std::span<const ChannelInfo> channels, ModalitySelection selection)
{
    std::map<std::string, std::size_t> group_pos;
    std::vector<std::array<bool, 3>> have;
    for (const auto& c : channels) {
        if (c.modality == Modality::emg) {
            if (selection.emg) {
                emg_.push_back(c);
            }
            continue;
        }
        if (!selection.imu) {
            continue;
        }
        const std::string group = imu_group_of(c.channel_id);
        if (group.empty()) {
            throw InputError("IMU channel id '" + c.channel_id + "' must end in _x, _y or _z");
        }
        auto [it, inserted] = group_pos.emplace(group, imu_.size());
        if (inserted) {
            imu_.push_back({group, {}, c.rate_hz});
            have.push_back({false, false, false});
        }
        const std::size_t axis = static_cast<std::size_t>(c.channel_id.back() - 'x');
        imu_[it->second].channel_ids[axis] = c.channel_id;
        have[it->second][axis] = true;
        if (imu_[it->second].rate_hz != c.rate_hz) {
            throw InputError("IMU group " + group + " mixes sample rates");
        }
    }
    for (std::size_t g = 0; g < imu_.size(); ++g) {
        if (!(have[g][0] && have[g][1] && have[g][2])) {
            throw InputError("IMU group " + imu_[g].group_id + " lacks one of its x/y/z channels");
        }
    }

    for (const auto& c : emg_) {
        for (const char* f : kEmgFeatureNames) {
            names_.push_back(c.channel_id + "." + f);
        }
    }
    for (const auto& g : imu_) {
        for (const auto& ch : g.channel_ids) {
            for (const char* f : kAxisFeatureNames) {
                names_.push_back(ch + "." + f);
            }
        }
        names_.push_back(g.group_id + ".sma");
    }
}

std::vector<std::string> FeatureLayout::channels_for(std::span<const std::string> feature_names) const
{
    std::vector<std::string> out;
    auto add = [&out](const std::string& ch) {
        if (std::find(out.begin(), out.end(), ch) == out.end()) {
            out.push_back(ch);
        }
    };
    for (const auto& name : feature_names) {
        const auto dot = name.rfind('.');
        const std::string source = name.substr(0, dot);
        bool found = false;
        for (const auto& c : emg_) {
            if (c.channel_id == source) {
                add(c.channel_id);
                found = true;
            }
        }
        for (const auto& g : imu_) {
            const bool match = g.group_id == source ||
                               std::find(g.channel_ids.begin(), g.channel_ids.end(), source) != g.channel_ids.end();
            if (match) {
                for (const auto& ch : g.channel_ids) {
                    add(ch);
                }
                found = true;
            }
        }
        if (!found) {
            throw ConfigError("feature '" + name + "' needs channel '" + source + "' which is not available");
        }
    }
    return out;
}

std::vector<ChannelInfo> channel_infos(const Session& s)
{
    std::vector<ChannelInfo> out;
    out.reserve(s.channels.size());
    for (const auto& c : s.channels) {
        out.push_back({c.channel_id, c.modality, c.rate_hz});
    }
    return out;
}

SessionFeatures featurize_session(const Session& s, const FeatureLayout& layout, const WindowSpec& spec,
                                  double ssc_threshold)
{
    SessionFeatures out;
    out.names = layout.names();
    if (layout.empty()) {
        return out;
    }
    auto channel = [&s](const std::string& id) -> const ChannelSeries& {
        const ChannelSeries* c = s.find_channel(id);
        if (c == nullptr) {
            throw InputError("session " + s.key() + " lacks channel '" + id + "'");
        }
        return *c;
    };

    // Common window count and gap flags across every selected channel.
    std::size_t count = std::numeric_limits<std::size_t>::max();
    std::vector<const ChannelSeries*> used;
    for (const auto& c : layout.emg_channels()) {
        used.push_back(&channel(c.channel_id));
    }
    for (const auto& g : layout.imu_groups()) {
        for (const auto& id : g.channel_ids) {
            used.push_back(&channel(id));
        }
    }
    for (const ChannelSeries* c : used) {
        count = std::min(count, window_count(c->samples.size(), spec.window_samples(c->rate_hz),
                                             spec.hop_samples(c->rate_hz)));
    }
    std::vector<std::uint8_t> bad(count, 0);
    for (const ChannelSeries* c : used) {
        if (!c->has_gaps()) {
            continue;
        }
        const std::size_t w = spec.window_samples(c->rate_hz);
        const std::size_t h = spec.hop_samples(c->rate_hz);
        for (std::size_t k = 0; k < count; ++k) {
            const auto first = c->gap_mask.begin() + static_cast<std::ptrdiff_t>(k * h);
            if (std::any_of(first, first + static_cast<std::ptrdiff_t>(w), [](std::uint8_t g) { return g != 0; })) {
                bad[k] = 1;
            }
        }
    }

    const std::size_t width = layout.size();
    std::vector<double> full(count * width, 0.0);
    std::size_t col = 0;
    for (const auto& info : layout.emg_channels()) {
        const ChannelSeries& c = channel(info.channel_id);
        const auto rows = emg_feature_rows(c.samples, spec.window_samples(c.rate_hz), spec.hop_samples(c.rate_hz),
                                           count, ssc_threshold);
        for (std::size_t k = 0; k < count; ++k) {
            write_row(rows[k], &full[k * width + col]);
        }
        col += kEmgWidth;
    }
    for (const auto& g : layout.imu_groups()) {
        const ChannelSeries& cx = channel(g.channel_ids[0]);
        const ChannelSeries& cy = channel(g.channel_ids[1]);
        const ChannelSeries& cz = channel(g.channel_ids[2]);
        const auto rows = imu_feature_rows(cx.samples, cy.samples, cz.samples, cx.rate_hz,
                                           spec.window_samples(cx.rate_hz), spec.hop_samples(cx.rate_hz), count);
        for (std::size_t k = 0; k < count; ++k) {
            write_row(rows[k], &full[k * width + col]);
        }
        col += kImuGroupWidth;
    }

    const double rate0 = used.front()->rate_hz;
    const std::size_t hop0 = spec.hop_samples(rate0);
    for (std::size_t k = 0; k < count; ++k) {
        if (bad[k]) {
            ++out.dropped_gap_windows;
            continue;
        }
        out.window_index.push_back(k);
        out.starts_s.push_back(window_start_s(k, hop0, rate0));
        out.values.insert(out.values.end(), full.begin() + static_cast<std::ptrdiff_t>(k * width),
                          full.begin() + static_cast<std::ptrdiff_t>((k + 1) * width));
    }
    return out;
}

const std::vector<double>* IntensitySeries::find(Placement p) const
{
    for (const auto& [placement, values] : series) {
        if (placement == p) {
            return &values;
        }
    }
    return nullptr;
}

IntensitySeries segment_intensity(const Session& s, double window_ms, double hop_ms)
{
    const WindowSpec spec{window_ms, hop_ms};
    IntensitySeries out;
    constexpr std::array kSegments{Placement::back, Placement::left_wrist, Placement::right_wrist,
                                   Placement::left_leg, Placement::right_leg};
    std::size_t count = std::numeric_limits<std::size_t>::max();
    for (const auto& c : s.channels) {
        if (c.modality == Modality::emg) {
            count = std::min(count, window_count(c.samples.size(), spec.window_samples(c.rate_hz),
                                                 spec.hop_samples(c.rate_hz)));
        }
    }
    if (count == std::numeric_limits<std::size_t>::max()) {
        count = 0;
    }
    for (Placement p : kSegments) {
        std::vector<double> acc(count, 0.0);
        int n = 0;
        for (const auto& c : s.channels) {
            if (c.modality != Modality::emg || c.placement != p) {
                continue;
            }
            const auto rows = emg_feature_rows(c.samples, spec.window_samples(c.rate_hz),
                                               spec.hop_samples(c.rate_hz), count, 0.0);
            for (std::size_t k = 0; k < count; ++k) {
                acc[k] += rows[k].rms;
            }
            ++n;
        }
        if (n == 0) {
            out.warnings.push_back("no EMG channels at placement " + std::string(to_string(p)));
            continue;
        }
        for (double& v : acc) {
            v /= n;
        }
        out.series.emplace_back(p, std::move(acc));
    }
    const std::size_t hop = spec.hop_samples(kEmgRateHz);
    for (std::size_t k = 0; k < count; ++k) {
        out.starts_s.push_back(window_start_s(k, hop, kEmgRateHz));
    }
    return out;
}

} // namespace gaitstream
