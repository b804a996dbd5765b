#include "gaitstream/stream.hpp"

#include <algorithm>
#include <cmath>

#include "gaitstream/errors.hpp"
#include "gaitstream/wire.hpp"

namespace gaitstream {

namespace {

constexpr std::size_t kMaxPendingGroups = 64;
constexpr std::size_t kMaxZeroFillSeconds = 60;

// Channel ids a model reads, in first-use order. "<group>.sma" and any axis
// feature pull in the whole x/y/z group.
std::vector<std::string> channels_needed(const std::vector<std::string>& features)
{
    std::vector<std::string> out;
    auto add = [&out](const std::string& ch) {
        if (std::find(out.begin(), out.end(), ch) == out.end()) {
            out.push_back(ch);
        }
    };
    for (const auto& f : features) {
        const auto dot = f.rfind('.');
        if (dot == std::string::npos) {
            throw ConfigError("model feature '" + f + "' does not name a channel");
        }
        const std::string source = f.substr(0, dot);
        std::string group = imu_group_of(source);
        if (f.compare(dot + 1, std::string::npos, "sma") == 0) {
            group = source;
        }
        if (group.empty()) {
            add(source);
        } else {
            for (const char* axis : {"_x", "_y", "_z"}) {
                add(group + axis);
            }
        }
    }
    return out;
}

} // namespace

StreamState::StreamState(std::span<const ChannelInfo> channels, const PreprocessOptions& pre, const WindowSpec& spec)
    : infos_(channels.begin(), channels.end())
{
    std::optional<FilterCoefficients> emg, imu;
    for (const auto& info : channels) {
        if (channels_.contains(info.channel_id)) {
            throw ConfigError("channel '" + info.channel_id + "' registered twice");
        }
        if (!(info.rate_hz > 0.0)) {
            throw ConfigError("channel '" + info.channel_id + "' needs a positive rate");
        }
        Channel c;
        c.info = info;
        if (info.modality == Modality::emg) {
            if (!emg) {
                emg = design_bandpass(pre.emg_low_hz, pre.emg_high_hz, pre.emg_order, info.rate_hz);
            }
            c.filter.emplace(*emg);
        } else if (pre.imu_lowpass) {
            if (!imu) {
                imu = design_lowpass(pre.imu_lowpass_hz, pre.imu_lowpass_order, info.rate_hz);
            }
            c.filter.emplace(*imu);
        }
        c.window = spec.window_samples(info.rate_hz);
        c.hop = spec.hop_samples(info.rate_hz);
        c.ring.assign(c.window, 0.0);
        channels_.emplace(info.channel_id, std::move(c));
    }
}

IngestResult StreamState::ingest(const StreamFrame& f)
{
    auto it = channels_.find(f.channel_id);
    if (it == channels_.end()) {
        throw ProtocolError("unknown channel '" + f.channel_id + "'");
    }
    Channel& c = it->second;
    IngestResult r;
    const auto reject = [&](std::string why) {
        ++rejected_;
        r.accepted = false;
        r.reason = std::move(why);
        return r;
    };
    if (c.last_seq && f.seq <= *c.last_seq) {
        return reject("seq " + std::to_string(f.seq) + " not after " + std::to_string(*c.last_seq));
    }
    if (f.values.empty()) {
        return reject("empty frame");
    }
    if (!std::all_of(f.values.begin(), f.values.end(), [](double v) { return std::isfinite(v); })) {
        return reject("non-finite sample value");
    }
    if (!std::isfinite(f.t_s) || f.t_s < 0.0) {
        return reject("invalid timestamp");
    }
    const auto first = static_cast<std::size_t>(std::llround(f.t_s * c.info.rate_hz));
    if (c.last_seq && first < c.next) {
        return reject("timestamp overlaps samples already received");
    }
    if (!c.last_seq) {
        if (c.filter) {
            c.filter->reset();
        }
        c.contiguous = 0;
        c.next = first;
    } else if (first != c.next) {
        // Missing samples count as zeros for the filter, the same as the
        // offline path; windows touching the gap are never emitted. Very long
        // outages restart the filter instead.
        ++resets_;
        const std::size_t missing = first - c.next;
        if (c.filter) {
            if (missing > kMaxZeroFillSeconds * static_cast<std::size_t>(c.info.rate_hz)) {
                c.filter->reset();
            } else {
                for (std::size_t q = 0; q < missing; ++q) {
                    c.filter->process(0.0);
                }
            }
        }
        c.contiguous = 0;
        c.next = first;
    }
    c.last_seq = f.seq;
    for (double v : f.values) {
        const double y = c.filter ? c.filter->process(v) : v;
        c.ring[c.head] = y;
        c.head = (c.head + 1) % c.window;
        ++c.contiguous;
        const std::size_t n = ++c.next;
        if (c.contiguous >= c.window && n >= c.window && (n - c.window) % c.hop == 0) {
            CompletedWindow w;
            w.channel_id = c.info.channel_id;
            w.index = (n - c.window) / c.hop;
            w.start_s = window_start_s(w.index, c.hop, c.info.rate_hz);
            w.samples.reserve(c.window);
            for (std::size_t q = 0; q < c.window; ++q) {
                w.samples.push_back(c.ring[(c.head + q) % c.window]);
            }
            r.windows.push_back(std::move(w));
        }
    }
    return r;
}

OnlineClassifier::OnlineClassifier(const GBDTModel& model, std::span<const ChannelInfo> channels,
                                   const WindowSpec& spec, double ssc_threshold)
    : model_(model), spec_(spec), ssc_threshold_(ssc_threshold)
{
    required_ = channels_needed(model.feature_names);
    std::vector<ChannelInfo> needed;
    for (const auto& id : required_) {
        const auto it = std::find_if(channels.begin(), channels.end(),
                                     [&](const ChannelInfo& c) { return c.channel_id == id; });
        if (it == channels.end()) {
            throw ConfigError("model needs channel '" + id + "', which the stream does not register");
        }
        needed.push_back(*it);
    }
    layout_ = FeatureLayout(needed, ModalitySelection{true, true});
    const auto& names = layout_.names();
    for (const auto& f : model.feature_names) {
        const auto pos = std::find(names.begin(), names.end(), f);
        if (pos == names.end()) {
            throw ConfigError("model feature '" + f + "' cannot be computed from the registered channels");
        }
        to_model_.push_back(static_cast<std::size_t>(pos - names.begin()));
    }
}

std::optional<Prediction> OnlineClassifier::push(const CompletedWindow& w)
{
    if (std::find(required_.begin(), required_.end(), w.channel_id) == required_.end()) {
        return std::nullopt;
    }
    auto& group = pending_[w.index];
    group[w.channel_id] = w.samples;
    if (group.size() < required_.size()) {
        while (pending_.size() > kMaxPendingGroups) {
            pending_.erase(pending_.begin());
        }
        return std::nullopt;
    }
    std::vector<double> full(layout_.size(), 0.0);
    std::size_t col = 0;
    for (const auto& c : layout_.emg_channels()) {
        write_row(extract_emg_features(group.at(c.channel_id), ssc_threshold_), &full[col]);
        col += kEmgWidth;
    }
    for (const auto& g : layout_.imu_groups()) {
        write_row(extract_imu_features(group.at(g.channel_ids[0]), group.at(g.channel_ids[1]),
                                       group.at(g.channel_ids[2]), g.rate_hz),
                  &full[col]);
        col += kImuGroupWidth;
    }
    Prediction p;
    p.index = w.index;
    p.start_s = w.start_s;
    p.end_s = w.start_s + spec_.window_ms / 1000.0;
    p.features.reserve(to_model_.size());
    for (std::size_t c : to_model_) {
        p.features.push_back(full[c]);
    }
    const auto [p0, p1] = model_.predict_proba(p.features);
    p.label = p1 > p0 ? 1 : 0;
    p.confidence = p.label == 1 ? p1 : p0;
    p.class_name = model_.classes.at(static_cast<std::size_t>(p.label));
    pending_.erase(pending_.begin(), pending_.upper_bound(w.index));
    return p;
}

void AlertEvaluator::observe_proximity(double meters)
{
    proximity_ = meters;
    if (!(meters < policy_.proximity_threshold_m)) {
        armed_ = true;
    }
}

std::optional<AlertEvent> AlertEvaluator::update(bool forward, double confidence, double window_start_s,
                                                 double window_end_s)
{
    if (!forward) {
        streak_ = 0;
        armed_ = true;
        return std::nullopt;
    }
    if (confidence < policy_.min_confidence) {
        streak_ = 0;
        return std::nullopt;
    }
    ++streak_;
    if (streak_ >= policy_.k_consecutive && armed_ && proximity_ && *proximity_ < policy_.proximity_threshold_m) {
        armed_ = false;
        return AlertEvent{window_end_s, "collision_risk", confidence, window_start_s, window_end_s};
    }
    return std::nullopt;
}

StreamService::StreamService(ServiceOptions opt, std::optional<GBDTModel> model,
                             std::function<void(const std::string&)> emit, ModelLoader loader)
    : opt_(std::move(opt)), model_(std::move(model)), emit_(std::move(emit)), loader_(std::move(loader)),
      alerts_(opt_.policy)
{
}

void StreamService::start(const Handshake& h)
{
    if (!model_ && h.model) {
        if (!loader_) {
            throw ConfigError("handshake names a model but no loader is configured");
        }
        model_ = loader_(*h.model);
    }
    state_.emplace(h.channels, opt_.pre, opt_.windows);
    if (model_) {
        classifier_.emplace(*model_, h.channels, opt_.windows, opt_.ssc_threshold);
        movement_ = std::find(model_->classes.begin(), model_->classes.end(), "forward") != model_->classes.end();
    }
}

void StreamService::handle_line(std::string_view line)
{
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
        return;
    }
    if (!state_) {
        start(parse_handshake(line));
        return;
    }
    const StreamFrame f = parse_frame(line);
    ++stats_.frames;
    if (f.proximity_m) {
        alerts_.observe_proximity(*f.proximity_m);
    }
    IngestResult r = state_->ingest(f);
    if (!r.accepted) {
        ++stats_.rejected;
        return;
    }
    for (const auto& w : r.windows) {
        ++stats_.windows;
        if (!classifier_) {
            continue;
        }
        auto p = classifier_->push(w);
        if (!p) {
            continue;
        }
        ++stats_.predictions;
        if (opt_.emit_predictions) {
            emit_(encode_prediction(*p));
        }
        if (movement_) {
            if (auto a = alerts_.update(p->class_name == "forward", p->confidence, p->start_s, p->end_s)) {
                ++stats_.alerts;
                emit_(encode_alert(*a));
            }
        }
        if (keep_) {
            predictions_.push_back(std::move(*p));
        }
    }
}

} // namespace gaitstream
