#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gaitstream/dataset.hpp"
#include "gaitstream/dsp.hpp"
#include "gaitstream/features.hpp"
#include "gaitstream/gbdt.hpp"

namespace gaitstream {

struct StreamFrame {
    std::int64_t seq = 0;
    double t_s = 0.0; // time of the first sample in the frame
    std::string channel_id;
    std::vector<double> values;
    std::optional<double> proximity_m;

    bool operator==(const StreamFrame&) const = default;
};

struct Handshake {
    std::vector<ChannelInfo> channels;
    std::optional<std::string> model;
};

struct CompletedWindow {
    std::string channel_id;
    std::size_t index = 0; // k, window covers samples [k*S, k*S + W)
    double start_s = 0.0;
    std::vector<double> samples;
};

struct IngestResult {
    bool accepted = true;
    std::string reason; // why the frame was rejected
    std::vector<CompletedWindow> windows;
};

// Per-connection ingestion state: causal filters and a W-sample ring buffer
// per channel. Windows stay aligned to t = 0 so they match offline windows.
class StreamState {
public:
    // Filtering follows `pre` (the causal preset is the online contract).
    StreamState(std::span<const ChannelInfo> channels, const PreprocessOptions& pre, const WindowSpec& spec);

    // Throws ProtocolError for an unregistered channel. Out-of-order frames
    // and non-finite values are rejected (counted) without changing state.
    IngestResult ingest(const StreamFrame& f);

    std::size_t rejected() const { return rejected_; }
    std::size_t resets() const { return resets_; }
    const std::vector<ChannelInfo>& channels() const { return infos_; }

private:
    struct Channel {
        ChannelInfo info;
        std::optional<FilterState> filter;
        std::size_t window = 0;
        std::size_t hop = 0;
        std::vector<double> ring;
        std::size_t head = 0;       // next write position
        std::size_t next = 0;       // global index of the next expected sample
        std::size_t contiguous = 0; // samples since the last reset
        std::optional<std::int64_t> last_seq;
    };

    std::vector<ChannelInfo> infos_;
    std::map<std::string, Channel, std::less<>> channels_;
    std::size_t rejected_ = 0;
    std::size_t resets_ = 0;
};

struct Prediction {
    std::size_t index = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    int label = 0;
    std::string class_name;
    double confidence = 0.0; // probability of the predicted class
    std::vector<double> features; // in model feature order
};

// Groups per-channel windows by index and classifies each complete group
// with the same feature code the offline dataset builder uses.
class OnlineClassifier {
public:
    // Throws ConfigError naming a model channel that is not registered.
    OnlineClassifier(const GBDTModel& model, std::span<const ChannelInfo> channels, const WindowSpec& spec,
                     double ssc_threshold = 0.0);

    std::optional<Prediction> push(const CompletedWindow& w);
    const std::vector<std::string>& required_channels() const { return required_; }

private:
    const GBDTModel& model_;
    FeatureLayout layout_;
    std::vector<std::size_t> to_model_; // layout column -> model column
    std::vector<std::string> required_;
    WindowSpec spec_;
    double ssc_threshold_;
    std::map<std::size_t, std::map<std::string, std::vector<double>>> pending_;
};

struct AlertPolicy {
    int k_consecutive = 5;
    double min_confidence = 0.7;
    double proximity_threshold_m = 1.0;
};

struct AlertEvent {
    double t_s = 0.0;
    std::string kind = "collision_risk";
    double confidence = 0.0;
    double window_start_s = 0.0;
    double window_end_s = 0.0;

    bool operator==(const AlertEvent&) const = default;
};

// Alerts when the last k predictions are confident "forward" while the
// latest proximity is below the threshold. One alert per episode; re-armed
// by a non-forward prediction or by proximity recovering.
class AlertEvaluator {
public:
    explicit AlertEvaluator(AlertPolicy p = {}) : policy_(p) {}

    void observe_proximity(double meters);
    std::optional<AlertEvent> update(bool forward, double confidence, double window_start_s, double window_end_s);

private:
    AlertPolicy policy_;
    int streak_ = 0;
    bool armed_ = true;
    std::optional<double> proximity_;
};

struct ServiceOptions {
    PreprocessOptions pre = PreprocessOptions::realtime();
    WindowSpec windows;
    double ssc_threshold = 0.0;
    AlertPolicy policy;
    bool emit_predictions = false;
};

struct ServiceStats {
    std::size_t frames = 0;
    std::size_t rejected = 0;
    std::size_t windows = 0;
    std::size_t predictions = 0;
    std::size_t alerts = 0;
};

// Line-oriented service: first line is the handshake, every further line a
// frame. Output lines (alerts, optionally predictions) go to `emit`.
class StreamService {
public:
    using ModelLoader = std::function<GBDTModel(const std::string&)>;

    StreamService(ServiceOptions opt, std::optional<GBDTModel> model, std::function<void(const std::string&)> emit,
                  ModelLoader loader = {});

    // Throws ProtocolError/ConfigError on fatal input.
    void handle_line(std::string_view line);
    const ServiceStats& stats() const { return stats_; }
    bool started() const { return state_.has_value(); }
    const std::vector<Prediction>& predictions() const { return predictions_; }
    void keep_predictions(bool on) { keep_ = on; }

private:
    void start(const Handshake& h);

    ServiceOptions opt_;
    std::optional<GBDTModel> model_;
    std::function<void(const std::string&)> emit_;
    ModelLoader loader_;
    std::optional<StreamState> state_;
    std::optional<OnlineClassifier> classifier_;
    AlertEvaluator alerts_;
    bool movement_ = false;
    bool keep_ = false;
    std::vector<Prediction> predictions_;
    ServiceStats stats_;
};

} // namespace gaitstream
