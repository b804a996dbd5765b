#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gaitstream/dsp.hpp"
#include "gaitstream/features.hpp"
#include "gaitstream/session.hpp"

namespace gaitstream {

enum class Task { suit, rollator, movement };

std::string_view to_string(Task t);
Task parse_task(std::string_view s); // throws InputError

// Class names, index 1 is the positive class.
std::vector<std::string> task_classes(Task t);

// EMG for suit/rollator detection, rollator IMU for movement.
ModalitySelection default_modalities(Task t);

struct PreprocessOptions {
    bool interpolate = true;
    int poly_order = 3;
    double max_gap_s = 0.1;
    bool emg_outliers = false;
    bool imu_outliers = true;
    double outlier_sigma = 5.0;
    int outlier_median_window = 5;
    FilterMode emg_filter = FilterMode::zero_phase;
    double emg_low_hz = 20.0;
    double emg_high_hz = 450.0;
    int emg_order = 4;
    bool imu_lowpass = false;
    double imu_lowpass_hz = 20.0;
    int imu_lowpass_order = 4;

    // Causal filtering only; no look-ahead steps. Matches the streaming path.
    static PreprocessOptions realtime();
    nlohmann::json to_json() const;
};

struct PreprocessReport {
    std::size_t filled_samples = 0;
    std::size_t unfilled_gaps = 0;
    std::size_t outliers = 0;
    std::vector<std::string> warnings;
};

// Gap interpolation, outlier removal and filtering per channel. Channels are
// processed in parallel; remaining gap samples are zeroed and keep their mask.
Session preprocess_session(const Session& s, const PreprocessOptions& opt, PreprocessReport* report = nullptr);
Session preprocess_session_serial(const Session& s, const PreprocessOptions& opt, PreprocessReport* report = nullptr);

struct RowMeta {
    std::string subject_id;
    int scenario = 1;
    int round_index = 1;
    std::optional<MovementLabel> movement;
    double window_start_s = 0.0;

    bool operator==(const RowMeta&) const = default;
};

class FeatureTable {
public:
    Task task = Task::movement;
    std::vector<std::string> classes;
    std::vector<std::string> schema;
    std::vector<RowMeta> meta;
    std::vector<int> labels;
    std::vector<double> values; // row-major

    std::size_t rows() const { return meta.size(); }
    std::size_t cols() const { return schema.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols(), cols()}; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    std::optional<std::size_t> column(std::string_view name) const;

    void append_row(const RowMeta& m, int label, std::span<const double> v);

    template <typename Pred>
    FeatureTable filter(Pred keep) const
    {
        FeatureTable out = empty_like();
        for (std::size_t i = 0; i < rows(); ++i) {
            if (keep(meta[i], i)) {
                out.append_row(meta[i], labels[i], row(i));
            }
        }
        return out;
    }
    FeatureTable select_rows(std::span<const std::size_t> idx) const;
    FeatureTable select_columns(std::span<const std::string> names) const; // throws InputError
    FeatureTable empty_like() const;

    // Appends rows; schemas and classes must match.
    void extend(const FeatureTable& other);

    std::vector<std::string> subjects() const; // sorted unique
    std::vector<int> rounds() const;           // sorted unique

    bool operator==(const FeatureTable&) const = default;
};

struct DatasetOptions {
    WindowSpec windows;
    double ssc_threshold = 0.0;
    std::optional<ModalitySelection> modalities; // default_modalities(task) when unset
};

struct BuildReport {
    std::size_t unlabeled_windows = 0;
    std::size_t gap_windows = 0;
    std::size_t skipped_sessions = 0; // sessions with no channel of a selected modality
};

// Majority time-overlap with the movement segments; exact ties go to
// turning. nullopt when the window overlaps no segment.
std::optional<MovementLabel> majority_label(std::span<const MovementSegment> movements, double start_s, double end_s);

// Sessions must already be preprocessed.
FeatureTable build_dataset(std::span<const Session> sessions, Task task, const DatasetOptions& opt = {},
                           BuildReport* report = nullptr);

// Rows of one session appended to `table`, creating the schema on first use.
void append_session_rows(FeatureTable& table, const Session& s, const DatasetOptions& opt, BuildReport* report);

// CSV: optional "# <json>" provenance line, then header of feature columns
// followed by subject_id,scenario,round_index,movement_label,window_start_s,label.
void write_feature_csv(const FeatureTable& t, const std::filesystem::path& path,
                       const nlohmann::json& provenance = nullptr);
FeatureTable read_feature_csv(const std::filesystem::path& path);

} // namespace gaitstream
