#include "gaitstream/dataset.hpp"

#include <algorithm>
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

constexpr std::array kLabelColumns{"subject_id", "scenario", "round_index", "movement_label", "window_start_s",
                                   "label"};

struct ChannelFilters {
    FilterCoefficients emg;
    std::optional<FilterCoefficients> imu;
};

ChannelFilters make_filters(const PreprocessOptions& opt)
{
    ChannelFilters f{design_bandpass(opt.emg_low_hz, opt.emg_high_hz, opt.emg_order, kEmgRateHz), std::nullopt};
    if (opt.imu_lowpass) {
        f.imu = design_lowpass(opt.imu_lowpass_hz, opt.imu_lowpass_order, kImuRateHz);
    }
    return f;
}

PreprocessReport preprocess_channel(ChannelSeries& c, const PreprocessOptions& opt, const ChannelFilters& filters)
{
    PreprocessReport rep;
    const bool emg = c.modality == Modality::emg;
    if (opt.interpolate && c.has_gaps()) {
        const auto max_gap = static_cast<std::size_t>(std::llround(opt.max_gap_s * c.rate_hz));
        const std::size_t before = static_cast<std::size_t>(std::count(c.gap_mask.begin(), c.gap_mask.end(), 1));
        auto r = interpolate_gaps(c.samples, c.gap_mask, opt.poly_order, max_gap);
        c.samples = std::move(r.samples);
        c.gap_mask = std::move(r.gap_mask);
        rep.unfilled_gaps += r.unfilled.size();
        rep.filled_samples +=
            before - static_cast<std::size_t>(std::count(c.gap_mask.begin(), c.gap_mask.end(), 1));
    }
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
        if (c.gap_mask[i]) {
            c.samples[i] = 0.0;
        }
    }
    const bool outliers = emg ? opt.emg_outliers : opt.imu_outliers;
    if (outliers && c.samples.size() >= 16) {
        // Robust statistics on the residual around a running median, so sustained
        // rotations are not mistaken for outliers.
        std::vector<double> base(c.samples.size(), 0.0);
        std::vector<double> resid = c.samples;
        if (opt.outlier_median_window > 1) {
            base = running_median(c.samples, static_cast<std::size_t>(opt.outlier_median_window), true);
            for (std::size_t i = 0; i < resid.size(); ++i) {
                resid[i] -= base[i];
            }
        }
        auto r = remove_outliers(resid, opt.outlier_sigma, c.gap_mask);
        rep.outliers += static_cast<std::size_t>(std::count(r.outlier_mask.begin(), r.outlier_mask.end(), 1));
        if (r.degenerate_scale) {
            rep.warnings.push_back("DegenerateScaleWarning: channel " + c.channel_id +
                                   " has zero MAD; mean absolute deviation used");
        }
        for (std::size_t i = 0; i < resid.size(); ++i) {
            c.samples[i] = base[i] + r.samples[i];
        }
    }
    if (emg) {
        c.samples = apply_filter(c.samples, filters.emg, opt.emg_filter);
    } else if (filters.imu) {
        c.samples = apply_filter(c.samples, *filters.imu, opt.emg_filter);
    }
    return rep;
}

void merge(PreprocessReport& into, const PreprocessReport& r)
{
    into.filled_samples += r.filled_samples;
    into.unfilled_gaps += r.unfilled_gaps;
    into.outliers += r.outliers;
    into.warnings.insert(into.warnings.end(), r.warnings.begin(), r.warnings.end());
}

std::vector<std::string> split_csv(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        auto comma = line.find(',', pos);
        out.emplace_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
        if (comma == std::string_view::npos) {
            break;
        }
        pos = comma + 1;
    }
    return out;
}

} // namespace

std::string_view to_string(Task t)
{
    switch (t) {
    case Task::suit: return "suit";
    case Task::rollator: return "rollator";
    case Task::movement: return "movement";
    }
    return "?";
}

Task parse_task(std::string_view s)
{
    for (Task t : {Task::suit, Task::rollator, Task::movement}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    throw InputError("unknown task '" + std::string(s) + "' (expected suit, rollator or movement)");
}

std::vector<std::string> task_classes(Task t)
{
    switch (t) {
    case Task::suit: return {"no_suit", "suit"};
    case Task::rollator: return {"no_rollator", "rollator"};
    case Task::movement: return {"forward", "turning"};
    }
    return {};
}

ModalitySelection default_modalities(Task t)
{
    return t == Task::movement ? ModalitySelection{false, true} : ModalitySelection{true, false};
}

PreprocessOptions PreprocessOptions::realtime()
{
    PreprocessOptions o;
    o.interpolate = false;
    o.emg_outliers = false;
    o.imu_outliers = false;
    o.emg_filter = FilterMode::causal;
    return o;
}

json PreprocessOptions::to_json() const
{
    return {{"interpolate", interpolate},
            {"poly_order", poly_order},
            {"max_gap_s", max_gap_s},
            {"emg_outliers", emg_outliers},
            {"imu_outliers", imu_outliers},
            {"outlier_sigma", outlier_sigma},
            {"outlier_median_window", outlier_median_window},
            {"filter_mode", emg_filter == FilterMode::causal ? "causal" : "zero_phase"},
            {"emg_band_hz", {emg_low_hz, emg_high_hz}},
            {"emg_order", emg_order},
            {"imu_lowpass", imu_lowpass},
            {"imu_lowpass_hz", imu_lowpass_hz},
            {"imu_lowpass_order", imu_lowpass_order}};
}

Session preprocess_session(const Session& s, const PreprocessOptions& opt, PreprocessReport* report)
{
    const ChannelFilters filters = make_filters(opt);
    Session out = s;
    std::vector<PreprocessReport> reps(out.channels.size());
    std::vector<std::string> errors(out.channels.size());
    const auto n = static_cast<std::ptrdiff_t>(out.channels.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        try {
            reps[ui] = preprocess_channel(out.channels[ui], opt, filters);
        } catch (const std::exception& e) {
            errors[ui] = out.channels[ui].channel_id + ": " + e.what();
        }
    }
    for (const auto& e : errors) {
        if (!e.empty()) {
            throw InputError(s.key() + ": " + e);
        }
    }
    if (report != nullptr) {
        for (const auto& r : reps) {
            merge(*report, r);
        }
    }
    return out;
}

Session preprocess_session_serial(const Session& s, const PreprocessOptions& opt, PreprocessReport* report)
{
    const ChannelFilters filters = make_filters(opt);
    Session out = s;
    for (auto& c : out.channels) {
        auto r = preprocess_channel(c, opt, filters);
        if (report != nullptr) {
            merge(*report, r);
        }
    }
    return out;
}

std::optional<std::size_t> FeatureTable::column(std::string_view name) const
{
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema[i] == name) {
            return i;
        }
    }
    return std::nullopt;
}

void FeatureTable::append_row(const RowMeta& m, int label, std::span<const double> v)
{
    meta.push_back(m);
    labels.push_back(label);
    values.insert(values.end(), v.begin(), v.end());
}

FeatureTable FeatureTable::empty_like() const
{
    FeatureTable t;
    t.task = task;
    t.classes = classes;
    t.schema = schema;
    return t;
}

FeatureTable FeatureTable::select_rows(std::span<const std::size_t> idx) const
{
    FeatureTable out = empty_like();
    out.meta.reserve(idx.size());
    out.values.reserve(idx.size() * cols());
    for (std::size_t i : idx) {
        out.append_row(meta[i], labels[i], row(i));
    }
    return out;
}

FeatureTable FeatureTable::select_columns(std::span<const std::string> names) const
{
    std::vector<std::size_t> cols_idx;
    for (const auto& n : names) {
        auto c = column(n);
        if (!c) {
            throw InputError("feature table has no column '" + n + "'");
        }
        cols_idx.push_back(*c);
    }
    FeatureTable out = empty_like();
    out.schema.assign(names.begin(), names.end());
    out.meta = meta;
    out.labels = labels;
    out.values.reserve(rows() * cols_idx.size());
    for (std::size_t r = 0; r < rows(); ++r) {
        for (std::size_t c : cols_idx) {
            out.values.push_back(at(r, c));
        }
    }
    return out;
}

void FeatureTable::extend(const FeatureTable& other)
{
    if (other.rows() == 0) {
        return;
    }
    if (rows() == 0 && schema.empty()) {
        *this = other;
        return;
    }
    if (other.schema != schema || other.classes != classes) {
        throw InputError("cannot concatenate feature tables with different schemas");
    }
    meta.insert(meta.end(), other.meta.begin(), other.meta.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    values.insert(values.end(), other.values.begin(), other.values.end());
}

std::vector<std::string> FeatureTable::subjects() const
{
    std::set<std::string> s;
    for (const auto& m : meta) {
        s.insert(m.subject_id);
    }
    return {s.begin(), s.end()};
}

std::vector<int> FeatureTable::rounds() const
{
    std::set<int> s;
    for (const auto& m : meta) {
        s.insert(m.round_index);
    }
    return {s.begin(), s.end()};
}

std::optional<MovementLabel> majority_label(std::span<const MovementSegment> movements, double start_s, double end_s)
{
    double forward = 0.0;
    double turning = 0.0;
    for (const auto& m : movements) {
        const double overlap = std::min(end_s, m.end_s) - std::max(start_s, m.start_s);
        if (overlap > 0.0) {
            (m.label == MovementLabel::forward ? forward : turning) += overlap;
        }
    }
    if (forward == 0.0 && turning == 0.0) {
        return std::nullopt;
    }
    return turning >= forward ? MovementLabel::turning : MovementLabel::forward;
}

void append_session_rows(FeatureTable& table, const Session& s, const DatasetOptions& opt, BuildReport* report)
{
    const Task task = table.task;
    const ModalitySelection sel = opt.modalities.value_or(default_modalities(task));
    bool has_emg = false;
    bool has_imu = false;
    for (const auto& c : s.channels) {
        (c.modality == Modality::emg ? has_emg : has_imu) = true;
    }
    if ((sel.emg && !has_emg) || (sel.imu && !has_imu)) {
        if (report != nullptr) {
            ++report->skipped_sessions;
        }
        return;
    }
    if (task == Task::movement && s.movements.empty()) {
        throw LabelError("session " + s.key() + " has no movement segments");
    }

    const FeatureLayout layout(channel_infos(s), sel);
    if (table.schema.empty()) {
        table.schema = layout.names();
        table.classes = task_classes(task);
    } else if (table.schema != layout.names()) {
        throw InputError("session " + s.key() + " has a channel layout that differs from earlier sessions");
    }
    const SessionFeatures f = featurize_session(s, layout, opt.windows, opt.ssc_threshold);
    if (report != nullptr) {
        report->gap_windows += f.dropped_gap_windows;
    }
    const double span_s = opt.windows.window_ms / 1000.0;
    const std::size_t width = f.names.size();
    for (std::size_t r = 0; r < f.starts_s.size(); ++r) {
        RowMeta m{s.subject.subject_id, s.scenario.id(), s.round_index, std::nullopt, f.starts_s[r]};
        m.movement = majority_label(s.movements, f.starts_s[r], f.starts_s[r] + span_s);
        int label = 0;
        switch (task) {
        case Task::suit: label = s.scenario.suit ? 1 : 0; break;
        case Task::rollator: label = s.scenario.rollator ? 1 : 0; break;
        case Task::movement:
            if (!m.movement) {
                if (report != nullptr) {
                    ++report->unlabeled_windows;
                }
                continue;
            }
            label = *m.movement == MovementLabel::turning ? 1 : 0;
            break;
        }
        table.append_row(m, label, std::span<const double>(f.values).subspan(r * width, width));
    }
}

FeatureTable build_dataset(std::span<const Session> sessions, Task task, const DatasetOptions& opt,
                           BuildReport* report)
{
    FeatureTable table;
    table.task = task;
    table.classes = task_classes(task);
    for (const auto& s : sessions) {
        append_session_rows(table, s, opt, report);
    }
    return table;
}

void write_feature_csv(const FeatureTable& t, const fs::path& path, const json& provenance)
{
    std::string out;
    if (!provenance.is_null()) {
        out += "# " + provenance.dump() + "\n";
    }
    for (const auto& name : t.schema) {
        out += name;
        out += ',';
    }
    for (std::size_t i = 0; i < kLabelColumns.size(); ++i) {
        out += kLabelColumns[i];
        out += i + 1 < kLabelColumns.size() ? ',' : '\n';
    }
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (double v : t.row(r)) {
            out += format_double(v);
            out += ',';
        }
        const RowMeta& m = t.meta[r];
        out += m.subject_id + ',' + std::to_string(m.scenario) + ',' + std::to_string(m.round_index) + ',';
        if (m.movement) {
            out += to_string(*m.movement);
        }
        out += ',' + format_double(m.window_start_s) + ',' + t.classes[static_cast<std::size_t>(t.labels[r])] + '\n';
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw FormatError("cannot write " + path.string());
    }
    f << out;
}

FeatureTable read_feature_csv(const fs::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw FormatError("cannot open " + path.string());
    }
    std::string line;
    do {
        if (!std::getline(f, line)) {
            throw FormatError(path.string() + ": missing header");
        }
    } while (line.starts_with("#"));
    auto header = split_csv(line);
    const std::size_t n_label = kLabelColumns.size();
    if (header.size() < n_label) {
        throw FormatError(path.string() + ": header too short");
    }
    for (std::size_t i = 0; i < n_label; ++i) {
        if (header[header.size() - n_label + i] != kLabelColumns[i]) {
            throw FormatError(path.string() + ": expected label column '" + kLabelColumns[i] + "'");
        }
    }
    FeatureTable t;
    t.schema.assign(header.begin(), header.end() - static_cast<std::ptrdiff_t>(n_label));
    const std::size_t width = t.schema.size();
    std::vector<std::string> label_names;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + " has " +
                              std::to_string(cells.size()) + " fields, expected " + std::to_string(header.size()));
        }
        try {
            for (std::size_t c = 0; c < width; ++c) {
                t.values.push_back(parse_double(cells[c]));
            }
            RowMeta m;
            m.subject_id = cells[width];
            m.scenario = static_cast<int>(parse_int(cells[width + 1]));
            m.round_index = static_cast<int>(parse_int(cells[width + 2]));
            if (!cells[width + 3].empty()) {
                m.movement = parse_movement_label(cells[width + 3]);
            }
            m.window_start_s = parse_double(cells[width + 4]);
            t.meta.push_back(std::move(m));
        } catch (const Error& e) {
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        label_names.push_back(cells[width + 5]);
    }
    std::set<std::string> distinct(label_names.begin(), label_names.end());
    bool matched = false;
    for (Task task : {Task::suit, Task::rollator, Task::movement}) {
        const auto classes = task_classes(task);
        if (std::all_of(distinct.begin(), distinct.end(), [&](const std::string& l) {
                return std::find(classes.begin(), classes.end(), l) != classes.end();
            })) {
            t.task = task;
            t.classes = classes;
            matched = true;
            break;
        }
    }
    if (!matched) {
        throw FormatError(path.string() + ": labels do not match any task");
    }
    for (const auto& l : label_names) {
        t.labels.push_back(l == t.classes[1] ? 1 : 0);
    }
    return t;
}

} // namespace gaitstream
