#include "gaitstream/study.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "gaitstream/errors.hpp"
#include "gaitstream/numfmt.hpp"
#include "gaitstream/evaluation.hpp"
#include "gaitstream/pca.hpp"

namespace gaitstream {

using nlohmann::json;

const FeatureTable& StudyTables::for_task(Task t) const
{
    switch (t) {
    case Task::suit: return suit;
    case Task::rollator: return rollator;
    case Task::movement: break;
    }
    return movement;
}

StudyTables build_study_tables(const StudyDesign& design, const PreprocessOptions& pre, const DatasetOptions& ds)
{
    struct Part {
        FeatureTable suit, rollator, movement;
        BuildReport report;
        PreprocessReport pre;
        std::string error;
    };
    std::vector<Part> parts(design.size());
    const auto n = static_cast<std::ptrdiff_t>(design.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        Part& p = parts[static_cast<std::size_t>(i)];
        p.suit.task = Task::suit;
        p.rollator.task = Task::rollator;
        p.movement.task = Task::movement;
        try {
            const Session raw = design.generate(static_cast<std::size_t>(i));
            const Session s = preprocess_session_serial(raw, pre, &p.pre);
            append_session_rows(p.suit, s, ds, nullptr);
            append_session_rows(p.rollator, s, ds, nullptr);
            append_session_rows(p.movement, s, ds, &p.report);
        } catch (const std::exception& e) {
            p.error = e.what();
        }
    }
    StudyTables t;
    t.suit.task = Task::suit;
    t.rollator.task = Task::rollator;
    t.movement.task = Task::movement;
    for (const auto& t_ : {Task::suit, Task::rollator, Task::movement}) {
        FeatureTable& dst = t_ == Task::suit ? t.suit : t_ == Task::rollator ? t.rollator : t.movement;
        dst.classes = task_classes(t_);
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
        Part& p = parts[i];
        if (!p.error.empty()) {
            throw InputError("session " + std::to_string(i) + ": " + p.error);
        }
        t.suit.extend(p.suit);
        t.rollator.extend(p.rollator);
        t.movement.extend(p.movement);
        t.movement_report.unlabeled_windows += p.report.unlabeled_windows;
        t.movement_report.gap_windows += p.report.gap_windows;
        t.movement_report.skipped_sessions += p.report.skipped_sessions;
        t.preprocess.filled_samples += p.pre.filled_samples;
        t.preprocess.unfilled_gaps += p.pre.unfilled_gaps;
        t.preprocess.outliers += p.pre.outliers;
        t.preprocess.warnings.insert(t.preprocess.warnings.end(), p.pre.warnings.begin(), p.pre.warnings.end());
    }
    return t;
}

std::vector<std::string> restricted_leg_channels(Side suit_side)
{
    std::vector<std::string> out;
    for (const auto& ch : emg_channel_specs()) {
        if (ch.leg && ch.side == suit_side) {
            out.emplace_back(ch.id);
        }
    }
    return out;
}

namespace {

double mean_of(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::vector<std::string> with_suffix(const std::vector<std::string>& channels, const std::string& suffix)
{
    std::vector<std::string> out;
    for (const auto& c : channels) {
        out.push_back(c + suffix);
    }
    return out;
}

json trend_json(const TrendResult& t)
{
    return {{"rounds", t.rounds}, {"means", t.means}, {"slope", t.slope}, {"correlation", t.correlation}};
}

// Suit-task rows for one subject and scenario across all rounds.
FeatureTable subject_rows(const StudyDesign& design, int subject, int scenario, const PreprocessOptions& pre,
                          const DatasetOptions& ds)
{
    FeatureTable t;
    t.task = Task::suit;
    t.classes = task_classes(Task::suit);
    for (std::size_t i = 0; i < design.size(); ++i) {
        const auto& spec = design.sessions()[i];
        if (spec.subject_index == subject && spec.scenario.id() == scenario) {
            append_session_rows(t, preprocess_session_serial(design.generate(i), pre), ds, nullptr);
        }
    }
    return t;
}

struct Separation {
    double centroid_distance = 0.0;
    double within_spread = 0.0;
};

// Distance between the two class centroids in the projection against the
// mean distance of rows to their own centroid.
Separation class_separation(const PcaResult& p, const std::vector<int>& labels)
{
    const std::size_t d = p.dims;
    std::vector<double> c[2] = {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    std::size_t n[2] = {0, 0};
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const int l = labels[r];
        for (std::size_t k = 0; k < d; ++k) {
            c[l][k] += p.coords[r * d + k];
        }
        ++n[l];
    }
    for (int l = 0; l < 2; ++l) {
        for (auto& x : c[l]) {
            x /= static_cast<double>(std::max<std::size_t>(n[l], 1));
        }
    }
    Separation s;
    double dd = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        dd += (c[0][k] - c[1][k]) * (c[0][k] - c[1][k]);
    }
    s.centroid_distance = std::sqrt(dd);
    double spread = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        double e = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double q = p.coords[r * d + k] - c[labels[r]][k];
            e += q * q;
        }
        spread += std::sqrt(e);
    }
    s.within_spread = labels.empty() ? 0.0 : spread / static_cast<double>(labels.size());
    return s;
}

std::string csv_number(double v)
{
    return format_double(v);
}

} // namespace

ReportOutput run_report(const ReportOptions& opt)
{
    ReportOutput out;
    json& s = out.summary;
    const StudyDesign design(opt.study);
    const StudyTables tables = build_study_tables(design, opt.preprocess, opt.dataset);
    s["study"] = {{"subjects", opt.study.n_subjects},
                  {"rounds", opt.study.rounds},
                  {"sessions", design.size()},
                  {"rows", {{"suit", tables.suit.rows()},
                            {"rollator", tables.rollator.rows()},
                            {"movement", tables.movement.rows()}}},
                  {"unlabeled_windows", tables.movement_report.unlabeled_windows},
                  {"gap_windows", tables.movement_report.gap_windows},
                  {"filled_samples", tables.preprocess.filled_samples},
                  {"unfilled_gaps", tables.preprocess.unfilled_gaps},
                  {"outliers_removed", tables.preprocess.outliers}};

    std::ostringstream acc_csv;
    acc_csv << "task,subject,accuracy\n";
    std::map<Task, CVReport> intra;
    for (Task t : {Task::suit, Task::rollator, Task::movement}) {
        CVReport r = cross_validate(tables.for_task(t), CVStrategy::leave_two_rounds_out, opt.hp);
        s["intra_subject"][std::string(to_string(t))] = r.to_json();
        for (const auto& p : r.per_subject) {
            acc_csv << to_string(t) << ',' << p.subject_id << ',' << csv_number(p.accuracy) << '\n';
        }
        intra.emplace(t, std::move(r));
    }
    out.plot_csv["intra_accuracy.csv"] = acc_csv.str();

    const auto adapt = adaptation_study(tables.movement, opt.hp, opt.adapt_fraction);
    std::vector<double> loso, zero, adapted;
    int improved = 0;
    std::ostringstream cross_csv;
    cross_csv << "subject,intra,loso,zero_shot,adapted\n";
    for (std::size_t k = 0; k < adapt.size(); ++k) {
        const auto& a = adapt[k];
        loso.push_back(a.loso);
        zero.push_back(a.zero_shot);
        adapted.push_back(a.adapted);
        improved += a.adapted > a.zero_shot ? 1 : 0;
        cross_csv << a.subject_id << ',' << csv_number(intra.at(Task::movement).per_subject.at(k).accuracy) << ','
                  << csv_number(a.loso) << ',' << csv_number(a.zero_shot) << ',' << csv_number(a.adapted) << '\n';
    }
    s["cross_subject"] = {{"task", "movement"},
                          {"intra_mean_accuracy", intra.at(Task::movement).mean_accuracy},
                          {"loso_mean_accuracy", mean_of(loso)},
                          {"zero_shot_mean_accuracy", mean_of(zero)},
                          {"adapted_mean_accuracy", mean_of(adapted)},
                          {"adapt_fraction", opt.adapt_fraction},
                          {"subjects_improved", improved},
                          {"per_subject", to_json(adapt)}};
    if (opt.loso_all_tasks) {
        for (Task t : {Task::suit, Task::rollator}) {
            s["cross_subject"]["loso_" + std::string(to_string(t))] =
                cross_validate(tables.for_task(t), CVStrategy::loso, opt.hp).to_json();
        }
    }
    out.plot_csv["cross_subject.csv"] = cross_csv.str();

    // SSC on the restricted-side leg muscles, with and without the suit.
    json ssc = json::array();
    int higher = 0;
    std::ostringstream ssc_csv;
    ssc_csv << "subject,suit_side,ssc_no_suit,ssc_suit\n";
    const FeatureTable& suit = tables.suit;
    for (int i = 0; i < opt.study.n_subjects; ++i) {
        const std::string id = StudyDesign::subject_id(i);
        const Side side = design.subjects()[static_cast<std::size_t>(i)].suit_side;
        std::vector<std::size_t> cols;
        for (const auto& f : with_suffix(restricted_leg_channels(side), ".ssc")) {
            const auto c = suit.column(f);
            if (!c) {
                throw InputError("report needs feature '" + f + "'");
            }
            cols.push_back(*c);
        }
        double sum[2] = {0.0, 0.0};
        std::size_t cnt[2] = {0, 0};
        for (std::size_t r = 0; r < suit.rows(); ++r) {
            if (suit.meta[r].subject_id != id) {
                continue;
            }
            const int l = suit.labels[r];
            for (std::size_t c : cols) {
                sum[l] += suit.at(r, c);
                ++cnt[l];
            }
        }
        const double without = cnt[0] ? sum[0] / static_cast<double>(cnt[0]) : 0.0;
        const double with = cnt[1] ? sum[1] / static_cast<double>(cnt[1]) : 0.0;
        higher += with > without ? 1 : 0;
        ssc.push_back({{"subject", id}, {"suit_side", to_string(side)}, {"ssc_no_suit", without}, {"ssc_suit", with}});
        ssc_csv << id << ',' << to_string(side) << ',' << csv_number(without) << ',' << csv_number(with) << '\n';
    }
    s["ssc_comparison"] = {{"channels", "restricted-side leg"}, {"subjects_higher_with_suit", higher}, {"per_subject", ssc}};
    out.plot_csv["ssc_comparison.csv"] = ssc_csv.str();

    // Trends over rounds for one subject and scenario: SSC on the drift-free
    // study, RMS with amplitude drift injected.
    const Side trend_side = design.subjects().at(static_cast<std::size_t>(opt.trend_subject)).suit_side;
    const auto legs = restricted_leg_channels(trend_side);
    const FeatureTable trend_rows = suit.filter([&](const RowMeta& m, std::size_t) {
        return m.subject_id == StudyDesign::subject_id(opt.trend_subject) && m.scenario == opt.trend_scenario;
    });
    const TrendResult flat = trend_over_rounds(trend_rows, with_suffix(legs, ".ssc"));
    StudyOptions drift_opt = opt.study;
    drift_opt.generator.drift_per_round = opt.drift_per_round;
    const StudyDesign drift_design(drift_opt);
    const TrendResult drift = trend_over_rounds(
        subject_rows(drift_design, opt.trend_subject, opt.trend_scenario, opt.preprocess, opt.dataset),
        with_suffix(legs, ".rms"));
    s["trend"] = {{"subject", StudyDesign::subject_id(opt.trend_subject)},
                  {"scenario", opt.trend_scenario},
                  {"channels", legs},
                  {"drift_free_ssc", trend_json(flat)},
                  {"drift_per_round", opt.drift_per_round},
                  {"drift_rms", trend_json(drift)}};
    std::ostringstream trend_csv;
    trend_csv << "round,ssc_drift_free,rms_drift\n";
    for (std::size_t k = 0; k < flat.rounds.size(); ++k) {
        trend_csv << flat.rounds[k] << ',' << csv_number(flat.means[k]) << ','
                  << csv_number(k < drift.means.size() ? drift.means[k] : 0.0) << '\n';
    }
    out.plot_csv["trend.csv"] = trend_csv.str();

    // Importance averaged over per-subject movement models.
    const auto subjects = tables.movement.subjects();
    std::vector<std::vector<std::pair<std::string, double>>> per(subjects.size());
    const auto ns = static_cast<std::ptrdiff_t>(subjects.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < ns; ++k) {
        const auto& id = subjects[static_cast<std::size_t>(k)];
        const FeatureTable rows = tables.movement.filter([&](const RowMeta& m, std::size_t) { return m.subject_id == id; });
        per[static_cast<std::size_t>(k)] = feature_importance(train(rows, opt.hp, Execution::serial));
    }
    std::map<std::string, double> total;
    for (const auto& name : tables.movement.schema) {
        total[name] = 0.0;
    }
    for (const auto& imp : per) {
        for (const auto& [name, v] : imp) {
            total[name] += v / static_cast<double>(per.size());
        }
    }
    std::vector<std::pair<std::string, double>> ranked(total.begin(), total.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    json imp = json::array();
    std::ostringstream imp_csv;
    imp_csv << "rank,feature,importance\n";
    int gyro_top10 = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        imp.push_back({{"feature", ranked[k].first}, {"importance", ranked[k].second}});
        imp_csv << k + 1 << ',' << ranked[k].first << ',' << csv_number(ranked[k].second) << '\n';
        if (k < 10 && ranked[k].first.find("_gyro") != std::string::npos) {
            ++gyro_top10;
        }
    }
    s["feature_importance"] = {{"task", "movement"}, {"gyro_in_top10", gyro_top10}, {"ranking", imp}};
    out.plot_csv["feature_importance.csv"] = imp_csv.str();

    const PcaResult pca = pca_project(tables.movement, 2);
    const Separation sep = class_separation(pca, tables.movement.labels);
    s["pca"] = {{"task", "movement"},
                {"features", pca.features.size()},
                {"explained_ratio", std::vector<double>(pca.explained_ratio.begin(),
                                                        pca.explained_ratio.begin() +
                                                            static_cast<std::ptrdiff_t>(std::min<std::size_t>(5, pca.explained_ratio.size())))},
                {"centroid_distance", sep.centroid_distance},
                {"within_class_spread", sep.within_spread}};
    std::ostringstream pca_csv;
    pca_csv << "subject,scenario,round,window_start_s,label,pc1,pc2\n";
    for (std::size_t r = 0; r < tables.movement.rows(); ++r) {
        const auto& m = tables.movement.meta[r];
        pca_csv << m.subject_id << ',' << m.scenario << ',' << m.round_index << ',' << csv_number(m.window_start_s) << ','
                << tables.movement.classes[static_cast<std::size_t>(tables.movement.labels[r])] << ','
                << csv_number(pca.coords[r * 2]) << ',' << csv_number(pca.coords[r * 2 + 1]) << '\n';
    }
    out.plot_csv["pca_movement.csv"] = pca_csv.str();
    return out;
}

} // namespace gaitstream
