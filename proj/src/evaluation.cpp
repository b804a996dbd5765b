#include "gaitstream/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "gaitstream/errors.hpp"

namespace gaitstream {

using nlohmann::json;

namespace {

double accuracy_on(const GBDTModel& m, const FeatureTable& t, std::span<const std::size_t> rows)
{
    if (rows.empty()) {
        return 0.0;
    }
    return m.accuracy(t.select_rows(rows));
}

struct FoldPlan {
    std::string subject;
    std::vector<int> rounds;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

std::vector<FoldPlan> plan_folds(const FeatureTable& t, CVStrategy strategy)
{
    const auto subjects = t.subjects();
    std::vector<FoldPlan> plans;
    if (strategy == CVStrategy::loso) {
        if (subjects.size() < 2) {
            throw PartitionError("leave-one-subject-out needs at least 2 subjects, found " +
                                 std::to_string(subjects.size()));
        }
        for (const auto& s : subjects) {
            FoldPlan p;
            p.subject = s;
            for (std::size_t i = 0; i < t.rows(); ++i) {
                (t.meta[i].subject_id == s ? p.test : p.train).push_back(i);
            }
            plans.push_back(std::move(p));
        }
        return plans;
    }
    for (const auto& s : subjects) {
        std::vector<int> rounds;
        for (const auto& m : t.meta) {
            if (m.subject_id == s) {
                rounds.push_back(m.round_index);
            }
        }
        std::sort(rounds.begin(), rounds.end());
        rounds.erase(std::unique(rounds.begin(), rounds.end()), rounds.end());
        if (rounds.size() < 4 || rounds.size() % 2 != 0) {
            throw PartitionError("leave-two-rounds-out needs an even number (>= 4) of rounds; subject " + s +
                                 " has " + std::to_string(rounds.size()));
        }
        for (std::size_t k = 0; k < rounds.size(); k += 2) {
            FoldPlan p;
            p.subject = s;
            p.rounds = {rounds[k], rounds[k + 1]};
            for (std::size_t i = 0; i < t.rows(); ++i) {
                const auto& m = t.meta[i];
                if (m.subject_id != s) {
                    continue;
                }
                const bool held = m.round_index == p.rounds[0] || m.round_index == p.rounds[1];
                (held ? p.test : p.train).push_back(i);
            }
            plans.push_back(std::move(p));
        }
    }
    return plans;
}

} // namespace

std::string_view to_string(CVStrategy s)
{
    return s == CVStrategy::loso ? "loso" : "leave_two_rounds_out";
}

CVStrategy parse_strategy(std::string_view s)
{
    if (s == "loso" || s == "leave-one-subject-out") {
        return CVStrategy::loso;
    }
    if (s == "leave-two-rounds-out" || s == "leave_two_rounds_out" || s == "l2ro") {
        return CVStrategy::leave_two_rounds_out;
    }
    throw InputError("unknown strategy '" + std::string(s) + "'");
}

json CVReport::to_json() const
{
    json folds_j = json::array();
    for (const auto& f : folds) {
        json held = f.held_out_rounds.empty() ? json{{"subject", f.subject_id}}
                                              : json{{"subject", f.subject_id}, {"rounds", f.held_out_rounds}};
        folds_j.push_back({{"held_out", held}, {"test_rows", f.test_rows.size()}, {"accuracy", f.accuracy}});
    }
    json subj = json::array();
    for (const auto& s : per_subject) {
        subj.push_back({{"subject", s.subject_id}, {"accuracy", s.accuracy}});
    }
    return {{"task", gaitstream::to_string(task)},
            {"strategy", gaitstream::to_string(strategy)},
            {"folds", std::move(folds_j)},
            {"per_subject", std::move(subj)},
            {"mean_accuracy", mean_accuracy}};
}

CVReport cross_validate(const FeatureTable& table, CVStrategy strategy, const GBDTParams& hp)
{
    const auto plans = plan_folds(table, strategy);
    CVReport rep;
    rep.task = table.task;
    rep.strategy = strategy;
    rep.folds.resize(plans.size());
    std::vector<std::string> errors(plans.size());
    const auto n = static_cast<std::ptrdiff_t>(plans.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const auto& p = plans[static_cast<std::size_t>(k)];
        Fold& f = rep.folds[static_cast<std::size_t>(k)];
        f.subject_id = p.subject;
        f.held_out_rounds = p.rounds;
        f.test_rows = p.test;
        try {
            const GBDTModel m = train(table.select_rows(p.train), hp, Execution::serial);
            f.accuracy = accuracy_on(m, table, p.test);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(k)] = e.what();
        }
    }
    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (!errors[k].empty()) {
            throw TrainError("fold " + std::to_string(k) + " (subject " + plans[k].subject + "): " + errors[k]);
        }
    }
    std::map<std::string, std::vector<double>> by_subject;
    for (const auto& f : rep.folds) {
        by_subject[f.subject_id].push_back(f.accuracy);
    }
    double sum = 0.0;
    for (const auto& [s, accs] : by_subject) {
        const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
        rep.per_subject.push_back({s, mean});
        sum += mean;
    }
    rep.mean_accuracy = by_subject.empty() ? 0.0 : sum / static_cast<double>(by_subject.size());
    return rep;
}

AdaptSplit split_for_adaptation(const FeatureTable& rows, double fraction)
{
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw AdaptError("fraction must be in [0, 1]");
    }
    std::map<std::tuple<std::string, int, int>, std::vector<std::size_t>> sessions;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const auto& m = rows.meta[i];
        sessions[{m.subject_id, m.scenario, m.round_index}].push_back(i);
    }
    std::vector<std::size_t> adapt, test;
    for (auto& [key, idx] : sessions) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return rows.meta[a].window_start_s < rows.meta[b].window_start_s;
        });
        const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size())));
        if (fraction > 0.0 && k == 0) {
            throw AdaptError("session " + std::get<0>(key) + " scenario " + std::to_string(std::get<1>(key)) +
                             " round " + std::to_string(std::get<2>(key)) + " has " + std::to_string(idx.size()) +
                             " windows, too few for a " + std::to_string(fraction) + " adaptation split");
        }
        adapt.insert(adapt.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
        test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
    }
    std::sort(adapt.begin(), adapt.end());
    std::sort(test.begin(), test.end());
    return {rows.select_rows(adapt), rows.select_rows(test)};
}

GBDTModel adapt_model(const GBDTModel& base, const FeatureTable& base_table, const FeatureTable& new_subject,
                      double fraction, std::uint64_t seed)
{
    const AdaptSplit split = split_for_adaptation(new_subject, fraction);
    FeatureTable pooled = base_table;
    pooled.extend(split.adapt);
    GBDTParams hp = base.hp;
    hp.seed = seed;
    GBDTModel m = train(pooled, hp);
    m.config = base.config;
    return m;
}

std::vector<AdaptationResult> adaptation_study(const FeatureTable& table, const GBDTParams& hp, double fraction)
{
    const auto subjects = table.subjects();
    if (subjects.size() < 2) {
        throw PartitionError("adaptation needs at least 2 subjects");
    }
    std::vector<AdaptationResult> out(subjects.size());
    std::vector<std::string> errors(subjects.size());
    const auto n = static_cast<std::ptrdiff_t>(subjects.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const std::string& s = subjects[static_cast<std::size_t>(k)];
        try {
            const FeatureTable base_table = table.filter([&](const RowMeta& m, std::size_t) { return m.subject_id != s; });
            const FeatureTable own = table.filter([&](const RowMeta& m, std::size_t) { return m.subject_id == s; });
            const AdaptSplit split = split_for_adaptation(own, fraction);
            const GBDTModel base = train(base_table, hp, Execution::serial);
            FeatureTable pooled = base_table;
            pooled.extend(split.adapt);
            const GBDTModel adapted = train(pooled, hp, Execution::serial);
            AdaptationResult& r = out[static_cast<std::size_t>(k)];
            r.subject_id = s;
            r.zero_shot = base.accuracy(split.test);
            r.adapted = adapted.accuracy(split.test);
            r.loso = base.accuracy(own);
            r.adapt_rows = split.adapt.rows();
            r.test_rows = split.test.rows();
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(k)] = e.what();
        }
    }
    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (!errors[k].empty()) {
            throw AdaptError("subject " + subjects[k] + ": " + errors[k]);
        }
    }
    return out;
}

json to_json(const std::vector<AdaptationResult>& r)
{
    json out = json::array();
    for (const auto& a : r) {
        out.push_back({{"subject", a.subject_id},
                       {"zero_shot_accuracy", a.zero_shot},
                       {"adapted_accuracy", a.adapted},
                       {"loso_accuracy", a.loso},
                       {"adapt_rows", a.adapt_rows},
                       {"test_rows", a.test_rows}});
    }
    return out;
}

TrendResult trend_over_rounds(const FeatureTable& rows, std::span<const std::string> features)
{
    if (features.empty()) {
        throw InputError("no feature given for the trend");
    }
    std::vector<std::size_t> cols;
    for (const auto& f : features) {
        const auto c = rows.column(f);
        if (!c) {
            throw InputError("unknown feature '" + f + "'");
        }
        cols.push_back(*c);
    }
    std::map<int, std::pair<double, std::size_t>> acc;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto& a = acc[rows.meta[i].round_index];
        for (std::size_t c : cols) {
            a.first += rows.at(i, c);
        }
        a.second += cols.size();
    }
    if (acc.size() < 4) {
        throw TrendError("trend needs at least 4 rounds, found " + std::to_string(acc.size()));
    }
    TrendResult r;
    for (const auto& [round, a] : acc) {
        r.rounds.push_back(round);
        r.means.push_back(a.first / static_cast<double>(a.second));
    }
    if (std::all_of(r.means.begin(), r.means.end(), [&](double m) { return m == r.means.front(); })) {
        return r; // flat: slope and correlation are both zero
    }
    const double n = static_cast<double>(r.means.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < r.means.size(); ++i) {
        mx += r.rounds[i];
        my += r.means[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < r.means.size(); ++i) {
        const double dx = r.rounds[i] - mx;
        const double dy = r.means[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    r.slope = sxy / sxx;
    r.correlation = syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
    return r;
}

} // namespace gaitstream
