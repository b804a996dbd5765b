#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gaitstream/dataset.hpp"
#include "gaitstream/gbdt.hpp"

namespace gaitstream {

enum class CVStrategy { loso, leave_two_rounds_out };

std::string_view to_string(CVStrategy s);
CVStrategy parse_strategy(std::string_view s); // accepts loso, leave-two-rounds-out, leave_two_rounds_out

struct Fold {
    std::string subject_id;
    std::vector<int> held_out_rounds; // empty for loso
    std::vector<std::size_t> test_rows;
    double accuracy = 0.0;
};

struct SubjectScore {
    std::string subject_id;
    double accuracy = 0.0;
};

struct CVReport {
    Task task = Task::movement;
    CVStrategy strategy = CVStrategy::loso;
    std::vector<Fold> folds;
    std::vector<SubjectScore> per_subject;
    double mean_accuracy = 0.0;

    nlohmann::json to_json() const;
};

// loso: one fold per subject. leave_two_rounds_out: per subject, rounds are
// paired (1,2),(3,4),... and each pair is held out once; the mean is taken
// over subject means. Throws PartitionError when the table cannot be split.
CVReport cross_validate(const FeatureTable& table, CVStrategy strategy, const GBDTParams& hp);

struct AdaptSplit {
    FeatureTable adapt; // earliest `fraction` of each session's windows
    FeatureTable test;  // the rest
};

// Throws AdaptError when fraction > 0 leaves some session without adaptation rows.
AdaptSplit split_for_adaptation(const FeatureTable& subject_rows, double fraction);

// Pooled retraining from scratch on base_table plus the adaptation part of
// new_subject. With fraction 0 this reproduces the base model.
GBDTModel adapt_model(const GBDTModel& base, const FeatureTable& base_table, const FeatureTable& new_subject,
                      double fraction = 0.1, std::uint64_t seed = 0);

struct AdaptationResult {
    std::string subject_id;
    double zero_shot = 0.0; // base model on the test part
    double adapted = 0.0;   // adapted model on the same test part
    double loso = 0.0;      // base model on all of the subject's rows
    std::size_t adapt_rows = 0;
    std::size_t test_rows = 0;
};

// Leave-one-subject-out base models, each adapted to its held-out subject.
// The base models are the LOSO fold models, so `loso` matches cross_validate.
std::vector<AdaptationResult> adaptation_study(const FeatureTable& table, const GBDTParams& hp, double fraction = 0.1);

nlohmann::json to_json(const std::vector<AdaptationResult>& r);

struct TrendResult {
    std::vector<int> rounds;
    std::vector<double> means;
    double slope = 0.0;
    double correlation = 0.0;
};

// Per-round mean of the given feature columns (averaged over columns and
// rows), OLS slope over round index and Pearson correlation. Throws
// TrendError with fewer than 4 rounds and InputError for unknown features.
TrendResult trend_over_rounds(const FeatureTable& rows, std::span<const std::string> features);

} // namespace gaitstream
