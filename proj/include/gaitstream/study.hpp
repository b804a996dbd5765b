#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "gaitstream/dataset.hpp"
#include "gaitstream/gbdt.hpp"
#include "gaitstream/synthgait.hpp"

namespace gaitstream {

struct StudyTables {
    FeatureTable suit;
    FeatureTable rollator;
    FeatureTable movement;
    BuildReport movement_report;
    PreprocessReport preprocess;

    const FeatureTable& for_task(Task t) const;
};

// Generates, preprocesses and featurizes the study one session at a time so
// only feature rows are kept in memory. Sessions run in parallel; rows keep
// the study's session order.
StudyTables build_study_tables(const StudyDesign& design, const PreprocessOptions& pre, const DatasetOptions& ds);

struct ReportOptions {
    StudyOptions study;
    PreprocessOptions preprocess;
    DatasetOptions dataset;
    GBDTParams hp;
    double adapt_fraction = 0.1;
    double drift_per_round = 0.02; // for the drift-injected trend comparison
    bool loso_all_tasks = false;   // LOSO for suit/rollator as well as movement
    int trend_subject = 0;
    int trend_scenario = 2;
};

struct ReportOutput {
    nlohmann::json summary;
    std::map<std::string, std::string> plot_csv; // file name -> CSV text
};

// Runs every analysis on the synthetic study.
ReportOutput run_report(const ReportOptions& opt);

// Channel ids of the restricted-side leg muscles.
std::vector<std::string> restricted_leg_channels(Side suit_side);

} // namespace gaitstream
