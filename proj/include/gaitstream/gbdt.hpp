#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gaitstream/dataset.hpp"

namespace gaitstream {

struct GBDTParams {
    int n_trees = 100;
    int max_depth = 4;
    double learning_rate = 0.1;
    int min_samples_leaf = 5;
    double lambda = 1.0;    // L2 penalty on leaf values
    double subsample = 1.0; // row fraction drawn per tree
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static GBDTParams from_json(const nlohmann::json& j);
    bool operator==(const GBDTParams&) const = default;
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0; // leaf output before the learning rate
    double gain = 0.0;

    bool leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double eval(const double* row) const
    {
        int k = 0;
        while (!nodes[static_cast<std::size_t>(k)].leaf()) {
            const TreeNode& n = nodes[static_cast<std::size_t>(k)];
            k = row[n.feature] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(k)].value;
    }
    int depth() const;
    bool operator==(const Tree&) const = default;
};

struct GBDTModel {
    GBDTParams hp;
    Task task = Task::movement;
    std::vector<std::string> feature_names;
    std::vector<std::string> classes;
    double base_score = 0.0;
    std::vector<Tree> trees;
    std::vector<double> training_loss; // mean log-loss after 0..n_trees rounds
    nlohmann::json config;            // provenance, stored verbatim

    double learning_rate() const { return hp.learning_rate; }
    double margin(std::span<const double> row) const;
    double positive_probability(std::span<const double> row) const;
    std::pair<double, double> predict_proba(std::span<const double> row) const;
    int predict(std::span<const double> row) const;

    std::vector<int> predict(const FeatureTable& t) const; // columns matched by name
    double accuracy(const FeatureTable& t) const;

    bool operator==(const GBDTModel&) const = default;
};

enum class Execution { parallel, serial };

// Binary logistic boosting with exact greedy splits. Throws TrainError for a
// single-class table, too few rows, or non-finite features.
GBDTModel train(const FeatureTable& table, const GBDTParams& hp, Execution exec = Execution::parallel);

// Rows of `table` reordered to the model's feature order; throws InputError
// when a model feature is missing.
std::vector<double> aligned_values(const GBDTModel& m, const FeatureTable& table);

// Total split gain per feature normalized to sum 1, sorted descending, ties by name.
std::vector<std::pair<std::string, double>> feature_importance(const GBDTModel& m);

nlohmann::json model_to_json(const GBDTModel& m);
GBDTModel model_from_json(const nlohmann::json& j); // throws FormatError
void save_model(const GBDTModel& m, const std::filesystem::path& path);
GBDTModel load_model(const std::filesystem::path& path);

double log_loss(std::span<const double> margins, std::span<const int> labels);

} // namespace gaitstream
