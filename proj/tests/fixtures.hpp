#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "gaitstream/dataset.hpp"
#include "gaitstream/synthgait.hpp"

namespace fixture {

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t")
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("gaitstream_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
    std::filesystem::path path_;
};

inline gaitstream::Session session(int scenario_id, int round = 1, std::uint64_t seed = 7,
                                   gaitstream::Side side = gaitstream::Side::left,
                                   const gaitstream::GeneratorOptions& opt = {})
{
    using namespace gaitstream;
    const auto p = SubjectParams::from_seed(seed, side);
    return generate_session(p, "S01", ScenarioTag::from_id(scenario_id), round, PathPlan::l_path(45.0, round), opt);
}

// Two-class table with `informative` column carrying the label and the rest noise.
inline gaitstream::FeatureTable toy_table(std::size_t rows, std::size_t cols, std::size_t informative,
                                          std::uint64_t seed = 1, int subjects = 1, int rounds = 1)
{
    using namespace gaitstream;
    FeatureTable t;
    t.task = Task::movement;
    t.classes = {"forward", "turning"};
    for (std::size_t c = 0; c < cols; ++c) {
        t.schema.push_back("f" + std::to_string(c));
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> row(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const int label = static_cast<int>(r % 2);
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] = noise(rng);
        }
        row[informative] = (label ? 2.0 : -2.0) + 0.3 * noise(rng);
        RowMeta m;
        m.subject_id = StudyDesign::subject_id(static_cast<int>(r / 2 % static_cast<std::size_t>(subjects)));
        m.round_index = 1 + static_cast<int>(r / 2 / static_cast<std::size_t>(subjects) % static_cast<std::size_t>(rounds));
        m.movement = label ? MovementLabel::turning : MovementLabel::forward;
        m.window_start_s = 0.1 * static_cast<double>(r);
        t.append_row(m, label, row);
    }
    return t;
}

} // namespace fixture
