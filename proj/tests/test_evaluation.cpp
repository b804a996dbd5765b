#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"

#include "fixtures.hpp"
#include "gaitstream/errors.hpp"
#include "gaitstream/evaluation.hpp"

using namespace gaitstream;

namespace {

GBDTParams quick()
{
    GBDTParams hp;
    hp.n_trees = 10;
    hp.max_depth = 3;
    return hp;
}

} // namespace

TEST_CASE("strategy names")
{
    CHECK(parse_strategy("loso") == CVStrategy::loso);
    CHECK(parse_strategy("leave-two-rounds-out") == CVStrategy::leave_two_rounds_out);
    CHECK(parse_strategy("leave_two_rounds_out") == CVStrategy::leave_two_rounds_out);
    CHECK(parse_strategy(to_string(CVStrategy::loso)) == CVStrategy::loso);
    CHECK_THROWS_AS(parse_strategy("kfold"), InputError);
}

TEST_CASE("leave-two-rounds-out folds partition every subject's rows")
{
    const auto t = fixture::toy_table(1200, 4, 1, 3, 3, 10);
    const auto r = cross_validate(t, CVStrategy::leave_two_rounds_out, quick());
    CHECK(r.folds.size() == 15);
    std::map<std::string, int> per_subject;
    std::vector<int> seen(t.rows(), 0);
    for (const auto& f : r.folds) {
        ++per_subject[f.subject_id];
        REQUIRE(f.held_out_rounds.size() == 2);
        CHECK(f.held_out_rounds[1] == f.held_out_rounds[0] + 1);
        CHECK(f.held_out_rounds[0] % 2 == 1);
        CHECK(f.accuracy >= 0.0);
        CHECK(f.accuracy <= 1.0);
        for (std::size_t i : f.test_rows) {
            ++seen[i];
            CHECK(t.meta[i].subject_id == f.subject_id);
            CHECK(std::find(f.held_out_rounds.begin(), f.held_out_rounds.end(), t.meta[i].round_index) !=
                  f.held_out_rounds.end());
        }
    }
    for (const auto& [s, n] : per_subject) {
        CHECK(n == 5);
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
    REQUIRE(r.per_subject.size() == 3);
    double mean = 0;
    for (const auto& s : r.per_subject) {
        mean += s.accuracy / 3.0;
    }
    CHECK(r.mean_accuracy == doctest::Approx(mean).epsilon(1e-12));
    CHECK(r.mean_accuracy > 0.95);
}

TEST_CASE("loso holds out each subject once")
{
    const auto t = fixture::toy_table(880, 3, 2, 4, 11, 4);
    const auto r = cross_validate(t, CVStrategy::loso, quick());
    CHECK(r.folds.size() == 11);
    std::vector<int> seen(t.rows(), 0);
    std::set<std::string> subjects;
    for (const auto& f : r.folds) {
        CHECK(f.held_out_rounds.empty());
        subjects.insert(f.subject_id);
        for (std::size_t i : f.test_rows) {
            ++seen[i];
            CHECK(t.meta[i].subject_id == f.subject_id);
        }
    }
    CHECK(subjects.size() == 11);
    CHECK(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
    const auto j = r.to_json();
    CHECK(j["folds"].size() == 11);
}

TEST_CASE("partition errors")
{
    CHECK_THROWS_AS(cross_validate(fixture::toy_table(200, 3, 0, 1, 1, 4), CVStrategy::loso, quick()),
                    PartitionError);
    CHECK_THROWS_AS(cross_validate(fixture::toy_table(300, 3, 0, 1, 2, 3), CVStrategy::leave_two_rounds_out,
                                   quick()),
                    PartitionError);
    CHECK_THROWS_AS(cross_validate(fixture::toy_table(200, 3, 0, 1, 2, 2), CVStrategy::leave_two_rounds_out,
                                   quick()),
                    PartitionError);
}

TEST_CASE("adaptation split takes the earliest windows of every session")
{
    const auto t = fixture::toy_table(800, 3, 0, 5, 1, 4);
    const auto s = split_for_adaptation(t, 0.1);
    CHECK(s.adapt.rows() + s.test.rows() == t.rows());
    for (int round = 1; round <= 4; ++round) {
        double last_adapt = -1.0, first_test = 1e300;
        std::size_t n_adapt = 0, n_all = 0;
        for (std::size_t i = 0; i < s.adapt.rows(); ++i) {
            if (s.adapt.meta[i].round_index == round) {
                last_adapt = std::max(last_adapt, s.adapt.meta[i].window_start_s);
                ++n_adapt;
            }
        }
        for (std::size_t i = 0; i < s.test.rows(); ++i) {
            if (s.test.meta[i].round_index == round) {
                first_test = std::min(first_test, s.test.meta[i].window_start_s);
            }
        }
        for (const auto& m : t.meta) {
            n_all += m.round_index == round;
        }
        CHECK(n_adapt == n_all / 10);
        CHECK(last_adapt < first_test);
    }
    CHECK(split_for_adaptation(t, 0.0).adapt.rows() == 0);
    CHECK(split_for_adaptation(t, 0.0).test == t);
    CHECK_THROWS_AS(split_for_adaptation(fixture::toy_table(16, 3, 0, 5, 1, 4), 0.1), AdaptError);
}

TEST_CASE("adapting with nothing reproduces the base model")
{
    const auto all = fixture::toy_table(900, 4, 1, 6, 3, 2);
    const auto base_rows = all.filter([](const RowMeta& m, std::size_t) { return m.subject_id != "S03"; });
    const auto new_rows = all.filter([](const RowMeta& m, std::size_t) { return m.subject_id == "S03"; });
    const auto base = train(base_rows, quick());
    const auto same = adapt_model(base, base_rows, new_rows, 0.0);
    CHECK(model_to_json(same).dump() == model_to_json(base).dump());
    const auto probe = fixture::toy_table(300, 4, 1, 99);
    CHECK(same.predict(probe) == base.predict(probe));
}

TEST_CASE("adaptation helps when the new subject's labels flip a cue")
{
    // The base subjects share one rule; the new subject's informative column
    // is mirrored, so only its own rows can teach the model.
    auto all = fixture::toy_table(1200, 3, 1, 7, 3, 4);
    for (std::size_t r = 0; r < all.rows(); ++r) {
        if (all.meta[r].subject_id == "S03") {
            all.values[r * all.cols() + 1] *= -1.0;
            all.values[r * all.cols() + 2] = all.labels[r] ? 5.0 : -5.0;
        } else {
            all.values[r * all.cols() + 2] = 0.0;
        }
    }
    const auto results = adaptation_study(all, quick(), 0.1);
    REQUIRE(results.size() == 3);
    const auto& s3 = results[2];
    CHECK(s3.subject_id == "S03");
    CHECK(s3.zero_shot < 0.5);
    CHECK(s3.adapted > s3.zero_shot);
    CHECK(s3.adapt_rows + s3.test_rows == 400);
    const auto j = to_json(results);
    CHECK(j.size() == 3);
}

TEST_CASE("trend over rounds")
{
    FeatureTable t;
    t.classes = {"no_suit", "suit"};
    t.task = Task::suit;
    t.schema = {"a", "b"};
    for (int r = 1; r <= 6; ++r) {
        for (int k = 0; k < 4; ++k) {
            RowMeta m;
            m.subject_id = "S01";
            m.round_index = r;
            t.append_row(m, k % 2, std::vector<double>{3.0 + (k % 2 ? 1.0 : -1.0), 2.0 * r});
        }
    }
    const std::vector<std::string> flat{"a"};
    const auto f = trend_over_rounds(t, flat);
    CHECK(f.slope == 0.0);
    CHECK(f.rounds == std::vector<int>{1, 2, 3, 4, 5, 6});
    CHECK(f.means == std::vector<double>(6, 3.0));
    const std::vector<std::string> rising{"b"};
    const auto g = trend_over_rounds(t, rising);
    CHECK(g.slope == doctest::Approx(2.0));
    CHECK(g.correlation == doctest::Approx(1.0));
    const std::vector<std::string> unknown{"zzz"};
    CHECK_THROWS_AS(trend_over_rounds(t, unknown), InputError);
    const auto few = t.filter([](const RowMeta& m, std::size_t) { return m.round_index <= 3; });
    CHECK_THROWS_AS(trend_over_rounds(few, flat), TrendError);
}
