#include <cmath>
#include <random>

#include "doctest.h"

#include "fixtures.hpp"
#include "gaitstream/dataset.hpp"
#include "gaitstream/errors.hpp"
#include "gaitstream/pca.hpp"
#include "gaitstream/synthgait.hpp"

using namespace gaitstream;

namespace {

FeatureTable from_rows(const std::vector<std::vector<double>>& rows)
{
    FeatureTable t;
    t.classes = {"forward", "turning"};
    for (std::size_t c = 0; c < rows.at(0).size(); ++c) {
        t.schema.push_back("c" + std::to_string(c));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        RowMeta m;
        m.subject_id = "S01";
        t.append_row(m, static_cast<int>(i % 2), rows[i]);
    }
    return t;
}

} // namespace

TEST_CASE("points on a line have one component")
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 200; ++i) {
        const double s = d(rng);
        rows.push_back({1.0 + 2.0 * s, -3.0 * s, 0.5 * s + 7.0, 4.0});
    }
    const auto r = pca_project(from_rows(rows), 2);
    CHECK(r.features.size() == 3); // the constant column is dropped
    double total = 0;
    for (double v : r.explained_variance) {
        total += v;
    }
    CHECK(r.explained_variance[1] <= 1e-9 * total);
    CHECK(r.explained_ratio[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("explained variance is ordered and the signs are fixed")
{
    const auto t = fixture::toy_table(300, 6, 2, 3);
    const auto r = pca_project(t, 3);
    CHECK(r.dims == 3);
    CHECK(r.coords.size() == 3 * t.rows());
    for (std::size_t k = 1; k < r.explained_variance.size(); ++k) {
        CHECK(r.explained_variance[k] <= r.explained_variance[k - 1]);
    }
    double ratio = 0;
    for (double v : r.explained_ratio) {
        ratio += v;
    }
    CHECK(ratio == doctest::Approx(1.0));
    for (const auto& comp : r.components) {
        double norm = 0, biggest = 0;
        for (double v : comp) {
            norm += v * v;
            if (std::abs(v) > std::abs(biggest)) {
                biggest = v;
            }
        }
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(biggest > 0.0);
    }
    // the coordinates are centred
    for (std::size_t d = 0; d < 3; ++d) {
        double m = 0;
        for (std::size_t i = 0; i < t.rows(); ++i) {
            m += r.coords[i * 3 + d];
        }
        CHECK(std::abs(m / static_cast<double>(t.rows())) < 1e-9);
    }
}

TEST_CASE("projection errors")
{
    CHECK_THROWS_AS(pca_project(from_rows({{1, 2}, {1, 2}, {1, 2}}), 1), ProjectionError);
    CHECK_THROWS_AS(pca_project(from_rows({{1, 2}, {2, 3}}), 3), ProjectionError);
    CHECK_THROWS_AS(pca_project(fixture::toy_table(50, 3, 0), 0), ProjectionError);
}

namespace {

// Distance between the two class centroids and mean distance of a row to its
// own class centroid, both in the 2-D projection.
std::pair<double, double> separation(const FeatureTable& t, const PcaResult& r)
{
    double c[2][2] = {{0, 0}, {0, 0}};
    std::size_t n[2] = {0, 0};
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const auto k = static_cast<std::size_t>(t.labels[i]);
        c[k][0] += r.coords[2 * i];
        c[k][1] += r.coords[2 * i + 1];
        ++n[k];
    }
    for (auto k : {0, 1}) {
        c[k][0] /= static_cast<double>(n[k]);
        c[k][1] /= static_cast<double>(n[k]);
    }
    double spread = 0;
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const auto k = static_cast<std::size_t>(t.labels[i]);
        spread += std::hypot(r.coords[2 * i] - c[k][0], r.coords[2 * i + 1] - c[k][1]);
    }
    return {std::hypot(c[0][0] - c[1][0], c[0][1] - c[1][1]), spread / static_cast<double>(t.rows())};
}

} // namespace

TEST_CASE("two well separated clusters stay apart in the projection")
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 400; ++i) {
        const double shift = i % 2 ? 4.0 : -4.0;
        rows.push_back({shift + d(rng), shift + d(rng), d(rng), 0.5 * shift + d(rng), d(rng)});
    }
    const auto t = from_rows(rows);
    const auto [dist, spread] = separation(t, pca_project(t, 2));
    CHECK(dist > 2.0 * spread);
}

TEST_CASE("turning windows of one subject separate along the gyro magnitude features")
{
    // On all 52 standardized IMU columns the many acc and pitch features that
    // carry no turning information dominate the within-class spread, so the
    // check uses the gyro RMS and SMA columns.
    const std::vector<std::string> cols{"rollator_left_gyro_x.rms",  "rollator_left_gyro_y.rms",
                                        "rollator_left_gyro_z.rms",  "rollator_right_gyro_x.rms",
                                        "rollator_right_gyro_y.rms", "rollator_right_gyro_z.rms",
                                        "rollator_left_gyro.sma",    "rollator_right_gyro.sma"};
    const StudyDesign design({4, 2, 42, {}});
    for (int subject : {0, 2}) {
        std::vector<Session> v;
        for (std::size_t i = 0; i < design.size(); ++i) {
            const auto& spec = design.sessions()[i];
            if (spec.subject_index == subject && spec.scenario.rollator) {
                v.push_back(preprocess_session(design.generate(i), PreprocessOptions{}));
            }
        }
        const auto t = build_dataset(v, Task::movement).select_columns(cols);
        const auto [dist, spread] = separation(t, pca_project(t, 2));
        CHECK(dist > 2.0 * spread);
    }
}
