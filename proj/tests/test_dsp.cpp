#include <cmath>
#include <random>

#include "doctest.h"

#include "gaitstream/dsp.hpp"
#include "gaitstream/errors.hpp"
#include "oracles.hpp"

using namespace gaitstream;

TEST_CASE("band-pass gain matches the analog Butterworth curve")
{
    for (int order : {2, 4, 6, 8}) {
        const auto c = design_bandpass(20.0, 450.0, order, 2000.0);
        CHECK(c.sections.size() == static_cast<std::size_t>(order));
        for (double f = 1.0; f < 1000.0; f += 7.3) {
            const double want = oracle::butterworth_bandpass_gain(f, 20.0, 450.0, order, 2000.0);
            const double got = std::abs(oracle::sos_response(c.sections, f, 2000.0));
            CHECK(got == doctest::Approx(want).epsilon(1e-9));
            CHECK(std::abs(c.response(f)) == doctest::Approx(got).epsilon(1e-6));
        }
    }
}

TEST_CASE("reference band-pass meets its band edges")
{
    const auto c = design_bandpass(20.0, 450.0, 4, 2000.0);
    const auto db = [&](double f) { return 20.0 * std::log10(std::abs(oracle::sos_response(c.sections, f, 2000.0))); };
    CHECK(std::abs(db(100.0)) <= 1.0);
    CHECK(db(5.0) <= -30.0);
    CHECK(db(900.0) <= -30.0);
    CHECK(db(20.0) == doctest::Approx(-3.0103).epsilon(1e-3));
    CHECK(db(450.0) == doctest::Approx(-3.0103).epsilon(1e-3));
    CHECK(c.gain_db(100.0) == doctest::Approx(db(100.0)).epsilon(1e-6));
}

TEST_CASE("low-pass gain matches the analog curve")
{
    const auto c = design_lowpass(20.0, 4, 200.0);
    for (double f = 0.5; f < 100.0; f += 1.7) {
        CHECK(std::abs(oracle::sos_response(c.sections, f, 200.0)) ==
              doctest::Approx(oracle::butterworth_lowpass_gain(f, 20.0, 4, 200.0)).epsilon(1e-9));
    }
}

TEST_CASE("poles of every design lie inside the unit circle")
{
    for (int order : {2, 4, 6, 8}) {
        for (double rate : {200.0, 1000.0, 2000.0}) {
            for (auto c : {design_bandpass(1.0, rate * 0.45, order, rate), design_bandpass(20.0, 60.0, order, rate),
                           design_lowpass(rate * 0.01, order, rate), design_lowpass(rate * 0.4, order, rate)}) {
                for (const auto& p : oracle::sos_poles(c.sections)) {
                    CHECK(std::abs(p) <= 1.0 - 1e-8);
                }
                CHECK(c.max_pole_radius() <= 1.0 - 1e-8);
            }
        }
    }
}

TEST_CASE("invalid designs are rejected")
{
    CHECK_THROWS_AS(design_bandpass(20.0, 1001.0, 4, 2000.0), DesignError);
    CHECK_THROWS_AS(design_bandpass(450.0, 20.0, 4, 2000.0), DesignError);
    CHECK_THROWS_AS(design_bandpass(0.0, 450.0, 4, 2000.0), DesignError);
    CHECK_THROWS_AS(design_bandpass(20.0, 450.0, 3, 2000.0), DesignError);
    CHECK_THROWS_AS(design_lowpass(120.0, 4, 200.0), DesignError);
}

TEST_CASE("causal filtering agrees with a direct form I cascade")
{
    const auto c = design_bandpass(20.0, 450.0, 4, 2000.0);
    std::mt19937_64 rng(1);
    const auto x = oracle::random_vector(rng, 5000);
    const auto got = apply_filter(x, c, FilterMode::causal);
    const auto want = oracle::sos_filter_df1(c.sections, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        REQUIRE(std::abs(got[i] - want[i]) <= 1e-12 * (1.0 + std::abs(want[i])));
    }
}

TEST_CASE("zero-phase filtering agrees with a forward-backward oracle")
{
    const auto c = design_bandpass(20.0, 450.0, 4, 2000.0);
    std::mt19937_64 rng(2);
    const auto x = oracle::random_vector(rng, 3000);
    const auto got = apply_filter(x, c, FilterMode::zero_phase);
    const auto want = oracle::filtfilt_df1(c.sections, x, 12);
    for (std::size_t i = 0; i < x.size(); ++i) {
        REQUIRE(std::abs(got[i] - want[i]) <= 1e-10 * (1.0 + std::abs(want[i])));
    }
}

TEST_CASE("band-pass rejects DC and passes 100 Hz")
{
    const auto c = design_bandpass(20.0, 450.0, 4, 2000.0);
    const std::vector<double> dc(8000, 3.0);
    const auto y = apply_filter(dc, c, FilterMode::causal);
    CHECK(std::abs(y.back()) < 1e-6);

    std::vector<double> sine(4000);
    for (std::size_t i = 0; i < sine.size(); ++i) {
        sine[i] = std::sin(2.0 * M_PI * 100.0 * static_cast<double>(i) / 2000.0);
    }
    const auto s = apply_filter(sine, c, FilterMode::causal);
    double peak = 0.0;
    for (std::size_t i = 1000; i < s.size(); ++i) {
        peak = std::max(peak, std::abs(s[i]));
    }
    CHECK(std::abs(20.0 * std::log10(peak)) <= 1.0);
}

TEST_CASE("zeros stay zeros in both modes")
{
    const auto c = design_bandpass(20.0, 450.0, 4, 2000.0);
    const std::vector<double> z(500, 0.0);
    for (auto mode : {FilterMode::causal, FilterMode::zero_phase}) {
        for (double v : apply_filter(z, c, mode)) {
            REQUIRE(v == 0.0);
        }
    }
}

TEST_CASE("filtering is linear")
{
    const auto c = design_bandpass(20.0, 450.0, 4, 2000.0);
    std::mt19937_64 rng(4);
    const auto x = oracle::random_vector(rng, 2000);
    const auto y = oracle::random_vector(rng, 2000, 5.0);
    const double a = 1.7, b = -0.3;
    std::vector<double> mix(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mix[i] = a * x[i] + b * y[i];
    }
    for (auto mode : {FilterMode::causal, FilterMode::zero_phase}) {
        const auto fx = apply_filter(x, c, mode);
        const auto fy = apply_filter(y, c, mode);
        const auto fm = apply_filter(mix, c, mode);
        double scale = 0.0;
        for (double v : fm) {
            scale = std::max(scale, std::abs(v));
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            REQUIRE(std::abs(fm[i] - (a * fx[i] + b * fy[i])) <= 1e-9 * scale);
        }
    }
}

TEST_CASE("zero-phase output of a symmetric input is symmetric away from the ends")
{
    // Each pass starts from rest at a different end, so only the interior is
    // free of start-up transients.
    const auto c = design_bandpass(20.0, 450.0, 4, 2000.0);
    std::mt19937_64 rng(8);
    auto half = oracle::random_vector(rng, 4000);
    std::vector<double> x(half.begin(), half.end());
    x.insert(x.end(), half.rbegin(), half.rend());
    const auto y = apply_filter(x, c, FilterMode::zero_phase);
    for (std::size_t i = 2000; i < y.size() - 2000; ++i) {
        REQUIRE(std::abs(y[i] - y[y.size() - 1 - i]) <= 1e-6);
    }
}

TEST_CASE("chunked streaming matches one-shot causal filtering bit for bit")
{
    const auto c = design_bandpass(20.0, 450.0, 4, 2000.0);
    std::mt19937_64 rng(9);
    const auto x = oracle::random_vector(rng, 4096);
    const auto whole = apply_filter(x, c, FilterMode::causal);
    for (std::size_t chunk : {1u, 3u, 7u, 64u, 256u, 1000u}) {
        FilterState st(c);
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < x.size(); i += chunk) {
            const std::size_t n = std::min(chunk, x.size() - i);
            st.process(std::span<const double>(x).subspan(i, n), std::span<double>(out).subspan(i, n));
        }
        CHECK(out == whole);
    }
}

TEST_CASE("filter input errors")
{
    const auto c = design_bandpass(20.0, 450.0, 4, 2000.0);
    CHECK_THROWS_AS(apply_filter(std::vector<double>(12, 1.0), c, FilterMode::zero_phase), LengthError);
    std::vector<double> bad(100, 0.0);
    bad[5] = std::nan("");
    CHECK_THROWS_AS(apply_filter(bad, c, FilterMode::causal), InputError);
}

TEST_CASE("interpolation restores polynomials")
{
    std::vector<double> ramp(200), quad(200), flat(200, 4.25);
    for (std::size_t i = 0; i < ramp.size(); ++i) {
        const double t = static_cast<double>(i);
        ramp[i] = 0.5 * t - 3.0;
        quad[i] = 0.01 * t * t - 0.7 * t + 2.0;
    }
    std::vector<std::uint8_t> mask(200, 0);
    std::fill(mask.begin() + 50, mask.begin() + 60, 1);

    auto r = interpolate_gaps(ramp, mask, 1, 50);
    for (std::size_t i = 0; i < ramp.size(); ++i) {
        CHECK(r.samples[i] == doctest::Approx(ramp[i]).epsilon(1e-9));
    }
    CHECK(r.unfilled.empty());
    for (auto m : r.gap_mask) {
        CHECK(m == 0);
    }

    auto f = interpolate_gaps(flat, mask, 3, 50);
    for (double v : f.samples) {
        CHECK(v == doctest::Approx(4.25).epsilon(1e-12));
    }

    std::vector<std::uint8_t> mask20(200, 0);
    std::fill(mask20.begin() + 100, mask20.begin() + 120, 1);
    auto q = interpolate_gaps(quad, mask20, 3, 50);
    for (std::size_t i = 100; i < 120; ++i) {
        CHECK(oracle::rel_err(q.samples[i], quad[i]) <= 1e-6);
    }
}

TEST_CASE("long gaps stay missing, edge gaps take the nearest value")
{
    std::vector<double> x(100, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<double>(i);
    }
    std::vector<std::uint8_t> mask(100, 0);
    std::fill(mask.begin(), mask.begin() + 5, 1);
    std::fill(mask.begin() + 40, mask.begin() + 70, 1);
    std::fill(mask.begin() + 95, mask.end(), 1);
    const auto r = interpolate_gaps(x, mask, 1, 10);
    REQUIRE(r.unfilled.size() == 1);
    CHECK(r.unfilled[0] == GapRun{40, 30});
    CHECK(r.samples[0] == 5.0);
    CHECK(r.samples[99] == 94.0);
    CHECK(r.gap_mask[50] == 1);
    CHECK(r.gap_mask[0] == 0);
}

TEST_CASE("interpolation without gaps is the identity")
{
    std::mt19937_64 rng(10);
    const auto x = oracle::random_vector(rng, 300);
    const auto r = interpolate_gaps(x, std::vector<std::uint8_t>(300, 0), 3, 20);
    CHECK(r.samples == x);
}

TEST_CASE("outlier removal on hand-checked fixtures")
{
    const std::vector<double> flat(101, 2.0);
    const auto a = remove_outliers(flat, 5.0);
    CHECK(a.samples == flat);
    for (auto m : a.outlier_mask) {
        CHECK(m == 0);
    }

    // 50 x -1, one 0, 49 x +1 and the spike: median 0, MAD 1, sigma 1.4826.
    std::vector<double> x(101);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = i % 2 ? 1.0 : -1.0;
    }
    x[1] = 0.0;
    x[50] = 10.0 * kMadToSigma;
    const auto b = remove_outliers(x, 5.0);
    CHECK(b.median == doctest::Approx(oracle::median(x)));
    CHECK(b.scale == doctest::Approx(kMadToSigma));
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(b.outlier_mask[i] == (i == 50 ? 1 : 0));
    }
    // least-squares line through x[48], x[49], x[51], x[52] = -1, 1, 1, -1
    CHECK(b.samples[50] == doctest::Approx(0.0));

    std::vector<double> two(60, 1.0);
    two[10] = 50.0;
    two[40] = -48.0;
    const auto c = remove_outliers(two, 5.0);
    CHECK(c.degenerate_scale);
    CHECK(c.outlier_mask[10] == 1);
    CHECK(c.outlier_mask[40] == 1);
    CHECK(c.samples[10] == 1.0);
    CHECK(c.samples[40] == 1.0);
}

TEST_CASE("running median matches a sort-based oracle")
{
    std::mt19937_64 rng(12);
    const auto x = oracle::random_vector(rng, 200);
    for (std::size_t w : {1u, 3u, 5u, 11u}) {
        for (bool exclude : {false, true}) {
            const auto got = running_median(x, w, exclude);
            const std::size_t h = w / 2;
            for (std::size_t i = 0; i < x.size(); ++i) {
                std::vector<double> buf;
                for (std::size_t j = i >= h ? i - h : 0; j <= std::min(x.size() - 1, i + h); ++j) {
                    if (!(exclude && j == i && w > 1)) {
                        buf.push_back(x[j]);
                    }
                }
                REQUIRE(got[i] == doctest::Approx(oracle::median(buf)).epsilon(1e-15));
            }
        }
    }
}
