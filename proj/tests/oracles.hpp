#pragma once

// Straightforward reference implementations the library is checked against.
// They favour obviousness over speed and share no code with src/.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gaitstream/dsp.hpp"

namespace oracle {

inline double rel_err(double a, double b)
{
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
}

// |H| of an analog Butterworth band-pass at the pre-warped digital frequency.
// The bilinear transform maps the digital response exactly onto this curve.
inline double butterworth_bandpass_gain(double f, double lo, double hi, int order, double rate)
{
    const double w = std::tan(M_PI * f / rate);
    const double wl = std::tan(M_PI * lo / rate);
    const double wh = std::tan(M_PI * hi / rate);
    const double eps = (w * w - wl * wh) / (w * (wh - wl));
    return 1.0 / std::sqrt(1.0 + std::pow(eps * eps, order));
}

inline double butterworth_lowpass_gain(double f, double fc, int order, double rate)
{
    const double r = std::tan(M_PI * f / rate) / std::tan(M_PI * fc / rate);
    return 1.0 / std::sqrt(1.0 + std::pow(r * r, order));
}

// H(e^{jw}) as the product of the section responses.
inline std::complex<double> sos_response(const std::vector<gaitstream::Biquad>& sections, double f, double rate)
{
    const std::complex<double> z1 = std::polar(1.0, -2.0 * M_PI * f / rate);
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h = 1.0;
    for (const auto& s : sections) {
        h *= (s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (1.0 + s.a[1] * z1 + s.a[2] * z2);
    }
    return h;
}

// Roots of z^2 + a1 z + a2 for every section.
inline std::vector<std::complex<double>> sos_poles(const std::vector<gaitstream::Biquad>& sections)
{
    std::vector<std::complex<double>> out;
    for (const auto& s : sections) {
        const std::complex<double> d = std::sqrt(std::complex<double>(s.a[1] * s.a[1] - 4.0 * s.a[2]));
        out.push_back((-s.a[1] + d) / 2.0);
        out.push_back((-s.a[1] - d) / 2.0);
    }
    return out;
}

// Direct form I cascade, a different structure from the library's.
inline std::vector<double> sos_filter_df1(const std::vector<gaitstream::Biquad>& sections, std::span<const double> x)
{
    std::vector<double> y(x.begin(), x.end());
    for (const auto& s : sections) {
        double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
        for (double& v : y) {
            const double in = v;
            const double out = s.b[0] * in + s.b[1] * x1 + s.b[2] * x2 - s.a[1] * y1 - s.a[2] * y2;
            x2 = x1;
            x1 = in;
            y2 = y1;
            y1 = out;
            v = out;
        }
    }
    return y;
}

inline std::vector<double> filtfilt_df1(const std::vector<gaitstream::Biquad>& sections, std::span<const double> x,
                                        std::size_t pad)
{
    const std::size_t n = x.size();
    std::vector<double> ext;
    for (std::size_t i = pad; i >= 1; --i) {
        ext.push_back(2 * x[0] - x[i]);
    }
    for (double v : x) {
        ext.push_back(v);
    }
    for (std::size_t i = 1; i <= pad; ++i) {
        ext.push_back(2 * x[n - 1] - x[n - 1 - i]);
    }
    auto fwd = sos_filter_df1(sections, ext);
    std::reverse(fwd.begin(), fwd.end());
    auto back = sos_filter_df1(sections, fwd);
    std::reverse(back.begin(), back.end());
    return std::vector<double>(back.begin() + static_cast<long>(pad), back.begin() + static_cast<long>(pad + n));
}

inline double mean(std::span<const double> x)
{
    double s = 0;
    for (double v : x) {
        s += v;
    }
    return s / static_cast<double>(x.size());
}

struct Emg {
    double rms, variance, mav, ssc;
};

inline Emg emg(std::span<const double> x, double threshold)
{
    const std::size_t n = x.size();
    const double m = mean(x);
    Emg e{0, 0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        e.rms += x[i] * x[i] / static_cast<double>(n);
        e.variance += (x[i] - m) * (x[i] - m) / static_cast<double>(n);
        e.mav += std::abs(x[i]) / static_cast<double>(n);
    }
    e.rms = std::sqrt(e.rms);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double left = x[i] - x[i - 1];
        const double right = x[i] - x[i + 1];
        if (left * right > threshold) {
            e.ssc += 1;
        }
    }
    return e;
}

struct Axis {
    double rms, mean, std, jerk;
};

inline Axis axis(std::span<const double> x, double rate)
{
    const std::size_t n = x.size();
    Axis a{0, mean(x), 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        a.rms += x[i] * x[i] / static_cast<double>(n);
        a.std += (x[i] - a.mean) * (x[i] - a.mean) / static_cast<double>(n);
    }
    a.rms = std::sqrt(a.rms);
    a.std = std::sqrt(a.std);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double d = (x[i + 1] - x[i]) * rate;
        a.jerk += d * d / static_cast<double>(n - 1);
    }
    a.jerk = std::sqrt(a.jerk);
    return a;
}

inline double sma(std::span<const double> x, std::span<const double> y, std::span<const double> z)
{
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += (std::abs(x[i]) + std::abs(y[i]) + std::abs(z[i])) / static_cast<double>(x.size());
    }
    return s;
}

// Counts windows by sliding one at a time.
inline std::size_t window_count(std::size_t length, std::size_t window, std::size_t hop)
{
    std::size_t n = 0;
    for (std::size_t start = 0; start + window <= length; start += hop) {
        ++n;
    }
    return n;
}

inline double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0)
{
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) {
        x = d(rng);
    }
    return v;
}

inline double pearson(std::span<const double> x, std::span<const double> y)
{
    const double mx = mean(x), my = mean(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace oracle
