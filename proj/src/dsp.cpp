#include "gaitstream/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "gaitstream/errors.hpp"

namespace gaitstream {

namespace {

using cplx = std::complex<double>;

std::vector<double> poly_mul(const std::vector<double>& p, const std::vector<double>& q)
{
    std::vector<double> r(p.size() + q.size() - 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < q.size(); ++j) {
            r[i + j] += p[i] * q[j];
        }
    }
    return r;
}

cplx bilinear(cplx s, double rate_hz) { return (2.0 * rate_hz + s) / (2.0 * rate_hz - s); }

double prewarp(double hz, double rate_hz) { return 2.0 * rate_hz * std::tan(std::numbers::pi * hz / rate_hz); }

// Left-half-plane Butterworth prototype poles with unit cutoff.
std::vector<cplx> prototype_poles(int order)
{
    std::vector<cplx> poles;
    for (int k = 1; k <= order; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + order - 1) / (2.0 * order);
        poles.emplace_back(std::cos(theta), std::sin(theta));
    }
    return poles;
}

// Groups digital poles into conjugate pairs (or real pairs) and builds the
// denominators; numerators are supplied by the caller per section.
std::vector<std::array<double, 3>> pair_denominators(std::vector<cplx> poles)
{
    std::vector<cplx> upper;
    std::vector<double> real;
    for (const cplx& p : poles) {
        if (std::abs(p.imag()) < 1e-12) {
            real.push_back(p.real());
        } else if (p.imag() > 0) {
            upper.push_back(p);
        }
    }
    std::sort(upper.begin(), upper.end(), [](cplx x, cplx y) { return std::abs(x) < std::abs(y); });
    std::sort(real.begin(), real.end());
    std::vector<std::array<double, 3>> dens;
    for (const cplx& p : upper) {
        dens.push_back({1.0, -2.0 * p.real(), std::norm(p)});
    }
    for (std::size_t i = 0; i + 1 < real.size(); i += 2) {
        dens.push_back({1.0, -(real[i] + real[i + 1]), real[i] * real[i + 1]});
    }
    if (real.size() % 2 == 1) {
        dens.push_back({1.0, -real.back(), 0.0});
    }
    return dens;
}

cplx section_response(const Biquad& q, cplx zinv)
{
    const cplx num = q.b[0] + zinv * (q.b[1] + zinv * q.b[2]);
    const cplx den = q.a[0] + zinv * (q.a[1] + zinv * q.a[2]);
    return num / den;
}

cplx cascade_response(const std::vector<Biquad>& sections, double hz, double rate_hz)
{
    const cplx zinv = std::polar(1.0, -2.0 * std::numbers::pi * hz / rate_hz);
    cplx h = 1.0;
    for (const auto& q : sections) {
        h *= section_response(q, zinv);
    }
    return h;
}

void finish(FilterCoefficients& c, double unit_gain_hz)
{
    const double g = std::abs(cascade_response(c.sections, unit_gain_hz, c.design.rate_hz));
    const double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(c.sections.size()));
    c.b = {1.0};
    c.a = {1.0};
    for (auto& q : c.sections) {
        for (double& v : q.b) {
            v *= per_section;
        }
        c.b = poly_mul(c.b, {q.b.begin(), q.b.end()});
        c.a = poly_mul(c.a, {q.a.begin(), q.a.end()});
    }
}

void check_finite(std::span<const double> x)
{
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) {
            throw InputError("non-finite sample at index " + std::to_string(i));
        }
    }
}

double median_of(std::vector<double> v)
{
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (n % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

// Fills runs flagged in `fill` using anchors where `anchor` is set.
InterpolationResult fill_runs(std::span<const double> x, std::span<const std::uint8_t> fill,
                              std::span<const std::uint8_t> anchor, int poly_order, std::size_t max_gap)
{
    const std::size_t n = x.size();
    InterpolationResult out{std::vector<double>(x.begin(), x.end()), std::vector<std::uint8_t>(fill.begin(), fill.end()),
                            {}};
    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < n; ++i) {
        if (anchor[i]) {
            valid.push_back(i);
        }
    }
    const std::size_t need = static_cast<std::size_t>(poly_order) + 1;
    const std::size_t k = 2 * need;

    std::size_t i = 0;
    while (i < n) {
        if (!fill[i]) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < n && fill[end]) {
            ++end;
        }
        const std::size_t len = end - i;
        if (valid.size() < need) {
            throw InterpolationError("need at least " + std::to_string(need) + " valid samples, have " +
                                     std::to_string(valid.size()));
        }
        // first valid index >= end, and count of valid indices < i
        const auto after_it = std::lower_bound(valid.begin(), valid.end(), end);
        const auto before_count = static_cast<std::size_t>(
            std::lower_bound(valid.begin(), valid.end(), i) - valid.begin());
        const std::size_t after_count = static_cast<std::size_t>(valid.end() - after_it);

        if (before_count == 0 || after_count == 0) {
            const double v = before_count == 0 ? x[*after_it] : x[valid[before_count - 1]];
            for (std::size_t j = i; j < end; ++j) {
                out.samples[j] = v;
                out.gap_mask[j] = 0;
            }
        } else if (len > max_gap) {
            out.unfilled.push_back({i, len});
        } else {
            std::size_t take_before = std::min(before_count, k / 2);
            std::size_t take_after = std::min(after_count, k - take_before);
            take_before = std::min(before_count, k - take_after);
            std::vector<std::size_t> idx;
            for (std::size_t j = before_count - take_before; j < before_count; ++j) {
                idx.push_back(valid[j]);
            }
            const auto first_after = static_cast<std::size_t>(after_it - valid.begin());
            for (std::size_t j = first_after; j < first_after + take_after; ++j) {
                idx.push_back(valid[j]);
            }
            const double center = 0.5 * (static_cast<double>(i) + static_cast<double>(end - 1));
            const double half_span = std::max(1.0, 0.5 * static_cast<double>(idx.back() - idx.front()));
            const int degree = std::min<int>(poly_order, static_cast<int>(idx.size()) - 1);
            Eigen::MatrixXd A(static_cast<Eigen::Index>(idx.size()), degree + 1);
            Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const double u = (static_cast<double>(idx[r]) - center) / half_span;
                double p = 1.0;
                for (int d = 0; d <= degree; ++d) {
                    A(static_cast<Eigen::Index>(r), d) = p;
                    p *= u;
                }
                y(static_cast<Eigen::Index>(r)) = x[idx[r]];
            }
            const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(y);
            for (std::size_t j = i; j < end; ++j) {
                const double u = (static_cast<double>(j) - center) / half_span;
                double v = 0.0;
                for (int d = degree; d >= 0; --d) {
                    v = v * u + coef(d);
                }
                out.samples[j] = v;
                out.gap_mask[j] = 0;
            }
        }
        i = end;
    }
    return out;
}

} // namespace

std::complex<double> FilterCoefficients::response(double hz) const
{
    return cascade_response(sections, hz, design.rate_hz);
}

double FilterCoefficients::gain_db(double hz) const { return 20.0 * std::log10(std::abs(response(hz))); }

double FilterCoefficients::max_pole_radius() const
{
    double r = 0.0;
    for (const auto& p : poles) {
        r = std::max(r, std::abs(p));
    }
    return r;
}

FilterCoefficients design_bandpass(double low_hz, double high_hz, int order, double rate_hz)
{
    if (!(rate_hz > 0.0)) {
        throw DesignError("rate_hz must be positive");
    }
    if (!(low_hz > 0.0)) {
        throw DesignError("low cut-off must be > 0 Hz");
    }
    if (!(high_hz < rate_hz / 2.0)) {
        throw DesignError("high cut-off must be below Nyquist (" + std::to_string(rate_hz / 2.0) + " Hz)");
    }
    if (!(low_hz < high_hz)) {
        throw DesignError("low cut-off must be below high cut-off");
    }
    if (order != 2 && order != 4 && order != 6 && order != 8) {
        throw DesignError("order must be one of 2, 4, 6, 8");
    }

    const double w_lo = prewarp(low_hz, rate_hz);
    const double w_hi = prewarp(high_hz, rate_hz);
    const double bw = w_hi - w_lo;
    const double w0_sq = w_lo * w_hi;

    FilterCoefficients c;
    c.design = {FilterKind::bandpass, low_hz, high_hz, order, rate_hz};
    for (const cplx& p : prototype_poles(order)) {
        // s^2 - p*bw*s + w0^2 = 0
        const cplx disc = std::sqrt(p * p * bw * bw - 4.0 * w0_sq);
        c.poles.push_back(bilinear((p * bw + disc) / 2.0, rate_hz));
        c.poles.push_back(bilinear((p * bw - disc) / 2.0, rate_hz));
    }
    // Each section carries one zero at z = 1 and one at z = -1.
    for (const auto& den : pair_denominators(c.poles)) {
        c.sections.push_back({{1.0, 0.0, -1.0}, den});
    }
    const double center_hz = rate_hz / std::numbers::pi * std::atan(std::sqrt(w0_sq) / (2.0 * rate_hz));
    finish(c, center_hz);
    return c;
}

FilterCoefficients design_lowpass(double cutoff_hz, int order, double rate_hz)
{
    if (!(rate_hz > 0.0)) {
        throw DesignError("rate_hz must be positive");
    }
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < rate_hz / 2.0)) {
        throw DesignError("cut-off must lie in (0, Nyquist)");
    }
    if (order < 1 || order > 8) {
        throw DesignError("order must be in 1..8");
    }
    const double wc = prewarp(cutoff_hz, rate_hz);
    FilterCoefficients c;
    c.design = {FilterKind::lowpass, 0.0, cutoff_hz, order, rate_hz};
    for (const cplx& p : prototype_poles(order)) {
        c.poles.push_back(bilinear(p * wc, rate_hz));
    }
    for (const auto& den : pair_denominators(c.poles)) {
        if (den[2] == 0.0) {
            c.sections.push_back({{1.0, 1.0, 0.0}, den});
        } else {
            c.sections.push_back({{1.0, 2.0, 1.0}, den});
        }
    }
    finish(c, 0.0);
    return c;
}

FilterState::FilterState(const FilterCoefficients& c) : sections_(c.sections), state_(2 * c.sections.size(), 0.0) {}

void FilterState::process(std::span<const double> in, std::span<double> out)
{
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = process(in[i]);
    }
}

void FilterState::reset() { std::fill(state_.begin(), state_.end(), 0.0); }

std::vector<double> apply_filter(std::span<const double> x, const FilterCoefficients& c, FilterMode mode)
{
    check_finite(x);
    if (mode == FilterMode::causal) {
        std::vector<double> y(x.size());
        FilterState st(c);
        st.process(x, y);
        return y;
    }

    const std::size_t pad = 3 * static_cast<std::size_t>(c.design.order);
    const std::size_t n = x.size();
    if (n <= pad) {
        throw LengthError("zero-phase filtering needs more than " + std::to_string(pad) + " samples, got " +
                          std::to_string(n));
    }
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) {
        ext.push_back(2.0 * x[0] - x[i]);
    }
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) {
        ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    FilterState st(c);
    for (double& v : ext) {
        v = st.process(v);
    }
    st.reset();
    for (auto it = ext.rbegin(); it != ext.rend(); ++it) {
        *it = st.process(*it);
    }
    return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                               ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

InterpolationResult interpolate_gaps(std::span<const double> x, std::span<const std::uint8_t> gap_mask,
                                     int poly_order, std::size_t max_gap)
{
    if (x.size() != gap_mask.size()) {
        throw InputError("samples and gap_mask lengths differ");
    }
    if (poly_order < 1) {
        throw InterpolationError("poly_order must be >= 1");
    }
    std::vector<std::uint8_t> anchor(gap_mask.size());
    for (std::size_t i = 0; i < gap_mask.size(); ++i) {
        anchor[i] = gap_mask[i] ? 0 : 1;
    }
    return fill_runs(x, gap_mask, anchor, poly_order, max_gap);
}

OutlierResult remove_outliers(std::span<const double> x, double threshold_sigma, std::span<const std::uint8_t> ignore)
{
    if (x.size() < 16) {
        throw LengthError("outlier removal needs at least 16 samples");
    }
    if (!(threshold_sigma > 0.0)) {
        throw InputError("threshold_sigma must be positive");
    }
    if (!ignore.empty() && ignore.size() != x.size()) {
        throw InputError("ignore mask length differs from samples");
    }
    auto ignored = [&](std::size_t i) { return !ignore.empty() && ignore[i] != 0; };

    std::vector<double> used;
    used.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!ignored(i)) {
            used.push_back(x[i]);
        }
    }
    OutlierResult out;
    out.samples.assign(x.begin(), x.end());
    out.outlier_mask.assign(x.size(), 0);
    if (used.empty()) {
        return out;
    }
    out.median = median_of(used);
    std::vector<double> dev(used.size());
    double dev_sum = 0.0;
    for (std::size_t i = 0; i < used.size(); ++i) {
        dev[i] = std::abs(used[i] - out.median);
        dev_sum += dev[i];
    }
    const double mad = median_of(dev);
    if (mad > 0.0) {
        out.scale = kMadToSigma * mad;
    } else if (dev_sum > 0.0) {
        out.degenerate_scale = true;
        out.scale = kMeanAbsDevToSigma * dev_sum / static_cast<double>(used.size());
    } else {
        return out;
    }

    const double limit = threshold_sigma * out.scale;
    bool any = false;
    std::vector<std::uint8_t> anchor(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (ignored(i)) {
            continue;
        }
        if (std::abs(x[i] - out.median) > limit) {
            out.outlier_mask[i] = 1;
            any = true;
        } else {
            anchor[i] = 1;
        }
    }
    if (any) {
        auto filled = fill_runs(x, out.outlier_mask, anchor, 1, x.size());
        out.samples = std::move(filled.samples);
    }
    return out;
}

} // namespace gaitstream

namespace gaitstream {

std::vector<double> running_median(std::span<const double> x, std::size_t window, bool exclude_center)
{
    const std::size_t half = window / 2;
    std::vector<double> out(x.size());
    std::vector<double> buf;
    buf.reserve(2 * half + 1);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(x.size(), i + half + 1);
        buf.assign(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(hi));
        if (exclude_center && buf.size() > 1) {
            buf.erase(buf.begin() + static_cast<std::ptrdiff_t>(i - lo));
        }
        out[i] = median_of(std::move(buf));
        buf = {};
    }
    return out;
}

} // namespace gaitstream
