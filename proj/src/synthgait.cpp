#include "gaitstream/synthgait.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>

#include "gaitstream/dsp.hpp"
#include "gaitstream/errors.hpp"

namespace gaitstream {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kRampS = 0.3;
constexpr double kBurstWidth = 0.06;     // gait-phase sigma
constexpr double kTonic = 0.25;
constexpr double kCarrierHighHz = 150.0;
constexpr double kSuitCarrierHighHz = 280.0;
constexpr double kSpikeS = 0.01;
constexpr double kWalkSpeed = 0.7;       // m/s, for centripetal acceleration
constexpr double kGravity = 9.81;

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double raised_cosine(double u)
{
    u = std::clamp(u, 0.0, 1.0);
    return 0.5 * (1.0 - std::cos(kPi * u));
}

struct Carrier {
    FilterCoefficients coeffs;
    double norm = 1.0; // makes unit-variance white noise come out with unit variance
};

const Carrier& carrier_for(double high_hz)
{
    static std::mutex mu;
    static std::map<double, Carrier> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(high_hz);
    if (it == cache.end()) {
        Carrier c{design_bandpass(20.0, high_hz, 4, kEmgRateHz), 1.0};
        FilterState st(c.coeffs);
        double energy = 0.0;
        for (int i = 0; i < 8000; ++i) {
            const double h = st.process(i == 0 ? 1.0 : 0.0);
            energy += h * h;
        }
        c.norm = 1.0 / std::sqrt(energy);
        it = cache.emplace(high_hz, std::move(c)).first;
    }
    return it->second;
}

// Burst phases within one stride, fractions of the gait cycle.
std::vector<double> burst_phases(const EmgChannelSpec& ch, std::size_t index)
{
    const double offset = ch.side == Side::right ? 0.5 : 0.0;
    if (ch.leg) {
        const bool rectus = std::string_view(ch.id).find("rectus") != std::string_view::npos;
        return rectus ? std::vector<double>{0.05 + offset, 0.55 + offset}
                      : std::vector<double>{0.35 + offset, 0.85 + offset};
    }
    if (ch.wrist) {
        return {0.25 + offset + 0.03 * static_cast<double>(index % 3)};
    }
    return {(index == 2 ? 0.25 : 0.0) + offset};
}

struct Profile {
    std::vector<double> yaw; // dps at IMU rate
    double max_rate = 0.0;
};

double yaw_at(const PathPlan& plan, const std::vector<double>& starts, double t)
{
    const auto& seg = plan.segments;
    std::size_t i = 0;
    while (i + 1 < seg.size() && t >= starts[i + 1]) {
        ++i;
    }
    const double start = starts[i];
    const double end = start + seg[i].duration_s;
    double v = seg[i].yaw_rate_dps;
    const double half = kRampS / 2.0;
    if (i > 0 && t - start < half) {
        const double prev = seg[i - 1].yaw_rate_dps;
        v = prev + (v - prev) * raised_cosine((t - start + half) / kRampS);
    } else if (i + 1 < seg.size() && end - t < half) {
        const double next = seg[i + 1].yaw_rate_dps;
        v = v + (next - v) * raised_cosine((t - end + half) / kRampS);
    }
    return v;
}

double zigzag(double t, double period, double phase)
{
    const double hold = 0.8 / 2.2;
    const double trans = 0.3 / 2.2;
    double u = std::fmod(t / period + phase, 1.0);
    if (u < hold) {
        return 1.0;
    }
    u -= hold;
    if (u < trans) {
        return 1.0 - 2.0 * raised_cosine(u / trans);
    }
    u -= trans;
    if (u < hold) {
        return -1.0;
    }
    u -= hold;
    return -1.0 + 2.0 * raised_cosine(u / trans);
}

void add_gaps(ChannelSeries& c, double rate_per_s, std::mt19937_64& rng)
{
    if (rate_per_s <= 0.0) {
        return;
    }
    std::poisson_distribution<int> count(rate_per_s * c.duration_s());
    const int n = count(rng);
    const auto len = c.samples.size();
    for (int g = 0; g < n; ++g) {
        const auto start = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(len)));
        const auto run = static_cast<std::size_t>(std::ceil(uniform(rng, 0.002, 0.15) * c.rate_hz));
        for (std::size_t i = start; i < std::min(len, start + run); ++i) {
            c.samples[i] = 0.0;
            c.gap_mask[i] = 1;
        }
    }
}

} // namespace

const std::array<EmgChannelSpec, kEmgChannelCount>& emg_channel_specs()
{
    static const std::array<EmgChannelSpec, kEmgChannelCount> specs{{
        {"emg_erector_spinae_l", Placement::back, Side::left, false, false},
        {"emg_erector_spinae_r", Placement::back, Side::right, false, false},
        {"emg_trapezius", Placement::back, Side::left, false, false},
        {"emg_brachioradialis_l", Placement::left_wrist, Side::left, false, true},
        {"emg_flexor_digitorum_l", Placement::left_wrist, Side::left, false, true},
        {"emg_extensor_carpi_ulnaris_l", Placement::left_wrist, Side::left, false, true},
        {"emg_brachioradialis_r", Placement::right_wrist, Side::right, false, true},
        {"emg_flexor_digitorum_r", Placement::right_wrist, Side::right, false, true},
        {"emg_extensor_carpi_ulnaris_r", Placement::right_wrist, Side::right, false, true},
        {"emg_rectus_femoris_l", Placement::left_leg, Side::left, true, false},
        {"emg_biceps_femoris_l", Placement::left_leg, Side::left, true, false},
        {"emg_rectus_femoris_r", Placement::right_leg, Side::right, true, false},
        {"emg_biceps_femoris_r", Placement::right_leg, Side::right, true, false},
    }};
    return specs;
}

std::vector<std::string> rollator_imu_channel_ids()
{
    std::vector<std::string> ids;
    for (const char* side : {"left", "right"}) {
        for (const char* mod : {"acc", "gyro"}) {
            for (const char* ax : {"x", "y", "z"}) {
                ids.push_back(std::string("rollator_") + side + "_" + mod + "_" + ax);
            }
        }
    }
    return ids;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
    std::uint64_t x = splitmix64(master);
    x = splitmix64(x ^ (a * 0x9e3779b97f4a7c15ULL));
    x = splitmix64(x ^ (b * 0xc2b2ae3d27d4eb4fULL));
    return splitmix64(x ^ (c * 0x165667b19e3779f9ULL));
}

SubjectParams SubjectParams::from_seed(std::uint64_t seed, Side suit_side)
{
    std::mt19937_64 rng(seed);
    SubjectParams p;
    p.seed = seed;
    p.suit_side = suit_side;
    p.height_m = uniform(rng, 1.55, 1.95);
    p.mass_kg = uniform(rng, 50.0, 95.0);
    p.stride_hz = uniform(rng, 0.8, 1.1);
    for (std::size_t c = 0; c < p.amplitude_mv.size(); ++c) {
        const double base = emg_channel_specs()[c].leg ? 0.2 : 0.12;
        p.amplitude_mv[c] = base * uniform(rng, 0.7, 1.4);
    }
    p.noise_floor_mv = uniform(rng, 0.003, 0.006);
    p.spike_rate_hz = uniform(rng, 2.5, 3.5);
    p.zigzag_dps = uniform(rng, 10.0, 12.0);
    p.handle_tilt_deg = uniform(rng, -15.0, 15.0);
    return p;
}

bool SubjectParams::valid() const
{
    const auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
    bool ok = stride_hz >= 0.7 && stride_hz <= 1.2 && finite_pos(noise_floor_mv) && finite_pos(height_m) &&
              finite_pos(mass_kg) && std::isfinite(suit_abruptness_gain) && suit_abruptness_gain >= 1.0 &&
              std::isfinite(compensation_gain) && compensation_gain >= 1.0 && finite_pos(suit_amplitude_factor) &&
              finite_pos(suit_stride_factor) && std::isfinite(spike_rate_hz) && spike_rate_hz >= 0.0 &&
              std::isfinite(spike_amplitude) && std::isfinite(rollator_wrist_tonic) && finite_pos(vigor) &&
              std::isfinite(zigzag_dps) && std::isfinite(handle_tilt_deg) && std::isfinite(gyro_noise_dps) &&
              std::isfinite(acc_noise_g) && std::isfinite(imu_glitch_rate_hz);
    for (double a : amplitude_mv) {
        ok = ok && finite_pos(a);
    }
    return ok;
}

double PathPlan::total_s() const
{
    double t = 0.0;
    for (const auto& s : segments) {
        t += s.duration_s;
    }
    return t;
}

bool PathPlan::valid() const
{
    if (segments.empty()) {
        return false;
    }
    for (const auto& s : segments) {
        if (!(s.duration_s > 0.0) || !std::isfinite(s.duration_s) || !std::isfinite(s.yaw_rate_dps)) {
            return false;
        }
        if (s.kind != SegmentKind::forward && !(std::abs(s.yaw_rate_dps) > 0.0)) {
            return false;
        }
    }
    return total_s() > 0.0;
}

PathPlan PathPlan::l_path(double yaw_rate_dps, int round_index)
{
    const double rate = std::abs(yaw_rate_dps);
    const auto turn = [rate](SegmentKind kind, double angle, double sign) {
        const double d = std::max(0.5, std::round(angle / rate / 0.05) * 0.05);
        return PlanSegment{kind, d, sign * rate};
    };
    const double around = round_index % 2 == 1 ? 1.0 : -1.0;
    PathPlan p;
    p.segments = {
        {SegmentKind::forward, 1.0, 0.0},
        turn(SegmentKind::turn90, 90.0, 1.0),
        {SegmentKind::forward, 3.0, 0.0},
        turn(SegmentKind::turn180, 180.0, around),
        {SegmentKind::forward, 3.0, 0.0},
        turn(SegmentKind::turn90, 90.0, -1.0),
        {SegmentKind::forward, 2.0, 0.0},
    };
    return p;
}

Session generate_session(const SubjectParams& p, const std::string& subject_id, ScenarioTag scenario,
                         int round_index, const PathPlan& plan, const GeneratorOptions& opt)
{
    if (!p.valid()) {
        throw ValidationError("invalid subject params");
    }
    if (!plan.valid()) {
        throw ValidationError("invalid path plan");
    }
    if (round_index < 1 || round_index > kMaxRounds) {
        throw ValidationError("round_index must be in 1..10");
    }
    const std::uint64_t seed = derive_seed(p.seed, static_cast<std::uint64_t>(scenario.id()),
                                           static_cast<std::uint64_t>(round_index));
    std::mt19937_64 rng(seed);

    Session s;
    s.subject = {subject_id, p.height_m, p.mass_kg, p.suit_side};
    s.scenario = scenario;
    s.round_index = round_index;
    s.duration_s = plan.total_s();

    std::vector<double> starts;
    double t0 = 0.0;
    for (const auto& seg : plan.segments) {
        starts.push_back(t0);
        s.movements.push_back({t0, t0 + seg.duration_s,
                               seg.kind == SegmentKind::forward ? MovementLabel::forward : MovementLabel::turning});
        t0 += seg.duration_s;
    }
    s.movements.back().end_s = s.duration_s;

    const double stride = p.stride_hz * (scenario.suit ? p.suit_stride_factor : 1.0) * uniform(rng, 0.98, 1.02);
    const double phase0 = uniform(rng, 0.0, 1.0);
    const double drift = 1.0 + opt.drift_per_round * static_cast<double>(round_index - 1);

    const auto n_emg = static_cast<std::size_t>(std::llround(s.duration_s * kEmgRateHz));
    const auto& specs = emg_channel_specs();
    for (std::size_t ci = 0; ci < specs.size(); ++ci) {
        const EmgChannelSpec& ch = specs[ci];
        std::mt19937_64 crng(derive_seed(seed, 100 + ci));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const bool restricted = scenario.suit && (ch.leg || ch.wrist) && ch.side == p.suit_side;
        const bool contralateral = scenario.suit && ch.leg && ch.side != p.suit_side;

        double amp = p.amplitude_mv[ci] * drift;
        if (restricted) {
            amp *= p.suit_amplitude_factor;
        }
        if (contralateral) {
            amp *= p.compensation_gain;
        }
        if (scenario.rollator && ch.leg) {
            amp *= 0.9;
        }
        const double tonic = kTonic + (scenario.rollator && ch.wrist ? p.rollator_wrist_tonic : 0.0);
        const auto phases = burst_phases(ch, ci);
        const Carrier& carrier = carrier_for(restricted ? kSuitCarrierHighHz : kCarrierHighHz);
        FilterState cf(carrier.coeffs);

        ChannelSeries c;
        c.channel_id = ch.id;
        c.modality = Modality::emg;
        c.placement = ch.placement;
        c.axis = Axis::none;
        c.rate_hz = kEmgRateHz;
        c.samples.resize(n_emg);
        c.gap_mask.assign(n_emg, 0);
        for (std::size_t i = 0; i < n_emg; ++i) {
            const double t = static_cast<double>(i) / kEmgRateHz;
            const double phi = phase0 + stride * t;
            double env = tonic;
            for (double b : phases) {
                double d = phi - b;
                d -= std::round(d);
                env += std::exp(-0.5 * d * d / (kBurstWidth * kBurstWidth));
            }
            const double muscle = cf.process(gauss(crng)) * carrier.norm;
            c.samples[i] = amp * env * muscle + p.noise_floor_mv * gauss(crng);
        }

        // Abrupt transients: short broadband bursts.
        double rate = (ch.leg || ch.wrist) ? p.spike_rate_hz : 0.5 * p.spike_rate_hz;
        if (restricted) {
            rate *= p.suit_abruptness_gain;
        }
        std::poisson_distribution<int> nspikes(rate * s.duration_s);
        const int k = nspikes(crng);
        const auto spike_len = static_cast<std::size_t>(kSpikeS * kEmgRateHz);
        for (int j = 0; j < k; ++j) {
            const auto at = static_cast<std::size_t>(uniform(crng, 0.0, static_cast<double>(n_emg)));
            for (std::size_t q = 0; q < spike_len && at + q < n_emg; ++q) {
                const double w = std::sin(kPi * static_cast<double>(q) / static_cast<double>(spike_len));
                c.samples[at + q] += p.spike_amplitude * amp * w * gauss(crng);
            }
        }
        add_gaps(c, opt.gap_rate_hz, crng);
        s.channels.push_back(std::move(c));
    }

    if (scenario.rollator) {
        const auto n_imu = static_cast<std::size_t>(std::llround(s.duration_s * kImuRateHz));
        double max_rate = 0.0;
        for (const auto& seg : plan.segments) {
            max_rate = std::max(max_rate, std::abs(seg.yaw_rate_dps));
        }
        const double zig_period = uniform(rng, 2.0, 2.4);
        const double zig_phase = uniform(rng, 0.0, 1.0);
        const double ph_pitch = uniform(rng, 0.0, 2.0 * kPi);
        const double ph_roll = uniform(rng, 0.0, 2.0 * kPi);
        const double ph_acc = uniform(rng, 0.0, 2.0 * kPi);
        const double tilt = p.handle_tilt_deg * kPi / 180.0;

        // Rigid-frame rates shared by both handle sensors.
        std::vector<double> yaw(n_imu), roll(n_imu), pitch(n_imu), ax(n_imu), ay(n_imu), az(n_imu);
        for (std::size_t i = 0; i < n_imu; ++i) {
            const double t = static_cast<double>(i) / kImuRateHz;
            const double turn = yaw_at(plan, starts, t);
            const double fwd = max_rate > 0.0 ? 1.0 - std::min(1.0, std::abs(turn) / max_rate) : 1.0;
            const double step = 2.0 * kPi * 2.0 * stride * t;
            yaw[i] = turn + fwd * p.vigor * p.zigzag_dps * zigzag(t, zig_period, zig_phase);
            roll[i] = 0.25 * yaw[i] + 3.0 * std::sin(step + ph_roll);
            pitch[i] = 6.0 * std::sin(step + ph_pitch);
            const double centripetal = kWalkSpeed * (yaw[i] * kPi / 180.0) / kGravity;
            ax[i] = std::sin(tilt) + 0.015 * std::sin(step + ph_acc);
            ay[i] = 0.02 * std::sin(0.5 * step + ph_acc) + centripetal;
            az[i] = std::cos(tilt) + 0.05 * std::sin(step + ph_acc + 0.5);
        }
        const std::array<const std::vector<double>*, 6> sources{&ax, &ay, &az, &roll, &pitch, &yaw};
        const auto ids = rollator_imu_channel_ids();
        for (std::size_t ci = 0; ci < ids.size(); ++ci) {
            const std::size_t local = ci % 6;
            const bool gyro = local >= 3;
            std::mt19937_64 crng(derive_seed(seed, 200 + ci));
            std::normal_distribution<double> noise(0.0, gyro ? p.gyro_noise_dps : p.acc_noise_g);
            ChannelSeries c;
            c.channel_id = ids[ci];
            c.modality = gyro ? Modality::gyro : Modality::acc;
            c.placement = ci < 6 ? Placement::rollator_left : Placement::rollator_right;
            c.axis = static_cast<Axis>(1 + local % 3);
            c.rate_hz = kImuRateHz;
            c.samples.resize(n_imu);
            c.gap_mask.assign(n_imu, 0);
            const auto& src = *sources[local];
            for (std::size_t i = 0; i < n_imu; ++i) {
                c.samples[i] = src[i] + noise(crng);
            }
            std::poisson_distribution<int> glitches(p.imu_glitch_rate_hz * s.duration_s);
            const int g = glitches(crng);
            for (int j = 0; j < g; ++j) {
                const auto at = static_cast<std::size_t>(uniform(crng, 0.0, static_cast<double>(n_imu)));
                c.samples[at] += (uniform(crng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0) * (gyro ? 300.0 : 4.0);
            }
            add_gaps(c, opt.gap_rate_hz, crng);
            s.channels.push_back(std::move(c));
        }
    }
    return s;
}

namespace {

constexpr double kPlanYawRateDps = 45.0;

} // namespace

StudyDesign::StudyDesign(const StudyOptions& opt) : opt_(opt)
{
    if (opt.n_subjects < 2) {
        throw ValidationError("n_subjects must be >= 2");
    }
    if (opt.rounds < 2 || opt.rounds > kMaxRounds) {
        throw ValidationError("rounds must be in 2..10");
    }
    const auto n = static_cast<std::size_t>(opt.n_subjects);
    // Two handling styles: vigorous users weave and turn fast, cautious users
    // walk straight and turn slowly. Handle tilt (set by the user's height
    // adjustment) and cadence interleave the two styles, so the nearest
    // other users of a new subject always handle the rollator the other way.
    // Tilt stays on one side of vertical; cos(tilt) would otherwise pair
    // mirrored users.
    std::vector<std::size_t> vigorous, cautious;
    for (std::size_t i = 0; i < n; ++i) {
        (i % 4 < 2 ? vigorous : cautious).push_back(i);
    }
    std::vector<std::size_t> tilt_order;
    for (std::size_t k = 0; k < std::max(vigorous.size(), cautious.size()); ++k) {
        if (k < vigorous.size()) {
            tilt_order.push_back(vigorous[k]);
        }
        if (k < cautious.size()) {
            tilt_order.push_back(cautious[k]);
        }
    }
    subjects_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t seed = derive_seed(opt.master_seed, 1, i);
        subjects_[i] = SubjectParams::from_seed(seed, i % 2 == 0 ? Side::left : Side::right);
        subjects_[i].vigor = i % 4 < 2 ? 2.0 : 0.5;
        // Vigorous weaving peaks at the rate cautious users turn at.
        subjects_[i].zigzag_dps = kPlanYawRateDps * 0.5 / 2.0;
    }
    for (std::size_t rank = 0; rank < n; ++rank) {
        auto& sp = subjects_[tilt_order[rank]];
        std::mt19937_64 rng(derive_seed(sp.seed, 8));
        const double u = static_cast<double>(rank) / static_cast<double>(n - 1);
        sp.handle_tilt_deg = 2.0 + 26.0 * u + uniform(rng, -0.5, 0.5);
        sp.stride_hz = 0.8 + 0.3 * u + uniform(rng, -0.005, 0.005);
    }
    for (int i = 0; i < opt.n_subjects; ++i) {
        for (int sc = 1; sc <= 4; ++sc) {
            for (int r = 1; r <= opt.rounds; ++r) {
                specs_.push_back({i, ScenarioTag::from_id(sc), r});
            }
        }
    }
}

std::string StudyDesign::subject_id(int index)
{
    const std::string n = std::to_string(index + 1);
    return "S" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

PathPlan StudyDesign::plan_for(const SessionSpec& spec) const
{
    return PathPlan::l_path(kPlanYawRateDps * subjects_[static_cast<std::size_t>(spec.subject_index)].vigor, spec.round_index);
}

Session StudyDesign::generate(std::size_t i) const
{
    const SessionSpec& spec = specs_.at(i);
    return generate_session(subjects_[static_cast<std::size_t>(spec.subject_index)], subject_id(spec.subject_index),
                            spec.scenario, spec.round_index, plan_for(spec), opt_.generator);
}

std::vector<Session> generate_study(const StudyOptions& opt)
{
    const StudyDesign design(opt);
    std::vector<Session> out(design.size());
    const auto n = static_cast<std::ptrdiff_t>(design.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = design.generate(static_cast<std::size_t>(i));
    }
    return out;
}

} // namespace gaitstream
