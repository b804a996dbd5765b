#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include <sys/socket.h>

#include "doctest.h"

#include "fixtures.hpp"
#include "gaitstream/errors.hpp"
#include "gaitstream/gbdt.hpp"
#include "gaitstream/stream.hpp"
#include "gaitstream/wire.hpp"

using namespace gaitstream;

namespace {

const ChannelInfo kEmg{"emg_a", Modality::emg, 2000.0};

StreamFrame frame(std::int64_t seq, std::size_t first_sample, std::vector<double> v, double rate = 2000.0,
                  const std::string& ch = "emg_a")
{
    StreamFrame f;
    f.seq = seq;
    f.t_s = static_cast<double>(first_sample) / rate;
    f.channel_id = ch;
    f.values = std::move(v);
    return f;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) {
        x = d(rng);
    }
    return v;
}

// Every window a StreamState emits for `x` delivered in chunks of `chunk`.
std::vector<CompletedWindow> stream_windows(const std::vector<double>& x, std::size_t chunk)
{
    StreamState st(std::span(&kEmg, 1), PreprocessOptions::realtime(), WindowSpec{});
    std::vector<CompletedWindow> out;
    std::int64_t seq = 0;
    for (std::size_t i = 0; i < x.size(); i += chunk) {
        const std::size_t end = std::min(x.size(), i + chunk);
        auto r = st.ingest(frame(seq++, i, std::vector<double>(x.begin() + static_cast<long>(i),
                                                                x.begin() + static_cast<long>(end))));
        REQUIRE(r.accepted);
        for (auto& w : r.windows) {
            out.push_back(std::move(w));
        }
    }
    return out;
}

GBDTModel movement_model(const std::vector<Session>& raw)
{
    std::vector<Session> pre;
    for (const auto& s : raw) {
        pre.push_back(preprocess_session(s, PreprocessOptions::realtime()));
    }
    GBDTParams hp;
    hp.n_trees = 25;
    hp.max_depth = 3;
    return train(build_dataset(pre, Task::movement), hp);
}

void run_service(StreamService& svc, const Session& s, std::size_t chunk, std::optional<double> prox = std::nullopt)
{
    svc.handle_line(encode_handshake(Handshake{channel_infos(s), std::nullopt}));
    for (const auto& f : session_frames(s, chunk, prox)) {
        svc.handle_line(encode_frame(f));
    }
}

} // namespace

TEST_CASE("windows appear after 400 samples and then every 200")
{
    StreamState st(std::span(&kEmg, 1), PreprocessOptions::realtime(), WindowSpec{});
    const auto x = noise(1000, 1);
    std::size_t emitted = 0;
    for (std::size_t i = 0; i < 1000; i += 100) {
        const auto r = st.ingest(frame(static_cast<std::int64_t>(i / 100), i, {x.begin() + static_cast<long>(i),
                                                                                x.begin() + static_cast<long>(i + 100)}));
        emitted += r.windows.size();
        const std::size_t total = i + 100;
        CHECK(emitted == (total < 400 ? 0 : (total - 400) / 200 + 1));
        for (const auto& w : r.windows) {
            CHECK(w.samples.size() == 400);
            CHECK(w.start_s == doctest::Approx(0.1 * static_cast<double>(w.index)));
        }
    }
    CHECK(emitted == 4);
}

TEST_CASE("delivery chunking does not change the windows")
{
    const auto x = noise(5000, 2);
    const auto a = stream_windows(x, 1);
    for (std::size_t chunk : {7u, 200u, 512u, 5000u}) {
        const auto b = stream_windows(x, chunk);
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(a[k].index == b[k].index);
            CHECK(a[k].samples == b[k].samples);
        }
    }
    CHECK(a.size() == window_count(5000, 400, 200));
    // and they equal windows of the causally filtered signal
    const auto y = apply_filter(x, design_bandpass(20.0, 450.0, 4, 2000.0), FilterMode::causal);
    for (const auto& w : a) {
        CHECK(std::equal(w.samples.begin(), w.samples.end(), y.begin() + static_cast<long>(200 * w.index)));
    }
}

TEST_CASE("rejected frames leave the state untouched")
{
    const auto x = noise(1200, 3);
    StreamState st(std::span(&kEmg, 1), PreprocessOptions::realtime(), WindowSpec{});
    std::vector<CompletedWindow> got;
    auto push = [&](const StreamFrame& f) {
        auto r = st.ingest(f);
        for (auto& w : r.windows) {
            got.push_back(std::move(w));
        }
        return r.accepted;
    };
    CHECK(push(frame(0, 0, {x.begin(), x.begin() + 300})));
    CHECK_FALSE(push(frame(0, 300, {x.begin() + 300, x.begin() + 600}))); // duplicate seq
    CHECK(push(frame(1, 300, {x.begin() + 300, x.begin() + 1200})));
    CHECK(st.rejected() == 1);
    const auto want = stream_windows(x, 1200);
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
        CHECK(got[k].samples == want[k].samples);
    }

    StreamState other(std::span(&kEmg, 1), PreprocessOptions::realtime(), WindowSpec{});
    CHECK_FALSE(other.ingest(frame(0, 0, {1.0, std::nan(""), 2.0})).accepted);
    CHECK_FALSE(other.ingest(frame(1, 0, {})).accepted);
    CHECK(other.ingest(frame(2, 0, {1.0})).accepted);
    CHECK_FALSE(other.ingest(frame(3, 0, {1.0})).accepted); // overlaps what was already received
    CHECK(other.rejected() == 3);
    CHECK_THROWS_AS(other.ingest(frame(4, 1, {1.0}, 2000.0, "nope")), ProtocolError);
}

TEST_CASE("a gap suppresses the windows that touch it")
{
    const auto x = noise(3000, 4);
    StreamState st(std::span(&kEmg, 1), PreprocessOptions::realtime(), WindowSpec{});
    std::vector<std::size_t> idx;
    for (auto& w : st.ingest(frame(0, 0, {x.begin(), x.begin() + 1000})).windows) {
        idx.push_back(w.index);
    }
    for (auto& w : st.ingest(frame(1, 1100, {x.begin() + 1100, x.end()})).windows) {
        idx.push_back(w.index);
    }
    CHECK(st.resets() == 1);
    for (std::size_t k : idx) {
        const std::size_t a = 200 * k, b = a + 400;
        CHECK((b <= 1000 || a >= 1100));
    }
    CHECK(std::find(idx.begin(), idx.end(), 6) != idx.end());
    CHECK(std::find(idx.begin(), idx.end(), 4) == idx.end());
}

TEST_CASE("a model channel missing from the handshake is a startup error")
{
    const Session s = fixture::session(3);
    const auto model = movement_model({s});
    auto infos = channel_infos(s);
    const auto needed = OnlineClassifier(model, infos, WindowSpec{}).required_channels();
    REQUIRE_FALSE(needed.empty());
    const std::string gone = needed.back();
    std::erase_if(infos, [&](const ChannelInfo& c) { return c.channel_id == gone; });
    try {
        OnlineClassifier(model, infos, WindowSpec{});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("'" + gone + "'") != std::string::npos);
    }
    StreamService svc({}, model, [](const std::string&) {});
    CHECK_THROWS_AS(svc.handle_line(encode_handshake(Handshake{infos, std::nullopt})), ConfigError);
}

TEST_CASE("no prediction before the first complete window")
{
    const Session s = fixture::session(3);
    const auto model = movement_model({s});
    StreamService svc({}, model, [](const std::string&) {});
    svc.keep_predictions(true);
    svc.handle_line(encode_handshake(Handshake{channel_infos(s), std::nullopt}));
    std::size_t first_done = 0;
    for (const auto& f : session_frames(s, 10)) {
        svc.handle_line(encode_frame(f));
        if (svc.predictions().empty()) {
            CHECK(f.t_s + static_cast<double>(f.values.size()) / (f.channel_id.rfind("emg", 0) == 0 ? 2000.0 : 200.0) <=
                  0.2 + 1e-9);
        } else if (!first_done) {
            first_done = 1;
            CHECK(svc.predictions().front().index == 0);
        }
    }
    CHECK(first_done == 1);
}

TEST_CASE("streamed features and predictions equal the offline causal pipeline")
{
    GeneratorOptions gaps;
    gaps.gap_rate_hz = 0.3;
    const std::vector<Session> sessions{fixture::session(3, 1), fixture::session(4, 2, 7, Side::left, gaps)};
    const auto model = movement_model({fixture::session(3, 3), fixture::session(4, 4)});
    for (const auto& s : sessions) {
        const std::vector<Session> pre{preprocess_session(s, PreprocessOptions::realtime())};
        const auto table = build_dataset(pre, Task::movement);
        const auto offline = aligned_values(model, table);
        const auto offline_pred = model.predict(table);
        const std::size_t nf = model.feature_names.size();
        for (std::size_t chunk : {1u, 7u, 256u}) {
            ServiceOptions opt;
            opt.emit_predictions = true;
            std::vector<std::string> lines;
            StreamService svc(opt, model, [&](const std::string& l) { lines.push_back(l); });
            svc.keep_predictions(true);
            run_service(svc, s, chunk);
            const auto& p = svc.predictions();
            REQUIRE(p.size() == table.rows());
            for (std::size_t i = 0; i < p.size(); ++i) {
                CHECK(p[i].start_s == table.meta[i].window_start_s);
                CHECK(std::equal(p[i].features.begin(), p[i].features.end(), offline.begin() + static_cast<long>(i * nf)));
                CHECK(p[i].label == offline_pred[i]);
            }
            CHECK(lines.size() == p.size());
            CHECK(svc.stats().rejected == 0);
        }
    }
}

TEST_CASE("alert policy on scripted traces")
{
    const auto run = [](const std::vector<std::pair<int, double>>& preds, const std::vector<std::optional<double>>& prox) {
        AlertEvaluator ev;
        std::vector<std::pair<std::size_t, AlertEvent>> out;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (prox[i]) {
                ev.observe_proximity(*prox[i]);
            }
            const double t0 = 0.1 * static_cast<double>(i);
            if (auto a = ev.update(preds[i].first == 0, preds[i].second, t0, t0 + 0.2)) {
                out.emplace_back(i, *a);
            }
        }
        return out;
    };
    const auto near = [](std::size_t n, double m = 0.5) { return std::vector<std::optional<double>>(n, m); };
    const std::vector<std::pair<int, double>> five(5, {0, 0.9});

    auto a = run(five, near(5));
    REQUIRE(a.size() == 1);
    CHECK(a[0].first == 4);
    CHECK(a[0].second.kind == "collision_risk");
    CHECK(a[0].second.confidence == 0.9);
    CHECK(a[0].second.window_start_s == doctest::Approx(0.4));
    CHECK(a[0].second.window_end_s == doctest::Approx(0.6));
    CHECK(a[0].second.t_s == a[0].second.window_end_s);

    // one episode, one alert
    CHECK(run(std::vector<std::pair<int, double>>(40, {0, 0.95}), near(40)).size() == 1);
    // four is not enough
    CHECK(run(std::vector<std::pair<int, double>>(4, {0, 0.9}), near(4)).empty());
    // a turning prediction inside the run of five
    CHECK(run({{0, .9}, {0, .9}, {1, .9}, {0, .9}, {0, .9}, {0, .9}, {0, .9}}, near(7)).empty());
    // low confidence breaks the streak
    CHECK(run({{0, .9}, {0, .9}, {0, .6}, {0, .9}, {0, .9}, {0, .9}, {0, .9}}, near(7)).empty());
    // proximity missing or far away
    CHECK(run(five, std::vector<std::optional<double>>(5)).empty());
    CHECK(run(five, near(5, 1.0)).empty());
    CHECK(run(five, near(5, 3.0)).empty());
    // re-armed by a turn
    std::vector<std::pair<int, double>> two_episodes(5, {0, 0.9});
    two_episodes.push_back({1, 0.8});
    two_episodes.insert(two_episodes.end(), 5, {0, 0.9});
    const auto b = run(two_episodes, near(11));
    REQUIRE(b.size() == 2);
    CHECK(b[1].first == 10);
    // re-armed by proximity recovering
    auto prox = near(12);
    prox[6] = 2.0;
    const auto c = run(std::vector<std::pair<int, double>>(12, {0, 0.9}), prox);
    REQUIRE(c.size() == 2);
    CHECK(c[0].first == 4);
    CHECK(c[1].first == 7);
}

TEST_CASE("alerts from a replayed session do not depend on chunking")
{
    const Session s = fixture::session(3, 1);
    const auto model = movement_model({fixture::session(3, 2), fixture::session(4, 3)});
    std::vector<std::string> ref;
    for (std::size_t chunk : {1u, 7u, 256u}) {
        std::vector<std::string> lines;
        StreamService svc({}, model, [&](const std::string& l) { lines.push_back(l); });
        run_service(svc, s, chunk, 0.5);
        CHECK(svc.stats().alerts == lines.size());
        if (chunk == 1) {
            ref = lines;
            CHECK_FALSE(ref.empty());
        } else {
            CHECK(lines == ref);
        }
    }
    std::vector<std::string> none;
    StreamService svc({}, model, [&](const std::string& l) { none.push_back(l); });
    run_service(svc, s, 64);
    CHECK(none.empty());
}

TEST_CASE("wire codec round trips and rejects malformed lines")
{
    StreamFrame f{12, 0.25, "rollator_left_gyro_z", {1.5, -2.25e-7, 1e300}, 0.75};
    CHECK(parse_frame(encode_frame(f)) == f);
    f.proximity_m.reset();
    CHECK(parse_frame(encode_frame(f)) == f);
    const Handshake h{{{"a", Modality::emg, 2000.0}, {"b_x", Modality::acc, 200.0}}, std::string("m.json")};
    const auto back = parse_handshake(encode_handshake(h));
    CHECK(back.model == h.model);
    REQUIRE(back.channels.size() == 2);
    CHECK(back.channels[1].channel_id == "b_x");
    CHECK(back.channels[1].modality == Modality::acc);
    CHECK(back.channels[1].rate_hz == 200.0);
    const auto nan = parse_frame(R"({"seq":1,"t":0,"ch":"a","v":[1,null]})");
    CHECK(std::isnan(nan.values[1]));
    for (const char* bad : {"", "[]", "{", R"({"seq":1,"t":0,"ch":"a"})", R"({"seq":"x","t":0,"ch":"a","v":[1]})",
                            R"({"seq":1,"t":0,"ch":"a","v":["q"]})", R"({"seq":1,"t":0,"ch":"a","v":[1],"prox":"n"})"}) {
        CHECK_THROWS_AS(parse_frame(bad), ProtocolError);
    }
    for (const char* bad : {R"({"channels":[]})", R"({"channels":[{"ch":"a","modality":"sonar","rate_hz":1}]})",
                            R"({"model":"m"})"}) {
        CHECK_THROWS_AS(parse_handshake(bad), ProtocolError);
    }
    const auto a = nlohmann::json::parse(encode_alert({1.5, "collision_risk", 0.9, 1.3, 1.5}));
    CHECK(a["kind"] == "collision_risk");
    CHECK(a["t"] == 1.5);
    CHECK(a["conf"] == 0.9);
    CHECK(a["window"] == nlohmann::json::array({1.3, 1.5}));
}

TEST_CASE("session frames skip gaps and keep per-channel order")
{
    GeneratorOptions g;
    g.gap_rate_hz = 0.5;
    const Session s = fixture::session(3, 1, 7, Side::left, g);
    const auto frames = session_frames(s, 64);
    std::map<std::string, std::int64_t> seq;
    std::map<std::string, std::size_t> samples;
    double last_t = 0.0;
    for (const auto& f : frames) {
        CHECK(f.t_s >= last_t);
        last_t = f.t_s;
        CHECK(f.values.size() <= 64);
        auto it = seq.find(f.channel_id);
        CHECK(f.seq == (it == seq.end() ? 0 : it->second + 1));
        seq[f.channel_id] = f.seq;
        samples[f.channel_id] += f.values.size();
    }
    for (const auto& c : s.channels) {
        CHECK(samples[c.channel_id] ==
              static_cast<std::size_t>(std::count(c.gap_mask.begin(), c.gap_mask.end(), std::uint8_t{0})));
    }
    CHECK_THROWS_AS(session_frames(s, 0), InputError);
}

TEST_CASE("the service works over a loopback socket")
{
    const Session s = fixture::session(3, 1);
    const auto model = movement_model({fixture::session(3, 2), fixture::session(4, 3)});

    std::vector<std::string> local;
    {
        StreamService svc({}, model, [&](const std::string& l) { local.push_back(l); });
        run_service(svc, s, 32, 0.5);
    }
    REQUIRE_FALSE(local.empty());

    Socket listener = listen_tcp("127.0.0.1", 0);
    const std::uint16_t port = local_port(listener);
    std::vector<std::string> remote;
    std::thread server([&] {
        Socket conn = accept_one(listener);
        StreamService svc({}, model, [&](const std::string& l) { conn.write_all(l + "\n"); });
        conn.read_lines([&](std::string_view line) { svc.handle_line(line); });
    });
    Socket client = connect_tcp("127.0.0.1", port);
    std::string payload = encode_handshake(Handshake{channel_infos(s), std::nullopt}) + "\n";
    for (const auto& f : session_frames(s, 32, 0.5)) {
        payload += encode_frame(f) + "\n";
    }
    client.write_all(payload);
    ::shutdown(client.fd(), SHUT_WR);
    client.read_lines([&](std::string_view line) { remote.emplace_back(line); });
    server.join();
    CHECK(remote == local);
}
