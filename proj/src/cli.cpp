#include "gaitstream/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include <sys/socket.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "gaitstream/dataset.hpp"
#include "gaitstream/errors.hpp"
#include "gaitstream/evaluation.hpp"
#include "gaitstream/gbdt.hpp"
#include "gaitstream/numfmt.hpp"
#include "gaitstream/stream.hpp"
#include "gaitstream/study.hpp"
#include "gaitstream/synthgait.hpp"
#include "gaitstream/version.hpp"
#include "gaitstream/wire.hpp"

namespace gaitstream {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
    fs::path workdir = ".";
    std::ostream* out = nullptr;

    fs::path resolve(const std::string& p) const
    {
        const fs::path q(p);
        return q.is_absolute() ? q : workdir / q;
    }
};

// Seeds not given on the command line come from GAITSTREAM_SEED when set.
std::uint64_t default_seed(std::uint64_t fallback)
{
    const char* env = std::getenv("GAITSTREAM_SEED");
    if (env == nullptr || *env == '\0') {
        return fallback;
    }
    try {
        const long long v = parse_int(env);
        if (v < 0) {
            throw FormatError("negative");
        }
        return static_cast<std::uint64_t>(v);
    } catch (const FormatError&) {
        throw InputError("GAITSTREAM_SEED must be a non-negative integer, got '" + std::string(env) + "'");
    }
}

json provenance(const std::string& command, const json& config)
{
    return {{"tool", kToolName}, {"version", kVersion}, {"command", command}, {"config", config}};
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw InputError("cannot write " + path.string());
    }
    f << text;
    if (!f) {
        throw InputError("failed writing " + path.string());
    }
}

void write_json(const fs::path& path, const json& j)
{
    write_text(path, j.dump(2) + "\n");
}

// Input errors get the offending file prefixed to the message.
template <typename F>
auto with_file(const fs::path& path, F&& f)
{
    try {
        return f();
    } catch (const Error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

FeatureTable load_features(const fs::path& p)
{
    return with_file(p, [&] { return read_feature_csv(p); });
}

void add_hp_options(CLI::App* sub, GBDTParams& hp)
{
    sub->add_option("--trees", hp.n_trees, "Boosting rounds")->check(CLI::PositiveNumber);
    sub->add_option("--depth", hp.max_depth, "Maximum tree depth")->check(CLI::PositiveNumber);
    sub->add_option("--learning-rate", hp.learning_rate, "Shrinkage")->check(CLI::PositiveNumber);
    sub->add_option("--min-leaf", hp.min_samples_leaf, "Minimum rows per leaf")->check(CLI::PositiveNumber);
    sub->add_option("--lambda", hp.lambda, "L2 penalty on leaf values")->check(CLI::NonNegativeNumber);
    sub->add_option("--subsample", hp.subsample, "Row fraction per tree")->check(CLI::Range(0.0, 1.0));
}

void add_window_options(CLI::App* sub, DatasetOptions& ds)
{
    sub->add_option("--window-ms", ds.windows.window_ms, "Window length")->check(CLI::PositiveNumber);
    sub->add_option("--hop-ms", ds.windows.hop_ms, "Window hop")->check(CLI::PositiveNumber);
    sub->add_option("--ssc-threshold", ds.ssc_threshold, "Slope sign change threshold")
        ->check(CLI::NonNegativeNumber);
}

json dataset_json(const DatasetOptions& ds)
{
    json j = {{"window_ms", ds.windows.window_ms}, {"hop_ms", ds.windows.hop_ms}, {"ssc_threshold", ds.ssc_threshold}};
    if (ds.modalities) {
        j["modalities"] = {{"emg", ds.modalities->emg}, {"imu", ds.modalities->imu}};
    }
    return j;
}

std::optional<ModalitySelection> parse_modalities(const std::string& s)
{
    if (s == "auto") {
        return std::nullopt;
    }
    if (s == "emg") {
        return ModalitySelection{true, false};
    }
    if (s == "imu") {
        return ModalitySelection{false, true};
    }
    if (s == "all") {
        return ModalitySelection{true, true};
    }
    throw InputError("unknown modality set '" + s + "' (expected auto, emg, imu or all)");
}

template <typename F>
void for_each_parallel(std::size_t n, F&& f)
{
    std::vector<std::string> errors(n);
    const auto m = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < m; ++i) {
        try {
            f(static_cast<std::size_t>(i));
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    }
    for (const auto& e : errors) {
        if (!e.empty()) {
            throw InputError(e);
        }
    }
}

struct GenerateArgs {
    StudyOptions study;
    std::optional<std::uint64_t> seed;
    std::string out = "sessions";
};

int cmd_generate(const Context& ctx, GenerateArgs a)
{
    a.study.master_seed = a.seed ? *a.seed : default_seed(a.study.master_seed);
    const StudyDesign design(a.study);
    const json config = {{"subjects", a.study.n_subjects},
                         {"rounds", a.study.rounds},
                         {"seed", a.study.master_seed},
                         {"drift_per_round", a.study.generator.drift_per_round},
                         {"gap_rate_hz", a.study.generator.gap_rate_hz}};
    const json prov = provenance("generate", config);
    const fs::path root = ctx.resolve(a.out);
    fs::create_directories(root);
    for_each_parallel(design.size(), [&](std::size_t i) {
        const Session s = design.generate(i);
        save_session(s, root / s.key(), prov);
    });
    json subjects = json::array();
    for (std::size_t i = 0; i < design.subjects().size(); ++i) {
        const auto& p = design.subjects()[i];
        subjects.push_back({{"subject", StudyDesign::subject_id(static_cast<int>(i))},
                            {"suit_side", to_string(p.suit_side)},
                            {"height_m", p.height_m},
                            {"mass_kg", p.mass_kg},
                            {"vigor", p.vigor}});
    }
    write_json(root / "study.json", {{"provenance", prov}, {"sessions", design.size()}, {"subjects", subjects}});
    *ctx.out << "generated " << design.size() << " sessions\n";
    return 0;
}

struct PreprocessArgs {
    std::string in = "sessions";
    std::string out = "preprocessed";
    std::string mode = "offline";
    PreprocessOptions pre;
};

PreprocessOptions resolve_preprocess(const PreprocessArgs& a)
{
    if (a.mode == "realtime") {
        return PreprocessOptions::realtime();
    }
    return a.pre;
}

int cmd_preprocess(const Context& ctx, const PreprocessArgs& a)
{
    const PreprocessOptions pre = resolve_preprocess(a);
    const json prov = provenance("preprocess", {{"mode", a.mode}, {"options", pre.to_json()}});
    const fs::path in = ctx.resolve(a.in);
    const fs::path out = ctx.resolve(a.out);
    const auto dirs = list_session_dirs(in);
    if (dirs.empty()) {
        throw InputError(in.string() + ": no session directories found");
    }
    std::vector<PreprocessReport> reports(dirs.size());
    for_each_parallel(dirs.size(), [&](std::size_t i) {
        const Session raw = with_file(dirs[i], [&] { return load_session(dirs[i]); });
        const Session s = preprocess_session_serial(raw, pre, &reports[i]);
        save_session(s, out / dirs[i].filename(), prov);
    });
    std::size_t filled = 0, unfilled = 0, outliers = 0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        filled += reports[i].filled_samples;
        unfilled += reports[i].unfilled_gaps;
        outliers += reports[i].outliers;
        for (const auto& w : reports[i].warnings) {
            *ctx.out << dirs[i].filename().string() << ": " << w << '\n';
        }
    }
    *ctx.out << "preprocessed " << dirs.size() << " sessions (filled " << filled << " samples, " << unfilled
             << " gaps left, " << outliers << " outliers)\n";
    return 0;
}

struct FeaturizeArgs {
    std::string in = "preprocessed";
    std::string out;
    std::string task = "movement";
    std::string modalities = "auto";
    DatasetOptions ds;
};

int cmd_featurize(const Context& ctx, FeaturizeArgs a)
{
    const Task task = parse_task(a.task);
    a.ds.modalities = parse_modalities(a.modalities);
    const fs::path in = ctx.resolve(a.in);
    const fs::path out = ctx.resolve(a.out.empty() ? "features/" + a.task + ".csv" : a.out);
    const auto dirs = list_session_dirs(in);
    if (dirs.empty()) {
        throw InputError(in.string() + ": no session directories found");
    }
    FeatureTable t;
    t.task = task;
    t.classes = task_classes(task);
    BuildReport rep;
    for (const auto& d : dirs) {
        const Session s = with_file(d, [&] { return load_session(d); });
        with_file(d, [&] {
            append_session_rows(t, s, a.ds, &rep);
            return 0;
        });
    }
    if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
    }
    write_feature_csv(t, out, provenance("featurize", {{"task", a.task}, {"dataset", dataset_json(a.ds)}}));
    *ctx.out << "wrote " << t.rows() << " rows x " << t.cols() << " features";
    if (rep.unlabeled_windows || rep.gap_windows) {
        *ctx.out << " (dropped " << rep.unlabeled_windows << " unlabeled, " << rep.gap_windows << " gap windows)";
    }
    *ctx.out << '\n';
    return 0;
}

struct TrainArgs {
    std::string features;
    std::string out = "model.json";
    GBDTParams hp;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const Context& ctx, TrainArgs a)
{
    a.hp.seed = a.seed ? *a.seed : default_seed(a.hp.seed);
    const fs::path in = ctx.resolve(a.features);
    const FeatureTable t = load_features(in);
    GBDTModel m = with_file(in, [&] { return train(t, a.hp); });
    m.config = provenance("train", {{"hp", a.hp.to_json()}, {"rows", t.rows()}});
    save_model(m, ctx.resolve(a.out));
    *ctx.out << "trained " << m.trees.size() << " trees on " << t.rows() << " rows, training accuracy "
             << format_double(m.accuracy(t)) << '\n';
    return 0;
}

struct EvaluateArgs {
    std::string features;
    std::string strategy = "leave-two-rounds-out";
    std::optional<std::string> task;
    std::string out = "cv_report.json";
    GBDTParams hp;
    std::optional<std::uint64_t> seed;
};

int cmd_evaluate(const Context& ctx, EvaluateArgs a)
{
    a.hp.seed = a.seed ? *a.seed : default_seed(a.hp.seed);
    const CVStrategy strategy = parse_strategy(a.strategy);
    const fs::path in = ctx.resolve(a.features);
    const FeatureTable t = load_features(in);
    if (a.task && parse_task(*a.task) != t.task) {
        throw InputError(in.string() + " holds " + std::string(to_string(t.task)) + " features, not " + *a.task);
    }
    const CVReport r = with_file(in, [&] { return cross_validate(t, strategy, a.hp); });
    json j = r.to_json();
    j["provenance"] = provenance("evaluate", {{"strategy", to_string(strategy)}, {"hp", a.hp.to_json()}});
    write_json(ctx.resolve(a.out), j);
    *ctx.out << to_string(strategy) << " mean accuracy " << format_double(r.mean_accuracy) << " over "
             << r.per_subject.size() << " subjects (" << r.folds.size() << " folds)\n";
    return 0;
}

struct AdaptArgs {
    std::string features;
    std::string out = "adaptation.json";
    double fraction = 0.1;
    GBDTParams hp;
    std::optional<std::uint64_t> seed;
};

int cmd_adapt(const Context& ctx, AdaptArgs a)
{
    a.hp.seed = a.seed ? *a.seed : default_seed(a.hp.seed);
    const fs::path in = ctx.resolve(a.features);
    const FeatureTable t = load_features(in);
    const auto r = with_file(in, [&] { return adaptation_study(t, a.hp, a.fraction); });
    int improved = 0;
    for (const auto& x : r) {
        improved += x.adapted > x.zero_shot ? 1 : 0;
    }
    write_json(ctx.resolve(a.out),
               {{"provenance", provenance("adapt", {{"fraction", a.fraction}, {"hp", a.hp.to_json()}})},
                {"subjects", to_json(r)},
                {"subjects_improved", improved}});
    *ctx.out << "adaptation improved " << improved << " of " << r.size() << " subjects\n";
    return 0;
}

struct TrendArgs {
    std::string features;
    std::string out = "trend.json";
    std::string subject = "S01";
    int scenario = 2;
    std::vector<std::string> feature_names;
};

int cmd_trend(const Context& ctx, const TrendArgs& a)
{
    const fs::path in = ctx.resolve(a.features);
    const FeatureTable t = load_features(in);
    const FeatureTable rows = t.filter([&](const RowMeta& m, std::size_t) {
        return m.subject_id == a.subject && m.scenario == a.scenario;
    });
    const TrendResult r = with_file(in, [&] { return trend_over_rounds(rows, a.feature_names); });
    write_json(ctx.resolve(a.out),
               {{"provenance",
                 provenance("trend", {{"subject", a.subject}, {"scenario", a.scenario}, {"features", a.feature_names}})},
                {"rounds", r.rounds},
                {"means", r.means},
                {"slope", r.slope},
                {"correlation", r.correlation}});
    *ctx.out << "slope " << format_double(r.slope) << " per round, correlation " << format_double(r.correlation)
             << '\n';
    return 0;
}

struct ServiceArgs {
    std::string model;
    double ssc_threshold = 0.0;
    AlertPolicy policy;
    bool emit_predictions = false;
    WindowSpec windows;
};

ServiceOptions service_options(const ServiceArgs& a)
{
    ServiceOptions o;
    o.windows = a.windows;
    o.ssc_threshold = a.ssc_threshold;
    o.policy = a.policy;
    o.emit_predictions = a.emit_predictions;
    return o;
}

void add_service_options(CLI::App* sub, ServiceArgs& a)
{
    sub->add_option("--model", a.model, "Model file");
    sub->add_option("--k", a.policy.k_consecutive, "Consecutive forward predictions before an alert")
        ->check(CLI::PositiveNumber);
    sub->add_option("--min-confidence", a.policy.min_confidence, "Minimum forward probability")
        ->check(CLI::Range(0.0, 1.0));
    sub->add_option("--proximity", a.policy.proximity_threshold_m, "Proximity threshold in meters")
        ->check(CLI::PositiveNumber);
    sub->add_option("--window-ms", a.windows.window_ms, "Window length")->check(CLI::PositiveNumber);
    sub->add_option("--hop-ms", a.windows.hop_ms, "Window hop")->check(CLI::PositiveNumber);
    sub->add_option("--ssc-threshold", a.ssc_threshold, "Slope sign change threshold");
    sub->add_flag("--emit-predictions", a.emit_predictions, "Also send one line per prediction");
}

struct StreamArgs {
    ServiceArgs service;
    std::string host = "127.0.0.1";
    int port = 7070;
    int connections = 0;
};

int cmd_stream(const Context& ctx, const StreamArgs& a)
{
    std::optional<GBDTModel> model;
    if (!a.service.model.empty()) {
        const fs::path p = ctx.resolve(a.service.model);
        model = with_file(p, [&] { return load_model(p); });
    }
    const Socket listener = listen_tcp(a.host, static_cast<std::uint16_t>(a.port));
    *ctx.out << "listening on " << a.host << ':' << local_port(listener) << std::endl;
    for (int served = 0; a.connections == 0 || served < a.connections; ++served) {
        Socket conn = accept_one(listener);
        StreamService svc(
            service_options(a.service), model, [&](const std::string& line) { conn.write_all(line + "\n"); },
            [&](const std::string& name) {
                const fs::path p = ctx.resolve(name);
                return with_file(p, [&] { return load_model(p); });
            });
        try {
            conn.read_lines([&](std::string_view line) { svc.handle_line(line); });
        } catch (const Error& e) {
            // A broken client ends its connection, not the service.
            const json j = {{"error", e.what()}};
            try {
                conn.write_all(j.dump() + "\n");
            } catch (const Error&) {
            }
        }
        const auto& st = svc.stats();
        *ctx.out << "connection closed: " << st.frames << " frames, " << st.rejected << " rejected, "
                 << st.predictions << " predictions, " << st.alerts << " alerts" << std::endl;
    }
    return 0;
}

struct ReplayArgs {
    ServiceArgs service;
    std::string session;
    std::string connect;
    std::string out;
    std::size_t frame_size = 64;
    std::optional<double> proximity;
    bool raw = false;
};

int cmd_replay(const Context& ctx, const ReplayArgs& a)
{
    const fs::path dir = ctx.resolve(a.session);
    const Session s = with_file(dir, [&] { return load_session(dir); });
    const auto frames = session_frames(s, a.frame_size, a.proximity);
    Handshake h;
    h.channels = channel_infos(s);
    std::vector<std::string> lines;
    if (!a.connect.empty()) {
        const auto colon = a.connect.rfind(':');
        if (colon == std::string::npos) {
            throw InputError("--connect expects host:port");
        }
        const auto port = parse_int(a.connect.substr(colon + 1));
        if (port <= 0 || port > 65535) {
            throw InputError("port out of range in '" + a.connect + "'");
        }
        if (!a.service.model.empty()) {
            h.model = a.service.model;
        }
        Socket sock = connect_tcp(a.connect.substr(0, colon), static_cast<std::uint16_t>(port));
        sock.write_all(encode_handshake(h) + "\n");
        std::string batch;
        for (const auto& f : frames) {
            batch += encode_frame(f);
            batch += '\n';
            if (batch.size() > (1u << 20)) {
                sock.write_all(batch);
                batch.clear();
            }
        }
        sock.write_all(batch);
        ::shutdown(sock.fd(), SHUT_WR);
        sock.read_lines([&](std::string_view line) { lines.emplace_back(line); });
    } else {
        if (a.service.model.empty()) {
            throw InputError("replay needs --model for local replay or --connect host:port");
        }
        const fs::path p = ctx.resolve(a.service.model);
        GBDTModel m = with_file(p, [&] { return load_model(p); });
        StreamService svc(service_options(a.service), std::move(m),
                          [&](const std::string& line) { lines.push_back(line); });
        svc.handle_line(encode_handshake(h));
        for (const auto& f : frames) {
            svc.handle_line(encode_frame(f));
        }
    }
    std::string text;
    for (const auto& l : lines) {
        text += l;
        text += '\n';
    }
    if (a.out.empty()) {
        *ctx.out << text;
    } else {
        write_text(ctx.resolve(a.out), text);
        *ctx.out << "replayed " << frames.size() << " frames, " << lines.size() << " output lines\n";
    }
    return 0;
}

struct ReportArgs {
    ReportOptions report;
    std::optional<std::uint64_t> seed;
    std::string out = "report";
};

int cmd_report(const Context& ctx, ReportArgs a)
{
    a.report.study.master_seed = a.seed ? *a.seed : default_seed(a.report.study.master_seed);
    const ReportOutput r = run_report(a.report);
    const json config = {{"subjects", a.report.study.n_subjects},
                         {"rounds", a.report.study.rounds},
                         {"seed", a.report.study.master_seed},
                         {"preprocess", a.report.preprocess.to_json()},
                         {"dataset", dataset_json(a.report.dataset)},
                         {"hp", a.report.hp.to_json()},
                         {"adapt_fraction", a.report.adapt_fraction},
                         {"drift_per_round", a.report.drift_per_round},
                         {"loso_all_tasks", a.report.loso_all_tasks}};
    const fs::path root = ctx.resolve(a.out);
    json summary = r.summary;
    summary["provenance"] = provenance("report", config);
    write_json(root / "summary.json", summary);
    for (const auto& [name, text] : r.plot_csv) {
        write_text(root / "plots" / name, text);
    }
    const auto& intra = summary["intra_subject"];
    *ctx.out << "suit " << format_double(intra["suit"]["mean_accuracy"].get<double>()) << ", rollator "
             << format_double(intra["rollator"]["mean_accuracy"].get<double>()) << ", movement "
             << format_double(intra["movement"]["mean_accuracy"].get<double>()) << " (leave two rounds out)\n";
    *ctx.out << "movement loso " << format_double(summary["cross_subject"]["loso_mean_accuracy"].get<double>())
             << ", adapted " << format_double(summary["cross_subject"]["adapted_mean_accuracy"].get<double>())
             << '\n';
    return 0;
}

} // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Synthetic gait study data layer: generation, preprocessing, features, models and streaming"};
    app.set_version_flag("--version", std::string(kToolName) + " " + kVersion);
    app.require_subcommand(1);
    std::string workdir = ".";
    app.add_option("--workdir", workdir, "Base directory for every relative path");

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Generate the synthetic study as session directories");
    g->add_option("--subjects", gen.study.n_subjects, "Number of subjects")->check(CLI::Range(2, 99));
    g->add_option("--rounds", gen.study.rounds, "Rounds per scenario")->check(CLI::Range(2, kMaxRounds));
    g->add_option("--seed", gen.seed, "Master seed");
    g->add_option("--drift", gen.study.generator.drift_per_round, "EMG amplitude drift per round");
    g->add_option("--gap-rate", gen.study.generator.gap_rate_hz, "Dropout runs per second per EMG channel")
        ->check(CLI::NonNegativeNumber);
    g->add_option("--out", gen.out, "Output directory");

    PreprocessArgs pre;
    auto* p = app.add_subcommand("preprocess", "Interpolate gaps, remove outliers and filter sessions");
    p->add_option("--in", pre.in, "Session directory root");
    p->add_option("--out", pre.out, "Output directory root");
    p->add_option("--mode", pre.mode, "offline (zero-phase) or realtime (causal, no look-ahead)")
        ->check(CLI::IsMember({"offline", "realtime"}));
    p->add_option("--max-gap", pre.pre.max_gap_s, "Longest gap to interpolate, seconds")
        ->check(CLI::NonNegativeNumber);
    p->add_option("--poly-order", pre.pre.poly_order, "Interpolation polynomial degree")->check(CLI::Range(0, 8));
    p->add_option("--outlier-sigma", pre.pre.outlier_sigma, "Robust outlier threshold")->check(CLI::PositiveNumber);
    p->add_flag("--emg-outliers,!--no-emg-outliers", pre.pre.emg_outliers, "Outlier removal on EMG");
    p->add_flag("--imu-outliers,!--no-imu-outliers", pre.pre.imu_outliers, "Outlier removal on IMU");
    p->add_flag("--imu-lowpass", pre.pre.imu_lowpass, "Low-pass IMU channels");

    FeaturizeArgs feat;
    auto* f = app.add_subcommand("featurize", "Window preprocessed sessions into a feature table");
    f->add_option("--in", feat.in, "Preprocessed session root");
    f->add_option("--out", feat.out, "Feature CSV (default features/<task>.csv)");
    f->add_option("--task", feat.task, "suit, rollator or movement")
        ->check(CLI::IsMember({"suit", "rollator", "movement"}));
    f->add_option("--modalities", feat.modalities, "auto, emg, imu or all")
        ->check(CLI::IsMember({"auto", "emg", "imu", "all"}));
    add_window_options(f, feat.ds);

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a boosted tree model on a feature table");
    t->add_option("--features", tr.features, "Feature CSV")->required();
    t->add_option("--out", tr.out, "Model file");
    t->add_option("--seed", tr.seed, "Row subsampling seed");
    add_hp_options(t, tr.hp);

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Cross-validate on a feature table");
    e->add_option("--features", ev.features, "Feature CSV")->required();
    e->add_option("--strategy", ev.strategy, "loso or leave-two-rounds-out");
    e->add_option("--task", ev.task, "Expected task of the table (suit, rollator or movement)");
    e->add_option("--out", ev.out, "Report file");
    e->add_option("--seed", ev.seed, "Row subsampling seed");
    add_hp_options(e, ev.hp);

    AdaptArgs ad;
    auto* a = app.add_subcommand("adapt", "Leave-one-subject-out models adapted to each held-out subject");
    a->add_option("--features", ad.features, "Feature CSV")->required();
    a->add_option("--fraction", ad.fraction, "Fraction of each session used for adaptation")
        ->check(CLI::Range(0.0, 1.0));
    a->add_option("--out", ad.out, "Result file");
    a->add_option("--seed", ad.seed, "Row subsampling seed");
    add_hp_options(a, ad.hp);

    TrendArgs tn;
    auto* tc = app.add_subcommand("trend", "Per-round trend of features for one subject and scenario");
    tc->add_option("--features", tn.features, "Feature CSV")->required();
    tc->add_option("--subject", tn.subject, "Subject id");
    tc->add_option("--scenario", tn.scenario, "Scenario id 1-4")->check(CLI::Range(1, 4));
    tc->add_option("--feature", tn.feature_names, "Feature column (repeatable)")->required();
    tc->add_option("--out", tn.out, "Result file");

    StreamArgs st;
    auto* s = app.add_subcommand("stream", "Serve the streaming protocol over TCP");
    s->add_option("--host", st.host, "Bind address");
    s->add_option("--port", st.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    s->add_option("--connections", st.connections, "Exit after this many connections (0 = never)")
        ->check(CLI::NonNegativeNumber);
    add_service_options(s, st.service);

    ReplayArgs rp;
    auto* r = app.add_subcommand("replay", "Replay a stored session as stream frames");
    r->add_option("--session", rp.session, "Session directory")->required();
    r->add_option("--connect", rp.connect, "host:port of a running stream service");
    r->add_option("--frame-size", rp.frame_size, "Samples per frame")->check(CLI::PositiveNumber);
    r->add_option("--proximity-m", rp.proximity, "Proximity reading attached to every frame");
    r->add_option("--out", rp.out, "Write the service output here instead of stdout");
    add_service_options(r, rp.service);

    ReportArgs rep;
    auto* rc = app.add_subcommand("report", "Run every analysis on a freshly generated synthetic study");
    rc->add_option("--subjects", rep.report.study.n_subjects, "Number of subjects")->check(CLI::Range(2, 99));
    rc->add_option("--rounds", rep.report.study.rounds, "Rounds per scenario")->check(CLI::Range(4, kMaxRounds));
    rc->add_option("--seed", rep.seed, "Master seed");
    rc->add_option("--adapt-fraction", rep.report.adapt_fraction, "Adaptation fraction")
        ->check(CLI::Range(0.0, 1.0));
    rc->add_option("--drift", rep.report.drift_per_round, "Drift per round for the trend comparison");
    rc->add_flag("--loso-all-tasks", rep.report.loso_all_tasks, "Also run LOSO for suit and rollator");
    rc->add_option("--out", rep.out, "Output directory");
    add_hp_options(rc, rep.report.hp);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolName << ' ' << kVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n" << "run with --help for usage\n";
        return 2;
    }

    Context ctx;
    ctx.workdir = workdir;
    ctx.out = &out;
    try {
        if (*g) return cmd_generate(ctx, gen);
        if (*p) return cmd_preprocess(ctx, pre);
        if (*f) return cmd_featurize(ctx, feat);
        if (*t) return cmd_train(ctx, tr);
        if (*e) return cmd_evaluate(ctx, ev);
        if (*a) return cmd_adapt(ctx, ad);
        if (*tc) return cmd_trend(ctx, tn);
        if (*s) return cmd_stream(ctx, st);
        if (*r) return cmd_replay(ctx, rp);
        if (*rc) return cmd_report(ctx, rep);
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return 1;
    }
    return 2;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back(kToolName);
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) {
        argv.push_back(s.data());
    }
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace gaitstream
