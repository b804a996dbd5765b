#include "gaitstream/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "gaitstream/errors.hpp"

namespace gaitstream {

using nlohmann::json;

namespace {

double sigmoid(double z)
{
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z)
{
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double point_loss(double margin, int y)
{
    return y == 1 ? softplus(-margin) : softplus(margin);
}

struct Candidate {
    double gain = 0.0;
    double threshold = 0.0;
    int feature = -1;
    double gl = 0.0;
    double hl = 0.0;
    std::size_t nl = 0;
};

struct OpenNode {
    int id = 0;
    std::size_t begin = 0; // segment in every feature's sorted list
    std::size_t end = 0;
    double g = 0.0;
    double h = 0.0;
};

// Exact greedy tree growth on presorted columns. Each feature keeps its rows
// sorted by value; a node owns the same contiguous segment in every list and
// splitting a node stably partitions that segment, so scans stay sequential.
struct Builder {
    const double* x;
    std::size_t n;
    std::size_t d;
    const GBDTParams& hp;
    const std::vector<std::vector<std::uint32_t>>& order;
    const std::vector<std::vector<double>>& sorted;

    double score(double g, double h) const { return g * g / (h + hp.lambda); }

    // Lowest threshold wins ties within a feature because only strictly
    // larger gains replace the current best.
    Candidate scan(const std::uint32_t* idx, const double* val, const OpenNode& node, int feature,
                   const std::vector<double>& g, const std::vector<double>& h) const
    {
        Candidate best;
        const auto msl = static_cast<std::size_t>(std::max(1, hp.min_samples_leaf));
        const std::size_t count = node.end - node.begin;
        const double parent = score(node.g, node.h);
        double gl = 0.0;
        double hl = 0.0;
        for (std::size_t p = node.begin; p < node.end; ++p) {
            const std::size_t nl = p - node.begin;
            const double v = val[p];
            if (nl >= msl && count - nl >= msl && v > val[p - 1]) {
                const double gain = 0.5 * (score(gl, hl) + score(node.g - gl, node.h - hl) - parent);
                if (gain > best.gain) {
                    const double lo = val[p - 1];
                    double thr = lo + (v - lo) / 2.0;
                    if (!(thr < v)) {
                        thr = lo;
                    }
                    best = {gain, thr, feature, gl, hl, nl};
                }
            }
            const std::uint32_t r = idx[p];
            gl += g[r];
            hl += h[r];
        }
        return best;
    }

    Tree build(const std::vector<double>& g, const std::vector<double>& h, const std::vector<std::uint8_t>& in_bag,
               std::vector<int>& node_of, Execution exec) const
    {
        const bool all = std::all_of(in_bag.begin(), in_bag.end(), [](std::uint8_t b) { return b != 0; });
        std::vector<std::vector<std::uint32_t>> idx(d);
        std::vector<std::vector<double>> val(d);
        for (std::size_t f = 0; f < d; ++f) {
            if (all) {
                idx[f] = order[f];
                val[f] = sorted[f];
            } else {
                for (std::size_t p = 0; p < n; ++p) {
                    if (in_bag[order[f][p]]) {
                        idx[f].push_back(order[f][p]);
                        val[f].push_back(sorted[f][p]);
                    }
                }
            }
        }
        OpenNode root{0, 0, idx.empty() ? 0 : idx[0].size(), 0.0, 0.0};
        for (std::size_t r = 0; r < n; ++r) {
            if (in_bag[r]) {
                root.g += g[r];
                root.h += h[r];
            }
        }
        Tree tree;
        tree.nodes.emplace_back();
        std::vector<OpenNode> open{root};
        std::vector<std::uint8_t> go_left(n, 0);
        const auto nd = static_cast<std::ptrdiff_t>(d);
        for (int depth = 0; depth < hp.max_depth && !open.empty(); ++depth) {
            std::vector<std::vector<Candidate>> per_feature(d, std::vector<Candidate>(open.size()));
            const auto scan_all = [&](std::ptrdiff_t fi) {
                const auto f = static_cast<std::size_t>(fi);
                for (std::size_t s = 0; s < open.size(); ++s) {
                    per_feature[f][s] = scan(idx[f].data(), val[f].data(), open[s], static_cast<int>(f), g, h);
                }
            };
            if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
                for (std::ptrdiff_t f = 0; f < nd; ++f) {
                    scan_all(f);
                }
            } else {
                for (std::ptrdiff_t f = 0; f < nd; ++f) {
                    scan_all(f);
                }
            }
            // Reduce in feature order; strict comparison keeps the lowest index.
            std::vector<Candidate> best(open.size());
            for (std::size_t f = 0; f < d; ++f) {
                for (std::size_t s = 0; s < open.size(); ++s) {
                    if (per_feature[f][s].gain > best[s].gain) {
                        best[s] = per_feature[f][s];
                    }
                }
            }
            std::vector<OpenNode> next;
            std::vector<std::size_t> split_nodes;
            for (std::size_t s = 0; s < open.size(); ++s) {
                const Candidate& c = best[s];
                if (c.feature < 0) {
                    continue;
                }
                const OpenNode& o = open[s];
                const int l = static_cast<int>(tree.nodes.size());
                tree.nodes.emplace_back();
                tree.nodes.emplace_back();
                TreeNode& node = tree.nodes[static_cast<std::size_t>(o.id)];
                node.feature = c.feature;
                node.threshold = c.threshold;
                node.gain = c.gain;
                node.left = l;
                node.right = l + 1;
                const auto f = static_cast<std::size_t>(c.feature);
                for (std::size_t p = o.begin; p < o.end; ++p) {
                    go_left[idx[f][p]] = val[f][p] <= c.threshold ? 1 : 0;
                }
                next.push_back({l, o.begin, o.begin + c.nl, c.gl, c.hl});
                next.push_back({l + 1, o.begin + c.nl, o.end, o.g - c.gl, o.h - c.hl});
                split_nodes.push_back(s);
            }
            if (next.empty() || depth + 1 == hp.max_depth) {
                break;
            }
            const auto partition = [&](std::ptrdiff_t fi) {
                const auto f = static_cast<std::size_t>(fi);
                std::vector<std::uint32_t> ti;
                std::vector<double> tv;
                for (std::size_t s : split_nodes) {
                    const OpenNode& o = open[s];
                    ti.clear();
                    tv.clear();
                    std::size_t w = o.begin;
                    for (std::size_t p = o.begin; p < o.end; ++p) {
                        const std::uint32_t r = idx[f][p];
                        if (go_left[r]) {
                            idx[f][w] = r;
                            val[f][w] = val[f][p];
                            ++w;
                        } else {
                            ti.push_back(r);
                            tv.push_back(val[f][p]);
                        }
                    }
                    std::copy(ti.begin(), ti.end(), idx[f].begin() + static_cast<std::ptrdiff_t>(w));
                    std::copy(tv.begin(), tv.end(), val[f].begin() + static_cast<std::ptrdiff_t>(w));
                }
            };
            if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
                for (std::ptrdiff_t f = 0; f < nd; ++f) {
                    partition(f);
                }
            } else {
                for (std::ptrdiff_t f = 0; f < nd; ++f) {
                    partition(f);
                }
            }
            open = std::move(next);
        }
        for (std::size_t r = 0; r < n; ++r) {
            int k = 0;
            while (!tree.nodes[static_cast<std::size_t>(k)].leaf()) {
                const TreeNode& node = tree.nodes[static_cast<std::size_t>(k)];
                k = x[r * d + static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
            }
            node_of[r] = k;
        }
        return tree;
    }
};

} // namespace

int Tree::depth() const
{
    std::vector<int> level(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, level[i]);
        if (!nodes[i].leaf()) {
            level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
            level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
        }
    }
    return deepest;
}

json GBDTParams::to_json() const
{
    return {{"n_trees", n_trees},     {"max_depth", max_depth}, {"learning_rate", learning_rate},
            {"min_samples_leaf", min_samples_leaf}, {"lambda", lambda}, {"subsample", subsample},
            {"seed", seed}};
}

GBDTParams GBDTParams::from_json(const json& j)
{
    GBDTParams p;
    p.n_trees = j.value("n_trees", p.n_trees);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.learning_rate = j.value("learning_rate", p.learning_rate);
    p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
    p.lambda = j.value("lambda", p.lambda);
    p.subsample = j.value("subsample", p.subsample);
    p.seed = j.value("seed", p.seed);
    return p;
}

double GBDTModel::margin(std::span<const double> row) const
{
    if (row.size() != feature_names.size()) {
        throw InputError("expected " + std::to_string(feature_names.size()) + " features, got " +
                         std::to_string(row.size()));
    }
    double sum = 0.0;
    for (const Tree& t : trees) {
        sum += t.eval(row.data());
    }
    return base_score + hp.learning_rate * sum;
}

double GBDTModel::positive_probability(std::span<const double> row) const
{
    return sigmoid(margin(row));
}

std::pair<double, double> GBDTModel::predict_proba(std::span<const double> row) const
{
    const double p = positive_probability(row);
    return {1.0 - p, p};
}

int GBDTModel::predict(std::span<const double> row) const
{
    const auto [p0, p1] = predict_proba(row);
    return p1 > p0 ? 1 : 0;
}

std::vector<double> aligned_values(const GBDTModel& m, const FeatureTable& table)
{
    if (table.schema == m.feature_names) {
        return table.values;
    }
    std::vector<std::size_t> cols;
    for (const auto& name : m.feature_names) {
        const auto c = table.column(name);
        if (!c) {
            throw InputError("feature '" + name + "' required by the model is missing from the table");
        }
        cols.push_back(*c);
    }
    std::vector<double> out;
    out.reserve(table.rows() * cols.size());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c : cols) {
            out.push_back(table.at(r, c));
        }
    }
    return out;
}

std::vector<int> GBDTModel::predict(const FeatureTable& t) const
{
    const std::vector<double> v = aligned_values(*this, t);
    const std::size_t d = feature_names.size();
    std::vector<int> out(t.rows());
    const auto n = static_cast<std::ptrdiff_t>(t.rows());
#pragma omp parallel for
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = predict(std::span<const double>(v.data() + static_cast<std::size_t>(i) * d, d));
    }
    return out;
}

double GBDTModel::accuracy(const FeatureTable& t) const
{
    if (t.rows() == 0) {
        return 0.0;
    }
    const auto pred = predict(t);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ok += pred[i] == t.labels[i] ? 1 : 0;
    }
    return static_cast<double>(ok) / static_cast<double>(pred.size());
}

double log_loss(std::span<const double> margins, std::span<const int> labels)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        sum += point_loss(margins[i], labels[i]);
    }
    return margins.empty() ? 0.0 : sum / static_cast<double>(margins.size());
}

GBDTModel train(const FeatureTable& table, const GBDTParams& hp, Execution exec)
{
    const std::size_t n = table.rows();
    const std::size_t d = table.cols();
    if (hp.n_trees < 0 || hp.max_depth < 0 || !(hp.learning_rate > 0.0) || hp.min_samples_leaf < 1 ||
        !(hp.lambda >= 0.0) || !(hp.subsample > 0.0 && hp.subsample <= 1.0)) {
        throw TrainError("invalid hyperparameters");
    }
    if (d == 0) {
        throw TrainError("table has no feature columns");
    }
    std::size_t positives = 0;
    for (int y : table.labels) {
        positives += y == 1 ? 1 : 0;
    }
    if (positives == 0 || positives == n) {
        throw TrainError("training table contains a single class");
    }
    if (n < 2 * static_cast<std::size_t>(hp.min_samples_leaf)) {
        throw TrainError("need at least " + std::to_string(2 * hp.min_samples_leaf) + " rows, got " +
                         std::to_string(n));
    }
    for (std::size_t i = 0; i < table.values.size(); ++i) {
        if (!std::isfinite(table.values[i])) {
            throw TrainError("non-finite feature value in row " + std::to_string(i / d) + ", column '" +
                             table.schema[i % d] + "'");
        }
    }

    GBDTModel m;
    m.hp = hp;
    m.task = table.task;
    m.feature_names = table.schema;
    m.classes = table.classes;
    const double rate = static_cast<double>(positives) / static_cast<double>(n);
    m.base_score = std::log(rate / (1.0 - rate));

    const double* x = table.values.data();
    std::vector<std::vector<std::uint32_t>> order(d);
    const auto nd = static_cast<std::ptrdiff_t>(d);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t fi = 0; fi < nd; ++fi) {
        const auto f = static_cast<std::size_t>(fi);
        auto& o = order[f];
        o.resize(n);
        std::iota(o.begin(), o.end(), 0U);
        std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x[a * d + f] < x[b * d + f]; });
    }

    std::vector<std::vector<double>> sorted(d);
    for (std::size_t f = 0; f < d; ++f) {
        sorted[f].resize(n);
        for (std::size_t p = 0; p < n; ++p) {
            sorted[f][p] = x[static_cast<std::size_t>(order[f][p]) * d + f];
        }
    }
    const Builder builder{x, n, d, hp, order, sorted};
    std::vector<double> margin(n, m.base_score), g(n), h(n);
    std::vector<std::uint8_t> in_bag(n, 1);
    std::vector<int> node_of(n, 0);
    std::mt19937_64 rng(hp.seed);
    m.training_loss.push_back(log_loss(margin, table.labels));

    for (int round = 0; round < hp.n_trees; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margin[i]);
            g[i] = p - static_cast<double>(table.labels[i]);
            h[i] = std::max(p * (1.0 - p), 1e-16);
        }
        if (hp.subsample < 1.0) {
            std::bernoulli_distribution pick(hp.subsample);
            for (auto& b : in_bag) {
                b = pick(rng) ? 1 : 0;
            }
        }
        Tree tree = builder.build(g, h, in_bag, node_of, exec);

        // Leaf values, then step halving per leaf so that no leaf's loss grows.
        std::vector<double> lg(tree.nodes.size(), 0.0), lh(tree.nodes.size(), 0.0);
        std::vector<std::vector<std::uint32_t>> members(tree.nodes.size());
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(node_of[i]);
            members[k].push_back(static_cast<std::uint32_t>(i));
            if (in_bag[i]) {
                lg[k] += g[i];
                lh[k] += h[i];
            }
        }
        for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
            TreeNode& node = tree.nodes[k];
            if (!node.leaf()) {
                continue;
            }
            double w = -lg[k] / (lh[k] + hp.lambda);
            const auto leaf_loss = [&](double value) {
                double s = 0.0;
                for (std::uint32_t i : members[k]) {
                    s += point_loss(margin[i] + hp.learning_rate * value, table.labels[i]);
                }
                return s;
            };
            const double before = leaf_loss(0.0);
            int tries = 0;
            while (w != 0.0 && leaf_loss(w) > before) {
                w = ++tries >= 40 ? 0.0 : w / 2.0;
            }
            node.value = w;
        }
        for (std::size_t i = 0; i < n; ++i) {
            margin[i] += hp.learning_rate * tree.nodes[static_cast<std::size_t>(node_of[i])].value;
        }
        m.trees.push_back(std::move(tree));
        m.training_loss.push_back(log_loss(margin, table.labels));
    }
    return m;
}

std::vector<std::pair<std::string, double>> feature_importance(const GBDTModel& m)
{
    std::vector<double> gain(m.feature_names.size(), 0.0);
    for (const Tree& t : m.trees) {
        for (const TreeNode& node : t.nodes) {
            if (!node.leaf()) {
                gain[static_cast<std::size_t>(node.feature)] += node.gain;
            }
        }
    }
    const double total = std::accumulate(gain.begin(), gain.end(), 0.0);
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t f = 0; f < gain.size(); ++f) {
        out.emplace_back(m.feature_names[f], total > 0.0 ? gain[f] / total : 0.0);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return out;
}

json model_to_json(const GBDTModel& m)
{
    json trees = json::array();
    for (const Tree& t : m.trees) {
        json nodes = json::array();
        for (const TreeNode& n : t.nodes) {
            if (n.leaf()) {
                nodes.push_back({{"leaf", n.value}});
            } else {
                nodes.push_back({{"feature", n.feature},
                                 {"threshold", n.threshold},
                                 {"left", n.left},
                                 {"right", n.right},
                                 {"gain", n.gain}});
            }
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    json importance = json::array();
    for (const auto& [name, v] : feature_importance(m)) {
        importance.push_back({{"feature", name}, {"importance", v}});
    }
    return {{"format", "gaitstream-gbdt"},
            {"version", 1},
            {"config", m.config},
            {"task", to_string(m.task)},
            {"hp", m.hp.to_json()},
            {"feature_names", m.feature_names},
            {"classes", m.classes},
            {"base_score", m.base_score},
            {"learning_rate", m.hp.learning_rate},
            {"training_loss", m.training_loss},
            {"trees", std::move(trees)},
            {"importance", std::move(importance)}};
}

GBDTModel model_from_json(const json& j)
{
    try {
        if (j.at("format").get<std::string>() != "gaitstream-gbdt") {
            throw FormatError("not a gaitstream model file");
        }
        if (j.at("version").get<int>() != 1) {
            throw FormatError("unsupported model version " + j.at("version").dump());
        }
        GBDTModel m;
        m.config = j.value("config", json());
        m.task = parse_task(j.at("task").get<std::string>());
        m.hp = GBDTParams::from_json(j.at("hp"));
        m.hp.learning_rate = j.at("learning_rate").get<double>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.classes = j.at("classes").get<std::vector<std::string>>();
        m.base_score = j.at("base_score").get<double>();
        m.training_loss = j.value("training_loss", std::vector<double>{});
        const int d = static_cast<int>(m.feature_names.size());
        for (const auto& jt : j.at("trees")) {
            Tree t;
            for (const auto& jn : jt.at("nodes")) {
                TreeNode n;
                if (jn.contains("leaf")) {
                    n.value = jn.at("leaf").get<double>();
                } else {
                    n.feature = jn.at("feature").get<int>();
                    n.threshold = jn.at("threshold").get<double>();
                    n.left = jn.at("left").get<int>();
                    n.right = jn.at("right").get<int>();
                    n.gain = jn.value("gain", 0.0);
                }
                t.nodes.push_back(n);
            }
            const int size = static_cast<int>(t.nodes.size());
            if (size == 0) {
                throw FormatError("tree without nodes");
            }
            for (int k = 0; k < size; ++k) {
                const TreeNode& n = t.nodes[static_cast<std::size_t>(k)];
                if (!n.leaf() && (n.feature >= d || n.left <= k || n.right <= k || n.left >= size || n.right >= size)) {
                    throw FormatError("malformed tree node " + std::to_string(k));
                }
            }
            m.trees.push_back(std::move(t));
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed model: ") + e.what());
    }
}

void save_model(const GBDTModel& m, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out << model_to_json(m).dump(1) << '\n';
}

GBDTModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot read model " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

} // namespace gaitstream
