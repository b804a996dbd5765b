#include "gaitstream/pca.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "gaitstream/errors.hpp"

namespace gaitstream {

PcaResult pca_project(const FeatureTable& t, int dims)
{
    if (dims < 1) {
        throw ProjectionError("dims must be >= 1");
    }
    const std::size_t n = t.rows();
    if (n < static_cast<std::size_t>(dims) || n < 2) {
        throw ProjectionError("need at least " + std::to_string(std::max(dims, 2)) + " rows, got " +
                              std::to_string(n));
    }
    PcaResult r;
    std::vector<std::size_t> keep;
    std::vector<double> mean, scale;
    for (std::size_t c = 0; c < t.cols(); ++c) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            m += t.at(i, c);
        }
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = t.at(i, c) - m;
            v += d * d;
        }
        v /= static_cast<double>(n);
        if (v > 0.0 && std::isfinite(v)) {
            keep.push_back(c);
            mean.push_back(m);
            scale.push_back(std::sqrt(v));
            r.features.push_back(t.schema[c]);
        }
    }
    if (keep.empty()) {
        throw ProjectionError("every feature column is constant");
    }
    if (static_cast<std::size_t>(dims) > keep.size()) {
        throw ProjectionError("dims " + std::to_string(dims) + " exceeds the " + std::to_string(keep.size()) +
                              " non-constant features");
    }
    const auto p = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd z(static_cast<Eigen::Index>(n), p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < keep.size(); ++k) {
            z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (t.at(i, keep[k]) - mean[k]) / scale[k];
        }
    }
    const Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(n - 1);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) {
        throw ProjectionError("eigen decomposition failed");
    }
    const Eigen::VectorXd& ev = es.eigenvalues(); // ascending
    double total = 0.0;
    for (Eigen::Index k = p - 1; k >= 0; --k) {
        const double v = std::max(0.0, ev(k));
        r.explained_variance.push_back(v);
        total += v;
    }
    for (double v : r.explained_variance) {
        r.explained_ratio.push_back(total > 0.0 ? v / total : 0.0);
    }
    r.dims = static_cast<std::size_t>(dims);
    Eigen::MatrixXd w(p, dims);
    for (int k = 0; k < dims; ++k) {
        Eigen::VectorXd v = es.eigenvectors().col(p - 1 - k);
        Eigen::Index arg = 0;
        for (Eigen::Index j = 1; j < p; ++j) {
            if (std::abs(v(j)) > std::abs(v(arg))) {
                arg = j;
            }
        }
        if (v(arg) < 0.0) {
            v = -v;
        }
        w.col(k) = v;
        r.components.emplace_back(v.data(), v.data() + p);
    }
    const Eigen::MatrixXd proj = z * w;
    r.coords.resize(n * r.dims);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < r.dims; ++k) {
            r.coords[i * r.dims + k] = proj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        }
    }
    return r;
}

} // namespace gaitstream
