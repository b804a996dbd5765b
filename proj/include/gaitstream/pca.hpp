#pragma once

#include <string>
#include <vector>

#include "gaitstream/dataset.hpp"

namespace gaitstream {

struct PcaResult {
    std::vector<std::string> features;      // standardized columns kept (non-constant)
    std::vector<double> explained_variance; // all components, descending
    std::vector<double> explained_ratio;
    std::vector<std::vector<double>> components; // dims x features, unit length
    std::vector<double> coords;                  // rows x dims, row-major
    std::size_t dims = 0;
};

// Standardizes every column (zero-variance columns dropped) and projects on
// the leading `dims` principal components. Each component's sign is chosen
// so that its largest-magnitude loading is positive. Throws ProjectionError
// for an all-constant table, too few rows or dims out of range.
PcaResult pca_project(const FeatureTable& t, int dims = 2);

} // namespace gaitstream
