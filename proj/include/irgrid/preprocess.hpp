#pragma once

#include <string>
#include <vector>

#include "irgrid/common.hpp"

namespace irgrid {

// Per-column min/max of the log-transformed training matrix.
struct ScalerParams {
    std::vector<double> col_min;
    std::vector<double> col_max;
    std::vector<std::string> columns;
    double epsilon = 0.0;

    int n_cols() const { return static_cast<int>(col_min.size()); }

    std::string to_json() const;
    static ScalerParams from_json(const std::string& json_text);
};

// Element-wise ln(1+x); rejects negative entries.
Matrix log_transform(const Matrix& m);

ScalerParams fit_scaler(const Matrix& train_log, std::vector<std::string> columns = {});

// (x-min)/(max-min) per column, clipped to [0,1]; constant columns map to 0.
Matrix apply_scaler(const Matrix& m, const ScalerParams& params);

// log_transform then apply_scaler.
Matrix preprocess(const Matrix& raw, const ScalerParams& params);

}  // namespace irgrid
