#include "irgrid/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace irgrid {

Matrix log_transform(const Matrix& m) {
    for (int j = 0; j < m.cols(); ++j)
        for (int i = 0; i < m.rows(); ++i)
            if (m(i, j) < 0)
                throw ValidationError("log_transform: negative entry at row " +
                                      std::to_string(i) + ", column " + std::to_string(j));
    return m.array().log1p();
}

ScalerParams fit_scaler(const Matrix& train_log, std::vector<std::string> columns) {
    if (train_log.rows() == 0) throw ValidationError("fit_scaler: empty matrix");
    ScalerParams p;
    p.columns = std::move(columns);
    p.col_min.resize(train_log.cols());
    p.col_max.resize(train_log.cols());
    for (int j = 0; j < train_log.cols(); ++j) {
        p.col_min[j] = train_log.col(j).minCoeff();
        p.col_max[j] = train_log.col(j).maxCoeff();
    }
    return p;
}

Matrix apply_scaler(const Matrix& m, const ScalerParams& params) {
    if (m.cols() != params.n_cols())
        throw ValidationError("apply_scaler: matrix has " + std::to_string(m.cols()) +
                              " columns, scaler has " + std::to_string(params.n_cols()));
    Matrix out(m.rows(), m.cols());
    for (int j = 0; j < m.cols(); ++j) {
        double lo = params.col_min[j], hi = params.col_max[j];
        double range = hi - lo;
        for (int i = 0; i < m.rows(); ++i) {
            double v = range > 0 ? (m(i, j) - lo) / range : 0.0;
            out(i, j) = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

Matrix preprocess(const Matrix& raw, const ScalerParams& params) {
    return apply_scaler(log_transform(raw), params);
}

std::string ScalerParams::to_json() const {
    nlohmann::json j;
    j["col_min"] = col_min;
    j["col_max"] = col_max;
    j["columns"] = columns;
    j["epsilon"] = epsilon;
    return j.dump(2);
}

ScalerParams ScalerParams::from_json(const std::string& json_text) {
    auto j = nlohmann::json::parse(json_text);
    ScalerParams p;
    p.col_min = j.at("col_min").get<std::vector<double>>();
    p.col_max = j.at("col_max").get<std::vector<double>>();
    p.columns = j.at("columns").get<std::vector<std::string>>();
    p.epsilon = j.value("epsilon", 0.0);
    if (p.col_min.size() != p.col_max.size())
        throw ValidationError("scaler JSON: min/max length mismatch");
    return p;
}

}  // namespace irgrid
