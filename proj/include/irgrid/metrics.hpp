#pragma once

#include <string>
#include <vector>

#include "irgrid/common.hpp"

namespace irgrid {

struct EvalReport {
    double mae_mv = 0.0;
    double maxe_mv = 0.0;
    double nrmse_pct = 0.0;  // 100 * RMSE / label range
    double mean_pred_mv = 0.0;
    double max_pred_mv = 0.0;
    double mean_label_mv = 0.0;
    double max_label_mv = 0.0;
    int n_violations = 0;  // |error| > 0.10 * VDD
    int n_samples = 0;
    double vdd_mv = 0.0;

    std::string to_json() const;
    std::string to_text() const;  // aligned columns, states the NRMSE normalization
};

EvalReport compute_report(const Vector& pred_mv, const Vector& labels_mv, double vdd_mv);

struct BenchRow {
    std::string model;
    std::string phase;  // "train" | "predict" | "solve"
    double seconds = 0.0;
};

std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace irgrid
