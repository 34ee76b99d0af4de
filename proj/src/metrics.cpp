#include "irgrid/metrics.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace irgrid {

EvalReport compute_report(const Vector& pred_mv, const Vector& labels_mv, double vdd_mv) {
    if (pred_mv.size() != labels_mv.size())
        throw ValidationError("compute_report: prediction/label length mismatch (" +
                              std::to_string(pred_mv.size()) + " vs " +
                              std::to_string(labels_mv.size()) + ")");
    if (pred_mv.size() == 0) throw ValidationError("compute_report: empty input");

    EvalReport r;
    r.n_samples = static_cast<int>(pred_mv.size());
    r.vdd_mv = vdd_mv;

    Vector err = pred_mv - labels_mv;
    r.mae_mv = err.array().abs().mean();
    r.maxe_mv = err.array().abs().maxCoeff();
    double rmse = std::sqrt(err.array().square().mean());

    double lo = labels_mv.minCoeff(), hi = labels_mv.maxCoeff();
    double range = hi - lo;
    if (range > 0) {
        r.nrmse_pct = 100.0 * rmse / range;
    } else {
        double mean = labels_mv.mean();
        r.nrmse_pct = mean != 0.0 ? 100.0 * rmse / mean : 0.0;
    }

    r.mean_pred_mv = pred_mv.mean();
    r.max_pred_mv = pred_mv.maxCoeff();
    r.mean_label_mv = labels_mv.mean();
    r.max_label_mv = hi;

    const double tol = 0.10 * vdd_mv;
    for (int i = 0; i < err.size(); ++i)
        if (std::abs(err(i)) > tol) ++r.n_violations;
    return r;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["mae_mv"] = mae_mv;
    j["maxe_mv"] = maxe_mv;
    j["nrmse_pct"] = nrmse_pct;
    j["nrmse_normalization"] = "label_range";
    j["mean_pred_mv"] = mean_pred_mv;
    j["max_pred_mv"] = max_pred_mv;
    j["mean_label_mv"] = mean_label_mv;
    j["max_label_mv"] = max_label_mv;
    j["n_violations"] = n_violations;
    j["violation_threshold_mv"] = 0.10 * vdd_mv;
    j["n_samples"] = n_samples;
    j["vdd_mv"] = vdd_mv;
    return j.dump(2);
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "samples            " << n_samples << "\n"
       << "MAE (mV)           " << mae_mv << "\n"
       << "MaxE (mV)          " << maxe_mv << "\n"
       << "NRMSE (%)          " << nrmse_pct << "   (RMSE / label range)\n"
       << "Mean IR drop (mV)  " << mean_pred_mv << "   (prediction)\n"
       << "Max IR drop (mV)   " << max_pred_mv << "   (prediction)\n"
       << "Mean label (mV)    " << mean_label_mv << "\n"
       << "Max label (mV)     " << max_label_mv << "\n"
       << "violations         " << n_violations << "   (|err| > " << 0.10 * vdd_mv
       << " mV, 10% of VDD " << vdd_mv << " mV)\n";
    return os.str();
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "model,phase,seconds\n";
    for (const auto& r : rows)
        os << r.model << ',' << r.phase << ',' << format_double(r.seconds) << "\n";
    return os.str();
}

}  // namespace irgrid
