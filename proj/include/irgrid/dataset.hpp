#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "irgrid/common.hpp"

namespace irgrid {

// One net/cell instance with its extracted electrical, physical and timing
// features and an optional measured IR-drop label.
struct NetRecord {
    std::int64_t net_id = 0;
    double x_um = 0.0;
    double y_um = 0.0;
    double resistance_ohm = 0.0;
    double p_total_w = 0.0;
    double i_peak_a = 0.0;
    double i_avg_a = 0.0;
    double t_rise_s = 0.0;
    double t_fall_s = 0.0;
    double tau_s = 0.0;
    std::optional<double> ir_drop_mv;
};

enum class FeatureSetId { SetA, SetB };

// SetA: {R, P, I_peak, I_avg, x, y}. SetB adds {t_rise, t_fall, tau}.
constexpr int feature_count(FeatureSetId id) {
    return id == FeatureSetId::SetA ? 6 : 9;
}

std::vector<std::string> feature_names(FeatureSetId id);
FeatureSetId parse_feature_set(const std::string& name);
std::string feature_set_name(FeatureSetId id);

struct Dataset {
    std::vector<NetRecord> records;
    double vdd_mv = 800.0;
    std::string provenance;

    bool has_labels() const;
    void validate() const;
};

struct FeatureMatrix {
    Matrix X;                         // rows = nets, cols per FeatureSetId
    std::vector<std::int64_t> ids;    // aligned to rows
    Vector labels_mv;                 // empty when the dataset carries no labels
    FeatureSetId set_id = FeatureSetId::SetA;
};

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.1;
    double test_frac = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitIndices {
    IndexVec train, val, test;
};

Dataset load_dataset(const std::string& path, double vdd_mv);
void save_dataset(const Dataset& ds, const std::string& path);

FeatureMatrix select_features(const Dataset& ds, FeatureSetId set_id);

// Deterministic shuffle-then-cut: floor(train*N), floor(val*N), remainder.
SplitIndices split_dataset(std::size_t n_records, const SplitSpec& spec);

}  // namespace irgrid
