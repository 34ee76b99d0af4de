#include "irgrid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace irgrid {

namespace {

const char* kHeaderNoLabel =
    "net_id,x_um,y_um,resistance_ohm,p_total_w,i_peak_a,i_avg_a,t_rise_s,t_fall_s,tau_s";
const char* kHeaderLabel =
    "net_id,x_um,y_um,resistance_ohm,p_total_w,i_peak_a,i_avg_a,t_rise_s,t_fall_s,tau_s,ir_drop_mv";

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_num(const std::string& s, std::size_t row, const char* field) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("row " + std::to_string(row) + ": cannot parse field '" +
                         std::string(field) + "' from \"" + s + "\"");
    }
}

}  // namespace

std::vector<std::string> feature_names(FeatureSetId id) {
    std::vector<std::string> names = {"resistance_ohm", "p_total_w", "i_peak_a",
                                      "i_avg_a",        "x_um",      "y_um"};
    if (id == FeatureSetId::SetB) {
        names.insert(names.end(), {"t_rise_s", "t_fall_s", "tau_s"});
    }
    return names;
}

FeatureSetId parse_feature_set(const std::string& name) {
    if (name == "setA" || name == "seta" || name == "a") return FeatureSetId::SetA;
    if (name == "setB" || name == "setb" || name == "b") return FeatureSetId::SetB;
    throw ValidationError("unknown feature set '" + name + "' (expected setA or setB)");
}

std::string feature_set_name(FeatureSetId id) {
    return id == FeatureSetId::SetA ? "setA" : "setB";
}

bool Dataset::has_labels() const {
    return !records.empty() &&
           std::all_of(records.begin(), records.end(),
                       [](const NetRecord& r) { return r.ir_drop_mv.has_value(); });
}

void Dataset::validate() const {
    if (vdd_mv <= 0) throw ValidationError("vdd_mv must be positive");
    std::unordered_set<std::int64_t> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.net_id).second)
            throw ValidationError("duplicate net_id " + std::to_string(r.net_id));
        if (r.resistance_ohm <= 0)
            throw ValidationError("net " + std::to_string(r.net_id) +
                                  ": resistance must be positive");
        if (r.i_avg_a < 0 || r.i_peak_a < r.i_avg_a)
            throw ValidationError("net " + std::to_string(r.net_id) +
                                  ": requires i_peak >= i_avg >= 0");
        if (r.t_rise_s < 0 || r.t_fall_s < 0 || r.tau_s < 0)
            throw ValidationError("net " + std::to_string(r.net_id) +
                                  ": timing fields must be non-negative");
        if (r.ir_drop_mv && *r.ir_drop_mv < 0)
            throw ValidationError("net " + std::to_string(r.net_id) +
                                  ": ir_drop_mv must be non-negative");
    }
}

Dataset load_dataset(const std::string& path, double vdd_mv) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    bool with_label;
    if (line == kHeaderLabel) {
        with_label = true;
    } else if (line == kHeaderNoLabel) {
        with_label = false;
    } else {
        throw ParseError("unrecognized CSV header in " + path);
    }

    Dataset ds;
    ds.vdd_mv = vdd_mv;
    ds.provenance = path;

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        std::size_t expected = with_label ? 11u : 10u;
        if (f.size() != expected)
            throw ParseError("row " + std::to_string(row) + ": expected " +
                             std::to_string(expected) + " fields, got " +
                             std::to_string(f.size()));
        NetRecord r;
        r.net_id = static_cast<std::int64_t>(parse_num(f[0], row, "net_id"));
        r.x_um = parse_num(f[1], row, "x_um");
        r.y_um = parse_num(f[2], row, "y_um");
        r.resistance_ohm = parse_num(f[3], row, "resistance_ohm");
        r.p_total_w = parse_num(f[4], row, "p_total_w");
        r.i_peak_a = parse_num(f[5], row, "i_peak_a");
        r.i_avg_a = parse_num(f[6], row, "i_avg_a");
        r.t_rise_s = parse_num(f[7], row, "t_rise_s");
        r.t_fall_s = parse_num(f[8], row, "t_fall_s");
        r.tau_s = parse_num(f[9], row, "tau_s");
        if (with_label) r.ir_drop_mv = parse_num(f[10], row, "ir_drop_mv");
        ds.records.push_back(r);
    }
    ds.validate();
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    bool with_label = ds.has_labels();
    out << (with_label ? kHeaderLabel : kHeaderNoLabel) << "\n";
    for (const auto& r : ds.records) {
        out << r.net_id << ',' << format_double(r.x_um) << ',' << format_double(r.y_um)
            << ',' << format_double(r.resistance_ohm) << ',' << format_double(r.p_total_w)
            << ',' << format_double(r.i_peak_a) << ',' << format_double(r.i_avg_a) << ','
            << format_double(r.t_rise_s) << ',' << format_double(r.t_fall_s) << ','
            << format_double(r.tau_s);
        if (with_label) out << ',' << format_double(*r.ir_drop_mv);
        out << "\n";
    }
}

FeatureMatrix select_features(const Dataset& ds, FeatureSetId set_id) {
    if (ds.records.empty()) throw ValidationError("select_features: empty dataset");
    const int n = static_cast<int>(ds.records.size());
    const int cols = feature_count(set_id);

    FeatureMatrix fm;
    fm.set_id = set_id;
    fm.X.resize(n, cols);
    fm.ids.reserve(n);
    bool labeled = ds.has_labels();
    if (labeled) fm.labels_mv.resize(n);

    for (int i = 0; i < n; ++i) {
        const auto& r = ds.records[i];
        fm.X(i, 0) = r.resistance_ohm;
        fm.X(i, 1) = r.p_total_w;
        fm.X(i, 2) = r.i_peak_a;
        fm.X(i, 3) = r.i_avg_a;
        fm.X(i, 4) = r.x_um;
        fm.X(i, 5) = r.y_um;
        if (set_id == FeatureSetId::SetB) {
            fm.X(i, 6) = r.t_rise_s;
            fm.X(i, 7) = r.t_fall_s;
            fm.X(i, 8) = r.tau_s;
        }
        fm.ids.push_back(r.net_id);
        if (labeled) fm.labels_mv(i) = *r.ir_drop_mv;
    }
    return fm;
}

void SplitSpec::validate() const {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0)
        throw ValidationError("split fractions must be non-negative");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ValidationError("split fractions must sum to 1");
}

SplitIndices split_dataset(std::size_t n_records, const SplitSpec& spec) {
    spec.validate();
    const auto n = static_cast<int>(n_records);
    IndexVec perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(spec.seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    const int n_train = static_cast<int>(std::floor(spec.train_frac * n));
    const int n_val = static_cast<int>(std::floor(spec.val_frac * n));

    SplitIndices s;
    s.train.assign(perm.begin(), perm.begin() + n_train);
    s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    s.test.assign(perm.begin() + n_train + n_val, perm.end());
    return s;
}

}  // namespace irgrid
