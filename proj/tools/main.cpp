#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "irgrid/cnn.hpp"
#include "irgrid/gbt.hpp"
#include "irgrid/gnn.hpp"
#include "irgrid/graph.hpp"
#include "irgrid/metrics.hpp"
#include "irgrid/preprocess.hpp"
#include "irgrid/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace irgrid;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// RunConfig: one JSON file mirroring every module's config; CLI flags override.

struct RunConfig {
    SynthConfig synth;
    SplitSpec split;
    GnnConfig gnn;
    GbtConfig gbt;
    CnnConfig cnn;
    std::string model = "gcn";      // gcn | gat | gin | gbt | cnn
    std::string features = "setB";  // setA | setB
    double threshold_um = 5.0;
    std::vector<double> thresholds = {1.0, 3.0, 5.0};  // graph-stats
    double vdd_mv = 800.0;
    double tile_um = 1.5;
    std::string eval_subset = "test";  // train | val | test | all
    std::vector<std::string> bench_archs = {"gcn", "gat", "gin"};
    std::string data_path;
    std::string model_path;
    std::string pred_path;
};

void expect_keys(const json& j, const std::string& ctx,
                 std::initializer_list<const char*> keys) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys)
            if (it.key() == k) known = true;
        if (!known)
            throw ValidationError("config: unknown key '" + it.key() + "' in " + ctx);
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("config " + path + ": " + e.what());
    }
    expect_keys(j, "top level",
                {"synth", "split", "gnn", "gbt", "cnn", "model", "features",
                 "threshold_um", "thresholds", "vdd_mv", "tile_um", "eval_subset",
                 "bench_archs", "data_path", "model_path", "pred_path"});
    if (j.contains("synth")) {
        const json& s = j["synth"];
        expect_keys(s, "synth",
                    {"seed", "rows", "cols", "pitch_um", "seg_resistance_ohm", "n_cells",
                     "vdd_mv", "i_avg_min_a", "i_avg_max_a", "peak_ratio_max",
                     "t_rise_max_s", "t_fall_max_s", "tau_max_s", "pad_spacing", "kappa"});
        get_if(s, "seed", rc.synth.seed);
        get_if(s, "rows", rc.synth.rows);
        get_if(s, "cols", rc.synth.cols);
        get_if(s, "pitch_um", rc.synth.pitch_um);
        get_if(s, "seg_resistance_ohm", rc.synth.seg_resistance_ohm);
        get_if(s, "n_cells", rc.synth.n_cells);
        get_if(s, "vdd_mv", rc.synth.vdd_mv);
        get_if(s, "i_avg_min_a", rc.synth.i_avg_min_a);
        get_if(s, "i_avg_max_a", rc.synth.i_avg_max_a);
        get_if(s, "peak_ratio_max", rc.synth.peak_ratio_max);
        get_if(s, "t_rise_max_s", rc.synth.t_rise_max_s);
        get_if(s, "t_fall_max_s", rc.synth.t_fall_max_s);
        get_if(s, "tau_max_s", rc.synth.tau_max_s);
        get_if(s, "pad_spacing", rc.synth.pad_spacing);
        get_if(s, "kappa", rc.synth.kappa);
    }
    if (j.contains("split")) {
        const json& s = j["split"];
        expect_keys(s, "split", {"train_frac", "val_frac", "test_frac", "seed"});
        get_if(s, "train_frac", rc.split.train_frac);
        get_if(s, "val_frac", rc.split.val_frac);
        get_if(s, "test_frac", rc.split.test_frac);
        get_if(s, "seed", rc.split.seed);
    }
    if (j.contains("gnn")) {
        const json& s = j["gnn"];
        expect_keys(s, "gnn",
                    {"n_layers", "hidden_channels", "gat_heads", "gin_eps_init",
                     "dropout_p", "lr", "weight_decay", "max_epochs", "patience", "seed",
                     "use_edge_feature"});
        get_if(s, "n_layers", rc.gnn.n_layers);
        get_if(s, "hidden_channels", rc.gnn.hidden_channels);
        get_if(s, "gat_heads", rc.gnn.gat_heads);
        get_if(s, "gin_eps_init", rc.gnn.gin_eps_init);
        get_if(s, "dropout_p", rc.gnn.dropout_p);
        get_if(s, "lr", rc.gnn.lr);
        get_if(s, "weight_decay", rc.gnn.weight_decay);
        get_if(s, "max_epochs", rc.gnn.max_epochs);
        get_if(s, "patience", rc.gnn.patience);
        get_if(s, "seed", rc.gnn.seed);
        get_if(s, "use_edge_feature", rc.gnn.use_edge_feature);
    }
    if (j.contains("gbt")) {
        const json& s = j["gbt"];
        expect_keys(s, "gbt",
                    {"n_trees", "max_depth", "learning_rate", "min_samples_leaf", "seed"});
        get_if(s, "n_trees", rc.gbt.n_trees);
        get_if(s, "max_depth", rc.gbt.max_depth);
        get_if(s, "learning_rate", rc.gbt.learning_rate);
        get_if(s, "min_samples_leaf", rc.gbt.min_samples_leaf);
        get_if(s, "seed", rc.gbt.seed);
    }
    if (j.contains("cnn")) {
        const json& s = j["cnn"];
        expect_keys(s, "cnn",
                    {"encoder_channels", "decoder_channels", "lr", "max_epochs", "seed"});
        get_if(s, "encoder_channels", rc.cnn.encoder_channels);
        get_if(s, "decoder_channels", rc.cnn.decoder_channels);
        get_if(s, "lr", rc.cnn.lr);
        get_if(s, "max_epochs", rc.cnn.max_epochs);
        get_if(s, "seed", rc.cnn.seed);
    }
    get_if(j, "model", rc.model);
    get_if(j, "features", rc.features);
    get_if(j, "threshold_um", rc.threshold_um);
    get_if(j, "thresholds", rc.thresholds);
    get_if(j, "vdd_mv", rc.vdd_mv);
    get_if(j, "tile_um", rc.tile_um);
    get_if(j, "eval_subset", rc.eval_subset);
    get_if(j, "bench_archs", rc.bench_archs);
    get_if(j, "data_path", rc.data_path);
    get_if(j, "model_path", rc.model_path);
    get_if(j, "pred_path", rc.pred_path);
    return rc;
}

json run_config_json(const RunConfig& rc) {
    json j;
    j["synth"] = {{"seed", rc.synth.seed},
                  {"rows", rc.synth.rows},
                  {"cols", rc.synth.cols},
                  {"pitch_um", rc.synth.pitch_um},
                  {"seg_resistance_ohm", rc.synth.seg_resistance_ohm},
                  {"n_cells", rc.synth.n_cells},
                  {"vdd_mv", rc.synth.vdd_mv},
                  {"i_avg_min_a", rc.synth.i_avg_min_a},
                  {"i_avg_max_a", rc.synth.i_avg_max_a},
                  {"peak_ratio_max", rc.synth.peak_ratio_max},
                  {"t_rise_max_s", rc.synth.t_rise_max_s},
                  {"t_fall_max_s", rc.synth.t_fall_max_s},
                  {"tau_max_s", rc.synth.tau_max_s},
                  {"pad_spacing", rc.synth.pad_spacing},
                  {"kappa", rc.synth.kappa}};
    j["split"] = {{"train_frac", rc.split.train_frac},
                  {"val_frac", rc.split.val_frac},
                  {"test_frac", rc.split.test_frac},
                  {"seed", rc.split.seed}};
    j["gnn"] = {{"n_layers", rc.gnn.n_layers},
                {"hidden_channels", rc.gnn.hidden_channels},
                {"gat_heads", rc.gnn.gat_heads},
                {"gin_eps_init", rc.gnn.gin_eps_init},
                {"dropout_p", rc.gnn.dropout_p},
                {"lr", rc.gnn.lr},
                {"weight_decay", rc.gnn.weight_decay},
                {"max_epochs", rc.gnn.max_epochs},
                {"patience", rc.gnn.patience},
                {"seed", rc.gnn.seed},
                {"use_edge_feature", rc.gnn.use_edge_feature}};
    j["gbt"] = {{"n_trees", rc.gbt.n_trees},
                {"max_depth", rc.gbt.max_depth},
                {"learning_rate", rc.gbt.learning_rate},
                {"min_samples_leaf", rc.gbt.min_samples_leaf},
                {"seed", rc.gbt.seed}};
    j["cnn"] = {{"encoder_channels", rc.cnn.encoder_channels},
                {"decoder_channels", rc.cnn.decoder_channels},
                {"lr", rc.cnn.lr},
                {"max_epochs", rc.cnn.max_epochs},
                {"seed", rc.cnn.seed}};
    j["model"] = rc.model;
    j["features"] = rc.features;
    j["threshold_um"] = rc.threshold_um;
    j["thresholds"] = rc.thresholds;
    j["vdd_mv"] = rc.vdd_mv;
    j["tile_um"] = rc.tile_um;
    j["eval_subset"] = rc.eval_subset;
    j["bench_archs"] = rc.bench_archs;
    j["data_path"] = rc.data_path;
    j["model_path"] = rc.model_path;
    j["pred_path"] = rc.pred_path;
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

void write_resolved_config(const RunConfig& rc, const fs::path& out_dir) {
    write_text(out_dir / "config.resolved.json", run_config_json(rc).dump(2) + "\n");
}

fs::path prepare_out_dir(const std::string& out) {
    if (out.empty()) throw UsageError("--out is required");
    fs::path p(out);
    fs::create_directories(p);
    return p;
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces.

struct GraphBundle {
    FeatureMatrix fm;
    ScalerParams scaler;
    CircuitGraph graph;
};

GraphBundle build_graph_bundle(const Dataset& ds, FeatureSetId set_id, double threshold_um,
                               const IndexVec& scaler_fit_rows, const ScalerParams* fixed) {
    GraphBundle b;
    b.fm = select_features(ds, set_id);
    Matrix logged = log_transform(b.fm.X);
    if (fixed) {
        b.scaler = *fixed;
    } else {
        Matrix train_rows(static_cast<int>(scaler_fit_rows.size()), logged.cols());
        for (int i = 0; i < train_rows.rows(); ++i)
            train_rows.row(i) = logged.row(scaler_fit_rows[i]);
        b.scaler = fit_scaler(train_rows, feature_names(set_id));
    }
    Matrix X = apply_scaler(logged, b.scaler);
    std::vector<double> xs, ys;
    for (const auto& r : ds.records) {
        xs.push_back(r.x_um);
        ys.push_back(r.y_um);
    }
    b.graph = build_graph(X, xs, ys, b.fm.ids, threshold_um, b.fm.labels_mv);
    return b;
}

std::string model_envelope(const std::string& model_type, const RunConfig& rc,
                           const ScalerParams& scaler, const std::string& payload) {
    json j;
    j["format_version"] = 1;
    j["model_type"] = model_type;
    j["feature_set"] = rc.features;
    j["threshold_um"] = rc.threshold_um;
    j["vdd_mv"] = rc.vdd_mv;
    j["tile_um"] = rc.tile_um;
    j["split"] = {{"train_frac", rc.split.train_frac},
                  {"val_frac", rc.split.val_frac},
                  {"test_frac", rc.split.test_frac},
                  {"seed", rc.split.seed}};
    j["scaler"] = json::parse(scaler.to_json());
    j["payload"] = json::parse(payload);
    return j.dump(2) + "\n";
}

struct Envelope {
    std::string model_type;
    FeatureSetId set_id = FeatureSetId::SetB;
    double threshold_um = 5.0;
    double vdd_mv = 800.0;
    double tile_um = 1.5;
    SplitSpec split;
    ScalerParams scaler;
    json payload;
};

Envelope load_envelope(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open model file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("model " + path + ": " + e.what());
    }
    Envelope env;
    try {
        env.model_type = j.at("model_type");
        env.set_id = parse_feature_set(j.at("feature_set"));
        env.threshold_um = j.at("threshold_um");
        env.vdd_mv = j.at("vdd_mv");
        env.tile_um = j.at("tile_um");
        env.split.train_frac = j.at("split").at("train_frac");
        env.split.val_frac = j.at("split").at("val_frac");
        env.split.test_frac = j.at("split").at("test_frac");
        env.split.seed = j.at("split").at("seed");
        env.scaler = ScalerParams::from_json(j.at("scaler").dump());
        env.payload = j.at("payload");
    } catch (const json::exception& e) {
        throw ParseError("model " + path + ": " + e.what());
    }
    return env;
}

Vector predict_with_envelope(const Envelope& env, const Dataset& ds) {
    if (env.model_type == "gbt") {
        auto fm = select_features(ds, env.set_id);
        Matrix X = preprocess(fm.X, env.scaler);
        return gbt_predict(GbtModel::from_json(env.payload.dump()), X);
    }
    if (env.model_type == "cnn") {
        TileGrid grid = rasterize(ds, env.tile_um, env.set_id);
        return cnn_predict_per_net(TrainedCnn::from_json(env.payload.dump()), grid);
    }
    auto b = build_graph_bundle(ds, env.set_id, env.threshold_um, {}, &env.scaler);
    return predict_gnn(TrainedGnn::from_json(env.payload.dump()), b.graph);
}

IndexVec subset_indices(const std::string& subset, std::size_t n, const SplitSpec& spec) {
    if (subset == "all") {
        IndexVec all(n);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    auto s = split_dataset(n, spec);
    if (subset == "train") return s.train;
    if (subset == "val") return s.val;
    if (subset == "test") return s.test;
    throw ValidationError("unknown subset '" + subset + "' (train|val|test|all)");
}

double now_minus(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Subcommands.

void run_gen(const RunConfig& rc, const fs::path& out_dir) {
    auto circ = generate_circuit(rc.synth);
    auto currents = node_currents(circ.grid, circ.loads, rc.synth);
    double residual = 0.0;
    auto t0 = std::chrono::steady_clock::now();
    Vector drops = solve_ir_drop(circ.grid, circ.loads, &currents, &residual);
    double solve_s = now_minus(t0);
    Dataset ds = derive_net_records(circ.grid, circ.loads, drops);

    save_dataset(ds, (out_dir / "dataset.csv").string());

    json sidecar;
    sidecar["seed"] = rc.synth.seed;
    sidecar["rows"] = rc.synth.rows;
    sidecar["cols"] = rc.synth.cols;
    sidecar["pitch_um"] = rc.synth.pitch_um;
    sidecar["seg_resistance_ohm"] = rc.synth.seg_resistance_ohm;
    sidecar["vdd_mv"] = rc.synth.vdd_mv;
    sidecar["kappa"] = rc.synth.kappa;
    sidecar["n_cells"] = rc.synth.n_cells;
    sidecar["pad_nodes"] = circ.grid.pad_nodes;
    sidecar["solver_relative_residual"] = residual;
    sidecar["solve_seconds"] = solve_s;
    sidecar["max_drop_mv"] = ds.records.empty() ? 0.0 : drops.maxCoeff();
    write_text(out_dir / "dataset.json", sidecar.dump(2) + "\n");
    write_resolved_config(rc, out_dir);
    std::cout << "wrote " << (out_dir / "dataset.csv").string() << " ("
              << ds.records.size() << " nets)\n";
}

void run_graph_stats(const RunConfig& rc, const fs::path& out_dir) {
    if (rc.thresholds.empty()) throw UsageError("graph-stats: threshold list is empty");
    if (rc.data_path.empty()) throw UsageError("graph-stats: --data is required");
    Dataset ds = load_dataset(rc.data_path, rc.vdd_mv);
    auto fm = select_features(ds, parse_feature_set(rc.features));
    std::vector<double> xs, ys;
    for (const auto& r : ds.records) {
        xs.push_back(r.x_um);
        ys.push_back(r.y_um);
    }
    for (double t : rc.thresholds) {
        auto g = build_graph(fm.X, xs, ys, fm.ids, t);
        auto dr = degree_rank(g);
        std::ostringstream csv;
        csv << "rank,degree\n";
        for (std::size_t i = 0; i < dr.degrees.size(); ++i)
            csv << i << ',' << dr.degrees[i] << "\n";
        write_text(out_dir / ("degree_rank_t" + format_double(t) + ".csv"), csv.str());
    }
    write_resolved_config(rc, out_dir);
    std::cout << "wrote " << rc.thresholds.size() << " degree-rank files to "
              << out_dir.string() << "\n";
}

void run_train(const RunConfig& rc, const fs::path& out_dir) {
    if (rc.data_path.empty()) throw UsageError("train: --data is required");
    Dataset ds = load_dataset(rc.data_path, rc.vdd_mv);
    if (!ds.has_labels())
        throw ValidationError("train: dataset " + rc.data_path + " carries no labels");
    auto split = split_dataset(ds.records.size(), rc.split);
    FeatureSetId set_id = parse_feature_set(rc.features);

    std::string payload;
    std::ostringstream history;
    ScalerParams scaler;

    if (rc.model == "gcn" || rc.model == "gat" || rc.model == "gin") {
        auto b = build_graph_bundle(ds, set_id, rc.threshold_um, split.train, nullptr);
        scaler = b.scaler;
        GnnConfig cfg = rc.gnn;
        cfg.arch = parse_arch(rc.model);
        TrainedGnn tm = train_gnn(b.graph, split, cfg, b.scaler);
        payload = tm.to_json();
        history << "epoch,train_mae_mv,val_mae_mv\n";
        for (std::size_t e = 0; e < tm.history.size(); ++e)
            history << e << ',' << format_double(tm.history[e].train_mae_mv) << ','
                    << format_double(tm.history[e].val_mae_mv) << "\n";
    } else if (rc.model == "gbt") {
        auto b = build_graph_bundle(ds, set_id, rc.threshold_um, split.train, nullptr);
        scaler = b.scaler;
        GbtModel gm = gbt_train(b.graph.X, b.fm.labels_mv, split, rc.gbt);
        payload = gm.to_json();
        history << "round,train_mae_mv,val_mae_mv\n";
        for (std::size_t e = 0; e < gm.train_mae_history.size(); ++e)
            history << e << ',' << format_double(gm.train_mae_history[e]) << ','
                    << format_double(gm.val_mae_history[e]) << "\n";
    } else if (rc.model == "cnn") {
        TileGrid grid = rasterize(ds, rc.tile_um, set_id);
        auto train_tiles = tiles_for_records(grid, split.train);
        TrainedCnn cm = cnn_train(grid, train_tiles, rc.cnn);
        payload = cm.to_json();
        history << "epoch,train_mae_mv\n";
        for (std::size_t e = 0; e < cm.train_mae_history.size(); ++e)
            history << e << ',' << format_double(cm.train_mae_history[e]) << "\n";
    } else {
        throw ValidationError("unknown model '" + rc.model +
                              "' (gcn|gat|gin|gbt|cnn)");
    }

    write_text(out_dir / "model.json", model_envelope(rc.model, rc, scaler, payload));
    write_text(out_dir / "history.csv", history.str());
    write_resolved_config(rc, out_dir);
    std::cout << "wrote " << (out_dir / "model.json").string() << "\n";
}

Vector load_pred_csv(const std::string& path, const Dataset& ds) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open prediction file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty prediction file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "net_id,pred_mv")
        throw ParseError("prediction file " + path + ": expected header net_id,pred_mv");
    std::unordered_map<std::int64_t, double> by_id;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ParseError("prediction row " + std::to_string(row) + ": expected 2 fields");
        try {
            by_id[std::stoll(line.substr(0, comma))] = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw ParseError("prediction row " + std::to_string(row) + ": cannot parse");
        }
    }
    Vector pred(ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        auto it = by_id.find(ds.records[i].net_id);
        if (it == by_id.end())
            throw ValidationError("prediction file lacks net_id " +
                                  std::to_string(ds.records[i].net_id));
        pred(static_cast<int>(i)) = it->second;
    }
    return pred;
}

void run_eval(const RunConfig& rc, const fs::path& out_dir, bool subset_flag_given) {
    if (rc.data_path.empty()) throw UsageError("eval: --data is required");
    if (rc.model_path.empty() == rc.pred_path.empty())
        throw UsageError("eval: exactly one of --model and --pred is required");
    Dataset ds = load_dataset(rc.data_path, rc.vdd_mv);
    if (!ds.has_labels())
        throw ValidationError("eval: dataset " + rc.data_path + " carries no labels");

    Vector pred;
    IndexVec idx;
    double vdd = rc.vdd_mv;
    if (!rc.model_path.empty()) {
        Envelope env = load_envelope(rc.model_path);
        pred = predict_with_envelope(env, ds);
        vdd = env.vdd_mv;
        idx = subset_indices(rc.eval_subset, ds.records.size(), env.split);
    } else {
        pred = load_pred_csv(rc.pred_path, ds);
        // external predictions carry no split provenance; default to all rows
        std::string subset = subset_flag_given ? rc.eval_subset : "all";
        idx = subset_indices(subset, ds.records.size(), rc.split);
    }

    Vector p(idx.size()), l(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        p(static_cast<int>(i)) = pred(idx[i]);
        l(static_cast<int>(i)) = *ds.records[idx[i]].ir_drop_mv;
    }
    EvalReport report = compute_report(p, l, vdd);
    write_text(out_dir / "report.json", report.to_json() + "\n");
    write_text(out_dir / "report.txt", report.to_text());
    write_resolved_config(rc, out_dir);
    std::cout << report.to_text();
}

void run_predict(const RunConfig& rc, const fs::path& out_dir) {
    if (rc.data_path.empty()) throw UsageError("predict: --data is required");
    if (rc.model_path.empty()) throw UsageError("predict: --model is required");
    Dataset ds = load_dataset(rc.data_path, rc.vdd_mv);
    Envelope env = load_envelope(rc.model_path);
    Vector pred = predict_with_envelope(env, ds);

    std::ostringstream csv;
    csv << "net_id,pred_mv\n";
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        csv << ds.records[i].net_id << ',' << format_double(pred(static_cast<int>(i)))
            << "\n";
    write_text(out_dir / "pred.csv", csv.str());
    write_resolved_config(rc, out_dir);
    std::cout << "wrote " << (out_dir / "pred.csv").string() << " (" << ds.records.size()
              << " rows)\n";
}

void run_bench(const RunConfig& rc, const fs::path& out_dir) {
    std::vector<BenchRow> rows;

    // Oracle solve: the nodal-analysis ground truth stands in for the signoff tool.
    auto circ = generate_circuit(rc.synth);
    auto currents = node_currents(circ.grid, circ.loads, rc.synth);
    auto t0 = std::chrono::steady_clock::now();
    Vector drops = solve_ir_drop(circ.grid, circ.loads, &currents);
    double solve_s = now_minus(t0);
    Dataset ds = rc.data_path.empty() ? derive_net_records(circ.grid, circ.loads, drops)
                                      : load_dataset(rc.data_path, rc.vdd_mv);
    if (!ds.has_labels()) throw ValidationError("bench: dataset carries no labels");

    auto split = split_dataset(ds.records.size(), rc.split);
    FeatureSetId set_id = parse_feature_set(rc.features);

    for (const std::string& arch : rc.bench_archs) {
        if (arch == "gcn" || arch == "gat" || arch == "gin") {
            auto b = build_graph_bundle(ds, set_id, rc.threshold_um, split.train, nullptr);
            GnnConfig cfg = rc.gnn;
            cfg.arch = parse_arch(arch);
            t0 = std::chrono::steady_clock::now();
            TrainedGnn tm = train_gnn(b.graph, split, cfg, b.scaler);
            rows.push_back({arch, "train", now_minus(t0)});
            t0 = std::chrono::steady_clock::now();
            predict_gnn(tm, b.graph);
            rows.push_back({arch, "predict", now_minus(t0)});
        } else if (arch == "gbt") {
            auto b = build_graph_bundle(ds, set_id, rc.threshold_um, split.train, nullptr);
            t0 = std::chrono::steady_clock::now();
            GbtModel gm = gbt_train(b.graph.X, b.fm.labels_mv, split, rc.gbt);
            rows.push_back({arch, "train", now_minus(t0)});
            t0 = std::chrono::steady_clock::now();
            gbt_predict(gm, b.graph.X);
            rows.push_back({arch, "predict", now_minus(t0)});
        } else if (arch == "cnn") {
            TileGrid grid = rasterize(ds, rc.tile_um, set_id);
            auto train_tiles = tiles_for_records(grid, split.train);
            t0 = std::chrono::steady_clock::now();
            TrainedCnn cm = cnn_train(grid, train_tiles, rc.cnn);
            rows.push_back({arch, "train", now_minus(t0)});
            t0 = std::chrono::steady_clock::now();
            cnn_predict_per_net(cm, grid);
            rows.push_back({arch, "predict", now_minus(t0)});
        } else {
            throw ValidationError("bench: unknown arch '" + arch + "'");
        }
    }
    rows.push_back({"oracle", "solve", solve_s});

    write_text(out_dir / "bench.csv", bench_csv(rows));
    write_resolved_config(rc, out_dir);
    std::cout << bench_csv(rows);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"irgrid: desk-scale IR-drop estimation on synthetic power grids"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path, out;

    // Option holders; applied over the config file only when the flag was given.
    auto synth_seed = rc.synth.seed;
    int rows = rc.synth.rows, cols = rc.synth.cols, n_cells = rc.synth.n_cells;
    double pitch = rc.synth.pitch_um, seg_res = rc.synth.seg_resistance_ohm;
    int pad_spacing = rc.synth.pad_spacing;
    double vdd = rc.vdd_mv, kappa = rc.synth.kappa;
    std::string model = rc.model, features = rc.features, subset = rc.eval_subset;
    std::string data, model_path, pred_path, archs_csv;
    double threshold = rc.threshold_um, tile = rc.tile_um;
    std::vector<double> thresholds;
    int epochs = rc.gnn.max_epochs, hidden = rc.gnn.hidden_channels;
    int layers = rc.gnn.n_layers, heads = rc.gnn.gat_heads, patience = rc.gnn.patience;
    double lr = rc.gnn.lr, weight_decay = rc.gnn.weight_decay, dropout = rc.gnn.dropout_p;
    int n_trees = rc.gbt.n_trees, max_depth = rc.gbt.max_depth;
    double gbt_lr = rc.gbt.learning_rate;
    int cnn_epochs = rc.cnn.max_epochs;
    double cnn_lr = rc.cnn.lr;
    auto model_seed = rc.gnn.seed;
    auto split_seed = rc.split.seed;
    double train_frac = rc.split.train_frac, val_frac = rc.split.val_frac,
           test_frac = rc.split.test_frac;

    auto add_common = [&](CLI::App* sc) {
        sc->add_option("--config", config_path, "JSON run config; flags override");
        sc->add_option("--out", out, "output directory")->required();
        sc->add_option("--vdd", vdd, "supply voltage in mV");
    };
    auto add_split = [&](CLI::App* sc) {
        sc->add_option("--split-seed", split_seed, "shuffle seed for the split");
        sc->add_option("--train-frac", train_frac, "training fraction");
        sc->add_option("--val-frac", val_frac, "validation fraction");
        sc->add_option("--test-frac", test_frac, "test fraction");
    };
    auto add_model_opts = [&](CLI::App* sc) {
        sc->add_option("--features", features, "feature set: setA|setB");
        sc->add_option("--threshold", threshold, "graph edge threshold in um");
        sc->add_option("--epochs", epochs, "GNN max epochs");
        sc->add_option("--hidden", hidden, "GNN hidden channels");
        sc->add_option("--layers", layers, "GNN layer count");
        sc->add_option("--heads", heads, "GAT attention heads");
        sc->add_option("--patience", patience, "early-stop patience (<0 disables)");
        sc->add_option("--lr", lr, "GNN learning rate");
        sc->add_option("--weight-decay", weight_decay, "GNN weight decay");
        sc->add_option("--dropout", dropout, "GNN dropout probability");
        sc->add_option("--model-seed", model_seed, "model init/dropout seed");
        sc->add_option("--n-trees", n_trees, "GBT boosting rounds");
        sc->add_option("--max-depth", max_depth, "GBT tree depth");
        sc->add_option("--gbt-lr", gbt_lr, "GBT shrinkage");
        sc->add_option("--cnn-epochs", cnn_epochs, "CNN max epochs");
        sc->add_option("--cnn-lr", cnn_lr, "CNN learning rate");
        sc->add_option("--tile", tile, "CNN tile size in um");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic circuit dataset");
    add_common(gen);
    gen->add_option("--seed", synth_seed, "generator seed");
    gen->add_option("--rows", rows, "grid rows");
    gen->add_option("--cols", cols, "grid columns");
    gen->add_option("--n-cells", n_cells, "number of load cells");
    gen->add_option("--pitch", pitch, "grid pitch in um");
    gen->add_option("--seg-res", seg_res, "segment resistance in ohm");
    gen->add_option("--pad-spacing", pad_spacing, "pad lattice spacing (0 = corners only)");
    gen->add_option("--kappa", kappa, "timing-coupling strength");

    CLI::App* gstats = app.add_subcommand("graph-stats", "degree-rank CSVs per threshold");
    add_common(gstats);
    gstats->add_option("--data", data, "dataset CSV")->required();
    gstats->add_option("--thresholds", thresholds, "threshold list in um");
    gstats->add_option("--features", features, "feature set: setA|setB");

    CLI::App* train = app.add_subcommand("train", "train a surrogate model");
    add_common(train);
    add_split(train);
    add_model_opts(train);
    train->add_option("--data", data, "labeled dataset CSV")->required();
    train->add_option("--arch", model, "gcn|gat|gin|gbt|cnn");

    CLI::App* eval = app.add_subcommand("eval", "error report on a labeled dataset");
    add_common(eval);
    add_split(eval);
    eval->add_option("--data", data, "labeled dataset CSV")->required();
    eval->add_option("--model", model_path, "trained model.json");
    eval->add_option("--pred", pred_path, "external predictions CSV (net_id,pred_mv)");
    eval->add_option("--subset", subset, "train|val|test|all (default test)");

    CLI::App* predict = app.add_subcommand("predict", "per-net predictions CSV");
    add_common(predict);
    predict->add_option("--data", data, "dataset CSV")->required();
    predict->add_option("--model", model_path, "trained model.json")->required();

    CLI::App* bench = app.add_subcommand("bench", "train/predict timings plus oracle solve");
    add_common(bench);
    add_split(bench);
    add_model_opts(bench);
    bench->add_option("--data", data, "labeled dataset CSV (default: generate from synth config)");
    bench->add_option("--archs", archs_csv, "comma-separated arch list");
    bench->add_option("--seed", synth_seed, "generator seed");
    bench->add_option("--rows", rows, "grid rows");
    bench->add_option("--cols", cols, "grid columns");
    bench->add_option("--n-cells", n_cells, "number of load cells");
    bench->add_option("--pad-spacing", pad_spacing, "pad lattice spacing (0 = corners only)");
    bench->add_option("--kappa", kappa, "timing-coupling strength");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        rc = load_run_config(config_path);
        CLI::App* sub = app.get_subcommands().front();
        auto given = [&](const std::string& name) {
            const CLI::Option* o = sub->get_option_no_throw(name);
            return o && o->count() > 0;
        };
        if (given("--vdd")) {
            rc.vdd_mv = vdd;
            rc.synth.vdd_mv = vdd;
        }
        if (given("--seed")) rc.synth.seed = synth_seed;
        if (given("--rows")) rc.synth.rows = rows;
        if (given("--cols")) rc.synth.cols = cols;
        if (given("--n-cells")) rc.synth.n_cells = n_cells;
        if (given("--pitch")) rc.synth.pitch_um = pitch;
        if (given("--seg-res")) rc.synth.seg_resistance_ohm = seg_res;
        if (given("--pad-spacing")) rc.synth.pad_spacing = pad_spacing;
        if (given("--kappa")) rc.synth.kappa = kappa;
        if (given("--data")) rc.data_path = data;
        if (given("--model") && sub != train) rc.model_path = model_path;
        if (given("--pred")) rc.pred_path = pred_path;
        if (given("--arch")) rc.model = model;
        if (given("--features")) rc.features = features;
        if (given("--threshold")) rc.threshold_um = threshold;
        if (given("--thresholds")) rc.thresholds = thresholds;
        if (given("--tile")) rc.tile_um = tile;
        if (given("--subset")) rc.eval_subset = subset;
        if (given("--split-seed")) rc.split.seed = split_seed;
        if (given("--train-frac")) rc.split.train_frac = train_frac;
        if (given("--val-frac")) rc.split.val_frac = val_frac;
        if (given("--test-frac")) rc.split.test_frac = test_frac;
        if (given("--epochs")) rc.gnn.max_epochs = epochs;
        if (given("--hidden")) rc.gnn.hidden_channels = hidden;
        if (given("--layers")) rc.gnn.n_layers = layers;
        if (given("--heads")) rc.gnn.gat_heads = heads;
        if (given("--patience")) rc.gnn.patience = patience;
        if (given("--lr")) rc.gnn.lr = lr;
        if (given("--weight-decay")) rc.gnn.weight_decay = weight_decay;
        if (given("--dropout")) rc.gnn.dropout_p = dropout;
        if (given("--model-seed")) {
            rc.gnn.seed = model_seed;
            rc.gbt.seed = model_seed;
            rc.cnn.seed = model_seed;
        }
        if (given("--n-trees")) rc.gbt.n_trees = n_trees;
        if (given("--max-depth")) rc.gbt.max_depth = max_depth;
        if (given("--gbt-lr")) rc.gbt.learning_rate = gbt_lr;
        if (given("--cnn-epochs")) rc.cnn.max_epochs = cnn_epochs;
        if (given("--cnn-lr")) rc.cnn.lr = cnn_lr;
        if (given("--archs")) {
            rc.bench_archs.clear();
            std::stringstream ss(archs_csv);
            std::string a;
            while (std::getline(ss, a, ','))
                if (!a.empty()) rc.bench_archs.push_back(a);
        }

        fs::path out_dir = prepare_out_dir(out);
        if (sub == gen) run_gen(rc, out_dir);
        else if (sub == gstats) run_graph_stats(rc, out_dir);
        else if (sub == train) run_train(rc, out_dir);
        else if (sub == eval) run_eval(rc, out_dir, sub->count("--subset") > 0);
        else if (sub == predict) run_predict(rc, out_dir);
        else if (sub == bench) run_bench(rc, out_dir);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
