#include "irgrid/gnn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

namespace irgrid {

using ad::Tensor;

GnnArch parse_arch(const std::string& name) {
    if (name == "gcn") return GnnArch::GCN;
    if (name == "gat") return GnnArch::GAT;
    if (name == "gin") return GnnArch::GIN;
    throw ValidationError("unknown architecture '" + name + "' (expected gcn, gat or gin)");
}

std::string arch_name(GnnArch a) {
    switch (a) {
        case GnnArch::GCN: return "gcn";
        case GnnArch::GAT: return "gat";
        case GnnArch::GIN: return "gin";
    }
    return "?";
}

void GnnConfig::validate() const {
    if (n_layers < 1) throw ValidationError("n_layers must be >= 1");
    if (hidden_channels < 1) throw ValidationError("hidden_channels must be >= 1");
    if (gat_heads < 1) throw ValidationError("gat_heads must be >= 1");
    if (dropout_p < 0 || dropout_p >= 1) throw ValidationError("dropout_p must be in [0,1)");
    if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
}

GraphTensors GraphTensors::from_graph(const CircuitGraph& g) {
    GraphTensors gt;
    gt.n_nodes = g.n_nodes;
    gt.norm_adj = normalized_adjacency(g);
    for (std::size_t e = 0; e < g.edge_list.size(); ++e) {
        auto [u, v] = g.edge_list[e];
        double d = g.edge_feat[e];
        gt.nsrc.push_back(u);
        gt.ndst.push_back(v);
        gt.edge_feat_nbrs.push_back(d);
        gt.nsrc.push_back(v);
        gt.ndst.push_back(u);
        gt.edge_feat_nbrs.push_back(d);
    }
    gt.src = gt.nsrc;
    gt.dst = gt.ndst;
    gt.edge_feat_loops = gt.edge_feat_nbrs;
    for (int i = 0; i < g.n_nodes; ++i) {  // self-loops so softmax is defined everywhere
        gt.src.push_back(i);
        gt.dst.push_back(i);
        gt.edge_feat_loops.push_back(0.0);
    }
    gt.X = Tensor::constant_mat(g.X);
    return gt;
}

namespace {

Eigen::ArrayXd glorot(std::mt19937_64& rng, int fan_in, int fan_out, std::int64_t n) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Eigen::ArrayXd d(n);
    for (std::int64_t i = 0; i < n; ++i) d(i) = u(rng);
    return d;
}

Tensor const_col(const std::vector<double>& v) {
    Eigen::ArrayXd d(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) d(i) = v[i];
    return Tensor::constant({static_cast<int>(v.size()), 1}, std::move(d));
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    return x;
}

}  // namespace

GnnModel::GnnModel(const GnnConfig& config, int in_width)
    : config_(config), in_width_(in_width) {
    config_.validate();
    if (in_width < 1) throw ValidationError("GnnModel: input width must be >= 1");
    std::mt19937_64 rng(config.seed);
    const int K = config.n_layers, H = config.hidden_channels;

    auto add_param = [&](const std::string& name, ad::Shape shape, int fi, int fo) {
        params_.push_back(Tensor::param(shape, glorot(rng, fi, fo, ad::shape_size(shape))));
        names_.push_back(name);
    };
    auto add_zeros = [&](const std::string& name, ad::Shape shape) {
        params_.push_back(Tensor::param(shape, Eigen::ArrayXd::Zero(ad::shape_size(shape))));
        names_.push_back(name);
    };

    switch (config.arch) {
        case GnnArch::GCN: {
            int w = in_width;
            for (int k = 0; k < K; ++k) {
                add_param("gcn.w" + std::to_string(k), {w, H}, w, H);
                add_zeros("gcn.b" + std::to_string(k), {H});
                w = H;
            }
            add_param("head.w", {w, 1}, w, 1);
            add_zeros("head.b", {1});
            break;
        }
        case GnnArch::GAT: {
            int w = in_width;
            for (int k = 0; k < K; ++k) {
                const bool last = (k == K - 1);
                const int heads = last ? 1 : config.gat_heads;
                const int dh = last ? 1 : H;
                for (int h = 0; h < heads; ++h) {
                    std::string p = "gat" + std::to_string(k) + ".h" + std::to_string(h);
                    add_param(p + ".w", {w, dh}, w, dh);
                    add_param(p + ".a_src", {dh, 1}, dh, 1);
                    add_param(p + ".a_dst", {dh, 1}, dh, 1);
                    if (config.use_edge_feature) add_zeros(p + ".a_edge", {1});
                }
                w = heads * dh;
            }
            break;
        }
        case GnnArch::GIN: {
            int w = in_width;
            for (int k = 0; k < K; ++k) {
                std::string p = "gin" + std::to_string(k);
                int win = w + (config.use_edge_feature ? 1 : 0);
                Eigen::ArrayXd eps0(1);
                eps0(0) = config.gin_eps_init;
                params_.push_back(Tensor::param({1}, eps0));
                names_.push_back(p + ".eps");
                add_param(p + ".w1", {win, H}, win, H);
                add_zeros(p + ".b1", {H});
                add_param(p + ".w2", {H, H}, H, H);
                add_zeros(p + ".b2", {H});
                w = H;
            }
            add_param("head.w", {w, 1}, w, 1);
            add_zeros("head.b", {1});
            break;
        }
    }
}

Tensor GnnModel::forward(ad::Tape& tape, const GraphTensors& gt, bool training,
                         std::uint64_t dropout_seed) const {
    if (gt.X.shape()[1] != in_width_)
        throw ValidationError("forward: graph feature width " +
                              std::to_string(gt.X.shape()[1]) + " != model input width " +
                              std::to_string(in_width_));
    switch (config_.arch) {
        case GnnArch::GCN: return forward_gcn(tape, gt, training, dropout_seed);
        case GnnArch::GAT: return forward_gat(tape, gt, training, dropout_seed);
        case GnnArch::GIN: return forward_gin(tape, gt, training, dropout_seed);
    }
    throw ValidationError("unreachable");
}

Tensor GnnModel::forward_gcn(ad::Tape& t, const GraphTensors& gt, bool training,
                             std::uint64_t seed) const {
    const int K = config_.n_layers;
    Tensor h = gt.X;
    std::size_t p = 0;
    for (int k = 0; k < K; ++k) {
        h = t.add(t.matmul(t.spmm(gt.norm_adj, h), params_[p]), params_[p + 1]);
        p += 2;
        if (k < K - 1) {
            h = t.relu(h);
            if (k == 0) h = t.dropout(h, config_.dropout_p, training, seed);
        }
    }
    return t.add(t.matmul(h, params_[p]), params_[p + 1]);
}

Tensor GnnModel::forward_gat(ad::Tape& t, const GraphTensors& gt, bool training,
                             std::uint64_t seed) const {
    const int K = config_.n_layers;
    Tensor h = gt.X;
    Tensor dist = const_col(gt.edge_feat_loops);
    std::size_t p = 0;
    for (int k = 0; k < K; ++k) {
        const bool last = (k == K - 1);
        const int heads = last ? 1 : config_.gat_heads;
        Tensor out;
        for (int hd = 0; hd < heads; ++hd) {
            Tensor wh = t.matmul(h, params_[p]);
            Tensor hs = t.gather_rows(wh, gt.src);
            Tensor hdst = t.gather_rows(wh, gt.dst);
            Tensor logit =
                t.add(t.matmul(hs, params_[p + 1]), t.matmul(hdst, params_[p + 2]));
            p += 3;
            if (config_.use_edge_feature) {
                logit = t.add(logit, t.scale_by(dist, params_[p]));
                ++p;
            }
            Tensor alpha = t.segment_softmax(t.leaky_relu(logit, 0.2), gt.dst, gt.n_nodes);
            Tensor agg = t.scatter_sum_rows(t.row_scale(hs, alpha), gt.dst, gt.n_nodes);
            out = out.valid() ? t.concat_cols(out, agg) : agg;
        }
        h = out;
        if (!last) {
            h = t.relu(h);
            if (k == 0) h = t.dropout(h, config_.dropout_p, training, seed);
        }
    }
    return h;  // final single-head layer has width 1
}

Tensor GnnModel::forward_gin(ad::Tape& t, const GraphTensors& gt, bool training,
                             std::uint64_t seed) const {
    const int K = config_.n_layers;
    Tensor h = gt.X;
    std::size_t p = 0;

    Tensor edge_sum;
    if (config_.use_edge_feature) {
        std::vector<double> per_node(gt.n_nodes, 0.0);
        for (std::size_t e = 0; e < gt.ndst.size(); ++e)
            per_node[gt.ndst[e]] += gt.edge_feat_nbrs[e];
        edge_sum = const_col(per_node);
    }

    for (int k = 0; k < K; ++k) {
        Tensor eps = params_[p];
        Tensor w1 = params_[p + 1], b1 = params_[p + 2];
        Tensor w2 = params_[p + 3], b2 = params_[p + 4];
        p += 5;

        Tensor pre;
        if (!gt.nsrc.empty()) {
            Tensor nb = t.scatter_sum_rows(t.gather_rows(h, gt.nsrc), gt.ndst, gt.n_nodes);
            pre = t.add(nb, t.add(h, t.scale_by(h, eps)));
        } else {
            pre = t.add(h, t.scale_by(h, eps));
        }
        if (config_.use_edge_feature) pre = t.concat_cols(pre, edge_sum);

        h = t.add(t.matmul(t.relu(t.add(t.matmul(pre, w1), b1)), w2), b2);
        if (k < K - 1) {
            h = t.relu(h);
            if (k == 0) h = t.dropout(h, config_.dropout_p, training, seed);
        }
    }
    return t.add(t.matmul(h, params_[p]), params_[p + 1]);
}

std::vector<Eigen::ArrayXd> GnnModel::snapshot() const {
    std::vector<Eigen::ArrayXd> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value());
    return out;
}

void GnnModel::restore(const std::vector<Eigen::ArrayXd>& values) {
    if (values.size() != params_.size())
        throw ValidationError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != params_[i].size())
            throw ValidationError("restore: shape mismatch on " + names_[i]);
        params_[i].value() = values[i];
    }
}

namespace {

double subset_mae_mv(const Vector& pred_mv, const Vector& labels_mv, const IndexVec& idx) {
    if (idx.empty()) return 0.0;
    double s = 0.0;
    for (int i : idx) s += std::abs(pred_mv(i) - labels_mv(i));
    return s / static_cast<double>(idx.size());
}

}  // namespace

TrainedGnn train_gnn(const CircuitGraph& graph, const SplitIndices& split,
                     const GnnConfig& config, const ScalerParams& scaler) {
    config.validate();
    if (!graph.has_labels())
        throw ValidationError("train_gnn: graph carries no labels");
    if (split.train.empty()) throw ValidationError("train_gnn: empty training split");

    auto t0 = std::chrono::steady_clock::now();

    double label_scale = 0.0;
    for (int i : split.train) label_scale = std::max(label_scale, graph.labels_mv(i));
    if (label_scale <= 0.0) label_scale = 1.0;

    GraphTensors gt = GraphTensors::from_graph(graph);
    GnnModel model(config, static_cast<int>(graph.X.cols()));

    Eigen::ArrayXd tgt(split.train.size());
    for (std::size_t i = 0; i < split.train.size(); ++i)
        tgt(i) = graph.labels_mv(split.train[i]) / label_scale;
    Tensor target = Tensor::constant({static_cast<int>(split.train.size()), 1}, tgt);

    ad::AdamConfig ac;
    ac.lr = config.lr;
    ac.weight_decay = config.weight_decay;
    ad::AdamState adam(ac);

    TrainedGnn out;
    out.config = config;
    out.in_width = model.in_width();
    out.label_scale_mv = label_scale;
    out.scaler = scaler;

    double best_val = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    const bool have_val = !split.val.empty();

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        ad::Tape tape;
        Tensor pred = model.forward(tape, gt, true, mix_seed(config.seed, epoch));
        Tensor loss = ad::mae_loss(tape, pred, split.train, target);
        if (!std::isfinite(loss.scalar()))
            throw NumericError("train_gnn: non-finite loss at epoch " + std::to_string(epoch));
        adam.zero_grad(model.params());
        tape.backward(loss);
        adam.step(model.params());

        ad::Tape eval_tape;
        Vector pred_mv =
            model.forward(eval_tape, gt, false, 0).as_vector() * label_scale;
        EpochStats st;
        st.train_mae_mv = subset_mae_mv(pred_mv, graph.labels_mv, split.train);
        st.val_mae_mv = subset_mae_mv(pred_mv, graph.labels_mv, split.val);
        out.history.push_back(st);

        double monitor = have_val ? st.val_mae_mv : st.train_mae_mv;
        if (monitor < best_val) {
            best_val = monitor;
            bad_epochs = 0;
            out.param_values = model.snapshot();
        } else {
            ++bad_epochs;
            if (config.patience >= 0 && bad_epochs > config.patience) break;
        }
    }
    if (out.param_values.empty()) out.param_values = model.snapshot();

    out.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

Vector predict_gnn(const TrainedGnn& model, const CircuitGraph& graph) {
    if (graph.X.cols() != model.in_width)
        throw ValidationError("predict_gnn: feature width mismatch (wrong scaler/feature set?)");
    GnnModel m(model.config, model.in_width);
    m.restore(model.param_values);
    GraphTensors gt = GraphTensors::from_graph(graph);
    ad::Tape tape;
    return m.forward(tape, gt, false, 0).as_vector() * model.label_scale_mv;
}

std::string TrainedGnn::to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["arch"] = arch_name(config.arch);
    j["n_layers"] = config.n_layers;
    j["hidden_channels"] = config.hidden_channels;
    j["gat_heads"] = config.gat_heads;
    j["gin_eps_init"] = config.gin_eps_init;
    j["dropout_p"] = config.dropout_p;
    j["lr"] = config.lr;
    j["weight_decay"] = config.weight_decay;
    j["max_epochs"] = config.max_epochs;
    j["patience"] = config.patience;
    j["seed"] = config.seed;
    j["use_edge_feature"] = config.use_edge_feature;
    j["in_width"] = in_width;
    j["label_scale_mv"] = label_scale_mv;
    j["train_seconds"] = train_seconds;
    j["scaler"] = nlohmann::json::parse(scaler.to_json());
    auto& params = j["params"] = nlohmann::json::array();
    for (const auto& p : param_values) {
        std::vector<double> d(p.data(), p.data() + p.size());
        params.push_back(d);
    }
    auto& hist = j["history"] = nlohmann::json::array();
    for (const auto& h : history) hist.push_back({h.train_mae_mv, h.val_mae_mv});
    return j.dump(2);
}

TrainedGnn TrainedGnn::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    TrainedGnn m;
    m.config.arch = parse_arch(j.at("arch").get<std::string>());
    m.config.n_layers = j.at("n_layers");
    m.config.hidden_channels = j.at("hidden_channels");
    m.config.gat_heads = j.at("gat_heads");
    m.config.gin_eps_init = j.at("gin_eps_init");
    m.config.dropout_p = j.at("dropout_p");
    m.config.lr = j.at("lr");
    m.config.weight_decay = j.at("weight_decay");
    m.config.max_epochs = j.at("max_epochs");
    m.config.patience = j.at("patience");
    m.config.seed = j.at("seed");
    m.config.use_edge_feature = j.at("use_edge_feature");
    m.in_width = j.at("in_width");
    m.label_scale_mv = j.at("label_scale_mv");
    m.train_seconds = j.value("train_seconds", 0.0);
    m.scaler = ScalerParams::from_json(j.at("scaler").dump());
    for (const auto& p : j.at("params")) {
        auto d = p.get<std::vector<double>>();
        Eigen::ArrayXd a = Eigen::Map<const Eigen::ArrayXd>(d.data(), d.size());
        m.param_values.push_back(a);
    }
    for (const auto& h : j.at("history"))
        m.history.push_back({h.at(0).get<double>(), h.at(1).get<double>()});
    return m;
}

}  // namespace irgrid
