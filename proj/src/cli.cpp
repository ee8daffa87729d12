#include "stgcn/cli.hpp"

#include <cmath>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "stgcn/csv.hpp"
#include "stgcn/data.hpp"
#include "stgcn/error.hpp"
#include "stgcn/graph.hpp"
#include "stgcn/io.hpp"
#include "stgcn/train.hpp"

namespace stgcn {

namespace {

struct CommonArgs {
    std::string manifest;
    std::string graph;
    std::string config;
    std::string checkpoint;
};

TrafficGraph load_graph_for(const std::string& graph_path, const DatasetManifest& manifest) {
    const CsvTable head = read_csv(graph_path);
    if (head.header == std::vector<std::string>{"src", "dst"})
        return read_edge_list_csv(graph_path, manifest.node_ids);
    // dense 0/1 matrix whose header must match the dataset's node order
    TrafficGraph g = read_dense_adjacency_csv(graph_path);
    if (g.node_ids != manifest.node_ids)
        throw IOError(graph_path + ": dense adjacency node order does not match the dataset");
    return g;
}

struct LoadedData {
    DatasetManifest manifest;
    Tensor series;
};

LoadedData load_data(const std::string& manifest_path) {
    LoadedData d;
    d.manifest = read_manifest(manifest_path);
    d.series = load_dataset(d.manifest);
    return d;
}

void write_loss_csv(const std::string& path, const TrainResult& history) {
    std::vector<std::vector<std::string>> rows;
    for (size_t e = 0; e < history.train_mse.size(); ++e)
        rows.push_back({std::to_string(e + 1), format_double(history.train_mse[e]),
                        format_double(history.val_mse[e])});
    write_csv(path, {"epoch", "train_mse", "val_mse"}, rows);
}

void write_metrics_csv(const std::string& path, const HorizonMetrics& model,
                       const HorizonMetrics& ha) {
    std::vector<std::vector<std::string>> rows;
    auto emit = [&rows](const std::string& series, const HorizonMetrics& m) {
        for (size_t h = 0; h < m.mae.size(); ++h)
            rows.push_back({series, std::to_string(h + 1), format_double(m.mae[h]),
                            format_double(m.rmse[h])});
        rows.push_back({series, "avg", format_double(m.mae_mean), format_double(m.rmse_mean)});
    };
    emit("model", model);
    emit("ha", ha);
    write_csv(path, {"series", "horizon", "mae", "rmse"}, rows);
}

int cmd_build_graph(const CommonArgs& common, const std::string& method, double threshold,
                    double sigma, double epsilon, const std::string& distances_csv,
                    const std::string& out_path) {
    if (method == "spearman") {
        LoadedData d = load_data(common.manifest);
        // correlations are computed on the first channel
        const int64_t t = d.series.extent(0);
        const int64_t n = d.series.extent(1);
        const int64_t c = d.series.extent(2);
        std::vector<double> ch0(static_cast<size_t>(t * n));
        const auto& v = d.series.data();
        for (int64_t i = 0; i < t * n; ++i) ch0[static_cast<size_t>(i)] = v[static_cast<size_t>(i * c)];
        const TrafficGraph g = build_adjacency_spearman(Tensor({t, n}, std::move(ch0)),
                                                        d.manifest.node_ids, threshold);
        write_edge_list_csv(g, out_path);
        std::cout << "wrote " << out_path << " (" << g.n << " nodes, " << g.edge_count()
                  << " edges)\n";
        return 0;
    }
    if (method == "distance") {
        if (distances_csv.empty())
            throw ConfigError("build-graph: --distances is required with --method distance");
        const CsvTable table = read_csv(distances_csv);
        const int64_t n = static_cast<int64_t>(table.header.size());
        if (static_cast<int64_t>(table.rows.size()) != n)
            throw IOError(distances_csv + ": distance matrix must be square");
        std::vector<double> dist(static_cast<size_t>(n * n));
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j)
                dist[static_cast<size_t>(i * n + j)] =
                    parse_double(table.rows[static_cast<size_t>(i)][static_cast<size_t>(j)],
                                 distances_csv + " row " + std::to_string(i + 2));
        const TrafficGraph g =
            build_adjacency_distance(Tensor({n, n}, std::move(dist)), table.header, sigma, epsilon);
        write_edge_list_csv(g, out_path);
        std::cout << "wrote " << out_path << " (" << g.n << " nodes, " << g.edge_count()
                  << " edges)\n";
        return 0;
    }
    throw ConfigError("build-graph: unknown method '" + method + "'");
}

int cmd_train(const CommonArgs& common, TrainConfig cfg, const std::string& ckpt_out,
              const std::string& loss_out) {
    LoadedData d = load_data(common.manifest);
    cfg.channels = static_cast<int>(d.series.extent(2));
    const TrafficGraph graph = load_graph_for(common.graph, d.manifest);
    const SeriesWindows data = make_windows(d.series, cfg.input_steps, cfg.horizon, cfg.split);

    Model model(graph, cfg.model, cfg.input_steps, cfg.horizon, cfg.channels, cfg.seed);
    const TrainResult history = train_model(model, data, cfg);

    save_checkpoint(ckpt_out, model, cfg, data.bounds);
    if (!loss_out.empty()) write_loss_csv(loss_out, history);
    std::cout << "trained " << cfg.epochs << " epochs; parameters: " << model.parameter_count()
              << "; final train mse: "
              << (history.train_mse.empty() ? std::string("n/a")
                                            : format_double(history.train_mse.back()))
              << "\n";
    return 0;
}

struct Restored {
    Model model;
    Checkpoint ckpt;
    SeriesWindows data;
};

Restored restore_for_eval(const CommonArgs& common) {
    LoadedData d = load_data(common.manifest);
    const TrafficGraph graph = load_graph_for(common.graph, d.manifest);
    Checkpoint ckpt = load_checkpoint(common.checkpoint);
    Model model = restore_model(ckpt, graph);
    SeriesWindows data = make_windows(d.series, ckpt.config.input_steps, ckpt.config.horizon,
                                      ckpt.config.split);
    return Restored{std::move(model), std::move(ckpt), std::move(data)};
}

int cmd_eval(const CommonArgs& common, const std::string& out_path, int ha_period_override) {
    Restored r = restore_for_eval(common);
    const int period = ha_period_override > 0 ? ha_period_override : r.ckpt.config.ha_period;
    const HorizonMetrics model_m = evaluate_model(r.model, r.data, Split::Test);
    const HorizonMetrics ha_m = evaluate_ha(r.data, Split::Test, period);
    write_metrics_csv(out_path, model_m, ha_m);
    std::cout << "model avg mae " << format_double(model_m.mae_mean) << ", ha avg mae "
              << format_double(ha_m.mae_mean) << "\n";
    return 0;
}

int cmd_predict(const CommonArgs& common, const std::string& out_path) {
    LoadedData d = load_data(common.manifest);
    const TrafficGraph graph = load_graph_for(common.graph, d.manifest);
    const Checkpoint ckpt = load_checkpoint(common.checkpoint);
    const Model model = restore_model(ckpt, graph);

    const int t = ckpt.config.input_steps;
    const int64_t total = d.series.extent(0);
    if (total < t)
        throw ValueError("predict: series has " + std::to_string(total) +
                         " steps, the model window needs " + std::to_string(t));
    const Tensor normalized = normalize_series(d.series, ckpt.bounds);
    const int64_t n = normalized.extent(1);
    const int64_t c = normalized.extent(2);
    std::vector<double> x(static_cast<size_t>(n * t * c));
    const auto& v = normalized.data();
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t ti = 0; ti < t; ++ti)
            for (int64_t ci = 0; ci < c; ++ci)
                x[static_cast<size_t>((ni * t + ti) * c + ci)] =
                    v[static_cast<size_t>(((total - t + ti) * n + ni) * c + ci)];

    const Model::Output out = model.forward(nullptr, Tensor({1, n, t, c}, std::move(x)));
    const Tensor forecast = denormalize(out.fused, ckpt.bounds);  // [1, N, M, C]

    std::vector<std::vector<std::string>> rows;
    const int m = ckpt.config.horizon;
    for (int64_t mi = 0; mi < m; ++mi)
        for (int64_t ni = 0; ni < n; ++ni)
            for (int64_t ci = 0; ci < c; ++ci)
                rows.push_back({std::to_string(mi + 1), d.manifest.node_ids[static_cast<size_t>(ni)],
                                std::to_string(ci),
                                format_double(forecast.at({0, ni, mi, ci}))});
    write_csv(out_path, {"step", "node", "channel", "value"}, rows);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_report(const CommonArgs& common, const std::string& out_dir, int ha_period_override) {
    Restored r = restore_for_eval(common);
    const int period = ha_period_override > 0 ? ha_period_override : r.ckpt.config.ha_period;
    const HorizonMetrics model_m = evaluate_model(r.model, r.data, Split::Test);
    const HorizonMetrics ha_m = evaluate_ha(r.data, Split::Test, period);

    std::vector<std::vector<std::string>> curve_rows;
    for (size_t h = 0; h < model_m.mae.size(); ++h)
        curve_rows.push_back({std::to_string(h + 1), format_double(model_m.mae[h]),
                              format_double(model_m.rmse[h]), format_double(ha_m.mae[h]),
                              format_double(ha_m.rmse[h])});
    write_csv(out_dir + "/curves.csv", {"horizon", "model_mae", "model_rmse", "ha_mae", "ha_rmse"},
              curve_rows);

    const std::vector<Tensor> attention = mean_attention(r.model, r.data, Split::Test);
    std::vector<std::vector<std::string>> att_rows;
    for (size_t l = 0; l < attention.size(); ++l) {
        const Tensor& a = attention[l];
        for (int64_t ni = 0; ni < a.extent(0); ++ni)
            for (int64_t b = 0; b < a.extent(1); ++b)
                att_rows.push_back({std::to_string(l),
                                    r.data.series.extent(1) == static_cast<int64_t>(r.model.graph().node_ids.size())
                                        ? r.model.graph().node_ids[static_cast<size_t>(ni)]
                                        : std::to_string(ni),
                                    std::to_string(b), format_double(a.at({ni, b}))});
    }
    write_csv(out_dir + "/attention.csv", {"block", "node", "branch", "score"}, att_rows);
    std::cout << "wrote " << out_dir << "/curves.csv and " << out_dir << "/attention.csv\n";
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"spatial-temporal graph convolutional forecasting"};
    app.require_subcommand(1);

    CommonArgs common;
    TrainConfig cfg;
    std::string method = "spearman";
    double threshold = 0.92;
    double sigma = 1.0;
    double epsilon = 0.5;
    std::string distances_csv;
    std::string out_path = "graph.csv";
    std::string ckpt_out = "model.ckpt";
    std::string loss_out;
    std::string metrics_out = "metrics.csv";
    std::string forecast_out = "forecast.csv";
    std::string report_dir = ".";
    int ha_period_override = 0;
    std::optional<uint64_t> seed_override;
    bool no_mask = false, no_attention = false, two_phase = false;

    auto* build = app.add_subcommand("build-graph", "build an adjacency from a dataset");
    build->add_option("--manifest", common.manifest, "dataset manifest JSON")->required();
    build->add_option("--method", method, "spearman|distance");
    build->add_option("--threshold", threshold, "spearman correlation threshold");
    build->add_option("--sigma", sigma, "gaussian kernel width");
    build->add_option("--epsilon", epsilon, "gaussian kernel cutoff");
    build->add_option("--distances", distances_csv, "pairwise distance CSV (distance method)");
    build->add_option("--out", out_path, "edge-list CSV to write");

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--manifest", common.manifest, "dataset manifest JSON")->required();
    train->add_option("--graph", common.graph, "edge-list CSV")->required();
    train->add_option("--config", common.config, "config JSON");
    train->add_option("--seed", seed_override, "override the config seed");
    train->add_option("--checkpoint", ckpt_out, "checkpoint to write");
    train->add_option("--loss-csv", loss_out, "per-epoch loss CSV to write");
    train->add_flag("--no-mask", no_mask, "disable the learnable adjacency mask");
    train->add_flag("--no-attention", no_attention, "use uniform branch weights");
    train->add_flag("--two-phase", two_phase, "pre-train encoder + direct decoder first");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    eval->add_option("--manifest", common.manifest)->required();
    eval->add_option("--graph", common.graph)->required();
    eval->add_option("--checkpoint", common.checkpoint)->required();
    eval->add_option("--out", metrics_out, "metrics CSV to write");
    eval->add_option("--ha-period", ha_period_override, "historical-average period override");

    auto* predict = app.add_subcommand("predict", "forecast from the latest window");
    predict->add_option("--manifest", common.manifest)->required();
    predict->add_option("--graph", common.graph)->required();
    predict->add_option("--checkpoint", common.checkpoint)->required();
    predict->add_option("--out", forecast_out, "forecast CSV to write");

    auto* report = app.add_subcommand("report", "per-horizon curves and attention table");
    report->add_option("--manifest", common.manifest)->required();
    report->add_option("--graph", common.graph)->required();
    report->add_option("--checkpoint", common.checkpoint)->required();
    report->add_option("--out-dir", report_dir, "directory for curves.csv and attention.csv");
    report->add_option("--ha-period", ha_period_override, "historical-average period override");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (build->parsed())
            return cmd_build_graph(common, method, threshold, sigma, epsilon, distances_csv,
                                   out_path);
        if (train->parsed()) {
            if (!common.config.empty()) cfg = load_config_file(common.config);
            if (seed_override) cfg.seed = *seed_override;
            if (no_mask) cfg.model.use_mask = false;
            if (no_attention) cfg.model.use_attention = false;
            if (two_phase) cfg.two_phase = true;
            return cmd_train(common, cfg, ckpt_out, loss_out);
        }
        if (eval->parsed()) return cmd_eval(common, metrics_out, ha_period_override);
        if (predict->parsed()) return cmd_predict(common, forecast_out);
        if (report->parsed()) return cmd_report(common, report_dir, ha_period_override);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 2;
}

}  // namespace stgcn
