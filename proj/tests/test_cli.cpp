#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "stgcn/cli.hpp"
#include "stgcn/csv.hpp"
#include "stgcn/error.hpp"
#include "stgcn/rng.hpp"

using namespace stgcn;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() / ("stgcn_cli_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

struct CapturedErr {
    std::ostringstream sink;
    std::streambuf* old;
    CapturedErr() : old(std::cerr.rdbuf(sink.rdbuf())) {}
    ~CapturedErr() { std::cerr.rdbuf(old); }
    std::string text() const { return sink.str(); }
};

// two monotone node series plus one anti-correlated node
void write_monotone_dataset(const TempDir& tmp) {
    std::string csv = "a,b,c\n";
    for (int t = 0; t < 12; ++t) {
        csv += std::to_string(t) + "," + std::to_string(2 * t + 1) + "," +
               std::to_string(100 - 3 * t) + "\n";
    }
    write_file_atomic(tmp.file("vals.csv"), csv);
    write_file_atomic(tmp.file("manifest.json"),
                      "{\"values_csv\": [\"vals.csv\"], \"timeslot_minutes\": 10}");
}

// lag-driven ring dataset with a weak periodic baseline
void write_lag_dataset(const TempDir& tmp, int steps = 240, int nodes = 4) {
    Rng rng(11);
    std::vector<double> v(static_cast<size_t>(steps * nodes), 0.0);
    for (int t = 1; t < steps; ++t)
        for (int i = 0; i < nodes; ++i)
            v[static_cast<size_t>(t * nodes + i)] =
                0.9 * v[static_cast<size_t>((t - 1) * nodes + (i + nodes - 1) % nodes)] +
                rng.normal(0.0, 0.05);
    std::string csv;
    for (int i = 0; i < nodes; ++i) csv += (i ? "," : "") + ("n" + std::to_string(i));
    csv += "\n";
    for (int t = 0; t < steps; ++t) {
        for (int i = 0; i < nodes; ++i)
            csv += (i ? "," : "") + format_double(v[static_cast<size_t>(t * nodes + i)]);
        csv += "\n";
    }
    write_file_atomic(tmp.file("lag.csv"), csv);
    write_file_atomic(tmp.file("lag_manifest.json"),
                      "{\"values_csv\": [\"lag.csv\"], \"timeslot_minutes\": 15}");
    std::string edges = "src,dst\n";
    for (int i = 0; i < nodes; ++i)
        edges += "n" + std::to_string(i) + ",n" + std::to_string((i + 1) % nodes) + "\n";
    write_file_atomic(tmp.file("ring.csv"), edges);
    write_file_atomic(tmp.file("config.json"), R"({
        "epochs": 60, "batch_size": 8, "learning_rate": 0.003, "seed": 7,
        "input_steps": 8, "horizon": 1, "split": [6, 2, 2], "ha_period": 12,
        "model": {"blocks": 1, "kernels": [[2, 2]], "cheb_order": 3,
                  "branch_channels": 3, "embed_dim": 2, "fc_hidden": 6}
    })");
}

}  // namespace

TEST_CASE("build-graph with the spearman method connects the monotone twins") {
    TempDir tmp;
    write_monotone_dataset(tmp);
    const int rc = cli_run({"build-graph", "--manifest", tmp.file("manifest.json"), "--method",
                            "spearman", "--threshold", "0.92", "--out", tmp.file("g.csv")});
    CHECK(rc == 0);
    const CsvTable g = read_csv(tmp.file("g.csv"));
    REQUIRE(g.rows.size() == 1);  // only (a, b); c anti-correlates
    CHECK(g.rows[0] == std::vector<std::string>{"a", "b"});
}

TEST_CASE("build-graph with the distance method") {
    TempDir tmp;
    write_monotone_dataset(tmp);
    write_file_atomic(tmp.file("d.csv"), "a,b,c\n0,0.5,1\n0.5,0,0.5\n1,0.5,0\n");
    const int rc = cli_run({"build-graph", "--manifest", tmp.file("manifest.json"), "--method",
                            "distance", "--distances", tmp.file("d.csv"), "--sigma", "1.0",
                            "--epsilon", "0.5", "--out", tmp.file("gd.csv")});
    CHECK(rc == 0);
    CHECK(read_csv(tmp.file("gd.csv")).rows.size() == 2);
}

TEST_CASE("identically-seeded train runs write identical bytes") {
    TempDir tmp;
    write_lag_dataset(tmp);
    // short run: determinism does not need convergence
    write_file_atomic(tmp.file("fast.json"), R"({
        "epochs": 3, "batch_size": 8, "learning_rate": 0.003, "seed": 7,
        "input_steps": 8, "horizon": 1, "split": [6, 2, 2], "ha_period": 12,
        "model": {"blocks": 1, "kernels": [[2, 2]], "cheb_order": 3,
                  "branch_channels": 3, "embed_dim": 2, "fc_hidden": 6}
    })");
    auto run = [&](const std::string& tag) {
        const int rc = cli_run({"train", "--manifest", tmp.file("lag_manifest.json"), "--graph",
                                tmp.file("ring.csv"), "--config", tmp.file("fast.json"), "--seed",
                                "7", "--checkpoint", tmp.file(tag + ".ckpt"), "--loss-csv",
                                tmp.file(tag + ".loss.csv")});
        REQUIRE(rc == 0);
    };
    run("one");
    run("two");
    CHECK(read_file(tmp.file("one.ckpt")) == read_file(tmp.file("two.ckpt")));
    CHECK(read_file(tmp.file("one.loss.csv")) == read_file(tmp.file("two.loss.csv")));
}

TEST_CASE("train, eval, predict and report round trip through the CLI") {
    TempDir tmp;
    write_lag_dataset(tmp);
    REQUIRE(cli_run({"train", "--manifest", tmp.file("lag_manifest.json"), "--graph",
                     tmp.file("ring.csv"), "--config", tmp.file("config.json"), "--checkpoint",
                     tmp.file("m.ckpt"), "--loss-csv", tmp.file("loss.csv")}) == 0);

    // loss csv: epochs rows, finite entries
    const CsvTable loss = read_csv(tmp.file("loss.csv"));
    CHECK(loss.header == std::vector<std::string>{"epoch", "train_mse", "val_mse"});
    CHECK(loss.rows.size() == 60);
    for (const auto& row : loss.rows) parse_double(row[1], "loss");

    REQUIRE(cli_run({"eval", "--manifest", tmp.file("lag_manifest.json"), "--graph",
                     tmp.file("ring.csv"), "--checkpoint", tmp.file("m.ckpt"), "--out",
                     tmp.file("metrics.csv")}) == 0);
    const CsvTable metrics = read_csv(tmp.file("metrics.csv"));
    CHECK(metrics.header == std::vector<std::string>{"series", "horizon", "mae", "rmse"});
    double model_avg = -1.0, ha_avg = -1.0;
    for (const auto& row : metrics.rows) {
        if (row[1] != "avg") continue;
        if (row[0] == "model") model_avg = parse_double(row[2], "metrics");
        if (row[0] == "ha") ha_avg = parse_double(row[2], "metrics");
    }
    REQUIRE(model_avg >= 0.0);
    REQUIRE(ha_avg >= 0.0);
    CHECK(model_avg < ha_avg);  // the trained model beats the baseline row

    REQUIRE(cli_run({"predict", "--manifest", tmp.file("lag_manifest.json"), "--graph",
                     tmp.file("ring.csv"), "--checkpoint", tmp.file("m.ckpt"), "--out",
                     tmp.file("forecast.csv")}) == 0);
    const CsvTable fc = read_csv(tmp.file("forecast.csv"));
    CHECK(fc.header == std::vector<std::string>{"step", "node", "channel", "value"});
    CHECK(fc.rows.size() == 1 * 4 * 1);  // M x N x C
    for (const auto& row : fc.rows) parse_double(row[3], "forecast");

    REQUIRE(cli_run({"report", "--manifest", tmp.file("lag_manifest.json"), "--graph",
                     tmp.file("ring.csv"), "--checkpoint", tmp.file("m.ckpt"), "--out-dir",
                     tmp.path.string()}) == 0);
    const CsvTable curves = read_csv(tmp.file("curves.csv"));
    CHECK(curves.header ==
          std::vector<std::string>{"horizon", "model_mae", "model_rmse", "ha_mae", "ha_rmse"});
    CHECK(curves.rows.size() == 1);
    const CsvTable att = read_csv(tmp.file("attention.csv"));
    CHECK(att.header == std::vector<std::string>{"block", "node", "branch", "score"});
    CHECK(att.rows.size() == 1 * 4 * 1);  // blocks x nodes x branches
    // attention rows are per-node distributions over branches (B=1 here -> 1.0)
    for (const auto& row : att.rows)
        CHECK(parse_double(row[3], "attention") == doctest::Approx(1.0));
}

TEST_CASE("ablation flags reach the persisted config") {
    TempDir tmp;
    write_lag_dataset(tmp);
    write_file_atomic(tmp.file("fast.json"), R"({
        "epochs": 1, "batch_size": 8, "learning_rate": 0.003, "seed": 7,
        "input_steps": 8, "horizon": 1, "split": [6, 2, 2], "ha_period": 12,
        "model": {"blocks": 1, "kernels": [[2, 2]], "cheb_order": 3,
                  "branch_channels": 3, "embed_dim": 2, "fc_hidden": 6}
    })");
    REQUIRE(cli_run({"train", "--manifest", tmp.file("lag_manifest.json"), "--graph",
                     tmp.file("ring.csv"), "--config", tmp.file("fast.json"), "--no-mask",
                     "--no-attention", "--two-phase", "--checkpoint", tmp.file("a.ckpt")}) == 0);
    const std::string text = read_file(tmp.file("a.ckpt"));
    CHECK(text.find("\"use_mask\":false") != std::string::npos);
    CHECK(text.find("\"use_attention\":false") != std::string::npos);
    CHECK(text.find("\"two_phase\":true") != std::string::npos);
}

TEST_CASE("train accepts a dense adjacency matrix") {
    TempDir tmp;
    write_lag_dataset(tmp);
    std::string dense = "n0,n1,n2,n3\n";
    const int adj[4][4] = {{0, 1, 0, 1}, {1, 0, 1, 0}, {0, 1, 0, 1}, {1, 0, 1, 0}};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) dense += (j ? "," : "") + std::to_string(adj[i][j]);
        dense += "\n";
    }
    write_file_atomic(tmp.file("dense.csv"), dense);
    write_file_atomic(tmp.file("fast.json"), R"({
        "epochs": 1, "batch_size": 8, "learning_rate": 0.003, "seed": 7,
        "input_steps": 8, "horizon": 1, "split": [6, 2, 2], "ha_period": 12,
        "model": {"blocks": 1, "kernels": [[2, 2]], "cheb_order": 3,
                  "branch_channels": 3, "embed_dim": 2, "fc_hidden": 6}
    })");
    CHECK(cli_run({"train", "--manifest", tmp.file("lag_manifest.json"), "--graph",
                   tmp.file("dense.csv"), "--config", tmp.file("fast.json"), "--checkpoint",
                   tmp.file("d.ckpt")}) == 0);
    CHECK(std::filesystem::exists(tmp.file("d.ckpt")));
}

TEST_CASE("failures exit nonzero with a single-line error") {
    TempDir tmp;
    write_monotone_dataset(tmp);
    {
        CapturedErr err;
        CHECK(cli_run({"frobnicate"}) != 0);
        const std::string text = err.text();
        CHECK(std::count(text.begin(), text.end(), '\n') == 1);
    }
    {
        CapturedErr err;
        CHECK(cli_run({"build-graph", "--manifest", tmp.file("manifest.json"), "--bogus-flag"}) !=
              0);
        const std::string text = err.text();
        CHECK(std::count(text.begin(), text.end(), '\n') == 1);
        CHECK(text.rfind("error: ", 0) == 0);
    }
    {
        CapturedErr err;
        CHECK(cli_run({"build-graph", "--manifest", tmp.file("missing.json")}) != 0);
        CHECK(err.text().rfind("error: ", 0) == 0);
    }
    {
        CapturedErr err;
        CHECK(cli_run({"build-graph", "--manifest", tmp.file("manifest.json"), "--method",
                       "nope"}) != 0);
        CHECK(err.text().rfind("error: ", 0) == 0);
    }
    {
        CapturedErr err;  // config validation failure
        write_file_atomic(tmp.file("bad.json"), "{\"epochs\": -1}");
        CHECK(cli_run({"train", "--manifest", tmp.file("manifest.json"), "--graph",
                       tmp.file("none.csv"), "--config", tmp.file("bad.json")}) != 0);
        CHECK(err.text().rfind("error: ", 0) == 0);
    }
}
