#include "stgcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

#include "stgcn/csv.hpp"
#include "stgcn/error.hpp"

namespace stgcn {

namespace {

std::vector<std::string> default_ids(int64_t n) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
    return ids;
}

void validate_ids(const std::vector<std::string>& ids) {
    std::map<std::string, int> seen;
    for (const auto& id : ids) {
        if (id.empty()) throw ValueError("graph: empty node id");
        if (id.find(',') != std::string::npos)
            throw ValueError("graph: node id contains a comma: '" + id + "'");
        if (++seen[id] > 1) throw ValueError("graph: duplicate node id '" + id + "'");
    }
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

int64_t TrafficGraph::edge_count() const {
    const auto& a = adjacency.data();
    int64_t twice = 0;
    for (double v : a) twice += v != 0.0 ? 1 : 0;
    return twice / 2;
}

TrafficGraph graph_from_edges(std::vector<std::string> node_ids,
                              const std::vector<std::pair<int64_t, int64_t>>& edges) {
    validate_ids(node_ids);
    const int64_t n = static_cast<int64_t>(node_ids.size());
    std::vector<double> a(static_cast<size_t>(n * n), 0.0);
    for (auto [i, j] : edges) {
        if (i < 0 || i >= n || j < 0 || j >= n)
            throw ValueError("graph: edge (" + std::to_string(i) + ", " + std::to_string(j) +
                             ") out of range for " + std::to_string(n) + " nodes");
        if (i == j) continue;  // no self loops
        a[static_cast<size_t>(i * n + j)] = 1.0;
        a[static_cast<size_t>(j * n + i)] = 1.0;
    }
    return TrafficGraph{n, std::move(node_ids), Tensor({n, n}, std::move(a))};
}

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b,
                            bool* degenerate) {
    if (a.size() != b.size() || a.size() < 3)
        throw ValueError("spearman: needs two equal series of length >= 3");
    if (degenerate) *degenerate = false;
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - ma;
        const double db = rb[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return cov / std::sqrt(va * vb);
}

TrafficGraph build_adjacency_spearman(const Tensor& series, std::vector<std::string> node_ids,
                                      double threshold) {
    if (series.ndim() != 2)
        throw ShapeError("spearman adjacency: series must be [time x nodes], got " +
                         shape_str(series.shape()));
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValueError("spearman adjacency: threshold must lie in (0, 1)");
    const int64_t t = series.extent(0);
    const int64_t n = series.extent(1);
    if (t < 3) throw ValueError("spearman adjacency: needs at least 3 observations per node");
    if (node_ids.empty()) node_ids = default_ids(n);
    if (static_cast<int64_t>(node_ids.size()) != n)
        throw ValueError("spearman adjacency: " + std::to_string(node_ids.size()) +
                         " node ids for " + std::to_string(n) + " nodes");
    validate_ids(node_ids);

    std::vector<std::vector<double>> cols(static_cast<size_t>(n));
    const auto& v = series.data();
    for (int64_t j = 0; j < n; ++j) {
        auto& col = cols[static_cast<size_t>(j)];
        col.resize(static_cast<size_t>(t));
        for (int64_t i = 0; i < t; ++i) col[static_cast<size_t>(i)] = v[static_cast<size_t>(i * n + j)];
    }

    std::vector<bool> warned(static_cast<size_t>(n), false);
    std::vector<double> a(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = i + 1; j < n; ++j) {
            bool degenerate = false;
            const double rho =
                spearman_correlation(cols[static_cast<size_t>(i)], cols[static_cast<size_t>(j)], &degenerate);
            if (degenerate) {
                for (int64_t k : {i, j}) {
                    auto& col = cols[static_cast<size_t>(k)];
                    const bool constant =
                        std::all_of(col.begin(), col.end(), [&](double x) { return x == col[0]; });
                    if (constant && !warned[static_cast<size_t>(k)]) {
                        warned[static_cast<size_t>(k)] = true;
                        std::cerr << "warning: node '" << node_ids[static_cast<size_t>(k)]
                                  << "' has a constant series; it gets no edges\n";
                    }
                }
                continue;
            }
            if (rho >= threshold) {
                a[static_cast<size_t>(i * n + j)] = 1.0;
                a[static_cast<size_t>(j * n + i)] = 1.0;
            }
        }
    }
    return TrafficGraph{n, std::move(node_ids), Tensor({n, n}, std::move(a))};
}

TrafficGraph build_adjacency_distance(const Tensor& distances, std::vector<std::string> node_ids,
                                      double sigma, double epsilon) {
    if (distances.ndim() != 2 || distances.extent(0) != distances.extent(1))
        throw ShapeError("distance adjacency: distances must be square, got " +
                         shape_str(distances.shape()));
    if (sigma <= 0.0) throw ValueError("distance adjacency: sigma must be positive");
    if (!(epsilon > 0.0 && epsilon <= 1.0))
        throw ValueError("distance adjacency: epsilon must lie in (0, 1]");
    const int64_t n = distances.extent(0);
    if (node_ids.empty()) node_ids = default_ids(n);
    if (static_cast<int64_t>(node_ids.size()) != n)
        throw ValueError("distance adjacency: node id count mismatch");
    validate_ids(node_ids);

    const auto& d = distances.data();
    for (int64_t i = 0; i < n; ++i) {
        if (d[static_cast<size_t>(i * n + i)] != 0.0)
            throw ValueError("distance adjacency: nonzero diagonal at node " + std::to_string(i));
        for (int64_t j = 0; j < n; ++j) {
            const double dij = d[static_cast<size_t>(i * n + j)];
            if (dij < 0.0)
                throw ValueError("distance adjacency: negative distance at (" + std::to_string(i) +
                                 ", " + std::to_string(j) + ")");
            if (dij != d[static_cast<size_t>(j * n + i)])
                throw ValueError("distance adjacency: asymmetric distances at (" +
                                 std::to_string(i) + ", " + std::to_string(j) + ")");
        }
    }

    std::vector<double> a(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = i + 1; j < n; ++j) {
            const double dij = d[static_cast<size_t>(i * n + j)];
            const double w = std::exp(-(dij * dij) / (sigma * sigma));
            if (w >= epsilon) {
                a[static_cast<size_t>(i * n + j)] = 1.0;
                a[static_cast<size_t>(j * n + i)] = 1.0;
            }
        }
    }
    return TrafficGraph{n, std::move(node_ids), Tensor({n, n}, std::move(a))};
}

void write_edge_list_csv(const TrafficGraph& g, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    const auto& a = g.adjacency.data();
    for (int64_t i = 0; i < g.n; ++i)
        for (int64_t j = i + 1; j < g.n; ++j)
            if (a[static_cast<size_t>(i * g.n + j)] != 0.0)
                rows.push_back({g.node_ids[static_cast<size_t>(i)], g.node_ids[static_cast<size_t>(j)]});
    write_csv(path, {"src", "dst"}, rows);
}

TrafficGraph read_edge_list_csv(const std::string& path, std::vector<std::string> node_ids) {
    const CsvTable table = read_csv(path);
    if (table.header != std::vector<std::string>{"src", "dst"})
        throw IOError(path + ": expected header 'src,dst'");
    validate_ids(node_ids);
    std::map<std::string, int64_t> index;
    for (size_t i = 0; i < node_ids.size(); ++i) index[node_ids[i]] = static_cast<int64_t>(i);
    std::vector<std::pair<int64_t, int64_t>> edges;
    for (size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto it = index.find(row[0]);
        auto jt = index.find(row[1]);
        if (it == index.end() || jt == index.end())
            throw IOError(path + ": row " + std::to_string(r + 2) + " names unknown node '" +
                          (it == index.end() ? row[0] : row[1]) + "'");
        edges.emplace_back(it->second, jt->second);
    }
    return graph_from_edges(std::move(node_ids), edges);
}

TrafficGraph read_dense_adjacency_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    std::vector<std::string> ids = table.header;
    const int64_t n = static_cast<int64_t>(ids.size());
    if (static_cast<int64_t>(table.rows.size()) != n)
        throw IOError(path + ": dense adjacency must be square; got " +
                      std::to_string(table.rows.size()) + " rows for " + std::to_string(n) +
                      " columns");
    std::vector<std::pair<int64_t, int64_t>> edges;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            const double v = parse_double(table.rows[static_cast<size_t>(i)][static_cast<size_t>(j)],
                                          path + " row " + std::to_string(i + 2));
            if (v != 0.0 && v != 1.0)
                throw IOError(path + ": adjacency entries must be 0 or 1, found " +
                              format_double(v) + " at row " + std::to_string(i + 2) + " column " +
                              std::to_string(j + 1));
            if (v == 1.0) {
                if (i == j)
                    throw IOError(path + ": self loop at node '" + ids[static_cast<size_t>(i)] + "'");
                edges.emplace_back(i, j);
            }
        }
    }
    auto g = graph_from_edges(std::move(ids), edges);
    // reject asymmetric sources
    const auto& a = g.adjacency.data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            const double want = parse_double(table.rows[static_cast<size_t>(i)][static_cast<size_t>(j)], path);
            if (a[static_cast<size_t>(i * n + j)] != want)
                throw IOError(path + ": adjacency is not symmetric at (" + std::to_string(i) +
                              ", " + std::to_string(j) + ")");
        }
    return g;
}

uint64_t adjacency_fingerprint(const TrafficGraph& g) {
    uint64_t h = 1469598103934665603ull;  // FNV offset basis
    auto mix = [&h](uint8_t byte) {
        h ^= byte;
        h *= 1099511628211ull;
    };
    for (int shift = 0; shift < 64; shift += 8) mix(static_cast<uint8_t>(g.n >> shift));
    for (double v : g.adjacency.data()) mix(v != 0.0 ? 1 : 0);
    return h;
}

}  // namespace stgcn
