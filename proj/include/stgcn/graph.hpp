#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stgcn/tensor.hpp"

namespace stgcn {

// Static undirected traffic graph: binary adjacency, zero diagonal.
struct TrafficGraph {
    int64_t n = 0;
    std::vector<std::string> node_ids;
    Tensor adjacency;  // n x n, entries in {0,1}, symmetric, zero diagonal

    int64_t edge_count() const;
};

TrafficGraph graph_from_edges(std::vector<std::string> node_ids,
                              const std::vector<std::pair<int64_t, int64_t>>& edges);

// Edge (i,j) iff Spearman rank correlation of the two node series >= threshold.
// `series` is [time x N]; ties get average ranks; a constant series isolates
// its node and emits a warning on stderr.
TrafficGraph build_adjacency_spearman(const Tensor& series, std::vector<std::string> node_ids,
                                      double threshold);

// Thresholded Gaussian kernel: edge iff exp(-d_ij^2 / sigma^2) >= epsilon.
TrafficGraph build_adjacency_distance(const Tensor& distances, std::vector<std::string> node_ids,
                                      double sigma, double epsilon);

// Spearman rank correlation of two equal-length series (average ranks on
// ties). Returns 0 and sets *degenerate when either side has zero rank
// variance.
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b,
                            bool* degenerate = nullptr);

// --- file formats ---------------------------------------------------------

void write_edge_list_csv(const TrafficGraph& g, const std::string& path);
TrafficGraph read_edge_list_csv(const std::string& path, std::vector<std::string> node_ids);
TrafficGraph read_dense_adjacency_csv(const std::string& path);

// FNV-1a over the node count and adjacency pattern; pins checkpoints to the
// graph they were trained on.
uint64_t adjacency_fingerprint(const TrafficGraph& g);

}  // namespace stgcn
