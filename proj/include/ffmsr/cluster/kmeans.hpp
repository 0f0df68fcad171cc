#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ffmsr/data/encoding_bank.hpp"

namespace ffmsr::cluster {

using ClientId = std::uint32_t;
using Rng = std::mt19937_64;

/// K centroids of width dim, row-major, kept in double precision.
struct Centroids {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<double> values;

    std::span<double> row(std::size_t j) { return {values.data() + j * dim, dim}; }
    std::span<const double> row(std::size_t j) const { return {values.data() + j * dim, dim}; }

    friend bool operator==(const Centroids&, const Centroids&) = default;
};

struct ClusterOptions {
    std::size_t k = 120;
    std::size_t max_iters = 50;
    double shift_tol = 1e-4;
    double epsilon = 1e-8;
};

/// One client's mixed-layer encodings as received by the server.
struct UploadBatch {
    ClientId client_id = 0;
    data::EncodingMatrix encodings;
};

/// Rows [offset, offset + rows) of the concatenated points belong to client.
struct Segment {
    ClientId client_id = 0;
    std::size_t offset = 0;
    std::size_t rows = 0;
};

struct ClusterModel {
    ClusterOptions options;
    Centroids centroids;
    std::vector<std::int32_t> assignments;  // one per concatenated point
    std::vector<Segment> segments;          // sorted by client id
    std::size_t iterations = 0;
    bool converged = false;
    /// k-means objective before and after every assignment step.
    std::vector<std::pair<double, double>> assignment_objectives;
};

/// Greedy k-means++ seeding: first centre uniform, then for each next one
/// 2 + floor(ln K) candidates are drawn with probability proportional to their
/// squared distance to the nearest chosen centre, and the candidate giving the
/// lowest total squared distance is kept. If every remaining distance is zero
/// the next centre is drawn uniformly from the points not chosen yet.
Centroids kmeanspp_init(const data::EncodingMatrix& points, std::size_t k, Rng& rng);

/// Nearest centroid by squared Euclidean distance, lowest index on ties.
std::vector<std::int32_t> assign(const data::EncodingMatrix& points, const Centroids& centroids);

double squared_distance(std::span<const float> x, std::span<const double> c);

/// Sum over points of the squared distance to the labelled centroid.
double objective(const data::EncodingMatrix& points, const Centroids& centroids, std::span<const std::int32_t> labels);

/// c_j = sum(w_i x_i) / sum(w_i) over the points labelled j, with
/// w_i = 1 / (||x_i - c_j_old|| + epsilon). Empty clusters keep their centre.
Centroids weighted_update(const data::EncodingMatrix& points, std::span<const std::int32_t> labels,
                          const Centroids& old_centroids, double epsilon);

/// Concatenate the batches in client-id order and alternate assignment and
/// weighted update until the largest centre shift is below shift_tol or
/// max_iters updates have run. Assignments are refreshed against the final
/// centres.
ClusterModel cluster(std::span<const UploadBatch> batches, const ClusterOptions& options, Rng& rng);

/// Each of the client's items replaced by its cluster centre.
data::EncodingMatrix synchronize(const ClusterModel& model, const UploadBatch& batch);

/// Fraction of points whose cluster's majority label equals their own.
double purity(std::span<const std::int32_t> labels, std::span<const std::int32_t> truth);

}  // namespace ffmsr::cluster
