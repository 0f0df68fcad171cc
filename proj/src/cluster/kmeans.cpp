#include "ffmsr/cluster/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace ffmsr::cluster {

double squared_distance(std::span<const float> x, std::span<const double> c) {
    double acc = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double diff = static_cast<double>(x[j]) - c[j];
        acc += diff * diff;
    }
    return acc;
}

Centroids kmeanspp_init(const data::EncodingMatrix& points, std::size_t k, Rng& rng) {
    const std::size_t n = points.rows;
    if (k == 0) throw std::invalid_argument("kmeans++: K must be positive");
    if (n < k) {
        throw std::invalid_argument("kmeans++: " + std::to_string(n) + " points cannot seed " + std::to_string(k) +
                                    " centroids");
    }
    Centroids c{k, points.cols, std::vector<double>(k * points.cols)};
    std::vector<bool> chosen(n, false);
    auto take = [&](std::size_t j, std::size_t idx) {
        chosen[idx] = true;
        const auto src = points.row(idx);
        std::copy(src.begin(), src.end(), c.row(j).begin());
    };

    take(0, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), c.row(0));
    const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
    std::vector<double> cand_d2(n), best_d2(n), centre;
    for (std::size_t j = 1; j < k; ++j) {
        double total = 0;
        for (double v : d2) total += v;
        std::size_t pick = n;
        if (total > 0) {
            double best_potential = std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < trials; ++t) {
                const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
                double acc = 0;
                std::size_t cand = n;
                for (std::size_t i = 0; i < n; ++i) {
                    if (d2[i] <= 0) continue;
                    acc += d2[i];
                    cand = i;
                    if (u < acc) break;
                }
                const auto src = points.row(cand);
                centre.assign(src.begin(), src.end());
                double potential = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    cand_d2[i] = std::min(d2[i], squared_distance(points.row(i), centre));
                    potential += cand_d2[i];
                }
                if (potential < best_potential) {
                    best_potential = potential;
                    pick = cand;
                    best_d2.swap(cand_d2);
                }
            }
            d2.swap(best_d2);
        }
        if (pick == n) {
            // All remaining points coincide with chosen centres.
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i) {
                if (!chosen[i]) free.push_back(i);
            }
            pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
        }
        take(j, pick);
    }
    return c;
}

std::vector<std::int32_t> assign(const data::EncodingMatrix& points, const Centroids& centroids) {
    if (centroids.k == 0) throw std::invalid_argument("assign: no centroids");
    if (points.cols != centroids.dim) throw std::invalid_argument("assign: dimension mismatch");
    std::vector<std::int32_t> labels(points.rows, 0);
    for (std::size_t i = 0; i < points.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < centroids.k; ++j) {
            const double d = squared_distance(points.row(i), centroids.row(j));
            if (d < best) {
                best = d;
                labels[i] = static_cast<std::int32_t>(j);
            }
        }
    }
    return labels;
}

double objective(const data::EncodingMatrix& points, const Centroids& centroids, std::span<const std::int32_t> labels) {
    double total = 0;
    for (std::size_t i = 0; i < points.rows; ++i) {
        total += squared_distance(points.row(i), centroids.row(static_cast<std::size_t>(labels[i])));
    }
    return total;
}

Centroids weighted_update(const data::EncodingMatrix& points, std::span<const std::int32_t> labels,
                          const Centroids& old_centroids, double epsilon) {
    if (labels.size() != points.rows) throw std::invalid_argument("weighted_update: one label per point required");
    const std::size_t dim = old_centroids.dim;
    std::vector<double> acc(old_centroids.values.size(), 0.0);
    std::vector<double> weight(old_centroids.k, 0.0);
    for (std::size_t i = 0; i < points.rows; ++i) {
        const auto j = static_cast<std::size_t>(labels[i]);
        if (labels[i] < 0 || j >= old_centroids.k) throw std::invalid_argument("weighted_update: label out of range");
        const auto x = points.row(i);
        const double w = 1.0 / (std::sqrt(squared_distance(x, old_centroids.row(j))) + epsilon);
        weight[j] += w;
        for (std::size_t t = 0; t < dim; ++t) acc[j * dim + t] += w * static_cast<double>(x[t]);
    }
    Centroids out = old_centroids;
    for (std::size_t j = 0; j < out.k; ++j) {
        if (weight[j] <= 0) continue;
        for (std::size_t t = 0; t < dim; ++t) out.values[j * dim + t] = acc[j * dim + t] / weight[j];
    }
    return out;
}

ClusterModel cluster(std::span<const UploadBatch> batches, const ClusterOptions& options, Rng& rng) {
    if (batches.empty()) throw std::invalid_argument("cluster: no uploads");
    std::vector<const UploadBatch*> sorted;
    for (const auto& b : batches) sorted.push_back(&b);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->client_id < b->client_id; });

    ClusterModel model;
    model.options = options;
    const std::size_t dim = sorted.front()->encodings.cols;
    data::EncodingMatrix points;
    points.cols = dim;
    for (std::size_t s = 0; s < sorted.size(); ++s) {
        const auto& enc = sorted[s]->encodings;
        if (s > 0 && sorted[s]->client_id == sorted[s - 1]->client_id) {
            throw std::invalid_argument("cluster: duplicate upload from client " + std::to_string(sorted[s]->client_id));
        }
        if (enc.cols != dim) throw std::invalid_argument("cluster: uploads disagree on encoding width");
        if (!enc.all_finite()) throw std::invalid_argument("cluster: non-finite upload values");
        model.segments.push_back({sorted[s]->client_id, points.rows, enc.rows});
        points.values.insert(points.values.end(), enc.values.begin(), enc.values.end());
        points.rows += enc.rows;
    }
    if (points.rows < options.k) {
        throw std::invalid_argument("cluster: " + std::to_string(points.rows) + " points for K = " +
                                    std::to_string(options.k));
    }
    if (options.max_iters == 0) throw std::invalid_argument("cluster: max_iters must be positive");

    model.centroids = kmeanspp_init(points, options.k, rng);
    while (model.iterations < options.max_iters) {
        const double before = model.assignments.empty()
                                  ? std::numeric_limits<double>::infinity()
                                  : objective(points, model.centroids, model.assignments);
        model.assignments = assign(points, model.centroids);
        model.assignment_objectives.emplace_back(before, objective(points, model.centroids, model.assignments));

        auto next = weighted_update(points, model.assignments, model.centroids, options.epsilon);
        double shift = 0;
        for (std::size_t j = 0; j < next.k; ++j) {
            double d = 0;
            for (std::size_t t = 0; t < dim; ++t) {
                const double diff = next.row(j)[t] - model.centroids.row(j)[t];
                d += diff * diff;
            }
            shift = std::max(shift, std::sqrt(d));
        }
        model.centroids = std::move(next);
        ++model.iterations;
        if (shift < options.shift_tol) {
            model.converged = true;
            break;
        }
    }
    model.assignments = assign(points, model.centroids);
    return model;
}

data::EncodingMatrix synchronize(const ClusterModel& model, const UploadBatch& batch) {
    const auto it = std::find_if(model.segments.begin(), model.segments.end(),
                                 [&](const Segment& s) { return s.client_id == batch.client_id; });
    if (it == model.segments.end()) {
        throw std::invalid_argument("synchronize: client " + std::to_string(batch.client_id) + " is not in the model");
    }
    if (it->rows != batch.encodings.rows) {
        throw std::invalid_argument("synchronize: client " + std::to_string(batch.client_id) + " uploaded " +
                                    std::to_string(it->rows) + " rows, batch has " +
                                    std::to_string(batch.encodings.rows));
    }
    auto out = data::EncodingMatrix::zeros(it->rows, model.centroids.dim);
    for (std::size_t i = 0; i < it->rows; ++i) {
        const auto c = model.centroids.row(static_cast<std::size_t>(model.assignments[it->offset + i]));
        auto dst = out.row(i);
        for (std::size_t t = 0; t < c.size(); ++t) dst[t] = static_cast<float>(c[t]);
    }
    return out;
}

double purity(std::span<const std::int32_t> labels, std::span<const std::int32_t> truth) {
    if (labels.size() != truth.size()) throw std::invalid_argument("purity: label count mismatch");
    if (labels.empty()) return 1.0;
    std::map<std::int32_t, std::map<std::int32_t, std::size_t>> table;
    for (std::size_t i = 0; i < labels.size(); ++i) ++table[labels[i]][truth[i]];
    std::size_t majority = 0;
    for (const auto& [cluster_id, counts] : table) {
        std::size_t best = 0;
        for (const auto& [t, c] : counts) best = std::max(best, c);
        majority += best;
    }
    return static_cast<double>(majority) / static_cast<double>(labels.size());
}

}  // namespace ffmsr::cluster
