#include "shapegem/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "shapegem/errors.hpp"
#include "shapegem/parallel.hpp"
#include "json_codec.hpp"

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace shapegem {

namespace {

constexpr double kPiFloor = 1e-6;

void check_component_shape(const MixtureComponent& c, const VectorXd& s) {
    if (s.size() != c.mu.size()) {
        throw DimensionError("shape length " + std::to_string(s.size()) +
                             " does not match component dimension " +
                             std::to_string(c.mu.size()));
    }
}

// Log densities of every column of X under one component.
RowVectorXd log_density_batch(const MixtureComponent& c, const MatrixXd& X) {
    const auto ambient = static_cast<double>(c.mu.size());
    const double d = static_cast<double>(c.dim());
    const MatrixXd centered = X.colwise() - c.mu;
    const MatrixXd beta = c.psi.transpose() * centered; // d x N
    const RowVectorXd total_sq = centered.colwise().squaredNorm();
    const RowVectorXd beta_sq = beta.colwise().squaredNorm();
    const RowVectorXd rho_sq = (total_sq - beta_sq).cwiseMax(0.0);

    RowVectorXd quad =
        c.lambda.cwiseInverse().transpose() * beta.cwiseProduct(beta);
    quad += rho_sq / c.sigma2;

    const double log_det = c.lambda.array().log().sum() +
                           (ambient - d) * std::log(c.sigma2) +
                           ambient * std::log(2.0 * std::numbers::pi);
    return (-0.5 * (quad.array() + log_det)).matrix();
}

struct Evaluation {
    MatrixXd resp;  // K x N
    double loglik = 0.0;
};

Evaluation evaluate_all(const ShapeMixture& mix, const MatrixXd& X) {
    const int k = mix.k();
    const auto n = X.cols();
    MatrixXd logp(k, n);
    for (int c = 0; c < k; ++c) {
        logp.row(c) = log_density_batch(mix.components[c], X).array() +
                      std::log(mix.components[c].pi);
    }
    Evaluation out;
    out.resp.resize(k, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double peak = logp.col(j).maxCoeff();
        const VectorXd shifted = (logp.col(j).array() - peak).exp();
        const double total = shifted.sum();
        out.resp.col(j) = shifted / total;
        out.loglik += peak + std::log(total);
    }
    return out;
}

// Deterministic orthonormal completion: fills columns [have, want) of psi
// with canonical basis vectors orthogonalized against the existing columns.
void complete_basis(MatrixXd& psi, int have, int want) {
    const auto ambient = psi.rows();
    int col = have;
    for (Eigen::Index axis = 0; axis < ambient && col < want; ++axis) {
        VectorXd candidate = VectorXd::Zero(ambient);
        candidate[axis] = 1.0;
        candidate -= psi.leftCols(col) * (psi.leftCols(col).transpose() * candidate);
        const double norm = candidate.norm();
        if (norm > 0.5) {
            psi.col(col) = candidate / norm;
            ++col;
        }
    }
    if (col < want) {
        throw DegenerateComponent("cannot complete an orthonormal basis");
    }
}

int pick_dimension(const DimPolicy& policy, const VectorXd& eigenvalues,
                   int effective_rank, int ambient) {
    const int cap = std::min(std::max(1, effective_rank - 1), ambient - 1);
    if (policy.kind == DimPolicy::Kind::Fixed) {
        return std::clamp(policy.fixed_d, 1, cap);
    }
    const double total = eigenvalues.sum();
    if (!(total > 0.0)) {
        return 1;
    }
    double cumulative = 0.0;
    for (int j = 0; j < eigenvalues.size(); ++j) {
        cumulative += eigenvalues[j];
        if (cumulative >= policy.tau * total) {
            return std::clamp(j + 1, 1, cap);
        }
    }
    return cap;
}

MixtureComponent fit_component(const MatrixXd& X, const VectorXd& resp,
                               const DimPolicy& policy, double var_floor,
                               double degenerate_threshold) {
    const auto n = X.cols();
    const auto ambient = X.rows();

    const double weight = resp.sum();
    if (weight < degenerate_threshold) {
        throw DegenerateComponent(
            "component effective weight " + std::to_string(weight) +
            " fell below " + std::to_string(degenerate_threshold) +
            "; K is too large for this dataset");
    }

    MixtureComponent c;
    c.pi = weight / static_cast<double>(n);
    const VectorXd w = resp / weight;
    c.mu = X * w;

    MatrixXd scaled = X.colwise() - c.mu;
    scaled = scaled * w.array().sqrt().matrix().asDiagonal();

    VectorXd eigenvalues;  // descending, length min(n, ambient)
    MatrixXd vectors;      // columns matching eigenvalues (ambient rows)
    bool lifted_from_gram = false;
    MatrixXd gram_vectors;
    if (n < ambient) {
        const MatrixXd gram = scaled.transpose() * scaled;
        Eigen::SelfAdjointEigenSolver<MatrixXd> solver(gram);
        eigenvalues = solver.eigenvalues().reverse().cwiseMax(0.0);
        gram_vectors = solver.eigenvectors().rowwise().reverse();
        lifted_from_gram = true;
    } else {
        const MatrixXd cov = scaled * scaled.transpose();
        Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
        eigenvalues = solver.eigenvalues().reverse().cwiseMax(0.0);
        vectors = solver.eigenvectors().rowwise().reverse();
    }

    const double total_var = eigenvalues.sum();
    const double peak = eigenvalues.size() > 0 ? eigenvalues[0] : 0.0;
    const double rank_tol = peak * 1e-12;
    int effective_rank = 0;
    for (int j = 0; j < eigenvalues.size(); ++j) {
        if (eigenvalues[j] > rank_tol) {
            ++effective_rank;
        }
    }

    const int d = pick_dimension(policy, eigenvalues, effective_rank,
                                 static_cast<int>(ambient));

    c.lambda = eigenvalues.head(d).cwiseMax(var_floor);
    const double kept = eigenvalues.head(d).sum();
    const double tail = std::max(total_var - kept, 0.0) /
                        static_cast<double>(ambient - d);
    c.sigma2 = std::max(tail, var_floor);

    c.psi.resize(ambient, d);
    int usable = 0;
    for (int j = 0; j < d; ++j) {
        if (eigenvalues[j] <= rank_tol) {
            break;
        }
        if (lifted_from_gram) {
            c.psi.col(j) = scaled * gram_vectors.col(j) / std::sqrt(eigenvalues[j]);
        } else {
            c.psi.col(j) = vectors.col(j);
        }
        c.psi.col(j).normalize();
        ++usable;
    }
    if (usable < d) {
        complete_basis(c.psi, usable, d);
    }
    return c;
}

ShapeMixture m_step(const MatrixXd& X, const MatrixXd& resp, int m,
                    const DimPolicy& policy, double var_floor) {
    const int k = static_cast<int>(resp.rows());
    const double degenerate_threshold =
        static_cast<double>(k) * 1e-6 * static_cast<double>(X.cols());

    ShapeMixture mix;
    mix.m = m;
    mix.ambient_dim = static_cast<int>(X.rows());
    mix.components.resize(k);
    parallel_for(k, [&](std::int64_t c) {
        mix.components[c] = fit_component(X, resp.row(c).transpose(), policy,
                                          var_floor, degenerate_threshold);
    });

    double total_pi = 0.0;
    for (auto& c : mix.components) {
        c.pi = std::max(c.pi, kPiFloor);
        total_pi += c.pi;
    }
    for (auto& c : mix.components) {
        c.pi /= total_pi;
    }
    return mix;
}

std::vector<int> kmeans(const MatrixXd& X, int k, Rng& rng) {
    const auto n = X.cols();

    // k-means++ seeding.
    std::vector<int> center_index;
    center_index.push_back(rng.uniform_int(static_cast<int>(n)));
    VectorXd dist2 =
        (X.colwise() - X.col(center_index[0])).colwise().squaredNorm().transpose();
    while (static_cast<int>(center_index.size()) < k) {
        const double total = dist2.sum();
        int chosen = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double cumulative = 0.0;
            chosen = static_cast<int>(n) - 1;
            for (Eigen::Index j = 0; j < n; ++j) {
                cumulative += dist2[j];
                if (cumulative >= target) {
                    chosen = static_cast<int>(j);
                    break;
                }
            }
        } else {
            chosen = rng.uniform_int(static_cast<int>(n));
        }
        center_index.push_back(chosen);
        const VectorXd fresh =
            (X.colwise() - X.col(chosen)).colwise().squaredNorm().transpose();
        dist2 = dist2.cwiseMin(fresh);
    }

    MatrixXd centers(X.rows(), k);
    for (int c = 0; c < k; ++c) {
        centers.col(c) = X.col(center_index[c]);
    }

    std::vector<int> labels(n, 0);
    for (int iter = 0; iter < 50; ++iter) {
        bool changed = false;
        for (Eigen::Index j = 0; j < n; ++j) {
            int best = 0;
            double best_dist = (X.col(j) - centers.col(0)).squaredNorm();
            for (int c = 1; c < k; ++c) {
                const double dist = (X.col(j) - centers.col(c)).squaredNorm();
                if (dist < best_dist) {
                    best_dist = dist;
                    best = c;
                }
            }
            if (labels[j] != best) {
                labels[j] = best;
                changed = true;
            }
        }

        MatrixXd sums = MatrixXd::Zero(X.rows(), k);
        std::vector<int> counts(k, 0);
        for (Eigen::Index j = 0; j < n; ++j) {
            sums.col(labels[j]) += X.col(j);
            ++counts[labels[j]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Re-seed an empty cluster at the point farthest from its center.
                Eigen::Index farthest = 0;
                double far_dist = -1.0;
                for (Eigen::Index j = 0; j < n; ++j) {
                    const double dist =
                        (X.col(j) - centers.col(labels[j])).squaredNorm();
                    if (dist > far_dist) {
                        far_dist = dist;
                        farthest = j;
                    }
                }
                centers.col(c) = X.col(farthest);
                labels[farthest] = c;
                changed = true;
            } else {
                centers.col(c) = sums.col(c) / counts[c];
            }
        }
        if (!changed && iter > 0) {
            break;
        }
    }
    return labels;
}

double compute_var_floor(const MatrixXd& X) {
    const VectorXd mean = X.rowwise().mean();
    const double mean_sq_norm =
        (X.colwise() - mean).colwise().squaredNorm().mean();
    const double floor = 1e-8 * mean_sq_norm / static_cast<double>(X.rows());
    return floor > 0.0 ? floor : 1e-12;
}

} // namespace

FitResult fit_mixture(const ShapeDataset& data, const FitOptions& opts) {
    const MatrixXd& X = data.shapes;
    const auto n = X.cols();
    if (opts.k < 1) {
        throw DimensionError("k must be >= 1");
    }
    if (n < opts.k) {
        throw DimensionError("need at least k shapes to fit k components");
    }
    const double var_floor = compute_var_floor(X);

    ShapeMixture best;
    double best_ll = -std::numeric_limits<double>::infinity();
    const int restarts = std::max(1, opts.restarts);
    for (int restart = 0; restart < restarts; ++restart) {
        Rng rng(mix_seed(opts.seed, static_cast<std::uint64_t>(restart)));
        const std::vector<int> labels = kmeans(X, opts.k, rng);
        MatrixXd resp = MatrixXd::Zero(opts.k, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            resp(labels[j], j) = 1.0;
        }
        ShapeMixture candidate = m_step(X, resp, data.m, opts.dim_policy, var_floor);
        const double ll = evaluate_all(candidate, X).loglik;
        if (ll > best_ll) {
            best_ll = ll;
            best = std::move(candidate);
        }
    }

    FitResult result;
    result.mixture = std::move(best);
    Evaluation eval = evaluate_all(result.mixture, X);
    result.log_likelihood.push_back(eval.loglik);

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        result.mixture = m_step(X, eval.resp, data.m, opts.dim_policy, var_floor);
        eval = evaluate_all(result.mixture, X);
        const double previous = result.log_likelihood.back();
        result.log_likelihood.push_back(eval.loglik);
        const double gain = eval.loglik - previous;
        if (gain < opts.tol * std::max(1.0, std::abs(previous))) {
            break;
        }
    }
    return result;
}

double log_density_component(const MixtureComponent& c, const VectorXd& s) {
    check_component_shape(c, s);
    return log_density_batch(c, s)(0);
}

VectorXd responsibilities(const ShapeMixture& mix, const VectorXd& s) {
    if (s.size() != mix.ambient_dim) {
        throw DimensionError("shape length does not match mixture dimension");
    }
    const int k = mix.k();
    VectorXd logp(k);
    for (int c = 0; c < k; ++c) {
        logp[c] = std::log(mix.components[c].pi) +
                  log_density_component(mix.components[c], s);
    }
    const double peak = logp.maxCoeff();
    VectorXd r = (logp.array() - peak).exp();
    r /= r.sum();
    return r;
}

VectorXd project(const MixtureComponent& c, const VectorXd& s) {
    check_component_shape(c, s);
    return c.psi.transpose() * (s - c.mu);
}

VectorXd reconstruct(const MixtureComponent& c, const VectorXd& beta,
                     std::optional<double> clamp_sd) {
    if (beta.size() != c.dim()) {
        throw DimensionError("coefficient length does not match component dimension");
    }
    VectorXd clamped = beta;
    if (clamp_sd) {
        const VectorXd bound = *clamp_sd * c.lambda.array().sqrt();
        clamped = clamped.cwiseMax(-bound).cwiseMin(bound);
    }
    return c.mu + c.psi * clamped;
}

VectorXd sample_shape(const ShapeMixture& mix, Rng& rng) {
    const double u = rng.uniform();
    int chosen = mix.k() - 1;
    double cumulative = 0.0;
    for (int c = 0; c < mix.k(); ++c) {
        cumulative += mix.components[c].pi;
        if (u < cumulative) {
            chosen = c;
            break;
        }
    }
    const MixtureComponent& c = mix.components[chosen];

    VectorXd beta(c.dim());
    for (int j = 0; j < c.dim(); ++j) {
        beta[j] = std::sqrt(c.lambda[j]) * rng.normal();
    }
    VectorXd noise(c.ambient_dim());
    const double sigma = std::sqrt(c.sigma2);
    for (Eigen::Index i = 0; i < noise.size(); ++i) {
        noise[i] = sigma * rng.normal();
    }
    noise -= c.psi * (c.psi.transpose() * noise);
    return c.mu + c.psi * beta + noise;
}

double dataset_log_likelihood(const ShapeMixture& mix, const ShapeDataset& data) {
    if (data.ambient_dim() != mix.ambient_dim) {
        throw DimensionError("dataset dimension does not match mixture");
    }
    return evaluate_all(mix, data.shapes).loglik;
}

ShapeMixture scale_mixture(const ShapeMixture& mix, double factor) {
    ShapeMixture scaled = mix;
    const double var_scale = factor * factor;
    for (auto& c : scaled.components) {
        c.mu /= factor;
        c.lambda /= var_scale;
        c.sigma2 /= var_scale;
    }
    return scaled;
}

void save_mixture(const ShapeMixture& mix, const std::string& path) {
    json doc;
    doc["m"] = mix.m;
    doc["ambient_dim"] = mix.ambient_dim;
    json components = json::array();
    for (const auto& c : mix.components) {
        components.push_back({{"pi", c.pi},
                              {"mu", codec::vector_to_json(c.mu)},
                              {"psi", codec::matrix_to_json(c.psi)},
                              {"lambda", codec::vector_to_json(c.lambda)},
                              {"sigma2", c.sigma2},
                              {"d", c.dim()}});
    }
    doc["components"] = std::move(components);
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write mixture file: " + path);
    }
    out << doc.dump(2) << "\n";
}

ShapeMixture load_mixture(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open mixture file: " + path);
    }
    json doc;
    try {
        in >> doc;
        ShapeMixture mix;
        mix.m = doc.at("m").get<int>();
        mix.ambient_dim = doc.at("ambient_dim").get<int>();
        for (const auto& cj : doc.at("components")) {
            MixtureComponent c;
            c.pi = cj.at("pi").get<double>();
            c.mu = codec::vector_from_json(cj.at("mu"));
            c.psi = codec::matrix_from_json(cj.at("psi"));
            c.lambda = codec::vector_from_json(cj.at("lambda"));
            c.sigma2 = cj.at("sigma2").get<double>();
            if (cj.at("d").get<int>() != c.dim() || c.psi.cols() != c.dim() ||
                c.psi.rows() != mix.ambient_dim || c.mu.size() != mix.ambient_dim) {
                throw FormatError("inconsistent component dimensions in " + path);
            }
            mix.components.push_back(std::move(c));
        }
        return mix;
    } catch (const json::exception& e) {
        throw FormatError("bad mixture file " + path + ": " + e.what());
    }
}

} // namespace shapegem
