#include "dmkde/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "seed_util.hpp"

namespace dmkde {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream stream(line);
    while (std::getline(stream, cell, delimiter)) cells.push_back(cell);
    if (!line.empty() && line.back() == delimiter) cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
    const std::string text = trim(raw);
    const char* first = text.data();
    const char* last = first + text.size();
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw IngestionError("row " + std::to_string(row) + ", column '" + column +
                             "': cannot parse '" + text + "' as a number");
    return value;
}

}  // namespace

std::size_t LabeledDataset::outlier_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::outlier));
}

double LabeledDataset::outlier_fraction() const {
    return size() == 0 ? 0.0 : static_cast<double>(outlier_count()) / static_cast<double>(size());
}

LabeledDataset load_csv(const std::string& path, const std::string& label_column,
                        const std::string& outlier_label, const std::string& normal_label,
                        char delimiter) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open: " + path);

    std::string line;
    if (!std::getline(in, line)) throw IngestionError(path + ": empty file");
    const std::vector<std::string> header = split_line(trim(line), delimiter);

    Eigen::Index label_index = -1;
    std::vector<std::string> feature_names;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name = trim(header[c]);
        if (name == label_column)
            label_index = static_cast<Eigen::Index>(c);
        else
            feature_names.push_back(name);
    }
    if (label_index < 0)
        throw IngestionError(path + ": label column '" + label_column + "' not found");
    const Eigen::Index dim = static_cast<Eigen::Index>(header.size()) - 1;
    if (dim < 1) throw IngestionError(path + ": no feature columns");

    LabeledDataset data;
    data.feature_names = feature_names;
    std::size_t row = 1;  // header is row 1
    while (std::getline(in, line)) {
        ++row;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const std::vector<std::string> cells = split_line(stripped, delimiter);
        if (static_cast<Eigen::Index>(cells.size()) != dim + 1)
            throw IngestionError("row " + std::to_string(row) + ": expected " +
                                 std::to_string(dim + 1) + " cells, got " +
                                 std::to_string(cells.size()));

        Eigen::VectorXd x(dim);
        Eigen::Index k = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (static_cast<Eigen::Index>(c) == label_index) continue;
            x[k] = parse_cell(cells[c], row, trim(header[c]));
            ++k;
        }
        const std::string label = trim(cells[static_cast<std::size_t>(label_index)]);
        if (label == outlier_label) {
            data.labels.push_back(Label::outlier);
        } else if (normal_label.empty() || label == normal_label) {
            data.labels.push_back(Label::normal);
        } else {
            throw IngestionError("row " + std::to_string(row) + ", column '" + label_column +
                                 "': unknown label '" + label + "'");
        }
        data.samples.push_back(std::move(x));
    }
    if (data.samples.empty()) throw IngestionError(path + ": no data rows");
    return data;
}

void save_csv(const LabeledDataset& data, const std::string& path,
              const std::string& label_column, const std::string& outlier_label,
              const std::string& normal_label, char delimiter) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot open for writing: " + path);
    out << std::setprecision(17);

    const Eigen::Index dim = data.dim();
    for (Eigen::Index j = 0; j < dim; ++j) {
        const std::string name = j < static_cast<Eigen::Index>(data.feature_names.size())
                                     ? data.feature_names[static_cast<std::size_t>(j)]
                                     : "x" + std::to_string(j);
        out << name << delimiter;
    }
    out << label_column << "\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) out << data.samples[i][j] << delimiter;
        out << (data.labels[i] == Label::outlier ? outlier_label : normal_label) << "\n";
    }
    if (!out) throw IngestionError("write failed: " + path);
}

ScalerParams fit_scaler(const std::vector<Eigen::VectorXd>& samples) {
    if (samples.size() < 2) throw ParameterError("fit_scaler: need at least 2 samples");
    const Eigen::Index dim = samples.front().size();

    ScalerParams scaler;
    scaler.mean = Eigen::VectorXd::Zero(dim);
    for (const auto& x : samples) scaler.mean += x;
    scaler.mean /= static_cast<double>(samples.size());

    Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
    for (const auto& x : samples) var += (x - scaler.mean).cwiseAbs2();
    var /= static_cast<double>(samples.size());

    scaler.scale.resize(dim);
    for (Eigen::Index j = 0; j < dim; ++j)
        scaler.scale[j] = var[j] > 0.0 ? std::sqrt(var[j]) : 1.0;
    return scaler;
}

Eigen::VectorXd apply_scaler(const ScalerParams& scaler, const Eigen::VectorXd& x) {
    if (x.size() != scaler.mean.size()) throw ParameterError("apply_scaler: dimension mismatch");
    return (x - scaler.mean).cwiseQuotient(scaler.scale);
}

LabeledDataset apply_scaler(const ScalerParams& scaler, const LabeledDataset& data) {
    LabeledDataset out;
    out.labels = data.labels;
    out.feature_names = data.feature_names;
    out.samples.reserve(data.size());
    for (const auto& x : data.samples) out.samples.push_back(apply_scaler(scaler, x));
    return out;
}

namespace {

void append_sample(LabeledDataset& part, const LabeledDataset& data, std::size_t i) {
    part.samples.push_back(data.samples[i]);
    part.labels.push_back(data.labels[i]);
}

}  // namespace

SplitResult split(const LabeledDataset& data, const SplitSpec& spec) {
    if (!(spec.train_frac > 0.0) || !(spec.val_frac > 0.0) || !(spec.test_frac > 0.0))
        throw ParameterError("split: fractions must be positive");
    if (std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9)
        throw ParameterError("split: fractions must sum to 1");
    if (data.size() < 3) throw ParameterError("split: dataset too small");

    std::mt19937_64 rng(spec.seed);
    SplitResult result;
    result.train.feature_names = data.feature_names;
    result.val.feature_names = data.feature_names;
    result.test.feature_names = data.feature_names;

    auto cut = [&](std::vector<std::size_t>& indices) {
        std::shuffle(indices.begin(), indices.end(), rng);
        const auto n = static_cast<double>(indices.size());
        const auto c1 = static_cast<std::size_t>(std::floor(spec.train_frac * n));
        const auto c2 =
            static_cast<std::size_t>(std::floor((spec.train_frac + spec.val_frac) * n));
        if (spec.stratified && (c1 < 1 || c2 - c1 < 1 || indices.size() - c2 < 1))
            throw ParameterError("split: stratification infeasible, a partition gets no sample "
                                 "of some class");
        for (std::size_t k = 0; k < indices.size(); ++k) {
            LabeledDataset& target =
                k < c1 ? result.train : (k < c2 ? result.val : result.test);
            append_sample(target, data, indices[k]);
        }
    };

    if (spec.stratified) {
        std::vector<std::size_t> normals, outliers;
        for (std::size_t i = 0; i < data.size(); ++i)
            (data.labels[i] == Label::outlier ? outliers : normals).push_back(i);
        if (!normals.empty()) cut(normals);
        if (!outliers.empty()) cut(outliers);
    } else {
        std::vector<std::size_t> all(data.size());
        std::iota(all.begin(), all.end(), 0);
        cut(all);
    }
    return result;
}

double mixture_pdf(const GaussianMixture1D& mix, double x) {
    double acc = 0.0;
    for (std::size_t k = 0; k < mix.means.size(); ++k) {
        const double z = (x - mix.means[k]) / mix.sigmas[k];
        acc += mix.weights[k] * std::exp(-0.5 * z * z) /
               (mix.sigmas[k] * std::sqrt(2.0 * std::numbers::pi));
    }
    return acc;
}

std::vector<Eigen::VectorXd> sample_mixture_1d(const GaussianMixture1D& mix, int n,
                                               std::uint64_t seed) {
    if (n < 1) throw ParameterError("sample_mixture_1d: n must be positive");
    if (mix.means.size() != mix.sigmas.size() || mix.means.size() != mix.weights.size() ||
        mix.means.empty())
        throw ParameterError("sample_mixture_1d: inconsistent mixture spec");
    double total = 0.0;
    for (const double w : mix.weights) {
        if (!(w >= 0.0)) throw ParameterError("sample_mixture_1d: negative weight");
        total += w;
    }
    if (!(total > 0.0)) throw ParameterError("sample_mixture_1d: zero total weight");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<Eigen::VectorXd> xs;
    xs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double u = uniform(rng) * total;
        std::size_t k = 0;
        double acc = mix.weights[0];
        while (k + 1 < mix.weights.size() && u > acc) acc += mix.weights[++k];
        Eigen::VectorXd x(1);
        x[0] = mix.means[k] + mix.sigmas[k] * normal(rng);
        xs.push_back(std::move(x));
    }
    return xs;
}

std::pair<double, double> mixture_support(const GaussianMixture1D& mix) {
    const double lo = *std::min_element(mix.means.begin(), mix.means.end());
    const double hi = *std::max_element(mix.means.begin(), mix.means.end());
    const double sigma = *std::max_element(mix.sigmas.begin(), mix.sigmas.end());
    return {lo - 3.0 * sigma, hi + 3.0 * sigma};
}

LabeledDataset make_anomaly_benchmark(int n_samples, int n_features, double outlier_fraction,
                                      std::uint64_t seed) {
    if (n_samples < 2 || n_features < 1)
        throw ParameterError("make_anomaly_benchmark: bad shape");
    if (!(outlier_fraction > 0.0) || !(outlier_fraction < 1.0))
        throw ParameterError("make_anomaly_benchmark: outlier fraction must be in (0,1)");

    const int n_outliers = std::max(1, static_cast<int>(std::lround(outlier_fraction * n_samples)));
    const int n_inliers = n_samples - n_outliers;
    const Eigen::Index d = n_features;

    std::mt19937_64 rng(detail::mix_seed(seed, 0xbe7c49));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    // Inliers live near a shared low-dimensional subspace: three clusters in a
    // latent space of dimension L, mapped up through an orthonormal basis,
    // plus small ambient noise.
    const Eigen::Index latent = std::min<Eigen::Index>(3, d);
    Eigen::MatrixXd basis(d, latent);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index r = 0; r < latent; ++r) basis(j, r) = normal(rng);
    for (Eigen::Index c = 0; c < latent; ++c) {
        for (Eigen::Index p = 0; p < c; ++p)
            basis.col(c) -= basis.col(p).dot(basis.col(c)) * basis.col(p);
        basis.col(c).normalize();
    }

    const int clusters = 3;
    std::vector<Eigen::VectorXd> centers, spreads;
    for (int k = 0; k < clusters; ++k) {
        Eigen::VectorXd c(latent), s(latent);
        for (Eigen::Index r = 0; r < latent; ++r) {
            c[r] = 2.0 * normal(rng);
            s[r] = 0.7 + 0.8 * uniform(rng);
        }
        centers.push_back(c);
        spreads.push_back(s);
    }
    const double cluster_weights[clusters] = {0.5, 0.3, 0.2};

    auto pick_cluster = [&]() {
        const double u = uniform(rng);
        return u < cluster_weights[0] ? 0 : (u < cluster_weights[0] + cluster_weights[1] ? 1 : 2);
    };
    auto to_ambient = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd x = basis * z;
        for (Eigen::Index j = 0; j < d; ++j) x[j] += 0.2 * normal(rng);
        return x;
    };

    std::vector<Eigen::VectorXd> samples;
    std::vector<Label> labels;
    samples.reserve(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_inliers; ++i) {
        const auto k = static_cast<std::size_t>(pick_cluster());
        Eigen::VectorXd z(latent);
        for (Eigen::Index r = 0; r < latent; ++r)
            z[r] = centers[k][r] + spreads[k][r] * normal(rng);
        samples.push_back(to_ambient(z));
        labels.push_back(Label::normal);
    }

    // Outliers are either radial shells around a cluster or sparse latent
    // corruptions, rejection-sampled until they sit in a low-density region
    // with respect to every cluster.
    auto min_normalized_dist = [&](const Eigen::VectorXd& z) {
        double best = std::numeric_limits<double>::max();
        for (int k = 0; k < clusters; ++k)
            best = std::min(best, ((z - centers[static_cast<std::size_t>(k)])
                                       .cwiseQuotient(spreads[static_cast<std::size_t>(k)]))
                                      .norm());
        return best;
    };
    const double r_min = 1.9 * std::sqrt(static_cast<double>(latent));
    for (int i = 0; i < n_outliers; ++i) {
        Eigen::VectorXd best_z;
        double best_dist = -1.0;
        for (int attempt = 0; attempt < 64; ++attempt) {
            const auto k = static_cast<std::size_t>(pick_cluster());
            Eigen::VectorXd z(latent);
            for (Eigen::Index r = 0; r < latent; ++r) z[r] = spreads[k][r] * normal(rng);
            if (uniform(rng) < 0.7) {
                const double alpha = 2.0 + uniform(rng);
                const double target = alpha * std::sqrt(static_cast<double>(latent));
                Eigen::VectorXd dir = z;
                if (dir.norm() < 1e-9) dir.setOnes();
                z = centers[k] + (target / dir.norm()) * dir.cwiseProduct(spreads[k]);
            } else {
                z += centers[k];
                const auto n_corrupt = 1 + static_cast<Eigen::Index>(rng() % 2);
                for (Eigen::Index c = 0; c < n_corrupt; ++c) {
                    const auto r = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(latent));
                    const double magnitude = 4.5 + 2.5 * uniform(rng);
                    z[r] += (uniform(rng) < 0.5 ? -1.0 : 1.0) * magnitude * spreads[k][r];
                }
            }
            const double dist = min_normalized_dist(z);
            if (dist > best_dist) {
                best_dist = dist;
                best_z = z;
            }
            if (dist >= r_min) break;
        }
        samples.push_back(to_ambient(best_z));
        labels.push_back(Label::outlier);
    }

    // per-feature affine distortion so raw columns get wildly different scales
    Eigen::VectorXd col_scale(d), col_shift(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        col_scale[j] = std::pow(10.0, -1.0 + 3.0 * uniform(rng));
        col_shift[j] = -50.0 + 100.0 * uniform(rng);
    }
    for (auto& x : samples) x = x.cwiseProduct(col_scale) + col_shift;

    std::vector<std::size_t> order(static_cast<std::size_t>(n_samples));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    LabeledDataset data;
    data.samples.reserve(static_cast<std::size_t>(n_samples));
    for (const std::size_t i : order) {
        data.samples.push_back(samples[i]);
        data.labels.push_back(labels[i]);
    }
    for (Eigen::Index j = 0; j < d; ++j) data.feature_names.push_back("attr_" + std::to_string(j));
    return data;
}

}  // namespace dmkde
