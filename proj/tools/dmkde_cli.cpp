#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dmkde/dataset.hpp"
#include "dmkde/density.hpp"
#include "dmkde/fourier.hpp"
#include "dmkde/pipeline.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// All numeric CSV output uses 12 significant digits.
std::string fmt12(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dmkde::IngestionError("cannot open config: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw dmkde::IngestionError(path + ": " + e.what());
    }
}

/// Apply `--set dotted.key=value` overrides; values parse as JSON literals
/// and fall back to plain strings.
void apply_overrides(json& config, const std::vector<std::string>& overrides) {
    for (const std::string& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw dmkde::ParameterError("--set expects key.path=value, got '" + item + "'");
        const std::string path = item.substr(0, eq);
        const std::string raw = item.substr(eq + 1);

        json* node = &config;
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot - start);
            if (key.empty()) throw dmkde::ParameterError("--set: empty key in '" + item + "'");
            if (dot == std::string::npos) {
                json value;
                try {
                    value = json::parse(raw);
                } catch (const json::exception&) {
                    value = raw;
                }
                (*node)[key] = value;
                break;
            }
            node = &(*node)[key];
            start = dot + 1;
        }
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

const json& require(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key))
        throw dmkde::ParameterError("config: missing required key '" + where + "'");
    return j.at(key);
}

void parse_data_section(const json& config, dmkde::ExperimentConfig& cfg) {
    const json& data = require(config, "data", "data");
    cfg.data_path = require(data, "path", "data.path").get<std::string>();
    cfg.label_column = require(data, "label_column", "data.label_column").get<std::string>();
    cfg.outlier_label = require(data, "outlier_label", "data.outlier_label").get<std::string>();
    cfg.normal_label = get_or<std::string>(data, "normal_label", "");
    cfg.standardize = get_or<bool>(data, "standardize", true);
}

void parse_split_section(const json& config, dmkde::SplitSpec& split) {
    if (!config.contains("split")) return;
    const json& s = config.at("split");
    split.train_frac = get_or<double>(s, "train_frac", split.train_frac);
    split.val_frac = get_or<double>(s, "val_frac", split.val_frac);
    split.test_frac = get_or<double>(s, "test_frac", split.test_frac);
    split.stratified = get_or<bool>(s, "stratified", split.stratified);
    split.seed = get_or<std::uint64_t>(s, "seed", split.seed);
}

void parse_embedding_section(const json& config, dmkde::ExperimentConfig& cfg) {
    const json& e = require(config, "embedding", "embedding");
    cfg.embedding = dmkde::embedding_from_string(
        get_or<std::string>(e, "kind", dmkde::to_string(cfg.embedding)));
    cfg.dim_features = get_or<Eigen::Index>(e, "dim_features", cfg.dim_features);
    cfg.gamma = get_or<double>(e, "gamma", cfg.gamma);
    cfg.gamma_s = get_or<double>(e, "gamma_s", cfg.gamma_s);
    cfg.embedding_seed = get_or<std::uint64_t>(e, "seed", cfg.embedding_seed);
    cfg.embedding_params_path = get_or<std::string>(e, "params_path", "");
    if (config.contains("aff")) {
        const json& a = config.at("aff");
        cfg.aff_epochs = get_or<int>(a, "epochs", cfg.aff_epochs);
        cfg.aff_learning_rate = get_or<double>(a, "learning_rate", cfg.aff_learning_rate);
        cfg.aff_batch_size = get_or<int>(a, "batch_size", cfg.aff_batch_size);
    }
}

void parse_estimator_section(const json& config, dmkde::ExperimentConfig& cfg) {
    if (!config.contains("estimator")) return;
    const json& e = config.at("estimator");
    cfg.backend =
        dmkde::backend_from_string(get_or<std::string>(e, "backend", dmkde::to_string(cfg.backend)));
    cfg.shots = get_or<std::int64_t>(e, "shots", cfg.shots);
    cfg.shot_seed = get_or<std::uint64_t>(e, "seed", cfg.shot_seed);
    cfg.threads = get_or<int>(e, "threads", cfg.threads);
}

dmkde::ExperimentConfig parse_experiment_config(const json& config) {
    dmkde::ExperimentConfig cfg;
    parse_data_section(config, cfg);
    parse_split_section(config, cfg.split);
    parse_embedding_section(config, cfg);
    parse_estimator_section(config, cfg);
    cfg.state = dmkde::state_from_string(get_or<std::string>(config, "state", "mixed"));
    if (config.contains("threshold"))
        cfg.outlier_rate = get_or<double>(config.at("threshold"), "outlier_rate", cfg.outlier_rate);
    cfg.repeats = get_or<int>(config, "repeats", cfg.repeats);
    return cfg;
}

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

json metrics_json(const dmkde::MetricSet& m) {
    return json{{"accuracy", m.accuracy}, {"f1_outlier", m.f1_outlier}, {"auc", m.auc}};
}

std::string table_row(const std::string& label, const std::string& method,
                      const dmkde::MetricSet& mean, const dmkde::MetricSet& sd) {
    std::string row = label + "\t" + method;
    row += "\t" + fmt4(mean.f1_outlier) + " +/- " + fmt4(sd.f1_outlier);
    row += "\t" + fmt4(mean.accuracy) + " +/- " + fmt4(sd.accuracy);
    row += "\t" + fmt4(mean.auc) + " +/- " + fmt4(sd.auc);
    return row;
}

// ---------------------------------------------------------------- train-aff

int cmd_train_aff(const json& config) {
    dmkde::ExperimentConfig base = parse_experiment_config(config);

    const dmkde::LabeledDataset data = dmkde::load_csv(base.data_path, base.label_column,
                                                       base.outlier_label, base.normal_label);
    std::cout << "loaded " << data.size() << " samples, " << data.dim() << " features, "
              << fmt4(100.0 * data.outlier_fraction()) << "% outliers\n";

    std::vector<Eigen::VectorXd> samples;
    if (config.contains("split")) {
        const dmkde::SplitResult parts = dmkde::split(data, base.split);
        samples = parts.train.samples;
    } else {
        samples = data.samples;
    }
    if (base.standardize) {
        const dmkde::ScalerParams scaler = dmkde::fit_scaler(samples);
        for (auto& x : samples) x = dmkde::apply_scaler(scaler, x);
    }

    dmkde::AffTrainConfig aff;
    aff.dim_features = base.dim_features;
    aff.gamma = base.gamma;
    aff.gamma_s = base.gamma_s;
    aff.epochs = base.aff_epochs;
    aff.learning_rate = base.aff_learning_rate;
    aff.batch_size = base.aff_batch_size;
    aff.seed = base.embedding_seed;

    const dmkde::AffTrainResult result = dmkde::train_aff(samples, aff);

    const json& out = require(config, "output", "output");
    const auto params_path = require(out, "params_path", "output.params_path").get<std::string>();
    const auto loss_path = require(out, "loss_path", "output.loss_path").get<std::string>();
    ensure_parent_dir(params_path);
    ensure_parent_dir(loss_path);
    dmkde::save_fourier_params(result.params, params_path);

    std::ofstream loss(loss_path);
    if (!loss) throw dmkde::IngestionError("cannot open for writing: " + loss_path);
    loss << "epoch,loss,best_so_far\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
        loss << e << "," << fmt12(result.epoch_loss[e]) << ","
             << fmt12(result.best_loss_so_far[e]) << "\n";

    std::cout << "initial loss " << fmt12(result.initial_loss) << "\n";
    std::cout << "best loss " << fmt12(result.best_loss) << " at epoch " << result.best_epoch
              << "\n";
    std::cout << "wrote " << params_path << " and " << loss_path << "\n";
    return 0;
}

// ----------------------------------------------------------------- detect

void write_detect_files(const fs::path& out_dir, const std::string& suffix, const json& config,
                        const dmkde::ExperimentConfig& cfg, const dmkde::ExperimentResult& result) {
    json report;
    report["config"] = config;
    report["state"] = dmkde::to_string(cfg.state);
    report["aggregate"] = {{"mean", metrics_json(result.mean)},
                           {"std", metrics_json(result.stddev)}};
    if (cfg.backend == dmkde::Backend::simulator_shots) report["shots"] = cfg.shots;
    json runs = json::array();
    for (const auto& run : result.runs)
        runs.push_back({{"threshold", run.threshold}, {"metrics", metrics_json(run.metrics)}});
    report["runs"] = runs;
    {
        std::ofstream out(out_dir / ("report" + suffix + ".json"));
        out << report.dump(2) << "\n";
    }

    std::ofstream csv(out_dir / ("samples" + suffix + ".csv"));
    const bool with_exact = cfg.backend == dmkde::Backend::simulator_shots;
    csv << "repeat,index,density,truth,prediction";
    if (with_exact) csv << ",density_exact,delta";
    csv << "\n";
    auto name = [](dmkde::Label l) { return l == dmkde::Label::outlier ? "outlier" : "normal"; };
    for (std::size_t r = 0; r < result.runs.size(); ++r) {
        const dmkde::DetectionReport& run = result.runs[r];
        for (Eigen::Index i = 0; i < run.densities_test.size(); ++i) {
            const auto ui = static_cast<std::size_t>(i);
            csv << r << "," << i << "," << fmt12(run.densities_test[i]) << ","
                << name(run.truth[ui]) << "," << name(run.predictions[ui]);
            if (with_exact) {
                const double exact = (*run.densities_test_exact)[i];
                csv << "," << fmt12(exact) << "," << fmt12(run.densities_test[i] - exact);
            }
            csv << "\n";
        }
    }
}

int cmd_detect(const json& config) {
    // "state" accepts a single value or a list; a list gives one table row
    // (and one report/samples pair) per state, sharing the same embedding.
    std::vector<std::string> states;
    if (config.contains("state") && config.at("state").is_array())
        states = config.at("state").get<std::vector<std::string>>();
    else
        states.push_back(get_or<std::string>(config, "state", "mixed"));
    if (states.empty()) throw dmkde::ParameterError("config: state list is empty");

    const std::string out_dir =
        config.contains("output") ? get_or<std::string>(config.at("output"), "dir", "out/detect")
                                  : "out/detect";
    fs::create_directories(out_dir);

    std::cout << "Size\tMethod\tF1 Score\tAccuracy\tAUC\n";
    for (const std::string& state : states) {
        json state_config = config;
        state_config["state"] = state;
        const dmkde::ExperimentConfig cfg = parse_experiment_config(state_config);
        const dmkde::ExperimentResult result = dmkde::run_experiment(cfg);

        const std::string suffix = states.size() == 1 ? "" : "_" + state;
        write_detect_files(out_dir, suffix, state_config, cfg, result);

        const std::string label =
            (cfg.embedding == dmkde::EmbeddingKind::rff ? "RFF:" : "AFF:") +
            std::to_string(cfg.dim_features);
        const std::string method = cfg.state == dmkde::StateKind::pure ? "Pure" : "Mixed";
        std::cout << table_row(label, method, result.mean, result.stddev) << "\n";
    }
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

// ------------------------------------------------------- density-estimate

int cmd_density_estimate(const json& config) {
    dmkde::DensityEstimateConfig base;
    if (config.contains("mixture")) {
        const json& m = config.at("mixture");
        base.mixture.means = get_or<std::vector<double>>(m, "means", base.mixture.means);
        base.mixture.sigmas = get_or<std::vector<double>>(m, "sigmas", base.mixture.sigmas);
        base.mixture.weights = get_or<std::vector<double>>(m, "weights", base.mixture.weights);
    }
    base.n_train = get_or<int>(config, "n_train", base.n_train);
    base.n_grid = get_or<int>(config, "n_grid", base.n_grid);
    if (config.contains("grid_range")) {
        const auto range = config.at("grid_range").get<std::vector<double>>();
        if (range.size() != 2) throw dmkde::ParameterError("config: grid_range wants [lo, hi]");
        base.grid_range = {range[0], range[1]};
    }
    base.dim_features = get_or<Eigen::Index>(config, "dim_features", base.dim_features);
    base.gamma = get_or<double>(config, "gamma", base.gamma);
    base.gamma_s = get_or<double>(config, "gamma_s", base.gamma);
    base.data_seed = get_or<std::uint64_t>(config, "data_seed", base.data_seed);
    base.embedding_seed = get_or<std::uint64_t>(config, "embedding_seed", base.embedding_seed);
    if (config.contains("aff")) {
        const json& a = config.at("aff");
        base.aff_epochs = get_or<int>(a, "epochs", base.aff_epochs);
        base.aff_learning_rate = get_or<double>(a, "learning_rate", base.aff_learning_rate);
        base.aff_batch_size = get_or<int>(a, "batch_size", base.aff_batch_size);
    }
    if (config.contains("estimator")) {
        const json& e = config.at("estimator");
        base.backend = dmkde::backend_from_string(
            get_or<std::string>(e, "backend", dmkde::to_string(base.backend)));
        base.shots = get_or<std::int64_t>(e, "shots", base.shots);
        base.shot_seed = get_or<std::uint64_t>(e, "seed", base.shot_seed);
        base.threads = get_or<int>(e, "threads", base.threads);
    }

    std::vector<std::string> embeddings =
        get_or<std::vector<std::string>>(config, "embeddings", {"rff", "aff"});
    if (embeddings.empty()) throw dmkde::ParameterError("config: embeddings list is empty");

    std::vector<std::pair<std::string, dmkde::DensityCurves>> curves;
    for (const std::string& name : embeddings) {
        dmkde::DensityEstimateConfig cfg = base;
        cfg.embedding = dmkde::embedding_from_string(name);
        curves.emplace_back(name, dmkde::run_density_estimation(cfg));
    }

    const std::string out_dir =
        config.contains("output") ? get_or<std::string>(config.at("output"), "dir", "out/density")
                                  : "out/density";
    fs::create_directories(out_dir);

    {
        std::ofstream csv(fs::path(out_dir) / "curves.csv");
        csv << "x";
        for (const auto& [name, c] : curves) csv << ",pure_" << name << ",mixed_" << name;
        csv << ",true_pdf\n";
        const auto& grid = curves.front().second.grid;
        for (Eigen::Index i = 0; i < grid.size(); ++i) {
            csv << fmt12(grid[i]);
            for (const auto& [name, c] : curves)
                csv << "," << fmt12(c.pure[i]) << "," << fmt12(c.mixed[i]);
            csv << "," << fmt12(curves.front().second.true_pdf[i]) << "\n";
        }
    }

    json summary;
    for (const auto& [name, c] : curves) {
        summary[name] = {{"l1_pure", c.l1_pure}, {"l1_mixed", c.l1_mixed}};
        std::cout << name << ": L1(pure) " << fmt4(c.l1_pure) << "  L1(mixed) "
                  << fmt4(c.l1_mixed) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "summary.json");
        out << summary.dump(2) << "\n";
    }
    std::cout << "curves written to " << out_dir << "\n";
    return 0;
}

// ------------------------------------------------------------------ sweep

int cmd_sweep(const json& config) {
    const json& grid = require(config, "grid", "grid");
    const auto embeddings =
        require(grid, "embeddings", "grid.embeddings").get<std::vector<std::string>>();
    const auto dims = require(grid, "dims", "grid.dims").get<std::vector<Eigen::Index>>();
    const auto states = require(grid, "states", "grid.states").get<std::vector<std::string>>();
    const auto gammas = require(grid, "gammas", "grid.gammas").get<std::vector<double>>();
    if (embeddings.empty() || dims.empty() || states.empty() || gammas.empty())
        throw dmkde::ParameterError("config: sweep grid has an empty axis");

    const std::string csv_path =
        config.contains("output")
            ? get_or<std::string>(config.at("output"), "csv_path", "out/sweep.csv")
            : "out/sweep.csv";
    ensure_parent_dir(csv_path);
    std::ofstream csv(csv_path);
    if (!csv) throw dmkde::IngestionError("cannot open for writing: " + csv_path);
    csv << "embedding,dim_features,state,gamma,status,f1_mean,f1_std,accuracy_mean,accuracy_std,"
           "auc_mean,auc_std,message\n";

    int ok_rows = 0, failed_rows = 0;
    for (const std::string& emb : embeddings) {
        for (const Eigen::Index d : dims) {
            for (const std::string& state : states) {
                for (const double gamma : gammas) {
                    json row_config = config;
                    row_config["embedding"]["kind"] = emb;
                    row_config["embedding"]["dim_features"] = d;
                    row_config["embedding"]["gamma"] = gamma;
                    row_config["state"] = state;
                    csv << emb << "," << d << "," << state << "," << fmt12(gamma) << ",";
                    try {
                        const dmkde::ExperimentConfig cfg = parse_experiment_config(row_config);
                        const dmkde::ExperimentResult r = dmkde::run_experiment(cfg);
                        csv << "ok," << fmt12(r.mean.f1_outlier) << ","
                            << fmt12(r.stddev.f1_outlier) << "," << fmt12(r.mean.accuracy) << ","
                            << fmt12(r.stddev.accuracy) << "," << fmt12(r.mean.auc) << ","
                            << fmt12(r.stddev.auc) << ",\n";
                        ++ok_rows;
                    } catch (const std::exception& e) {
                        std::string message = e.what();
                        for (char& c : message)
                            if (c == ',' || c == '\n') c = ';';
                        csv << "error,,,,,,," << message << "\n";
                        ++failed_rows;
                    }
                }
            }
        }
    }
    std::cout << "sweep: " << ok_rows << " ok, " << failed_rows << " failed, written to "
              << csv_path << "\n";
    return ok_rows > 0 ? 0 : 1;
}

constexpr const char* kDetectKeys =
    "Config keys: data.path data.label_column data.outlier_label [data.normal_label] "
    "[data.standardize] [split.train_frac split.val_frac split.test_frac split.stratified "
    "split.seed] embedding.kind embedding.dim_features embedding.gamma [embedding.gamma_s] "
    "[embedding.seed] [embedding.params_path] [aff.epochs aff.learning_rate aff.batch_size] [state] "
    "[estimator.backend estimator.shots estimator.seed estimator.threads] "
    "[threshold.outlier_rate] [repeats] [output.dir]";

constexpr const char* kTrainAffKeys =
    "Config keys: data.* as for detect; [split.*] (train partition used when present); "
    "embedding.dim_features embedding.gamma embedding.gamma_s [embedding.seed]; "
    "[aff.epochs aff.learning_rate aff.batch_size]; output.params_path output.loss_path";

constexpr const char* kDensityKeys =
    "Config keys: [mixture.means mixture.sigmas mixture.weights] [n_train] [n_grid] "
    "[grid_range] [embeddings] [dim_features] [gamma] [gamma_s] [data_seed] [embedding_seed] "
    "[aff.*] [estimator.*] [output.dir]";

constexpr const char* kSweepKeys =
    "Config keys: grid.embeddings grid.dims grid.states grid.gammas plus every detect key; "
    "[output.csv_path]";

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel density estimation and anomaly detection with Fourier-feature "
                 "density matrices and a statevector circuit simulator"};
    app.require_subcommand(1);

    struct Args {
        std::string config_path;
        std::vector<std::string> overrides;
    };
    Args train_args, detect_args, density_args, sweep_args;

    auto add_common = [](CLI::App* sub, Args& args, const char* keys) {
        sub->add_option("-c,--config", args.config_path, "JSON config file")->required();
        sub->add_option("--set", args.overrides,
                        "Override a config key by dotted path, e.g. --set embedding.gamma=0.5");
        sub->footer(keys);
    };

    CLI::App* train = app.add_subcommand(
        "train-aff", "Train adaptive Fourier features; writes a params file and a loss CSV");
    add_common(train, train_args, kTrainAffKeys);

    CLI::App* detect = app.add_subcommand(
        "detect", "Run the anomaly-detection experiment; writes report.json and samples.csv");
    add_common(detect, detect_args, kDetectKeys);

    CLI::App* density = app.add_subcommand(
        "density-estimate", "1D density estimation on a Gaussian mixture; writes curves.csv");
    add_common(density, density_args, kDensityKeys);

    CLI::App* sweep = app.add_subcommand(
        "sweep", "Run a grid of (embedding, dim, state, gamma) experiments; writes one CSV row "
                 "per configuration");
    add_common(sweep, sweep_args, kSweepKeys);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            json config = load_config(train_args.config_path);
            apply_overrides(config, train_args.overrides);
            return cmd_train_aff(config);
        }
        if (detect->parsed()) {
            json config = load_config(detect_args.config_path);
            apply_overrides(config, detect_args.overrides);
            return cmd_detect(config);
        }
        if (density->parsed()) {
            json config = load_config(density_args.config_path);
            apply_overrides(config, density_args.overrides);
            return cmd_density_estimate(config);
        }
        if (sweep->parsed()) {
            json config = load_config(sweep_args.config_path);
            apply_overrides(config, sweep_args.overrides);
            return cmd_sweep(config);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
