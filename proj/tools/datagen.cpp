// Writes the synthetic anomaly benchmark to CSV so the detect/sweep commands
// have a reproducible labeled dataset to run on.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "dmkde/dataset.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate the synthetic labeled anomaly benchmark CSV"};
    std::string out_path = "data/benchmark.csv";
    int samples = 1831;
    int features = 21;
    double outlier_fraction = 0.096;
    std::uint64_t seed = 42;
    std::string label_column = "class";
    std::string outlier_label = "pathologic";
    std::string normal_label = "normal";

    app.add_option("-o,--out", out_path, "Output CSV path")->capture_default_str();
    app.add_option("-n,--samples", samples, "Number of samples")->capture_default_str();
    app.add_option("-d,--features", features, "Number of feature columns")->capture_default_str();
    app.add_option("--outlier-fraction", outlier_fraction, "Fraction of outlier rows")
        ->capture_default_str();
    app.add_option("--seed", seed, "Generator seed")->capture_default_str();
    app.add_option("--label-column", label_column, "Label column name")->capture_default_str();
    app.add_option("--outlier-label", outlier_label, "Label value for outliers")
        ->capture_default_str();
    app.add_option("--normal-label", normal_label, "Label value for normal rows")
        ->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        const dmkde::LabeledDataset data =
            dmkde::make_anomaly_benchmark(samples, features, outlier_fraction, seed);
        const auto parent = std::filesystem::path(out_path).parent_path();
        if (!parent.empty()) std::filesystem::create_directories(parent);
        dmkde::save_csv(data, out_path, label_column, outlier_label, normal_label);
        std::cout << "wrote " << data.size() << " rows (" << data.outlier_count()
                  << " outliers) to " << out_path << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
