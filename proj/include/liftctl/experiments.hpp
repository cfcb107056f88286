#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "liftctl/common.hpp"
#include "liftctl/dictionary.hpp"
#include "liftctl/plant.hpp"

namespace liftctl {

enum class CollectionMode { kMultiExperiment, kSingleTrajectory };

std::string to_string(CollectionMode mode);
CollectionMode collection_mode_from_string(const std::string& s);

struct ExperimentConfig {
    int T = 7;
    int N = 2;
    Interval input_law{-0.5, 0.5};       // uniform excitation interval
    Box init_box = Box::cube(2, -0.5, 0.5);
    std::uint64_t rng_seed = 1;
    CollectionMode mode = CollectionMode::kMultiExperiment;
    double safety_bound = 1e6;           // experiment aborts when ||x||_inf exceeds this

    void validate() const;
};

// One experiment's input/output log. Multi-experiment records hold N+1 samples,
// single-trajectory records hold N+T.
struct ExperimentRecord {
    std::vector<double> u_samples;
    std::vector<double> y_samples;
};

struct RawDataset {
    std::vector<ExperimentRecord> records;
    ExperimentConfig provenance;

    int sample_count() const {
        return records.empty() ? 0 : static_cast<int>(records.front().u_samples.size());
    }
};

// The six dataset matrices, with Q0 rows following the dictionary ordering.
struct DataMatrices {
    Mat Y0, V0, Y1, V1;  // N x T
    Mat Q0;              // (S-2N) x T
    RowVec U0;           // 1 x T
    int N = 0, T = 0, S = 0;

    Mat stacked_W0() const;  // [Y0; V0; Q0], S x T
    Mat stacked_X1() const;  // [Y1; V1], 2N x T
    Mat stacked_full() const;  // [U0; Y0; V0; Q0], (S+1) x T
};

// Runs the offline experiments. Deterministic for a fixed seed: experiment j
// draws from mt19937_64 seeded with derive_stream_seed(rng_seed, j), the
// initial state first and then the input samples in time order.
RawDataset run_experiments(const PlantModel& model, const ExperimentConfig& cfg);

DataMatrices assemble_matrices(const RawDataset& raw, const Dictionary& dict);

// Max-norm residual of the one-step data identity under a known expansion.
double verify_data_identity(const GroundTruthExpansion& truth, const DataMatrices& dm);

// Diagnostic membership report for the dataset windows: inputs against U,
// outputs against the reachable window set via inversion.
struct Assumption3Report {
    struct Violation {
        int window_index;
        std::string kind;    // "input" | "output"
        std::string detail;
    };
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};
Assumption3Report check_assumption3(const PlantModel& model, const RawDataset& raw,
                                    const ObservabilityWindow& win);

// CSV persistence: one file per experiment with columns k,u,y plus a JSON
// manifest echoing the configuration.
void write_dataset_csv(const RawDataset& raw, const std::string& directory,
                       std::uint64_t config_hash);
RawDataset read_dataset_csv(const std::string& directory);
std::string dataset_manifest_json(const RawDataset& raw, const std::string& model_name,
                                  std::uint64_t config_hash);

std::string matrices_to_json(const DataMatrices& dm);
DataMatrices matrices_from_json(const std::string& text);

}  // namespace liftctl
