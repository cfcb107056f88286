#pragma once

#include <optional>
#include <string>
#include <vector>

#include "liftctl/controller.hpp"
#include "liftctl/dictionary.hpp"
#include "liftctl/experiments.hpp"
#include "liftctl/plant.hpp"
#include "liftctl/roa.hpp"
#include "liftctl/synthesis.hpp"

namespace liftctl {

struct PipelineConfig {
    std::string plant_name = "pendulum";
    PendulumParams pendulum;
    std::string dictionary_id = "pendulum";
    ExperimentConfig experiments;

    double sdp_epsilon = 1e-6;
    SolverHandle solver;
    int reseed_attempts = 5;

    ConvergenceTest test;
    Vec x0;
    std::vector<double> warmup;  // empty means all zeros
    double overflow_bound = 1e9;
    double divergence_norm = 1e3;

    GridSpec roa_grid;
    GammaSearchSpec gamma_search;

    std::string output_dir = "out";

    PipelineConfig();
    void validate() const;
    std::string canonical_json() const;
    std::uint64_t hash() const { return fnv1a_hash(canonical_json()); }
};

PipelineConfig pipeline_config_from_json(const std::string& text);
PipelineConfig load_pipeline_config(const std::string& path);

PlantModel resolve_plant(const PipelineConfig& cfg);
Dictionary resolve_dictionary(const PipelineConfig& cfg);

struct SynthesisAttempt {
    std::uint64_t seed = 0;
    std::string outcome;
};

struct PipelineOutcome {
    RawDataset raw;
    DataMatrices dm;
    SynthesisResult synthesis;
    LyapunovCertificate certificate;
    std::uint64_t seed_used = 0;
    std::vector<SynthesisAttempt> attempts;
};

class SynthesisExhausted : public std::runtime_error {
public:
    explicit SynthesisExhausted(const std::string& what, std::vector<SynthesisAttempt> log)
        : std::runtime_error(what), attempts(std::move(log)) {}
    std::vector<SynthesisAttempt> attempts;
};

// collect: run the experiments and write CSVs plus a manifest.
RawDataset cmd_collect(const PipelineConfig& cfg, bool write_files = true);

// synthesize: data -> SDP -> gain, re-collecting with fresh seeds on
// infeasibility. Throws SynthesisExhausted when every attempt fails.
PipelineOutcome cmd_synthesize(const PipelineConfig& cfg, const RawDataset* dataset = nullptr,
                               bool require_convergence_check = false);

ClosedLoopTrace cmd_simulate(const PipelineConfig& cfg, const SynthesisResult& result,
                             const Vec& x0, bool write_files = true);

struct RoaOutputs {
    GammaSearchResult gamma;
    RoaGridResult grid;
};

RoaOutputs cmd_roa(const PipelineConfig& cfg, const SynthesisResult& result,
                   bool write_files = true);

// Full chain: collect, synthesize, certify, simulate from cfg.x0; a seed
// whose controller fails the convergence test counts as a failed attempt and
// triggers a re-seed like an infeasibility.
PipelineOutcome run_pipeline(const PipelineConfig& cfg, bool write_files = true);

std::vector<double> effective_warmup(const PipelineConfig& cfg);

}  // namespace liftctl
