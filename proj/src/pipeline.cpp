#include "liftctl/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "liftctl/jsonio.hpp"

namespace liftctl {

namespace fs = std::filesystem;

PipelineConfig::PipelineConfig() {
    experiments.T = 7;
    experiments.N = 2;
    experiments.input_law = Interval{-0.5, 0.5};
    experiments.init_box = Box::cube(2, -0.5, 0.5);
    experiments.rng_seed = 1;
    experiments.mode = CollectionMode::kMultiExperiment;

    x0 = Vec::Zero(2);
    x0(0) = 0.1;

    roa_grid.axes = {GridAxis{-1.0, 1.0, 41}, GridAxis{-1.0, 1.0, 41}};
}

void PipelineConfig::validate() const {
    if (plant_name.empty()) throw ValidationError("plant name must not be empty");
    if (plant_name == "pendulum") pendulum.validate();
    experiments.validate();
    if (!(sdp_epsilon > 0.0)) throw ValidationError("sdp epsilon must be positive");
    solver.validate();
    if (reseed_attempts < 0) throw ValidationError("reseed attempt count must be nonnegative");
    test.validate();
    if (!warmup.empty() && static_cast<int>(warmup.size()) != experiments.N) {
        throw ValidationError("warmup sequence must have exactly N entries");
    }
    if (!(overflow_bound > 0.0) || !(divergence_norm > 0.0)) {
        throw ValidationError("simulation bounds must be positive");
    }
    roa_grid.validate();
    gamma_search.validate();
    if (output_dir.empty()) throw ValidationError("output directory must not be empty");
}

std::string PipelineConfig::canonical_json() const {
    nlohmann::json j;
    j["plant"] = {{"name", plant_name},
                  {"params",
                   {{"Ts", pendulum.Ts},
                    {"m", pendulum.m},
                    {"ell", pendulum.ell},
                    {"g", pendulum.g},
                    {"mu", pendulum.mu}}}};
    j["dictionary"] = dictionary_id;
    j["N"] = experiments.N;
    j["T"] = experiments.T;
    j["seed"] = experiments.rng_seed;
    j["mode"] = to_string(experiments.mode);
    j["input_law"] = {{"low", experiments.input_law.lo}, {"high", experiments.input_law.hi}};
    nlohmann::json box = nlohmann::json::array();
    for (const auto& iv : experiments.init_box.axes) box.push_back({iv.lo, iv.hi});
    j["init_box"] = box;
    j["safety_bound"] = experiments.safety_bound;
    j["sdp"] = {{"epsilon", sdp_epsilon},
                {"feas_tol", solver.feas_tol},
                {"gap_tol", solver.gap_tol},
                {"max_iters", solver.max_iters},
                {"backend", solver.backend},
                {"reseed_attempts", reseed_attempts}};
    j["simulation"] = {{"horizon", test.horizon},
                       {"tail_begin", test.tail_begin},
                       {"tail_end", test.tail_end},
                       {"threshold", test.threshold},
                       {"overflow_bound", overflow_bound},
                       {"divergence_norm", divergence_norm},
                       {"x0", vector_to_json(x0)},
                       {"warmup", warmup}};
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& axis : roa_grid.axes) grid.push_back({axis.lo, axis.hi, axis.count});
    j["roa"] = {{"grid", grid},
                {"gamma_hi", gamma_search.gamma_hi},
                {"gamma_min", gamma_search.gamma_min},
                {"rel_tol", gamma_search.rel_tol},
                {"level_samples", gamma_search.level_samples},
                {"interior_samples", gamma_search.interior_samples},
                {"origin_exclusion", gamma_search.origin_exclusion},
                {"search_seed", gamma_search.seed}};
    j["output_dir"] = output_dir;
    return j.dump();
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& err) {
        throw ValidationError(std::string("config is not valid JSON: ") + err.what());
    }
    PipelineConfig cfg;
    try {
        if (j.contains("plant")) {
            const auto& plant = j.at("plant");
            if (plant.contains("name")) cfg.plant_name = plant.at("name").get<std::string>();
            if (plant.contains("params")) {
                const auto& params = plant.at("params");
                if (params.contains("Ts")) cfg.pendulum.Ts = params.at("Ts").get<double>();
                if (params.contains("m")) cfg.pendulum.m = params.at("m").get<double>();
                if (params.contains("ell")) cfg.pendulum.ell = params.at("ell").get<double>();
                if (params.contains("g")) cfg.pendulum.g = params.at("g").get<double>();
                if (params.contains("mu")) cfg.pendulum.mu = params.at("mu").get<double>();
            }
        }
        if (j.contains("dictionary")) cfg.dictionary_id = j.at("dictionary").get<std::string>();
        if (j.contains("N")) cfg.experiments.N = j.at("N").get<int>();
        if (j.contains("T")) cfg.experiments.T = j.at("T").get<int>();
        if (j.contains("seed")) cfg.experiments.rng_seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("mode")) {
            cfg.experiments.mode = collection_mode_from_string(j.at("mode").get<std::string>());
        }
        if (j.contains("input_law")) {
            cfg.experiments.input_law = Interval{j.at("input_law").at("low").get<double>(),
                                                 j.at("input_law").at("high").get<double>()};
        }
        if (j.contains("init_box")) {
            cfg.experiments.init_box.axes.clear();
            for (const auto& iv : j.at("init_box")) {
                cfg.experiments.init_box.axes.push_back(
                    Interval{iv.at(0).get<double>(), iv.at(1).get<double>()});
            }
        }
        if (j.contains("safety_bound")) {
            cfg.experiments.safety_bound = j.at("safety_bound").get<double>();
        }
        if (j.contains("sdp")) {
            const auto& sdp = j.at("sdp");
            if (sdp.contains("epsilon")) cfg.sdp_epsilon = sdp.at("epsilon").get<double>();
            if (sdp.contains("feas_tol")) cfg.solver.feas_tol = sdp.at("feas_tol").get<double>();
            if (sdp.contains("gap_tol")) cfg.solver.gap_tol = sdp.at("gap_tol").get<double>();
            if (sdp.contains("max_iters")) cfg.solver.max_iters = sdp.at("max_iters").get<int>();
            if (sdp.contains("backend")) cfg.solver.backend = sdp.at("backend").get<std::string>();
            if (sdp.contains("reseed_attempts")) {
                cfg.reseed_attempts = sdp.at("reseed_attempts").get<int>();
            }
        }
        if (j.contains("simulation")) {
            const auto& sim = j.at("simulation");
            if (sim.contains("horizon")) cfg.test.horizon = sim.at("horizon").get<int>();
            if (sim.contains("tail_begin")) cfg.test.tail_begin = sim.at("tail_begin").get<int>();
            if (sim.contains("tail_end")) cfg.test.tail_end = sim.at("tail_end").get<int>();
            if (sim.contains("threshold")) cfg.test.threshold = sim.at("threshold").get<double>();
            if (sim.contains("overflow_bound")) {
                cfg.overflow_bound = sim.at("overflow_bound").get<double>();
            }
            if (sim.contains("divergence_norm")) {
                cfg.divergence_norm = sim.at("divergence_norm").get<double>();
            }
            if (sim.contains("x0")) cfg.x0 = vector_from_json(sim.at("x0"));
            if (sim.contains("warmup")) {
                cfg.warmup = sim.at("warmup").get<std::vector<double>>();
            }
        }
        if (j.contains("roa")) {
            const auto& roa = j.at("roa");
            if (roa.contains("grid")) {
                cfg.roa_grid.axes.clear();
                for (const auto& axis : roa.at("grid")) {
                    cfg.roa_grid.axes.push_back(GridAxis{axis.at(0).get<double>(),
                                                         axis.at(1).get<double>(),
                                                         axis.at(2).get<int>()});
                }
            }
            if (roa.contains("gamma_hi")) cfg.gamma_search.gamma_hi = roa.at("gamma_hi").get<double>();
            if (roa.contains("gamma_min")) {
                cfg.gamma_search.gamma_min = roa.at("gamma_min").get<double>();
            }
            if (roa.contains("rel_tol")) cfg.gamma_search.rel_tol = roa.at("rel_tol").get<double>();
            if (roa.contains("level_samples")) {
                cfg.gamma_search.level_samples = roa.at("level_samples").get<int>();
            }
            if (roa.contains("interior_samples")) {
                cfg.gamma_search.interior_samples = roa.at("interior_samples").get<int>();
            }
            if (roa.contains("origin_exclusion")) {
                cfg.gamma_search.origin_exclusion = roa.at("origin_exclusion").get<double>();
            }
            if (roa.contains("search_seed")) {
                cfg.gamma_search.seed = roa.at("search_seed").get<std::uint64_t>();
            }
        }
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    } catch (const nlohmann::json::exception& err) {
        throw ValidationError(std::string("config field has the wrong shape: ") + err.what());
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return pipeline_config_from_json(buffer.str());
}

PlantModel resolve_plant(const PipelineConfig& cfg) {
    if (cfg.plant_name == "pendulum") return make_pendulum(cfg.pendulum);
    return get_plant(cfg.plant_name);
}

Dictionary resolve_dictionary(const PipelineConfig& cfg) {
    return get_dictionary(cfg.dictionary_id, cfg.experiments.N);
}

std::vector<double> effective_warmup(const PipelineConfig& cfg) {
    if (!cfg.warmup.empty()) return cfg.warmup;
    return std::vector<double>(static_cast<size_t>(cfg.experiments.N), 0.0);
}

RawDataset cmd_collect(const PipelineConfig& cfg, bool write_files) {
    cfg.validate();
    const PlantModel model = resolve_plant(cfg);
    RawDataset raw = run_experiments(model, cfg.experiments);
    if (write_files) {
        const fs::path dir = fs::path(cfg.output_dir) / "dataset";
        write_dataset_csv(raw, dir.string(), cfg.hash());
        std::ofstream manifest(dir / "manifest.json");
        manifest << dataset_manifest_json(raw, model.name, cfg.hash()) << "\n";
    }
    return raw;
}

namespace {

PipelineConfig with_seed(const PipelineConfig& cfg, std::uint64_t seed) {
    PipelineConfig out = cfg;
    out.experiments.rng_seed = seed;
    return out;
}

struct AttemptResult {
    bool ok = false;
    std::string note;
    PipelineOutcome outcome;
};

AttemptResult try_seed(const PipelineConfig& cfg, std::uint64_t seed, const RawDataset* dataset,
                       bool check_convergence) {
    AttemptResult attempt;
    const PipelineConfig seeded = with_seed(cfg, seed);
    try {
        attempt.outcome.raw =
            (dataset != nullptr) ? *dataset : cmd_collect(seeded, /*write_files=*/false);
        const Dictionary dict = resolve_dictionary(seeded);
        attempt.outcome.dm = assemble_matrices(attempt.outcome.raw, dict);
        const SdpProblem problem = build_sdp(attempt.outcome.dm, seeded.sdp_epsilon);
        attempt.outcome.synthesis = solve_sdp(problem, seeded.solver);
        if (!attempt.outcome.synthesis.feasible()) {
            attempt.note = attempt.outcome.synthesis.diagnosis;
            return attempt;
        }
        attempt.outcome.certificate = lyapunov_certificate(attempt.outcome.synthesis);
        if (check_convergence) {
            const PlantModel model = resolve_plant(seeded);
            const ControllerState controller =
                ControllerState::make(dict, attempt.outcome.synthesis.kappa,
                                      effective_warmup(seeded),
                                      Vec::Zero(dict.N()), Vec::Zero(dict.N()));
            const ClosedLoopTrace trace = simulate_closed_loop(
                model, controller, seeded.x0, seeded.test.horizon, seeded.overflow_bound);
            const Verdict verdict = classify_trace(trace, seeded.test, seeded.divergence_norm);
            if (verdict != Verdict::kConverged) {
                attempt.note = "closed loop from the reference start did not converge (" +
                               to_string(verdict) + ")";
                return attempt;
            }
        }
        attempt.ok = true;
        attempt.note = "feasible";
        attempt.outcome.seed_used = seed;
        return attempt;
    } catch (const SynthesisError& err) {
        attempt.note = err.what();
        return attempt;
    } catch (const DivergenceError& err) {
        attempt.note = std::string("experiment diverged: ") + err.what();
        return attempt;
    }
}

PipelineOutcome synthesize_with_reseeds(const PipelineConfig& cfg, const RawDataset* dataset,
                                        bool check_convergence) {
    cfg.validate();
    std::vector<SynthesisAttempt> log;
    for (int attempt_idx = 0; attempt_idx <= cfg.reseed_attempts; ++attempt_idx) {
        const std::uint64_t seed =
            (attempt_idx == 0)
                ? cfg.experiments.rng_seed
                : derive_stream_seed(cfg.experiments.rng_seed,
                                     0x5eedULL + static_cast<std::uint64_t>(attempt_idx));
        AttemptResult attempt =
            try_seed(cfg, seed, attempt_idx == 0 ? dataset : nullptr, check_convergence);
        log.push_back(SynthesisAttempt{seed, attempt.note});
        if (attempt.ok) {
            attempt.outcome.attempts = std::move(log);
            return attempt.outcome;
        }
    }
    std::ostringstream msg;
    msg << "synthesis failed after " << log.size() << " attempt(s); last: " << log.back().outcome;
    throw SynthesisExhausted(msg.str(), std::move(log));
}

}  // namespace

PipelineOutcome cmd_synthesize(const PipelineConfig& cfg, const RawDataset* dataset,
                               bool require_convergence_check) {
    return synthesize_with_reseeds(cfg, dataset, require_convergence_check);
}

ClosedLoopTrace cmd_simulate(const PipelineConfig& cfg, const SynthesisResult& result,
                             const Vec& x0, bool write_files) {
    cfg.validate();
    if (!result.feasible()) {
        throw ValidationError("simulation requires a feasible synthesis result");
    }
    const PlantModel model = resolve_plant(cfg);
    const Dictionary dict = resolve_dictionary(cfg);
    const ControllerState controller =
        ControllerState::make(dict, result.kappa, effective_warmup(cfg), Vec::Zero(dict.N()),
                              Vec::Zero(dict.N()));
    ClosedLoopTrace trace =
        simulate_closed_loop(model, controller, x0, cfg.test.horizon, cfg.overflow_bound);
    if (write_files) {
        const fs::path path = fs::path(cfg.output_dir) / "trace.csv";
        write_trace_csv(trace, path.string(), cfg.hash());
    }
    return trace;
}

RoaOutputs cmd_roa(const PipelineConfig& cfg, const SynthesisResult& result, bool write_files) {
    cfg.validate();
    if (!result.feasible()) {
        throw ValidationError("ROA analysis requires a feasible synthesis result");
    }
    const PlantModel model = resolve_plant(cfg);
    const Dictionary dict = resolve_dictionary(cfg);
    const LyapunovCertificate cert = lyapunov_certificate(result);

    RoaAnalysis analysis;
    analysis.P1_inv = cert.P1_inv;
    analysis.M = result.M;
    analysis.N_mat = result.N_mat;
    analysis.dict = &dict;
    analysis.grid_spec = cfg.roa_grid;

    RoaOutputs out;
    out.gamma = find_gamma(analysis, cfg.gamma_search);

    const ControllerState controller =
        ControllerState::make(dict, result.kappa, effective_warmup(cfg), Vec::Zero(dict.N()),
                              Vec::Zero(dict.N()));
    out.grid = empirical_roa_grid(model, controller, cfg.roa_grid, cfg.test, cfg.overflow_bound,
                                  cfg.divergence_norm);

    if (write_files) {
        const fs::path dir(cfg.output_dir);
        write_grid_csv(out.grid, (dir / "roa_grid.csv").string(), cfg.hash());
        fs::create_directories(dir);
        std::ofstream summary(dir / "roa_summary.json");
        summary << grid_summary_json(out.grid, &out.gamma, cfg.hash()) << "\n";
    }
    return out;
}

PipelineOutcome run_pipeline(const PipelineConfig& cfg, bool write_files) {
    PipelineOutcome outcome = synthesize_with_reseeds(cfg, nullptr, /*check_convergence=*/true);

    if (write_files) {
        const fs::path dir = fs::path(cfg.output_dir) / "dataset";
        write_dataset_csv(outcome.raw, dir.string(), cfg.hash());
        std::ofstream manifest(dir / "manifest.json");
        manifest << dataset_manifest_json(outcome.raw, resolve_plant(cfg).name, cfg.hash()) << "\n";
        manifest.close();

        std::ofstream result_file(fs::path(cfg.output_dir) / "result.json");
        result_file << synthesis_result_to_json(outcome.synthesis) << "\n";
        result_file.close();

        cmd_simulate(cfg, outcome.synthesis, cfg.x0, /*write_files=*/true);
        cmd_roa(cfg, outcome.synthesis, /*write_files=*/true);
    }
    return outcome;
}

}  // namespace liftctl
