#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "liftctl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace liftctl;

namespace {

Vec parse_x0(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        try {
            values.push_back(std::stod(token));
        } catch (const std::exception&) {
            throw ValidationError("cannot parse --x0 entry '" + token + "'");
        }
    }
    if (values.empty()) throw ValidationError("--x0 needs at least one coordinate");
    Vec x0(static_cast<Eigen::Index>(values.size()));
    for (size_t i = 0; i < values.size(); ++i) x0(static_cast<Eigen::Index>(i)) = values[i];
    return x0;
}

SynthesisResult read_result(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open result file " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return synthesis_result_from_json(buffer.str());
}

void write_result_file(const PipelineConfig& cfg, const PipelineOutcome& outcome) {
    nlohmann::json j = nlohmann::json::parse(synthesis_result_to_json(outcome.synthesis));
    j["config_hash"] = fnv_hex(cfg.hash());
    j["seed_used"] = outcome.seed_used;
    nlohmann::json attempts = nlohmann::json::array();
    for (const auto& attempt : outcome.attempts) {
        attempts.push_back({{"seed", attempt.seed}, {"outcome", attempt.outcome}});
    }
    j["attempts"] = attempts;
    fs::create_directories(cfg.output_dir);
    std::ofstream out(fs::path(cfg.output_dir) / "result.json");
    out << j.dump(2) << "\n";
}

void dump_program_file(const PipelineConfig& cfg, std::uint64_t seed_used) {
    PipelineConfig seeded = cfg;
    seeded.experiments.rng_seed = seed_used;
    const RawDataset raw = cmd_collect(seeded, /*write_files=*/false);
    const Dictionary dict = resolve_dictionary(seeded);
    const DataMatrices dm = assemble_matrices(raw, dict);
    const SdpProblem problem = build_sdp(dm, seeded.sdp_epsilon);
    fs::create_directories(cfg.output_dir);
    std::ofstream out(fs::path(cfg.output_dir) / "program.json");
    out << problem.program.dump_json() << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"liftctl: output-feedback controller synthesis from input-output data"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string output_dir;
    std::string backend;
    std::uint64_t seed = 0;
    app.add_option("-c,--config", config_path, "JSON configuration file");
    app.add_option("-o,--output-dir", output_dir, "override the output directory");
    auto* seed_opt = app.add_option("--seed", seed, "override the experiment seed");
    app.add_option("--backend", backend, "conic solver backend")->envname("LIFTCTL_BACKEND");

    CLI::App* collect = app.add_subcommand("collect", "run experiments and write the dataset");

    CLI::App* synthesize =
        app.add_subcommand("synthesize", "collect data and solve the feedback SDP");
    bool synth_dump = false;
    synthesize->add_flag("--dump-program", synth_dump, "also write the conic program as JSON");

    CLI::App* simulate = app.add_subcommand("simulate", "closed-loop simulation from x0");
    std::string sim_x0;
    std::string sim_result;
    simulate->add_option("--x0", sim_x0, "initial plant state, comma-separated");
    simulate->add_option("--result", sim_result, "result JSON (default <output-dir>/result.json)");

    CLI::App* roa = app.add_subcommand("roa", "sublevel-set certificate and empirical ROA grid");
    std::string roa_result;
    roa->add_option("--result", roa_result, "result JSON (default <output-dir>/result.json)");

    CLI::App* pipeline =
        app.add_subcommand("pipeline", "collect, synthesize, simulate, and map the ROA");
    bool pipe_dump = false;
    pipeline->add_flag("--dump-program", pipe_dump, "also write the conic program as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    PipelineConfig cfg =
        config_path.empty() ? PipelineConfig{} : load_pipeline_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (seed_opt->count() > 0) cfg.experiments.rng_seed = seed;
    if (!backend.empty()) cfg.solver.backend = backend;
    cfg.validate();

    if (collect->parsed()) {
        const RawDataset raw = cmd_collect(cfg);
        std::cout << "collected " << raw.records.size() << " experiment(s) into "
                  << (fs::path(cfg.output_dir) / "dataset").string() << "\n";
        return 0;
    }

    if (synthesize->parsed()) {
        const PipelineOutcome outcome = cmd_synthesize(cfg);
        write_result_file(cfg, outcome);
        if (synth_dump) dump_program_file(cfg, outcome.seed_used);
        std::cout << "synthesis feasible (seed " << outcome.seed_used << ", "
                  << outcome.attempts.size() << " attempt(s)); objective "
                  << outcome.synthesis.objective_value << ", spectral radius "
                  << outcome.synthesis.spectral_radius_M << "\n";
        std::cout << "kappa =";
        for (Eigen::Index i = 0; i < outcome.synthesis.kappa.size(); ++i) {
            std::cout << " " << outcome.synthesis.kappa(i);
        }
        std::cout << "\n";
        return 0;
    }

    if (simulate->parsed()) {
        const std::string result_path =
            sim_result.empty() ? (fs::path(cfg.output_dir) / "result.json").string() : sim_result;
        const SynthesisResult result = read_result(result_path);
        const Vec x0 = sim_x0.empty() ? cfg.x0 : parse_x0(sim_x0);
        const ClosedLoopTrace trace = cmd_simulate(cfg, result, x0);
        const Verdict verdict = classify_trace(trace, cfg.test, cfg.divergence_norm);
        std::cout << "verdict: " << to_string(verdict) << " (tail sup-norm "
                  << trace.tail_sup_norm(cfg.test.tail_begin, cfg.test.tail_end) << ")\n";
        std::cout << "trace written to " << (fs::path(cfg.output_dir) / "trace.csv").string()
                  << "\n";
        return 0;
    }

    if (roa->parsed()) {
        const std::string result_path =
            roa_result.empty() ? (fs::path(cfg.output_dir) / "result.json").string() : roa_result;
        const SynthesisResult result = read_result(result_path);
        const RoaOutputs out = cmd_roa(cfg, result);
        if (out.gamma.gamma.has_value()) {
            std::cout << "gamma = " << *out.gamma.gamma << (out.gamma.capped ? " (capped)" : "")
                      << "\n";
        } else {
            std::cout << "warning: degenerate ROA, no positive gamma certified\n";
        }
        std::cout << "grid: " << out.grid.converged << " converged, " << out.grid.diverged
                  << " diverged, " << out.grid.budget_exhausted << " budget-exhausted\n";
        return 0;
    }

    if (pipeline->parsed()) {
        const PipelineOutcome outcome = run_pipeline(cfg);
        write_result_file(cfg, outcome);
        if (pipe_dump) dump_program_file(cfg, outcome.seed_used);
        std::cout << "pipeline complete (seed " << outcome.seed_used << ", "
                  << outcome.attempts.size() << " attempt(s)); artifacts in " << cfg.output_dir
                  << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const SynthesisExhausted& err) {
        std::cerr << "error: " << err.what() << "\n";
        for (const auto& attempt : err.attempts) {
            std::cerr << "  seed " << attempt.seed << ": " << attempt.outcome << "\n";
        }
        return 3;
    } catch (const DivergenceError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const ValidationError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
}
