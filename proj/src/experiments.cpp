#include "liftctl/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "liftctl/brunovsky.hpp"
#include "liftctl/jsonio.hpp"

namespace fs = std::filesystem;

namespace liftctl {

std::string to_string(CollectionMode mode) {
    return mode == CollectionMode::kMultiExperiment ? "multi-experiment" : "single-trajectory";
}

CollectionMode collection_mode_from_string(const std::string& s) {
    if (s == "multi-experiment" || s == "multi") return CollectionMode::kMultiExperiment;
    if (s == "single-trajectory" || s == "single") return CollectionMode::kSingleTrajectory;
    throw ValidationError("unknown collection mode: " + s);
}

void ExperimentConfig::validate() const {
    if (T < 1) throw ValidationError("experiment count T must be >= 1");
    if (N < 1) throw ValidationError("window length N must be >= 1");
    if (!std::isfinite(input_law.lo) || !std::isfinite(input_law.hi) ||
        input_law.lo > input_law.hi)
        throw ValidationError("input law interval must be finite with lo <= hi");
    for (const auto& iv : init_box.axes) {
        if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi)
            throw ValidationError("init box must have finite bounds with lo <= hi");
    }
    if (safety_bound <= 0) throw ValidationError("safety bound must be positive");
}

Mat DataMatrices::stacked_W0() const {
    Mat w0(S, T);
    w0.topRows(N) = Y0;
    w0.middleRows(N, N) = V0;
    if (S > 2 * N) w0.bottomRows(S - 2 * N) = Q0;
    return w0;
}

Mat DataMatrices::stacked_X1() const {
    Mat x1(2 * N, T);
    x1.topRows(N) = Y1;
    x1.bottomRows(N) = V1;
    return x1;
}

Mat DataMatrices::stacked_full() const {
    Mat full(S + 1, T);
    full.row(0) = U0;
    full.bottomRows(S) = stacked_W0();
    return full;
}

namespace {

// One simulated record of `steps` inputs; y is logged before each input is
// applied, and one extra trailing input is drawn but not applied.
ExperimentRecord simulate_record(const PlantModel& model, const ExperimentConfig& cfg,
                                 std::mt19937_64& rng, int input_count, int applied_steps,
                                 int experiment_index) {
    ExperimentRecord rec;
    Vec x(model.state_dim);
    for (int i = 0; i < model.state_dim; ++i) {
        const auto& iv = cfg.init_box.axes[static_cast<size_t>(i)];
        x(i) = uniform_from_bits(rng(), iv.lo, iv.hi);
    }
    rec.u_samples.reserve(static_cast<size_t>(input_count));
    rec.y_samples.reserve(static_cast<size_t>(input_count));
    for (int k = 0; k < input_count; ++k)
        rec.u_samples.push_back(uniform_from_bits(rng(), cfg.input_law.lo, cfg.input_law.hi));

    for (int k = 0; k <= applied_steps; ++k) {
        if (x.lpNorm<Eigen::Infinity>() > cfg.safety_bound) {
            std::ostringstream msg;
            msg << "experiment " << experiment_index << " diverged at step " << k
                << ": ||x||_inf = " << x.lpNorm<Eigen::Infinity>() << " > "
                << cfg.safety_bound;
            throw DivergenceError(msg.str(), experiment_index);
        }
        rec.y_samples.push_back(model.output(x));
        if (k < applied_steps) x = model.step(x, rec.u_samples[static_cast<size_t>(k)]);
    }
    return rec;
}

}  // namespace

RawDataset run_experiments(const PlantModel& model, const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.init_box.dim() != model.state_dim)
        throw ValidationError("init box dimension does not match the plant");

    RawDataset raw;
    raw.provenance = cfg;
    if (cfg.mode == CollectionMode::kMultiExperiment) {
        raw.records.reserve(static_cast<size_t>(cfg.T));
        for (int j = 0; j < cfg.T; ++j) {
            std::mt19937_64 rng(derive_stream_seed(cfg.rng_seed, static_cast<std::uint64_t>(j)));
            raw.records.push_back(
                simulate_record(model, cfg, rng, cfg.N + 1, cfg.N, j));
        }
    } else {
        std::mt19937_64 rng(derive_stream_seed(cfg.rng_seed, 0));
        raw.records.push_back(
            simulate_record(model, cfg, rng, cfg.N + cfg.T, cfg.N + cfg.T - 1, 0));
    }
    return raw;
}

DataMatrices assemble_matrices(const RawDataset& raw, const Dictionary& dict) {
    const ExperimentConfig& cfg = raw.provenance;
    const int N = cfg.N;
    const int T = cfg.T;
    if (dict.N() != N) throw ValidationError("dictionary window length does not match data");

    DataMatrices dm;
    dm.N = N;
    dm.T = T;
    dm.S = dict.S();
    dm.Y0.resize(N, T);
    dm.V0.resize(N, T);
    dm.Y1.resize(N, T);
    dm.V1.resize(N, T);
    dm.Q0.resize(dm.S - 2 * N, T);
    dm.U0.resize(T);

    auto window = [N](const std::vector<double>& samples, int start) {
        Vec w(N);
        for (int i = 0; i < N; ++i) w(i) = samples[static_cast<size_t>(start + i)];
        return w;
    };

    for (int col = 0; col < T; ++col) {
        const bool multi = cfg.mode == CollectionMode::kMultiExperiment;
        const ExperimentRecord& rec = raw.records[multi ? static_cast<size_t>(col) : 0];
        const int base = multi ? 0 : col;
        const size_t expected = static_cast<size_t>(multi ? N + 1 : N + T);
        if (rec.u_samples.size() != expected || rec.y_samples.size() != expected)
            throw ValidationError("raw record length inconsistent with mode");

        dm.Y0.col(col) = window(rec.y_samples, base);
        dm.V0.col(col) = window(rec.u_samples, base);
        dm.Y1.col(col) = window(rec.y_samples, base + 1);
        dm.V1.col(col) = window(rec.u_samples, base + 1);
        dm.U0(col) = rec.u_samples[static_cast<size_t>(base + N)];
        if (dm.S > 2 * N) {
            try {
                dm.Q0.col(col) = dict.eval_Q(dm.Y0.col(col), dm.V0.col(col));
            } catch (const EvaluationError& err) {
                throw EvaluationError(std::string(err.what()) + " (data column " +
                                      std::to_string(col) + ")");
            }
        }
    }
    return dm;
}

double verify_data_identity(const GroundTruthExpansion& truth, const DataMatrices& dm) {
    if (truth.alpha.size() != dm.S)
        throw ValidationError("expansion coefficient length does not match S");
    const BrunovskyBlocks blocks = BrunovskyBlocks::make(dm.N);
    const Mat lhs = dm.stacked_X1();
    Mat x0(2 * dm.N, dm.T);
    x0.topRows(dm.N) = dm.Y0;
    x0.bottomRows(dm.N) = dm.V0;
    const Mat rhs = blocks.A * x0 + blocks.B1 * dm.U0 + blocks.B2 * (truth.alpha * dm.stacked_W0());
    return (lhs - rhs).cwiseAbs().maxCoeff();
}

Assumption3Report check_assumption3(const PlantModel& model, const RawDataset& raw,
                                    const ObservabilityWindow& win) {
    Assumption3Report report;
    const ExperimentConfig& cfg = raw.provenance;
    if (raw.records.empty()) return report;
    const int N = cfg.N;

    for (int i = 0; i < cfg.T; ++i) {
        const bool multi = cfg.mode == CollectionMode::kMultiExperiment;
        if (raw.records.size() <= (multi ? static_cast<size_t>(i) : 0)) break;
        const ExperimentRecord& rec = raw.records[multi ? static_cast<size_t>(i) : 0];
        const int base = multi ? 0 : i;

        Vec u_win(N), y_win(N);
        for (int k = 0; k < N; ++k) {
            u_win(k) = rec.u_samples[static_cast<size_t>(base + k)];
            y_win(k) = rec.y_samples[static_cast<size_t>(base + k)];
        }

        for (int k = 0; k < N; ++k) {
            if (!win.input_box.contains(u_win(k))) {
                std::ostringstream detail;
                detail << "u(" << base + k << ") = " << u_win(k) << " outside U";
                report.violations.push_back({i, "input", detail.str()});
            }
        }

        // Output window must be reachable: invert and check the recovered state.
        try {
            const Vec seed = Vec::Zero(model.state_dim);
            const Vec x_hat = invert_phi(model, win, y_win, u_win.head(N - 1), seed);
            const int bad = win.state_box.first_violation(x_hat);
            if (bad >= 0) {
                std::ostringstream detail;
                detail << "recovered state coordinate " << bad + 1 << " = " << x_hat(bad)
                       << " outside X";
                report.violations.push_back({i, "output", detail.str()});
            }
        } catch (const InversionError& err) {
            report.violations.push_back({i, "output", err.what()});
        }
    }
    return report;
}

namespace {

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["T"] = cfg.T;
    j["N"] = cfg.N;
    j["seed"] = cfg.rng_seed;
    j["input_law"] = {{"type", "uniform"}, {"low", cfg.input_law.lo}, {"high", cfg.input_law.hi}};
    nlohmann::json box = nlohmann::json::array();
    for (const auto& iv : cfg.init_box.axes) box.push_back({iv.lo, iv.hi});
    j["init_box"] = box;
    j["mode"] = to_string(cfg.mode);
    j["safety_bound"] = cfg.safety_bound;
    return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    cfg.T = j.at("T").get<int>();
    cfg.N = j.at("N").get<int>();
    cfg.rng_seed = j.at("seed").get<std::uint64_t>();
    cfg.input_law = Interval{j.at("input_law").at("low").get<double>(),
                             j.at("input_law").at("high").get<double>()};
    cfg.init_box.axes.clear();
    for (const auto& iv : j.at("init_box"))
        cfg.init_box.axes.push_back(Interval{iv.at(0).get<double>(), iv.at(1).get<double>()});
    cfg.mode = collection_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("safety_bound")) cfg.safety_bound = j.at("safety_bound").get<double>();
    return cfg;
}

}  // namespace

void write_dataset_csv(const RawDataset& raw, const std::string& directory,
                       std::uint64_t config_hash) {
    fs::create_directories(directory);
    for (size_t j = 0; j < raw.records.size(); ++j) {
        std::ostringstream name;
        name << "experiment_" << j << ".csv";
        std::ofstream out(fs::path(directory) / name.str());
        out.precision(17);
        out << "# config=" << fnv_hex(config_hash) << "\n";
        out << "k,u,y\n";
        const ExperimentRecord& rec = raw.records[j];
        for (size_t k = 0; k < rec.u_samples.size(); ++k)
            out << k << "," << rec.u_samples[k] << "," << rec.y_samples[k] << "\n";
    }
}

RawDataset read_dataset_csv(const std::string& directory) {
    std::ifstream manifest(fs::path(directory) / "manifest.json");
    if (!manifest) throw ValidationError("missing manifest.json in " + directory);
    nlohmann::json j;
    manifest >> j;

    RawDataset raw;
    raw.provenance = config_from_json(j.at("config"));
    const int records =
        raw.provenance.mode == CollectionMode::kMultiExperiment ? raw.provenance.T : 1;
    for (int rec_idx = 0; rec_idx < records; ++rec_idx) {
        std::ostringstream name;
        name << "experiment_" << rec_idx << ".csv";
        std::ifstream in(fs::path(directory) / name.str());
        if (!in) throw ValidationError("missing " + name.str() + " in " + directory);
        ExperimentRecord rec;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || line[0] == 'k') continue;
            std::istringstream row(line);
            std::string field;
            std::getline(row, field, ',');  // k
            std::getline(row, field, ',');
            rec.u_samples.push_back(std::stod(field));
            std::getline(row, field, ',');
            rec.y_samples.push_back(std::stod(field));
        }
        raw.records.push_back(std::move(rec));
    }
    return raw;
}

std::string dataset_manifest_json(const RawDataset& raw, const std::string& model_name,
                                  std::uint64_t config_hash) {
    nlohmann::json j;
    j["model"] = model_name;
    j["config"] = config_to_json(raw.provenance);
    j["records"] = raw.records.size();
    j["config_hash"] = fnv_hex(config_hash);
    return j.dump(2);
}

std::string matrices_to_json(const DataMatrices& dm) {
    nlohmann::json j;
    j["N"] = dm.N;
    j["T"] = dm.T;
    j["S"] = dm.S;
    j["Y0"] = matrix_to_json(dm.Y0);
    j["V0"] = matrix_to_json(dm.V0);
    j["Y1"] = matrix_to_json(dm.Y1);
    j["V1"] = matrix_to_json(dm.V1);
    j["Q0"] = matrix_to_json(dm.Q0);
    j["U0"] = matrix_to_json(dm.U0);
    return j.dump(2);
}

DataMatrices matrices_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    DataMatrices dm;
    dm.N = j.at("N").get<int>();
    dm.T = j.at("T").get<int>();
    dm.S = j.at("S").get<int>();
    dm.Y0 = matrix_from_json(j.at("Y0"));
    dm.V0 = matrix_from_json(j.at("V0"));
    dm.Y1 = matrix_from_json(j.at("Y1"));
    dm.V1 = matrix_from_json(j.at("V1"));
    dm.Q0 = matrix_from_json(j.at("Q0"));
    dm.U0 = matrix_from_json(j.at("U0"));
    return dm;
}

}  // namespace liftctl
