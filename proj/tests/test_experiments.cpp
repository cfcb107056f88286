#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "liftctl/brunovsky.hpp"
#include "liftctl/experiments.hpp"

using namespace liftctl;

namespace {

ExperimentConfig pendulum_defaults() {
    ExperimentConfig cfg;
    cfg.T = 7;
    cfg.N = 2;
    cfg.input_law = Interval{-0.5, 0.5};
    cfg.init_box = Box::cube(2, -0.5, 0.5);
    cfg.rng_seed = 1;
    return cfg;
}

}  // namespace

TEST_CASE("config validation") {
    ExperimentConfig cfg = pendulum_defaults();
    CHECK_NOTHROW(cfg.validate());
    cfg.T = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = pendulum_defaults();
    cfg.N = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = pendulum_defaults();
    cfg.input_law = Interval{0.5, -0.5};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = pendulum_defaults();
    cfg.input_law = Interval{};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = pendulum_defaults();
    cfg.safety_bound = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    CHECK(to_string(CollectionMode::kMultiExperiment) == "multi-experiment");
    CHECK(collection_mode_from_string("single") == CollectionMode::kSingleTrajectory);
    CHECK_THROWS_AS(collection_mode_from_string("batch"), ValidationError);
}

TEST_CASE("record lengths per collection mode") {
    const PlantModel model = make_pendulum();

    ExperimentConfig cfg = pendulum_defaults();
    RawDataset raw = run_experiments(model, cfg);
    REQUIRE(raw.records.size() == 7);
    for (const auto& rec : raw.records) {
        CHECK(rec.u_samples.size() == 3);  // N+1: the last input is drawn, not applied
        CHECK(rec.y_samples.size() == 3);
    }
    CHECK(raw.sample_count() == 3);

    cfg.mode = CollectionMode::kSingleTrajectory;
    raw = run_experiments(model, cfg);
    REQUIRE(raw.records.size() == 1);
    CHECK(raw.records[0].u_samples.size() == 9);  // N+T
    CHECK(raw.records[0].y_samples.size() == 9);

    cfg = pendulum_defaults();
    cfg.init_box = Box::cube(3, -0.5, 0.5);
    CHECK_THROWS_AS(run_experiments(model, cfg), ValidationError);
}

TEST_CASE("collection is deterministic and follows the stream-seed discipline") {
    const PlantModel model = make_pendulum();
    const ExperimentConfig cfg = pendulum_defaults();

    const RawDataset a = run_experiments(model, cfg);
    const RawDataset b = run_experiments(model, cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (size_t j = 0; j < a.records.size(); ++j) {
        CHECK(a.records[j].u_samples == b.records[j].u_samples);
        CHECK(a.records[j].y_samples == b.records[j].y_samples);
    }

    ExperimentConfig other = cfg;
    other.rng_seed = 2;
    const RawDataset c = run_experiments(model, other);
    CHECK(a.records[0].u_samples != c.records[0].u_samples);

    // Experiment j draws from its own stream: initial state first, then inputs.
    std::mt19937_64 rng(derive_stream_seed(cfg.rng_seed, 3));
    Vec x0(2);
    x0(0) = uniform_from_bits(rng(), -0.5, 0.5);
    x0(1) = uniform_from_bits(rng(), -0.5, 0.5);
    std::vector<double> u_expect;
    for (int k = 0; k < 3; ++k) u_expect.push_back(uniform_from_bits(rng(), -0.5, 0.5));
    CHECK(a.records[3].u_samples == u_expect);
    CHECK(a.records[3].y_samples[0] == x0(0));
    const Vec x1 = testutil::pendulum_reference_step(x0, u_expect[0]);
    CHECK(a.records[3].y_samples[1] == doctest::Approx(x1(0)).epsilon(1e-15));
}

TEST_CASE("experiments abort when the state leaves the safety region") {
    PlantModel model;
    model.state_dim = 1;
    model.name = "explosive";
    model.step = [](const Vec& x, double) {
        Vec next(1);
        next(0) = 10.0 * x(0) + 1.0;
        return next;
    };
    model.output = [](const Vec& x) { return x(0); };

    ExperimentConfig cfg;
    cfg.T = 3;
    cfg.N = 4;
    cfg.init_box = Box::cube(1, 0.9, 1.0);
    cfg.input_law = Interval{-0.1, 0.1};
    cfg.safety_bound = 50.0;
    cfg.mode = CollectionMode::kSingleTrajectory;

    bool threw = false;
    try {
        run_experiments(model, cfg);
    } catch (const DivergenceError& e) {
        threw = true;
        CHECK(e.experiment == 0);
        CHECK(std::string(e.what()).find("diverged") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("assembly matches a hand-unrolled single trajectory") {
    RawDataset raw;
    raw.provenance.T = 2;
    raw.provenance.N = 1;
    raw.provenance.mode = CollectionMode::kSingleTrajectory;
    raw.records.push_back(ExperimentRecord{{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});

    const Dictionary dict = make_linear_dictionary(1);
    const DataMatrices dm = assemble_matrices(raw, dict);
    CHECK(dm.N == 1);
    CHECK(dm.T == 2);
    CHECK(dm.S == 2);
    CHECK(dm.Y0(0, 0) == 4.0);
    CHECK(dm.Y0(0, 1) == 5.0);
    CHECK(dm.V0(0, 0) == 1.0);
    CHECK(dm.V0(0, 1) == 2.0);
    CHECK(dm.Y1(0, 0) == 5.0);
    CHECK(dm.Y1(0, 1) == 6.0);
    CHECK(dm.V1(0, 0) == 2.0);
    CHECK(dm.V1(0, 1) == 3.0);
    CHECK(dm.U0(0) == 2.0);
    CHECK(dm.U0(1) == 3.0);
    CHECK(dm.Q0.rows() == 0);

    const Mat w0 = dm.stacked_W0();
    CHECK(w0.rows() == 2);
    CHECK(w0(0, 0) == 4.0);
    CHECK(w0(1, 1) == 2.0);
    const Mat full = dm.stacked_full();
    CHECK(full.rows() == 3);
    CHECK(full(0, 0) == 2.0);
}

TEST_CASE("assembly matches hand-unrolled multi-experiment records") {
    RawDataset raw;
    raw.provenance.T = 2;
    raw.provenance.N = 2;
    raw.provenance.mode = CollectionMode::kMultiExperiment;
    raw.records.push_back(ExperimentRecord{{1.0, 2.0, 3.0}, {10.0, 20.0, 30.0}});
    raw.records.push_back(ExperimentRecord{{4.0, 5.0, 6.0}, {40.0, 50.0, 60.0}});

    const Dictionary dict = make_pendulum_dictionary(2);
    const DataMatrices dm = assemble_matrices(raw, dict);
    CHECK(dm.S == 6);
    CHECK(dm.Y0(0, 0) == 10.0);
    CHECK(dm.Y0(1, 0) == 20.0);
    CHECK(dm.Y1(0, 0) == 20.0);
    CHECK(dm.Y1(1, 0) == 30.0);
    CHECK(dm.V0(0, 1) == 4.0);
    CHECK(dm.V1(1, 1) == 6.0);
    CHECK(dm.U0(0) == 3.0);
    CHECK(dm.U0(1) == 6.0);
    CHECK(dm.Q0(0, 0) == doctest::Approx(std::sin(10.0) - 10.0).epsilon(1e-15));
    CHECK(dm.Q0(1, 0) == doctest::Approx(1.0 * (std::cos(10.0) - 1.0)).epsilon(1e-15));

    // Mismatched dictionary window and truncated records are rejected.
    CHECK_THROWS_AS(assemble_matrices(raw, make_pendulum_dictionary(3)), ValidationError);
    raw.records[1].u_samples.pop_back();
    CHECK_THROWS_AS(assemble_matrices(raw, dict), ValidationError);
}

TEST_CASE("pendulum data satisfies the one-step identity") {
    const PlantModel model = make_pendulum();
    const ExperimentConfig cfg = pendulum_defaults();
    const Dictionary dict = make_pendulum_dictionary(2);

    const RawDataset raw = run_experiments(model, cfg);
    const DataMatrices dm = assemble_matrices(raw, dict);
    const double residual = verify_data_identity(pendulum_ground_truth(), dm);
    CHECK(residual <= 1e-8);

    // Independent residual from explicit delay-chain blocks.
    Mat A = Mat::Zero(4, 4);
    A(0, 1) = 1.0;
    A(2, 3) = 1.0;
    Vec B1 = Vec::Zero(4);
    B1(3) = 1.0;
    Vec B2 = Vec::Zero(4);
    B2(1) = 1.0;
    Mat x0(4, dm.T);
    x0.topRows(2) = dm.Y0;
    x0.bottomRows(2) = dm.V0;
    const RowVec alpha = pendulum_ground_truth().alpha;
    const Mat rhs = A * x0 + B1 * dm.U0 + B2 * (alpha * dm.stacked_W0());
    const double by_hand = (dm.stacked_X1() - rhs).cwiseAbs().maxCoeff();
    CHECK(residual == doctest::Approx(by_hand).epsilon(1e-14));

    CHECK(residual == verify_data_identity(pendulum_ground_truth(), dm));

    GroundTruthExpansion wrong;
    wrong.alpha = RowVec::Zero(5);
    CHECK_THROWS_AS(verify_data_identity(wrong, dm), ValidationError);
}

TEST_CASE("a corrupted sample breaks the identity") {
    const PlantModel model = make_pendulum();
    const RawDataset raw = run_experiments(model, pendulum_defaults());
    DataMatrices dm = assemble_matrices(raw, make_pendulum_dictionary(2));

    dm.Y1(0, 0) += 1e-3;
    CHECK(verify_data_identity(pendulum_ground_truth(), dm) > 1e-6);
}

TEST_CASE("assumption diagnostics flag out-of-domain windows") {
    const PlantModel model = make_pendulum();
    const ExperimentConfig cfg = pendulum_defaults();
    const RawDataset raw = run_experiments(model, cfg);

    ObservabilityWindow win = testutil::unbounded_window(2);
    win.input_box = Interval{-0.5, 0.5};
    CHECK(check_assumption3(model, raw, win).ok());

    // Shrink U below the excitation range: some drawn inputs must fall outside.
    win.input_box = Interval{-0.01, 0.01};
    const auto tight = check_assumption3(model, raw, win);
    CHECK_FALSE(tight.ok());
    bool saw_input = false;
    for (const auto& v : tight.violations) saw_input = saw_input || v.kind == "input";
    CHECK(saw_input);

    // Shrink X so the recovered initial states fall outside.
    win = testutil::unbounded_window(2);
    win.input_box = Interval{-0.5, 0.5};
    win.state_box = Box::cube(2, -1e-4, 1e-4);
    const auto tiny = check_assumption3(model, raw, win);
    CHECK_FALSE(tiny.ok());
    bool saw_output = false;
    for (const auto& v : tiny.violations) saw_output = saw_output || v.kind == "output";
    CHECK(saw_output);
}

TEST_CASE("dataset CSV round-trip preserves every sample") {
    const PlantModel model = make_pendulum();
    const ExperimentConfig cfg = pendulum_defaults();
    const RawDataset raw = run_experiments(model, cfg);

    const std::string dir = "test_out/dataset_roundtrip";
    std::filesystem::remove_all(dir);
    write_dataset_csv(raw, dir, 0xabcdef12u);
    {
        std::ofstream manifest(std::filesystem::path(dir) / "manifest.json");
        manifest << dataset_manifest_json(raw, model.name, 0xabcdef12u);
    }

    const RawDataset back = read_dataset_csv(dir);
    REQUIRE(back.records.size() == raw.records.size());
    for (size_t j = 0; j < raw.records.size(); ++j) {
        REQUIRE(back.records[j].u_samples.size() == raw.records[j].u_samples.size());
        for (size_t k = 0; k < raw.records[j].u_samples.size(); ++k) {
            CHECK(back.records[j].u_samples[k] == raw.records[j].u_samples[k]);
            CHECK(back.records[j].y_samples[k] == raw.records[j].y_samples[k]);
        }
    }
    CHECK(back.provenance.T == cfg.T);
    CHECK(back.provenance.N == cfg.N);
    CHECK(back.provenance.rng_seed == cfg.rng_seed);
    CHECK(back.provenance.mode == cfg.mode);

    // The CSV header carries the configuration hash.
    std::ifstream first(std::filesystem::path(dir) / "experiment_0.csv");
    std::string line;
    std::getline(first, line);
    CHECK(line == "# config=" + fnv_hex(0xabcdef12u));
    std::getline(first, line);
    CHECK(line == "k,u,y");

    const auto manifest_json = nlohmann::json::parse(
        std::ifstream(std::filesystem::path(dir) / "manifest.json"));
    CHECK(manifest_json["config_hash"] == fnv_hex(0xabcdef12u));
    CHECK(manifest_json["model"] == "pendulum");
    CHECK(manifest_json["records"] == 7);

    CHECK_THROWS_AS(read_dataset_csv("test_out/no_such_dir"), ValidationError);
}

TEST_CASE("matrices JSON round-trip") {
    const PlantModel model = make_pendulum();
    const RawDataset raw = run_experiments(model, pendulum_defaults());
    const DataMatrices dm = assemble_matrices(raw, make_pendulum_dictionary(2));

    const DataMatrices back = matrices_from_json(matrices_to_json(dm));
    CHECK(back.N == dm.N);
    CHECK(back.T == dm.T);
    CHECK(back.S == dm.S);
    CHECK((back.Y0 - dm.Y0).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.V1 - dm.V1).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.Q0 - dm.Q0).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.U0 - dm.U0).lpNorm<Eigen::Infinity>() == 0.0);
}
