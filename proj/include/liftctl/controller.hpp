#pragma once

#include <string>
#include <vector>

#include "liftctl/dictionary.hpp"
#include "liftctl/plant.hpp"

namespace liftctl {

// Convergence test used throughout: sup-norm of (x, eta, xi) below the
// threshold on the whole tail window.
struct ConvergenceTest {
    int horizon = 200;
    int tail_begin = 195;
    int tail_end = 200;
    double threshold = 1e-6;

    void validate() const;
};

enum class Verdict { kConverged, kDiverged, kBudgetExhausted };

std::string to_string(Verdict verdict);

// Dead-beat observer plus input integrator chain. The windows are pure
// shift registers: after N steps eta holds the last N outputs and xi the
// last N inputs exactly, whatever the initialization.
struct ControllerState {
    Vec eta;
    Vec xi;
    int phase_counter = 0;
    std::vector<double> warmup;
    RowVec kappa;
    const Dictionary* dict = nullptr;

    static ControllerState make(const Dictionary& dict, const RowVec& kappa,
                                std::vector<double> warmup, const Vec& eta0, const Vec& xi0);
    static ControllerState make_default(const Dictionary& dict, const RowVec& kappa);

    bool in_warmup() const { return phase_counter < static_cast<int>(warmup.size()); }
};

// u is computed from the current windows, then both chains shift.
double controller_step(ControllerState& state, double y);

struct TraceStep {
    int k = 0;
    double u = 0.0;
    double y = 0.0;
    Vec x;
    Vec eta;
    Vec xi;
    bool warmup_phase = false;
};

struct ClosedLoopTrace {
    std::vector<TraceStep> steps;
    bool overflowed = false;
    int requested_horizon = 0;

    double tail_sup_norm(int tail_begin, int tail_end) const;
};

ClosedLoopTrace simulate_closed_loop(const PlantModel& model, ControllerState controller,
                                     const Vec& x0, int horizon,
                                     double overflow_bound = 1e9);

Verdict classify_trace(const ClosedLoopTrace& trace, const ConvergenceTest& test,
                       double divergence_norm = 1e3);

double check_window_consistency(const ClosedLoopTrace& trace, int N);

void write_trace_csv(const ClosedLoopTrace& trace, const std::string& path,
                     std::uint64_t config_hash);

}  // namespace liftctl
