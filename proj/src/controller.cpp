#include "liftctl/controller.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace liftctl {

void ConvergenceTest::validate() const {
    if (horizon < 1) throw ValidationError("convergence horizon must be positive");
    if (tail_begin < 0 || tail_begin > tail_end || tail_end > horizon) {
        throw ValidationError("convergence tail window must satisfy 0 <= begin <= end <= horizon");
    }
    if (!(threshold > 0.0)) throw ValidationError("convergence threshold must be positive");
}

std::string to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::kConverged: return "converged";
        case Verdict::kDiverged: return "diverged";
        case Verdict::kBudgetExhausted: return "budget-exhausted";
    }
    return "unknown";
}

ControllerState ControllerState::make(const Dictionary& dict, const RowVec& kappa,
                                      std::vector<double> warmup, const Vec& eta0,
                                      const Vec& xi0) {
    const int N = dict.N();
    if (kappa.size() != dict.S()) {
        throw ValidationError("gain length does not match the dictionary size");
    }
    if (static_cast<int>(warmup.size()) != N) {
        throw ValidationError("warmup sequence must have exactly N entries");
    }
    if (eta0.size() != N || xi0.size() != N) {
        throw ValidationError("controller windows must have length N");
    }
    ControllerState state;
    state.eta = eta0;
    state.xi = xi0;
    state.warmup = std::move(warmup);
    state.kappa = kappa;
    state.dict = &dict;
    return state;
}

ControllerState ControllerState::make_default(const Dictionary& dict, const RowVec& kappa) {
    const int N = dict.N();
    return make(dict, kappa, std::vector<double>(static_cast<size_t>(N), 0.0), Vec::Zero(N),
                Vec::Zero(N));
}

double controller_step(ControllerState& state, double y) {
    if (state.dict == nullptr) throw ValidationError("controller state has no dictionary");
    const int N = state.dict->N();
    double u;
    if (state.in_warmup()) {
        u = state.warmup[static_cast<size_t>(state.phase_counter)];
    } else {
        u = state.kappa.dot(state.dict->eval_Z(state.eta, state.xi));
    }
    for (int i = 0; i + 1 < N; ++i) {
        state.eta(i) = state.eta(i + 1);
        state.xi(i) = state.xi(i + 1);
    }
    state.eta(N - 1) = y;
    state.xi(N - 1) = u;
    ++state.phase_counter;
    return u;
}

double ClosedLoopTrace::tail_sup_norm(int tail_begin, int tail_end) const {
    double sup = -kInf;
    for (const auto& step : steps) {
        if (step.k < tail_begin || step.k > tail_end) continue;
        double norm = std::max({step.x.cwiseAbs().maxCoeff(), step.eta.cwiseAbs().maxCoeff(),
                                step.xi.cwiseAbs().maxCoeff()});
        sup = std::max(sup, norm);
    }
    return sup < 0.0 ? kInf : sup;
}

ClosedLoopTrace simulate_closed_loop(const PlantModel& model, ControllerState controller,
                                     const Vec& x0, int horizon, double overflow_bound) {
    if (controller.dict == nullptr) throw ValidationError("controller state has no dictionary");
    if (horizon < controller.dict->N()) {
        throw ValidationError("horizon must be at least the window length");
    }
    if (x0.size() != model.state_dim) {
        throw ValidationError("initial state dimension does not match the plant");
    }

    ClosedLoopTrace trace;
    trace.requested_horizon = horizon;
    trace.steps.reserve(static_cast<size_t>(horizon) + 1);

    Vec x = x0;
    for (int k = 0; k <= horizon; ++k) {
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > overflow_bound) {
            trace.overflowed = true;
            break;
        }
        TraceStep step;
        step.k = k;
        step.x = x;
        step.eta = controller.eta;
        step.xi = controller.xi;
        step.warmup_phase = controller.in_warmup();
        step.y = model.output(x);
        step.u = controller_step(controller, step.y);
        trace.steps.push_back(std::move(step));
        if (k < horizon) x = model.step(x, trace.steps.back().u);
    }
    return trace;
}

Verdict classify_trace(const ClosedLoopTrace& trace, const ConvergenceTest& test,
                       double divergence_norm) {
    test.validate();
    if (trace.overflowed) return Verdict::kDiverged;
    if (trace.steps.empty() ||
        trace.steps.back().k < std::min(test.tail_end, trace.requested_horizon)) {
        return Verdict::kDiverged;
    }
    if (trace.tail_sup_norm(test.tail_begin, test.tail_end) < test.threshold) {
        return Verdict::kConverged;
    }
    const TraceStep& last = trace.steps.back();
    const double final_norm = std::max({last.x.cwiseAbs().maxCoeff(),
                                        last.eta.cwiseAbs().maxCoeff(),
                                        last.xi.cwiseAbs().maxCoeff()});
    if (final_norm > divergence_norm) return Verdict::kDiverged;
    return Verdict::kBudgetExhausted;
}

double check_window_consistency(const ClosedLoopTrace& trace, int N) {
    if (static_cast<int>(trace.steps.size()) <= N) {
        throw ValidationError("trace too short to check windows: need more than N steps");
    }
    double worst = 0.0;
    for (size_t k = static_cast<size_t>(N); k < trace.steps.size(); ++k) {
        const auto& step = trace.steps[k];
        for (int i = 0; i < N; ++i) {
            const auto& past = trace.steps[k - static_cast<size_t>(N) + static_cast<size_t>(i)];
            worst = std::max(worst, std::abs(step.eta(i) - past.y));
            worst = std::max(worst, std::abs(step.xi(i) - past.u));
        }
    }
    return worst;
}

void write_trace_csv(const ClosedLoopTrace& trace, const std::string& path,
                     std::uint64_t config_hash) {
    const std::filesystem::path file(path);
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw ValidationError("cannot open trace file " + path);
    out.precision(17);
    out << "# config=" << fnv_hex(config_hash) << "\n";

    const int state_dim = trace.steps.empty() ? 0 : static_cast<int>(trace.steps[0].x.size());
    const int N = trace.steps.empty() ? 0 : static_cast<int>(trace.steps[0].eta.size());
    out << "k,u,y";
    for (int i = 1; i <= state_dim; ++i) out << ",x" << i;
    for (int i = 1; i <= N; ++i) out << ",eta" << i;
    for (int i = 1; i <= N; ++i) out << ",xi" << i;
    out << ",phase\n";
    for (const auto& step : trace.steps) {
        out << step.k << "," << step.u << "," << step.y;
        for (int i = 0; i < state_dim; ++i) out << "," << step.x(i);
        for (int i = 0; i < N; ++i) out << "," << step.eta(i);
        for (int i = 0; i < N; ++i) out << "," << step.xi(i);
        out << "," << (step.warmup_phase ? "warmup" : "feedback") << "\n";
    }
}

}  // namespace liftctl
