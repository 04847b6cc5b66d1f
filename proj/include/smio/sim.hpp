// Attacked-plant simulation and the observer-bank elimination pipeline.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "smio/decomposition.hpp"
#include "smio/linalg.hpp"
#include "smio/model.hpp"
#include "smio/modeguard.hpp"
#include "smio/observer.hpp"

namespace smio {

enum class NoiseShape { kBall, kSphere };

struct AttackSpec {
  // Default waveform d_i(k) = bias_i + amplitude * sin(freq_i * k + phase_i)
  // with per-channel freq/phase spread; ignored when `values` is set.
  double amplitude = 1.0;
  double bias = 0.5;
  double frequency = 0.3;
  std::vector<Vector> values;
};

struct ScenarioConfig {
  SystemModel model;
  int rho = 0;
  // Explicit hypotheses (actuator set, sensor set); enumerated when empty.
  std::vector<std::pair<std::vector<int>, std::vector<int>>> explicit_modes;
  int true_mode = 1;
  int horizon = 200;
  std::vector<Vector> known_input;  // horizon + 1 samples, or empty for zero
  AttackSpec attack;
  std::uint64_t noise_seed = 1;
  NoiseShape noise_shape = NoiseShape::kBall;
  std::optional<Vector> x0;     // sampled in the initial ball when absent
  std::optional<Vector> xhat0;  // zero when absent
  std::optional<double> R_x;
  std::optional<double> R_y;
  int k_inf_cutoff = 25;
  int enum_budget = 16;
  std::map<int, Matrix> ltilde_override;
  int threads = 0;  // 0: read SMIO_THREADS, default 1
};

/// Uniform draw from the 2-norm ball of radius eta (or its boundary sphere).
template <class Rng>
Vector sample_bounded(Index dim, double eta, Rng& rng,
                      NoiseShape shape = NoiseShape::kBall) {
  Vector v = Vector::Zero(dim);
  if (dim == 0 || eta <= 0.0) return v;
  std::normal_distribution<double> normal(0.0, 1.0);
  double nrm = 0.0;
  do {
    for (Index i = 0; i < dim; ++i) v(i) = normal(rng);
    nrm = v.norm();
  } while (nrm == 0.0);
  double radius = eta;
  if (shape == NoiseShape::kBall) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    radius = eta * std::pow(unif(rng), 1.0 / static_cast<double>(dim));
  }
  v *= radius / nrm;
  for (double out = v.norm(); out > eta; out = v.norm()) {
    v *= std::nextafter(eta / out, 0.0);
  }
  return v;
}

/// Independent generator for one consumer of randomness.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  return std::mt19937_64(seq);
}

struct PlantTrajectory {
  std::vector<Vector> x;  // x_0..x_N
  std::vector<Vector> y;  // y_0..y_N
  std::vector<Vector> u;  // u_0..u_N
  std::vector<Vector> d;  // d_0..d_N (true-mode attack)
  std::vector<Vector> w;  // w_0..w_{N-1}
  std::vector<Vector> v;  // v_0..v_N
  Vector xhat0;
};

inline std::vector<Vector> default_attack(const AttackSpec& spec, Index rho,
                                          int horizon) {
  std::vector<Vector> out;
  for (int k = 0; k <= horizon; ++k) {
    Vector dk(rho);
    for (Index i = 0; i < rho; ++i) {
      const double fi = spec.frequency * (1.0 + 0.37 * static_cast<double>(i));
      const double phase = 0.9 * static_cast<double>(i);
      dk(i) = spec.bias + spec.amplitude * std::sin(fi * k + phase);
    }
    out.push_back(dk);
  }
  return out;
}

inline PlantTrajectory simulate_plant(const ScenarioConfig& cfg,
                                      const ModeHypothesis& true_mode) {
  const auto& M = cfg.model;
  const Index n = M.n();
  const Index l = M.l();
  const Index m = M.m();
  const int N = cfg.horizon;
  PlantTrajectory tr;

  auto rng_init = make_stream(cfg.noise_seed, 0);
  auto rng_w = make_stream(cfg.noise_seed, 1);
  auto rng_v = make_stream(cfg.noise_seed, 2);

  tr.xhat0 = cfg.xhat0 ? *cfg.xhat0 : Vector::Zero(n);
  const Vector x0 =
      cfg.x0 ? *cfg.x0
             : Vector(tr.xhat0 + sample_bounded(n, M.delta_x0, rng_init,
                                                cfg.noise_shape));

  if (!cfg.attack.values.empty()) {
    tr.d = cfg.attack.values;
  } else {
    tr.d = default_attack(cfg.attack, true_mode.rho(), N);
  }
  tr.u = cfg.known_input;
  if (tr.u.empty()) tr.u.assign(static_cast<std::size_t>(N + 1), Vector::Zero(m));
  if (static_cast<int>(tr.d.size()) != N + 1 ||
      static_cast<int>(tr.u.size()) != N + 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "attack and known-input sequences need horizon + 1 samples");
  }

  Vector x = x0;
  for (int k = 0; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const Vector vk = sample_bounded(l, M.eta_v, rng_v, cfg.noise_shape);
    tr.x.push_back(x);
    tr.v.push_back(vk);
    tr.y.push_back(M.C * x + M.D * tr.u[ks] + true_mode.Hq * tr.d[ks] + vk);
    if (k == N) break;
    const Vector wk = sample_bounded(n, M.eta_w, rng_w, cfg.noise_shape);
    tr.w.push_back(wk);
    x = M.A * x + M.B * tr.u[ks] + true_mode.Gq * tr.d[ks] + wk;
  }
  return tr;
}

struct ModeStepRecord {
  int mode_id = 0;
  bool stepped = false;  // false once frozen after elimination
  ResidualRecord res;
  Vector xhat;
  double delta_x = 0.0;
  Vector dhat;
  double delta_d = 0.0;
};

struct StepRecord {
  int k = 0;
  std::vector<ModeStepRecord> modes;
  std::vector<int> active;  // after this step's eliminations
};

struct ModeStatus {
  int id = 0;
  std::string label;
  bool designed = false;
  bool strongly_detectable = false;
  std::string diagnostic;
  std::optional<int> eliminated_at;
};

struct RunTrace {
  std::vector<ModeHypothesis> modes;
  std::vector<ModeStatus> status;
  PlantTrajectory plant;
  std::vector<StepRecord> steps;  // k = 1..N (or fewer on fault)
  int true_mode = 0;
  bool fault_all_eliminated = false;
  Index n = 0;
  Index rho = 0;
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SMIO_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

inline std::vector<ModeHypothesis> scenario_modes(const ScenarioConfig& cfg) {
  const auto& M = cfg.model;
  if (cfg.explicit_modes.empty()) {
    return enumerate_modes(static_cast<int>(M.t_a()), static_cast<int>(M.t_s()),
                           cfg.rho, M.G, M.H);
  }
  std::vector<ModeHypothesis> modes;
  int id = 1;
  for (const auto& [acts, sens] : cfg.explicit_modes) {
    auto mode = make_mode(id++, acts, sens, M.G, M.H);
    if (mode.rho() != cfg.rho) {
      throw Error(ErrorCode::kInvalidSparsity,
                  "mode " + std::to_string(mode.id) + " has " +
                      std::to_string(mode.rho()) + " attacked channels, rho = " +
                      std::to_string(cfg.rho));
    }
    modes.push_back(std::move(mode));
  }
  return modes;
}

namespace detail {

struct BankEntry {
  ModeDesign design;
  ObserverState state;
  ThresholdTracker tracker;
  bool active = false;
};

template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Runs the observer bank over a simulated trajectory of the true mode.
inline RunTrace run_pipeline(const ScenarioConfig& cfg) {
  const auto problems = validate(cfg.model);
  if (!problems.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                problems.front().field + ": " + problems.front().message);
  }
  if (cfg.horizon < 1) {
    throw Error(ErrorCode::kInvalidArgument, "horizon must be >= 1");
  }
  const auto& M = cfg.model;
  RunTrace trace;
  trace.modes = scenario_modes(cfg);
  trace.true_mode = cfg.true_mode;
  trace.n = M.n();
  trace.rho = cfg.rho;
  if (cfg.true_mode < 1 || cfg.true_mode > static_cast<int>(trace.modes.size())) {
    throw Error(ErrorCode::kInvalidArgument,
                "true_mode " + std::to_string(cfg.true_mode) +
                    " outside the mode set 1.." +
                    std::to_string(trace.modes.size()));
  }
  trace.plant = simulate_plant(
      cfg, trace.modes[static_cast<std::size_t>(cfg.true_mode - 1)]);
  const auto& plant = trace.plant;

  // Per-mode design; modes that fail are excluded up front.
  std::vector<detail::BankEntry> bank;
  bank.reserve(trace.modes.size());
  for (const auto& mode : trace.modes) {
    ModeStatus st;
    st.id = mode.id;
    st.label = mode.label();
    const auto zeros = invariant_zeros(M.A, mode.Gq, M.C, mode.Hq);
    st.strongly_detectable = zeros.strongly_detectable;
    detail::BankEntry entry;
    if (!zeros.strongly_detectable) {
      st.diagnostic = "not strongly detectable: " + zeros.diagnostic;
    } else {
      try {
        std::optional<Matrix> ov;
        if (auto it = cfg.ltilde_override.find(mode.id);
            it != cfg.ltilde_override.end()) {
          ov = it->second;
        }
        entry.design = design_mode(M, mode, ov);
        st.designed = true;
      } catch (const Error& e) {
        st.diagnostic = e.what();
      }
    }
    entry.active = st.designed;
    if (st.designed) {
      entry.state = init_observer(plant.xhat0, M.delta_x0);
      entry.state = step(entry.state, entry.design, plant.u[0], plant.y[0], M);
    }
    trace.status.push_back(st);
    bank.push_back(std::move(entry));
  }
  // Trackers keep pointers into the bank, so build them after it is final.
  for (auto& e : bank) {
    if (e.active) {
      e.tracker = ThresholdTracker(e.design.ed, e.design.dec, M.delta_x0,
                                   M.eta_w, M.eta_v);
    }
  }

  const int threads = resolve_threads(cfg.threads);
  std::vector<int> active;
  for (const auto& e : bank) {
    if (e.active) active.push_back(e.design.mode.id);
  }
  if (active.empty()) {
    trace.fault_all_eliminated = true;
    return trace;
  }

  for (int k = 1; k <= cfg.horizon; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    StepRecord rec;
    rec.k = k;
    rec.modes.resize(bank.size());
    detail::parallel_for(bank.size(), threads, [&](std::size_t i) {
      auto& e = bank[i];
      auto& out = rec.modes[i];
      out.mode_id = trace.modes[i].id;
      if (!e.active) {
        out.stepped = false;
        out.xhat = e.state.xhat_kk;
        out.delta_x = e.state.delta_x;
        out.dhat = e.state.dhat_prev;
        out.delta_d = e.state.delta_d;
        return;
      }
      e.state = step(std::move(e.state), e.design, plant.u[ks], plant.y[ks], M);
      auto& r = out.res;
      r.mode_id = out.mode_id;
      r.k = k;
      r.r = e.state.residual;
      r.r_norm = r.r.norm();
      const double slack = roundoff_allowance(e.design.dec, e.state.xhat_star,
                                              plant.u[ks], plant.y[ks]);
      r.delta_tri = e.tracker.next() + slack;
      r.delta_hat = r.delta_tri;
      if (k <= cfg.k_inf_cutoff) {
        const auto sm = build_stacked(e.design.ed, e.design.dec, k, M.delta_x0,
                                      M.eta_w, M.eta_v);
        r.delta_inf = threshold_inf(sm, cfg.enum_budget) + slack;
        r.delta_hat = std::min(*r.delta_inf, r.delta_tri);
      }
      r.eliminated = eliminate(r.r_norm, r.delta_hat);
      out.stepped = true;
      out.xhat = e.state.xhat_kk;
      out.delta_x = e.state.delta_x;
      out.dhat = e.state.dhat_prev;
      out.delta_d = e.state.delta_d;
    });

    // Barrier: collect verdicts, then shrink the active set.
    std::vector<int> next;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      auto& e = bank[i];
      if (!e.active) continue;
      if (rec.modes[i].res.eliminated) {
        e.active = false;
        trace.status[i].eliminated_at = k;
      } else {
        next.push_back(e.design.mode.id);
      }
    }
    active = next;
    rec.active = active;
    trace.steps.push_back(std::move(rec));
    if (active.empty()) {
      trace.fault_all_eliminated = true;
      break;
    }
  }
  return trace;
}

struct RunSummary {
  std::vector<int> final_active;
  std::map<int, std::optional<int>> first_elimination;
  int eliminated_count = 0;
  bool true_mode_survived = true;
  int containment_violations = 0;  // true-mode state or input outside its ball
  int soundness_violations = 0;    // true-mode residual above its threshold
  int steps = 0;
  bool fault_all_eliminated = false;
};

inline bool outside_ball(const Vector& truth, const Vector& center,
                         double radius) {
  const double err = (truth - center).norm();
  return err > radius * (1.0 + 1e-9) + 1e-12;
}

inline RunSummary summarize(const RunTrace& trace) {
  RunSummary s;
  s.fault_all_eliminated = trace.fault_all_eliminated;
  s.steps = static_cast<int>(trace.steps.size());
  for (const auto& st : trace.status) {
    s.first_elimination[st.id] = st.eliminated_at;
    if (st.eliminated_at) ++s.eliminated_count;
    if (st.id == trace.true_mode && (st.eliminated_at || !st.designed)) {
      s.true_mode_survived = false;
    }
  }
  s.final_active = trace.steps.empty() ? std::vector<int>{}
                                       : trace.steps.back().active;
  if (trace.steps.empty()) {
    for (const auto& st : trace.status) {
      if (st.designed) s.final_active.push_back(st.id);
    }
  }
  const auto tq = static_cast<std::size_t>(trace.true_mode - 1);
  for (const auto& step : trace.steps) {
    const auto& mr = step.modes[tq];
    if (!mr.stepped) continue;
    const auto ks = static_cast<std::size_t>(step.k);
    if (outside_ball(trace.plant.x[ks], mr.xhat, mr.delta_x)) {
      ++s.containment_violations;
    }
    if (outside_ball(trace.plant.d[ks - 1], mr.dhat, mr.delta_d)) {
      ++s.containment_violations;
    }
    if (mr.res.r_norm > mr.res.delta_hat) ++s.soundness_violations;
  }
  return s;
}

/// Built-in benchmark: five-state plant, one vulnerable actuator and four
/// vulnerable sensors, four of five channels attacked.
inline ScenarioConfig benchmark_scenario(std::uint64_t seed = 1,
                                         int horizon = 200) {
  ScenarioConfig cfg;
  cfg.model = benchmark_model();
  cfg.rho = 4;
  cfg.true_mode = 1;
  cfg.horizon = horizon;
  cfg.noise_seed = seed;
  cfg.attack.amplitude = 1.0;
  cfg.attack.bias = 0.5;
  cfg.attack.frequency = 0.3;
  return cfg;
}

/// Designs every hypothesis of the scenario and evaluates the pairwise
/// detectability conditions. Modes whose design fails are left out of the
/// pairs and reported through `status`.
struct AnalysisResult {
  std::vector<ModeHypothesis> modes;
  std::vector<ModeStatus> status;
  std::vector<ModeDesign> designs;
  DetectabilityReport report;
};

inline AnalysisResult analyze_scenario(const ScenarioConfig& cfg,
                                       std::optional<double> R_x,
                                       std::optional<double> R_y) {
  const auto& M = cfg.model;
  AnalysisResult out;
  out.modes = scenario_modes(cfg);
  for (const auto& mode : out.modes) {
    ModeStatus st;
    st.id = mode.id;
    st.label = mode.label();
    const auto zeros = invariant_zeros(M.A, mode.Gq, M.C, mode.Hq);
    st.strongly_detectable = zeros.strongly_detectable;
    if (!zeros.strongly_detectable) {
      st.diagnostic = "not strongly detectable: " + zeros.diagnostic;
    } else {
      try {
        std::optional<Matrix> ov;
        if (auto it = cfg.ltilde_override.find(mode.id);
            it != cfg.ltilde_override.end()) {
          ov = it->second;
        }
        out.designs.push_back(design_mode(M, mode, ov));
        st.designed = true;
      } catch (const Error& e) {
        st.diagnostic = e.what();
      }
    }
    out.status.push_back(st);
  }
  std::vector<AnalyzedMode> analyzed;
  for (const auto& d : out.designs) {
    AnalyzedMode a;
    a.id = d.mode.id;
    a.dec = &d.dec;
    try {
      a.tri_bar = tri_limit(d.ed, d.dec, M.eta_w, M.eta_v);
    } catch (const Error&) {
      a.tri_bar.reset();
    }
    analyzed.push_back(a);
  }
  out.report = detectability_report(analyzed, M, R_x, R_y);
  return out;
}

}  // namespace smio
