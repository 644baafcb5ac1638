#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mergesim/core.hpp"
#include "mergesim/metrics.hpp"
#include "mergesim/simulate.hpp"

namespace mergesim {

struct OptimizerConfig {
  int max_iters = 500;
  double spread_tol = 1e-4;  // simplex cost spread tolerance
  double x_tol = 1e-4;       // simplex size tolerance in transformed space
  int restarts = 3;          // total simplex runs; the first starts unjittered
  double jitter_frac = 0.1;  // restart jitter, fraction of each bound range
  std::uint64_t seed = 0;
  bool calibrate_coolness = false;  // include "c" in the search space
  bool heuristic_seeding = false;   // start v0/v_des from the observed TA speed
  double fallback_penalty_fraction = 0.5;  // window fallback share that voids a fit
};

struct OptimResult {
  std::vector<double> x;
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  int restarts_used = 0;
  std::vector<double> best_trace;  // best-so-far cost after each iteration
};

namespace detail {

// Bound transform used by sine-constrained simplex solvers:
// x = lo + (hi - lo) * sin^2(y) maps unconstrained y into [lo, hi].
inline double bounded_from_free(double y, double lo, double hi) {
  const double s = std::sin(y);
  return lo + (hi - lo) * s * s;
}

inline double free_from_bounded(double x, double lo, double hi) {
  const double u = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
  return std::asin(std::sqrt(u));
}

struct SimplexVertex {
  std::vector<double> y;
  double cost = 0.0;
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

/// Nelder-Mead over box-bounded variables via the sine transform. Runs the
/// configured number of simplex passes (the first from x0, the rest from
/// jittered copies) and keeps the best. Throws when no starting simplex
/// yields a finite cost.
inline OptimResult nelder_mead_bounded(
    const std::function<double(const std::vector<double>&)>& cost,
    const std::vector<double>& lo, const std::vector<double>& hi,
    const std::vector<double>& x0, const OptimizerConfig& cfg = {}) {
  const std::size_t n = x0.size();
  if (lo.size() != n || hi.size() != n) throw std::invalid_argument("bound size mismatch");
  if (n == 0) throw std::invalid_argument("empty parameter vector");
  for (std::size_t i = 0; i < n; ++i)
    if (!(lo[i] < hi[i])) throw std::invalid_argument("bounds must satisfy lo < hi");

  const auto eval = [&](const std::vector<double>& y) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = detail::bounded_from_free(y[i], lo[i], hi[i]);
    return cost(x);
  };

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  OptimResult best;
  const int runs = std::max(1, cfg.restarts);
  for (int run = 0; run < runs; ++run) {
    std::vector<double> start(n);
    for (std::size_t i = 0; i < n; ++i) {
      double x = x0[i];
      if (run > 0) {
        x += unit(rng) * cfg.jitter_frac * (hi[i] - lo[i]);
        x = std::clamp(x, lo[i], hi[i]);
      }
      start[i] = detail::free_from_bounded(x, lo[i], hi[i]);
    }

    // MATLAB-style initial simplex: perturb each coordinate by 5%, or by a
    // small absolute step when the coordinate is zero.
    std::vector<detail::SimplexVertex> simplex(n + 1);
    simplex[0].y = start;
    for (std::size_t i = 0; i < n; ++i) {
      simplex[i + 1].y = start;
      simplex[i + 1].y[i] += (start[i] != 0.0) ? 0.05 * start[i] : 0.00025;
    }
    bool finite = true;
    for (auto& v : simplex) {
      v.cost = eval(v.y);
      if (!std::isfinite(v.cost)) {
        finite = false;
        break;
      }
    }
    best.restarts_used = run + 1;
    if (!finite) continue;

    const auto order = [&] {
      std::sort(simplex.begin(), simplex.end(),
                [](const auto& a, const auto& b) { return a.cost < b.cost; });
    };
    order();

    // Converged when the cost spread and the simplex extent both collapse,
    // the usual simplex stopping pair.
    const auto small_enough = [&] {
      if (simplex.back().cost - simplex.front().cost >= cfg.spread_tol) return false;
      for (std::size_t v = 1; v <= n; ++v)
        for (std::size_t i = 0; i < n; ++i)
          if (std::abs(simplex[v].y[i] - simplex[0].y[i]) >= cfg.x_tol) return false;
      return true;
    };

    bool converged = false;
    std::vector<double> trace;
    int iter = 0;
    for (; iter < cfg.max_iters; ++iter) {
      if (small_enough()) {
        converged = true;
        break;
      }
      std::vector<double> centroid(n, 0.0);
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[v].y[i];
      for (double& ci : centroid) ci /= static_cast<double>(n);

      const auto blend = [&](double w) {
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i)
          y[i] = centroid[i] + w * (centroid[i] - simplex.back().y[i]);
        return y;
      };

      const std::vector<double> refl = blend(1.0);
      const double f_refl = eval(refl);
      if (f_refl < simplex.front().cost) {
        const std::vector<double> expand = blend(2.0);
        const double f_exp = eval(expand);
        if (f_exp < f_refl)
          simplex.back() = {expand, f_exp};
        else
          simplex.back() = {refl, f_refl};
      } else if (f_refl < simplex[n - 1].cost) {
        simplex.back() = {refl, f_refl};
      } else {
        const bool outside = f_refl < simplex.back().cost;
        const std::vector<double> contr = blend(outside ? 0.5 : -0.5);
        const double f_con = eval(contr);
        if (f_con < (outside ? f_refl : simplex.back().cost)) {
          simplex.back() = {contr, f_con};
        } else {
          for (std::size_t v = 1; v <= n; ++v) {
            for (std::size_t i = 0; i < n; ++i)
              simplex[v].y[i] =
                  simplex[0].y[i] + 0.5 * (simplex[v].y[i] - simplex[0].y[i]);
            simplex[v].cost = eval(simplex[v].y);
          }
        }
      }
      order();
      trace.push_back(simplex.front().cost);
    }

    best.iterations += iter;
    if (simplex.front().cost < best.cost) {
      best.cost = simplex.front().cost;
      best.x.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        best.x[i] = detail::bounded_from_free(simplex.front().y[i], lo[i], hi[i]);
      best.converged = converged;
      best.best_trace = std::move(trace);
    }
  }

  if (!std::isfinite(best.cost) || best.x.empty())
    throw std::runtime_error("unfittable event: no finite starting simplex");
  return best;
}

/// Calibrated parameters and diagnostics for one event / model pair.
struct FitResult {
  std::string event_id;
  ModelKind model_kind = ModelKind::IDM;
  ModelParams fitted_params;
  double cost = 1.0;
  int iterations = 0;
  bool converged = false;
  int restarts_used = 0;
};

/// Fits one model to one event by minimizing Theil's U between the
/// simulated and recorded TA speed profiles over the evaluation window.
/// Rollouts that spend more than the configured fraction of the window in
/// fallback are scored 1, steering the search away from degenerate regions.
inline FitResult fit_event(const MergeEvent& event, ModelKind kind,
                           const std::optional<ModelParams>& bounds_override = std::nullopt,
                           const OptimizerConfig& cfg = {}) {
  ModelParams params = bounds_override.value_or(default_params(kind));
  std::vector<std::string> names = free_param_names(kind);
  if (cfg.calibrate_coolness && params.values.count("c") != 0) names.push_back("c");

  // Optional event-derived starting point: the desired speed rarely sits
  // far from the fastest speed the TA actually drove.
  if (cfg.heuristic_seeding) {
    const ActorTrack* ta = event.find(ActorKind::TA);
    if (ta != nullptr && !ta->samples.empty()) {
      double v_max = 0.0;
      for (const auto& s : ta->samples) v_max = std::max(v_max, s.speed);
      for (const char* name : {"v0", "v_des"})
        if (params.values.count(name) != 0) params.values[name] = 1.1 * v_max;
    }
  }

  std::vector<double> lo, hi, x0;
  for (const auto& name : names) {
    auto it = params.bounds.find(name);
    if (it == params.bounds.end())
      throw std::invalid_argument("no bounds for parameter: " + name);
    if (!(it->second.lo < it->second.hi))
      throw std::invalid_argument("degenerate bounds for parameter: " + name);
    lo.push_back(it->second.lo);
    hi.push_back(it->second.hi);
    x0.push_back(std::clamp(params.at(name), it->second.lo, it->second.hi));
  }

  SimConfig sim_cfg;
  sim_cfg.model = kind;

  const auto cost = [&](const std::vector<double>& x) {
    ModelParams trial = params;
    for (std::size_t i = 0; i < names.size(); ++i) trial.values[names[i]] = x[i];
    trial.kind = kind;
    SimConfig c = sim_cfg;
    c.params = trial;
    const SimResult sim = simulate_event(event, c);
    if (sim.times.empty()) return 1.0;
    if (sim.fallback_fraction() > cfg.fallback_penalty_fraction) return 1.0;
    return theil_u(sim.ta_speed, sim.raw_speed);
  };

  const OptimResult opt = nelder_mead_bounded(cost, lo, hi, x0, cfg);

  FitResult fit;
  fit.event_id = event.event_id;
  fit.model_kind = kind;
  fit.fitted_params = params;
  fit.fitted_params.kind = kind;
  for (std::size_t i = 0; i < names.size(); ++i)
    fit.fitted_params.values[names[i]] = opt.x[i];
  fit.cost = opt.cost;
  fit.iterations = opt.iterations;
  fit.converged = opt.converged;
  fit.restarts_used = opt.restarts_used;
  return fit;
}

struct CorpusFitConfig {
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct CorpusFitResult {
  std::vector<FitResult> fits;  // sorted by (event_id, model)
  std::map<ModelKind, SummaryStats> summaries;
  std::vector<std::string> failures;  // "event_id/model: reason"
};

/// Fits every (event, model) pair independently on a bounded worker pool.
/// Work items carry their own seeds derived from the master seed and the
/// pair identity, so results do not depend on scheduling or job count.
inline CorpusFitResult fit_corpus(const std::vector<MergeEvent>& events,
                                  const std::vector<ModelKind>& kinds,
                                  const CorpusFitConfig& cfg = {}) {
  if (events.empty() || kinds.empty())
    throw std::invalid_argument("fit_corpus needs events and models");

  struct Item {
    const MergeEvent* event;
    ModelKind kind;
  };
  std::vector<Item> items;
  for (const auto& e : events)
    for (ModelKind k : kinds) items.push_back({&e, k});

  std::vector<std::optional<FitResult>> slots(items.size());
  std::vector<std::string> errors(items.size());

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= items.size()) return;
      OptimizerConfig oc = cfg.optimizer;
      oc.seed = cfg.seed ^ detail::fnv1a64(items[i].event->event_id + "|" +
                                           to_string(items[i].kind));
      try {
        slots[i] = fit_event(*items[i].event, items[i].kind, std::nullopt, oc);
      } catch (const std::exception& ex) {
        errors[i] = items[i].event->event_id + "/" + to_string(items[i].kind) + ": " +
                    ex.what();
      }
    }
  };

  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  CorpusFitResult out;
  std::map<ModelKind, std::vector<double>> costs;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (slots[i].has_value()) {
      costs[slots[i]->model_kind].push_back(slots[i]->cost);
      out.fits.push_back(std::move(*slots[i]));
    } else if (!errors[i].empty()) {
      out.failures.push_back(errors[i]);
    }
  }
  std::sort(out.fits.begin(), out.fits.end(), [](const FitResult& a, const FitResult& b) {
    if (a.event_id != b.event_id) return a.event_id < b.event_id;
    return to_string(a.model_kind) < to_string(b.model_kind);
  });
  for (auto& [kind, list] : costs) out.summaries[kind] = summarize_errors(list);
  return out;
}

}  // namespace mergesim
