// ternkin: batch front-end for the kinetic workbench.
//
//   ternkin <experiment> --config run.json [--seed N] [--out DIR] [--threads N]
//   ternkin run --config run.json ...          (experiment taken from the config)
//   ternkin emit-report DIR [--out DIR]
//
// Exit status: 0 all checks passed, 1 runtime failure, 2 invalid config or
// usage, 3 the run completed but a configured check failed.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <boost/version.hpp>
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "params.hpp"
#include "ternkin/boltzmann.hpp"
#include "ternkin/dynamics.hpp"
#include "ternkin/experiments.hpp"
#include "ternkin/hierarchy.hpp"
#include "ternkin/io.hpp"
#include "ternkin/measures.hpp"
#include "ternkin/parallel.hpp"
#include "ternkin/pseudotraj.hpp"
#include "ternkin/stats.hpp"

#ifndef TERNKIN_VERSION
#define TERNKIN_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using tkcli::Params;
using tkcli::SchemaError;

namespace {

const std::vector<std::string> kExperiments = {"simulate",        "marginals",  "boltzmann",
                                               "pseudotraj",      "verify-geometry", "convergence"};

struct Run {
  std::string experiment;
  std::uint64_t seed = 0;
  fs::path dir;
  unsigned threads = 1;
  json checks = json::array();
  json summary = json::object();
  std::vector<std::string> outputs;

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return dir / name;
  }
  void check(const std::string& name, bool pass, json detail = json::object()) {
    detail["name"] = name;
    detail["pass"] = pass;
    checks.push_back(std::move(detail));
  }
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c["pass"].get<bool>()) return false;
    return true;
  }
};

using Job = std::function<void(Run&)>;

tk::Vec to_vec(const std::vector<double>& a) {
  tk::Vec v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i];
  return v;
}

void warn(const std::string& msg) { std::cerr << "ternkin: warning: " << msg << '\n'; }

tk::Configuration parse_particles(const json& a, std::size_t d) {
  if (!a.is_array() || a.size() < 1) throw SchemaError("params.particles: expected a non-empty array");
  std::vector<tk::Vec> xs, vs;
  for (const auto& p : a) {
    if (!p.is_object() || !p.contains("x") || !p.contains("v") || p.size() != 2)
      throw SchemaError("params.particles: each entry needs exactly x and v");
    try {
      xs.push_back(tk::io::vec_from_json(p["x"]));
      vs.push_back(tk::io::vec_from_json(p["v"]));
    } catch (const std::invalid_argument& e) {
      throw SchemaError(std::string("params.particles: ") + e.what());
    }
    if (xs.back().size() != d || vs.back().size() != d)
      throw SchemaError("params.particles: vectors must have dimension d");
  }
  return {xs, vs};
}

json fit_json(const tk::PowerFit& f) {
  return {{"constant", f.constant}, {"exponent", f.exponent}, {"exponent_se", f.exponent_se},
          {"exponent_ci", {f.lo, f.hi}}};
}

std::optional<std::pair<double, double>> window(Params& p, const std::string& key) {
  if (!p.has(key)) return std::nullopt;
  const auto w = p.nums(key, {});
  if (w.size() != 2 || !(w[0] <= w[1])) throw SchemaError(p.path(key) + ": expected [lo, hi]");
  return std::make_pair(w[0], w[1]);
}

// ---------------------------------------------------------------------------
// simulate

Job parse_simulate(Params& p) {
  const std::size_t d = p.count("d", 2, 2);
  tk::FlowParams fp;
  fp.eps2 = p.positive("eps2", 0.1);
  fp.eps3 = p.positive("eps3", 0.2);
  fp.box = p.num("box", 0.0);
  fp.policy = tk::parse_policy(p.choice("policy", "skip", {"abort", "perturb", "skip"}));
  fp.graze_rel = p.positive("graze_rel", fp.graze_rel);
  fp.tie_tol = p.positive("tie_tol", fp.tie_tol);
  fp.max_events = p.count("max_events", fp.max_events, 1);
  const double horizon = p.positive("horizon", 1.0);
  const double band = p.positive("admissibility_band", 1e-9);
  fp.validate();

  std::optional<tk::Configuration> fixed;
  std::size_t N = 0;
  tk::DensitySpec ds;
  if (p.has("particles")) {
    if (p.has("random")) throw SchemaError("params: give either particles or random, not both");
    fixed = parse_particles(p.raw("particles"), d);
    if (!tk::admissible(*fixed, fp.eps2, fp.eps3, band, fp.box))
      throw SchemaError("params.particles: configuration is not admissible");
  } else {
    Params r(p.has("random") ? p.raw("random") : json::object(), "params.random");
    N = r.count("N", 20, 2);
    ds.beta = r.positive("beta", 1.0);
    ds.box = r.positive("side", fp.box > 0 ? fp.box : 1.0);
    ds.periodic = fp.box > 0;
    if (fp.box > 0 && ds.box != fp.box) throw SchemaError("params.random.side must equal box when box > 0");
    r.finish();
    p.set_resolved("random", r.resolved());
  }

  return [=](Run& run) {
    tk::Rng rng = tk::make_rng(run.seed);
    const tk::Configuration z0 = fixed ? *fixed : tk::sample_admissible_initial(N, d, fp.eps2, fp.eps3, ds, rng);
    tk::io::write_json(run.file("initial_state.json"), tk::io::to_json(z0));
    std::ofstream events(run.file("events.jsonl"));
    std::vector<std::string> header{"t", "energy"};
    for (std::size_t a = 0; a < d; ++a) header.push_back("momentum_" + std::to_string(a));
    header.push_back("events");
    tk::io::CsvWriter traj(run.file("trajectory.csv"), header);
    const auto row = [&](double t, const tk::Configuration& z, std::size_t n) {
      std::vector<double> r{t, tk::kinetic_energy(z)};
      for (double c : tk::total_momentum(z)) r.push_back(c);
      r.push_back(static_cast<double>(n));
      traj.row(r);
    };
    row(0.0, z0, 0);
    tk::Flow flow(z0, fp);
    std::size_t n = 0;
    const auto cb = [&](const tk::CollisionEvent& ev, const tk::Configuration& before,
                        const tk::Configuration& after) {
      events << tk::io::event_record(ev, before, after).dump() << '\n';
      row(ev.t, after, ++n);
    };
    bool completed;
    try {
      completed = flow.advance(horizon, cb);
    } catch (const tk::PathologyError& e) {
      throw std::runtime_error(std::string("simulate: ") + e.what());
    }
    const auto& zf = flow.state();
    row(flow.time(), zf, n);
    tk::io::write_json(run.file("final_state.json"), tk::io::to_json(zf));
    if (!completed) warn("simulate: pathological event, run stopped at t=" + tk::io::fmt(flow.time()));

    const double e0 = tk::kinetic_energy(z0), e1 = tk::kinetic_energy(zf);
    double scale = 0;
    for (const auto& v : z0.v) scale += tk::norm(v);
    const double dp = tk::norm(tk::total_momentum(zf) - tk::total_momentum(z0));
    const auto& st = flow.stats();
    run.summary = {{"events", st.events},     {"binary", st.binary},       {"ternary", st.ternary},
                   {"grazing", st.grazing},   {"multiple", st.multiple},   {"final_time", flow.time()},
                   {"stopped_by_pathology", !completed}};
    run.check("energy_drift", std::abs(e1 - e0) <= 1e-9 * std::max(e0, 1e-300),
              {{"value", std::abs(e1 - e0) / std::max(e0, 1e-300)}, {"tolerance", 1e-9}});
    run.check("momentum_drift", dp <= 1e-9 * std::max(scale, 1.0), {{"value", dp}, {"tolerance", 1e-9}});
    run.check("admissible", tk::admissible(zf, fp.eps2, fp.eps3, band, fp.box));
  };
}

// ---------------------------------------------------------------------------
// marginals

tk::VelocityLaw parse_velocity_law(Params& p, std::size_t d) {
  const auto init = p.choice("init", "two-temperature", {"maxwellian", "two-temperature"});
  if (init == "maxwellian") return tk::maxwellian_law(d, p.positive("beta", 1.0));
  const double tc = p.positive("t_cold", 0.3), th = p.positive("t_hot", 1.7);
  return tk::two_temperature_law(d, tc, th);
}

Job parse_marginals(Params& p) {
  const std::size_t N = p.count("N", 64, 3), d = p.count("d", 2, 2);
  const auto sc = tk::scaled_epsilons(N, d, p.positive("c2", 1.0), p.positive("c3", 1.0));
  const std::size_t ensemble = p.count("ensemble", 200, 1);
  const double horizon = p.num("horizon", 0.5);
  if (horizon < 0) throw SchemaError("params.horizon: must be >= 0");
  const std::size_t s = p.count("s", 1, 1);
  if (s > 2 || s > N) throw SchemaError("params.s: must be 1 or 2");
  const std::size_t bins = p.count("bins", 6, 1);
  const double vmax = p.positive("vmax", 3.5);
  const bool all_tuples = p.flag("all_tuples", true);
  tk::FlowParams fp;
  fp.eps2 = sc.eps2;
  fp.eps3 = sc.eps3;
  fp.box = 1.0;
  fp.policy = tk::parse_policy(p.choice("policy", "skip", {"abort", "perturb", "skip"}));
  fp.validate_regime();
  tk::DensitySpec ds;
  ds.velocity = parse_velocity_law(p, d);
  const auto grid = tk::ParticleGrid::uniform(d, -vmax, vmax, bins);

  return [=](Run& run) {
    const std::size_t shards = std::min<std::size_t>(ensemble, 64);
    std::vector<tk::MarginalHistogram> part(shards, tk::empty_marginal(s, grid));
    std::vector<std::size_t> skipped(shards, 0);
    tk::parallel_shards(
        shards,
        [&](std::size_t sh) {
          for (std::size_t r = sh; r < ensemble; r += shards) {
            tk::Rng rng = tk::make_rng(run.seed, r);
            tk::Flow f(tk::sample_admissible_initial(N, d, sc.eps2, sc.eps3, ds, rng), fp);
            if (!f.advance(horizon)) {
              ++skipped[sh];
              continue;
            }
            tk::accumulate_marginal(part[sh], f.state(), all_tuples);
          }
        },
        run.threads);
    auto h = tk::empty_marginal(s, grid);
    std::size_t skip = 0;
    for (std::size_t sh = 0; sh < shards; ++sh) {
      h.merge(part[sh]);
      skip += skipped[sh];
    }
    if (skip == ensemble) throw std::runtime_error("marginals: every run stopped on a pathology");
    std::vector<std::string> header;
    for (std::size_t q = 1; q <= s; ++q)
      for (std::size_t a = 0; a < d; ++a) {
        const std::string c = "v" + std::to_string(q) + "_" + std::to_string(a);
        header.push_back(c + "_lo");
        header.push_back(c + "_hi");
      }
    header.push_back("mass");
    header.push_back("density");
    tk::io::CsvWriter csv(run.file("marginal.csv"), header);
    const auto mass = h.mass(), dens = h.density();
    const double w = 2.0 * vmax / static_cast<double>(bins);
    const std::size_t g = grid.cells();
    double total = 0;
    for (std::size_t id = 0; id < h.cells(); ++id) {
      std::vector<double> r;
      std::vector<std::size_t> cells(s);
      std::size_t rest = id;
      for (std::size_t q = s; q-- > 0;) {
        cells[q] = rest % g;
        rest /= g;
      }
      for (std::size_t q = 0; q < s; ++q) {
        const auto c = grid.center(cells[q]);
        for (std::size_t a = 0; a < d; ++a) {
          r.push_back(c[a] - w / 2);
          r.push_back(c[a] + w / 2);
        }
      }
      r.push_back(mass[id]);
      r.push_back(dens[id]);
      total += mass[id];
      csv.row(r);
    }
    run.summary = {{"N", N},         {"eps2", sc.eps2},           {"eps3", sc.eps3},
                   {"runs", ensemble - skip}, {"skipped", skip}, {"outside_fraction", h.outside_fraction()}};
    run.check("mass_normalized", std::abs(total - 1.0) < 1e-12, {{"value", total}});
  };
}

// ---------------------------------------------------------------------------
// boltzmann

Job parse_boltzmann(Params& p) {
  const std::size_t n = p.count("n", 10000, 3), d = p.count("d", 2, 2);
  const auto init = p.choice("init", "bimodal", {"maxwellian", "bimodal"});
  const double beta = p.positive("beta", 1.0);
  const double t1 = p.positive("t1", 0.3), t2 = p.positive("t2", 1.7);
  tk::SolverParams sp;
  sp.dt = p.positive("dt", 0.01);
  sp.kappa2 = p.num("kappa2", 1.0);
  sp.kappa3 = p.num("kappa3", 1.0);
  sp.R = p.num("R", 0.0);
  sp.kernel = tk::parse_kernel(p.choice("kernel", "scaled", {"scaled", "flux"}));
  const std::size_t steps = p.count("steps", 100, 1);
  const bool snapshot = p.flag("snapshot", false);
  sp.validate();

  return [=](Run& run) {
    tk::Rng rng = tk::make_rng(run.seed);
    const auto e = init == "maxwellian" ? tk::maxwellian_ensemble(n, beta, d, rng)
                                        : tk::bimodal_ensemble(n, t1, t2, d, rng);
    const auto res = tk::relax_run(e, sp, steps, rng);
    std::vector<std::string> header{"t", "mass"};
    for (std::size_t a = 0; a < d; ++a) header.push_back("momentum_" + std::to_string(a));
    for (const char* c : {"energy", "fourth", "fourth_se", "entropy", "entropy_se"}) header.push_back(c);
    tk::io::CsvWriter csv(run.file("moments.csv"), header);
    const auto& first = res.series.front();
    double de = 0, dp = 0;
    std::vector<double> f4;
    for (const auto& m : res.series) {
      std::vector<double> r{m.t, m.mass};
      for (double c : m.momentum) r.push_back(c);
      for (double c : {m.energy, m.fourth, m.fourth_se, m.entropy, m.entropy_se}) r.push_back(c);
      csv.row(r);
      de = std::max(de, std::abs(m.energy - first.energy) / first.energy);
      dp = std::max(dp, tk::norm(m.momentum - first.momentum) / std::sqrt(2 * first.energy));
      f4.push_back(m.fourth);
    }
    if (snapshot) {
      std::ofstream s(run.file("snapshot.jsonl"));
      for (const auto& v : res.final_state.v) s << json{{"v", tk::io::to_json(v)}}.dump() << '\n';
    }
    const auto& last = res.series.back();
    const auto mk = tk::mann_kendall(f4);
    run.summary = {{"accepted2", res.totals.accepted2},     {"accepted3", res.totals.accepted3},
                   {"candidates2", res.totals.candidates2}, {"candidates3", res.totals.candidates3},
                   {"mann_kendall", {{"s", mk.s}, {"z", mk.z}, {"p_value", mk.p_value}}}};
    run.check("energy_conserved", de <= 1e-12, {{"value", de}});
    run.check("momentum_conserved", dp <= 1e-12, {{"value", dp}});
    if (init == "maxwellian") {
      const auto z = [](double a, double b, double sa, double sb) {
        return std::abs(a - b) / std::max(std::hypot(sa, sb), 1e-300);
      };
      const double zf = z(last.fourth, first.fourth, last.fourth_se, first.fourth_se);
      const double zh = z(last.entropy, first.entropy, last.entropy_se, first.entropy_se);
      run.check("stationary_fourth_moment", zf <= 3.0, {{"z", zf}});
      run.check("stationary_entropy", zh <= 3.0, {{"z", zh}});
    } else {
      run.check("fourth_moment_trend", mk.p_value < 0.01 && mk.s < 0, {{"p_value", mk.p_value}, {"s", mk.s}});
    }
  };
}

// ---------------------------------------------------------------------------
// pseudotraj

json traj_json(const tk::PseudoTrajectory& pt, std::size_t i) { return tk::io::to_json(pt.states[i]); }

Job parse_pseudotraj(Params& p) {
  const std::size_t d = p.count("d", 2, 2);
  const std::size_t s_max = p.count("s_max", 3, 1), k_max = p.count("k_max", 6, 1);
  const double delta = p.num("delta", 0.01), t = p.positive("t", 1.0), R = p.positive("R", 3.0);
  const double eps2 = p.positive("eps2", 1e-3), eps3 = p.positive("eps3", 1e-2);
  const std::size_t sequences = p.count("sequences", 10000, 1), dump = p.count("dump", 5);
  if (!(eps2 < eps3)) throw SchemaError("params: need eps2 < eps3");
  if (!(delta >= 0) || (static_cast<double>(k_max) + 1.0) * delta > t)
    throw SchemaError("params: need 0 <= delta and (k_max + 1) delta <= t");

  return [=](Run& run) {
    tk::Rng rng = tk::make_rng(run.seed);
    std::ofstream js(run.file("pseudotraj.jsonl"));
    tk::io::CsvWriter csv(run.file("proximity.csv"),
                          {"sequence", "s", "k", "max_gap_ratio", "max_velocity_gap", "holds"});
    std::size_t failures = 0;
    double worst = 0, vgap = 0;
    for (std::size_t n = 0; n < sequences; ++n) {
      const std::size_t k = 1 + n % k_max, s = 1 + (n / k_max) % s_max;
      std::vector<tk::Vec> x, v;
      for (std::size_t i = 0; i < s; ++i) {
        x.push_back(tk::sample_ball(d, 1.0, rng));
        v.push_back(tk::sample_ball(d, R, rng));
      }
      const tk::Configuration zs(x, v);
      const auto smp = tk::sample_sequence(s, k, delta, t, R, d, rng, &zs);
      const auto rep = tk::proximity_check(zs, smp.seq, smp.data, eps2, eps3);
      double ratio = 0;
      for (std::size_t i = 1; i < rep.max_gap.size(); ++i) ratio = std::max(ratio, rep.max_gap[i] / rep.bound[i]);
      worst = std::max(worst, ratio);
      vgap = std::max(vgap, rep.max_velocity_gap);
      failures += !rep.holds;
      csv.row({static_cast<double>(n), static_cast<double>(s), static_cast<double>(k), ratio,
               rep.max_velocity_gap, rep.holds ? 1.0 : 0.0});
      if (n < dump) {
        const auto a = tk::boltzmann_pseudo(zs, smp.seq, smp.data);
        const auto b = tk::bbgky_pseudo(zs, smp.seq, smp.data, eps2, eps3);
        for (std::size_t i = 0; i < a.states.size(); ++i) {
          json rec = {{"sequence", n}, {"step", i}, {"time", a.times[i]},
                      {"boltzmann", traj_json(a, i)}, {"bbgky", traj_json(b, i)}};
          if (i >= 1) {
            rec["gap"] = rep.max_gap[i - 1];
            rec["bound"] = rep.bound[i - 1];
          }
          if (i >= 1 && i <= k) {
            rec["sigma"] = smp.seq.sigma[i - 1];
            rec["jump"] = smp.seq.jumps[i - 1];
            rec["parent"] = smp.seq.parent[i - 1];
          }
          js << rec.dump() << '\n';
        }
      }
    }
    run.summary = {{"sequences", sequences}, {"worst_gap_ratio", worst}, {"max_velocity_gap", vgap}};
    run.check("proximity_bound", failures == 0, {{"failures", failures}});
    run.check("velocities_equal", vgap == 0.0, {{"value", vgap}});
  };
}

// ---------------------------------------------------------------------------
// verify-geometry

using Study = std::function<json(Run&, std::size_t index)>;

Study parse_set_study(Params& p, tk::SetKind kind, std::size_t samples) {
  tk::SetSpec s;
  s.kind = kind;
  s.d = p.count("d", 2, 2);
  s.alpha = p.num("alpha", 0.0);
  s.rho = p.num("rho", 0.1);
  s.beta = p.num("beta", 0.05);
  s.r = p.num("r", 1.0);
  s.R = p.num("R", 1.0);
  s.offset = p.num("offset", 0.0);
  s.which = static_cast<int>(p.count("which", 1, 1));
  if (p.has("nu")) s.nu = to_vec(p.nums("nu", {}));
  double tk::SetSpec::*field = nullptr;
  std::vector<double> ladder;
  std::string lparam;
  if (p.has("ladder")) {
    Params l(p.raw("ladder"), p.path("ladder"));
    lparam = l.choice("param", "beta", {"alpha", "rho", "beta", "r", "R", "offset"});
    ladder = l.nums("values", {});
    if (ladder.size() < 2) throw SchemaError(l.path("values") + ": need at least two values");
    l.finish();
    p.set_resolved("ladder", l.resolved());
    field = lparam == "alpha" ? &tk::SetSpec::alpha
          : lparam == "rho"   ? &tk::SetSpec::rho
          : lparam == "beta"  ? &tk::SetSpec::beta
          : lparam == "r"     ? &tk::SetSpec::r
          : lparam == "R"     ? &tk::SetSpec::R
                              : &tk::SetSpec::offset;
    for (double v : ladder) {
      auto t = s;
      t.*field = v;
      t.validate();
    }
  } else {
    s.validate();
  }
  const auto expect = window(p, "expect_exponent");
  const double tol = p.positive("se_tolerance", 3.0);

  return [=](Run& run, std::size_t index) {
    tk::Rng rng = tk::make_rng(run.seed, 1000 + index);
    const std::string name = std::string(tk::to_string(kind));
    const auto point = [&](const tk::SetSpec& t, json& rec) {
      const auto e = tk::mc_measure(t, samples, rng, run.threads);
      rec["estimate"] = e.value;
      rec["se"] = e.se;
      rec["samples"] = e.samples;
      if (const auto ex = tk::exact_fraction(t)) {
        const bool ok = std::abs(e.value - *ex) <= tol * e.se + 1e-12;
        rec["exact"] = *ex;
        rec["ratio"] = e.value / *ex;
        rec["ratio_se"] = e.se / *ex;
        rec["within_se"] = ok;
      }
      return e;
    };
    json out = {{"set", name}, {"d", s.d}};
    if (!field) {
      json rec = json::object();
      point(s, rec);
      out.update(rec);
      if (rec.contains("exact"))
        run.check("study_" + std::to_string(index) + "_" + name + "_exact", rec["within_se"].get<bool>(),
                  {{"ratio", rec["ratio"]}, {"ratio_se", rec["ratio_se"]}});
      return out;
    }
    tk::io::CsvWriter csv(run.file("study_" + std::to_string(index) + "_" + name + ".csv"),
                          {lparam, "estimate", "se", "exact"});
    std::vector<double> y, se;
    json pts = json::array();
    bool exact_ok = true, any_exact = false;
    for (double v : ladder) {
      auto t = s;
      t.*field = v;
      json rec = {{lparam, v}};
      const auto e = point(t, rec);
      y.push_back(e.value);
      se.push_back(e.se);
      const double ex = rec.contains("exact") ? rec["exact"].get<double>() : std::nan("");
      if (rec.contains("exact")) {
        any_exact = true;
        exact_ok = exact_ok && rec["within_se"].get<bool>();
      }
      csv.row({v, e.value, e.se, ex});
      pts.push_back(rec);
    }
    const auto fit = tk::power_fit(ladder, y, se);
    out["ladder"] = lparam;
    out["points"] = pts;
    out["fit"] = fit_json(fit);
    const std::string base = "study_" + std::to_string(index) + "_" + name;
    if (any_exact) run.check(base + "_exact", exact_ok);
    if (expect)
      run.check(base + "_exponent", fit.exponent >= expect->first && fit.exponent <= expect->second,
                {{"exponent", fit.exponent}, {"window", {expect->first, expect->second}}});
    return out;
  };
}

Study parse_pathology_study(Params& p, std::size_t samples) {
  const std::size_t m = p.count("m", 3, 2), d = p.count("d", 2, 2);
  const double rho = p.positive("rho", 1.2), R = p.positive("R", 1.1);
  const double eps2 = p.positive("eps2", 0.3), eps3 = p.positive("eps3", 0.5);
  const auto deltas = p.nums("deltas", {0.01, 0.02, 0.04, 0.08});
  const std::size_t n = p.count("samples", samples, 1);
  const auto expect = window(p, "expect_exponent");
  if (deltas.size() < 2 || !(eps2 < eps3)) throw SchemaError(p.path("deltas") + ": need >= 2 values and eps2 < eps3");
  return [=](Run& run, std::size_t index) {
    tk::Rng rng = tk::make_rng(run.seed, 1000 + index);
    const auto r = tk::mc_pathology_scaling(m, d, rho, R, eps2, eps3, deltas, n, rng, run.threads);
    const std::string base = "study_" + std::to_string(index) + "_pathology";
    tk::io::CsvWriter csv(run.file(base + ".csv"), {"delta", "probability", "se", "grazing", "multiple", "two_events"});
    std::size_t multiple = 0;
    for (std::size_t l = 0; l < r.deltas.size(); ++l) {
      csv.row({r.deltas[l], r.probability[l].value, r.probability[l].se, static_cast<double>(r.grazing[l]),
               static_cast<double>(r.multiple[l]), static_cast<double>(r.two_events[l])});
      multiple += r.multiple[l];
    }
    if (m == 2) run.check(base + "_no_multiple", multiple == 0, {{"multiple", multiple}});
    if (expect)
      run.check(base + "_exponent", r.fit.exponent >= expect->first && r.fit.exponent <= expect->second,
                {{"exponent", r.fit.exponent}, {"window", {expect->first, expect->second}}});
    return json{{"set", "pathology"}, {"m", m}, {"d", d}, {"admissible", r.admissible},
                {"rejected", r.rejected}, {"fit", fit_json(r.fit)}};
  };
}

tk::StabilityParams parse_stability(Params& p) {
  tk::StabilityParams sp;
  sp.alpha = p.positive("alpha", 3e-6);
  sp.eps0 = p.positive("eps0", 2.5e-3);
  sp.R = p.positive("R", 4.0);
  sp.eta = p.positive("eta", 0.5);
  sp.delta = p.positive("delta", 0.5);
  return sp;
}

Study parse_ternary_badsets(Params& p, std::size_t samples) {
  const auto sp = parse_stability(p);
  sp.validate();
  const auto gammas = p.nums("gammas", {1e-4, 1e-3, 1e-2});
  const tk::Vec vbar = to_vec(p.nums("vbar", {0.7, -0.4}));
  const double spread = p.positive("max_ratio_spread", 10.0);
  const std::size_t n = p.count("samples", samples, 1);
  if (gammas.size() < 2) throw SchemaError(p.path("gammas") + ": need at least two values");
  return [=](Run& run, std::size_t index) {
    tk::Rng rng = tk::make_rng(run.seed, 1000 + index);
    const auto names = tk::TernaryBadSets::names();
    const std::string base = "study_" + std::to_string(index) + "_ternary-badsets";
    std::vector<std::string> header{"gamma"};
    for (const auto& nm : names)
      for (const char* c : {"_estimate", "_se", "_bound", "_ratio"}) header.push_back(nm + c);
    tk::io::CsvWriter csv(run.file(base + ".csv"), header);
    std::vector<double> lo(6, INFINITY), hi(6, 0);
    json pts = json::array();
    for (double g : gammas) {
      const auto r = tk::mc_badset_ternary(sp, g, vbar, n, rng);
      const auto six = r.six();
      const auto b = tk::TernaryBadSets::bounds(vbar.size(), g);
      std::vector<double> row{g};
      json rec = {{"gamma", g}};
      for (std::size_t k = 0; k < 6; ++k) {
        const double ratio = six[k].value / b[k];
        row.insert(row.end(), {six[k].value, six[k].se, b[k], ratio});
        rec[names[k]] = {{"estimate", six[k].value}, {"se", six[k].se}, {"bound", b[k]}, {"ratio", ratio}};
        lo[k] = std::min(lo[k], ratio);
        hi[k] = std::max(hi[k], ratio);
      }
      rec["union_pre"] = r.union_pre.value;
      rec["union_post"] = r.union_post.value;
      csv.row(row);
      pts.push_back(rec);
    }
    for (std::size_t k = 0; k < 6; ++k) {
      const double s = lo[k] > 0 ? hi[k] / lo[k] : INFINITY;
      run.check(base + "_" + names[k] + "_ratio_bounded", s < spread, {{"spread", s}, {"limit", spread}});
    }
    return json{{"set", "ternary-badsets"}, {"points", pts}};
  };
}

Study parse_binary_badsets(Params& p, std::size_t samples) {
  auto sp = parse_stability(p);
  const auto etas = p.nums("etas", {0.05, 0.1, 0.2, 0.4});
  tk::BinaryScene sc;
  const auto ys = p.raw("ybar"), vs = p.raw("vbar");
  if (!ys.is_array() || !vs.is_array()) throw SchemaError(p.path("ybar") + ": expected arrays of vectors");
  try {
    for (const auto& y : ys) sc.ybar.push_back(tk::io::vec_from_json(y));
    for (const auto& v : vs) sc.vbar.push_back(tk::io::vec_from_json(v));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(p.path("ybar") + ": " + e.what());
  }
  sc.validate(sp.eps0);
  for (double eta : etas) {
    sp.eta = eta;
    sp.validate();
  }
  const std::size_t n = p.count("samples", samples, 1);
  const double min_exp = p.num("min_cylinder_exponent", 0.4);
  return [=](Run& run, std::size_t index) {
    tk::Rng rng = tk::make_rng(run.seed, 1000 + index);
    const std::string base = "study_" + std::to_string(index) + "_binary-badsets";
    tk::io::CsvWriter csv(run.file(base + ".csv"),
                          {"eta", "cylinders_post", "se", "ball", "ball_exact", "cylinders_pre", "union_post"});
    std::vector<double> cyl, se;
    bool ball_ok = true;
    for (double eta : etas) {
      auto q = sp;
      q.eta = eta;
      const auto r = tk::mc_badset_binary(sc, q, n, rng);
      ball_ok = ball_ok && std::abs(r.ball.value - r.ball_exact) <= 3 * r.ball.se + 1e-12;
      csv.row({eta, r.cylinders_post.value, r.cylinders_post.se, r.ball.value, r.ball_exact,
               r.cylinders_pre.value, r.union_post.value});
      cyl.push_back(r.cylinders_post.value);
      se.push_back(r.cylinders_post.se);
    }
    const auto fit = tk::power_fit(etas, cyl, se);
    run.check(base + "_ball_exact", ball_ok);
    run.check(base + "_cylinder_exponent", fit.exponent >= min_exp, {{"exponent", fit.exponent}, {"min", min_exp}});
    return json{{"set", "binary-badsets"}, {"fit", fit_json(fit)}};
  };
}

Job parse_verify_geometry(Params& p) {
  const std::size_t samples = p.count("samples", 1'000'000, 1);
  const json& arr = p.raw("studies");
  if (!arr.is_array() || arr.empty()) throw SchemaError("params.studies: expected a non-empty array");
  std::vector<Study> studies;
  json resolved = json::array();
  for (std::size_t i = 0; i < arr.size(); ++i) {
    Params q(arr[i], "params.studies[" + std::to_string(i) + "]");
    const auto type = q.choice("type", "cap",
                               {"cap", "cylinder-ball", "strip", "trunc-ball", "cone-diff", "annulus-i1",
                                "hemi-annulus", "pathology", "ternary-badsets", "binary-badsets"});
    if (type == "pathology") studies.push_back(parse_pathology_study(q, samples));
    else if (type == "ternary-badsets") studies.push_back(parse_ternary_badsets(q, samples));
    else if (type == "binary-badsets") studies.push_back(parse_binary_badsets(q, samples));
    else studies.push_back(parse_set_study(q, tk::parse_set_kind(type), samples));
    q.finish();
    resolved.push_back(q.resolved());
  }
  p.set_resolved("studies", resolved);
  return [studies](Run& run) {
    json report = json::array();
    for (std::size_t i = 0; i < studies.size(); ++i) report.push_back(studies[i](run, i));
    tk::io::write_json(run.file("report.json"), report);
    run.summary = {{"studies", studies.size()}};
  };
}

// ---------------------------------------------------------------------------
// convergence

Job parse_convergence(Params& p) {
  tk::ConvergenceConfig c;
  c.d = p.count("d", c.d, 2);
  const auto ns = p.counts("Ns", {64, 128, 256});
  c.Ns.assign(ns.begin(), ns.end());
  c.c2 = p.positive("c2", c.c2);
  c.c3 = p.positive("c3", c.c3);
  c.horizon = p.positive("horizon", c.horizon);
  c.t_cold = p.positive("t_cold", c.t_cold);
  c.t_hot = p.positive("t_hot", c.t_hot);
  c.particle_samples = p.count("particle_samples", c.particle_samples, 1);
  c.dsmc_runs = p.count("dsmc_runs", c.dsmc_runs, 2);
  c.dsmc_particles = p.count("dsmc_particles", c.dsmc_particles, 3);
  c.dsmc_dt = p.positive("dsmc_dt", c.dsmc_dt);
  c.kernel = tk::parse_kernel(p.choice("kernel", "flux", {"scaled", "flux"}));
  c.bins = p.count("bins", c.bins, 1);
  c.vmax = p.positive("vmax", c.vmax);
  c.policy = tk::parse_policy(p.choice("policy", "skip", {"abort", "perturb", "skip"}));
  c.validate();
  for (auto N : c.Ns) {
    const auto sc = tk::scaled_epsilons(N, c.d, c.c2, c.c3);
    tk::FlowParams fp;
    fp.eps2 = sc.eps2;
    fp.eps3 = sc.eps3;
    fp.validate_regime();
  }

  return [c](Run& run) {
    const auto res = tk::convergence_experiment(c, run.seed, run.threads);
    tk::io::CsvWriter csv(run.file("convergence.csv"), {"N", "eps2", "eps3", "runs", "skipped", "events", "l1", "l1_se"});
    for (const auto& pt : res.points)
      csv.row({static_cast<double>(pt.N), pt.eps2, pt.eps3, static_cast<double>(pt.runs),
               static_cast<double>(pt.skipped), static_cast<double>(pt.events), pt.l1, pt.l1_se});
    std::vector<std::string> header{"cell"};
    for (std::size_t a = 0; a < c.d; ++a) header.push_back("v_" + std::to_string(a));
    header.push_back("reference");
    for (const auto& pt : res.points) header.push_back("N" + std::to_string(pt.N));
    tk::io::CsvWriter mc(run.file("marginals.csv"), header);
    const auto grid = tk::convergence_grid(c);
    for (std::size_t id = 0; id < res.reference.size(); ++id) {
      std::vector<double> r{static_cast<double>(id)};
      if (id < grid.cells()) {
        for (double x : grid.center(id)) r.push_back(x);
      } else {
        for (std::size_t a = 0; a < c.d; ++a) r.push_back(std::nan(""));
      }
      r.push_back(res.reference[id]);
      for (const auto& pt : res.points) r.push_back(pt.mass[id]);
      mc.row(r);
    }
    run.summary = {{"kappa2", res.rates.kappa2}, {"kappa3", res.rates.kappa3}};
    run.check("l1_non_increasing", res.non_increasing);
  };
}

// ---------------------------------------------------------------------------
// run orchestration

Job parse_experiment(const std::string& kind, Params& p) {
  try {
    if (kind == "simulate") return parse_simulate(p);
    if (kind == "marginals") return parse_marginals(p);
    if (kind == "boltzmann") return parse_boltzmann(p);
    if (kind == "pseudotraj") return parse_pseudotraj(p);
    if (kind == "verify-geometry") return parse_verify_geometry(p);
    if (kind == "convergence") return parse_convergence(p);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("params: ") + e.what());
  }
  throw SchemaError("unknown experiment: " + kind);
}

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 0;
};

int run_experiment(const std::string& requested, const RunOptions& opt) {
  json cfg;
  {
    std::ifstream in(opt.config);
    if (!in) throw SchemaError("cannot read config " + opt.config);
    try {
      cfg = json::parse(in);
    } catch (const json::parse_error& e) {
      throw SchemaError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  Params top(cfg, "config");
  std::string kind = requested;
  if (top.has("experiment") || kind.empty()) {
    const auto k = top.choice("experiment", kind.empty() ? "" : kind, kExperiments);
    if (!kind.empty() && k != kind) throw SchemaError("config.experiment is '" + k + "' but the command is '" + kind + "'");
    kind = k;
  }
  std::uint64_t seed;
  if (opt.seed) {
    seed = *opt.seed;
    if (top.has("seed")) top.count("seed");
  } else {
    if (!top.has("seed")) throw SchemaError("config.seed: missing (or pass --seed)");
    seed = top.count("seed");
  }
  std::string out = opt.out;
  if (top.has("out")) {
    const auto& o = top.raw("out");
    if (!o.is_string()) throw SchemaError("config.out: expected a string");
    if (out.empty()) out = o.get<std::string>();
  }
  if (top.has("manifest")) top.raw("manifest");
  if (out.empty()) throw SchemaError("no output directory (pass --out or set config.out)");
  Params params(top.has("params") ? top.raw("params") : json::object(), "params");
  Job job = parse_experiment(kind, params);
  params.finish();
  top.finish();

  const json resolved = {{"experiment", kind}, {"seed", seed}, {"params", params.resolved()}};

  Run run;
  run.experiment = kind;
  run.seed = seed;
  run.dir = out;
  run.threads = opt.threads ? opt.threads : tk::default_threads();
  if (fs::exists(run.dir)) throw std::runtime_error("output directory exists, refusing to overwrite: " + out);
  if (run.dir.has_parent_path()) fs::create_directories(run.dir.parent_path());
  if (!fs::create_directory(run.dir)) throw std::runtime_error("cannot create " + out);

  const auto t0 = std::chrono::steady_clock::now();
  job(run);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json summary = {{"experiment", kind}, {"seed", seed}, {"checks", run.checks}, {"all_pass", run.all_pass()},
                  {"results", run.summary}};
  tk::io::write_json(run.dir / "summary.json", summary);
  json manifest = resolved;
  manifest["manifest"] = {{"config_hash", tk::io::config_hash(resolved)},
                          {"versions",
                           {{"ternkin", TERNKIN_VERSION},
                            {"compiler", __VERSION__},
                            {"boost", BOOST_LIB_VERSION},
                            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                          {"wall_time_s", wall},
                          {"threads", run.threads},
                          {"outputs", run.outputs}};
  tk::io::write_json(run.dir / "manifest.json", manifest);
  for (const auto& c : run.checks)
    std::cout << (c["pass"].get<bool>() ? "PASS " : "FAIL ") << c["name"].get<std::string>() << '\n';
  std::cout << "wrote " << out << '\n';
  return run.all_pass() ? 0 : 3;
}

// ---------------------------------------------------------------------------
// emit-report

int emit_report(const std::string& dir_s, const std::string& out_s) {
  const fs::path dir(dir_s);
  if (!fs::is_directory(dir) || !fs::exists(dir / "summary.json"))
    throw std::runtime_error("emit-report: no results in " + dir_s + " (summary.json missing)");
  const fs::path out = out_s.empty() ? dir / "report" : fs::path(out_s);
  if (fs::exists(out)) throw std::runtime_error("report directory exists, refusing to overwrite: " + out.string());
  fs::create_directories(out);
  const json summary = tk::io::read_json(dir / "summary.json");
  json plots = json::array(), warnings = json::array();
  const auto note = [&](const std::string& w) {
    warn(w);
    warnings.push_back(w);
  };
  const auto emit = [&](const std::string& name, const tk::io::PlotSpec& spec,
                        const std::vector<tk::io::Series>& series) {
    if (tk::io::write_svg_plot(out / name, spec, series)) plots.push_back(name);
    else note("empty series, no plot for " + name);
  };
  const auto slope_note = [](const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<double>& se) -> std::vector<std::string> {
    std::vector<double> fx, fy, fs_;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0 && y[i] > 0) {
        fx.push_back(x[i]);
        fy.push_back(y[i]);
        fs_.push_back(i < se.size() ? se[i] : 0.0);
      }
    if (fx.size() < 2) return {};
    const auto f = tk::power_fit(fx, fy, fs_);
    char buf[96];
    std::snprintf(buf, sizeof buf, "fitted slope %.3f +- %.3f, C = %.3g", f.exponent, f.exponent_se, f.constant);
    return {buf};
  };

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto t = tk::io::read_csv(f);
    const std::string stem = f.stem().string();
    if (t.rows.empty()) {
      note("empty series in " + f.filename().string() + ", no plot");
      continue;
    }
    if (stem == "moments") {
      const auto tc = *t.column("t");
      for (std::size_t c = 0; c < t.header.size(); ++c) {
        const auto& h = t.header[c];
        if (c == tc || h.ends_with("_se")) continue;
        tk::io::Series s{h, t.values(tc), t.values(c), {}};
        if (const auto ec = t.column(h + "_se")) s.err = t.values(*ec);
        emit("moment_" + h + ".svg", {h + " vs t", "t", h}, {s});
      }
    } else if (stem == "trajectory") {
      emit("energy.svg", {"kinetic energy", "t", "energy"},
           {{"energy", t.values(*t.column("t")), t.values(*t.column("energy")), {}}});
    } else if (stem == "convergence") {
      const auto x = t.values(*t.column("N")), y = t.values(*t.column("l1")), e = t.values(*t.column("l1_se"));
      tk::io::PlotSpec sp{"L1 distance to the limiting density", "N", "L1", true, true, slope_note(x, y, e)};
      emit("convergence.svg", sp, {{"L1", x, y, e}});
    } else if (stem.starts_with("study_") && t.header.size() >= 3) {
      const auto x = t.values(0), y = t.values(1);
      const auto e = t.header[2].ends_with("se") ? t.values(2) : std::vector<double>{};
      tk::io::PlotSpec sp{stem, t.header[0], t.header[1], true, true, slope_note(x, y, e)};
      emit(stem + ".svg", sp, {{t.header[1], x, y, e}});
    }
  }
  const bool all_pass = summary.value("all_pass", false);
  json rep = {{"run_dir", dir_s}, {"experiment", summary.value("experiment", "")}, {"plots", plots},
              {"warnings", warnings}, {"checks", summary.value("checks", json::array())}, {"all_pass", all_pass}};
  tk::io::write_json(out / "summary.json", rep);
  std::cout << "wrote " << plots.size() << " plot(s) to " << out.string() << '\n';
  return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ternkin: binary-ternary hard-sphere kinetic workbench"};
  app.require_subcommand(1);
  RunOptions opt;
  std::string report_dir, report_out;
  auto add_run = [&](const std::string& name, const std::string& help) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("--config", opt.config, "JSON run configuration")->required();
    sc->add_option("--seed", opt.seed, "RNG seed (overrides config.seed)");
    sc->add_option("--out", opt.out, "run directory (must not exist)");
    sc->add_option("--threads", opt.threads, "worker threads (default: TERNKIN_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    return sc;
  };
  std::vector<std::pair<std::string, CLI::App*>> runs;
  runs.emplace_back("", add_run("run", "run the experiment named in the config"));
  runs.emplace_back("simulate", add_run("simulate", "event-driven particle flow with a JSONL event log"));
  runs.emplace_back("marginals", add_run("marginals", "s-marginal histogram of an N-particle ensemble"));
  runs.emplace_back("boltzmann", add_run("boltzmann", "DSMC relaxation with moment series"));
  runs.emplace_back("pseudotraj", add_run("pseudotraj", "pseudo-trajectory proximity study"));
  runs.emplace_back("verify-geometry", add_run("verify-geometry", "Monte Carlo measures of geometric sets"));
  runs.emplace_back("convergence", add_run("convergence", "particle marginals against the DSMC solution"));
  auto* rep = app.add_subcommand("emit-report", "SVG plots and summary for a run directory");
  rep->add_option("dir", report_dir, "run directory")->required();
  rep->add_option("--out", report_out, "report directory (default DIR/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*rep) return emit_report(report_dir, report_out);
    for (const auto& [kind, sc] : runs)
      if (*sc) return run_experiment(kind, opt);
  } catch (const SchemaError& e) {
    std::cerr << "ternkin: invalid config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ternkin: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
