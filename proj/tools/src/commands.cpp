#include "spinqnd_app/commands.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>
#include <thread>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "spinqnd/csv.hpp"
#include "spinqnd/estimator.hpp"
#include "spinqnd/spectra.hpp"
#include "spinqnd/witness.hpp"
#include "spinqnd_app/svg.hpp"

namespace spinqnd::app {

namespace {

using nlohmann::json;

constexpr std::array<std::pair<Command, std::string_view>, 7> kCommands{{
    {Command::simulate, "simulate"},
    {Command::filter, "filter"},
    {Command::spectrum, "spectrum"},
    {Command::calibrate, "calibrate"},
    {Command::witness, "witness"},
    {Command::scan_field, "scan-field"},
    {Command::scan_gradient, "scan-gradient"},
}};

// Seed streams. Calibration points use kCalibrationStream + index.
constexpr std::uint64_t kSpinStream = 0;
constexpr std::uint64_t kShotStream = 1;
constexpr std::uint64_t kCalibrationStream = 16;

template <class F>
void parallel_for(std::size_t n, unsigned jobs, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::clamp<unsigned>(jobs, 1, static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json matrix_json(const Mat3& m) {
  json out = json::array();
  for (int i = 0; i < 3; ++i) out.push_back({m(i, 0), m(i, 1), m(i, 2)});
  return out;
}

json witness_json(const WitnessReport& w) {
  return {{"n_atoms", w.n_atoms},
          {"total_variation", w.total_variation},
          {"xi_squared", w.xi_squared},
          {"squeezing_db", w.squeezing_db},
          {"entangled_lower_bound", w.entangled_lower_bound},
          {"per_component_variance",
           {w.per_component_variance[0], w.per_component_variance[1], w.per_component_variance[2]}}};
}

class Run {
 public:
  Run(const RunConfig& cfg, const RunOptions& opts) : cfg_(cfg), opts_(opts) {}

  void add(std::string name, std::string content) {
    result_.artifacts.push_back({std::move(name), std::move(content)});
  }
  void add(std::string name, const csv::Table& t) { add(std::move(name), t.str()); }
  void add(std::string name, const json& j) { add(std::move(name), j.dump(2) + "\n"); }
  void plot(std::string name, const svg::Plot& p) {
    if (cfg_.output.format == "csv+svg") add(std::move(name), svg::render(p));
  }
  void seed(const std::string& what, std::uint64_t value) { seeds_[what] = value; }

  [[nodiscard]] const RunConfig& cfg() const { return cfg_; }
  [[nodiscard]] const RunOptions& opts() const { return opts_; }
  [[nodiscard]] std::uint64_t base_seed() const { return cfg_.experiment.seed; }
  [[nodiscard]] std::uint64_t stream(std::uint64_t s) const { return derive_seed(base_seed(), s); }

  [[nodiscard]] Mat3 prior_covariance(const DynamicsModel& dyn) const {
    return cfg_.prior.covariance.value_or(dyn.q_eq);
  }

  [[nodiscard]] KalmanOptions kalman() const {
    KalmanOptions k;
    k.require_steady_state = cfg_.experiment.require_steady_state;
    return k;
  }

  /// Photocurrent from experiment.input, or simulated with the spin and shot
  /// streams of the base seed.
  PhotocurrentRecord record(const SystemModel& model, std::optional<SpinTrajectory>* truth) {
    if (cfg_.experiment.input) {
      auto rec = csv::photocurrent_from(csv::read(*cfg_.experiment.input, csv::kPhotocurrentColumns));
      if (rec.times.size() >= 2) {
        const double dt = rec.times[1] - rec.times[0];
        if (std::abs(dt - model.measurement.delta) > 1e-9 * model.measurement.delta) {
          throw ConfigError("measurement.delta",
                            fmt::format("{} differs from the input sample spacing {}",
                                        model.measurement.delta, dt));
        }
      }
      return rec;
    }
    const DynamicsModel dyn = model.dynamics();
    const DiscreteModel dm = discretize(dyn, model.measurement.delta);
    seed("spin", stream(kSpinStream));
    seed("shot", stream(kShotStream));
    auto traj = simulate_spin(dm, dyn.q_eq, cfg_.experiment.n_steps, stream(kSpinStream));
    auto rec = measure_photocurrent(traj, model.measurement, stream(kShotStream));
    if (truth) *truth = std::move(traj);
    return rec;
  }

  RunResult finish(Command cmd, double seconds) {
    json files = json::array();
    for (const auto& a : result_.artifacts) {
      files.push_back({{"name", a.name}, {"bytes", a.content.size()}, {"sha256", sha256_hex(a.content)}});
    }
    json seeds = {{"base", base_seed()}};
    for (const auto& [k, v] : seeds_) seeds[k] = v;
    result_.manifest = {
        {"schema_version", kSchemaVersion},
        {"tool", "spinqnd"},
        {"command", command_name(cmd)},
        {"config_hash", config_hash(cfg_)},
        {"seeds", seeds},
        {"files", files},
        {"timing", {{"wall_seconds", seconds}, {"jobs", opts_.jobs}}},
        {"synthetic_parameters",
         {{"fields", {"measurement.g_coupling", "measurement.eta", "measurement.photon_flux"}},
          {"note",
           "coupling, quantum efficiency and photon flux of the original instrument are not "
           "published; the values used here are synthetic stand-ins"}}},
        {"resolved_config", to_json(cfg_)},
        {"derived", derived_json(cfg_)},
    };
    return std::move(result_);
  }

 private:
  const RunConfig& cfg_;
  const RunOptions& opts_;
  RunResult result_;
  std::map<std::string, std::uint64_t> seeds_;
};

void cmd_simulate(Run& run) {
  const SystemModel model = system_model(run.cfg());
  std::optional<SpinTrajectory> truth;
  const auto rec = run.record(model, &truth);
  if (!truth) throw ConfigError("experiment.input", "simulate does not take an input record");
  run.add("trajectory.csv", csv::trajectory_table(*truth));
  run.add("photocurrent.csv", csv::photocurrent_table(rec));
  svg::Plot p{"Photocurrent", "time (s)", "I", false, false, {{"I", rec.times, rec.samples}}, {}};
  run.plot("photocurrent.svg", p);
}

void cmd_filter(Run& run) {
  const SystemModel model = system_model(run.cfg());
  std::optional<SpinTrajectory> truth;
  const auto rec = run.record(model, &truth);
  const DynamicsModel dyn = model.dynamics();
  const DiscreteModel dm = discretize(dyn, model.measurement.delta);
  const FilterRun fr = kf_run(rec, dm, model.measurement, run.cfg().prior.mean,
                              run.prior_covariance(dyn), run.kalman());
  run.add("filter.csv", csv::filter_table(fr, rec.times));

  json summary = {{"steady_state_covariance", matrix_json(fr.steady_state_covariance)},
                  {"converged_at", fr.converged_at ? json(*fr.converged_at) : json(nullptr)},
                  {"witness", witness_json(witness_report(fr.steady_state_covariance, model.n_atoms()))}};
  if (truth) {
    const Vec3 mse = rms_estimation_error(fr, *truth);
    summary["mean_squared_error"] = {mse[0], mse[1], mse[2]};
  }
  run.add("filter_summary.json", summary);

  const auto eq = equilibrium_variation(model.n_atoms());
  std::vector<double> trace;
  trace.reserve(fr.states.size());
  for (const auto& s : fr.states) trace.push_back(total_variation(s.covariance));
  run.plot("filter.svg", {"Spin variance vs tracking time", "time (s)", "|dJ|^2", false, false,
                          {{"Tr P", rec.times, trace}}, {{"TSS", eq.tss}, {"SQL", eq.sql}}});
}

void cmd_spectrum(Run& run) {
  const SystemModel model = system_model(run.cfg());
  const auto rec = run.record(model, nullptr);
  const auto& e = run.cfg().experiment;
  const Spectrum s = psd_welch(rec, e.segment_length, e.overlap);
  // default: +-5 expected linewidths around the expected Larmor line, which
  // keeps the zero-frequency longitudinal peak out of the fit
  const double expected_center = model.dynamics().omega_l / (2.0 * std::numbers::pi);
  const double expected_fwhm = model.rates.t2_inv / std::numbers::pi;
  FrequencyWindow window{std::max(expected_center - 5.0 * expected_fwhm, s.resolution),
                         expected_center + 5.0 * expected_fwhm};
  if (e.fit_window) window = FrequencyWindow{e.fit_window->first, e.fit_window->second};
  const LorentzianFit fit = lorentzian_fit(s, window);
  run.add("spectrum.csv", csv::spectrum_table(s));
  run.add("spectrum_fit.json",
          json{{"center", fit.center},
               {"fwhm", fit.fwhm},
               {"amplitude", fit.amplitude},
               {"offset", fit.offset},
               {"residual_rms", fit.residual_rms},
               {"has_peak", fit.has_peak},
               {"iterations", fit.iterations},
               {"window", {fit.window.lo, fit.window.hi}},
               {"resolution", s.resolution},
               {"segments", s.segments},
               {"expected_center", expected_center},
               {"expected_fwhm", expected_fwhm}});
  run.plot("spectrum.svg", {"Spin noise spectrum", "frequency (Hz)", "PSD", false, true,
                            {{"PSD", s.frequencies, s.psd}}, {}});
}

void cmd_calibrate(Run& run) {
  const auto& cfg = run.cfg();
  std::vector<CalibrationPoint> points;
  if (cfg.experiment.input) {
    points = csv::calibration_points_from(csv::read(*cfg.experiment.input, csv::kCalibrationColumns));
  } else {
    const auto& freqs = cfg.experiment.larmor_frequencies;
    if (freqs.size() < 3) {
      throw ConfigError("experiment.larmor_frequencies", "calibrate needs at least 3 values");
    }
    std::vector<LinewidthMeasurement> ms(freqs.size());
    parallel_for(freqs.size(), run.opts().jobs, [&](std::size_t i) {
      ms[i] = measure_linewidth(system_model(cfg, freqs[i]), cfg.experiment.n_steps,
                                cfg.experiment.segment_length,
                                run.stream(kCalibrationStream + i), cfg.experiment.overlap);
    });
    csv::Table lw{{"larmor_hz", "omega_l", "center", "fwhm", "expected_fwhm", "resolution"}, {}};
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      const auto& m = ms[i];
      if (!m.fit.has_peak) {
        throw NumericalError(fmt::format("calibrate: no Larmor peak found at {} Hz", freqs[i]));
      }
      run.seed(fmt::format("calibration[{}]", i), run.stream(kCalibrationStream + i));
      lw.add_row({freqs[i], m.omega_l, m.fit.center, m.fit.fwhm, m.t2_inv / std::numbers::pi,
                  m.spectrum.resolution});
      points.push_back({m.omega_l, m.fit.fwhm});
    }
    run.add("linewidths.csv", lw);
  }
  const CalibrationResult cal = density_calibration(points, cfg.physical);
  run.add("calibration_points.csv", csv::calibration_points_table(points));
  const double implied = effective_se_rate(cfg) / (cfg.physical.sigma_se * cfg.physical.v_bar);
  run.add("calibration.json",
          json{{"n_rb", cal.n_rb},
               {"delta_nu_0", cal.delta_nu_0},
               {"n_rb_std", std::sqrt(cal.fit_covariance(0, 0))},
               {"delta_nu_0_std", std::sqrt(cal.fit_covariance(1, 1))},
               {"fit_covariance", {{cal.fit_covariance(0, 0), cal.fit_covariance(0, 1)},
                                   {cal.fit_covariance(1, 0), cal.fit_covariance(1, 1)}}},
               {"n_rb_injected", implied}});

  std::vector<double> w, nu, wfit, nufit;
  double wmax = 0.0;
  for (const auto& p : points) {
    w.push_back(p.omega_l);
    nu.push_back(p.delta_nu);
    wmax = std::max(wmax, p.omega_l);
  }
  PhysicalParams fitted = cfg.physical;
  fitted.n_rb = cal.n_rb;
  for (int i = 0; i <= 100; ++i) {
    const double om = wmax * i / 100.0;
    wfit.push_back(om);
    nufit.push_back(cal.delta_nu_0 + se_linewidth(om, se_rate(fitted), fitted.nuclear_spin));
  }
  run.plot("calibration.svg", {"Linewidth vs Larmor frequency", "omega_L (rad/s)", "FWHM (Hz)", false,
                               false, {{"data", w, nu, true}, {"fit", wfit, nufit}}, {}});
}

void cmd_witness(Run& run) {
  const SystemModel model = system_model(run.cfg());
  const DynamicsModel dyn = model.dynamics();
  const DiscreteModel dm = discretize(dyn, model.measurement.delta);
  const SteadyState ss = steady_state_covariance(dm, model.measurement, run.prior_covariance(dyn), run.kalman());
  const WitnessReport w = witness_report(ss.covariance, model.n_atoms());
  csv::Table t{{"n_atoms", "total_variation", "xi_squared", "squeezing_db", "entangled_lower_bound",
                "var_x", "var_y", "var_z"},
               {}};
  t.add_row({w.n_atoms, w.total_variation, w.xi_squared, w.squeezing_db, w.entangled_lower_bound,
             w.per_component_variance[0], w.per_component_variance[1], w.per_component_variance[2]});
  run.add("witness.csv", t);
  json j = witness_json(w);
  j["steady_state_covariance"] = matrix_json(ss.covariance);
  j["steady_state_steps"] = ss.steps;
  run.add("witness.json", j);
}

void cmd_scan_field(Run& run) {
  const auto& cfg = run.cfg();
  const auto& freqs = cfg.experiment.larmor_frequencies;
  if (freqs.empty()) throw ConfigError("experiment.larmor_frequencies", "scan-field needs at least one value");
  struct Point {
    SystemModel model;
    WitnessReport w;
  };
  std::vector<Point> pts(freqs.size());
  parallel_for(freqs.size(), run.opts().jobs, [&](std::size_t i) {
    const SystemModel model = system_model(cfg, freqs[i]);
    const DynamicsModel dyn = model.dynamics();
    const DiscreteModel dm = discretize(dyn, model.measurement.delta);
    const SteadyState ss =
        steady_state_covariance(dm, model.measurement, run.prior_covariance(dyn), run.kalman());
    pts[i] = {model, witness_report(ss.covariance, model.n_atoms())};
  });
  csv::Table t{{"larmor_hz", "t2_inv", "total_variation", "ratio_to_sql", "xi_squared", "var_x", "var_y",
                "var_z"},
               {}};
  std::vector<double> ratio;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const auto& w = pts[i].w;
    const double r = w.total_variation / equilibrium_variation(w.n_atoms).sql;
    ratio.push_back(r);
    t.add_row({freqs[i], pts[i].model.rates.t2_inv, w.total_variation, r, w.xi_squared,
               w.per_component_variance[0], w.per_component_variance[1], w.per_component_variance[2]});
  }
  run.add("scan_field.csv", t);
  run.plot("scan_field.svg", {"Spin variance vs Larmor frequency", "nu_L (Hz)", "|dJ|^2 / SQL", true, false,
                              {{"Tr Sigma_ss / SQL", freqs, ratio, true}}, {{"TSS", 1.5}, {"SQL", 1.0}}});
}

void cmd_scan_gradient(Run& run) {
  const auto& cfg = run.cfg();
  const auto& e = cfg.experiment;
  if (e.gradients.empty()) throw ConfigError("experiment.gradients", "scan-gradient needs at least one value");
  GradientScanConfig sc;
  sc.delta_z = e.delta_z;
  sc.mode = e.gradient_mode;
  sc.duration = e.decay_duration;
  sc.series_points = e.series_points;
  sc.kalman = run.kalman();
  sc.jobs = run.opts().jobs;
  const SystemModel model = system_model(cfg);
  const auto res = gradient_scan(model, e.gradients, sc);

  csv::Table summary{{"gradient", "added_rate", "decay_rate", "rate_uncertainty", "var_x", "var_y", "var_z"}, {}};
  csv::Table series{{"gradient", "time", "total_variation"}, {}};
  svg::Plot decay{"Variance vs time since last observation", "time (s)", "|dJ|^2", false, false, {}, {}};
  svg::Plot comps{"Per-component variance vs gradient", "B' (T/m)", "variance", false, false, {}, {}};
  std::array<svg::Series, 3> comp_series{{{"J_x", {}, {}, true}, {"J_y", {}, {}, true}, {"J_z", {}, {}, true}}};
  for (const auto& r : res) {
    summary.add_row({r.gradient, r.added_rate, r.decay_rate, r.rate_uncertainty, r.per_component_variance[0],
                     r.per_component_variance[1], r.per_component_variance[2]});
    svg::Series s{fmt::format("{:.3g} nT/mm", r.gradient * 1e6), {}, {}};
    for (const auto& [t, v] : r.variance_series) {
      series.add_row({r.gradient, t, v});
      s.x.push_back(t);
      s.y.push_back(v);
    }
    decay.series.push_back(std::move(s));
    for (int c = 0; c < 3; ++c) {
      comp_series[c].x.push_back(r.gradient);
      comp_series[c].y.push_back(r.per_component_variance[c]);
    }
  }
  const auto eq = equilibrium_variation(model.n_atoms());
  decay.references = {{"TSS", eq.tss}, {"SQL", eq.sql}};
  comps.series.assign(comp_series.begin(), comp_series.end());
  comps.references = {{"TSS/3", eq.tss / 3.0}, {"SQL/3", eq.sql / 3.0}};
  run.add("scan_gradient.csv", summary);
  run.add("decay_series.csv", series);
  run.plot("decay_series.svg", decay);
  run.plot("component_variance.svg", comps);
}

}  // namespace

std::optional<Command> parse_command(std::string_view name) {
  for (const auto& [c, n] : kCommands) {
    if (n == name) return c;
  }
  return std::nullopt;
}

std::string_view command_name(Command c) {
  for (const auto& [cc, n] : kCommands) {
    if (cc == c) return n;
  }
  return "?";
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [c, n] : kCommands) v.emplace_back(n);
    return v;
  }();
  return names;
}

const Artifact* RunResult::find(std::string_view name) const {
  for (const auto& a : artifacts) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

RunResult run_command(Command cmd, const RunConfig& cfg, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Run run(cfg, options);
  run.add("resolved_config.json", to_json(cfg));
  switch (cmd) {
    case Command::simulate: cmd_simulate(run); break;
    case Command::filter: cmd_filter(run); break;
    case Command::spectrum: cmd_spectrum(run); break;
    case Command::calibrate: cmd_calibrate(run); break;
    case Command::witness: cmd_witness(run); break;
    case Command::scan_field: cmd_scan_field(run); break;
    case Command::scan_gradient: cmd_scan_gradient(run); break;
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  return run.finish(cmd, elapsed.count());
}

void write_outputs(const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& content) {
    const auto path = dir / name;
    const auto tmp = dir / (name + ".part");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(content.data(), static_cast<std::streamsize>(content.size()));
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  };
  for (const auto& a : result.artifacts) write(a.name, a.content);
  write("manifest.json", result.manifest.dump(2) + "\n");
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) fmt::format_to(std::back_inserter(out), "{:02x}", md[i]);
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output");
  return sha256_hex(j.dump());
}

}  // namespace spinqnd::app
