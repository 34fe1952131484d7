#include "spinqnd_app/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <fmt/format.h>

#include "spinqnd/linalg.hpp"
#include "spinqnd/spectra.hpp"

namespace spinqnd::app {

namespace {

using nlohmann::json;

std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

/// Walks one JSON object, remembering which keys were consumed.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(path_, "expected an object");
    }
  }

  [[nodiscard]] const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  [[nodiscard]] std::string at(const std::string& key) const { return join(path_, key); }

  void number(const std::string& key, double& out) {
    if (const auto* v = find(key)) out = as_number(*v, at(key));
  }
  void number(const std::string& key, std::optional<double>& out) {
    if (const auto* v = find(key)) out = as_number(*v, at(key));
  }
  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0)) {
        throw ConfigError(at(key), "expected a non-negative integer");
      }
      out = v->get<Int>();
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (const auto* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const std::string& key, std::string& out) {
    if (const auto* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void numbers(const std::string& key, std::vector<double>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) throw ConfigError(at(key), "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        out.push_back(as_number((*v)[i], fmt::format("{}[{}]", at(key), i)));
      }
    }
  }

  void reject_unknown() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(join(path_, key), "unknown key");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    return x;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Vec3 as_vec3(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(path, "expected an array of 3 numbers");
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = Block::as_number(v[i], fmt::format("{}[{}]", path, i));
  return out;
}

Mat3 as_mat3(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(path, "expected a 3x3 array");
  Mat3 out;
  for (int i = 0; i < 3; ++i) {
    out.row(i) = as_vec3(v[i], fmt::format("{}[{}]", path, i)).transpose();
  }
  return out;
}

void require_positive(double x, const std::string& path) {
  if (!(x > 0.0)) throw ConfigError(path, fmt::format("must be > 0 (got {})", x));
}

template <class F>
void rethrow_as_config(const std::string& path, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

template <class T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  Block root(j, "");
  root.integer("schema_version", cfg.schema_version);
  if (cfg.schema_version != kSchemaVersion) {
    throw ConfigError("schema_version", fmt::format("unsupported version {} (expected {})",
                                                    cfg.schema_version, kSchemaVersion));
  }

  if (const auto* v = root.find("physical")) {
    Block b(*v, "physical");
    auto& p = cfg.physical;
    b.number("n_rb", p.n_rb);
    b.number("sigma_se", p.sigma_se);
    b.number("v_bar", p.v_bar);
    b.number("gamma_e", p.gamma_e);
    b.number("q_slow", p.q_slow);
    b.number("nuclear_spin", p.nuclear_spin);
    b.number("cell_length", p.cell_length);
    b.number("beam_area", p.beam_area);
    b.reject_unknown();
  }
  rethrow_as_config("physical", [&] { cfg.physical.validate(); });

  bool se_given = false;
  if (const auto* v = root.find("dynamics")) {
    Block b(*v, "dynamics");
    auto& d = cfg.dynamics;
    b.number("larmor_frequency", d.larmor_frequency);
    b.number("b_magnitude", d.b_magnitude);
    if (const auto* dir = b.find("b_direction")) d.b_direction = as_vec3(*dir, b.at("b_direction"));
    b.number("t1_inv", d.t1_inv);
    b.number("t2_inv", d.t2_inv);
    se_given = b.find("se_broadening") != nullptr;
    b.boolean("se_broadening", d.se_broadening);
    b.number("r_se", d.r_se);
    b.reject_unknown();
  }
  auto& d = cfg.dynamics;
  if (d.larmor_frequency && d.b_magnitude) {
    throw ConfigError("dynamics", "set larmor_frequency or b_magnitude, not both");
  }
  if (!d.larmor_frequency && !d.b_magnitude) d.larmor_frequency = 1e3;
  if (d.larmor_frequency && *d.larmor_frequency < 0.0) {
    throw ConfigError("dynamics.larmor_frequency", "must be >= 0");
  }
  if (d.b_magnitude && *d.b_magnitude < 0.0) {
    throw ConfigError("dynamics.b_magnitude", "must be >= 0");
  }
  if (!(d.b_direction.norm() > 0.0)) throw ConfigError("dynamics.b_direction", "must be nonzero");
  if (d.t1_inv < 0.0) throw ConfigError("dynamics.t1_inv", "must be >= 0");
  if (d.t2_inv) {
    if (se_given && d.se_broadening) {
      throw ConfigError("dynamics", "t2_inv and se_broadening = true are mutually exclusive");
    }
    d.se_broadening = false;
    if (*d.t2_inv < d.t1_inv) {
      throw ConfigError("dynamics", fmt::format("dynamics.t2_inv ({}) must be >= dynamics.t1_inv ({})",
                                                *d.t2_inv, d.t1_inv));
    }
  } else if (!d.se_broadening) {
    d.t2_inv = d.t1_inv;
  }
  if (d.r_se) require_positive(*d.r_se, "dynamics.r_se");

  if (const auto* v = root.find("measurement")) {
    Block b(*v, "measurement");
    auto& m = cfg.measurement;
    b.number("g_coupling", m.g_coupling);
    b.number("eta", m.eta);
    b.number("photon_flux", m.photon_flux);
    b.number("delta", m.delta);
    b.reject_unknown();
  }
  rethrow_as_config("measurement", [&] { cfg.measurement.validate(); });

  if (const auto* v = root.find("prior")) {
    Block b(*v, "prior");
    if (const auto* m = b.find("mean")) cfg.prior.mean = as_vec3(*m, "prior.mean");
    if (const auto* c = b.find("covariance")) {
      const Mat3 cov = as_mat3(*c, "prior.covariance");
      if (!cov.isApprox(cov.transpose(), 1e-12) || !linalg::is_psd(cov)) {
        throw ConfigError("prior.covariance", "must be symmetric positive semidefinite");
      }
      cfg.prior.covariance = cov;
    }
    b.reject_unknown();
  }

  if (const auto* v = root.find("experiment")) {
    Block b(*v, "experiment");
    auto& e = cfg.experiment;
    b.integer("seed", e.seed);
    b.integer("n_steps", e.n_steps);
    if (const auto* in = b.find("input")) {
      if (!in->is_string()) throw ConfigError("experiment.input", "expected a path string");
      e.input = in->get<std::string>();
    }
    b.integer("segment_length", e.segment_length);
    b.number("overlap", e.overlap);
    if (const auto* w = b.find("fit_window")) {
      if (!w->is_array() || w->size() != 2) {
        throw ConfigError("experiment.fit_window", "expected [lo, hi] in Hz");
      }
      e.fit_window = std::pair{Block::as_number((*w)[0], "experiment.fit_window[0]"),
                               Block::as_number((*w)[1], "experiment.fit_window[1]")};
      if (!(e.fit_window->second > e.fit_window->first)) {
        throw ConfigError("experiment.fit_window", "hi must exceed lo");
      }
    }
    b.numbers("larmor_frequencies", e.larmor_frequencies);
    b.numbers("gradients", e.gradients);
    std::string mode = "isotropic";
    b.string("gradient_mode", mode);
    if (mode == "isotropic") {
      e.gradient_mode = GradientMode::isotropic;
    } else if (mode == "transverse") {
      e.gradient_mode = GradientMode::transverse;
    } else {
      throw ConfigError("experiment.gradient_mode", "expected \"isotropic\" or \"transverse\"");
    }
    b.number("delta_z", e.delta_z);
    b.number("decay_duration", e.decay_duration);
    b.integer("series_points", e.series_points);
    b.boolean("require_steady_state", e.require_steady_state);
    b.reject_unknown();
  }
  auto& e = cfg.experiment;
  if (e.n_steps == 0) throw ConfigError("experiment.n_steps", "must be >= 1");
  if (e.segment_length < 16) throw ConfigError("experiment.segment_length", "must be >= 16");
  if (!(e.overlap >= 0.0 && e.overlap < 1.0)) throw ConfigError("experiment.overlap", "must be in [0, 1)");
  for (std::size_t i = 0; i < e.larmor_frequencies.size(); ++i) {
    require_positive(e.larmor_frequencies[i], fmt::format("experiment.larmor_frequencies[{}]", i));
  }
  for (std::size_t i = 0; i < e.gradients.size(); ++i) {
    if (!(e.gradients[i] >= 0.0)) {
      throw ConfigError(fmt::format("experiment.gradients[{}]", i), "must be >= 0");
    }
  }
  if (e.delta_z) require_positive(*e.delta_z, "experiment.delta_z");
  require_positive(e.decay_duration, "experiment.decay_duration");
  if (e.series_points < 4) throw ConfigError("experiment.series_points", "must be >= 4");

  if (const auto* v = root.find("output")) {
    Block b(*v, "output");
    b.string("directory", cfg.output.directory);
    b.string("format", cfg.output.format);
    b.reject_unknown();
  }
  if (cfg.output.format != "csv" && cfg.output.format != "csv+svg") {
    throw ConfigError("output.format", "expected \"csv\" or \"csv+svg\"");
  }
  root.reject_unknown();

  // catches t2 < t1 reached through se broadening with odd inputs
  rethrow_as_config("dynamics", [&] { system_model(cfg).rates.validate(); });
  return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
  return parse_config(j);
}

json to_json(const RunConfig& cfg) {
  const auto& p = cfg.physical;
  const auto& d = cfg.dynamics;
  const auto& m = cfg.measurement;
  const auto& e = cfg.experiment;
  json prior_cov = nullptr;
  if (cfg.prior.covariance) {
    prior_cov = json::array();
    for (int i = 0; i < 3; ++i) prior_cov.push_back(vec_json(cfg.prior.covariance->row(i).transpose()));
  }
  json window = nullptr;
  if (e.fit_window) window = json::array({e.fit_window->first, e.fit_window->second});
  return {
      {"schema_version", cfg.schema_version},
      {"physical",
       {{"n_rb", p.n_rb},
        {"sigma_se", p.sigma_se},
        {"v_bar", p.v_bar},
        {"gamma_e", p.gamma_e},
        {"q_slow", p.q_slow},
        {"nuclear_spin", p.nuclear_spin},
        {"cell_length", p.cell_length},
        {"beam_area", p.beam_area}}},
      {"dynamics",
       {{"larmor_frequency", opt_json(d.larmor_frequency)},
        {"b_magnitude", opt_json(d.b_magnitude)},
        {"b_direction", vec_json(d.b_direction)},
        {"t1_inv", d.t1_inv},
        {"t2_inv", opt_json(d.t2_inv)},
        {"se_broadening", d.se_broadening},
        {"r_se", opt_json(d.r_se)}}},
      {"measurement",
       {{"g_coupling", m.g_coupling},
        {"eta", m.eta},
        {"photon_flux", m.photon_flux},
        {"delta", m.delta}}},
      {"prior", {{"mean", vec_json(cfg.prior.mean)}, {"covariance", prior_cov}}},
      {"experiment",
       {{"seed", e.seed},
        {"n_steps", e.n_steps},
        {"input", opt_json(e.input)},
        {"segment_length", e.segment_length},
        {"overlap", e.overlap},
        {"fit_window", window},
        {"larmor_frequencies", e.larmor_frequencies},
        {"gradients", e.gradients},
        {"gradient_mode", e.gradient_mode == GradientMode::isotropic ? "isotropic" : "transverse"},
        {"delta_z", opt_json(e.delta_z)},
        {"decay_duration", e.decay_duration},
        {"series_points", e.series_points},
        {"require_steady_state", e.require_steady_state}}},
      {"output", {{"directory", cfg.output.directory}, {"format", cfg.output.format}}},
  };
}

double effective_se_rate(const RunConfig& cfg) {
  return cfg.dynamics.r_se.value_or(se_rate(cfg.physical));
}

SystemModel system_model(const RunConfig& cfg, std::optional<double> larmor_hz) {
  const auto& d = cfg.dynamics;
  SystemModel m;
  m.physical = cfg.physical;
  m.measurement = cfg.measurement;
  const Vec3 dir = d.b_direction.normalized();
  double magnitude = 0.0;
  if (larmor_hz) {
    magnitude = field_for_larmor(cfg.physical, *larmor_hz);
  } else if (d.larmor_frequency) {
    magnitude = field_for_larmor(cfg.physical, *d.larmor_frequency);
  } else {
    magnitude = d.b_magnitude.value_or(0.0);
  }
  m.b_field = magnitude * dir;
  m.rates.t1_inv = d.t1_inv;
  if (d.se_broadening) {
    const double omega = cfg.physical.gyromagnetic_ratio() * magnitude;
    m.rates.t2_inv = d.t1_inv + std::numbers::pi * se_linewidth(omega, effective_se_rate(cfg),
                                                                cfg.physical.nuclear_spin);
  } else {
    m.rates.t2_inv = d.t2_inv.value_or(d.t1_inv);
  }
  return m;
}

json derived_json(const RunConfig& cfg) {
  const SystemModel m = system_model(cfg);
  const auto eq = equilibrium_variation(m.n_atoms());
  return {
      {"n_atoms", m.n_atoms()},
      {"r_se", effective_se_rate(cfg)},
      {"gyromagnetic_ratio", cfg.physical.gyromagnetic_ratio()},
      {"b_field", vec_json(m.b_field)},
      {"larmor_frequency", cfg.physical.gyromagnetic_ratio() * m.b_field.norm() / (2.0 * std::numbers::pi)},
      {"t1_inv", m.rates.t1_inv},
      {"t2_inv", m.rates.t2_inv},
      {"tss", eq.tss},
      {"sql", eq.sql},
  };
}

}  // namespace spinqnd::app
