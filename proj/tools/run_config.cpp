#include "run_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "ks2d/random.hpp"

namespace ks2d::cli {

namespace pt = boost::property_tree;

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "domain.L1", "domain.L2", "domain.M", "domain.N",
      "physics.kappa",
      "integrator.order", "integrator.dt", "integrator.warmup_dt", "integrator.horizon", "integrator.dealias",
      "integrator.start", "integrator.divergence", "integrator.shift",
      "control.strategy", "control.alpha", "control.onset", "control.gain",
      "actuators.family", "actuators.n", "actuators.d1", "actuators.d2", "actuators.sigma",
      "actuators.halton_start", "actuators.seed", "actuators.path",
      "initial.kind", "initial.seed", "initial.path", "initial.scale",
      "target.kind", "target.profile", "target.orbit_initial", "target.orbit_seed", "target.orbit_path",
      "target.orbit_scale",
      "output.stride", "output.snapshot_every", "output.final_snapshot", "output.report", "output.projection_from",
      "output.projection_to",
      "run.seed", "run.workers",
      "sweep.alphas", "sweep.nctrls", "sweep.dt_cap", "sweep.lambda_min", "sweep.r2_min", "sweep.transient",
      "grids.study", "grids.Ls", "grids.families", "grids.seeds", "grids.control_time", "grids.modes_per_length",
      "grids.fit_Ls",
      "waves.kind", "waves.modes", "waves.tolerance",
      "gain.method", "gain.n", "gain.threshold", "gain.jitter", "gain.max_gain", "gain.seed",
      "sync.kappa", "sync.L", "sync.M", "sync.d", "sync.alpha", "sync.onset", "sync.horizon", "sync.dt",
      "sync.stride", "sync.window_from", "sync.window_to",
  };
  return keys;
}

RunConfig RunConfig::load(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  std::string text;
  std::string source = "<flags>";
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw IoError("cannot read config file " + file->string());
    std::ostringstream os;
    os << in.rdbuf();
    text = os.str();
    source = file->string();
  }
  return parse(text, overrides, source);
}

RunConfig RunConfig::parse(const std::string& text, const std::vector<std::string>& overrides,
                           const std::string& source) {
  RunConfig c;
  c.text_ = text;
  c.source_ = source;
  c.overrides_ = overrides;
  std::istringstream in(text);
  try {
    pt::read_ini(in, c.tree_);
  } catch (const pt::ini_parser_error& e) {
    std::ostringstream os;
    os << source << ":" << e.line() << ": " << e.message();
    throw ConfigError(os.str());
  }
  const auto& known = known_keys();
  const std::set<std::string> known_set(known.begin(), known.end());
  for (const auto& [section, body] : c.tree_) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(source + ": key '" + section + "' must sit inside a [section]");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!known_set.count(full)) {
        std::ostringstream os;
        os << source << ":" << c.line_of(key) << ": unknown key '" << full << "'";
        throw ConfigError(os.str());
      }
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not of the form section.key=value");
    std::string key = o.substr(0, eq);
    std::string value = o.substr(eq + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
    };
    trim(key);
    trim(value);
    if (!known_set.count(key)) throw ConfigError("override: unknown key '" + key + "'");
    c.tree_.put(pt::ptree::path_type(key, '.'), value);
  }
  return c;
}

int RunConfig::line_of(const std::string& key) const {
  std::istringstream in(text_);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const auto p = line.find_first_not_of(" \t");
    if (p != std::string::npos && line.compare(p, key.size(), key) == 0) return n;
  }
  return 0;
}

std::optional<std::string> RunConfig::raw(const std::string& key) const {
  if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'))) return *v;
  return std::nullopt;
}

bool RunConfig::has(const std::string& key) const { return raw(key).has_value(); }

void RunConfig::bad_value(const std::string& key, const std::string& value, const char* expected) const {
  std::ostringstream os;
  os << "config field '" << key << "'";
  const auto dot = key.find('.');
  if (const int line = line_of(key.substr(dot + 1)); line > 0) os << " (" << source_ << ":" << line << ")";
  os << ": expected " << expected << ", got '" << value << "'";
  throw ConfigError(os.str());
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used == v->size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, *v, "a finite number");
}

long RunConfig::get_int(const std::string& key, long fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const long n = std::stol(*v, &used);
    if (used == v->size()) return n;
  } catch (const std::exception&) {
  }
  bad_value(key, *v, "an integer");
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    if (!v->empty() && (*v)[0] != '-') {
      const unsigned long long n = std::stoull(*v, &used);
      if (used == v->size()) return n;
    }
  } catch (const std::exception&) {
  }
  bad_value(key, *v, "a nonnegative integer");
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  bad_value(key, *v, "true or false");
}

std::vector<std::string> RunConfig::get_words(const std::string& key, const std::vector<std::string>& fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  std::string cur;
  for (char ch : *v + ",") {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return out;
}

std::vector<double> RunConfig::get_list(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& w : get_words(key, {})) {
    try {
      std::size_t used = 0;
      const double d = std::stod(w, &used);
      if (used == w.size() && std::isfinite(d)) {
        out.push_back(d);
        continue;
      }
    } catch (const std::exception&) {
    }
    bad_value(key, *raw(key), "a comma-separated list of numbers");
  }
  return out;
}

std::uint64_t master_seed(const RunConfig& c) { return c.get_u64("run.seed", 0); }

DomainSpec domain_from(const RunConfig& c) {
  DomainSpec d;
  d.L1 = c.get_double("domain.L1", 21.0);
  d.L2 = c.get_double("domain.L2", d.L1);
  d.M = static_cast<int>(c.get_int("domain.M", 64));
  d.N = static_cast<int>(c.get_int("domain.N", d.M));
  d.validate();
  return d;
}

PhysicsParams physics_from(const RunConfig& c) { return {c.get_double("physics.kappa", 0.25)}; }

IntegratorConfig integrator_from(const RunConfig& c) {
  IntegratorConfig ic;
  ic.order = static_cast<int>(c.get_int("integrator.order", 4));
  ic.dt = c.get_double("integrator.dt", 1e-3);
  ic.dealias = c.get_bool("integrator.dealias", false);
  ic.divergence_threshold = c.get_double("integrator.divergence", 1e4);
  if (c.has("integrator.shift")) ic.shift = c.get_double("integrator.shift", 0.0);
  const std::string start = c.get_string("integrator.start", "extrapolation");
  if (start == "extrapolation") {
    ic.start = StartMethod::extrapolation;
  } else if (start == "ramp") {
    ic.start = StartMethod::ramp;
  } else {
    throw ConfigError("config field 'integrator.start': expected extrapolation or ramp, got '" + start + "'");
  }
  ic.validate();
  return ic;
}

ActuatorSet actuators_from(const RunConfig& c, const DomainSpec& domain) {
  const std::string family = c.get_string("actuators.family", "halton");
  const std::uint64_t seed = c.has("actuators.seed") ? c.get_u64("actuators.seed", 0)
                                                     : derive_seed(master_seed(c), "grid");
  const long n = c.get_int("actuators.n", 49);
  if (n < 0) throw ConfigError("config field 'actuators.n' must be nonnegative");
  const double dflt = domain.L1 / std::round(std::sqrt(static_cast<double>(std::max(1L, n))));
  const double d1 = c.get_double("actuators.d1", dflt);
  const double d2 = c.get_double("actuators.d2", d1 * domain.L2 / domain.L1);
  if (family == "equidistant") return grid_equidistant(domain, d1, d2);
  if (family == "perturbed") {
    const std::uint64_t pseed = c.has("actuators.seed") ? seed : derive_seed(master_seed(c), "perturb");
    return grid_perturbed(domain, d1, d2, c.get_double("actuators.sigma", 0.5), pseed);
  }
  if (family == "random") return grid_random(domain, static_cast<std::size_t>(n), seed);
  if (family == "halton") {
    return grid_halton(domain, static_cast<std::size_t>(n), c.get_u64("actuators.halton_start", 1));
  }
  if (family == "file") {
    const std::string path = c.get_string("actuators.path", "");
    if (path.empty()) throw ConfigError("actuators.family = file needs actuators.path");
    return read_actuators(path, domain);
  }
  if (family == "none") return ActuatorSet(domain, {});
  throw ConfigError("config field 'actuators.family': unknown family '" + family +
                    "' (equidistant, perturbed, random, halton, file, none)");
}

namespace {

SpectralField field_of_kind(const RunConfig& c, const DomainSpec& domain, const std::string& kind,
                            std::uint64_t seed, const std::string& path_key, const char* what) {
  if (kind == "fixed") return fixed_initial_condition(domain);
  if (kind == "random") return random_initial_condition(domain, seed);
  if (kind == "zero") return SpectralField(domain);
  if (kind == "snapshot") {
    const std::string path = c.get_string(path_key, "");
    if (path.empty()) throw ConfigError(std::string(what) + " snapshot needs " + path_key);
    return resample(read_snapshot(path), domain);
  }
  throw ConfigError(std::string(what) + ": unknown kind '" + kind + "' (fixed, random, zero, snapshot)");
}

}  // namespace

SpectralField initial_from(const RunConfig& c, const DomainSpec& domain) {
  const std::uint64_t seed = c.has("initial.seed") ? c.get_u64("initial.seed", 0) : derive_seed(master_seed(c), "ic");
  SpectralField f = field_of_kind(c, domain, c.get_string("initial.kind", "fixed"), seed, "initial.path", "initial");
  f *= c.get_double("initial.scale", 1.0);
  return f;
}

TargetState target_from(const RunConfig& c, const DomainSpec& domain) {
  const std::string kind = c.get_string("target.kind", "zero");
  if (kind == "zero") return zero_target(domain);
  if (kind == "steady" || kind == "travelling") {
    const std::string path = c.get_string("target.profile", "");
    if (path.empty()) throw ConfigError("target.kind = " + kind + " needs target.profile");
    const Profile p = read_profile(path);
    if (std::abs(p.L1 - domain.L1) > 1e-12 * domain.L1) {
      throw ConfigError("target profile has L1 = " + std::to_string(p.L1) + ", domain has " +
                        std::to_string(domain.L1));
    }
    if (kind == "steady" && p.speed != 0.0) throw ConfigError("target.kind = steady but the profile has c != 0");
    return profile_target(p, domain);
  }
  if (kind == "orbit") {
    TargetState t;
    t.kind = TargetState::Kind::orbit;
    return t;
  }
  throw ConfigError("config field 'target.kind': unknown kind '" + kind + "' (zero, steady, travelling, orbit)");
}

SimulationConfig simulation_from(const RunConfig& c) {
  SimulationConfig s;
  s.domain = domain_from(c);
  s.physics = physics_from(c);
  s.integrator = integrator_from(c);
  if (c.has("integrator.warmup_dt")) s.warmup_dt = c.get_double("integrator.warmup_dt", s.integrator.dt);
  s.horizon = c.get_double("integrator.horizon", 2.0);
  s.stride = c.get_double("output.stride", 0.1);
  if (!(s.horizon > 0.0)) {
    // a zero horizon is allowed: only the initial costs are written
    if (s.horizon != 0.0) throw ConfigError("integrator.horizon must be nonnegative");
  }

  const std::string strategy = c.get_string("control.strategy", "none");
  s.control.alpha = c.get_double("control.alpha", 150.0);
  s.control.onset = c.get_double("control.onset", 0.0);
  if (strategy == "none") {
    s.control.kind = ControlKind::none;
  } else if (strategy == "proportional") {
    s.control.kind = ControlKind::proportional;
  } else if (strategy == "full_field") {
    s.control.kind = ControlKind::full_field;
  } else if (strategy == "feedback") {
    s.control.kind = ControlKind::feedback;
    const std::string path = c.get_string("control.gain", "");
    if (path.empty()) throw ConfigError("control.strategy = feedback needs control.gain");
    s.control.gain = read_gain(path);
  } else {
    throw ConfigError("config field 'control.strategy': unknown strategy '" + strategy +
                      "' (none, proportional, feedback, full_field)");
  }
  if (s.control.kind == ControlKind::proportional || s.control.kind == ControlKind::feedback) {
    s.actuators = actuators_from(c, s.domain);
  }

  s.initial = initial_from(c, s.domain);
  s.target = target_from(c, s.domain);
  if (s.target.kind == TargetState::Kind::orbit) {
    const std::uint64_t seed =
        c.has("target.orbit_seed") ? c.get_u64("target.orbit_seed", 0) : derive_seed(master_seed(c), "ic/orbit");
    s.orbit_initial =
        field_of_kind(c, s.domain, c.get_string("target.orbit_initial", "fixed"), seed, "target.orbit_path", "orbit");
    s.orbit_initial *= c.get_double("target.orbit_scale", 2.0);
  }
  if (c.has("output.projection_from") || c.has("output.projection_to")) {
    s.projection_window = std::make_pair(c.get_double("output.projection_from", 0.0),
                                         c.get_double("output.projection_to", s.horizon));
  }
  return s;
}

void echo_provenance(const std::filesystem::path& dir, const RunConfig& c, const std::string& version) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "config.ini", c.verbatim());
  std::string o;
  for (const auto& s : c.overrides()) o += s + "\n";
  write_file_atomic(dir / "overrides.txt", o);
  write_file_atomic(dir / "VERSION", "ks2d " + version + "\n");
}

}  // namespace ks2d::cli
