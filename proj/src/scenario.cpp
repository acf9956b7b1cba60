#include "cotdr/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "cotdr/error.hpp"

namespace cotdr {

namespace {

constexpr double kMinTemperatureC = -60.0;
constexpr double kMaxTemperatureC = 120.0;

double interpolate(const std::vector<const ProfilePoint*>& pts, double t) {
  if (t <= pts.front()->time_s) return pts.front()->temperature_c;
  if (t >= pts.back()->time_s) return pts.back()->temperature_c;
  const auto it = std::upper_bound(pts.begin(), pts.end(), t,
                                   [](double v, const ProfilePoint* p) { return v < p->time_s; });
  const auto* hi = *it;
  const auto* lo = *(it - 1);
  const double span = hi->time_s - lo->time_s;
  if (span <= 0.0) return hi->temperature_c;
  return lo->temperature_c + (hi->temperature_c - lo->temperature_c) * (t - lo->time_s) / span;
}

}  // namespace

TemperatureProfile::TemperatureProfile(std::vector<ProfilePoint> points, std::map<std::string, double> lag_s)
    : points_(std::move(points)), lag_s_(std::move(lag_s)) {
  std::stable_sort(points_.begin(), points_.end(),
                   [](const ProfilePoint& a, const ProfilePoint& b) { return a.time_s < b.time_s; });
  for (const auto& p : points_) {
    if (!std::isfinite(p.time_s) || !std::isfinite(p.temperature_c))
      throw ConfigurationError("temperature profile: non-finite breakpoint");
    if (p.temperature_c < kMinTemperatureC || p.temperature_c > kMaxTemperatureC)
      throw ConfigurationError("temperature profile: " + std::to_string(p.temperature_c) +
                               " degC is outside [-60, 120] degC");
  }
  for (const auto& [label, tau] : lag_s_)
    if (!(tau >= 0.0)) throw ConfigurationError("temperature profile: lag of '" + label + "' must be >= 0");
}

double TemperatureProfile::track(const std::string& label, double time_s) const {
  std::vector<const ProfilePoint*> own, oven;
  for (const auto& p : points_) {
    if (p.section == label) own.push_back(&p);
    if (p.section == "*") oven.push_back(&p);
  }
  if (!own.empty()) return interpolate(own, time_s);
  if (!oven.empty()) return interpolate(oven, time_s);
  throw ConfigurationError("temperature profile has no track for '" + label + "' and no oven track");
}

double TemperatureProfile::oven(double time_s) const { return track("*", time_s); }

double TemperatureProfile::section(const std::string& label, double time_s) const {
  const auto lag = lag_s_.find(label);
  if (lag == lag_s_.end() || lag->second == 0.0) return track(label, time_s);

  // First-order response to the piecewise-linear drive, started settled.
  const double tau = lag->second;
  const double t0 = points_.empty() ? 0.0 : std::min(0.0, points_.front().time_s);
  const double h = std::min(0.1, tau / 20.0);
  const double decay = 1.0 - std::exp(-h / tau);
  double t = t0;
  double temp = track(label, t0);
  while (t + h <= time_s) {
    temp += decay * (track(label, t + 0.5 * h) - temp);
    t += h;
  }
  const double rest = time_s - t;
  if (rest > 0.0) temp += (1.0 - std::exp(-rest / tau)) * (track(label, t + 0.5 * rest) - temp);
  return temp;
}

double TemperatureProfile::end_time() const { return points_.empty() ? 0.0 : points_.back().time_s; }

ModeSetup default_mode_setup(const std::string& mode) {
  ModeSetup m;
  if (mode == "portable") {
    m.samples_per_chip = 4;
    m.receiver.mode = Slicer{0.0};
    m.receiver.traces = 4000;
    m.noise.snr_db = -17.0;
  } else if (mode == "lab") {
    m.samples_per_chip = 20;
    m.receiver.mode = FullResolution{7, 0.05};
    m.receiver.traces = 1000;
    m.noise.snr_db = 10.0;
  } else {
    throw ConfigurationError("unknown mode '" + mode + "' (expected lab or portable)");
  }
  return m;
}

void Scenario::validate() const {
  path.validate();
  FrameConfig frame = probe;
  if (auto it = modes.find(mode); it != modes.end()) frame.samples_per_chip = it->second.samples_per_chip;
  frame.validate();
  if (code_order < 1 || code_order > 20) throw ConfigurationError("code_order must be in [1, 20]");
  if (frame.code_length != (std::size_t{1} << code_order))
    throw ConfigurationError("probe code_length does not match code_order");
  if (!modes.contains(mode)) throw ConfigurationError("scenario has no '" + mode + "' mode");
  for (const auto& [name, m] : modes) {
    m.receiver.validate();
    if (m.noise.sigma && !(*m.noise.sigma >= 0.0))
      throw ConfigurationError("mode '" + name + "': noise sigma must be non-negative");
  }
  if (!(resolution_span_k > 0.0)) throw ConfigurationError("resolution_span_k must be positive");
  if (!(min_peak_height > 0.0 && min_peak_height <= 1.0))
    throw ConfigurationError("min_peak_height must be in (0, 1]");

  std::set<std::string> labels;
  for (const auto& s : path.sections)
    if (!labels.insert(s.label).second) throw ConfigurationError("duplicate section label '" + s.label + "'");
  for (const auto& p : temperature_profile.points())
    if (p.section != "*" && !labels.contains(p.section))
      throw ConfigurationError("temperature profile names unknown section '" + p.section + "'");
  for (const auto& [label, tau] : temperature_profile.lag_s())
    if (!labels.contains(label)) throw ConfigurationError("lag given for unknown section '" + label + "'");

  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, StaircaseSchedule>) {
          if (s.levels_c.empty()) throw ConfigurationError("staircase needs at least one level");
          for (double level : s.levels_c)
            if (!(level > kMinTemperatureC && level < kMaxTemperatureC))
              throw ConfigurationError("staircase level " + std::to_string(level) +
                                       " degC is outside (-60, 120) degC");
          if (!(s.dwell_s > 0.0)) throw ConfigurationError("staircase dwell_s must be positive");
          if (s.measurements_per_level == 0) throw ConfigurationError("measurements_per_level must be >= 1");
          if (s.ramp_s < 0.0 || s.ramp_s >= 0.5 * s.dwell_s)
            throw ConfigurationError("staircase ramp_s must be in [0, dwell_s / 2)");
          const double end = s.dwell_s * static_cast<double>(s.levels_c.size());
          if (!temperature_profile.empty() && temperature_profile.end_time() < end)
            throw ConfigurationError("temperature profile ends before the staircase");
        } else {
          if (!(s.interval_s > 0.0)) throw ConfigurationError("periodic interval_s must be positive");
          if (!(s.duration_s >= 0.0)) throw ConfigurationError("periodic duration_s must be >= 0");
          if (temperature_profile.empty()) throw ConfigurationError("periodic schedule needs a temperature profile");
          if (temperature_profile.end_time() < s.duration_s)
            throw ConfigurationError("temperature profile ends before the schedule");
        }
      },
      schedule);
}

Setup resolve_setup(const Scenario& scenario) {
  scenario.validate();
  const ModeSetup& m = scenario.modes.at(scenario.mode);
  Setup setup;
  setup.frame = scenario.probe;
  setup.frame.samples_per_chip = m.samples_per_chip;
  setup.receiver = m.receiver;
  setup.receiver.seed = 0;
  setup.rx_bandwidth_hz = m.rx_bandwidth_hz.value_or(default_rx_bandwidth(setup.frame.bit_rate_hz));

  double weakest = 0.0;
  for (const auto& e : enumerate_reflections(scenario.path))
    if (weakest == 0.0 || e.amplitude < weakest) weakest = e.amplitude;
  if (m.noise.sigma) {
    setup.receiver.noise_sigma = *m.noise.sigma;
  } else if (m.noise.snr_db) {
    setup.receiver.noise_sigma = weakest * std::pow(10.0, -*m.noise.snr_db / 20.0);
  }
  setup.snr_db = setup.receiver.noise_sigma > 0.0 ? 20.0 * std::log10(weakest / setup.receiver.noise_sigma)
                                                  : std::numeric_limits<double>::infinity();
  setup.receiver.validate();
  return setup;
}

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigurationError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigurationError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigurationError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigurationError(where + ": missing '" + key + "'");
  T out{};
  read(obj, key, out, where);
  return out;
}

FiberSection parse_section(const json& j, const std::string& where) {
  check_keys(j, where,
             {"label", "length_m", "group_index", "tcd_ppm_per_k", "attenuation_db_per_km", "end_reflectance",
              "temperature_c", "reference_temperature_c"});
  FiberSection s;
  s.label = require<std::string>(j, "label", where);
  s.length_m = require<double>(j, "length_m", where);
  read(j, "group_index", s.group_index, where);
  read(j, "tcd_ppm_per_k", s.tcd_ppm_per_k, where);
  read(j, "attenuation_db_per_km", s.attenuation_db_per_km, where);
  read(j, "end_reflectance", s.end_reflectance, where);
  read(j, "reference_temperature_c", s.reference_temperature_c, where);
  s.temperature_c = s.reference_temperature_c;
  read(j, "temperature_c", s.temperature_c, where);
  return s;
}

void parse_mode(const json& j, ModeSetup& m, const std::string& where) {
  check_keys(j, where, {"samples_per_chip", "rx_bandwidth_hz", "receiver"});
  read(j, "samples_per_chip", m.samples_per_chip, where);
  if (j.contains("rx_bandwidth_hz")) m.rx_bandwidth_hz = require<double>(j, "rx_bandwidth_hz", where);
  if (!j.contains("receiver")) return;

  const auto& r = j.at("receiver");
  const std::string rw = where + ".receiver";
  check_keys(r, rw,
             {"type", "threshold", "adc_bits", "full_scale", "traces", "noise_sigma", "snr_db", "jitter_sigma_s",
              "ac_coupled"});
  std::string type = std::holds_alternative<Slicer>(m.receiver.mode) ? "slicer" : "full_res";
  read(r, "type", type, rw);
  if (type == "slicer") {
    Slicer s = std::holds_alternative<Slicer>(m.receiver.mode) ? std::get<Slicer>(m.receiver.mode) : Slicer{};
    read(r, "threshold", s.threshold, rw);
    m.receiver.mode = s;
  } else if (type == "full_res") {
    FullResolution f = std::holds_alternative<FullResolution>(m.receiver.mode)
                           ? std::get<FullResolution>(m.receiver.mode)
                           : FullResolution{};
    read(r, "adc_bits", f.adc_bits, rw);
    read(r, "full_scale", f.full_scale, rw);
    m.receiver.mode = f;
  } else {
    throw ConfigurationError(rw + ".type: expected slicer or full_res, got '" + type + "'");
  }
  read(r, "traces", m.receiver.traces, rw);
  read(r, "jitter_sigma_s", m.receiver.jitter_sigma_s, rw);
  read(r, "ac_coupled", m.receiver.ac_coupled, rw);
  if (r.contains("noise_sigma") && r.contains("snr_db"))
    throw ConfigurationError(rw + ": give noise_sigma or snr_db, not both");
  if (r.contains("noise_sigma")) m.noise = {require<double>(r, "noise_sigma", rw), std::nullopt};
  if (r.contains("snr_db")) m.noise = {std::nullopt, require<double>(r, "snr_db", rw)};
}

}  // namespace

Scenario parse_scenario(const json& doc) {
  check_keys(doc, "scenario",
             {"name", "mode", "seed", "probe", "path", "modes", "temperature_profile", "section_lag_s", "schedule",
              "analysis"});
  Scenario sc;
  read(doc, "name", sc.name, "scenario");
  read(doc, "mode", sc.mode, "scenario");
  read(doc, "seed", sc.seed, "scenario");

  if (doc.contains("probe")) {
    const auto& p = doc.at("probe");
    check_keys(p, "probe", {"bit_rate_hz", "code_order", "fill_chips", "pair_mode"});
    read(p, "bit_rate_hz", sc.probe.bit_rate_hz, "probe");
    read(p, "code_order", sc.code_order, "probe");
    read(p, "fill_chips", sc.probe.fill_chips, "probe");
    read(p, "pair_mode", sc.probe.pair_mode, "probe");
  }
  if (sc.code_order < 1 || sc.code_order > 20) throw ConfigurationError("probe.code_order must be in [1, 20]");
  sc.probe.code_length = std::size_t{1} << sc.code_order;

  if (!doc.contains("path")) throw ConfigurationError("scenario: missing 'path'");
  const auto& path = doc.at("path");
  check_keys(path, "path", {"reference_reflectance", "lead_delay_s", "sections"});
  read(path, "reference_reflectance", sc.path.reference_reflectance, "path");
  read(path, "lead_delay_s", sc.path.lead_delay_s, "path");
  if (path.contains("sections")) {
    if (!path.at("sections").is_array()) throw ConfigurationError("path.sections: expected an array");
    std::size_t i = 0;
    for (const auto& s : path.at("sections"))
      sc.path.sections.push_back(parse_section(s, "path.sections[" + std::to_string(i++) + "]"));
  }

  sc.modes["portable"] = default_mode_setup("portable");
  sc.modes["lab"] = default_mode_setup("lab");
  if (doc.contains("modes")) {
    const auto& modes = doc.at("modes");
    if (!modes.is_object()) throw ConfigurationError("modes: expected an object");
    for (const auto& [name, m] : modes.items()) {
      auto it = sc.modes.find(name);
      if (it == sc.modes.end()) throw ConfigurationError("modes: unknown mode '" + name + "'");
      parse_mode(m, it->second, "modes." + name);
    }
  }

  std::vector<ProfilePoint> points;
  if (doc.contains("temperature_profile")) {
    const auto& tp = doc.at("temperature_profile");
    if (!tp.is_array()) throw ConfigurationError("temperature_profile: expected an array");
    std::size_t i = 0;
    for (const auto& p : tp) {
      const std::string w = "temperature_profile[" + std::to_string(i++) + "]";
      check_keys(p, w, {"time_s", "section", "temperature_c"});
      ProfilePoint pt;
      pt.time_s = require<double>(p, "time_s", w);
      read(p, "section", pt.section, w);
      pt.temperature_c = require<double>(p, "temperature_c", w);
      points.push_back(pt);
    }
  }
  std::map<std::string, double> lag;
  read(doc, "section_lag_s", lag, "scenario");
  sc.temperature_profile = TemperatureProfile(std::move(points), std::move(lag));

  if (!doc.contains("schedule")) throw ConfigurationError("scenario: missing 'schedule'");
  const auto& s = doc.at("schedule");
  const auto type = require<std::string>(s, "type", "schedule");
  if (type == "staircase") {
    check_keys(s, "schedule", {"type", "levels_c", "dwell_s", "measurements_per_level", "ramp_s"});
    StaircaseSchedule st;
    st.levels_c = require<std::vector<double>>(s, "levels_c", "schedule");
    read(s, "dwell_s", st.dwell_s, "schedule");
    read(s, "measurements_per_level", st.measurements_per_level, "schedule");
    read(s, "ramp_s", st.ramp_s, "schedule");
    sc.schedule = st;
  } else if (type == "periodic") {
    check_keys(s, "schedule", {"type", "interval_s", "duration_s"});
    PeriodicSchedule pe;
    read(s, "interval_s", pe.interval_s, "schedule");
    read(s, "duration_s", pe.duration_s, "schedule");
    sc.schedule = pe;
  } else {
    throw ConfigurationError("schedule.type: expected staircase or periodic, got '" + type + "'");
  }

  if (doc.contains("analysis")) {
    const auto& a = doc.at("analysis");
    check_keys(a, "analysis", {"resolution_span_k", "min_peak_height", "min_peak_separation_s"});
    read(a, "resolution_span_k", sc.resolution_span_k, "analysis");
    read(a, "min_peak_height", sc.min_peak_height, "analysis");
    read(a, "min_peak_separation_s", sc.min_peak_separation_s, "analysis");
  }

  try {
    sc.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigurationError(e.what());
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigurationError("cannot open scenario file " + file.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigurationError(file.string() + ": " + e.what());
  }
  auto sc = parse_scenario(doc);
  if (sc.name.empty()) sc.name = file.stem().string();
  return sc;
}

}  // namespace cotdr
