#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cotdr/error.hpp"
#include "cotdr/harness.hpp"
#include "cotdr/scenario.hpp"
#include "cotdr/thermo.hpp"

namespace fs = std::filesystem;
using namespace cotdr;

namespace {

constexpr int kExitConfiguration = 2;
constexpr int kExitMeasurement = 3;

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw ConfigurationError("cannot write " + file.string());
  return out;
}

void print_setup(const Scenario& sc, const Setup& s) {
  std::printf("scenario %s, mode %s, seed %llu\n", sc.name.c_str(), sc.mode.c_str(),
              static_cast<unsigned long long>(sc.seed));
  std::printf("  %d samples/chip, %zu traces per code, noise sigma %.6g (single-trace SNR %.2f dB)\n",
              s.frame.samples_per_chip, s.receiver.traces, s.receiver.noise_sigma, s.snr_db);
}

void print_sections(const ExperimentResult& r) {
  for (const auto& s : r.sections) {
    std::printf("  %-8s estimator std %8.4f ps, shift %.4f ps/K, %s\n", s.label.c_str(), s.estimator_std_s * 1e12,
                s.shift_per_kelvin_s * 1e12, s.sufficient_resolution ? "ok" : "insufficient resolution");
  }
}

void write_diagnostics(const fs::path& dir, const ExperimentResult& r) {
  auto out = open_out(dir / "diagnostics.txt");
  for (const auto& d : r.diagnostics) {
    out << d << '\n';
    std::fprintf(stderr, "note: %s\n", d.c_str());
  }
}

int cmd_run(const std::string& file, const std::string& out_dir, std::optional<std::uint64_t> seed,
            std::optional<std::string> mode, std::optional<std::string> calibration, bool dump) {
  Scenario sc = load_scenario(file);
  if (seed) sc.seed = *seed;
  if (mode) sc.mode = *mode;
  sc.validate();

  const fs::path dir = out_dir.empty() ? fs::path("run_" + sc.name) : fs::path(out_dir);
  fs::create_directories(dir);
  RunOptions opts;
  if (dump) opts.dump_dir = dir / "traces";

  ExperimentResult result;
  if (const auto* stair = std::get_if<StaircaseSchedule>(&sc.schedule)) {
    result = run_experiment_a(sc, opts);
    print_setup(sc, result.setup);
    const auto profile = sc.temperature_profile.empty() ? staircase_profile(*stair) : sc.temperature_profile;
    auto oven = open_out(dir / "oven.csv");
    write_oven_csv(oven, profile, stair->dwell_s * static_cast<double>(stair->levels_c.size()));
    auto dvt = open_out(dir / "delay_vs_temperature.csv");
    write_delay_vs_temperature_csv(dvt, result);
    auto cal = open_out(dir / "calibration.txt");
    save_calibrations(cal, result.calibrations);
    for (const auto& c : result.calibrations)
      std::printf("  %-8s TCD %.4f ppm/K, r^2 %.5f, nominal %.6f ns\n", c.section_label.c_str(), c.tcd_ppm_per_k,
                  c.r_squared, c.nominal_delay_s * 1e9);
  } else {
    if (!calibration) throw ConfigurationError("a periodic schedule needs --calibration FILE");
    std::ifstream in(*calibration);
    if (!in) throw ConfigurationError("cannot open calibration file " + *calibration);
    std::vector<TcdCalibration> cals;
    try {
      cals = load_calibrations(in);
    } catch (const InvalidArgument& e) {
      throw ConfigurationError(e.what());
    }
    result = run_experiment_b(sc, cals, opts);
    print_setup(sc, result.setup);
    auto series = open_out(dir / "temperature_series.csv");
    write_temperature_series_csv(series, result);
  }

  auto records = open_out(dir / "records.csv");
  write_records_csv(records, result);
  auto peaks = open_out(dir / "peaks.csv");
  write_peaks_csv(peaks, result);
  auto sections = open_out(dir / "sections.csv");
  write_sections_csv(sections, result);
  write_diagnostics(dir, result);
  print_sections(result);
  std::printf("%zu measurements written to %s\n", result.records.size(), dir.string().c_str());

  if (result.records.empty()) {
    std::fprintf(stderr, "error: no measurement succeeded\n");
    return kExitMeasurement;
  }
  if (std::holds_alternative<StaircaseSchedule>(sc.schedule) && result.calibrations.empty()) {
    std::fprintf(stderr, "error: no section could be calibrated\n");
    return kExitMeasurement;
  }
  return 0;
}

int cmd_calibrate(const std::string& run_dir) {
  const fs::path dir(run_dir);
  std::ifstream in(dir / "records.csv");
  if (!in) throw ConfigurationError("cannot open " + (dir / "records.csv").string());
  const auto rows = read_records_csv(in);
  std::vector<std::string> notes;
  const auto cals = calibrate_from_records(rows, &notes);
  for (const auto& n : notes) std::fprintf(stderr, "note: %s\n", n.c_str());
  if (cals.empty()) {
    std::fprintf(stderr, "error: no section could be calibrated\n");
    return kExitMeasurement;
  }
  auto out = open_out(dir / "calibration.txt");
  save_calibrations(out, cals);
  for (const auto& c : cals)
    std::printf("%-8s TCD %.4f ppm/K, r^2 %.5f\n", c.section_label.c_str(), c.tcd_ppm_per_k, c.r_squared);
  return 0;
}

int cmd_bench(const std::string& file, std::optional<std::string> mode, std::size_t repetitions) {
  Scenario sc = load_scenario(file);
  if (mode) sc.mode = *mode;
  sc.validate();
  const auto r = run_wallclock_benchmark(sc, repetitions);
  std::printf("measurement: %zu traces per code, %zu samples per frame, median of %zu\n", r.traces,
              r.frame_samples, r.repetitions);
  std::printf("  capture   %.4f s\n  correlate %.4f s\n  estimate  %.4f s\n  total     %.4f s (worst %.4f s)\n",
              r.capture_s, r.correlate_s, r.estimate_s, r.total_s, r.worst_total_s);
  std::printf("  single trace %.3f ms\n", r.single_trace_s * 1e3);
  std::printf("budget %.1f s: %s\n", r.budget_s, r.within_budget ? "met" : "EXCEEDED");
  return r.within_budget ? 0 : kExitMeasurement;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlation OTDR latency and temperature simulator"};
  app.require_subcommand(1);

  std::string scenario_file, out_dir, calibration_file, run_dir, mode;
  std::uint64_t seed = 0;
  bool dump = false;
  std::size_t repetitions = 3;

  auto* run = app.add_subcommand("run", "Run the experiment described by a scenario file");
  run->add_option("scenario", scenario_file, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory (default run_<name>)");
  auto* seed_opt = run->add_option("--seed", seed, "Override the scenario seed");
  auto* mode_opt = run->add_option("--mode", mode, "Front end")->check(CLI::IsMember({"lab", "portable"}));
  auto* cal_opt = run->add_option("--calibration", calibration_file, "Calibration file for periodic runs");
  run->add_flag("--dump-traces", dump, "Write each accumulation as a binary record");

  auto* calibrate = app.add_subcommand("calibrate", "Fit the TCD of each section from a staircase run");
  calibrate->add_option("run-dir", run_dir, "Directory holding records.csv")->required()->check(CLI::ExistingDirectory);

  auto* bench = app.add_subcommand("bench", "Time one measurement against the 2 s budget");
  bench->add_option("scenario", scenario_file, "Scenario file")->required()->check(CLI::ExistingFile);
  auto* bench_mode = bench->add_option("--mode", mode, "Front end")->check(CLI::IsMember({"lab", "portable"}));
  bench->add_option("--repetitions", repetitions, "Timed measurements")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfiguration;
  }

  try {
    if (*run) {
      return cmd_run(scenario_file, out_dir, *seed_opt ? std::optional(seed) : std::nullopt,
                     *mode_opt ? std::optional(mode) : std::nullopt,
                     *cal_opt ? std::optional(calibration_file) : std::nullopt, dump);
    }
    if (*calibrate) return cmd_calibrate(run_dir);
    if (*bench) return cmd_bench(scenario_file, *bench_mode ? std::optional(mode) : std::nullopt, repetitions);
  } catch (const ConfigurationError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfiguration;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfiguration;
  } catch (const MeasurementError& e) {
    std::fprintf(stderr, "measurement failure: %s\n", e.what());
    return kExitMeasurement;
  }
  return 0;
}
