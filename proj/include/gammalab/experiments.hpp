#ifndef GAMMALAB_EXPERIMENTS_HPP
#define GAMMALAB_EXPERIMENTS_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gammalab/solve.hpp"

namespace gammalab {

using ordered_json = nlohmann::ordered_json;

struct FieldSpec {
  std::string preset = "zero";  // zero|one|sin_product|linear_sum|oscillation
  double amplitude = 1.0;
  int mode = 1;  // oscillation frequency for the oscillation preset
};

struct VecFieldSpec {
  std::string preset = "cosine";  // zero|constant_ones|cosine|linear
  double amplitude = 1.0;
};

struct IntegrandSpec {
  std::string type = "identity";  // identity|constant|diagonal|rotation
  std::vector<std::vector<double>> entries;
  std::string profile = "sin_wells";
  double amplitude = 0.5;
  double lambda = 1.0;
  double big_lambda = 1.0;
};

struct PerturbationSpec {
  double mu = 0.0;
  FieldSpec g;
};

struct BoundarySpec {
  FieldSpec phi;
  std::string sequence = "scaled";  // scaled: phi_h = phi*(1+1/h); constant: phi_h = phi
};

struct ToleranceSpec {
  double cg_tol = 1e-10;
  double eig_tol = 1e-8;
  double descent_tol = 1e-6;
};

struct OutputSpec {
  std::string dir = "out";
  std::string format = "csv";  // csv|json
};

struct ExperimentConfig {
  std::string experiment;  // E1..E6 or long names
  std::string family = "degenerate_2d";
  FamilyParams family_params;
  int dim = 2;
  Coord lo{};
  Coord hi{};
  std::array<int, kMaxDim> res{};
  std::vector<int> h_values;  // empty: default schedule with resolvability truncation
  double p = 2.0;
  IntegrandSpec integrand;
  PerturbationSpec perturbation;
  BoundarySpec boundary;
  FieldSpec phi_field;  // test function u for E3/E6
  std::vector<FieldSpec> test_fields;
  VecFieldSpec momentum_field;
  ToleranceSpec tolerances;
  OutputSpec output;

  static ExperimentConfig from_json(const ordered_json& j);
  ordered_json to_json() const;
  // Canonical experiment key E1..E6; throws config_error on unknown names.
  std::string canonical_experiment() const;
  std::vector<double> lo_vector() const;
  std::vector<double> hi_vector() const;
};

// Built-in defaults per experiment, matching the documented schema.
ExperimentConfig default_config(const std::string& experiment);

struct ReportRow {
  int h = 0;
  double value = 0.0;
  double reference = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
};

struct ConvergenceReport {
  std::vector<ReportRow> rows;  // sorted by h
  std::optional<double> fitted_rate;
  ordered_json metadata;
};

// Dispatches on config.experiment:
//   E1 rayleigh_convergence, E2 noncompactness, E3 mollification_rate,
//   E4 minima_convergence, E5 h_convergence, E6 recovery_sequence.
ConvergenceReport run(const ExperimentConfig& config);

// Least-squares slope of log(abs_error) vs log(abscissa); the abscissa is h,
// or sigma(h) when the report's metadata declares it. Requires at least three
// rows with positive error and abscissa.
double fit_rate(const ConvergenceReport& report);

struct EmitResult {
  std::string path;
};

// CSV: header h,value,reference,abs_error,rel_error, RFC-4180, 17 significant
// digits. JSON: one object with rows, fitted_rate, metadata, stable key order.
EmitResult emit(const ConvergenceReport& report, const std::string& dir, const std::string& format,
                const std::string& name);

// Dry-run checks: config invariants, class tags, sigma resolvability per h.
// Returns human-readable findings; throws config_error on hard violations.
std::vector<std::string> validate(const ExperimentConfig& config);

std::vector<std::pair<std::string, std::string>> list_experiments();

// Worker cap for per-h parallel rows (GAMMALAB_THREADS, default: cores).
int thread_budget();

// Shared field/family construction, also used by the test suites.
MovingFamily make_family(const ExperimentConfig& config);
Grid make_grid(const ExperimentConfig& config);
ScalarField make_field(const FieldSpec& spec, const Grid& grid, BoundaryMode mode);
VecField make_vec_field(const VecFieldSpec& spec, const Grid& grid);
Integrand make_integrand(const IntegrandSpec& spec, int m, double p);
std::vector<int> resolved_h_schedule(const ExperimentConfig& config, bool needs_mollifier);

}  // namespace gammalab

#endif
