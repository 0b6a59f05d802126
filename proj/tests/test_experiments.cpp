#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gammalab/errors.hpp"
#include "gammalab/experiments.hpp"

using namespace gammalab;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ConvergenceReport synthetic_power_law(double exponent, const std::vector<int>& hs) {
  ConvergenceReport rep;
  for (const int h : hs) {
    ReportRow row;
    row.h = h;
    row.value = std::pow(h, exponent);
    row.reference = 0.0;
    row.abs_error = row.value;
    row.rel_error = row.value;
    rep.rows.push_back(row);
  }
  rep.metadata["abscissa"] = "h";
  return rep;
}

}  // namespace

TEST_CASE("fit_rate recovers exact power laws") {
  const ConvergenceReport quad = synthetic_power_law(-2.0, {1, 2, 4, 8, 16});
  CHECK(fit_rate(quad) == doctest::Approx(-2.0).epsilon(1e-9));
  ConvergenceReport flat = synthetic_power_law(0.0, {1, 2, 4});
  for (auto& row : flat.rows) row.abs_error = 0.75;
  CHECK(fit_rate(flat) == doctest::Approx(0.0));
}

TEST_CASE("fit_rate needs three usable rows") {
  const ConvergenceReport two = synthetic_power_law(-1.0, {1, 2});
  CHECK_THROWS_AS(fit_rate(two), std::invalid_argument);
  ConvergenceReport zeros = synthetic_power_law(-1.0, {1, 2, 4});
  for (auto& row : zeros.rows) row.abs_error = 0.0;
  CHECK_THROWS_AS(fit_rate(zeros), std::invalid_argument);
}

TEST_CASE("emit writes a header-only CSV for empty reports") {
  ConvergenceReport rep;
  rep.metadata["abscissa"] = "h";
  const auto out = emit(rep, "test_out", "csv", "empty");
  CHECK(slurp(out.path) == "h,value,reference,abs_error,rel_error\n");
  std::filesystem::remove_all("test_out");
}

TEST_CASE("emitted CSV round-trips values exactly at 17 significant digits") {
  ConvergenceReport rep;
  ReportRow row;
  row.h = 3;
  row.value = 0.1 + 0.2;  // not exactly representable
  row.reference = std::sqrt(2.0);
  row.abs_error = std::abs(row.value - row.reference);
  row.rel_error = row.abs_error / row.reference;
  rep.rows.push_back(row);
  const auto out = emit(rep, "test_out", "csv", "roundtrip");
  std::ifstream f(out.path);
  std::string header, line;
  std::getline(f, header);
  std::getline(f, line);
  std::replace(line.begin(), line.end(), ',', ' ');
  std::istringstream is(line);
  int h;
  double value, reference, abs_error, rel_error;
  is >> h >> value >> reference >> abs_error >> rel_error;
  CHECK(h == 3);
  CHECK(value == row.value);
  CHECK(reference == row.reference);
  CHECK(abs_error == row.abs_error);
  CHECK(rel_error == row.rel_error);
  std::filesystem::remove_all("test_out");
}

TEST_CASE("emit rejects unwritable destinations") {
  ConvergenceReport rep;
  rep.metadata["abscissa"] = "h";
  CHECK_THROWS_AS(emit(rep, "/proc/nonexistent/out", "csv", "x"), std::runtime_error);
  CHECK_THROWS_AS(emit(rep, "test_out", "yaml", "x"), config_error);
  std::filesystem::remove_all("test_out");
}

TEST_CASE("json reports echo the full config") {
  ExperimentConfig config = default_config("E2");
  config.res = {64, 64, 1};
  config.h_values = {1, 2, 3};
  const ConvergenceReport rep = run(config);
  const auto out = emit(rep, "test_out", "json", "e2");
  ordered_json j;
  std::ifstream(out.path) >> j;
  CHECK(j.contains("rows"));
  CHECK(j.contains("fitted_rate"));
  CHECK(j.at("metadata").contains("config"));
  CHECK(j.at("metadata").at("config").at("experiment") == "E2");
  CHECK(j.at("metadata").at("config").at("grid").at("res")[0] == 64);
  CHECK(j.at("metadata").contains("verifies"));
  std::filesystem::remove_all("test_out");
}

TEST_CASE("config json round-trip preserves the experiment setup") {
  const ExperimentConfig config = default_config("E4");
  const ExperimentConfig back = ExperimentConfig::from_json(config.to_json());
  CHECK(back.family == config.family);
  CHECK(back.h_values == config.h_values);
  CHECK(back.perturbation.mu == config.perturbation.mu);
  CHECK(back.boundary.sequence == config.boundary.sequence);
  CHECK(back.res[0] == config.res[0]);
}

TEST_CASE("config validation catches malformed input") {
  ordered_json j;
  j["experiment"] = "E9";
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), config_error);
  j["experiment"] = "E1";
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), config_error);  // grid missing
  j["grid"] = ordered_json{{"lo", {0.0, 0.0}}, {"hi", {1.0, 1.0}}, {"res", {32, 32}}};
  CHECK_NOTHROW(ExperimentConfig::from_json(j));

  ExperimentConfig bad = default_config("E1");
  bad.h_values = {4, 2};
  CHECK_THROWS_AS(run(bad), std::runtime_error);
}

TEST_CASE("default schedules truncate at the resolvability gate, explicit ones abort") {
  // Static family: sigma(h) falls back to 1/h, so the default tail at h = 32
  // drops below 3x spacing on a res-48 unit box while {2,...,16} survive.
  ExperimentConfig config = default_config("E6");
  config.family = "euclidean";
  config.family_params.dim = 2;
  config.lo = {0.0, 0.0, 0.0};
  config.hi = {1.0, 1.0, 0.0};
  config.res = {48, 48, 1};
  config.h_values.clear();
  const auto hs = resolved_h_schedule(config, true);
  CHECK(hs == std::vector<int>{2, 4, 8, 16});

  config.h_values = {2, 4, 8, 16, 32};
  CHECK_THROWS_AS(resolved_h_schedule(config, true), config_error);
}

TEST_CASE("validate reports resolvability and class notes") {
  ExperimentConfig config = default_config("E3");
  config.res = {64, 64, 1};
  const auto notes = validate(config);
  CHECK(notes.size() >= 3);
  bool saw_sigma = false;
  for (const auto& n : notes) saw_sigma |= n.find("sigma(") != std::string::npos;
  CHECK(saw_sigma);

  // An explicit unresolvable schedule is a hard error for mollifying runs.
  config.h_values = {2, 100000};
  CHECK_THROWS_AS(validate(config), config_error);
}

TEST_CASE("integrand presets construct valid quadratic forms") {
  const ExperimentConfig base = default_config("E1");
  const Grid grid = make_grid(base);
  const MovingFamily fam = make_family(base);

  IntegrandSpec rot;
  rot.type = "rotation";
  rot.lambda = 1.0;
  rot.big_lambda = 2.0;
  const Integrand rot_f = make_integrand(rot, 2, 2.0);
  validate_integrand(rot_f, fam.at(2), grid);

  IntegrandSpec diag;
  diag.type = "diagonal";
  diag.profile = "linear_ramp";
  diag.amplitude = 0.25;
  const Integrand diag_f = make_integrand(diag, 2, 2.0);
  validate_integrand(diag_f, fam.at(2), grid);

  IntegrandSpec cst;
  cst.type = "constant";
  cst.entries = {{2.0, 0.5}, {0.5, 1.0}};
  const Integrand cst_f = make_integrand(cst, 2, 2.0);
  validate_integrand(cst_f, fam.at(2), grid);

  IntegrandSpec bad = cst;
  bad.entries = {{2.0, 0.5}, {0.4, 1.0}};
  CHECK_THROWS_AS(make_integrand(bad, 2, 2.0), config_error);
  IntegrandSpec rot_bad = rot;
  rot_bad.lambda = 0.0;
  CHECK_THROWS_AS(make_integrand(rot_bad, 2, 2.0), config_error);
}

TEST_CASE("list-experiments names all six runners") {
  const auto xs = list_experiments();
  CHECK(xs.size() == 6);
  CHECK(xs.front().first.find("E1") == 0);
}

TEST_CASE("E2 oscillation norms stay on the analytic value") {
  ExperimentConfig config = default_config("E2");
  config.res = {128, 128, 1};
  config.h_values = {1, 2, 4};
  const ConvergenceReport rep = run(config);
  REQUIRE(rep.rows.size() == 3);
  for (const auto& row : rep.rows) CHECK(row.rel_error < 0.01);
  const auto xnorm = rep.metadata.at("aux").at("x_norm").get<std::vector<double>>();
  for (const double v : xnorm)
    CHECK(v == doctest::Approx(rep.rows.front().reference).epsilon(0.01));
}

TEST_CASE("E1 with p != 2 labels its quotients as upper bounds") {
  ExperimentConfig config = default_config("E1");
  config.res = {48, 48, 1};
  config.h_values = {1, 2};
  config.p = 1.5;
  const ConvergenceReport rep = run(config);
  CHECK(rep.metadata.at("upper_bound_only").get<bool>());
  const double r_limit = rep.metadata.at("limit_rayleigh").get<double>();
  CHECK(r_limit > 0.0);
  // The monotone bound R <= R_h survives descent up to its one-sided error.
  for (const auto& row : rep.rows) CHECK(r_limit <= row.value * 1.05);
}

TEST_CASE("E5 on a static family reports errors at solver-tolerance level") {
  ExperimentConfig config = default_config("E5");
  config.family = "grushin";
  config.res = {48, 48, 1};
  config.h_values = {1, 2, 4};
  const ConvergenceReport rep = run(config);
  for (const auto& row : rep.rows) CHECK(row.rel_error <= 10.0 * config.tolerances.cg_tol);
  const auto mom_rel = rep.metadata.at("aux").at("momentum_rel_error").get<std::vector<double>>();
  for (const double v : mom_rel) CHECK(v <= 1e-8);
}

TEST_CASE("E4 and E5 error columns decrease by 4x from first to last row") {
  for (const char* key : {"E4", "E5"}) {
    ExperimentConfig config = default_config(key);
    config.res = {64, 64, 1};
    const ConvergenceReport rep = run(config);
    REQUIRE(rep.rows.size() >= 3);
    CHECK(rep.rows.back().rel_error <= 0.25 * rep.rows.front().rel_error);
    if (std::string(key) == "E4") {
      const auto mins = rep.metadata.at("aux").at("minimizer_rel_error").get<std::vector<double>>();
      CHECK(mins.back() <= 0.25 * mins.front());
    }
  }
}

TEST_CASE("E6 energies approach the target and distances shrink") {
  ExperimentConfig config = default_config("E6");
  config.res = {64, 64, 1};
  config.h_values = {2, 4, 8, 16};
  const ConvergenceReport rep = run(config);
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.rows.back().abs_error < rep.rows.front().abs_error);
  const auto dist = rep.metadata.at("aux").at("distance").get<std::vector<double>>();
  for (std::size_t i = 1; i < dist.size(); ++i) CHECK(dist[i] < dist[i - 1]);
}

TEST_CASE("repeated runs emit byte-identical CSV") {
  ExperimentConfig config = default_config("E3");
  config.res = {48, 48, 1};
  config.h_values = {4, 8, 16};
  const ConvergenceReport a = run(config);
  const ConvergenceReport b = run(config);
  const auto pa = emit(a, "test_out", "csv", "det_a");
  const auto pb = emit(b, "test_out", "csv", "det_b");
  CHECK(slurp(pa.path) == slurp(pb.path));
  CHECK(!slurp(pa.path).empty());
  std::filesystem::remove_all("test_out");
}

TEST_CASE("every report carries the statement it verifies") {
  for (const char* key : {"E1", "E2", "E3", "E6"}) {
    ExperimentConfig config = default_config(key);
    config.res = {48, 48, 1};
    if (std::string(key) == "E1") config.h_values = {1, 2};
    if (std::string(key) == "E2") config.h_values = {1, 2};
    if (std::string(key) == "E3" || std::string(key) == "E6") config.h_values = {4, 8, 16};
    const ConvergenceReport rep = run(config);
    CHECK(rep.metadata.contains("verifies"));
    CHECK(rep.metadata.contains("wall_time_seconds"));
  }
}
