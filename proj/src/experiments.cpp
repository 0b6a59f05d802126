#include "gammalab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "gammalab/errors.hpp"
#include "gammalab/mollify.hpp"

namespace gammalab {

namespace {

constexpr double kPi = std::numbers::pi;

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// RFC-4180: quote only when the field contains a comma, quote or newline.
std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += "\"";
  return out;
}

const std::vector<std::pair<std::string, std::string>> kExperiments = {
    {"E1", "rayleigh_convergence"}, {"E2", "noncompactness"},   {"E3", "mollification_rate"},
    {"E4", "minima_convergence"},   {"E5", "h_convergence"},    {"E6", "recovery_sequence"},
};

}  // namespace

std::string ExperimentConfig::canonical_experiment() const {
  for (const auto& [key, name] : kExperiments)
    if (experiment == key || experiment == name) return key;
  throw config_error("unknown experiment: " + experiment);
}

std::vector<std::pair<std::string, std::string>> list_experiments() {
  return {
      {"E1 rayleigh_convergence", "R_h for each h and R for the limit; verifies lim R_h = R"},
      {"E2 noncompactness", "oscillating u_h = sin(h x2): constant norms, vanishing pairings"},
      {"E3 mollification_rate", "commutator norm of the rate-coupled mollification, fitted rate"},
      {"E4 minima_convergence", "minima of F^phi_h + G against the limit minimum"},
      {"E5 h_convergence", "Dirichlet solutions and momenta against the limit problem"},
      {"E6 recovery_sequence", "smooth recovery chain: energies and distances to the target"},
  };
}

int thread_budget() {
  if (const char* env = std::getenv("GAMMALAB_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

namespace {

FieldSpec field_spec_from_json(const ordered_json& j) {
  FieldSpec s;
  if (j.contains("preset")) s.preset = j.at("preset").get<std::string>();
  if (j.contains("amplitude")) s.amplitude = j.at("amplitude").get<double>();
  if (j.contains("mode")) s.mode = j.at("mode").get<int>();
  return s;
}

ordered_json field_spec_to_json(const FieldSpec& s) {
  return ordered_json{{"preset", s.preset}, {"amplitude", s.amplitude}, {"mode", s.mode}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const ordered_json& j) {
  ExperimentConfig c;
  if (!j.contains("experiment")) throw config_error("config: 'experiment' is required");
  c.experiment = j.at("experiment").get<std::string>();
  c.canonical_experiment();  // validates the name
  if (j.contains("family")) {
    const auto& f = j.at("family");
    if (f.is_string()) {
      c.family = f.get<std::string>();
    } else {
      c.family = f.at("name").get<std::string>();
      if (f.contains("dim")) c.family_params.dim = f.at("dim").get<int>();
      if (f.contains("entries"))
        c.family_params.entries = f.at("entries").get<std::vector<std::vector<double>>>();
    }
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    const auto lo = g.at("lo").get<std::vector<double>>();
    const auto hi = g.at("hi").get<std::vector<double>>();
    const auto res = g.at("res").get<std::vector<int>>();
    if (lo.size() != hi.size() || lo.size() != res.size() || lo.empty() || lo.size() > kMaxDim)
      throw config_error("config: grid lo/hi/res must share a length of 1..3");
    c.dim = static_cast<int>(lo.size());
    for (std::size_t k = 0; k < lo.size(); ++k) {
      c.lo[k] = lo[k];
      c.hi[k] = hi[k];
      c.res[k] = res[k];
    }
  } else {
    throw config_error("config: 'grid' is required");
  }
  if (j.contains("h_values")) c.h_values = j.at("h_values").get<std::vector<int>>();
  if (j.contains("p")) c.p = j.at("p").get<double>();
  if (j.contains("integrand")) {
    const auto& q = j.at("integrand");
    if (q.contains("type")) c.integrand.type = q.at("type").get<std::string>();
    if (q.contains("entries"))
      c.integrand.entries = q.at("entries").get<std::vector<std::vector<double>>>();
    if (q.contains("profile")) c.integrand.profile = q.at("profile").get<std::string>();
    if (q.contains("amplitude")) c.integrand.amplitude = q.at("amplitude").get<double>();
    if (q.contains("lambda")) c.integrand.lambda = q.at("lambda").get<double>();
    if (q.contains("Lambda")) c.integrand.big_lambda = q.at("Lambda").get<double>();
  }
  if (j.contains("perturbation")) {
    const auto& q = j.at("perturbation");
    if (q.contains("mu")) c.perturbation.mu = q.at("mu").get<double>();
    if (q.contains("g")) c.perturbation.g = field_spec_from_json(q.at("g"));
  }
  if (j.contains("boundary_data")) {
    const auto& q = j.at("boundary_data");
    if (q.contains("phi")) c.boundary.phi = field_spec_from_json(q.at("phi"));
    if (q.contains("sequence")) c.boundary.sequence = q.at("sequence").get<std::string>();
  }
  if (j.contains("phi_field")) c.phi_field = field_spec_from_json(j.at("phi_field"));
  if (j.contains("test_fields"))
    for (const auto& t : j.at("test_fields")) c.test_fields.push_back(field_spec_from_json(t));
  if (j.contains("momentum_field")) {
    const auto& q = j.at("momentum_field");
    if (q.contains("preset")) c.momentum_field.preset = q.at("preset").get<std::string>();
    if (q.contains("amplitude")) c.momentum_field.amplitude = q.at("amplitude").get<double>();
  }
  if (j.contains("tolerances")) {
    const auto& q = j.at("tolerances");
    if (q.contains("cg_tol")) c.tolerances.cg_tol = q.at("cg_tol").get<double>();
    if (q.contains("eig_tol")) c.tolerances.eig_tol = q.at("eig_tol").get<double>();
    if (q.contains("descent_tol")) c.tolerances.descent_tol = q.at("descent_tol").get<double>();
  }
  if (j.contains("output")) {
    const auto& q = j.at("output");
    if (q.contains("dir")) c.output.dir = q.at("dir").get<std::string>();
    if (q.contains("format")) c.output.format = q.at("format").get<std::string>();
  }
  return c;
}

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["experiment"] = experiment;
  ordered_json fam;
  fam["name"] = family;
  if (family == "euclidean") fam["dim"] = family_params.dim;
  if (!family_params.entries.empty()) fam["entries"] = family_params.entries;
  j["family"] = fam;
  ordered_json g;
  std::vector<double> lo(lo_vector()), hi(hi_vector());
  std::vector<int> rs;
  for (int k = 0; k < dim; ++k) rs.push_back(res[static_cast<std::size_t>(k)]);
  g["lo"] = lo;
  g["hi"] = hi;
  g["res"] = rs;
  j["grid"] = g;
  j["h_values"] = h_values;
  j["p"] = p;
  j["integrand"] = ordered_json{{"type", integrand.type},
                                {"profile", integrand.profile},
                                {"amplitude", integrand.amplitude},
                                {"lambda", integrand.lambda},
                                {"Lambda", integrand.big_lambda}};
  if (!integrand.entries.empty()) j["integrand"]["entries"] = integrand.entries;
  j["perturbation"] = ordered_json{{"mu", perturbation.mu}, {"g", field_spec_to_json(perturbation.g)}};
  j["boundary_data"] =
      ordered_json{{"phi", field_spec_to_json(boundary.phi)}, {"sequence", boundary.sequence}};
  j["phi_field"] = field_spec_to_json(phi_field);
  ordered_json tf = ordered_json::array();
  for (const auto& t : test_fields) tf.push_back(field_spec_to_json(t));
  j["test_fields"] = tf;
  j["momentum_field"] =
      ordered_json{{"preset", momentum_field.preset}, {"amplitude", momentum_field.amplitude}};
  j["tolerances"] = ordered_json{{"cg_tol", tolerances.cg_tol},
                                 {"eig_tol", tolerances.eig_tol},
                                 {"descent_tol", tolerances.descent_tol}};
  j["output"] = ordered_json{{"dir", output.dir}, {"format", output.format}};
  return j;
}

std::vector<double> ExperimentConfig::lo_vector() const {
  std::vector<double> v;
  for (int k = 0; k < dim; ++k) v.push_back(lo[static_cast<std::size_t>(k)]);
  return v;
}

std::vector<double> ExperimentConfig::hi_vector() const {
  std::vector<double> v;
  for (int k = 0; k < dim; ++k) v.push_back(hi[static_cast<std::size_t>(k)]);
  return v;
}

Grid make_grid(const ExperimentConfig& config) {
  return Grid::make(config.dim, config.lo, config.hi, config.res);
}

MovingFamily make_family(const ExperimentConfig& config) {
  FamilyParams params = config.family_params;
  // Builtin coefficient formulas are global; pin the family box to the run's grid.
  params.box_lo = config.lo;
  params.box_hi = config.hi;
  return builtin_family(config.family, params);
}

namespace {

double normalized(double x, double lo, double hi) { return (x - lo) / (hi - lo); }

}  // namespace

ScalarField make_field(const FieldSpec& spec, const Grid& grid, BoundaryMode mode) {
  const double amp = spec.amplitude;
  std::function<double(const Coord&)> f;
  if (spec.preset == "zero") {
    f = [](const Coord&) { return 0.0; };
  } else if (spec.preset == "one") {
    f = [amp](const Coord&) { return amp; };
  } else if (spec.preset == "sin_product") {
    f = [amp, &grid](const Coord& x) {
      double s = amp;
      for (int k = 0; k < grid.dim; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        s *= std::sin(kPi * normalized(x[ks], grid.lo[ks], grid.hi[ks]));
      }
      return s;
    };
  } else if (spec.preset == "linear_sum") {
    f = [amp, &grid](const Coord& x) {
      double s = 0.0;
      for (int k = 0; k < grid.dim; ++k) s += x[static_cast<std::size_t>(k)];
      return amp * s;
    };
  } else if (spec.preset == "oscillation") {
    // sin(mode * x_last) on the raw coordinate, the noncompactness witness.
    const int mode_k = spec.mode;
    f = [amp, mode_k, &grid](const Coord& x) {
      return amp * std::sin(mode_k * x[static_cast<std::size_t>(grid.dim - 1)]);
    };
  } else if (spec.preset == "sine_pair") {
    f = [amp, &grid](const Coord& x) {
      double s = amp;
      for (int k = 0; k < grid.dim; ++k) s *= std::sin(x[static_cast<std::size_t>(k)]);
      return s;
    };
  } else {
    throw config_error("unknown field preset: " + spec.preset);
  }
  return ScalarField::from_function(grid, mode, f);
}

VecField make_vec_field(const VecFieldSpec& spec, const Grid& grid) {
  VecField out(grid, grid.dim);
  std::array<int, kMaxDim> idx{};
  for (std::size_t t = 0; t < grid.node_count(); ++t) {
    grid.decode(t, idx);
    const Coord x = grid.node(idx);
    for (int k = 0; k < grid.dim; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      double v;
      if (spec.preset == "zero") {
        v = 0.0;
      } else if (spec.preset == "constant_ones") {
        v = 1.0;
      } else if (spec.preset == "cosine") {
        v = std::cos(kPi * normalized(x[ks], grid.lo[ks], grid.hi[ks]));
      } else if (spec.preset == "linear") {
        v = normalized(x[ks], grid.lo[ks], grid.hi[ks]);
      } else {
        throw config_error("unknown momentum field preset: " + spec.preset);
      }
      out.at(t, k) = spec.amplitude * v;
    }
  }
  return out;
}

Integrand make_integrand(const IntegrandSpec& spec, int m, double p) {
  Integrand f;
  f.p = p;
  if (spec.type == "identity") {
    f.kind = QuadraticIntegrand{[m](const Coord&) { return Mat::identity(m); }, 1.0, 1.0};
  } else if (spec.type == "constant") {
    if (static_cast<int>(spec.entries.size()) != m)
      throw config_error("integrand: constant matrix must be m x m");
    Mat a = Mat::zero(m, m);
    for (int i = 0; i < m; ++i) {
      if (static_cast<int>(spec.entries[static_cast<std::size_t>(i)].size()) != m)
        throw config_error("integrand: constant matrix must be m x m");
      for (int j = 0; j < m; ++j) a(i, j) = spec.entries[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        if (std::abs(a(i, j) - a(j, i)) > 1e-12) throw config_error("integrand: matrix not symmetric");
    const auto ev = sym_eigenvalues(a);
    const double lo_ev = ev[static_cast<std::size_t>(m - 1)];
    if (!(lo_ev > 0.0)) throw config_error("integrand: constant matrix not positive definite");
    f.kind = QuadraticIntegrand{[a](const Coord&) { return a; }, lo_ev, ev[0]};
  } else if (spec.type == "diagonal") {
    const double amp = spec.amplitude;
    if (!(amp >= 0.0) || amp >= 1.0)
      throw config_error("integrand: diagonal profile amplitude must be in [0, 1)");
    const std::string profile = spec.profile;
    if (profile != "sin_wells" && profile != "linear_ramp")
      throw config_error("unknown diagonal integrand profile: " + profile);
    auto diag = [m, amp, profile](const Coord& x) {
      Mat a = Mat::zero(m, m);
      for (int j = 0; j < m; ++j) {
        const double t = x[static_cast<std::size_t>(j % kMaxDim)];
        const double w = (profile == "sin_wells") ? std::sin(kPi * t + j) : t - std::floor(t);
        a(j, j) = 1.0 + amp * w;
      }
      return a;
    };
    f.kind = QuadraticIntegrand{diag, 1.0 - amp, 1.0 + amp};
  } else if (spec.type == "rotation") {
    if (m != 2) throw config_error("integrand: rotation profile requires m = 2");
    const double lam = spec.lambda, big = spec.big_lambda;
    if (!(lam > 0.0) || !(big >= lam)) throw config_error("integrand: need 0 < lambda <= Lambda");
    auto rot = [lam, big](const Coord& x) {
      const double th = kPi * x[0];
      const double c = std::cos(th), s = std::sin(th);
      Mat a = Mat::zero(2, 2);
      a(0, 0) = c * c * lam + s * s * big;
      a(0, 1) = c * s * (lam - big);
      a(1, 0) = a(0, 1);
      a(1, 1) = s * s * lam + c * c * big;
      return a;
    };
    f.kind = QuadraticIntegrand{rot, lam, big};
  } else {
    throw config_error("unknown integrand type: " + spec.type);
  }
  return f;
}

namespace {

bool resolvable(const MovingFamily& fam, int h, const Grid& grid) {
  return sigma(fam, h, grid) >= 3.0 * grid.max_spacing();
}

// Mollifying experiments skip h = 1, where sigma is rarely below the box
// size; the oscillation experiment walks every mode up to 8.
std::vector<int> default_schedule(const std::string& key, bool needs_mollifier) {
  if (key == "E2") return {1, 2, 3, 4, 5, 6, 7, 8};
  if (needs_mollifier) return {2, 4, 8, 16, 32};
  return {1, 2, 4, 8, 16, 32};
}

}  // namespace

std::vector<int> resolved_h_schedule(const ExperimentConfig& config, bool needs_mollifier) {
  const Grid grid = make_grid(config);
  const MovingFamily fam = make_family(config);
  const bool explicit_schedule = !config.h_values.empty();
  std::vector<int> hs = explicit_schedule
                            ? config.h_values
                            : default_schedule(config.canonical_experiment(), needs_mollifier);
  for (std::size_t i = 1; i < hs.size(); ++i)
    if (hs[i] <= hs[i - 1]) throw config_error("config: h_values must be strictly increasing");
  for (const int h : hs)
    if (h < 1) throw config_error("config: h_values must be >= 1");
  if (!needs_mollifier) return hs;
  if (!explicit_schedule) {
    std::vector<int> kept;
    for (const int h : hs)
      if (resolvable(fam, h, grid)) kept.push_back(h);
    if (kept.size() < 3)
      throw config_error("config: fewer than 3 resolvable h values with the default schedule");
    return kept;
  }
  for (const int h : hs)
    if (!resolvable(fam, h, grid)) {
      std::ostringstream msg;
      msg << "config: sigma(" << h << ") = " << sigma(fam, h, grid)
          << " under-resolved on this grid (need >= " << 3.0 * grid.max_spacing() << ")";
      throw config_error(msg.str());
    }
  return hs;
}

namespace {

struct RunContext {
  ExperimentConfig config;
  std::string key;
  Grid grid;
  MovingFamily family;
};

ordered_json base_metadata(const RunContext& ctx, const std::string& verifies,
                           const std::string& abscissa) {
  ordered_json md;
  md["experiment"] = ctx.key;
  md["verifies"] = verifies;
  md["abscissa"] = abscissa;
  md["config"] = ctx.config.to_json();
  md["version"] = "gammalab 1.0.0";
  return md;
}

// Runs fn(h) for each h on at most thread_budget() workers and assembles
// results in schedule order. Each call is independent and internally
// deterministic, so thread interleaving cannot change any value.
template <typename Fn>
auto map_over_h(const std::vector<int>& hs, Fn&& fn)
    -> std::vector<decltype(fn(1))> {
  using R = decltype(fn(1));
  const int workers = std::min<int>(thread_budget(), static_cast<int>(hs.size()));
  std::vector<R> out(hs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < hs.size(); ++i) out[i] = fn(hs[i]);
    return out;
  }
  std::atomic<std::size_t> cursor{0};
  std::mutex error_mu;
  std::exception_ptr error;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = cursor.fetch_add(1);
        if (i >= hs.size()) return;
        try {
          out[i] = fn(hs[i]);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

std::optional<double> try_fit_rate(const ConvergenceReport& rep) {
  try {
    return fit_rate(rep);
  } catch (const std::invalid_argument&) {
    return std::nullopt;  // degenerate error columns (e.g. static families)
  }
}

void finish_rows(ConvergenceReport& rep, const std::vector<int>& hs,
                 const std::vector<double>& values, const std::vector<double>& references) {
  for (std::size_t i = 0; i < hs.size(); ++i) {
    ReportRow row;
    row.h = hs[i];
    row.value = values[i];
    row.reference = references[i];
    row.abs_error = std::abs(values[i] - references[i]);
    const double denom = std::max(std::abs(references[i]), 1e-300);
    row.rel_error = row.abs_error / denom;
    rep.rows.push_back(row);
  }
}

ConvergenceReport run_rayleigh(const RunContext& ctx) {
  const std::vector<int> hs = resolved_h_schedule(ctx.config, false);
  RayleighOptions opts;
  opts.eig_tol = ctx.config.tolerances.eig_tol;
  opts.descent_tol = ctx.config.tolerances.descent_tol;
  opts.cg_tol = ctx.config.tolerances.cg_tol;
  const double p = ctx.config.p;
  const double r_limit = rayleigh_quotient(ctx.family.limit, ctx.grid, p, opts);
  const auto r_h = map_over_h(hs, [&](int h) {
    return rayleigh_quotient(ctx.family.at(h), ctx.grid, p, opts);
  });
  ConvergenceReport rep;
  finish_rows(rep, hs, r_h, std::vector<double>(hs.size(), r_limit));
  rep.metadata = base_metadata(ctx, "lim R_h = R (Rayleigh quotient convergence)", "h");
  rep.metadata["limit_rayleigh"] = r_limit;
  if (p != 2.0) rep.metadata["upper_bound_only"] = true;
  return rep;
}

ConvergenceReport run_noncompactness(const RunContext& ctx) {
  const std::vector<int> hs = resolved_h_schedule(ctx.config, false);
  const double p = ctx.config.p;
  std::vector<FieldSpec> tf = ctx.config.test_fields;
  if (tf.empty()) {
    tf.push_back(FieldSpec{"one", 1.0, 1});
    tf.push_back(FieldSpec{"sine_pair", 1.0, 1});
  }
  std::vector<ScalarField> witnesses;
  witnesses.reserve(tf.size());
  for (const auto& spec : tf) witnesses.push_back(make_field(spec, ctx.grid, BoundaryMode::free_extend));

  std::vector<double> unorm(hs.size()), xnorm(hs.size());
  std::vector<std::vector<double>> pairings(tf.size(), std::vector<double>(hs.size()));
  for (std::size_t i = 0; i < hs.size(); ++i) {
    FieldSpec osc{"oscillation", 1.0, hs[i]};
    const ScalarField u_h = make_field(osc, ctx.grid, BoundaryMode::free_extend);
    unorm[i] = lp_norm(u_h, p);
    xnorm[i] = lp_norm(x_gradient(u_h, ctx.family.at(hs[i])), p);
    for (std::size_t w = 0; w < witnesses.size(); ++w)
      pairings[w][i] = std::abs(inner(u_h, witnesses[w]));
  }
  const double ref = kPi * std::sqrt(2.0);
  ConvergenceReport rep;
  finish_rows(rep, hs, unorm, std::vector<double>(hs.size(), ref));
  rep.metadata = base_metadata(
      ctx, "bounded non-compact sequence: constant norms, weakly vanishing pairings", "h");
  rep.metadata["aux"]["x_norm"] = xnorm;
  for (std::size_t w = 0; w < witnesses.size(); ++w)
    rep.metadata["aux"]["pairing_" + tf[w].preset] = pairings[w];
  return rep;
}

ConvergenceReport run_mollification_rate(const RunContext& ctx) {
  const std::vector<int> hs = resolved_h_schedule(ctx.config, true);
  const double p = ctx.config.p;
  const ScalarField u = make_field(ctx.config.phi_field, ctx.grid, BoundaryMode::free_extend);
  const auto values = map_over_h(hs, [&](int h) {
    return commutator_norm(u, ctx.family, h, p);
  });
  std::vector<double> sigmas(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) sigmas[i] = sigma(ctx.family, hs[i], ctx.grid);
  ConvergenceReport rep;
  finish_rows(rep, hs, values, std::vector<double>(hs.size(), 0.0));
  rep.metadata = base_metadata(ctx, "commutator X^h(J_h*u) - X(J_h*u) vanishes at the coupled rate",
                               "sigma");
  rep.metadata["aux"]["sigma"] = sigmas;
  const int n = ctx.grid.dim;
  rep.metadata["theory_rate"] = (n * (p - 1.0) + p) / p;
  rep.fitted_rate = try_fit_rate(rep);
  return rep;
}

ScalarField scaled_boundary_datum(const ScalarField& phi, const std::string& sequence, int h) {
  if (sequence == "constant" || h <= 0) return phi;
  if (sequence != "scaled") throw config_error("unknown boundary sequence: " + sequence);
  ScalarField out = phi;
  scale(out, 1.0 + 1.0 / h);
  return out;
}

ConvergenceReport run_minima(const RunContext& ctx) {
  const std::vector<int> hs = resolved_h_schedule(ctx.config, false);
  const int m = ctx.family.limit.dim_m();
  const Integrand integrand = make_integrand(ctx.config.integrand, m, 2.0);
  const ScalarField phi = make_field(ctx.config.boundary.phi, ctx.grid, BoundaryMode::free_extend);
  const ScalarField gsrc = make_field(ctx.config.perturbation.g, ctx.grid, BoundaryMode::free_extend);
  Perturbation pert{ctx.config.perturbation.mu, gsrc, 2.0};

  auto minimize_for = [&](const CoefficientField& c, const ScalarField& datum) {
    DirichletProblem prob;
    prob.field = c;
    prob.a = integrand;
    prob.mu = 0.0;
    prob.g = ScalarField(ctx.grid, BoundaryMode::free_extend);
    prob.phi = datum;
    if (pert.mu == 0.0) prob.rayleigh_certificate = rayleigh_quotient(c, ctx.grid, 2.0);
    auto [rep, value] = minimize_total(prob, pert, ctx.config.tolerances.cg_tol);
    return std::make_pair(value, std::move(rep.solution));
  };
  const auto [m_limit, u_limit] = minimize_for(ctx.family.limit, phi);
  const double u_limit_norm = lp_norm(u_limit, 2.0);
  const auto per_h = map_over_h(hs, [&](int h) {
    auto [m_h, u_h] =
        minimize_for(ctx.family.at(h), scaled_boundary_datum(phi, ctx.config.boundary.sequence, h));
    const double dist = lp_norm(u_h - u_limit, 2.0) / std::max(u_limit_norm, 1e-300);
    return std::make_pair(m_h, dist);
  });
  std::vector<double> m_h(hs.size()), minimizer_rel(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    m_h[i] = per_h[i].first;
    minimizer_rel[i] = per_h[i].second;
  }
  ConvergenceReport rep;
  finish_rows(rep, hs, m_h, std::vector<double>(hs.size(), m_limit));
  rep.metadata = base_metadata(ctx, "inf(F^{phi_h}_h + G) -> min(F^phi + G), minimizers converge",
                               "h");
  rep.metadata["limit_minimum"] = m_limit;
  rep.metadata["aux"]["minimizer_rel_error"] = minimizer_rel;
  const EpsilonDelta ed = epsilon_delta_constants(pert, 0.5);
  rep.metadata["perturbation_epsilondelta"] = ordered_json{
      {"epsilon", ed.epsilon}, {"delta1", ed.delta1}, {"delta2", ed.delta2}, {"delta3", ed.delta3}};
  rep.fitted_rate = try_fit_rate(rep);
  return rep;
}

ConvergenceReport run_h_convergence(const RunContext& ctx) {
  const std::vector<int> hs = resolved_h_schedule(ctx.config, false);
  const int m = ctx.family.limit.dim_m();
  const Integrand integrand = make_integrand(ctx.config.integrand, m, 2.0);
  const ScalarField phi = make_field(ctx.config.boundary.phi, ctx.grid, BoundaryMode::free_extend);
  const ScalarField gsrc = make_field(ctx.config.perturbation.g, ctx.grid, BoundaryMode::free_extend);
  const VecField momentum_phi = make_vec_field(ctx.config.momentum_field, ctx.grid);
  const double mu = ctx.config.perturbation.mu;

  auto solve_for = [&](const CoefficientField& c, const ScalarField& datum) {
    DirichletProblem prob;
    prob.field = c;
    prob.a = integrand;
    prob.mu = mu;
    prob.g = gsrc;
    prob.phi = datum;
    if (mu == 0.0) prob.rayleigh_certificate = rayleigh_quotient(c, ctx.grid, 2.0);
    SolveReport rep = solve_dirichlet(prob, ctx.config.tolerances.cg_tol);
    const double mom = momentum_affine(integrand, datum, rep.correction, momentum_phi, c);
    return std::make_pair(rep.solution, mom);
  };

  const auto [u_limit, mom_limit] = solve_for(ctx.family.limit, phi);
  const double u_limit_norm = lp_norm(u_limit, 2.0);
  struct Row {
    double sol_rel = 0.0;
    double mom = 0.0;
  };
  const auto rows = map_over_h(hs, [&](int h) {
    const auto [u_h, mom_h] =
        solve_for(ctx.family.at(h), scaled_boundary_datum(phi, ctx.config.boundary.sequence, h));
    Row r;
    r.sol_rel = lp_norm(u_h - u_limit, 2.0) / u_limit_norm;
    r.mom = mom_h;
    return r;
  });
  std::vector<double> values(hs.size()), mom_rel(hs.size()), moms(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    values[i] = rows[i].sol_rel;
    moms[i] = rows[i].mom;
    mom_rel[i] = std::abs(rows[i].mom - mom_limit) / std::max(std::abs(mom_limit), 1e-300);
  }
  ConvergenceReport rep;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    ReportRow row;
    row.h = hs[i];
    row.value = values[i];
    row.reference = 0.0;
    row.abs_error = values[i];
    row.rel_error = values[i];
    rep.rows.push_back(row);
  }
  rep.metadata = base_metadata(ctx, "convergence of solutions and momenta (H-convergence)", "h");
  rep.metadata["aux"]["momentum"] = moms;
  rep.metadata["aux"]["momentum_rel_error"] = mom_rel;
  rep.metadata["limit_momentum"] = mom_limit;
  rep.metadata["limit_solution_norm"] = u_limit_norm;
  rep.fitted_rate = try_fit_rate(rep);
  return rep;
}

ConvergenceReport run_recovery(const RunContext& ctx) {
  const std::vector<int> hs = resolved_h_schedule(ctx.config, true);
  const double p = ctx.config.p;
  const ScalarField u = make_field(ctx.config.phi_field, ctx.grid, BoundaryMode::free_extend);
  const double target = std::pow(lp_norm(x_gradient(u, ctx.family.limit), p), p);
  struct Row {
    double energy = 0.0;
    double dist = 0.0;
  };
  const auto rows = map_over_h(hs, [&](int h) {
    const ScalarField u_h = meyers_serrin_step(u, ctx.family, h, ctx.grid);
    Row r;
    r.energy = std::pow(lp_norm(x_gradient(u_h, ctx.family.at(h)), p), p);
    r.dist = lp_norm(u_h - u, p);
    return r;
  });
  std::vector<double> values(hs.size()), dists(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    values[i] = rows[i].energy;
    dists[i] = rows[i].dist;
  }
  ConvergenceReport rep;
  finish_rows(rep, hs, values, std::vector<double>(hs.size(), target));
  rep.metadata = base_metadata(
      ctx, "recovery sequence: ||X^h u_h||_p^p -> ||X u||_p^p and u_h -> u", "h");
  rep.metadata["aux"]["distance"] = dists;
  rep.metadata["target_energy"] = target;
  std::vector<double> sigmas(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) sigmas[i] = sigma(ctx.family, hs[i], ctx.grid);
  rep.metadata["aux"]["sigma"] = sigmas;
  return rep;
}

}  // namespace

ConvergenceReport run(const ExperimentConfig& config) {
  RunContext ctx{config, config.canonical_experiment(), make_grid(config), make_family(config)};
  const auto start = std::chrono::steady_clock::now();
  ConvergenceReport rep;
  try {
    if (ctx.key == "E1")
      rep = run_rayleigh(ctx);
    else if (ctx.key == "E2")
      rep = run_noncompactness(ctx);
    else if (ctx.key == "E3")
      rep = run_mollification_rate(ctx);
    else if (ctx.key == "E4")
      rep = run_minima(ctx);
    else if (ctx.key == "E5")
      rep = run_h_convergence(ctx);
    else
      rep = run_recovery(ctx);
  } catch (const std::exception& e) {
    throw std::runtime_error("experiment " + ctx.key + ": " + e.what());
  }
  const auto stop = std::chrono::steady_clock::now();
  rep.metadata["wall_time_seconds"] =
      std::chrono::duration_cast<std::chrono::duration<double>>(stop - start).count();
  return rep;
}

double fit_rate(const ConvergenceReport& report) {
  std::vector<double> xs, ys;
  const bool use_sigma = report.metadata.contains("abscissa") &&
                         report.metadata.at("abscissa").get<std::string>() == "sigma";
  std::vector<double> sigmas;
  if (use_sigma) sigmas = report.metadata.at("aux").at("sigma").get<std::vector<double>>();
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const double err = report.rows[i].abs_error;
    const double ab = use_sigma ? sigmas[i] : static_cast<double>(report.rows[i].h);
    if (err > 0.0 && ab > 0.0) {
      xs.push_back(std::log(ab));
      ys.push_back(std::log(err));
    }
  }
  if (xs.size() < 3)
    throw std::invalid_argument("fit_rate: need at least 3 rows with positive error and abscissa");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

EmitResult emit(const ConvergenceReport& report, const std::string& dir, const std::string& format,
                const std::string& name) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("emit: cannot create output directory " + dir);
  EmitResult out;
  if (format == "csv") {
    const fs::path path = fs::path(dir) / (name + ".csv");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("emit: cannot open " + path.string());
    f << "h,value,reference,abs_error,rel_error\n";
    for (const auto& row : report.rows) {
      f << row.h << "," << csv_escape(format_g17(row.value)) << ","
        << csv_escape(format_g17(row.reference)) << "," << csv_escape(format_g17(row.abs_error))
        << "," << csv_escape(format_g17(row.rel_error)) << "\n";
    }
    out.path = path.string();
  } else if (format == "json") {
    const fs::path path = fs::path(dir) / (name + ".json");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("emit: cannot open " + path.string());
    ordered_json j;
    j["rows"] = ordered_json::array();
    for (const auto& row : report.rows)
      j["rows"].push_back(ordered_json{{"h", row.h},
                                       {"value", row.value},
                                       {"reference", row.reference},
                                       {"abs_error", row.abs_error},
                                       {"rel_error", row.rel_error}});
    if (report.fitted_rate)
      j["fitted_rate"] = *report.fitted_rate;
    else
      j["fitted_rate"] = nullptr;
    j["metadata"] = report.metadata;
    f << j.dump(2) << "\n";
    out.path = path.string();
  } else {
    throw config_error("emit: format must be csv or json");
  }
  return out;
}

std::vector<std::string> validate(const ExperimentConfig& config) {
  std::vector<std::string> notes;
  const std::string key = config.canonical_experiment();
  const Grid grid = make_grid(config);
  const MovingFamily fam = make_family(config);
  notes.push_back("experiment " + key + " on " + std::to_string(grid.dim) + "d grid, " +
                  std::to_string(grid.node_count()) + " nodes");
  const bool needs_mollifier = (key == "E3" || key == "E6");
  const std::vector<int> hs = resolved_h_schedule(config, needs_mollifier);
  {
    std::ostringstream os;
    os << "h schedule:";
    for (const int h : hs) os << " " << h;
    notes.push_back(os.str());
  }
  double prev_sigma = std::numeric_limits<double>::infinity();
  for (const int h : hs) {
    const double s = sigma(fam, h, grid);
    std::ostringstream os;
    os << "sigma(" << h << ") = " << s << (s >= 3.0 * grid.max_spacing() ? " (resolvable)" : " (below 3x spacing)");
    notes.push_back(os.str());
    if (s > prev_sigma + 1e-15) notes.push_back("warning: sigma not nonincreasing at h = " + std::to_string(h));
    prev_sigma = s;
  }
  const ClassifyResult cls = classify(fam, grid, hs);
  {
    std::ostringstream os;
    os << "family " << config.family << ": s1_shape = " << (cls.s1_shape ? "true" : "false")
       << ", s2_lip_bound = " << cls.s2_lip_bound;
    notes.push_back(os.str());
  }
  const bool tagged_s1 = fam.class_tags.count(ClassTag::S1) > 0;
  if (tagged_s1 && !cls.s1_shape)
    notes.push_back("warning: family tagged S1 but probe found non-S1 shape");
  const Integrand f = make_integrand(config.integrand, fam.limit.dim_m(), config.p);
  validate_integrand(f, fam.limit, grid);
  notes.push_back("integrand: symmetry and growth sandwich verified on sampled nodes");
  return notes;
}

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  const std::string key = c.canonical_experiment();
  if (key == "E1") {
    c.family = "degenerate_2d";
    c.dim = 2;
    c.lo = {0.0, 0.0, 0.0};
    c.hi = {1.0, 1.0, 0.0};
    c.res = {128, 128, 1};
    c.h_values = {1, 2, 4, 8};
    c.p = 2.0;
  } else if (key == "E2") {
    c.family = "degenerate_2d";
    c.dim = 2;
    c.lo = {-kPi, -kPi, 0.0};
    c.hi = {kPi, kPi, 0.0};
    c.res = {256, 256, 1};
    c.h_values = {1, 2, 3, 4, 5, 6, 7, 8};
    c.p = 2.0;
  } else if (key == "E3") {
    c.family = "degenerate_2d";
    c.dim = 2;
    c.lo = {-1.0, -1.0, 0.0};
    c.hi = {1.0, 1.0, 0.0};
    c.res = {128, 128, 1};
    c.h_values = {2, 4, 8, 16, 32};
    c.p = 2.0;
    c.phi_field = FieldSpec{"sin_product", 1.0, 1};
  } else if (key == "E4") {
    c.family = "grushin_lift";
    c.dim = 2;
    c.lo = {0.0, 0.0, 0.0};
    c.hi = {1.0, 1.0, 0.0};
    c.res = {128, 128, 1};
    c.h_values = {1, 2, 4, 8, 16, 32};
    c.p = 2.0;
    c.perturbation.mu = 1.0;
    c.perturbation.g = FieldSpec{"sin_product", 8.0, 1};
    c.boundary.phi = FieldSpec{"sin_product", 0.1, 1};
    c.boundary.sequence = "scaled";
  } else if (key == "E5") {
    c.family = "grushin_lift";
    c.dim = 2;
    c.lo = {0.0, 0.0, 0.0};
    c.hi = {1.0, 1.0, 0.0};
    c.res = {128, 128, 1};
    c.h_values = {1, 2, 4, 8, 16, 32};
    c.p = 2.0;
    c.perturbation.mu = 1.0;  // the problem's mass coefficient
    c.perturbation.g = FieldSpec{"sin_product", 4.0, 1};
    c.boundary.phi = FieldSpec{"zero", 0.0, 1};
    c.boundary.sequence = "constant";
    c.momentum_field = VecFieldSpec{"cosine", 1.0};
  } else {  // E6
    c.family = "degenerate_2d";
    c.dim = 2;
    c.lo = {-1.0, -1.0, 0.0};
    c.hi = {1.0, 1.0, 0.0};
    c.res = {128, 128, 1};
    c.h_values = {2, 4, 8, 16, 32};
    c.p = 2.0;
    c.phi_field = FieldSpec{"sin_product", 1.0, 1};
  }
  return c;
}

}  // namespace gammalab
