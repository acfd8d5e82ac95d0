#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "fit.hpp"
#include "functionals.hpp"
#include "interaction.hpp"
#include "kernels.hpp"
#include "positivity.hpp"

namespace adscft::cli {

using json = nlohmann::ordered_json;

// ------------------------------------------------------------------ parsing

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n"), e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string t; is >> t;) out.push_back(t);
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  std::string t = trim(s);
  double v = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || p != t.data() + t.size() || !std::isfinite(v))
    throw ValidationError(what + ": '" + s + "' is not a finite number");
  return v;
}

inline long parse_int(const std::string& s, const std::string& what) {
  std::string t = trim(s);
  long v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || p != t.data() + t.size())
    throw ValidationError(what + ": '" + s + "' is not an integer");
  return v;
}

inline std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& t : split(s, ',')) out.push_back(parse_double(t, what));
  return out;
}

// "c1[,c2]:width:amplitude; ..." ; "0" is the zero function.
inline BoundaryTestFunction parse_function(const std::string& s, int d, const std::string& what) {
  if (trim(s) == "0") return {};
  std::vector<Bump> bumps;
  for (const auto& part : split(s, ';')) {
    auto f = split(part, ':');
    if (f.size() != 3) throw ValidationError(what + ": bump '" + part + "' is not center:width:amplitude");
    Vec c = parse_list(f[0], what);
    if (static_cast<int>(c.size()) != d)
      throw ValidationError(what + ": center '" + f[0] + "' has " + std::to_string(c.size()) + " components, d = " +
                            std::to_string(d));
    bumps.push_back({c, parse_double(f[1], what), parse_double(f[2], what)});
  }
  return BoundaryTestFunction(bumps);
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string format_function(const BoundaryTestFunction& f) {
  if (f.is_zero()) return "0";
  std::string s;
  for (std::size_t i = 0; i < f.bumps.size(); ++i) {
    const auto& b = f.bumps[i];
    if (i) s += "; ";
    for (std::size_t k = 0; k < b.center.size(); ++k) s += (k ? "," : "") + format_double(b.center[k]);
    s += ":" + format_double(b.width) + ":" + format_double(b.amplitude);
  }
  return s;
}

inline json num(double v) { return std::isfinite(v) ? json(v) : json(format_double(v)); }

inline json num_list(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

// --------------------------------------------------------------- RunConfig

// Flat "key = value" file; '#' starts a comment. Every key read by a command
// is recorded with its resolved value; keys no command reads are rejected.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig parse(const std::string& text) {
    RunConfig c;
    std::istringstream is(text);
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
      ++n;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(n) + ": expected key = value");
      std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
      if (k.empty()) throw ValidationError("config line " + std::to_string(n) + ": empty key");
      if (!c.raw_.emplace(k, v).second) throw ValidationError("config: duplicate key '" + k + "'");
    }
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  void set(const std::string& k, const std::string& v) { raw_[k] = v; }
  bool has(const std::string& k) const { return raw_.count(k) > 0; }

  double get(const std::string& k, double def) {
    double v = has(k) ? parse_double(take(k), k) : def;
    resolved_[k] = num(v);
    return v;
  }
  int get_int(const std::string& k, int def) {
    long v = has(k) ? parse_int(take(k), k) : def;
    resolved_[k] = v;
    return static_cast<int>(v);
  }
  std::string get_str(const std::string& k, const std::string& def) {
    std::string v = has(k) ? take(k) : def;
    resolved_[k] = v;
    return v;
  }
  std::vector<double> get_list(const std::string& k, const std::vector<double>& def) {
    auto v = has(k) ? parse_list(take(k), k) : def;
    resolved_[k] = num_list(v);
    return v;
  }
  BoundaryTestFunction get_function(const std::string& k, int d, const BoundaryTestFunction& def) {
    auto v = has(k) ? parse_function(take(k), d, k) : def;
    resolved_[k] = format_function(v);
    return v;
  }
  std::vector<BoundaryTestFunction> get_functions(const std::string& k, int d,
                                                  const std::vector<BoundaryTestFunction>& def) {
    std::vector<BoundaryTestFunction> v;
    if (has(k))
      for (const auto& part : split(take(k), '|')) v.push_back(parse_function(part, d, k));
    else
      v = def;
    json a = json::array();
    for (const auto& f : v) a.push_back(format_function(f));
    resolved_[k] = a;
    return v;
  }

  // Call after all keys are read and before any computation.
  void finish() const {
    for (const auto& [k, v] : raw_)
      if (!used_.count(k)) throw ValidationError("config: unknown key '" + k + "'");
  }

  const json& resolved() const { return resolved_; }

 private:
  std::string take(const std::string& k) {
    used_.insert(k);
    return raw_.at(k);
  }

  std::map<std::string, std::string> raw_;
  std::set<std::string> used_;
  json resolved_ = json::object();
};

// --------------------------------------------------------------- run output

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  template <class... T>
  void add(const T&... cells) {
    rows.push_back({cell(cells)...});
  }

  std::string csv() const {
    auto line = [](const std::vector<std::string>& r) {
      std::string s;
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) s += ",";
        bool quote = r[i].find_first_of(",\"\n") != std::string::npos;
        if (!quote) {
          s += r[i];
          continue;
        }
        s += '"';
        for (char ch : r[i]) s += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        s += '"';
      }
      return s + "\n";
    };
    std::string s = line(header);
    for (const auto& r : rows) s += line(r);
    return s;
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(bool b) { return b ? "true" : "false"; }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(double v) { return format_double(v); }
};

struct RunOutput {
  json result = json::object();
  Table table;
  std::string summary;
};

struct RunContext {
  std::uint64_t seed = 1;
  int threads = 1;
};

// ---------------------------------------------------------- shared readers

inline SpectralParams read_params(RunConfig& c, int d_def, double m2_def) {
  int d = c.get_int("d", d_def);
  double m2 = c.get("m2", m2_def);
  return spectral_params(d, m2);
}

inline LatticeSpec read_lattice(RunConfig& c, const SpectralParams& p, LatticeSpec def) {
  LatticeSpec s = def;
  s.d = p.d;
  s.m2 = p.m2;
  s.z0 = c.get("z0", def.z0);
  s.A = c.get("A", def.A);
  s.l = c.get("l", def.l);
  s.n_z = c.get_int("n_z", def.n_z);
  s.n_x = c.get_int("n_x", def.n_x);
  s.budget = c.get_int("budget", def.budget);
  return s;
}

inline McConfig read_mc(RunConfig& c, const RunContext& ctx, int n_def) {
  McConfig mc;
  mc.n = c.get_int("mc_n", n_def);
  mc.chunk = c.get_int("mc_chunk", 256);
  mc.seed = ctx.seed;
  mc.threads = ctx.threads;
  require(mc.n >= 1000, "mc_n must be at least 1000");
  require(mc.chunk >= 1, "mc_chunk must be positive");
  return mc;
}

// Validates a lattice spec without assembling the operator.
inline void check_lattice(const LatticeSpec& s) {
  require(s.z0 > 0.0 && s.z0 < s.A, "lattice: need 0 < z0 < A");
  require(s.l > 0.0, "lattice: l must be positive");
  require(s.n_z >= 2 && s.n_x >= 2, "lattice: need at least 2 points per axis");
  if (s.sites() > s.budget)
    throw BudgetError("lattice: " + std::to_string(s.sites()) + " sites exceed the budget of " +
                      std::to_string(s.budget));
}

inline BulkPoint parse_point(const std::string& s, int d, const std::string& what) {
  auto f = split(s, ':');
  if (f.size() != 2) throw ValidationError(what + ": point '" + s + "' is not z:x1[,x2]");
  BulkPoint P{parse_double(f[0], what), parse_list(f[1], what)};
  require(P.z > 0.0 && static_cast<int>(P.x.size()) == d, what + ": point '" + s + "' needs z > 0 and d coordinates");
  return P;
}

// ---------------------------------------------------------------- commands

inline RunOutput cmd_params(RunConfig& c, const RunContext&) {
  auto p = read_params(c, 1, 6.25);
  c.finish();
  RunOutput o;
  o.result = {{"d", p.d}, {"m2", p.m2}, {"nu", p.nu}, {"delta_plus", p.delta_plus},
              {"delta_minus", p.delta_minus}, {"gamma_plus", num(p.gamma_plus)},
              {"gamma_minus", num(p.gamma_minus)}, {"c", p.c}, {"mass_condition", p.m2 >= 6.0 * p.d * p.d}};
  o.table.header = {"quantity", "value"};
  for (const auto& [k, v] : o.result.items())
    o.table.add(k, v.is_number() ? format_double(v.get<double>()) : v.dump());
  std::ostringstream s;
  s << "d=" << p.d << " m2=" << p.m2 << " nu=" << p.nu << " Delta+=" << p.delta_plus << " Delta-=" << p.delta_minus;
  o.summary = s.str();
  return o;
}

inline RunOutput cmd_kernel_eval(RunConfig& c, const RunContext&) {
  auto p = read_params(c, 1, 6.25);
  auto b = c.get_str("branch", "plus");
  require(b == "plus" || b == "minus", "branch must be plus or minus");
  Branch br = b == "plus" ? Branch::plus : Branch::minus;
  auto us = c.get_list("u_list", {0.01, 0.1, 0.5, 1.0, 2.0, 5.0});
  auto zs = c.get_list("z_list", {0.1, 0.3, 0.6, 1.0, 2.0});
  double sep = c.get("x_sep", 0.8);
  double zp = c.get("limit_z", 1e-4);
  c.finish();
  for (double u : us) require(u > 0.0, "u_list entries must be positive");
  for (double z : zs) require(z > 0.0, "z_list entries must be positive");
  require(zp > 0.0 && sep > 0.0, "limit_z and x_sep must be positive");
  RunOutput o;
  o.table.header = {"kernel", "argument", "value", "limit_gap"};
  Vec x0(p.d, 0.0), xs(p.d, 0.0);
  xs[0] = sep;
  json G = json::array(), H = json::array();
  for (double u : us) {
    double g = bulk_propagator(u, p, br);
    G.push_back({{"u", u}, {"value", num(g)}});
    o.table.add("G", u, g, "");
  }
  double worst = 0.0;
  for (double z : zs) {
    double h = bulk_to_boundary(z, x0, xs, p);
    double lim = std::pow(zp, -p.delta_plus) * bulk_propagator(BulkPoint{z, x0}, BulkPoint{zp, xs}, p, Branch::plus);
    double gap = std::abs(lim / h - 1.0);
    worst = std::max(worst, gap);
    H.push_back({{"z", z}, {"value", h}, {"limit_gap", gap}});
    o.table.add("H+", z, h, gap);
  }
  double a = boundary_kernel(x0, xs, p, br);
  o.table.add("alpha", sep, a, "");
  o.result = {{"branch", b}, {"G", G}, {"H_plus", H}, {"alpha", {{"x_sep", sep}, {"value", num(a)}}},
              {"max_limit_gap", worst}};
  o.summary = "max |z'^-Delta G+ / H+ - 1| at z'=" + format_double(zp) + ": " + format_double(worst);
  return o;
}

inline RunOutput cmd_splitting_check(RunConfig& c, const RunContext&) {
  auto p = read_params(c, 2, -0.75);
  std::string def = "1:0,0 1:1,0; 0.5:0,0 2:0.3,-0.2; 1:0,0 3:0,0; 0.2:1,1 0.3:-1,0.5";
  if (p.d != 2) def = "1:0 1:1; 0.5:0 2:0.3; 1:0 3:0; 0.2:1 0.3:-1";
  auto spec = c.get_str("pairs", def);
  double tol = c.get("rel_tol", 1e-10);
  int depth = c.get_int("max_depth", 15);
  double thr = c.get("threshold", 1e-4);
  c.finish();
  require(depth >= 0, "max_depth must be non-negative");
  std::vector<std::pair<BulkPoint, BulkPoint>> pairs;
  for (const auto& part : split(spec, ';')) {
    auto pts = split_ws(part);
    if (pts.size() != 2) throw ValidationError("pairs: '" + part + "' is not two points");
    pairs.push_back({parse_point(pts[0], p.d, "pairs"), parse_point(pts[1], p.d, "pairs")});
  }
  auto F = calibrate_forms(p);
  RunOutput o;
  o.table.header = {"pair", "G_minus", "G_plus", "boundary_term", "relative_residual", "error_estimate"};
  json rows = json::array();
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto s = splitting_residual(pairs[i].first, pairs[i].second, F, {tol, static_cast<unsigned>(depth)});
    worst = std::max(worst, std::abs(s.relative));
    rows.push_back({{"G_minus", s.g_minus}, {"G_plus", s.g_plus}, {"boundary_term", s.boundary_term},
                    {"relative_residual", s.relative}, {"error_estimate", s.error_estimate}});
    o.table.add(i, s.g_minus, s.g_plus, s.boundary_term, s.relative, s.error_estimate);
  }
  o.result = {{"pairs", rows}, {"max_relative_residual", worst}, {"pass", worst < thr}};
  o.summary = "max relative splitting residual " + format_double(worst) + (worst < thr ? " (pass)" : " (FAIL)");
  return o;
}

inline RunOutput cmd_corr_check(RunConfig& c, const RunContext&) {
  auto p = read_params(c, 1, 0.0);
  auto f = c.get_function("f", p.d, BoundaryTestFunction({{Vec(p.d, 0.0), 0.5, 1.0}}));
  auto zs = c.get_list("z_list", {1e-1, 1e-2, 1e-3});
  c.finish();
  for (double z : zs) require(z > 0.0, "z_list entries must be positive");
  auto C = corr_coefficients(p);
  RunOutput o;
  json coeffs = json::array();
  if (p.d == 1) {
    auto D = corr_coefficients_direct(p);
    for (std::size_t j = 0; j < C.a.size(); ++j)
      coeffs.push_back({{"j", j}, {"a", C.a[j]}, {"a_direct", D.a[j]}, {"a_error", C.a_error[j]}});
  } else {
    for (std::size_t j = 0; j < C.a.size(); ++j) coeffs.push_back({{"j", j}, {"a", C.a[j]}, {"a_error", C.a_error[j]}});
  }
  auto F = calibrate_forms(p);
  o.table.header = {"z", "log_y", "log_limit", "gap"};
  json ys = json::array();
  for (double z : zs) {
    auto y = free_yz(z, f, F, C);
    ys.push_back({{"z", z}, {"log_y", y.log_y}, {"log_limit", y.log_limit}, {"gap", y.gap}});
    o.table.add(z, y.log_y, y.log_limit, y.gap);
  }
  o.result = {{"coefficients", coeffs}, {"overall_prefactor", C.overall_prefactor}, {"free_limit", ys}};
  o.summary = "a0=" + format_double(C.a[0]) + ", gap at z=" + format_double(zs.back()) + ": " +
              format_double(ys.back()["gap"].get<double>());
  return o;
}

inline RunOutput cmd_scaling_fit(RunConfig& c, const RunContext&) {
  auto p = read_params(c, 1, 6.25);
  double lambda = c.get("lambda", 0.1);
  auto f = c.get_function("f", p.d, BoundaryTestFunction::bump(Vec(p.d, 0.0), 0.5, 3.0));
  auto z0s = c.get_list("z0_list", {0.4, 0.2, 0.1, 0.05, 0.025, 0.0125});
  LatticeSpec def{0.1, 10.0, 2.0, p.d, 32, 32, p.m2, 4096};
  double A = c.get("A", def.A), l = c.get("l", def.l);
  int n_z = c.get_int("n_z", def.n_z), n_x = c.get_int("n_x", def.n_x), budget = c.get_int("budget", def.budget);
  double tol = c.get("rel_tol", 1e-8);
  c.finish();
  require(lambda > 0.0, "lambda must be positive");
  for (double z0 : z0s) check_lattice({z0, A, l, p.d, n_z, n_x, p.m2, budget});
  std::vector<std::pair<double, double>> Es, Ss, Gs;
  RunOutput o;
  o.table.header = {"z0", "E", "E_error", "sigma", "gamma", "c_kappa"};
  json rows = json::array();
  for (double z0 : z0s) {
    auto M = build_model({z0, A, l, p.d, n_z, n_x, p.m2, budget});
    auto h = smeared_at_sites(M, f, p);
    auto E = expected_energy(z0, f, p, lambda, A, l, tol);
    double sg = sigma(M, h, lambda);
    auto te = tail_and_envelope(E.value, sg, lambda, M.c_kappa, z0, A, l, p);
    Es.push_back({z0, E.value});
    Ss.push_back({z0, sg});
    Gs.push_back({z0, te.gamma});
    rows.push_back({{"z0", z0}, {"E", E.value}, {"E_error", E.error}, {"sigma", sg}, {"gamma", te.gamma},
                    {"c_kappa", M.c_kappa}});
    o.table.add(z0, E.value, E.error, sg, te.gamma, M.c_kappa);
  }
  auto fe = fit_exponent(Es), fs = fit_exponent(Ss), fg = fit_exponent(Gs);
  const double k = p.delta_plus - p.d;
  auto fit = [](const PowerFit& x, double target) {
    return json{{"slope", x.slope}, {"stderr", x.stderr_}, {"target", target}};
  };
  o.result = {{"series", rows},
              {"E_fit", fit(fe, -p.d - 4.0 * k)},
              {"sigma_fit", fit(fs, -p.d - 3.0 * k)},
              {"gamma_fit", fit(fg, k)}};
  o.summary = "slopes: E " + format_double(fe.slope) + " (target " + format_double(-p.d - 4.0 * k) + "), sigma " +
              format_double(fs.slope) + " (bound " + format_double(-p.d - 3.0 * k) + "), gamma " +
              format_double(fg.slope) + " (target " + format_double(k) + ")";
  return o;
}

inline TrivialityConfig read_triviality(RunConfig& c, const RunContext& ctx) {
  TrivialityConfig t;
  t.d = c.get_int("d", t.d);
  t.m2 = c.get("m2", t.m2);
  t.lambda = c.get("lambda", t.lambda);
  t.f = c.get_function("f", t.d, t.d == 1 ? t.f : BoundaryTestFunction::bump(Vec(t.d, 0.0), 0.5, 3.0));
  t.z0_list = c.get_list("z0_list", t.z0_list);
  t.A = c.get("A", t.A);
  t.l = c.get("l", t.l);
  t.n_z = c.get_int("n_z", t.n_z);
  t.n_x = c.get_int("n_x", t.n_x);
  t.budget = c.get_int("budget", t.budget);
  t.mc = read_mc(c, ctx, t.mc.n);
  return t;
}

inline RunOutput cmd_triviality_run(RunConfig& c, const RunContext& ctx) {
  auto t = read_triviality(c, ctx);
  c.finish();
  spectral_params(t.d, t.m2);
  require(t.lambda > 0.0, "lambda must be positive");
  for (double z0 : t.z0_list) check_lattice({z0, t.A, t.l, t.d, t.n_z, t.n_x, t.m2, t.budget});
  auto R = triviality_run(t);
  RunOutput o;
  o.table.header = {"z0", "E", "sigma", "gamma", "p_opt", "chebyshev", "tail_bound", "lower_bound", "envelope",
                    "c_kappa", "log_ratio", "log_ratio_lo", "log_ratio_hi", "denominator", "denominator_stderr"};
  json rows = json::array();
  for (std::size_t k = 0; k < R.z0_list.size(); ++k) {
    const auto& m = R.mc_ratio_list[k];
    rows.push_back({{"z0", R.z0_list[k]}, {"E", R.E_list[k]}, {"sigma", R.sigma_list[k]},
                    {"gamma", R.gamma_list[k]}, {"p_opt", num(R.p_opt_list[k])},
                    {"chebyshev", static_cast<bool>(R.chebyshev_list[k])}, {"tail_bound", num(R.tail_bound_list[k])},
                    {"lower_bound", num(R.lower_bound_list[k])}, {"envelope", num(R.envelope_list[k])},
                    {"c_kappa", R.c_kappa_list[k]}, {"log_ratio", m.log_ratio}, {"log_ratio_lo", m.log_lo},
                    {"log_ratio_hi", m.log_hi},
                    {"denominator", m.denominator}, {"denominator_stderr", m.denominator_stderr}});
    o.table.add(R.z0_list[k], R.E_list[k], R.sigma_list[k], R.gamma_list[k], R.p_opt_list[k],
                static_cast<bool>(R.chebyshev_list[k]), R.tail_bound_list[k], R.lower_bound_list[k],
                R.envelope_list[k], R.c_kappa_list[k], m.log_ratio, m.log_lo, m.log_hi, m.denominator,
                m.denominator_stderr);
  }
  o.result = {{"series", rows},
              {"mass_condition_met", R.mass_condition_met},
              {"ratio_decreasing", R.ratio_decreasing},
              {"first_last_separated", R.first_last_separated},
              {"final_below_tenth", R.final_below_tenth},
              {"envelope_decreasing", R.envelope_decreasing},
              {"jensen_ok", R.jensen_ok}};
  o.summary = "log ratio " + format_double(rows.front()["log_ratio"].get<double>()) + " -> " +
              format_double(rows.back()["log_ratio"].get<double>()) + "; decreasing " +
              (R.ratio_decreasing ? "yes" : "no") + ", separated " + (R.first_last_separated ? "yes" : "no") +
              ", envelope decreasing " + (R.envelope_decreasing ? "yes" : "no");
  return o;
}

inline RunOutput cmd_functional(RunConfig& c, const RunContext& ctx) {
  auto p = read_params(c, 1, 2.0);
  auto spec = read_lattice(c, p, {0.1, 10.0, 2.0, p.d, 16, 16, p.m2, 4096});
  double lambda = c.get("lambda", 0.1);
  auto fs = c.get_functions("functions", p.d,
                            {BoundaryTestFunction::bump(Vec(p.d, 0.0), 0.5, 0.3),
                             BoundaryTestFunction::bump(Vec(p.d, 0.5), 0.3, -0.4),
                             BoundaryTestFunction({{Vec(p.d, -0.6), 0.3, 0.2}, {Vec(p.d, 0.7), 0.4, 0.25}})});
  auto mc = read_mc(c, ctx, 10000);
  c.finish();
  require(lambda >= 0.0, "lambda must be non-negative");
  check_lattice(spec);
  auto M = build_model(spec);
  auto F = calibrate_forms(p);
  RunOutput o;
  o.table.header = {"function", "C", "C_lo", "C_hi", "tildeC_cf", "tildeC_lo", "tildeC_hi", "duality_gap",
                    "ci_half_width", "prefactor_gap"};
  json rows = json::array();
  bool ok = true;
  for (const auto& f : fs) {
    auto a = generating_C(f, M, F, lambda, mc);
    auto b = generating_tildeC(p.c * f, M, F, lambda, mc);
    double gap = std::abs(a.value - b.value);
    double ci = 0.5 * (a.hi - a.lo) + 0.5 * (b.hi - b.lo);
    ok = ok && gap <= ci;
    rows.push_back({{"f", format_function(f)}, {"C", a.value}, {"C_lo", a.lo}, {"C_hi", a.hi},
                    {"tildeC_cf", b.value}, {"tildeC_lo", b.lo}, {"tildeC_hi", b.hi}, {"duality_gap", gap},
                    {"ci_half_width", ci}, {"prefactor_gap", num(a.prefactor_gap)}});
    o.table.add(format_function(f), a.value, a.lo, a.hi, b.value, b.lo, b.hi, gap, ci, a.prefactor_gap);
  }
  o.result = {{"functions", rows}, {"duality_within_ci", ok}};
  o.summary = std::string("duality C(f) = tildeC(cf) within combined CI: ") + (ok ? "yes" : "no");
  return o;
}

inline RunOutput cmd_conditioning_check(RunConfig& c, const RunContext& ctx) {
  int nb = c.get_int("n_bulk", 2), na = c.get_int("n_bdry", 1);
  double lambda = c.get("lambda", 1.0);
  int panels = c.get_int("gl_panels", 12), nodes = c.get_int("gh_nodes", 120);
  double thr = c.get("threshold", 1e-6);
  c.finish();
  require(panels >= 1 && nodes >= 2, "gl_panels and gh_nodes must be positive");
  require(nb >= 1 && nb <= 3 && na >= 1 && na <= 2, "need 1 <= n_bulk <= 3 and 1 <= n_bdry <= 2");
  auto P = random_conditioning_problem(nb, na, lambda, ctx.seed);
  auto r = finite_dim_conditioning_check(P, panels, nodes);
  RunOutput o;
  o.result = {{"lhs", r.lhs}, {"rhs", r.rhs}, {"residual", r.residual}, {"pass", r.residual < thr}};
  o.table.header = {"lhs", "rhs", "residual"};
  o.table.add(r.lhs, r.rhs, r.residual);
  o.summary = "conditioning residual " + format_double(r.residual) + (r.residual < thr ? " (pass)" : " (FAIL)");
  return o;
}

inline RunOutput cmd_renorm_demo(RunConfig& c, const RunContext&) {
  auto p = read_params(c, 1, 6.25);
  auto f = c.get_function("f", p.d, BoundaryTestFunction::bump(Vec(p.d, 0.0), 0.5));
  double lambda = c.get("lambda", 0.1), A = c.get("A", 10.0), l = c.get("l", 2.0);
  auto z0s = c.get_list("z0_list", {1e-1, 1e-2, 1e-3});
  c.finish();
  require(lambda > 0.0 && !f.is_zero(), "renorm-demo needs lambda > 0 and nonzero f");
  for (double z0 : z0s) require(z0 > 0.0 && z0 < A, "z0_list entries must lie in (0, A)");
  RunOutput o;
  o.table.header = {"z0", "scaled_energy", "energy_error", "ratio_stated", "ratio_energy_limit"};
  json rows = json::array();
  RenormalizationCheck last;
  for (double z0 : z0s) {
    last = renormalization_check(z0, f, p, lambda, A, l);
    rows.push_back({{"z0", z0}, {"scaled_energy", last.scaled_energy}, {"energy_error", last.energy_error},
                    {"ratio_stated", last.ratio_stated}, {"ratio_energy_limit", last.ratio_energy_limit}});
    o.table.add(z0, last.scaled_energy, last.energy_error, last.ratio_stated, last.ratio_energy_limit);
  }
  o.result = {{"series", rows},
              {"target_stated", last.target_stated},
              {"target_energy_limit", last.target_energy_limit},
              {"constant_stated", quartic_constant(p)},
              {"constant_energy_limit", energy_limit_constant(p)}};
  o.summary = "at z0=" + format_double(last.z0) + ": ratio to stated constant " + format_double(last.ratio_stated) +
              ", to energy-limit constant " + format_double(last.ratio_energy_limit);
  return o;
}

inline RunOutput cmd_witten4(RunConfig& c, const RunContext&) {
  auto p = read_params(c, 2, 0.0);
  std::array<BoundaryTestFunction, 4> fs;
  const double side = 4.0;
  for (int i = 0; i < 4; ++i) {
    Vec ctr(p.d, 0.0);
    if (p.d == 1) {
      ctr[0] = side * i;
    } else {
      ctr[0] = (i == 1 || i == 2) ? side : 0.0;
      ctr[1] = i >= 2 ? side : 0.0;
    }
    fs[i] = c.get_function("f" + std::to_string(i + 1), p.d, BoundaryTestFunction::bump(ctr, 0.3));
  }
  WittenQuad q;
  q.z_min_rel = c.get("z_min_rel", q.z_min_rel);
  q.z_max_rel = c.get("z_max_rel", q.z_max_rel);
  q.s_panel = c.get("s_panel", q.s_panel);
  q.x_panel_rel = c.get("x_panel_rel", q.x_panel_rel);
  q.table_points = c.get_int("table_points", q.table_points);
  c.finish();
  auto r = witten_4pt(fs, p, q);
  RunOutput o;
  o.result = {{"value", r.value},   {"coarse", r.coarse},
              {"error", r.error},   {"tail", r.tail},
              {"small_z_exponent", r.small_z_exponent}, {"overlap_exponent", r.overlap_exponent},
              {"layers", r.layers}};
  o.table.header = {"value", "coarse", "error", "tail", "small_z_exponent", "layers"};
  o.table.add(r.value, r.coarse, r.error, r.tail, r.small_z_exponent, r.layers);
  o.summary = "Witten 4-point " + format_double(r.value) + " (refinement gap " + format_double(r.error) + ")";
  return o;
}

// "iz,ix:coef iz,ix:coef; ..." over lattice indices.
inline std::vector<SiteFunction> parse_sites(const std::string& s, const LatticeModel& M) {
  std::vector<SiteFunction> fam;
  for (const auto& part : split(s, ';')) {
    SiteFunction f;
    for (const auto& tok : split_ws(part)) {
      auto kv = split(tok, ':');
      if (kv.size() != 2) throw ValidationError("rp_sites: '" + tok + "' is not iz,ix:coef");
      auto ij = split(kv[0], ',');
      if (ij.size() != 2) throw ValidationError("rp_sites: '" + kv[0] + "' is not iz,ix");
      long iz = parse_int(ij[0], "rp_sites"), ix = parse_int(ij[1], "rp_sites");
      require(iz >= 0 && iz < M.spec.n_z && ix >= 0 && ix < M.spec.n_x, "rp_sites: index out of range");
      f.sites.push_back(M.index(static_cast<int>(iz), static_cast<int>(ix)));
      f.coef.push_back(parse_double(kv[1], "rp_sites"));
    }
    fam.push_back(f);
  }
  return fam;
}

inline json gram_json(const GramReport& r) {
  json g = json::array();
  for (int i = 0; i < r.gram.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < r.gram.cols(); ++j) row.push_back(r.gram(i, j));
    g.push_back(row);
  }
  return {{"family", r.family},       {"gram", g},
          {"min_eigenvalue", r.min_eigenvalue}, {"max_eigenvalue", r.max_eigenvalue},
          {"asymmetry", r.asymmetry}, {"threshold", r.threshold},
          {"stderr_min", r.stderr_min}, {"statistical", r.statistical},
          {"psd", r.psd}};
}

inline RunOutput cmd_positivity(RunConfig& c, const RunContext& ctx) {
  using BTF = BoundaryTestFunction;
  // free stochastic Gram
  double free_nu = c.get("free_nu", 1.5);
  auto free_fam = c.get_functions("free_family", 1,
                                  {BTF::bump({0.0}, 0.4, 1.0), BTF::bump({1.0}, 0.3, -0.5), BTF::bump({2.0}, 0.5, 0.8),
                                   BTF::bump({0.3}, 0.2, 2.0)});
  // free reflection Gram
  double rp_nu = c.get("rp_nu", 0.7);
  auto rp_fam = c.get_functions("rp_family", 1, {BTF::bump({1.0}, 0.1), BTF::bump({2.0}, 0.1)});
  // unitarity scan (d = 2)
  auto nus = c.get_list("scan_nu_list", {0.5, 0.8, 0.9, 0.95, 0.99, 1.01, 1.05, 1.1, 1.3, 1.5});
  auto scan_fam = c.get_functions("scan_family", 2, {BTF::bump({1.0, 0.0}, 0.15, 10.0), BTF::bump({1.0, 1.0}, 0.15, 10.0)});
  double wit_nu = c.get("witness_nu", 1.5);
  // renormalized functional witness
  double ren_m2 = c.get("renorm_m2", 2.0);
  auto ren_lams = c.get_list("renorm_lambda_list", {0.0, 1.0, 10.0});
  auto ren_amps = c.get_list("renorm_amplitudes", {0.0, 0.5, 1.0, 1.5, 2.0, 3.0});
  // lattice RP under the interaction
  SpectralParams lp = spectral_params(1, c.get("lattice_m2", 1.0));
  auto spec = read_lattice(c, lp, {0.1, 10.0, 2.0, 1, 16, 16, lp.m2, 4096});
  auto lat_lams = c.get_list("lattice_lambda_list", {0.0, 0.1});
  auto sites = c.get_str("rp_sites", "8,8:0.5; 8,9:0.5; 6,8:0.4 10,10:-0.4");
  auto mc = read_mc(c, ctx, 10000);
  c.finish();
  check_lattice(spec);
  for (double l : ren_lams) require(l >= 0.0, "renorm_lambda_list entries must be non-negative");
  for (double l : lat_lams) require(l >= 0.0, "lattice_lambda_list entries must be non-negative");

  RunOutput o;
  o.table.header = {"suite", "label", "min_eigenvalue", "max_eigenvalue", "threshold", "psd"};
  auto F1 = calibrate_forms(spectral_params(1, mass_for_nu(1, free_nu)));
  auto g_free = gram_stochastic(free_functional(F1), free_fam);
  o.table.add("free_stochastic", "nu=" + format_double(free_nu), g_free.min_eigenvalue, g_free.max_eigenvalue,
              g_free.threshold, g_free.psd);
  auto F2 = calibrate_forms(spectral_params(1, mass_for_nu(1, rp_nu)));
  auto g_rp = gram_reflection(free_functional(F2), rp_fam);
  o.table.add("free_reflection", "nu=" + format_double(rp_nu), g_rp.min_eigenvalue, g_rp.max_eigenvalue,
              g_rp.threshold, g_rp.psd);

  auto scan = unitarity_scan(2, nus, scan_fam);
  json pts = json::array();
  for (const auto& q : scan.points) {
    pts.push_back({{"nu", q.nu}, {"min_eigenvalue", q.min_eigenvalue}, {"max_eigenvalue", q.max_eigenvalue},
                   {"psd", q.psd}});
    o.table.add("unitarity_scan", "nu=" + format_double(q.nu), q.min_eigenvalue, q.max_eigenvalue, "", q.psd);
  }
  auto pw = spectral_params(2, mass_for_nu(2, wit_nu));
  std::vector<BTF> cand;
  for (double x1 : {1.0, 1.5, 2.5})
    for (double x2 : {0.0, 0.5, 1.5}) cand.push_back(BTF::bump({x1, x2}, 0.1, 3.0));
  auto wit = search_witness([&](const auto& fam) { return gram_reflection(alpha_minus_functional(pw), fam); }, cand, 2);
  o.table.add("alpha_minus_witness", "nu=" + format_double(wit_nu), wit.best.min_eigenvalue, wit.best.max_eigenvalue,
              wit.best.threshold, wit.best.psd);

  auto Fr = calibrate_forms(spectral_params(1, ren_m2));
  std::vector<BTF> rc;
  for (double a : ren_amps) rc.push_back(BTF::bump({0.0}, 0.5, a));
  json ren = json::array();
  for (double lam : ren_lams) {
    auto ws = search_witness([&](const auto& fam) { return gram_stochastic(renormalized(Fr, lam), fam); }, rc,
                             std::min<int>(3, static_cast<int>(rc.size())));
    ren.push_back({{"lambda", lam}, {"found", ws.found}, {"best_ratio", ws.best_ratio},
                   {"families_tried", ws.families_tried}, {"best", gram_json(ws.best)}});
    o.table.add("renormalized_witness", "lambda=" + format_double(lam), ws.best.min_eigenvalue,
                ws.best.max_eigenvalue, ws.best.threshold, ws.best.psd);
  }

  auto M = build_model(spec);
  auto fam = parse_sites(sites, M);
  json lat = json::array();
  for (double lam : lat_lams) {
    auto r = perturbed_rp_gram(M, lam, fam, mc);
    lat.push_back({{"lambda", lam}, {"report", gram_json(r)}});
    o.table.add("lattice_rp", "lambda=" + format_double(lam), r.min_eigenvalue, r.max_eigenvalue, r.threshold, r.psd);
  }

  o.result = {{"free_stochastic", gram_json(g_free)},
              {"free_reflection", gram_json(g_rp)},
              {"unitarity_scan",
               {{"points", pts},
                {"sign_change", scan.sign_change},
                {"bracket_lo", num(scan.bracket_lo)},
                {"bracket_hi", num(scan.bracket_hi)}}},
              {"alpha_minus_witness",
               {{"nu", wit_nu}, {"found", wit.found}, {"best_ratio", wit.best_ratio}, {"best", gram_json(wit.best)}}},
              {"renormalized_witness", ren},
              {"lattice_rp", lat}};
  o.summary = std::string("free Grams PSD: ") + (g_free.psd && g_rp.psd ? "yes" : "no") + "; unitarity flip in [" +
              format_double(scan.bracket_lo) + ", " + format_double(scan.bracket_hi) + "]; alpha- witness at nu=" +
              format_double(wit_nu) + ": " + (wit.found ? "found" : "none");
  return o;
}

// ---------------------------------------------------------------- dispatch

using Command = std::function<RunOutput(RunConfig&, const RunContext&)>;

inline const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> m{
      {"params", cmd_params},
      {"kernel-eval", cmd_kernel_eval},
      {"splitting-check", cmd_splitting_check},
      {"corr-check", cmd_corr_check},
      {"scaling-fit", cmd_scaling_fit},
      {"triviality-run", cmd_triviality_run},
      {"functional", cmd_functional},
      {"conditioning-check", cmd_conditioning_check},
      {"renorm-demo", cmd_renorm_demo},
      {"witten4", cmd_witten4},
      {"positivity", cmd_positivity},
  };
  return m;
}

struct UnknownCommand : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runs a command and wraps the result with the resolved config. The
// timestamp is added by the caller and is the only non-deterministic field.
inline json run(const std::string& name, RunConfig& cfg, const RunContext& ctx, RunOutput* out = nullptr) {
  auto it = commands().find(name);
  if (it == commands().end()) throw UnknownCommand("unknown command '" + name + "'");
  require(ctx.threads >= 1, "threads must be positive");
  RunOutput o = it->second(cfg, ctx);
  json j = {{"command", name},
            {"seed", ctx.seed},
            {"threads", ctx.threads},
            {"config", cfg.resolved()},
            {"result", o.result}};
  if (out) *out = std::move(o);
  return j;
}

inline json strip_timestamp(json j) {
  j.erase("timestamp");
  return j;
}

}  // namespace adscft::cli
