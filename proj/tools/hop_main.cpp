// hop: command-line front end for the high-order portfolio toolkit.
//
// Subcommands:
//   gen-data   write a synthetic returns CSV
//   moments    estimate the four sample moments of a CSV, save them binary
//   solve      run one solver, emit a report JSON and a trace CSV
//   bench      compare methods across sizes, emit a timing/quality CSV
//
// Exit codes: 0 success/converged, 1 usage error, 2 data error,
// 3 resource guard, 4 solver stopped at the iteration cap.
//
// solve and bench accept --config FILE (flat key=value lines, see
// hop/config.hpp); keys are the long flag names and explicit command-line
// flags override file values.  Unknown keys are rejected.

#include <CLI11.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hop/config.hpp"
#include "hop/csv.hpp"
#include "hop/moments.hpp"
#include "hop/report.hpp"
#include "hop/sca.hpp"
#include "hop/serialize.hpp"
#include "hop/synthetic.hpp"
#include "hop/tilting.hpp"
#include "hop/types.hpp"

namespace {

/// Bad flag combinations or config contents found after parsing; exit 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool is_mvsk_method(const std::string& m) { return m == "dc" || m == "mm" || m == "qmvsk"; }
bool is_tilt_method(const std::string& m) { return m == "lmvskt" || m == "qmvskt"; }

/// Canonical ordering for benchmark rows.
int method_rank(const std::string& m) {
  const char* order[] = {"dc", "mm", "qmvsk", "lmvskt", "qmvskt"};
  for (int i = 0; i < 5; ++i)
    if (m == order[i]) return i;
  return 5;
}

/// Refuses asset counts whose fourth-moment tensor would not fit in memory.
void require_under_cap(int n, int cap) {
  if (n <= cap) return;
  const double entries = std::pow(static_cast<double>(n), 4);
  char msg[256];
  std::snprintf(msg, sizeof msg,
                "N=%d assets would need N^4 = %.0f cokurtosis entries, about %.1f GB; "
                "the guard is %d assets (raise it with --max-assets)",
                n, entries, entries * 8.0 / 1e9, cap);
  throw hop::ResourceError(msg);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t pos = s.find(',', start);
    if (pos == std::string::npos) pos = s.size();
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  for (const std::string& f : split_list(s)) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || ptr != f.data() + f.size())
      throw UsageError(std::string(what) + ": '" + f + "' is not an integer");
    out.push_back(v);
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const std::string& f : split_list(s)) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || ptr != f.data() + f.size())
      throw UsageError(std::string(what) + ": '" + f + "' is not a number");
    out.push_back(v);
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

// ---------------------------------------------------------------------------
// Option bundles, one per subcommand

struct GenOptions {
  int assets = 0;
  int periods = 0;  // 0: default 5N
  std::uint64_t seed = 1;
  double skew = 1.0;
  double cond = 10.0;
  std::string out;
};

struct MomentsOptions {
  std::string in;
  std::string out;
  int max_assets = 150;
};

struct SolveOptions {
  std::string config;
  std::string in_csv;
  std::string in_moments;
  int gen_assets = 0;
  int gen_periods = 0;
  double skew = 1.0;
  double cond = 10.0;
  std::uint64_t seed = 1;
  std::string kind;
  std::string method;
  double xi = 10.0;
  std::string lambdas;  // "l1,l2,l3,l4"
  double leverage = 1.0;
  double c = 0.5;
  double theta = 0.5;
  double tau_w = 1e-5;
  double tau_delta = 1e-5;
  double rel_tol = 1e-6;
  double stat_tol = 1e-5;
  double kkt_tol = 1e-4;
  double feas_tol = 1e-6;
  int max_iter = 0;  // 0: per-algorithm default
  int max_assets = 150;
  std::string report;
  std::string trace;
};

struct BenchOptions {
  std::string config;
  std::string sizes;    // "10,20"
  std::string methods;  // "dc,mm,qmvsk"
  int reps = 3;
  std::uint64_t seed = 1;
  int periods_mult = 5;
  double xi = 10.0;
  double c = 0.5;
  double leverage = 1.0;
  double skew = 1.0;
  double cond = 10.0;
  int max_iter = 0;
  int max_assets = 150;
  std::string out;
};

// ---------------------------------------------------------------------------
// Subcommand bodies

int cmd_gen_data(const GenOptions& o) {
  hop::SyntheticSpec spec{o.assets, o.periods, o.seed, o.skew, o.cond};
  const hop::ReturnsMatrix r = hop::generate_returns(spec);
  hop::write_returns_csv(r, o.out);
  std::cout << "wrote " << r.periods() << " x " << r.assets() << " returns to " << o.out << "\n";
  return 0;
}

int cmd_moments(const MomentsOptions& o) {
  const hop::ReturnsMatrix r = hop::read_returns_csv(o.in);
  require_under_cap(r.assets(), o.max_assets);
  const hop::MomentSet m = hop::MomentSet::estimate(r);
  hop::save_moments(m, o.out);
  const std::uint64_t bytes = hop::moments_file_bytes(r.assets());
  char mb[32];
  std::snprintf(mb, sizeof mb, "%.2f", static_cast<double>(bytes) / 1e6);
  std::cout << "assets=" << r.assets() << " periods=" << r.periods() << " bytes=" << bytes
            << " (" << mb << " MB) -> " << o.out << "\n";
  return 0;
}

hop::TiltingSpec make_tilting_spec(const hop::MomentSet& m, const SolveOptions& o) {
  hop::TiltingSpec tilt;
  const int n = m.size();
  tilt.w0 = Eigen::VectorXd::Constant(n, 1.0 / n);
  tilt.d = hop::tilt_directions(tilt.w0, m);
  tilt.kappa = o.c * std::sqrt(tilt.w0.dot(m.covariance() * tilt.w0));
  tilt.theta = o.theta;
  tilt.tau_w = o.tau_w;
  tilt.tau_delta = o.tau_delta;
  return tilt;
}

int cmd_solve(const CLI::App* sub, const SolveOptions& o) {
  const bool mvsk = o.kind == "mvsk";
  const bool tilting = o.kind == "tilting";
  if (!mvsk && !tilting)
    throw UsageError("unknown kind '" + o.kind + "' (expected mvsk or tilting)");
  if (mvsk && !is_mvsk_method(o.method)) {
    if (is_tilt_method(o.method))
      throw UsageError("method '" + o.method +
                       "' solves the tilting problem; kind mvsk expects dc, mm or qmvsk");
    throw UsageError("unknown method '" + o.method + "'");
  }
  if (tilting && !is_tilt_method(o.method)) {
    if (is_mvsk_method(o.method))
      throw UsageError("method '" + o.method +
                       "' solves the four-moment problem; kind tilting expects lmvskt or qmvskt");
    throw UsageError("unknown method '" + o.method + "'");
  }
  if (mvsk)
    for (const char* name : {"--c", "--theta", "--tau-w", "--tau-delta"})
      if (sub->count(name) > 0)
        throw UsageError(std::string(name) + " applies to tilting runs only");
  if (tilting)
    for (const char* name : {"--xi", "--lambdas"})
      if (sub->count(name) > 0)
        throw UsageError(std::string(name) + " applies to mvsk runs only");
  if (sub->count("--xi") > 0 && sub->count("--lambdas") > 0)
    throw UsageError("give either --xi or --lambdas, not both");
  if (o.c < 0.0) throw UsageError("--c must be nonnegative");

  const int sources =
      (o.in_csv.empty() ? 0 : 1) + (o.in_moments.empty() ? 0 : 1) + (o.gen_assets > 0 ? 1 : 0);
  if (sources != 1)
    throw UsageError("give exactly one input: --in CSV, --moments binary, or --gen-assets N");

  std::map<std::string, std::string> echo;
  hop::MomentSet m = [&] {
    if (!o.in_moments.empty()) {
      echo["input"] = "moments:" + o.in_moments;
      return hop::load_moments(o.in_moments, o.max_assets);
    }
    if (!o.in_csv.empty()) {
      const hop::ReturnsMatrix r = hop::read_returns_csv(o.in_csv);
      require_under_cap(r.assets(), o.max_assets);
      echo["input"] = "csv:" + o.in_csv;
      return hop::MomentSet::estimate(r);
    }
    require_under_cap(o.gen_assets, o.max_assets);
    hop::SyntheticSpec spec{o.gen_assets, o.gen_periods, o.seed, o.skew, o.cond};
    echo["input"] = "synthetic";
    echo["gen-assets"] = std::to_string(spec.assets);
    echo["gen-periods"] = std::to_string(hop::synthetic_periods(spec));
    echo["seed"] = std::to_string(spec.seed);
    echo["skew"] = hop::format_double(spec.skew);
    echo["cond"] = hop::format_double(spec.cond);
    return hop::MomentSet::estimate(hop::generate_returns(spec));
  }();

  const hop::FeasibleSet fs{m.size(), o.leverage};
  hop::ScaOptions opts;
  opts.max_iter = o.max_iter;
  opts.rel_tol = o.rel_tol;
  opts.stat_tol = o.stat_tol;
  opts.kkt_tol = o.kkt_tol;
  opts.feas_tol = o.feas_tol;

  echo["kind"] = o.kind;
  echo["method"] = o.method;
  echo["leverage"] = hop::format_double(o.leverage);
  echo["max-iter"] = std::to_string(o.max_iter);
  echo["rel-tol"] = hop::format_double(o.rel_tol);
  echo["stat-tol"] = hop::format_double(o.stat_tol);
  echo["kkt-tol"] = hop::format_double(o.kkt_tol);
  echo["feas-tol"] = hop::format_double(o.feas_tol);

  hop::SolveReport rep;
  if (mvsk) {
    hop::MvskSpec spec;
    if (sub->count("--lambdas") > 0) {
      const std::vector<double> l = parse_double_list(o.lambdas, "--lambdas");
      if (l.size() != 4) throw UsageError("--lambdas needs four comma-separated weights");
      spec = {l[0], l[1], l[2], l[3]};
    } else {
      spec = hop::crra_lambdas(o.xi);
      echo["xi"] = hop::format_double(o.xi);
    }
    echo["lambda1"] = hop::format_double(spec.lambda1);
    echo["lambda2"] = hop::format_double(spec.lambda2);
    echo["lambda3"] = hop::format_double(spec.lambda3);
    echo["lambda4"] = hop::format_double(spec.lambda4);
    rep = o.method == "dc"   ? hop::solve_mvsk_dc(m, spec, fs, opts)
          : o.method == "mm" ? hop::solve_mvsk_mm(m, spec, fs, opts)
                             : hop::solve_mvsk_q(m, spec, fs, opts);
  } else {
    const hop::TiltingSpec tilt = make_tilting_spec(m, o);
    echo["c"] = hop::format_double(o.c);
    echo["theta"] = hop::format_double(o.theta);
    echo["tau-w"] = hop::format_double(o.tau_w);
    echo["tau-delta"] = hop::format_double(o.tau_delta);
    rep = o.method == "lmvskt" ? hop::solve_tilting_l(m, tilt, fs, opts)
                               : hop::solve_tilting_q(m, tilt, fs, opts);
  }

  if (!o.report.empty())
    hop::write_report_json(hop::report_json(rep, m, o.kind, o.method, echo), o.report);
  if (!o.trace.empty()) hop::write_trace_csv(rep.trace, o.trace);

  std::cout << "kind=" << o.kind << " method=" << o.method
            << " termination=" << hop::to_string(rep.termination)
            << " iterations=" << rep.iterations
            << " objective=" << hop::format_double(rep.objective);
  if (tilting) std::cout << " delta=" << hop::format_double(rep.delta);
  std::cout << " feasibility=" << hop::format_double(rep.feasibility)
            << " stationarity=" << hop::format_double(rep.stationarity) << "\n";
  return rep.termination == hop::Termination::converged ? 0 : 4;
}

const char* classify_failure(const std::exception& e) {
  if (dynamic_cast<const hop::ResourceError*>(&e)) return "resource";
  if (dynamic_cast<const hop::DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const hop::DataError*>(&e)) return "data";
  return "error";
}

int cmd_bench(const BenchOptions& o) {
  std::vector<int> sizes = parse_int_list(o.sizes, "--sizes");
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  if (sizes.empty()) throw UsageError("--sizes needs at least one entry");
  for (int n : sizes)
    if (n < 2) throw UsageError("--sizes entries must be at least 2");

  std::vector<std::string> methods = split_list(o.methods);
  for (const std::string& m : methods)
    if (!is_mvsk_method(m) && !is_tilt_method(m))
      throw UsageError("--methods: unknown method '" + m + "'");
  std::sort(methods.begin(), methods.end(),
            [](const std::string& a, const std::string& b) {
              return method_rank(a) < method_rank(b);
            });
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());
  if (o.reps < 1) throw UsageError("--reps must be at least 1");

  hop::ScaOptions opts;
  opts.max_iter = o.max_iter;

  struct Cell {
    std::vector<double> wall, iters, objs;
    std::string status = "ok";
  };

  std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
  if (!out) throw hop::DataError("cannot open '" + o.out + "' for writing");
  out << "n,method,status,reps,moments_ms,solve_ms,iterations,objective\n";

  int rows = 0;
  for (int n : sizes) {
    std::vector<double> moments_ms;
    std::map<std::string, Cell> cells;
    for (const std::string& mth : methods) cells[mth];

    std::string prep_failure;
    for (int rep = 0; rep < o.reps && prep_failure.empty(); ++rep) {
      // One panel per (size, repetition), shared by every method: the
      // comparison is paired on identical data and moments.
      const std::uint64_t seed =
          o.seed + 1000ull * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(rep);
      hop::MomentSet m;
      try {
        require_under_cap(n, o.max_assets);
        const hop::SyntheticSpec spec{n, n * o.periods_mult, seed, o.skew, o.cond};
        const hop::ReturnsMatrix r = hop::generate_returns(spec);
        const auto t0 = std::chrono::steady_clock::now();
        m = hop::MomentSet::estimate(r);
        moments_ms.push_back(elapsed_ms(t0));
      } catch (const std::exception& e) {
        prep_failure = classify_failure(e);
        std::cerr << "bench: n=" << n << " rep=" << rep << ": " << e.what() << "\n";
        break;
      }

      const hop::FeasibleSet fs{n, o.leverage};
      for (const std::string& mth : methods) {
        Cell& cell = cells[mth];
        try {
          const auto t0 = std::chrono::steady_clock::now();
          hop::SolveReport r;
          if (is_mvsk_method(mth)) {
            const hop::MvskSpec spec = hop::crra_lambdas(o.xi);
            r = mth == "dc"   ? hop::solve_mvsk_dc(m, spec, fs, opts)
                : mth == "mm" ? hop::solve_mvsk_mm(m, spec, fs, opts)
                              : hop::solve_mvsk_q(m, spec, fs, opts);
          } else {
            hop::TiltingSpec tilt;
            tilt.w0 = Eigen::VectorXd::Constant(n, 1.0 / n);
            tilt.d = hop::tilt_directions(tilt.w0, m);
            tilt.kappa = o.c * std::sqrt(tilt.w0.dot(m.covariance() * tilt.w0));
            r = mth == "lmvskt" ? hop::solve_tilting_l(m, tilt, fs, opts)
                                : hop::solve_tilting_q(m, tilt, fs, opts);
          }
          cell.wall.push_back(elapsed_ms(t0));
          cell.iters.push_back(static_cast<double>(r.iterations));
          cell.objs.push_back(r.objective);
        } catch (const std::exception& e) {
          cell.status = classify_failure(e);
          std::cerr << "bench: n=" << n << " method=" << mth << " rep=" << rep << ": " << e.what()
                    << "\n";
        }
      }
    }

    for (const std::string& mth : methods) {
      const Cell& cell = cells[mth];
      const std::string status = !prep_failure.empty() ? prep_failure : cell.status;
      out << n << ',' << mth << ',' << status << ',' << cell.wall.size() << ',';
      if (!moments_ms.empty()) out << hop::format_double(median(moments_ms));
      out << ',';
      if (!cell.wall.empty()) out << hop::format_double(median(cell.wall));
      out << ',';
      if (!cell.iters.empty()) out << hop::format_double(median(cell.iters));
      out << ',';
      if (!cell.objs.empty()) out << hop::format_double(median(cell.objs));
      out << '\n';
      ++rows;
    }
  }
  if (!out) throw hop::DataError("write to '" + o.out + "' failed");
  out.close();
  std::cout << "wrote " << rows << " rows to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Config splicing: turn file entries into long flags ahead of the user's own
// command-line tokens, so explicit flags take precedence under take_last.

void splice_config(std::vector<std::string>& args, std::size_t subpos, const CLI::App* sub) {
  std::string path;
  for (std::size_t i = subpos + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return;

  std::vector<hop::ConfigEntry> entries;
  try {
    entries = hop::read_config(path);
  } catch (const hop::DataError& e) {
    throw UsageError(e.what());
  }
  std::vector<std::string> injected;
  for (const hop::ConfigEntry& e : entries) {
    if (e.key == "config")
      throw UsageError("config '" + path + "', line " + std::to_string(e.line) +
                       ": config files cannot nest");
    if (sub->get_option_no_throw("--" + e.key) == nullptr)
      throw UsageError("config '" + path + "', line " + std::to_string(e.line) +
                       ": unknown key '" + e.key + "' for subcommand '" + sub->get_name() + "'");
    injected.push_back("--" + e.key + "=" + e.value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(subpos) + 1, injected.begin(),
              injected.end());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"high-order (mean-variance-skewness-kurtosis) portfolio toolkit"};
  app.require_subcommand(1);

  // take_last lets an explicit flag override the same key injected from a
  // config file (the injected token always comes first).
  const auto opt = [](CLI::Option* option) { return option->take_last(); };

  GenOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "write a synthetic returns CSV");
  opt(gen_cmd->add_option("-n,--assets", gen.assets, "number of assets (N >= 2)")
          ->required()
          ->check(CLI::Range(2, 100000)));
  opt(gen_cmd->add_option("-t,--periods", gen.periods, "observation count (default 5N)"));
  opt(gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str());
  opt(gen_cmd->add_option("--skew", gen.skew, "shock skewness (0 = symmetric normal)")
          ->capture_default_str());
  opt(gen_cmd->add_option("--cond", gen.cond, "mixing-matrix condition number")
          ->capture_default_str()
          ->check(CLI::Range(1.0, 1e12)));
  opt(gen_cmd->add_option("-o,--out", gen.out, "output CSV path")->required());

  MomentsOptions mom;
  CLI::App* mom_cmd =
      app.add_subcommand("moments", "estimate four sample moments from a returns CSV");
  opt(mom_cmd->add_option("-i,--in", mom.in, "returns CSV path")->required());
  opt(mom_cmd->add_option("-o,--out", mom.out, "moments binary output path")->required());
  opt(mom_cmd->add_option("--max-assets", mom.max_assets, "memory guard on N")
          ->capture_default_str());

  SolveOptions sol;
  CLI::App* sol_cmd = app.add_subcommand("solve", "run one solver and report the result");
  opt(sol_cmd->add_option("--config", sol.config, "key=value config file (flags override)"));
  opt(sol_cmd->add_option("-i,--in", sol.in_csv, "returns CSV input"));
  opt(sol_cmd->add_option("--moments", sol.in_moments, "moments binary input"));
  opt(sol_cmd->add_option("--gen-assets", sol.gen_assets, "generate a synthetic panel with N assets"));
  opt(sol_cmd->add_option("--gen-periods", sol.gen_periods, "synthetic observation count (default 5N)"));
  opt(sol_cmd->add_option("--skew", sol.skew, "synthetic shock skewness")->capture_default_str());
  opt(sol_cmd->add_option("--cond", sol.cond, "synthetic mixing condition number")
          ->capture_default_str());
  opt(sol_cmd->add_option("--seed", sol.seed, "synthetic generator seed")->capture_default_str());
  opt(sol_cmd->add_option("--kind", sol.kind, "problem kind: mvsk | tilting")->required());
  opt(sol_cmd->add_option("--method", sol.method, "dc | mm | qmvsk (mvsk); lmvskt | qmvskt (tilting)")
          ->required());
  opt(sol_cmd->add_option("--xi", sol.xi, "risk aversion; moment weights from its utility expansion")
          ->capture_default_str());
  opt(sol_cmd->add_option("--lambdas", sol.lambdas, "explicit moment weights l1,l2,l3,l4"));
  opt(sol_cmd->add_option("-L,--leverage", sol.leverage, "leverage bound on ||w||_1")
          ->capture_default_str());
  opt(sol_cmd->add_option("--c", sol.c, "tracking-error radius multiplier")->capture_default_str());
  opt(sol_cmd->add_option("--theta", sol.theta, "relaxation mix for surrogate constraints")
          ->capture_default_str());
  opt(sol_cmd->add_option("--tau-w", sol.tau_w, "proximal weight on w (tilting)")
          ->capture_default_str());
  opt(sol_cmd->add_option("--tau-delta", sol.tau_delta, "proximal weight on delta (tilting)")
          ->capture_default_str());
  opt(sol_cmd->add_option("--rel-tol", sol.rel_tol, "relative stopping tolerance")
          ->capture_default_str()
          ->check(CLI::Range(1e-300, 1.0)));
  opt(sol_cmd->add_option("--stat-tol", sol.stat_tol, "projected-gradient gate (mvsk)")
          ->capture_default_str()
          ->check(CLI::Range(1e-300, 1.0)));
  opt(sol_cmd->add_option("--kkt-tol", sol.kkt_tol, "first-order gate (tilting)")
          ->capture_default_str()
          ->check(CLI::Range(1e-300, 1.0)));
  opt(sol_cmd->add_option("--feas-tol", sol.feas_tol, "true-constraint violation allowed")
          ->capture_default_str()
          ->check(CLI::Range(1e-300, 1.0)));
  opt(sol_cmd->add_option("--max-iter", sol.max_iter, "iteration cap (0 = per-method default)")
          ->capture_default_str());
  opt(sol_cmd->add_option("--max-assets", sol.max_assets, "memory guard on N")
          ->capture_default_str());
  opt(sol_cmd->add_option("--report", sol.report, "write report JSON here"));
  opt(sol_cmd->add_option("--trace", sol.trace, "write per-iteration trace CSV here"));

  BenchOptions ben;
  CLI::App* ben_cmd = app.add_subcommand("bench", "compare methods across problem sizes");
  opt(ben_cmd->add_option("--config", ben.config, "key=value config file (flags override)"));
  opt(ben_cmd->add_option("--sizes", ben.sizes, "asset counts, e.g. 10,20")->required());
  opt(ben_cmd->add_option("--methods", ben.methods, "methods to compare, e.g. dc,mm,qmvsk")
          ->required());
  opt(ben_cmd->add_option("--reps", ben.reps, "seeded repetitions per cell")->capture_default_str());
  opt(ben_cmd->add_option("--seed", ben.seed, "base seed; cells derive from it")
          ->capture_default_str());
  opt(ben_cmd->add_option("--periods-mult", ben.periods_mult, "observations per asset")
          ->capture_default_str()
          ->check(CLI::Range(1, 10000)));
  opt(ben_cmd->add_option("--xi", ben.xi, "risk aversion for mvsk methods")->capture_default_str());
  opt(ben_cmd->add_option("--c", ben.c, "radius multiplier for tilting methods")
          ->capture_default_str());
  opt(ben_cmd->add_option("-L,--leverage", ben.leverage, "leverage bound")->capture_default_str());
  opt(ben_cmd->add_option("--skew", ben.skew, "synthetic shock skewness")->capture_default_str());
  opt(ben_cmd->add_option("--cond", ben.cond, "synthetic mixing condition number")
          ->capture_default_str());
  opt(ben_cmd->add_option("--max-iter", ben.max_iter, "iteration cap (0 = per-method default)")
          ->capture_default_str());
  opt(ben_cmd->add_option("--max-assets", ben.max_assets, "memory guard on N")
          ->capture_default_str());
  opt(ben_cmd->add_option("-o,--out", ben.out, "output CSV path")->required());

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::size_t subpos = args.size();
    for (std::size_t i = 0; i < args.size(); ++i)
      if (!args[i].empty() && args[i][0] != '-') {
        subpos = i;
        break;
      }
    if (subpos < args.size() && (args[subpos] == "solve" || args[subpos] == "bench"))
      splice_config(args, subpos, args[subpos] == "solve" ? sol_cmd : ben_cmd);

    std::vector<const char*> cargs;
    cargs.push_back(argv[0]);
    for (const std::string& a : args) cargs.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 1;
    }

    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (mom_cmd->parsed()) return cmd_moments(mom);
    if (sol_cmd->parsed()) return cmd_solve(sol_cmd, sol);
    return cmd_bench(ben);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const hop::ResourceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const hop::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
