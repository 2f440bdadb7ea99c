// potapprox CLI: generate planted instances, run the alternating solver,
// verify logs against the per-sweep guarantees, and fit convergence rates.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "potapprox/diagnostics.hpp"
#include "potapprox/problems.hpp"
#include "potapprox/solver.hpp"
#include "serialize.hpp"

namespace {

using namespace potapprox;
using potapprox::tools::json;

std::vector<std::int64_t> parse_dims(const std::string& s) {
  std::vector<std::int64_t> out;
  for (const auto& part : tools::detail::split(s, ','))
    out.push_back(tools::detail::parse_int(part));
  if (out.empty()) throw ArgumentError("expected a comma-separated dimension list");
  return out;
}

Eigen::VectorXd parse_reals(const std::string& s) {
  const auto parts = tools::detail::split(s, ',');
  Eigen::VectorXd out(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = tools::detail::parse_double(parts[i]);
  return out;
}

std::string stem_of(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".tns") return path.substr(0, path.size() - 4);
  return path;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("bad JSON in ") + path + ": " + e.what());
  }
  return j;
}

void save_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write failed on " + path);
}

// Expand `--config file.json` into CLI tokens inserted right after the
// subcommand, so explicit flags (parsed with a take-last policy) win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::size_t at = args.size();
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string key = args[i], val;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      val = key.substr(eq + 1);
      key = key.substr(0, eq);
    }
    if (key != "--config") continue;
    if (at != args.size()) throw ArgumentError("--config may be given at most once");
    at = i;
    if (eq != std::string::npos) {
      path = val;
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      if (i + 1 >= args.size()) throw ArgumentError("--config needs a path");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    }
    break;
  }
  if (at == args.size()) return args;
  if (at == 0) throw ArgumentError("--config must follow a subcommand");

  const json cfg = load_json(path);
  if (!cfg.is_object()) throw ArgumentError("config file must hold a JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) tokens.push_back(flag);
    } else if (value.is_number_integer()) {
      tokens.push_back(flag + "=" + std::to_string(value.get<std::int64_t>()));
    } else if (value.is_number()) {
      tokens.push_back(flag + "=" + tools::fmt_double(value.get<double>()));
    } else if (value.is_string()) {
      tokens.push_back(flag + "=" + value.get<std::string>());
    } else if (value.is_array()) {
      std::string joined;
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (i) joined += ',';
        if (value[i].is_number_integer())
          joined += std::to_string(value[i].get<std::int64_t>());
        else if (value[i].is_number())
          joined += tools::fmt_double(value[i].get<double>());
        else
          throw ArgumentError("config arrays must hold numbers: " + key);
      }
      tokens.push_back(flag + "=" + joined);
    } else {
      throw ArgumentError("unsupported config value type for " + key);
    }
  }
  args.insert(args.begin() + 1, tokens.begin(), tokens.end());
  return args;
}

unsigned worker_count(int restarts) {
  unsigned n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("POTAPPROX_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return std::min<unsigned>(n, static_cast<unsigned>(restarts));
}

double residual_norm(const DenseTensor& a, const FactorSet& u, const DiagonalCore& core) {
  const DenseTensor b = reconstruct(u, core);
  double sq = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

struct GenerateArgs {
  std::string dims, sigmas, out = "instance.tns";
  int r = 0, s = 1;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

int cmd_generate(const GenerateArgs& ga) {
  const std::vector<std::int64_t> dims = parse_dims(ga.dims);
  const Eigen::VectorXd sigmas = parse_reals(ga.sigmas);
  const int r = ga.r > 0 ? ga.r : static_cast<int>(sigmas.size());
  PlantedInstance pi = plant(dims, r, ga.s, sigmas, ga.noise, ga.seed);

  write_tns(ga.out, pi.tensor);
  const std::string truth_path = stem_of(ga.out) + ".truth.json";
  json truth{{"schema", tools::kSchema},
             {"command", "generate"},
             {"dims", dims},
             {"r", r},
             {"s", ga.s},
             {"sigmas", tools::vec_to_json(sigmas)},
             {"sigma_sq_sum", sigmas.squaredNorm()},
             {"noise_level", ga.noise},
             {"seed", ga.seed},
             {"hs_norm", hs_norm(pi.tensor)},
             {"factors", tools::factors_to_json(pi.true_factors)}};
  save_text(truth_path, truth.dump(2) + "\n");
  std::printf("generate: wrote %s and %s\n", ga.out.c_str(), truth_path.c_str());
  return 0;
}

struct SolveArgs {
  std::string input, log, result;
  int r = 1, s = 1, max_sweeps = 10000, restarts = 1;
  double epsilon = 0.0, kappa = 0.0, stop_tol = 0.0;  // 0 = library default
  std::uint64_t seed = 0;
  bool traces = false, wall_clock = false;
};

SolverConfig solver_config(const SolveArgs& sa, std::uint64_t seed, bool record_inner) {
  SolverConfig cfg;
  if (sa.epsilon > 0.0) cfg.epsilon = sa.epsilon;
  if (sa.kappa > 0.0) cfg.kappa = sa.kappa;
  if (sa.stop_tol > 0.0) cfg.stop_tol = sa.stop_tol;
  cfg.max_sweeps = sa.max_sweeps;
  cfg.seed = seed;
  cfg.record_inner = record_inner;
  return cfg;
}

int cmd_solve(const SolveArgs& sa) {
  const DenseTensor a = read_tns(sa.input);
  if (hs_norm(a) == 0.0) {
    std::fprintf(stderr, "potapprox: input is the zero tensor; nothing to approximate\n");
    return 3;
  }
  if (sa.restarts < 1) throw ArgumentError("--restarts must be >= 1");

  // survey the restarts cheaply, then re-run the winner with full telemetry
  std::vector<double> final_f(static_cast<std::size_t>(sa.restarts));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(sa.restarts));
  {
    std::atomic<int> next{0};
    auto work = [&]() {
      for (int t = next.fetch_add(1); t < sa.restarts; t = next.fetch_add(1)) {
        try {
          SolveResult r = solve(a, sa.r, sa.s, solver_config(sa, derive_seed(sa.seed, static_cast<std::uint64_t>(t)), false));
          final_f[static_cast<std::size_t>(t)] = r.records.back().objective_f;
        } catch (...) {
          errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    const unsigned workers = worker_count(sa.restarts);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  int best = 0;
  for (int t = 1; t < sa.restarts; ++t)
    if (final_f[static_cast<std::size_t>(t)] > final_f[static_cast<std::size_t>(best)]) best = t;

  const std::uint64_t run_seed = derive_seed(sa.seed, static_cast<std::uint64_t>(best));
  SolveResult r = solve(a, sa.r, sa.s, solver_config(sa, run_seed, sa.traces),
                        [&](const SweepState& st, IterationRecord& rec) {
                          rec.kkt_residual = kkt_residual(a, st.u).total;
                        });

  const std::string log_path = sa.log.empty() ? stem_of(sa.input) + ".log.csv" : sa.log;
  const std::string result_path = sa.result.empty() ? stem_of(sa.input) + ".result.json" : sa.result;

  std::string csv = std::string(tools::kCsvHeader) + "\n";
  for (const auto& rec : r.records) csv += tools::csv_line(tools::row_from_record(rec, sa.wall_clock)) + "\n";
  save_text(log_path, csv);

  const KktResidual kkt = kkt_residual(a, r.factors);
  const double an = hs_norm(a);
  const double res = residual_norm(a, r.factors, r.core);
  json out{{"schema", tools::kSchema},
           {"command", "solve"},
           {"input", sa.input},
           {"dims", std::vector<std::int64_t>(a.shape().dims().begin(), a.shape().dims().end())},
           {"r", sa.r},
           {"s", sa.s},
           {"seed", sa.seed},
           {"restarts", sa.restarts},
           {"best_restart", best},
           {"epsilon", r.epsilon},
           {"kappa", r.kappa},
           {"stop_tol", r.stop_tol},
           {"max_sweeps", sa.max_sweeps},
           {"status", r.status},
           {"sweeps", r.records.back().sweep},
           {"initial_rank", r.initial_rank},
           {"active_rank", r.factors.r_active()},
           {"a_hs_norm", an},
           {"objective_f", r.records.back().objective_f},
           {"residual", res},
           {"residual_rel", res / an},
           {"kkt_total", kkt.total},
           {"kkt_total_normalized", kkt.total_normalized},
           {"feasibility_error", r.factors.feasibility_error()},
           {"lambdas", tools::vec_to_json(r.core.lambdas)},
           {"factors", tools::factors_to_json(r.factors)}};
  if (sa.traces) out["traces"] = tools::traces_to_json(r.inner_traces);
  save_text(result_path, out.dump(2) + "\n");
  std::printf("solve: status=%s sweeps=%d f=%s residual_rel=%s\n", r.status.c_str(),
              r.records.back().sweep, tools::fmt_double(r.records.back().objective_f).c_str(),
              tools::fmt_double(res / an).c_str());
  return 0;
}

struct BenchArgs {
  std::string input;
  int r = 1, s = 1, sweeps = 50;
  std::uint64_t seed = 0;
  bool wall_clock = false;
};

int cmd_bench(const BenchArgs& ba) {
  const DenseTensor a = read_tns(ba.input);
  if (hs_norm(a) == 0.0) {
    std::fprintf(stderr, "potapprox: input is the zero tensor; nothing to approximate\n");
    return 3;
  }
  SolverConfig cfg;
  cfg.max_sweeps = ba.sweeps;
  cfg.stop_tol = 1e-300;  // only an exact fixed point stops a bench run early
  cfg.seed = ba.seed;
  SolveResult r = solve(a, ba.r, ba.s, cfg);
  double wall = 0.0;
  if (ba.wall_clock)
    for (const auto& rec : r.records) wall += rec.wall_time_ms;
  const KktResidual kkt = kkt_residual(a, r.factors);
  std::printf("input,dims,r,s,sweeps,f,kkt_total,wall_ms\n");
  std::printf("%s,%s,%d,%d,%d,%s,%s,%s\n", ba.input.c_str(), a.shape().to_string().c_str(), ba.r,
              ba.s, r.records.back().sweep,
              tools::fmt_double(r.records.back().objective_f).c_str(),
              tools::fmt_double(kkt.total).c_str(), tools::fmt_double(wall).c_str());
  return 0;
}

struct VerifyArgs {
  std::string input, log, result, report;
};

int cmd_verify(const VerifyArgs& va) {
  const DenseTensor a = read_tns(va.input);
  std::ifstream log_in(va.log);
  if (!log_in) throw IoError("cannot open " + va.log);
  const std::vector<tools::CsvRow> rows = tools::parse_csv(log_in);
  const json result = load_json(va.result);
  if (!result.is_object() || result.value("schema", "") != tools::kSchema)
    throw ArgumentError("result file is not a potapprox/v1 document");

  const double an = hs_norm(a);
  const double epsilon = result.at("epsilon").get<double>();
  const double kappa = result.at("kappa").get<double>();
  const int r_initial = result.at("initial_rank").get<int>();
  const int s = result.at("s").get<int>();
  const FactorSet factors = tools::factors_from_json(result.at("factors"), s);
  const std::vector<IterationRecord> records = tools::records_from_rows(rows);

  json checks;
  bool pass = true;

  {
    const double fe = factors.feasibility_error();
    const bool ok = fe <= 1e-6;
    checks["feasibility"] = json{{"pass", ok}, {"error", fe}};
    pass = pass && ok;
  }
  {
    const IncreaseReport rep = assert_sufficient_increase(records, epsilon, kappa, an);
    int exempt = 0;
    double worst = 0.0;
    for (const auto& ck : rep.checks) {
      if (ck.exempt) ++exempt;
      else worst = std::min(worst, ck.gain - ck.required);
    }
    checks["sufficient_increase"] = json{{"pass", rep.all_pass},
                                         {"checked", rep.checks.size() - static_cast<std::size_t>(exempt)},
                                         {"exempt", exempt},
                                         {"worst_margin", worst}};
    pass = pass && rep.all_pass;
  }
  {
    std::size_t last_trunc = 0;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (!rows[i].truncated.empty()) last_trunc = i;
    bool ok = true;
    double worst = 0.0;
    for (std::size_t i = std::max<std::size_t>(last_trunc + 1, 1); i < rows.size(); ++i) {
      const double drop = rows[i - 1].f - rows[i].f;
      worst = std::max(worst, drop);
      ok = ok && drop <= 1e-10 * an * an;
    }
    checks["monotone_after_last_truncation"] =
        json{{"pass", ok},
             {"last_truncation_sweep", rows[last_trunc].truncated.empty() ? -1 : rows[last_trunc].sweep},
             {"worst_drop", worst}};
    pass = pass && ok;
  }
  {
    int removed_total = 0;
    double observed_drop = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].truncated.empty()) continue;
      removed_total += static_cast<int>(rows[i].truncated.size());
      observed_drop += std::max(0.0, rows[i - 1].f - rows[i].f);
    }
    const double budget = static_cast<double>(r_initial) * kappa * kappa + 1e-10 * an * an;
    const bool ok = removed_total <= r_initial && observed_drop <= budget;
    checks["truncation_budget"] = json{{"pass", ok},
                                       {"removed_total", removed_total},
                                       {"initial_rank", r_initial},
                                       {"observed_drop", observed_drop},
                                       {"budget", budget}};
    pass = pass && ok;
  }
  {
    const KktResidual kkt = kkt_residual(a, factors);
    const double logged_json = result.at("kkt_total").get<double>();
    const double logged_csv = rows.back().kkt_total;
    const double tol = 1e-9 * std::max(1.0, std::abs(kkt.total));
    const bool ok = std::abs(kkt.total - logged_json) <= tol && std::abs(kkt.total - logged_csv) <= tol;
    checks["kkt_consistency"] = json{{"pass", ok},
                                     {"recomputed", kkt.total},
                                     {"result_json", logged_json},
                                     {"log_csv", logged_csv}};
    pass = pass && ok;
  }
  if (result.contains("traces")) {
    const ChainReport rep = assert_lambda_chain(tools::traces_from_json(result["traces"]));
    checks["lambda_chain"] = json{{"pass", rep.all_pass}, {"sweeps_checked", rep.checks.size()}};
    pass = pass && rep.all_pass;
  } else {
    checks["lambda_chain"] = json{{"skipped", true}};
  }

  json report{{"schema", tools::kSchema}, {"command", "verify"}, {"pass", pass}, {"checks", checks}};
  const std::string text = report.dump(2) + "\n";
  if (va.report.empty())
    std::fputs(text.c_str(), stdout);
  else
    save_text(va.report, text);
  return pass ? 0 : 1;
}

struct RateArgs {
  std::string log, result, truth, input, out;
  double f_star = std::numeric_limits<double>::quiet_NaN();
};

int cmd_rate(const RateArgs& ra) {
  std::ifstream log_in(ra.log);
  if (!log_in) throw IoError("cannot open " + ra.log);
  const std::vector<tools::CsvRow> rows = tools::parse_csv(log_in);

  double an = 0.0;
  if (!ra.result.empty()) {
    an = load_json(ra.result).at("a_hs_norm").get<double>();
  } else if (!ra.input.empty()) {
    an = hs_norm(read_tns(ra.input));
  } else {
    throw ArgumentError("rate needs --result or --input to recover the tensor norm");
  }

  std::optional<double> f_star;
  std::string source = "auto";
  if (!std::isnan(ra.f_star)) {
    f_star = ra.f_star;
    source = "flag";
  } else if (!ra.truth.empty()) {
    f_star = load_json(ra.truth).at("sigma_sq_sum").get<double>();
    source = "truth";
  }

  const RateEstimate est = estimate_rate(tools::records_from_rows(rows), f_star, an);
  json out{{"schema", tools::kSchema},
           {"command", "rate"},
           {"model", est.model},
           {"linear_factor", est.linear_factor},
           {"sublinear_exponent", est.sublinear_exponent},
           {"fit_r2", est.fit_r2},
           {"tail_start", est.tail_start},
           {"f_star_source", source}};
  const std::string text = out.dump(2) + "\n";
  if (ra.out.empty())
    std::fputs(text.c_str(), stdout);
  else
    save_text(ra.out, text);
  return 0;
}

void take_last(CLI::App* sub) {
  for (CLI::Option* opt : sub->get_options())
    if (!opt->get_positional()) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"low-rank partially orthogonal tensor approximation"};
  app.require_subcommand(1);

  GenerateArgs ga;
  CLI::App* gen = app.add_subcommand("generate", "plant an instance and write .tns + ground truth");
  gen->add_option("--dims", ga.dims, "comma-separated mode sizes, e.g. 4,4,4")->required();
  gen->add_option("--sigmas", ga.sigmas, "comma-separated true weights")->required();
  gen->add_option("--r", ga.r, "number of components (default: count of --sigmas)");
  gen->add_option("--s", ga.s, "number of orthonormal modes");
  gen->add_option("--noise", ga.noise, "noise level relative to the signal norm");
  gen->add_option("--seed", ga.seed, "RNG seed");
  gen->add_option("--out", ga.out, "output .tns path");

  SolveArgs sa;
  CLI::App* slv = app.add_subcommand("solve", "run the alternating solver on a .tns file");
  slv->add_option("--input", sa.input, "input .tns path")->required();
  slv->add_option("--r", sa.r, "target rank")->required();
  slv->add_option("--s", sa.s, "number of orthonormal modes")->required();
  slv->add_option("--epsilon", sa.epsilon, "proximal parameter (default 1e-3 |A|)");
  slv->add_option("--kappa", sa.kappa, "truncation parameter (default 0.5 sqrt(f0/r))");
  slv->add_option("--stop-tol", sa.stop_tol, "step-norm stopping tolerance");
  slv->add_option("--max-sweeps", sa.max_sweeps, "sweep cap");
  slv->add_option("--seed", sa.seed, "base RNG seed");
  slv->add_option("--restarts", sa.restarts, "number of seeded restarts, best f wins");
  slv->add_option("--log", sa.log, "CSV log path (default <input>.log.csv)");
  slv->add_option("--result", sa.result, "result JSON path (default <input>.result.json)");
  slv->add_flag("--traces", sa.traces, "embed per-sweep lambda traces in the result");
  slv->add_flag("--wall-clock", sa.wall_clock, "record wall times (breaks byte determinism)");

  BenchArgs ba;
  CLI::App* ben = app.add_subcommand("bench", "run a fixed number of sweeps and print a summary");
  ben->add_option("--input", ba.input, "input .tns path")->required();
  ben->add_option("--r", ba.r, "target rank")->required();
  ben->add_option("--s", ba.s, "number of orthonormal modes")->required();
  ben->add_option("--sweeps", ba.sweeps, "number of sweeps");
  ben->add_option("--seed", ba.seed, "RNG seed");
  ben->add_flag("--wall-clock", ba.wall_clock, "report wall time");

  VerifyArgs va;
  CLI::App* ver = app.add_subcommand("verify", "re-check a solve log against the guarantees");
  ver->add_option("--input", va.input, "input .tns path")->required();
  ver->add_option("--log", va.log, "CSV log from solve")->required();
  ver->add_option("--result", va.result, "result JSON from solve")->required();
  ver->add_option("--report", va.report, "report JSON path (default stdout)");

  RateArgs ra;
  CLI::App* rat = app.add_subcommand("rate", "fit the convergence rate of a solve log");
  rat->add_option("--log", ra.log, "CSV log from solve")->required();
  rat->add_option("--result", ra.result, "result JSON (for the tensor norm)");
  rat->add_option("--input", ra.input, "input .tns (alternative tensor norm source)");
  rat->add_option("--truth", ra.truth, "ground-truth JSON from generate (gives f*)");
  rat->add_option("--f-star", ra.f_star, "explicit optimal objective value");
  rat->add_option("--out", ra.out, "estimate JSON path (default stdout)");

  // a config file may mirror any flags; explicit flags override it
  for (CLI::App* sub : {gen, slv, ben, ver, rat}) {
    static std::string ignored;
    sub->add_option("--config", ignored, "JSON file with defaults for these flags");
    take_last(sub);
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(args);
    std::vector<const char*> cargv{argv[0]};
    for (const auto& s : args) cargv.push_back(s.c_str());
    try {
      app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }
    if (gen->parsed()) return cmd_generate(ga);
    if (slv->parsed()) return cmd_solve(sa);
    if (ben->parsed()) return cmd_bench(ba);
    if (ver->parsed()) return cmd_verify(va);
    if (rat->parsed()) return cmd_rate(ra);
    return 2;
  } catch (const InternalError& e) {
    std::fprintf(stderr, "potapprox: internal error: %s\n", e.what());
    return 1;
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "potapprox: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "potapprox: %s\n", e.what());
    return 2;
  } catch (const potapprox::tools::json::exception& e) {
    std::fprintf(stderr, "potapprox: malformed document: %s\n", e.what());
    return 2;
  } catch (const InitializationError& e) {
    std::fprintf(stderr, "potapprox: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "potapprox: unexpected error: %s\n", e.what());
    return 1;
  }
}
