// Command-line front end: run, ablate, gradcheck, report.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "lobg/bench.hpp"
#include "lobg/config.hpp"
#include "lobg/errors.hpp"
#include "lobg/gradsuite.hpp"
#include "lobg/log.hpp"
#include "lobg/report.hpp"
#include "lobg/tensor.hpp"

namespace fs = std::filesystem;
using namespace lobg;

namespace {

constexpr int kExitFailure = 1;  // a check or run failed
constexpr int kExitConfig = 2;   // invalid configuration or arguments

// Flags shared by run and ablate; unset values leave the config untouched.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> mask_threshold, lambda, gamma;
  bool no_fif = false, no_stp = false, no_hld = false;
  std::string out;
  std::optional<std::size_t> threads;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "INI config file (defaults apply when omitted)");
    app.add_option("--seed", seed, "Run a single seed instead of [run] seeds");
    app.add_option("--mask-threshold", mask_threshold, "FIF threshold q, percent of patches erased");
    app.add_option("--lambda", lambda, "HLD weight");
    app.add_option("--gamma", gamma, "STP weight");
    app.add_flag("--no-fif", no_fif, "Disable foreground filtering");
    app.add_flag("--no-stp", no_stp, "Disable topology preservation");
    app.add_flag("--no-hld", no_hld, "Disable logit distillation");
    app.add_option("--out", out, "Output root (default: $LOBG_OUT, else ./runs)");
    app.add_option("--threads", threads, "Worker threads for independent runs");
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : RunConfig::load(config);
    if (seed) c.seeds = {*seed};
    if (mask_threshold) c.train.mask_threshold = *mask_threshold;
    if (lambda) c.weights.lambda = *lambda;
    if (gamma) c.weights.gamma = *gamma;
    if (no_fif) c.train.fif = false;
    if (no_stp) c.train.stp = false;
    if (no_hld) c.train.hld = false;
    if (!out.empty()) c.output_dir = out;
    if (threads) c.threads = *threads;
    c.validate();
    return c;
  }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw InvalidInput("cannot write " + p.string());
  out << text;
}

DualEncoder teacher_for(const RunConfig& cfg) {
  PretrainReport rep;
  auto m = obtain_teacher(cfg, &rep);
  if (rep.epochs > 0)
    std::printf("teacher pretrained: %zu epochs, train accuracy %.4f\n", rep.epochs, rep.train_accuracy);
  return m;
}

void print_summary(const bench::AblationResult& r) {
  std::printf("%-16s %3s %17s %17s %17s\n", "cell", "n", "base", "novel", "hm");
  for (const auto& s : bench::summarize(r))
    std::printf("%-16s %3zu %8.4f ± %6.4f %8.4f ± %6.4f %8.4f ± %6.4f\n", s.name.c_str(), s.n, s.base_mean, s.base_std,
                s.novel_mean, s.novel_std, s.hm_mean, s.hm_std);
}

std::size_t failures(const std::vector<bench::MetricsRecord>& rows) {
  std::size_t n = 0;
  for (const auto& r : rows)
    if (!r.error.empty()) {
      std::fprintf(stderr, "run failed (seed %llu): %s\n", static_cast<unsigned long long>(r.seed), r.error.c_str());
      ++n;
    }
  return n;
}

int cmd_run(const Overrides& o) {
  const auto cfg = o.resolve();
  const auto dir = cfg.resolved_output_dir() / ("run-" + cfg.hash());
  fs::create_directories(dir);
  write_file(dir / "config.ini", cfg.to_ini());
  const auto teacher = teacher_for(cfg);

  std::vector<bench::MetricsRecord> rows;
  for (auto seed : cfg.seeds) {
    PromptSet prompts;
    auto r = bench::run_cell(teacher, cfg.dataset(), cfg.cell(), seed, cfg.hash(), &prompts);
    if (r.error.empty()) {
      save_prompts(prompts, cfg.model, dir / ("prompts-seed" + std::to_string(seed) + ".json"));
      std::printf("seed %llu  base %.4f  novel %.4f  hm %.4f  (%.1f s)\n", static_cast<unsigned long long>(seed),
                  r.base_acc, r.novel_acc, r.hm, r.wall_ms / 1000.0);
    }
    rows.push_back(std::move(r));
  }
  bench::write_csv(dir / "metrics.csv", rows);
  std::printf("wrote %s\n", dir.string().c_str());
  return failures(rows) ? kExitFailure : 0;
}

int cmd_ablate(const Overrides& o, const std::string& sweep_spec) {
  const auto cfg = o.resolve();
  const auto full = cfg.cell("full");
  std::vector<bench::CellSpec> cells;
  std::string tag = "components";
  if (sweep_spec.empty()) {
    cells = bench::component_grid(full);
  } else {
    const auto eq = sweep_spec.find('=');
    const std::string var = sweep_spec.substr(0, eq);
    if (eq == std::string::npos || (var != "q" && var != "lambda" && var != "gamma"))
      throw InvalidParameter("--sweep expects q=..., lambda=... or gamma=... with comma-separated values");
    std::stringstream ss(sweep_spec.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      char* end = nullptr;
      const double v = std::strtod(item.c_str(), &end);
      if (item.empty() || *end) throw InvalidParameter("--sweep: cannot parse '" + item + "' as a number");
      auto c = full;
      c.name = var + "=" + item;
      if (var == "q") c.train.mask_threshold = v;
      if (var == "lambda") c.weights.lambda = v;
      if (var == "gamma") c.weights.gamma = v;
      c.weights.validate();
      c.train.validate();
      cells.push_back(c);
    }
    if (cells.empty()) throw InvalidParameter("--sweep lists no values");
    tag = "sweep-" + var;
  }
  const auto dir = cfg.resolved_output_dir() / ("ablate-" + tag + "-" + cfg.hash());
  fs::create_directories(dir);
  write_file(dir / "config.ini", cfg.to_ini());
  const auto teacher = teacher_for(cfg);
  const auto result = bench::run_ablation(teacher, cfg.dataset(), cells, cfg.seeds, cfg.threads,
                                          [&](const bench::CellSpec& c) { return cfg.hash_for(c); });
  bench::write_csv(dir / "metrics.csv", result.records);
  print_summary(result);
  std::printf("wrote %s\n", dir.string().c_str());
  return failures(result.records) ? kExitFailure : 0;
}

int cmd_gradcheck(const std::string& scope, std::size_t seeds, double tolerance, double corrupt) {
  if (corrupt != 1.0) debug::set_gradient_corruption(corrupt);
  const auto results = gradsuite::run(scope, seeds, tolerance);
  std::vector<std::string> failed;
  for (const auto& r : results) {
    std::printf("%-6s %-16s worst %.3e  %s\n", r.module.c_str(), r.name.c_str(), r.worst, r.passed ? "ok" : "FAIL");
    if (!r.passed) failed.push_back(r.module + "/" + r.name);
  }
  if (failed.empty()) {
    std::printf("all %zu checks below %.0e\n", results.size(), tolerance);
    return 0;
  }
  std::string list;
  for (const auto& f : failed) list += " " + f;
  std::fprintf(stderr, "gradient check failed:%s\n", list.c_str());
  return kExitFailure;
}

int cmd_report(const std::vector<std::string>& csvs, std::string out) {
  std::vector<fs::path> paths(csvs.begin(), csvs.end());
  const auto data = report::read_csvs(paths);
  if (out.empty()) out = (paths.front().parent_path() / "report").string();
  const auto w = report::write_report(data, out);
  for (const auto& p : w.plots) std::printf("plot %s\n", p.string().c_str());
  std::printf("table %s\nsummary %s\n", w.table.string().c_str(), w.summary.string().c_str());
  std::printf("rows %zu, skipped %zu, hm max error %.3g\n", data.rows.size(), data.skipped,
              report::hm_consistency_error(data.rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-tuning lab: foreground filtering, topology preservation and logit distillation"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Progress logging");
  app.add_flag("-q,--quiet", quiet, "Errors only");

  Overrides run_o, abl_o;
  auto* run = app.add_subcommand("run", "Pretrain or load the teacher, tune prompts per seed, evaluate");
  run_o.attach(*run);

  auto* abl = app.add_subcommand("ablate", "Component grid (or one-variable sweep) over all seeds");
  abl_o.attach(*abl);
  std::string sweep;
  abl->add_option("--sweep", sweep, "Sweep one variable instead, e.g. q=10,30,50 or lambda=0,1,2");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference checks of every op and loss");
  std::string scope = "all";
  std::size_t seeds = 10;
  double tolerance = 1e-4, corrupt = 1.0;
  grad->add_option("scope", scope, "all or a module: " + [] {
    std::string s;
    for (const auto& m : gradsuite::modules()) s += (s.empty() ? "" : ", ") + m;
    return s;
  }());
  grad->add_option("--seeds", seeds, "Random draws per check")->check(CLI::PositiveNumber);
  grad->add_option("--tolerance", tolerance, "Maximum relative error");
  grad->add_option("--corrupt-gradients", corrupt, "Test hook: scale every leaf gradient by this factor");

  auto* rep = app.add_subcommand("report", "SVG sweeps, component table and summary from metric CSVs");
  std::vector<std::string> csvs;
  std::string rep_out;
  rep->add_option("csv", csvs, "Metric CSV files")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", rep_out, "Report directory (default: <first csv dir>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }
  set_log_level(quiet ? LogLevel::kQuiet : verbose ? LogLevel::kInfo : LogLevel::kWarning);

  try {
    if (*run) return cmd_run(run_o);
    if (*abl) return cmd_ablate(abl_o, sweep);
    if (*grad) return cmd_gradcheck(scope, seeds, tolerance, corrupt);
    if (*rep) return cmd_report(csvs, rep_out);
  } catch (const InvalidParameter& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return 0;
}
