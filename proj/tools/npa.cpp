// Command-line driver: analyze, bench, oracle.
#include "npa/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace npa;

namespace {

std::map<std::string, double> parseInitialState(const std::vector<std::string> &items) {
  std::map<std::string, double> out;
  for (const auto &item : items) {
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorKind::InvalidInput, "initial state entries look like var=value: " + item);
    std::string value = item.substr(eq + 1);
    double v;
    if (value == "true")
      v = 1.0;
    else if (value == "false")
      v = 0.0;
    else
      try {
        v = std::stod(value);
      } catch (const std::exception &) {
        throw Error(ErrorKind::InvalidInput, "bad value in " + item);
      }
    out[item.substr(0, eq)] = v;
  }
  return out;
}

void printError(const Error &e) {
  std::cerr << "error [" << errorKindName(e.kind()) << "]";
  if (e.line() > 0)
    std::cerr << " at line " << e.line() << ", column " << e.column();
  std::cerr << ": " << e.what() << '\n';
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Newtonian program analysis for probabilistic programs"};
  app.require_subcommand(1);

  // analyze
  auto *analyze = app.add_subcommand("analyze", "analyze a program");
  cli::RunSpec run;
  std::string domainText = "reals", solverText = "newton", warmStart;
  bool asJson = false;
  analyze->add_option("file", run.inputPath, "program (surface syntax or JSON equations)")
      ->required();
  analyze->add_option("--domain", domainText, "reals | pair | bayes | expinv | moment:k")
      ->capture_default_str();
  analyze->add_option("--solver", solverText, "newton | kleene | both")->capture_default_str();
  analyze->add_option("--tolerance", run.tolerance, "convergence tolerance")->capture_default_str();
  analyze->add_option("--max-rounds", run.maxRounds, "round limit")->capture_default_str();
  analyze->add_option("--kleene-max-rounds", run.kleeneMaxRounds,
                      "round limit for Kleene iteration (default: --max-rounds)");
  analyze->add_option("--warm-start", warmStart,
                      "auto | zero | FILE (JSON object of procedure elements)");
  analyze->add_option("--rewrites", run.rewritesPath, "rewrite declarations (expinv)");
  analyze->add_option("--track", run.pairVariable, "variable tracked by the pair domain");
  analyze->add_option("--trace", run.tracePath, "write a per-round CSV trace");
  analyze->add_flag("--json", asJson, "print the report as JSON");

  // bench
  auto *bench = app.add_subcommand("bench", "generate random benchmark programs");
  cli::BenchSpec benchSpec;
  std::string outDir;
  bench->add_option("--count", benchSpec.programCount, "number of programs")->capture_default_str();
  bench->add_option("--procs", benchSpec.procedureCount, "procedures per program")
      ->capture_default_str();
  bench->add_option("--seed", benchSpec.seed, "generator seed")->capture_default_str();
  bench->add_option("--weights", benchSpec.formWeights, "weights of the three procedure forms")
      ->expected(3);
  bench->add_flag("--no-conditions", benchSpec.omitConditions, "avoid conditional choice");
  bench->add_option("--out", outDir, "output directory")->required();

  // oracle
  auto *oracle = app.add_subcommand("oracle", "Monte-Carlo estimate by simulation");
  cli::OracleSpec oracleSpec;
  std::string oracleFile, oracleDomain = "reals";
  std::vector<std::string> initial;
  bool compare = false;
  oracle->add_option("file", oracleFile, "program in surface syntax")->required();
  oracle->add_option("--domain", oracleDomain, "reals | pair | bayes | moment:k")
      ->capture_default_str();
  oracle->add_option("--trials", oracleSpec.trials, "number of runs")->capture_default_str();
  oracle->add_option("--seed", oracleSpec.seed, "random seed")->capture_default_str();
  oracle->add_option("--max-steps", oracleSpec.maxSteps, "per-run step budget")
      ->capture_default_str();
  oracle->add_option("--max-stack", oracleSpec.maxStack, "per-run call depth budget")
      ->capture_default_str();
  oracle->add_option("--threads", oracleSpec.threads, "worker threads (0 = all cores)");
  oracle->add_option("--proc", oracleSpec.procedure, "entry procedure (default: first)");
  oracle->add_option("--init", initial, "initial values, e.g. b1=true x=3");
  oracle->add_option("--track", oracleSpec.pairVariable, "variable tracked by the pair domain");
  oracle->add_flag("--compare", compare, "also run the Newton analysis and compare (3 SE)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 4;
  }

  try {
    if (*analyze) {
      run.domain = parseDomainTag(domainText);
      run.solver = cli::parseSolverChoice(solverText);
      run.outputFormat = asJson ? cli::OutputFormat::Json : cli::OutputFormat::Text;
      if (warmStart.empty() || warmStart == "auto") {
        run.warmStart.kind = cli::WarmStartSpec::Kind::Auto;
      } else if (warmStart == "zero") {
        run.warmStart.kind = cli::WarmStartSpec::Kind::Zero;
      } else {
        run.warmStart.kind = cli::WarmStartSpec::Kind::File;
        run.warmStart.path = warmStart;
      }
      cli::RunOutcome out = cli::runAnalysis(run);
      std::cout << (asJson ? cli::reportToJson(out.report) + "\n" : cli::reportToText(out.report));
      return cli::exitCodeFor(out.report);
    }
    if (*bench) {
      auto paths = cli::writeBenchmarks(benchSpec, outDir);
      std::cout << "wrote " << paths.size() << " programs to " << outDir << '\n';
      return 0;
    }
    if (*oracle) {
      oracleSpec.domain = parseDomainTag(oracleDomain);
      oracleSpec.initialState = parseInitialState(initial);
      cli::LoadedProgram prog = cli::loadProgramFile(oracleFile);
      if (!prog.program)
        throw Error(ErrorKind::InvalidInput, "the oracle needs a program in surface syntax");
      cli::OracleEstimate est = cli::monteCarloOracle(*prog.program, oracleSpec);
      std::printf("trials: %zu (capped: %zu)\n", est.trials, est.capped);
      for (std::size_t i = 0; i < est.labels.size(); ++i)
        std::printf("%-10s %.6f +- %.6f\n", est.labels[i].c_str(), est.mean[i],
                    est.standardError[i]);
      if (compare) {
        cli::RunSpec spec;
        spec.inputPath = oracleFile;
        spec.domain = oracleSpec.domain;
        spec.pairVariable = oracleSpec.pairVariable;
        cli::RunOutcome out = cli::runAnalysis(spec);
        std::size_t entry = 0;
        if (!oracleSpec.procedure.empty())
          entry = *prog.extracted.indexOf(oracleSpec.procedure);
        auto values = cli::comparableEntries(*out.domain, out.report.values.at(entry),
                                             oracleSpec.initialState);
        auto cmp = cli::compareWithOracle(values, est, oracleSpec.domain);
        for (std::size_t i = 0; i < values.size(); ++i)
          std::printf("analysis %-10s %.6f\n", est.labels[i].c_str(), values[i]);
        std::printf("comparison: %s (worst z = %.3f)\n", cmp.ok ? "consistent" : "INCONSISTENT",
                    cmp.worstZ);
        return cmp.ok ? 0 : 2;
      }
      return 0;
    }
  } catch (const Error &e) {
    printError(e);
    return cli::exitCodeFor(e);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
