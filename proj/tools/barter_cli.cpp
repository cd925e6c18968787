// Command-line front end: generate instances, solve them end to end, run the
// exhaustive oracle, and Monte Carlo-verify the rounding guarantees.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "barter/io.hpp"
#include "barter/lp.hpp"
#include "barter/oracle.hpp"
#include "barter/rounding.hpp"
#include "barter/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 1;
constexpr int kExitFairnessInfeasible = 2;
constexpr int kExitTooLarge = 3;
constexpr int kExitVerifyFailed = 4;
constexpr int kExitDefect = 70;

barter::BarterInstance read_instance(const std::string& path) {
  barter::Json doc;
  if (path.empty() || path == "-") {
    doc = barter::parse_json_stream(std::cin, "stdin");
  } else {
    std::ifstream in(path);
    if (!in) throw barter::ValidationError("cannot open instance file: " + path);
    doc = barter::parse_json_stream(in, path);
  }
  barter::BarterInstance inst = barter::instance_from_json(doc);
  barter::validate_instance(inst);
  return inst;
}

void apply_weight_mode(barter::BarterInstance& inst, const std::string& mode) {
  if (mode == "doc") return;
  if (mode == "item_value") {
    inst.weights = barter::TransferWeight{};
    return;
  }
  if (mode == "unit") {
    inst.weights.use_item_value = false;
    inst.weights.explicit_weights.clear();
    for (const auto& giver : inst.agents)
      for (const auto& [item, cap] : giver.have)
        for (const auto& receiver : inst.agents)
          if (receiver.id != giver.id && receiver.wish.count(item))
            inst.weights.explicit_weights[{giver.id, receiver.id, item}] = 1;
    return;
  }
  throw barter::ValidationError("unknown weights mode: " + mode);
}

int cmd_solve(const std::string& path, std::uint64_t seed, const std::string& trace_path,
              const std::string& weights_mode, bool fairness, const std::string& dump_path) {
  barter::BarterInstance inst = read_instance(path);
  apply_weight_mode(inst, weights_mode);
  barter::validate_instance(inst);
  barter::VbmGraph graph = barter::build_vbm(inst);
  const std::vector<barter::FairnessGroup>* groups = fairness ? &inst.fairness : nullptr;
  barter::LpProblem problem = barter::build_lp(graph, groups);
  if (!dump_path.empty()) {
    std::ofstream dump(dump_path);
    if (!dump) throw barter::ValidationError("cannot open dump file: " + dump_path);
    dump << barter::dump_lp(problem);
  }
  barter::LpSolution lp = barter::solve_lp(problem);
  if (lp.status == barter::LpStatus::infeasible) {
    std::cerr << "fairness floors cannot be met; relax them or rerun with --fairness off\n";
    return kExitFairnessInfeasible;
  }
  barter::PipelineResult result =
      barter::round_solution(inst, graph, lp, seed, barter::EngineKind::balanced, true);
  if (!trace_path.empty()) {
    std::ofstream out(trace_path);
    if (!out) throw barter::ValidationError("cannot open trace file: " + trace_path);
    barter::trace_to_jsonl(result.trace, result.unit_graph, out);
  }
  std::cout << barter::allocation_to_json(inst, result.allocation, result.report, seed,
                                          lp.objective)
                   .dump(2)
            << "\n";
  return kExitOk;
}

int cmd_oracle(const std::string& path, int edge_limit) {
  barter::BarterInstance inst = read_instance(path);
  barter::OracleResult res = barter::brute_force(inst, edge_limit);
  std::cout << barter::oracle_to_json(res).dump(2) << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& path, long trials, std::uint64_t seed,
               const std::string& engine) {
  barter::BarterInstance inst = read_instance(path);
  barter::VerifyOptions opt;
  opt.trials = trials;
  opt.seed = seed;
  opt.engine = engine == "plain" ? barter::EngineKind::plain : barter::EngineKind::balanced;
  barter::VerificationReport report = barter::run_verification(inst, opt);
  std::cerr << barter::render_report_table(report);
  std::cout << barter::report_to_json(report).dump(2) << "\n";
  return report.passed() ? kExitOk : kExitVerifyFailed;
}

int cmd_gen(const std::string& family, const std::string& set_csv, int n, int agents, int items,
            const std::string& density, long long value_min, long long value_max, int cap_min,
            int cap_max, std::uint64_t seed) {
  barter::BarterInstance inst;
  if (family == "partition") {
    std::vector<long long> values;
    std::stringstream ss(set_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      values.push_back(std::stoll(tok));
    }
    inst = barter::partition_to_bsv(values);
  } else if (family == "gap") {
    inst = barter::gap_family(n);
  } else if (family == "worstcase") {
    inst = barter::gkps_worst_case();
  } else if (family == "random") {
    barter::RandomInstanceOptions opt;
    opt.agents = agents;
    opt.items = items;
    auto d = barter::try_parse_rational(density);
    if (!d) throw barter::ValidationError("unparseable density: " + density);
    opt.density = *d;
    opt.value_min = value_min;
    opt.value_max = value_max;
    opt.cap_min = cap_min;
    opt.cap_max = cap_max;
    opt.seed = seed;
    inst = barter::random_instance(opt);
  } else {
    throw barter::ValidationError("unknown family: " + family);
  }
  barter::validate_instance(inst);
  std::cout << barter::instance_to_json(inst).dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"barter exchange clearing: LP relaxation + balance-protecting dependent rounding"};
  app.require_subcommand(1);

  std::string instance_path = "-";
  std::uint64_t seed = 1;
  std::string trace_path, dump_path;
  std::string weights_mode = "doc";
  bool fairness_off = false;

  CLI::App* solve = app.add_subcommand("solve", "solve an instance and emit an allocation");
  solve->add_option("instance", instance_path, "instance file ('-' for stdin)");
  solve->add_option("--seed", seed, "rounding seed");
  solve->add_option("--trace", trace_path, "write a JSONL rounding trace");
  solve->add_option("--weights", weights_mode, "doc | item_value | unit")
      ->check(CLI::IsMember({"doc", "item_value", "unit"}));
  solve->add_flag("--no-fairness", fairness_off, "ignore fairness groups");
  solve->add_option("--dump-lp", dump_path, "write the LP in text form");

  std::string oracle_path = "-";
  int edge_limit = 24;
  CLI::App* oracle = app.add_subcommand("oracle", "exhaustive integral solver (small instances)");
  oracle->add_option("instance", oracle_path, "instance file ('-' for stdin)");
  oracle->add_option("--edge-limit", edge_limit, "max edges to enumerate");

  std::string verify_path = "-";
  long trials = 10000;
  std::uint64_t verify_seed = 1;
  std::string engine = "balanced";
  CLI::App* verify = app.add_subcommand("verify", "Monte Carlo check of the rounding guarantees");
  verify->add_option("instance", verify_path, "instance file ('-' for stdin)");
  verify->add_option("--trials", trials, "trial count");
  verify->add_option("--seed", verify_seed, "batch seed");
  verify->add_option("--engine", engine, "balanced | plain")
      ->check(CLI::IsMember({"balanced", "plain"}));

  std::string family, set_csv = "", density = "1/2";
  int n = 2, agents = 3, items = 4, cap_min = 1, cap_max = 1;
  long long value_min = 1, value_max = 10;
  std::uint64_t gen_seed = 1;
  CLI::App* gen = app.add_subcommand("gen", "emit an instance from a named family");
  gen->add_option("family", family, "partition | gap | worstcase | random")->required();
  gen->add_option("--set", set_csv, "partition: comma-separated positive integers");
  gen->add_option("--n", n, "gap: the 1/n second-item value");
  gen->add_option("--agents", agents, "random: agent count");
  gen->add_option("--items", items, "random: item count");
  gen->add_option("--density", density, "random: have/wish inclusion probability");
  gen->add_option("--value-min", value_min, "random: min item value");
  gen->add_option("--value-max", value_max, "random: max item value");
  gen->add_option("--cap-min", cap_min, "random: min capacity");
  gen->add_option("--cap-max", cap_max, "random: max capacity");
  gen->add_option("--seed", gen_seed, "random: generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed())
      return cmd_solve(instance_path, seed, trace_path, weights_mode, !fairness_off, dump_path);
    if (oracle->parsed()) return cmd_oracle(oracle_path, edge_limit);
    if (verify->parsed()) return cmd_verify(verify_path, trials, verify_seed, engine);
    if (gen->parsed())
      return cmd_gen(family, set_csv, n, agents, items, density, value_min, value_max, cap_min,
                     cap_max, gen_seed);
  } catch (const barter::TooLargeError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitTooLarge;
  } catch (const barter::DefectError& err) {
    std::cerr << "internal defect: " << err.what() << "\n";
    return kExitDefect;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitBadInput;
  } catch (const std::runtime_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitBadInput;
  }
  return kExitBadInput;
}
