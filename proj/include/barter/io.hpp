#pragma once

#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "barter/instance.hpp"
#include "barter/rounding.hpp"
#include "barter/verify.hpp"

namespace barter {

using Json = nlohmann::ordered_json;

namespace detail {

// Values travel as strings ("3", "1/2", "0.25") or JSON integers. Binary
// floats are rejected: they cannot round-trip exactly.
inline Rat rational_field(const Json& j, const std::string& where) {
  if (j.is_number_integer()) return Rat(BigInt(j.get<long long>()));
  if (j.is_string()) {
    auto parsed = try_parse_rational(j.get<std::string>());
    if (!parsed) throw ValidationError("unparseable rational in " + where + ": " + j.dump());
    return *parsed;
  }
  if (j.is_number_float())
    throw ValidationError("binary float in " + where +
                          "; encode values as strings like \"1/2\" or \"0.5\"");
  throw ValidationError("expected a rational value in " + where);
}

inline int count_field(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ValidationError("expected an integer in " + where);
  long long v = j.get<long long>();
  if (v < 1 || v > 1'000'000'000) throw ValidationError("count out of range in " + where);
  return int(v);
}

}  // namespace detail

inline Json instance_to_json(const BarterInstance& inst) {
  Json doc;
  doc["items"] = Json::array();
  for (const auto& it : inst.items)
    doc["items"].push_back({{"id", it.id}, {"value", format_rational(it.value)}});
  doc["agents"] = Json::array();
  for (const auto& ag : inst.agents) {
    Json a;
    a["id"] = ag.id;
    a["have"] = Json::object();
    for (const auto& [item, cap] : ag.have) a["have"][item] = cap;
    a["wish"] = Json::object();
    for (const auto& [item, cap] : ag.wish) a["wish"][item] = cap;
    doc["agents"].push_back(a);
  }
  if (inst.weights.use_item_value) {
    doc["weights"] = "item_value";
  } else {
    Json list = Json::array();
    for (const auto& [key, w] : inst.weights.explicit_weights) {
      const auto& [giver, receiver, item] = key;
      list.push_back({{"giver", giver},
                      {"receiver", receiver},
                      {"item", item},
                      {"w", format_rational(w)}});
    }
    doc["weights"] = list;
  }
  if (!inst.fairness.empty()) {
    Json groups = Json::array();
    for (const auto& g : inst.fairness)
      groups.push_back({{"group", g.agents}, {"floor", format_rational(g.floor)}});
    doc["fairness"] = groups;
  }
  return doc;
}

inline BarterInstance instance_from_json(const Json& doc) {
  BarterInstance inst;
  if (!doc.is_object() || !doc.contains("items") || !doc.contains("agents"))
    throw ValidationError("instance document needs 'items' and 'agents'");
  for (const auto& it : doc.at("items")) {
    if (!it.contains("id")) throw ValidationError("item without id");
    inst.items.push_back(
        ItemSpec{it.at("id").get<std::string>(), detail::rational_field(it.at("value"), "items.value")});
  }
  for (const auto& a : doc.at("agents")) {
    if (!a.contains("id")) throw ValidationError("agent without id");
    AgentSpec ag;
    ag.id = a.at("id").get<std::string>();
    if (a.contains("have"))
      for (auto it = a.at("have").begin(); it != a.at("have").end(); ++it)
        ag.have[it.key()] = detail::count_field(it.value(), "agents.have");
    if (a.contains("wish"))
      for (auto it = a.at("wish").begin(); it != a.at("wish").end(); ++it)
        ag.wish[it.key()] = detail::count_field(it.value(), "agents.wish");
    inst.agents.push_back(std::move(ag));
  }
  if (doc.contains("weights")) {
    const Json& w = doc.at("weights");
    if (w.is_string()) {
      if (w.get<std::string>() != "item_value")
        throw ValidationError("unknown weights mode: " + w.get<std::string>());
      inst.weights.use_item_value = true;
    } else if (w.is_array()) {
      inst.weights.use_item_value = false;
      for (const auto& entry : w) {
        TransferKey key{entry.at("giver").get<std::string>(),
                        entry.at("receiver").get<std::string>(),
                        entry.at("item").get<std::string>()};
        inst.weights.explicit_weights[key] = detail::rational_field(entry.at("w"), "weights.w");
      }
    } else {
      throw ValidationError("weights must be \"item_value\" or a list of entries");
    }
  }
  if (doc.contains("fairness")) {
    for (const auto& entry : doc.at("fairness")) {
      FairnessGroup group;
      for (const auto& id : entry.at("group")) group.agents.push_back(id.get<std::string>());
      group.floor = detail::rational_field(entry.at("floor"), "fairness.floor");
      inst.fairness.push_back(std::move(group));
    }
  }
  return inst;
}

// Output of a solve run: sorted transfers, exact per-agent report, the seed
// and the LP objective. Byte-stable for fixed inputs and flags.
inline Json allocation_to_json(const BarterInstance& inst, const Allocation& alloc,
                               const NetValueReport& report, std::uint64_t seed,
                               const Rat& lp_objective) {
  Json doc;
  doc["transfers"] = Json::array();
  for (const auto& t : alloc.transfers)
    doc["transfers"].push_back(
        {{"giver", t.giver}, {"receiver", t.receiver}, {"item", t.item}, {"count", t.count}});
  Json agents = Json::object();
  for (const auto& ag : inst.agents) {
    const AgentNetValue& n = report.per_agent.at(ag.id);
    agents[ag.id] = {{"given", format_rational(n.given)},
                     {"received", format_rational(n.received)},
                     {"D", format_rational(n.net)}};
  }
  doc["report"] = {{"per_agent", agents}, {"utility", format_rational(report.utility)}};
  doc["seed"] = seed;
  doc["lp_objective"] = format_rational(lp_objective);
  return doc;
}

inline Json oracle_to_json(const OracleResult& res) {
  Json doc;
  doc["best_utility"] = res.best_utility ? Json(format_rational(*res.best_utility)) : Json();
  if (res.best_allocation) {
    Json transfers = Json::array();
    for (const auto& t : res.best_allocation->transfers)
      transfers.push_back(
          {{"giver", t.giver}, {"receiver", t.receiver}, {"item", t.item}, {"count", t.count}});
    doc["best_allocation"] = transfers;
  } else {
    doc["best_allocation"] = Json();
  }
  doc["has_nonempty_balanced"] = res.has_nonempty_balanced;
  doc["enumerated_count"] = res.enumerated_count;
  return doc;
}

// One JSON object per rounding step: enough to audit and replay a run.
inline void trace_to_jsonl(const Trace& trace, const VbmGraph& graph, std::ostream& out) {
  for (const TraceStep& s : trace.steps) {
    Json line;
    line["step"] = s.index;
    line["kind"] = s.kind;
    Json endpoints = Json::array();
    for (int v : s.endpoints) endpoints.push_back(graph.vertices[v].name());
    line["endpoints"] = endpoints;
    line["alpha"] = format_rational(s.alpha);
    line["beta"] = format_rational(s.beta);
    line["p_first"] = format_rational(s.p_first);
    line["branch"] = s.took_first ? "A" : "B";
    line["floating_edges"] = s.floating_edges_after;
    line["floating_vertices"] = s.floating_vertices_after;
    out << line.dump() << "\n";
  }
}

inline Json report_to_json(const VerificationReport& report) {
  Json doc;
  doc["mode"] = report.exact_mode ? "exact" : "monte_carlo";
  doc["trials"] = report.trials;
  doc["seed"] = report.seed;
  Json sections = Json::array();
  for (const auto& s : report.sections) {
    Json sec;
    sec["name"] = s.name;
    sec["status"] = s.status == CheckStatus::pass ? "PASS"
                    : s.status == CheckStatus::warn ? "WARN"
                                                    : "FAIL";
    sec["checked"] = s.checked;
    sec["failures"] = s.failures;
    sec["notes"] = s.notes;
    sections.push_back(sec);
  }
  doc["sections"] = sections;
  doc["pass"] = report.passed();
  return doc;
}

inline Json parse_json_stream(std::istream& in, const std::string& what) {
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& err) {
    throw ValidationError("invalid JSON in " + what + ": " + err.what());
  }
}

}  // namespace barter
