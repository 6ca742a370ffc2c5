#include "invrec/scm_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace invrec::scm {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::size_t lookup(const DiscreteScm& m, const std::string& id, const char* what) {
  for (std::size_t i = 0; i < m.variables.size(); ++i) {
    if (m.variables[i].id == id) return i;
  }
  throw ValidationError(std::string(what) + " refers to undeclared variable '" + id + "'");
}

std::vector<double> flatten_rows(const json& rows) {
  std::vector<double> out;
  for (const auto& row : rows) {
    for (const auto& v : row) out.push_back(v.get<double>());
  }
  return out;
}

ordered_json unflatten(const std::vector<double>& tab, int width) {
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < tab.size(); i += static_cast<std::size_t>(width)) {
    ordered_json row = ordered_json::array();
    for (int k = 0; k < width && i + k < tab.size(); ++k) row.push_back(tab[i + k]);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

DiscreteScm parse_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("model file is not valid JSON: ") + e.what());
  }
  DiscreteScm m;
  try {
    for (const auto& v : doc.at("variables")) m.variables.push_back({v.at("id").get<std::string>(), v.value("arity", 2)});
    if (doc.contains("environment")) {
      const auto& e = doc["environment"];
      m.environment = {e.value("id", std::string("e")), e.value("arity", 2)};
    }
    m.graph_tag = graph_tag_from_string(doc.value("graph_tag", std::string("None")));
    m.class_tag = class_tag_from_string(doc.value("class_tag", std::string("AntiCausal")));
    for (const auto& f : doc.at("factors")) {
      FactorTable t;
      t.child = lookup(m, f.at("child").get<std::string>(), "factor");
      for (const auto& p : f.value("parents", json::array())) t.parents.push_back(lookup(m, p.get<std::string>(), "factor parent"));
      if (f.contains("per_environment")) {
        t.per_environment = true;
        for (const auto& env_rows : f["per_environment"]) t.tables.push_back(flatten_rows(env_rows));
      } else {
        t.tables.push_back(flatten_rows(f.at("rows")));
      }
      m.factors.push_back(std::move(t));
    }
    if (doc.contains("selection") && !doc["selection"].is_null()) {
      const auto& s = doc["selection"];
      SelectionSpec sel;
      sel.label = lookup(m, s.value("label", std::string("y")), "selection");
      sel.weights = s.at("weights").get<std::vector<std::vector<double>>>();
      m.selection = sel;
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model document: ") + e.what());
  }
  return m;
}

DiscreteScm load_model(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_model(ss.str());
}

std::string dump_model(const DiscreteScm& m) {
  ordered_json doc;
  ordered_json vars = ordered_json::array();
  for (const auto& v : m.variables) vars.push_back({{"id", v.id}, {"arity", v.arity}});
  doc["variables"] = vars;
  doc["environment"] = {{"id", m.environment.id}, {"arity", m.environment.arity}};
  doc["graph_tag"] = to_string(m.graph_tag);
  doc["class_tag"] = to_string(m.class_tag);
  ordered_json factors = ordered_json::array();
  for (const auto& f : m.factors) {
    ordered_json jf;
    const int width = f.child < m.variables.size() ? m.variables[f.child].arity : 2;
    jf["child"] = f.child < m.variables.size() ? m.variables[f.child].id : std::to_string(f.child);
    ordered_json parents = ordered_json::array();
    for (std::size_t p : f.parents) parents.push_back(p < m.variables.size() ? m.variables[p].id : std::to_string(p));
    jf["parents"] = parents;
    if (f.per_environment) {
      ordered_json per = ordered_json::array();
      for (const auto& t : f.tables) per.push_back(unflatten(t, width));
      jf["per_environment"] = per;
    } else {
      jf["rows"] = unflatten(f.tables.empty() ? std::vector<double>{} : f.tables[0], width);
    }
    factors.push_back(jf);
  }
  doc["factors"] = factors;
  if (m.selection) {
    doc["selection"] = {{"label", m.variables.at(m.selection->label).id}, {"weights", m.selection->weights}};
  }
  return doc.dump(2) + "\n";
}

void save_model(const std::filesystem::path& path, const DiscreteScm& scm) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << dump_model(scm);
}

}  // namespace invrec::scm
