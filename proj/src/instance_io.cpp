#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "retrobranch/errors.hpp"
#include "retrobranch/milp.hpp"

namespace retrobranch {

using nlohmann::json;

namespace {

json bound_to_json(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

double bound_from_json(const json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw ParseError("field '" + field + "': expected number, \"inf\" or \"-inf\"");
}

const json& require(const json& obj, const char* key, const std::string& where = "") {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ParseError("missing field '" + std::string(key) + "'" + (where.empty() ? "" : " in " + where));
  return *it;
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

std::string encode(const MilpInstance& inst) {
  json j;
  j["name"] = inst.name;
  j["num_vars"] = inst.num_vars();
  j["num_cons"] = inst.num_cons();
  j["objective"] = inst.objective;
  json rows = json::array();
  for (const Row& row : inst.rows) {
    json coefs = json::array();
    for (const Coef& c : row.coefs) coefs.push_back(json::array({c.var, c.value}));
    const char* sense = row.sense == Sense::le ? "<=" : row.sense == Sense::ge ? ">=" : "=";
    rows.push_back({{"coefs", std::move(coefs)}, {"rhs", row.rhs}, {"sense", sense}});
  }
  j["rows"] = std::move(rows);
  json lb = json::array(), ub = json::array();
  for (double v : inst.lb) lb.push_back(bound_to_json(v));
  for (double v : inst.ub) ub.push_back(bound_to_json(v));
  j["lb"] = std::move(lb);
  j["ub"] = std::move(ub);
  json integer = json::array();
  for (bool b : inst.is_integer) integer.push_back(b);
  j["is_integer"] = std::move(integer);
  return j.dump() + "\n";
}

MilpInstance decode(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("instance JSON line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("instance JSON must be an object");

  MilpInstance inst;
  try {
    inst.name = require(j, "name").get<std::string>();
    const int n = require(j, "num_vars").get<int>();
    const int m = require(j, "num_cons").get<int>();
    inst.objective = require(j, "objective").get<std::vector<double>>();
    if (static_cast<int>(inst.objective.size()) != n)
      throw ParseError("field 'objective': length " + std::to_string(inst.objective.size()) +
                       " != num_vars " + std::to_string(n));

    const json& rows = require(j, "rows");
    if (!rows.is_array() || static_cast<int>(rows.size()) != m)
      throw ParseError("field 'rows': expected array of length num_cons " + std::to_string(m));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string where = "rows[" + std::to_string(i) + "]";
      Row row;
      for (const json& c : require(rows[i], "coefs", where)) {
        if (!c.is_array() || c.size() != 2) throw ParseError(where + ".coefs: expected [index, value] pairs");
        row.coefs.push_back({c[0].get<int>(), c[1].get<double>()});
      }
      row.rhs = require(rows[i], "rhs", where).get<double>();
      const auto sense = require(rows[i], "sense", where).get<std::string>();
      if (sense == "<=") row.sense = Sense::le;
      else if (sense == ">=") row.sense = Sense::ge;
      else if (sense == "=") row.sense = Sense::eq;
      else throw ParseError(where + ".sense: unknown sense '" + sense + "'");
      inst.rows.push_back(std::move(row));
    }

    for (const json& v : require(j, "lb")) inst.lb.push_back(bound_from_json(v, "lb"));
    for (const json& v : require(j, "ub")) inst.ub.push_back(bound_from_json(v, "ub"));
    for (const json& v : require(j, "is_integer")) inst.is_integer.push_back(v.get<bool>());
    if (static_cast<int>(inst.lb.size()) != n || static_cast<int>(inst.ub.size()) != n ||
        static_cast<int>(inst.is_integer.size()) != n)
      throw ParseError("fields 'lb'/'ub'/'is_integer' must have length num_vars");
  } catch (const json::exception& e) {
    throw ParseError(std::string("instance JSON type error: ") + e.what());
  }
  return inst;
}

MilpInstance read_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open instance file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return decode(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_instance(const MilpInstance& inst, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write instance file '" + path + "'");
  out << encode(inst);
}

}  // namespace retrobranch
