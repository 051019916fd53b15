#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "emorette/core.hpp"

namespace emorette::detail {

using nlohmann::json;

inline std::string dump(const json& j, int indent = -1) {
  return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

inline json value_json(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  return std::get<double>(v);
}

inline Value value_from(const json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw std::invalid_argument("variable value must be a string, boolean or number");
}

inline json vars_json(const VariableTable& t) {
  json j = json::object();
  for (const auto& [k, v] : t.entries()) j[k] = value_json(v);
  return j;
}

inline VariableTable vars_from(const json& j) {
  VariableTable t;
  for (const auto& [k, v] : j.items()) t.set(k, value_from(v));
  return t;
}

inline json dist_json(const LabelDistribution& d) {
  json j = json::object();
  for (const auto& [k, v] : d.probs()) j[k] = v;
  return j;
}

inline LabelDistribution dist_from(const json& j) {
  std::map<std::string, double> m;
  for (const auto& [k, v] : j.items()) m[k] = v.get<double>();
  return LabelDistribution(std::move(m));
}

inline json stack_json(const std::vector<StackEntry>& s) {
  json j = json::array();
  for (const auto& e : s) j.push_back({{"state", e.state_id}, {"life", e.life}});
  return j;
}

inline std::vector<StackEntry> stack_from(const json& j) {
  std::vector<StackEntry> out;
  for (const auto& e : j) out.push_back({e.at("state").get<std::string>(), e.at("life").get<int>()});
  return out;
}

}  // namespace emorette::detail
