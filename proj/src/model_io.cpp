#include "dynbp/model_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dynbp {

namespace {

using nlohmann::json;

std::string format_17g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void emit_canonical(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::null:
      out += "null";
      break;
    case json::value_t::boolean:
      out += j.get<bool>() ? "true" : "false";
      break;
    case json::value_t::number_integer:
      out += std::to_string(j.get<std::int64_t>());
      break;
    case json::value_t::number_unsigned:
      out += std::to_string(j.get<std::uint64_t>());
      break;
    case json::value_t::number_float:
      out += format_17g(j.get<double>());
      break;
    case json::value_t::string:
      out += json(j.get<std::string>()).dump();
      break;
    case json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& item : j) {
        if (!first) out += ',';
        first = false;
        emit_canonical(item, out);
      }
      out += ']';
      break;
    }
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += json(it.key()).dump();
        out += ':';
        emit_canonical(it.value(), out);
      }
      out += '}';
      break;
    }
    default:
      throw std::runtime_error("unsupported value in document");
  }
}

std::vector<int> int_list(const json& j, const char* what) {
  if (!j.is_array()) throw std::runtime_error(std::string(what) + " must be a list");
  std::vector<int> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number_integer() && !x.is_number_unsigned())
      throw std::runtime_error(std::string(what) + " must hold integers");
    out.push_back(x.get<int>());
  }
  return out;
}

std::vector<double> number_list(const json& j, const char* what) {
  if (!j.is_array()) throw std::runtime_error(std::string(what) + " must be a list");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw std::runtime_error(std::string(what) + " must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

int int_field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || (!it->is_number_integer() && !it->is_number_unsigned()))
    throw std::runtime_error(std::string("missing integer field \"") + key + "\"");
  return it->get<int>();
}

}  // namespace

LoadedModel parse_model_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("model document must be an object");

  LoadedModel m;
  const auto vars = j.find("variables");
  if (vars == j.end() || !vars->is_array())
    throw std::runtime_error("model needs a \"variables\" list");
  for (const auto& v : *vars) {
    if (!v.is_object()) throw std::runtime_error("each variable must be an object");
    m.variables.push_back({int_field(v, "id"), int_field(v, "cardinality")});
  }

  if (const auto it = j.find("factors"); it != j.end()) {
    if (!it->is_array()) throw std::runtime_error("\"factors\" must be a list");
    for (const auto& f : *it) {
      if (!f.is_object()) throw std::runtime_error("each factor must be an object");
      FactorTable t;
      t.id = int_field(f, "id");
      t.scope = int_list(f.value("scope", json::array()), "factor scope");
      t.values = number_list(f.value("table", json::array()), "factor table");
      m.factors.push_back(std::move(t));
    }
  }

  if (const auto it = j.find("temporal_factors"); it != j.end()) {
    if (!it->is_array()) throw std::runtime_error("\"temporal_factors\" must be a list");
    for (const auto& f : *it) {
      if (!f.is_object())
        throw std::runtime_error("each temporal factor must be an object");
      TemporalFactor t;
      t.id = int_field(f, "id");
      t.past_scope = int_list(f.value("past_scope", json::array()), "past scope");
      t.future_scope = int_list(f.value("future_scope", json::array()), "future scope");
      t.values = number_list(f.value("table", json::array()), "temporal table");
      m.temporal_factors.push_back(std::move(t));
    }
  }

  if (const auto it = j.find("regions"); it != j.end()) {
    if (!it->is_array()) throw std::runtime_error("\"regions\" must be a list");
    RegionGraph rg;
    for (const auto& r : *it) {
      if (!r.is_object()) throw std::runtime_error("each region must be an object");
      Region reg;
      reg.id = int_field(r, "id");
      reg.variables = int_list(r.value("variables", json::array()), "region variables");
      reg.factors = int_list(r.value("factors", json::array()), "region factors");
      for (int p : int_list(r.value("parents", json::array()), "region parents"))
        rg.edges.emplace_back(p, reg.id);
      rg.regions.push_back(std::move(reg));
    }
    std::sort(rg.edges.begin(), rg.edges.end());
    rg.edges.erase(std::unique(rg.edges.begin(), rg.edges.end()), rg.edges.end());
    m.regions = std::move(rg);
  }
  return m;
}

LoadedModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model_json(buf.str());
}

std::string model_to_canonical_json(const LoadedModel& m) {
  json j = json::object();
  auto& vars = j["variables"] = json::array();
  for (const auto& v : m.variables)
    vars.push_back(json{{"id", v.id}, {"cardinality", v.cardinality}});

  if (!m.factors.empty()) {
    auto& factors = j["factors"] = json::array();
    for (const auto& f : m.factors) {
      json table = json::array();
      for (double x : f.values) table.push_back(x);
      factors.push_back(json{{"id", f.id}, {"scope", f.scope}, {"table", std::move(table)}});
    }
  }
  if (!m.temporal_factors.empty()) {
    auto& factors = j["temporal_factors"] = json::array();
    for (const auto& f : m.temporal_factors) {
      json table = json::array();
      for (double x : f.values) table.push_back(x);
      factors.push_back(json{{"id", f.id},
                             {"past_scope", f.past_scope},
                             {"future_scope", f.future_scope},
                             {"table", std::move(table)}});
    }
  }
  if (m.regions) {
    auto& regions = j["regions"] = json::array();
    for (const auto& r : m.regions->regions) {
      json parents = json::array();
      for (const auto& [p, c] : m.regions->edges)
        if (c == r.id) parents.push_back(p);
      regions.push_back(json{{"id", r.id},
                             {"variables", r.variables},
                             {"factors", r.factors},
                             {"parents", std::move(parents)}});
    }
  }
  return canonical_json_text(j);
}

void save_model_file(const std::string& path, const LoadedModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string text = model_to_canonical_json(m);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.put('\n');
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string canonical_json_text(const nlohmann::json& j) {
  std::string out;
  emit_canonical(j, out);
  return out;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string text = canonical_json_text(j);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.put('\n');
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace dynbp
