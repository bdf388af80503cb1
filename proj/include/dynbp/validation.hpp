#pragma once
#include <string>
#include <vector>

namespace dynbp {

struct ValidationIssue {
  std::string where;  // "factor 3", "region 7", ...
  std::string what;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }

  void add(std::string where, std::string what) {
    issues.push_back({std::move(where), std::move(what)});
  }

  std::string to_string() const {
    std::string out;
    for (const auto& i : issues) {
      out += i.where;
      out += ": ";
      out += i.what;
      out += '\n';
    }
    return out;
  }
};

}  // namespace dynbp
