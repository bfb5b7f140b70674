#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

// Registry of finite-difference checks over every differentiable op and loss.
namespace lobg::gradsuite {

struct Case {
  std::string module;  // core, model, stp, hld, bench
  std::string name;
  // Worst relative error for one random draw.
  std::function<double(std::uint64_t seed)> run;
};

const std::vector<Case>& cases();
std::vector<std::string> modules();

struct Result {
  std::string module;
  std::string name;
  double worst = 0.0;
  bool passed = false;
};

// scope is "all" or a module name; unknown scopes throw InvalidParameter.
std::vector<Result> run(const std::string& scope, std::size_t seeds = 10, double tolerance = 1e-4);

}  // namespace lobg::gradsuite
