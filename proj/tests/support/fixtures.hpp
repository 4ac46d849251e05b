#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "gridsite/error.hpp"
#include "gridsite/feeder.hpp"
#include "gridsite/instance.hpp"

namespace fixture {

inline std::filesystem::path path(const std::string& name) { return std::filesystem::path(GRIDSITE_TEST_DATA) / name; }

inline nlohmann::json json_of(const std::string& name) {
  std::ifstream in(path(name));
  return nlohmann::json::parse(in);
}

inline gridsite::FeederModel feeder(const std::string& name) { return gridsite::load_feeder(path(name)); }

inline gridsite::SitingInstance instance(const std::string& name) { return gridsite::load_instance(path(name)); }

// Loaded instance with the siting model built over its prepared candidates; `inst` owns the feeder
// the model points to, so it lives alongside.
struct Posed {
  gridsite::SitingInstance inst;
  gridsite::PreparedInstance prep;
  gridsite::MinlpProblem minlp;
};

inline std::unique_ptr<Posed> pose(gridsite::SitingInstance inst) {
  auto p = std::make_unique<Posed>();
  p->inst = std::move(inst);
  p->prep = gridsite::prepare_instance(p->inst);
  p->minlp = gridsite::instance_problem(p->inst, p->prep);
  return p;
}

// Kind of the gridsite::Error thrown by f, or nothing when f returns normally.
template <typename F>
std::optional<gridsite::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const gridsite::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace fixture
