// Writes the built-in benchmark problems to JSON files and reports the
// validator's findings for each, exiting nonzero if any problem has errors.

#include <filesystem>
#include <iostream>

#include "hocp/benchmarks.hpp"
#include "hocp/json_io.hpp"

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "problems";
  std::filesystem::create_directories(dir);
  bool ok = true;
  for (const auto& p : hocp::benchmarks::all()) {
    const std::string path = dir + "/" + p.name + ".json";
    hocp::save_problem(p, path);
    const auto reloaded = hocp::problem_from_json(
        hocp::json::parse(std::ifstream(path)));
    const auto ds = hocp::validate(reloaded);
    std::cout << path << "\n";
    for (const auto& d : ds) {
      std::cout << "  " << (d.severity == hocp::Severity::Error ? "error" : "warning") << " ["
                << d.code << "] " << d.message << "\n";
      if (d.severity == hocp::Severity::Error) ok = false;
    }
  }
  return ok ? 0 : 1;
}
