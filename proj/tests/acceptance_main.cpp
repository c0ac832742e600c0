#include <cstdlib>
#include <iostream>
#include <string>

#include "hflow/acceptance.hpp"

// Usage: acceptance [criterion ...]. With no arguments every criterion runs.
// Exit status is 0 iff every selected criterion passes.
int main(int argc, char** argv) {
  using namespace hflow::acceptance;
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
  if (ids.empty())
    for (const Criterion& c : criteria()) ids.push_back(c.id);
  bool all = true;
  for (int id : ids) {
    const Verdict v = run(id);
    std::cout << line(v) << std::endl;
    all = all && v.pass;
  }
  return all ? EXIT_SUCCESS : EXIT_FAILURE;
}
