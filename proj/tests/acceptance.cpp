// Runs every acceptance criterion and prints one line per criterion.

#include <cstdlib>
#include <iostream>

#include "memtest/verify.hpp"

int main(int argc, char** argv) {
  memtest::VerifyOptions options;
  if (argc > 1) options.seed = std::strtoull(argv[1], nullptr, 10);
  bool ok = true;
  for (const auto& r : memtest::verify_all(options)) {
    std::cout << memtest::format_result(r) << std::endl;
    ok = ok && r.passed;
  }
  std::cout << (ok ? "ALL PASS" : "SOME CRITERIA FAILED") << std::endl;
  return ok ? 0 : 1;
}
