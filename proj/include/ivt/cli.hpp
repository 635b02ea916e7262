#ifndef IVT_CLI_HPP
#define IVT_CLI_HPP

#include "ivt/validity.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ivt {

struct CliConfig {
  std::string command;
  std::string input;
  std::string output;
  int depth = 6;
  std::array<int, 3> bins{8, 8, 8};  // y, x, z
  std::size_t n = 10000;
  std::size_t reps = 200;
  std::uint64_t seed = 7;
  std::vector<std::string> tests;  // empty: every applicable test
  ContinuityParams params;
  double K = 1.0;
  double tol = 0.0;
  std::optional<double> z_star;
  std::string format;  // empty: json, csv for simulate
  bool unrestricted = false;
  unsigned threads = 0;
};

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitRefusal = 2;

int cmd_replicate(const CliConfig& config, std::ostream& out, std::ostream& err);
int cmd_feasibility(const CliConfig& config, std::ostream& out, std::ostream& err);
int cmd_test(const CliConfig& config, std::ostream& out, std::ostream& err);
int cmd_simulate(const CliConfig& config, std::ostream& out, std::ostream& err);

// Parses arguments (argv[0] is the program name), applies IVT_SEED and runs
// the selected command.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ivt

#endif  // IVT_CLI_HPP
