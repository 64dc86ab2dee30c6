#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace invnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Options shared by every subcommand.
struct RunConfig {
  std::string command;
  std::string variant = "hybrid";
  int inv_layers = 3;
  double lr = 1e-5;
  int epochs = 30;
  int batch = 32;
  std::uint64_t seed = 0;
  std::vector<std::string> data;
  int synthetic_per_class = 0;  // > 0 generates data instead of reading --data
  std::string out_dir;
  std::string augment = "on";  // on | off | paper-compat
  std::string model_path;
  std::string split = "test";
  std::vector<int> layers;
  int sample = 0;
  int grid = 6;
  bool include_inv_only = false;
  std::string dataset_name;
};

/// Runs one subcommand: summary | train | eval | ablate | synth | analyze | visualize.
/// Human-readable output goes to `out`, diagnostics to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace invnet::cli
