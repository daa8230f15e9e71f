#pragma once

#include <string>
#include <vector>

#include "difftad/checkpoint.hpp"
#include "difftad/config.hpp"
#include "difftad/network.hpp"

namespace difftad {

// Command-line surface: make-synth, train, sample, eval, ablate. Returns the
// process exit status; failures print a one-line cause to stderr and remove
// partial outputs.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args without argv[0]

// Rebuilds one DenoiserModel per modality stored in a checkpoint.
std::vector<std::pair<std::string, DenoiserModel>> models_from_checkpoint(
    const Checkpoint& ckpt, const RunConfig& cfg);

}  // namespace difftad
