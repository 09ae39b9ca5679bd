#pragma once

#include <ostream>

namespace helmsman {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitBackend = 2;

// Entry point of the `helmsman` command line:
//   helmsman [--config F] [--trace F] [--trace-full] [--mock-script F] <command>
//     ask        one question over a clip
//     eval       evaluate a dataset split and print the report tables
//     kb ingest  chunk and embed a corpus directory into a knowledge base file
//     kb search  top-k rule chunks for a query
//     stats      dataset statistics
//     serve      HTTP API
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace helmsman
