#pragma once

// `curlm` command-line front end. Subcommands: prepare-corpus,
// train-tokenizer, train, evaluate, significance, stats.

#include <iosfwd>
#include <string>
#include <vector>

namespace curlm::cli {

/// Exit codes: 0 success, 1 runtime error (one line `error: <code>: <message>`
/// on `err`), 2 usage error (message plus usage text on `err`).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace curlm::cli
