#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "varcon/encoder.hpp"
#include "varcon/types.hpp"

namespace varcon {

/// Process exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitVerification = 2,
  kExitRuntime = 3,
};

/// Embedding dump: header `label,z0,...,z{d-1}`, one row per sample, values
/// with 9 significant digits.
void save_embedding_dump(const EmbeddingBatch& batch, const std::filesystem::path& path);
EmbeddingBatch load_embedding_dump(const std::filesystem::path& path);

/// Entry point of the `varcon` tool. Subcommands: train, grad-check,
/// export-embeddings, eval. Writes reports to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace varcon
