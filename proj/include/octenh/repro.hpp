#pragma once

#include <filesystem>
#include <string>

namespace octenh {

// Executes the staged experiment described by a run manifest into out_dir:
// phantom -> acquire -> mask -> train -> infer -> rl -> eval, each stage
// optional after the first. Every artifact is written deterministically;
// manifest_out.json lists FNV-1a digests of all artifacts. Per-frame failures
// land in errors.json and flip ok to false; structural problems throw.
struct ReproResult {
    bool ok = true;
    std::string manifest_out; // JSON text, also written to out_dir
};

ReproResult run_repro(const std::string& manifest_text, const std::filesystem::path& out_dir,
                      std::size_t threads);

} // namespace octenh
