#pragma once

#include "hemi/dataset.hpp"
#include "hemi/eval.hpp"
#include "hemi/kv.hpp"
#include "hemi/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace hemi {

/// Everything one CLI invocation needs. Built from a flat key-value config
/// whose relative paths resolve against the config file's directory.
struct run_config {
    dataset_paths data;
    std::vector<std::string> metapaths;
    hemi_config model;

    std::filesystem::path output = "hemi_out";
    std::filesystem::path checkpoint;  // input for `embed`; defaults to <output>/checkpoint
    std::filesystem::path embeddings;  // input for eval commands; defaults to <output>/embeddings.tsv

    std::string task = "nc";  // train-augmented: nc | lp
    double hemi_weight = 1.0;
    std::size_t runs = 5;
    std::size_t lp_dim = 64;
    bool quiet = false;

    split_spec split;
    probe_options probe;
    std::size_t cluster_restarts = 10;
    mask_fractions mask;
    synthetic_spec synthetic;

    std::filesystem::path checkpoint_dir() const;
    std::filesystem::path embeddings_file() const;

    /// Throws usage_error on unknown keys or malformed values.
    static run_config from_key_values(const key_values& kv, const std::filesystem::path& base_dir);
};

/// Reads `config_file` (may be empty), layers `overrides` on top with
/// relative paths taken from the working directory, then applies HEMI_SEED.
run_config load_run_config(const std::filesystem::path& config_file, const key_values& overrides);

/// Names accepted by run().
const std::vector<std::string>& command_names();

/// Executes one pipeline command. Errors are reported on `err` and mapped to
/// the exit codes of exit_code.
int run(const std::string& command, const run_config& config, std::ostream& out, std::ostream& err);

}  // namespace hemi
