// hemi: heterogeneous graph embedding command-line tool.

#include "hemi/error.hpp"
#include "hemi/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

struct flag {
    const char* name;
    const char* key;
    const char* help;
};

// Flags that map one-to-one onto config keys.
const flag value_flags[] = {
    {"--nodes", "nodes", "node file (node_id<TAB>type)"},
    {"--relations", "relations", "relation file (name<TAB>src_type<TAB>dst_type)"},
    {"--edges", "edges", "edge file (src<TAB>relation<TAB>dst)"},
    {"--features", "features", "target-node feature file"},
    {"--labels", "labels", "target-node label file"},
    {"--target-type", "target_type", "node type to embed"},
    {"--metapaths", "metapaths", "comma-separated meta-paths, e.g. pa.~pa,ps.~ps"},
    {"-o,--output", "output", "output directory"},
    {"--checkpoint", "checkpoint", "checkpoint directory to read (embed)"},
    {"--embeddings", "embeddings", "embedding TSV to read (eval commands)"},
    {"--seed", "seed", "random seed (HEMI_SEED overrides)"},
    {"--epochs", "epochs", "maximum training epochs"},
    {"--patience", "patience", "early-stopping patience"},
    {"--lr", "lr", "Adam learning rate"},
    {"--dim", "d", "embedding dimension"},
    {"--lambda", "lambda", "fine/coarse balance in [0, 1]"},
    {"--task", "task", "train-augmented task: nc or lp"},
    {"--hemi-weight", "hemi_weight", "multiplier on the self-supervised term"},
    {"--runs", "runs", "repeated runs for link prediction and augmented training"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HeMI heterogeneous graph embedding"};
    app.require_subcommand(1);

    std::string config_file;
    std::map<std::string, std::string> values;
    std::vector<std::string> sets;
    bool quiet = false;

    for (const auto& name : hemi::command_names()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("-c,--config", config_file, "key = value config file");
        for (const auto& f : value_flags) sub->add_option(f.name, values[f.key], f.help);
        sub->add_option("--set", sets, "override any config key: key=value")->type_name("KEY=VALUE");
        sub->add_flag("-q,--quiet", quiet, "suppress per-epoch logging");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(hemi::exit_code::usage);
    }

    const std::string command = app.get_subcommands().front()->get_name();
    hemi::run_config config;
    try {
        hemi::key_values overrides;
        for (const auto& [key, value] : values) {
            if (!value.empty()) overrides.set(key, value);
        }
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw hemi::usage_error("--set expects key=value, got '" + s + "'");
            overrides.set(hemi::trim(s.substr(0, eq)), hemi::trim(s.substr(eq + 1)));
        }
        if (quiet) overrides.set("quiet", "true");
        config = hemi::load_run_config(config_file, overrides);
    } catch (const hemi::usage_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(hemi::exit_code::usage);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(hemi::exit_code::usage);
    }
    return hemi::run(command, config, std::cout, std::cerr);
}
