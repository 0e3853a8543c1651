#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "les/analysis.hpp"
#include "les/descriptors.hpp"
#include "les/dynamics.hpp"
#include "les/model.hpp"
#include "les/training.hpp"

namespace les::cli {

struct AnalysisSettings {
    std::string species_a = "O";
    std::string species_b = "O";
    double r_max = 6.0;
    int bins = 60;
    int axis = 2;
    int n_max = 10;
    int skip_frames = 0;
    WaterCharges charges;
};

/// Everything a subcommand needs, resolved from defaults, the config file and
/// command-line overrides.
struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path dataset;
    std::filesystem::path structure;
    std::filesystem::path trajectory;
    std::filesystem::path checkpoint;
    std::filesystem::path output_dir;
    DescriptorConfig descriptor;
    LrSettings lr;
    std::vector<int> hidden;
    TrainConfig train;
    MdProtocol md;
    AnalysisSettings analysis;
    nlohmann::ordered_json resolved;   // the merged document, written next to outputs
};

using Override = std::pair<std::string, std::string>;   // dot path, raw value

/// Default document with every known key.
nlohmann::ordered_json default_config();

/// One line per key: path, default and meaning. Used by --help.
std::string config_reference();

/// Pulls `--section.key=value`, `--section.key value` and the `--lr-enabled`
/// alias out of `args`, leaving everything else in place.
std::vector<Override> extract_overrides(std::vector<std::string>& args);

/// Defaults, then the file (if any), then overrides. Unknown keys and values of
/// the wrong type are rejected with UserError.
nlohmann::ordered_json merge_config(const std::optional<std::filesystem::path>& file,
                                    const std::vector<Override>& overrides);

RunConfig resolve_config(const nlohmann::ordered_json& doc);

} // namespace les::cli
