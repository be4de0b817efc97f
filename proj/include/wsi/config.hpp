#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "wsi/errors.hpp"
#include "wsi/scanner.hpp"
#include "wsi/simscope.hpp"

namespace wsi {

/// Raised for unusable configuration: bad values, missing referenced files.
class ConfigError : public Error {
public:
    using Error::Error;
};

std::string optics_to_json(const OpticsConfig& o);
OpticsConfig optics_from_json(const std::string& text);
OpticsConfig load_optics(const std::filesystem::path& path);

/// Unknown keys are rejected so typos do not silently fall back to defaults.
SimConfig sim_from_json(const std::string& text);
std::string sim_to_json(const SimConfig& s);

/// One scan run. Relative paths resolve against the config file's directory.
struct RunConfig {
    std::string backend = "sim"; // sim | tcp:<host>:<port> | serial:<path>:<baud>
    std::optional<std::filesystem::path> optics;
    std::optional<std::filesystem::path> calibration;
    std::optional<std::filesystem::path> distortion;
    std::optional<std::filesystem::path> specimen; // sim backend only
    Bounds bounds;
    double overlap = 0.15;
    std::optional<double> settle_s;
    bool isolation_pad = true;
    bool autofocus = true;
    bool pipelined = true;
    bool realtime = false;
    std::filesystem::path output = "scan_out";
    std::uint64_t seed = 1;
    std::optional<SimConfig> sim;

    void validate() const;
};

RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

/// "WxH" -> (W, H).
std::pair<int, int> parse_sensor(const std::string& text);

} // namespace wsi
