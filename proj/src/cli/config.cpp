#include "wsi/config.hpp"

#include <cstdio>
#include <set>

#include <json.hpp>

#include "common/json_util.hpp"

namespace wsi {

namespace {

using Json = nlohmann::json;

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& what) {
    if (!j.is_object())
        throw ConfigError(what + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw ConfigError("unknown key '" + key + "' in " + what);
}

Json parse(const std::string& text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        throw ConfigError("invalid " + what + ": " + e.what());
    }
}

template <class T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key))
        out = j.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

} // namespace

std::string optics_to_json(const OpticsConfig& o) {
    nlohmann::ordered_json j;
    j["objective_mag"] = o.objective_mag;
    j["objective_na"] = o.objective_na;
    j["illum_na"] = o.illum_na;
    j["tube_focal_mm"] = o.tube_focal_mm;
    j["nominal_tube_focal_mm"] = o.nominal_tube_focal_mm;
    j["pixel_pitch_um"] = o.pixel_pitch_um;
    j["wavelength_um"] = o.wavelength_um;
    j["sensor_width"] = o.sensor_width;
    j["sensor_height"] = o.sensor_height;
    return j.dump(2) + "\n";
}

OpticsConfig optics_from_json(const std::string& text) {
    const Json j = parse(text, "optics config");
    reject_unknown(j,
                   {"objective_mag", "objective_na", "illum_na", "tube_focal_mm", "nominal_tube_focal_mm",
                    "pixel_pitch_um", "wavelength_um", "sensor_width", "sensor_height"},
                   "optics config");
    OpticsConfig o;
    try {
        read(j, "objective_mag", o.objective_mag);
        read(j, "objective_na", o.objective_na);
        read(j, "illum_na", o.illum_na);
        read(j, "tube_focal_mm", o.tube_focal_mm);
        read(j, "nominal_tube_focal_mm", o.nominal_tube_focal_mm);
        read(j, "pixel_pitch_um", o.pixel_pitch_um);
        read(j, "wavelength_um", o.wavelength_um);
        read(j, "sensor_width", o.sensor_width);
        read(j, "sensor_height", o.sensor_height);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("optics config: ") + e.what());
    }
    try {
        o.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("optics config: ") + e.what());
    }
    return o;
}

OpticsConfig load_optics(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw ConfigError("optics config not found: " + path.string());
    return optics_from_json(detail::read_text(path));
}

std::string sim_to_json(const SimConfig& s) {
    nlohmann::ordered_json j;
    j["object_um_per_step"] = s.object_um_per_step;
    j["exposure_s"] = s.exposure_s;
    j["readout_s"] = s.readout_s;
    j["read_noise_sigma"] = s.read_noise_sigma;
    j["k1"] = s.k1;
    j["k2"] = s.k2;
    j["vibration_amplitude_px_pad"] = s.vibration_amplitude_px_pad;
    j["vibration_amplitude_px_no_pad"] = s.vibration_amplitude_px_no_pad;
    j["vibration_tau_pad_s"] = s.vibration_tau_pad_s;
    j["vibration_tau_no_pad_s"] = s.vibration_tau_no_pad_s;
    j["stage_velocity_mm_s"] = s.stage_velocity_mm_s;
    j["z_velocity_mm_s"] = s.z_velocity_mm_s;
    j["ring_limit_steps"] = s.ring_limit_steps;
    j["isolation_pad"] = s.isolation_pad;
    return j.dump(2) + "\n";
}

SimConfig sim_from_json(const std::string& text) {
    const Json j = parse(text, "sim config");
    reject_unknown(j,
                   {"object_um_per_step", "exposure_s", "readout_s", "read_noise_sigma", "k1", "k2",
                    "vibration_amplitude_px_pad", "vibration_amplitude_px_no_pad", "vibration_tau_pad_s",
                    "vibration_tau_no_pad_s", "stage_velocity_mm_s", "z_velocity_mm_s", "ring_limit_steps",
                    "isolation_pad"},
                   "sim config");
    SimConfig s;
    try {
        read(j, "object_um_per_step", s.object_um_per_step);
        read(j, "exposure_s", s.exposure_s);
        read(j, "readout_s", s.readout_s);
        read(j, "read_noise_sigma", s.read_noise_sigma);
        read(j, "k1", s.k1);
        read(j, "k2", s.k2);
        read(j, "vibration_amplitude_px_pad", s.vibration_amplitude_px_pad);
        read(j, "vibration_amplitude_px_no_pad", s.vibration_amplitude_px_no_pad);
        read(j, "vibration_tau_pad_s", s.vibration_tau_pad_s);
        read(j, "vibration_tau_no_pad_s", s.vibration_tau_no_pad_s);
        read(j, "stage_velocity_mm_s", s.stage_velocity_mm_s);
        read(j, "z_velocity_mm_s", s.z_velocity_mm_s);
        read(j, "ring_limit_steps", s.ring_limit_steps);
        read(j, "isolation_pad", s.isolation_pad);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("sim config: ") + e.what());
    }
    if (!(s.object_um_per_step > 0.0) || !(s.stage_velocity_mm_s > 0.0) || !(s.z_velocity_mm_s > 0.0) ||
        s.exposure_s < 0.0 || s.readout_s < 0.0 || s.read_noise_sigma < 0.0 || s.ring_limit_steps <= 0)
        throw ConfigError("sim config: gains, velocities and limits must be positive");
    return s;
}

void RunConfig::validate() const {
    if (!(bounds.width_mm > 0.0) || !(bounds.height_mm > 0.0))
        throw ConfigError("bounds_mm width and height must be positive");
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw ConfigError("overlap must lie in [0, 1)");
    if (settle_s && (*settle_s < 0.0 || *settle_s > 60.0))
        throw ConfigError("settle_s must lie in [0, 60]");
    if (backend != "sim" && !backend.starts_with("tcp:") && !backend.starts_with("serial:"))
        throw ConfigError("backend must be sim, tcp:<host>:<port> or serial:<path>:<baud>");
    if (backend == "sim" && !specimen)
        throw ConfigError("the sim backend needs a specimen directory");
    for (const auto* p : {&optics, &calibration, &distortion, &specimen})
        if (*p && !std::filesystem::exists(**p))
            throw ConfigError("referenced file not found: " + (*p)->string());
}

RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
    const Json j = parse(text, "run config");
    reject_unknown(j,
                   {"backend", "optics", "calibration", "distortion", "specimen", "bounds_mm", "overlap",
                    "settle_s", "isolation_pad", "autofocus", "pipelined", "realtime", "output", "seed", "sim"},
                   "run config");
    RunConfig c;
    try {
        read(j, "backend", c.backend);
        for (auto [key, dst] : {std::pair{"optics", &c.optics}, std::pair{"calibration", &c.calibration},
                                std::pair{"distortion", &c.distortion}, std::pair{"specimen", &c.specimen}})
            if (j.contains(key) && !j.at(key).is_null())
                *dst = resolve(base_dir, j.at(key).get<std::string>());
        if (!j.contains("bounds_mm"))
            throw ConfigError("run config needs bounds_mm [x, y, width, height]");
        const auto b = j.at("bounds_mm").get<std::vector<double>>();
        if (b.size() != 4)
            throw ConfigError("bounds_mm must be [x, y, width, height]");
        c.bounds = {b[0], b[1], b[2], b[3]};
        read(j, "overlap", c.overlap);
        if (j.contains("settle_s") && !j.at("settle_s").is_null())
            c.settle_s = j.at("settle_s").get<double>();
        read(j, "isolation_pad", c.isolation_pad);
        read(j, "autofocus", c.autofocus);
        read(j, "pipelined", c.pipelined);
        read(j, "realtime", c.realtime);
        if (j.contains("output"))
            c.output = resolve(base_dir, j.at("output").get<std::string>());
        read(j, "seed", c.seed);
        if (j.contains("sim"))
            c.sim = sim_from_json(j.at("sim").dump());
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw ConfigError("run config not found: " + path.string());
    return run_config_from_json(detail::read_text(path), path.parent_path());
}

std::string run_config_to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["backend"] = c.backend;
    auto opt = [](const std::optional<std::filesystem::path>& p) {
        return p ? nlohmann::ordered_json(p->string()) : nlohmann::ordered_json(nullptr);
    };
    j["optics"] = opt(c.optics);
    j["calibration"] = opt(c.calibration);
    j["distortion"] = opt(c.distortion);
    j["specimen"] = opt(c.specimen);
    j["bounds_mm"] = {c.bounds.x_mm, c.bounds.y_mm, c.bounds.width_mm, c.bounds.height_mm};
    j["overlap"] = c.overlap;
    j["settle_s"] = c.settle_s ? nlohmann::ordered_json(*c.settle_s) : nlohmann::ordered_json(nullptr);
    j["isolation_pad"] = c.isolation_pad;
    j["autofocus"] = c.autofocus;
    j["pipelined"] = c.pipelined;
    j["realtime"] = c.realtime;
    j["output"] = c.output.string();
    j["seed"] = c.seed;
    if (c.sim)
        j["sim"] = nlohmann::ordered_json::parse(sim_to_json(*c.sim));
    return j.dump(2) + "\n";
}

std::pair<int, int> parse_sensor(const std::string& text) {
    int w = 0, h = 0, n = 0;
    if (std::sscanf(text.c_str(), "%dx%d%n", &w, &h, &n) != 2 || static_cast<std::size_t>(n) != text.size() ||
        w < 8 || h < 8)
        throw ConfigError("sensor size must look like 640x480 (at least 8x8)");
    return {w, h};
}

} // namespace wsi
