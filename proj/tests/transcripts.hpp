#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "support.hpp"
#include "wsi/calibrate.hpp"
#include "wsi/scanner.hpp"
#include "wsi/sim_device.hpp"

namespace wsi::test {

/// Protocol traffic for fixed, small runs against a seeded simulator. The
/// golden copies live in tests/golden; WSI_UPDATE_GOLDEN=1 rewrites them.
struct Transcript {
    std::string name;
    std::string text;
};

inline const Specimen& transcript_specimen() {
    static const Specimen s = [] {
        SpecimenParams p;
        p.width_mm = p.height_mm = 0.4;
        p.seed = 17;
        p.focal_amplitude_um = 3.0;
        return make_specimen(p);
    }();
    return s;
}

template <class Fn>
std::string record(Fn&& body) {
    const OpticsConfig optics = small_optics(320, 240);
    SimConfig sim;
    SimMicroscope scope(transcript_specimen(), optics, sim, 5);
    std::ostringstream log;
    DeviceClient dev(std::make_unique<RecordingTransport>(std::make_unique<LoopbackTransport>(scope),
                                                          [&](const std::string& line) { log << line << '\n'; }));
    body(dev, optics);
    return log.str();
}

inline std::vector<Transcript> make_transcripts() {
    std::vector<Transcript> out;
    out.push_back({"calibrate_ring", record([](DeviceClient& dev, const OpticsConfig& optics) {
                       RingSweepOptions opts;
                       opts.ring_positions = {-100, 0, 100};
                       calibrate_ring(dev, optics, opts);
                   })});
    out.push_back({"calibrate_separation", record([](DeviceClient& dev, const OpticsConfig& optics) {
                       SeparationSweepOptions opts;
                       opts.defocus_min_um = -5.0;
                       opts.defocus_max_um = 5.0;
                       calibrate_separation(dev, CalibrationModel::nominal(optics), AfConfig{}, opts);
                   })});
    out.push_back({"scan_2x2", record([](DeviceClient& dev, const OpticsConfig& optics) {
                       const ScanPlan plan = plan_scan({0.1, 0.1, 0.14, 0.1}, optics);
                       MemorySink sink;
                       ScanConfig cfg;
                       cfg.pipelined = false;
                       run_scan(dev, plan, cfg, AfConfig{}, CalibrationModel::nominal(optics),
                                DistortionModel::identity(optics.sensor_width, optics.sensor_height), sink, optics);
                   })});
    return out;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Compares against (or, when asked, rewrites) the golden files. Returns the
/// names that differ.
inline std::vector<std::string> check_transcripts(const std::vector<Transcript>& all,
                                                  const std::filesystem::path& golden_dir) {
    const bool update = std::getenv("WSI_UPDATE_GOLDEN") != nullptr;
    std::vector<std::string> bad;
    for (const Transcript& t : all) {
        const auto path = golden_dir / (t.name + ".txt");
        if (update)
            std::ofstream(path, std::ios::binary) << t.text;
        else if (!std::filesystem::exists(path) || read_file(path) != t.text)
            bad.push_back(t.name);
    }
    return bad;
}

} // namespace wsi::test
