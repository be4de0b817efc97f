#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "wsi/simscope.hpp"

namespace wsi {

/// One reply on the wire: a text line (with its newline) and, for captures,
/// the binary payload that follows it.
struct WireReply {
    std::string line;
    std::vector<std::uint8_t> payload;
};

/// What the simulator knew when it exposed a frame. Used by tests to score
/// focus accuracy against ground truth.
struct CaptureRecord {
    CaptureState state;
    double true_defocus_um = 0.0;
    double time_s = 0.0;
};

/// The simulated instrument behind the wire protocol. Commands are handled
/// strictly one at a time. Time is virtual unless `realtime` is set, in which
/// case the device clock is the wall clock and dwells/exposures really wait.
class SimMicroscope {
public:
    SimMicroscope(Specimen spec, OpticsConfig optics, SimConfig sim, std::uint64_t seed = 0,
                  bool realtime = false);

    WireReply handle(std::string_view line);

    double now() const;
    CaptureState state_at(double t) const;
    double true_defocus_um() const;

    const Specimen& specimen() const { return spec_; }
    const OpticsConfig& optics() const { return optics_; }
    const SimConfig& sim() const { return sim_; }
    int ring_steps() const;
    std::vector<CaptureRecord> captures() const;
    void set_isolation_pad(bool pad);
    void set_render_options(RenderOptions opts);
    void set_stage_z_um(double z);

private:
    struct Pose {
        double x_mm = 0.0, y_mm = 0.0, z_mm = 0.0;
    };
    Pose pose_at(double t) const;
    WireReply do_move(std::string_view args);
    WireReply do_dwell(std::string_view args);
    WireReply do_capture();
    void advance(double seconds);

    Specimen spec_;
    OpticsConfig optics_;
    SimConfig sim_;
    RenderOptions render_opts_;
    std::uint64_t seed_;
    bool realtime_;
    std::chrono::steady_clock::time_point epoch_;
    double virtual_time_ = 0.0;

    Pose from_, to_;
    double move_start_ = 0.0;
    double move_end_ = 0.0;
    double xy_move_end_ = 0.0;
    bool has_moved_ = false;
    int ring_ = 0;
    LedMode led_ = LedMode::brightfield;
    std::uint64_t capture_count_ = 0;
    std::vector<CaptureRecord> captures_;
    mutable std::mutex mutex_;
};

/// Serves the wire protocol on a byte stream until end of input or `stop`.
void serve_stream(SimMicroscope& scope, int in_fd, int out_fd, const std::atomic<bool>* stop = nullptr);

/// Listens on 127.0.0.1:`port` (0 picks a free port) and serves one client
/// connection at a time until `stop` is set. `on_listening` receives the
/// bound port.
void serve_tcp(SimMicroscope& scope, int port, const std::atomic<bool>& stop,
               const std::function<void(int)>& on_listening = {});

} // namespace wsi
