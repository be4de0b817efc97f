#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "wsi/image.hpp"
#include "wsi/simscope.hpp"
#include "wsi/transport.hpp"

namespace wsi {

struct DeviceStatus {
    bool running = false;
    double x_mm = 0.0;
    double y_mm = 0.0;
    double z_mm = 0.0;
};

/// Parses "<Idle|Run>,MPos:<x>,<y>,<z>".
std::optional<DeviceStatus> parse_status(const std::string& line);

struct ClientOptions {
    Millis timeout{2000};
    Millis capture_timeout{60000};
    // Extra attempts after a garbled command or a lost reply.
    int max_retries = 3;
};

/// Lockstep protocol client: one command in flight, every command answered
/// before the next is sent. Thread-safe; concurrent callers serialize.
class DeviceClient {
public:
    explicit DeviceClient(std::unique_ptr<Transport> transport, ClientOptions opts = {});

    void move_to(std::optional<double> x_mm, std::optional<double> y_mm, std::optional<double> z_mm = {});
    DeviceStatus status();
    /// Relative focus-ring move; the client tracks the absolute position.
    void ring_move(int steps);
    void set_led(LedMode mode);
    void dwell(double seconds);
    Image capture();
    /// Polls status, dwelling `poll_s` between polls, until the stage is idle.
    DeviceStatus wait_idle(double poll_s = 0.02, int max_polls = 100000);

    int ring_position() const;
    std::size_t commands_sent() const;
    std::size_t recoveries() const;

private:
    std::string transact(const std::string& cmd, bool idempotent);
    void resync();

    std::unique_ptr<Transport> transport_;
    ClientOptions opts_;
    mutable std::mutex mutex_;
    int ring_ = 0;
    std::size_t sent_ = 0;
    std::size_t recoveries_ = 0;
};

} // namespace wsi
