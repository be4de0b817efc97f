#include "wsi/device.hpp"

#include <cstdio>

#include "wsi/errors.hpp"
#include "wsi/raster_io.hpp"

namespace wsi {

std::optional<DeviceStatus> parse_status(const std::string& line) {
    char state[8] = {};
    DeviceStatus st;
    int consumed = 0;
    if (std::sscanf(line.c_str(), "%4[A-Za-z],MPos:%lf,%lf,%lf%n", state, &st.x_mm, &st.y_mm, &st.z_mm, &consumed) !=
            4 ||
        static_cast<std::size_t>(consumed) != line.size())
        return std::nullopt;
    const std::string s(state);
    if (s != "Idle" && s != "Run")
        return std::nullopt;
    st.running = s == "Run";
    return st;
}

DeviceClient::DeviceClient(std::unique_ptr<Transport> transport, ClientOptions opts)
    : transport_(std::move(transport)), opts_(opts) {
    if (!transport_)
        throw PreconditionError("device client needs a transport");
}

void DeviceClient::resync() {
    // Drain whatever is in flight, then prove the link with a status query.
    ++recoveries_;
    transport_->discard_input(Millis(20));
    for (int attempt = 0; attempt <= opts_.max_retries; ++attempt) {
        ++sent_;
        transport_->send_line("?");
        try {
            for (int lines = 0; lines < 4; ++lines)
                if (parse_status(transport_->read_line(opts_.timeout)))
                    return;
        } catch (const TimeoutError&) {
        }
        transport_->discard_input(Millis(20));
    }
    throw TimeoutError("device not responding after resync");
}

std::string DeviceClient::transact(const std::string& cmd, bool idempotent) {
    for (int attempt = 0;; ++attempt) {
        ++sent_;
        transport_->send_line(cmd);
        std::string reply;
        try {
            reply = transport_->read_line(cmd == "C" ? opts_.capture_timeout : opts_.timeout);
        } catch (const TimeoutError&) {
            resync();
            if (!idempotent)
                throw TimeoutError("reply to '" + cmd + "' lost; device state uncertain");
            if (attempt >= opts_.max_retries)
                throw;
            continue;
        }
        if (reply == "error:1" && attempt < opts_.max_retries) {
            // The device rejected what it saw as malformed; state is unchanged,
            // so resending is safe even for relative moves.
            ++recoveries_;
            continue;
        }
        if (reply.starts_with("error:"))
            throw DeviceError("device rejected '" + cmd + "' with " + reply);
        return reply;
    }
}

void DeviceClient::move_to(std::optional<double> x_mm, std::optional<double> y_mm, std::optional<double> z_mm) {
    std::string cmd = "G0";
    char buf[32];
    for (auto [axis, v] : {std::pair{'X', x_mm}, std::pair{'Y', y_mm}, std::pair{'Z', z_mm}})
        if (v) {
            std::snprintf(buf, sizeof buf, " %c%.3f", axis, *v);
            cmd += buf;
        }
    if (cmd.size() == 2)
        throw PreconditionError("move needs at least one axis");
    std::lock_guard lock(mutex_);
    if (transact(cmd, true) != "ok")
        throw DeviceError("unexpected reply to move");
}

DeviceStatus DeviceClient::status() {
    std::lock_guard lock(mutex_);
    const std::string reply = transact("?", true);
    auto st = parse_status(reply);
    if (!st)
        throw DeviceError("malformed status '" + reply + "'");
    return *st;
}

void DeviceClient::ring_move(int steps) {
    if (steps == 0)
        return;
    std::lock_guard lock(mutex_);
    const std::string cmd = "R" + std::to_string(steps);
    if (transact(cmd, false) != "ok")
        throw DeviceError("unexpected reply to ring move");
    ring_ += steps;
}

void DeviceClient::set_led(LedMode mode) {
    std::lock_guard lock(mutex_);
    if (transact(mode == LedMode::rg_dual ? "L RG" : "L BF", true) != "ok")
        throw DeviceError("unexpected reply to LED command");
}

void DeviceClient::dwell(double seconds) {
    if (seconds <= 0.0)
        return;
    char buf[32];
    std::snprintf(buf, sizeof buf, "G4 P%.3f", seconds);
    std::lock_guard lock(mutex_);
    if (transact(buf, true) != "ok")
        throw DeviceError("unexpected reply to dwell");
}

Image DeviceClient::capture() {
    std::lock_guard lock(mutex_);
    for (int attempt = 0;; ++attempt) {
        const std::string header = transact("C", true);
        int w = 0, h = 0, c = 0, consumed = 0;
        if (std::sscanf(header.c_str(), "IMG %d %d %d%n", &w, &h, &c, &consumed) != 3 ||
            static_cast<std::size_t>(consumed) != header.size() || w <= 0 || h <= 0 || (c != 1 && c != 3))
            throw DeviceError("malformed capture header '" + header + "'");
        try {
            const auto payload =
                transport_->read_exact(static_cast<std::size_t>(w) * h * c * 2, opts_.capture_timeout);
            return unpack_u16le(payload, w, h, c);
        } catch (const TimeoutError&) {
            resync();
            if (attempt >= opts_.max_retries)
                throw;
        }
    }
}

DeviceStatus DeviceClient::wait_idle(double poll_s, int max_polls) {
    for (int i = 0; i < max_polls; ++i) {
        const DeviceStatus st = status();
        if (!st.running)
            return st;
        dwell(poll_s);
    }
    throw TimeoutError("stage still moving after " + std::to_string(max_polls) + " polls");
}

int DeviceClient::ring_position() const {
    std::lock_guard lock(mutex_);
    return ring_;
}

std::size_t DeviceClient::commands_sent() const {
    std::lock_guard lock(mutex_);
    return sent_;
}

std::size_t DeviceClient::recoveries() const {
    std::lock_guard lock(mutex_);
    return recoveries_;
}

} // namespace wsi
