#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace wsi {

class SimMicroscope;

using Millis = std::chrono::milliseconds;

/// Byte stream to the instrument, line-oriented on the way out. Reads throw
/// TimeoutError when nothing arrives in time and DeviceError on a closed or
/// failed link.
class Transport {
public:
    virtual ~Transport() = default;
    /// Sends `line` followed by '\n'.
    virtual void send_line(std::string_view line) = 0;
    /// Next line without its terminator.
    virtual std::string read_line(Millis timeout) = 0;
    virtual std::vector<std::uint8_t> read_exact(std::size_t n, Millis timeout) = 0;
    /// Drops anything already received or arriving within `quiet`.
    virtual void discard_input(Millis quiet) = 0;
};

/// Shared receive buffering; subclasses only supply more bytes.
class BufferedTransport : public Transport {
public:
    std::string read_line(Millis timeout) override;
    std::vector<std::uint8_t> read_exact(std::size_t n, Millis timeout) override;
    void discard_input(Millis quiet) override;

protected:
    /// Appends newly arrived bytes to rx_; false if none arrived in time.
    virtual bool fill(Millis timeout) = 0;
    std::string rx_;
};

/// In-process link to a simulator: each line is handled synchronously and
/// its reply queued for reading.
class LoopbackTransport : public BufferedTransport {
public:
    explicit LoopbackTransport(SimMicroscope& scope) : scope_(scope) {}
    void send_line(std::string_view line) override;

protected:
    bool fill(Millis) override { return false; }

private:
    SimMicroscope& scope_;
};

/// Any file descriptor: a TCP socket, a serial port or a pipe pair.
class FdTransport : public BufferedTransport {
public:
    FdTransport(int read_fd, int write_fd, bool owns);
    ~FdTransport() override;
    FdTransport(const FdTransport&) = delete;
    FdTransport& operator=(const FdTransport&) = delete;

    void send_line(std::string_view line) override;

protected:
    bool fill(Millis timeout) override;

private:
    int rfd_, wfd_;
    bool owns_;
};

std::unique_ptr<Transport> connect_tcp(const std::string& host, int port, Millis timeout = Millis(3000));
std::unique_ptr<Transport> open_serial(const std::string& path, int baud);

/// "tcp:<host>:<port>" or "serial:<path>:<baud>".
std::unique_ptr<Transport> open_transport(const std::string& address);

/// Corrupts chosen outgoing lines and swallows chosen replies, by command
/// index (0-based) or at random.
struct FaultPlan {
    std::set<std::size_t> garble;
    std::set<std::size_t> drop_reply;
    double garble_probability = 0.0;
    double drop_probability = 0.0;
    std::uint64_t seed = 1;
};

class FaultInjectingTransport : public Transport {
public:
    FaultInjectingTransport(std::unique_ptr<Transport> inner, FaultPlan plan);

    void send_line(std::string_view line) override;
    std::string read_line(Millis timeout) override;
    std::vector<std::uint8_t> read_exact(std::size_t n, Millis timeout) override;
    void discard_input(Millis quiet) override;

    std::size_t garbled() const { return garbled_; }
    std::size_t dropped() const { return dropped_; }

private:
    std::unique_ptr<Transport> inner_;
    FaultPlan plan_;
    std::mt19937_64 rng_;
    std::size_t index_ = 0;
    bool drop_pending_ = false;
    std::size_t garbled_ = 0;
    std::size_t dropped_ = 0;
};

/// Logs traffic as "> command", "< reply" and "< [payload N bytes]".
class RecordingTransport : public Transport {
public:
    using Sink = std::function<void(const std::string&)>;
    RecordingTransport(std::unique_ptr<Transport> inner, Sink sink);

    void send_line(std::string_view line) override;
    std::string read_line(Millis timeout) override;
    std::vector<std::uint8_t> read_exact(std::size_t n, Millis timeout) override;
    void discard_input(Millis quiet) override;

private:
    std::unique_ptr<Transport> inner_;
    Sink sink_;
};

} // namespace wsi
