#include "wsi/transport.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <termios.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "wsi/errors.hpp"
#include "wsi/sim_device.hpp"

namespace wsi {

std::string BufferedTransport::read_line(Millis timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        const auto nl = rx_.find('\n');
        if (nl != std::string::npos) {
            std::string line = rx_.substr(0, nl);
            rx_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            return line;
        }
        const auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0 || !fill(left))
            throw TimeoutError("no reply within " + std::to_string(timeout.count()) + " ms");
    }
}

std::vector<std::uint8_t> BufferedTransport::read_exact(std::size_t n, Millis timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (rx_.size() < n) {
        const auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0 || !fill(left))
            throw TimeoutError("payload truncated: " + std::to_string(rx_.size()) + " of " + std::to_string(n) +
                               " bytes");
    }
    std::vector<std::uint8_t> out(rx_.begin(), rx_.begin() + static_cast<std::ptrdiff_t>(n));
    rx_.erase(0, n);
    return out;
}

void BufferedTransport::discard_input(Millis quiet) {
    rx_.clear();
    while (fill(quiet))
        rx_.clear();
}

void LoopbackTransport::send_line(std::string_view line) {
    const WireReply r = scope_.handle(line);
    rx_ += r.line;
    rx_.append(r.payload.begin(), r.payload.end());
}

FdTransport::FdTransport(int read_fd, int write_fd, bool owns) : rfd_(read_fd), wfd_(write_fd), owns_(owns) {}

FdTransport::~FdTransport() {
    if (!owns_)
        return;
    ::close(rfd_);
    if (wfd_ != rfd_)
        ::close(wfd_);
}

void FdTransport::send_line(std::string_view line) {
    std::string data(line);
    data.push_back('\n');
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        const ssize_t k = ::write(wfd_, p, left);
        if (k < 0) {
            if (errno == EINTR)
                continue;
            throw DeviceError(std::string("write failed: ") + std::strerror(errno));
        }
        p += k;
        left -= static_cast<std::size_t>(k);
    }
}

bool FdTransport::fill(Millis timeout) {
    pollfd pfd{rfd_, POLLIN, 0};
    int pr;
    do {
        pr = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    } while (pr < 0 && errno == EINTR);
    if (pr < 0)
        throw DeviceError(std::string("poll failed: ") + std::strerror(errno));
    if (pr == 0)
        return false;
    char buf[65536];
    const ssize_t n = ::read(rfd_, buf, sizeof buf);
    if (n == 0)
        throw DeviceError("connection closed by device");
    if (n < 0) {
        if (errno == EINTR || errno == EAGAIN)
            return true;
        throw DeviceError(std::string("read failed: ") + std::strerror(errno));
    }
    rx_.append(buf, static_cast<std::size_t>(n));
    return true;
}

std::unique_ptr<Transport> connect_tcp(const std::string& host, int port, Millis timeout) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        throw DeviceError("cannot resolve " + host);
    int fd = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0)
            continue;
        // Non-blocking connect so an unreachable host fails within `timeout`.
        const int flags = ::fcntl(fd, F_GETFL, 0);
        ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc < 0 && errno == EINPROGRESS) {
            pollfd pfd{fd, POLLOUT, 0};
            if (::poll(&pfd, 1, static_cast<int>(timeout.count())) == 1) {
                int err = 0;
                socklen_t len = sizeof err;
                ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
                rc = err == 0 ? 0 : -1;
            }
        }
        if (rc == 0) {
            ::fcntl(fd, F_SETFL, flags);
            break;
        }
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0)
        throw DeviceError("cannot connect to " + host + ":" + std::to_string(port));
    return std::make_unique<FdTransport>(fd, fd, true);
}

namespace {

speed_t baud_constant(int baud) {
    switch (baud) {
    case 9600:
        return B9600;
    case 19200:
        return B19200;
    case 38400:
        return B38400;
    case 57600:
        return B57600;
    case 115200:
        return B115200;
    case 230400:
        return B230400;
    case 460800:
        return B460800;
    case 921600:
        return B921600;
    default:
        throw PreconditionError("unsupported baud rate " + std::to_string(baud));
    }
}

} // namespace

std::unique_ptr<Transport> open_serial(const std::string& path, int baud) {
    const speed_t speed = baud_constant(baud);
    const int fd = ::open(path.c_str(), O_RDWR | O_NOCTTY);
    if (fd < 0)
        throw DeviceError("cannot open " + path + ": " + std::strerror(errno));
    termios tio{};
    if (::tcgetattr(fd, &tio) == 0) {
        ::cfmakeraw(&tio);
        ::cfsetispeed(&tio, speed);
        ::cfsetospeed(&tio, speed);
        tio.c_cflag |= CLOCAL | CREAD;
        ::tcsetattr(fd, TCSANOW, &tio);
    }
    return std::make_unique<FdTransport>(fd, fd, true);
}

std::unique_ptr<Transport> open_transport(const std::string& address) {
    const auto first = address.find(':');
    const auto last = address.rfind(':');
    if (first == std::string::npos || first == last)
        throw PreconditionError("backend address must be tcp:<host>:<port> or serial:<path>:<baud>");
    const std::string kind = address.substr(0, first);
    const std::string target = address.substr(first + 1, last - first - 1);
    int number = 0;
    try {
        number = std::stoi(address.substr(last + 1));
    } catch (const std::exception&) {
        throw PreconditionError("bad port or baud in '" + address + "'");
    }
    if (kind == "tcp")
        return connect_tcp(target, number);
    if (kind == "serial")
        return open_serial(target, number);
    throw PreconditionError("unknown backend kind '" + kind + "'");
}

FaultInjectingTransport::FaultInjectingTransport(std::unique_ptr<Transport> inner, FaultPlan plan)
    : inner_(std::move(inner)), plan_(std::move(plan)), rng_(plan_.seed) {}

void FaultInjectingTransport::send_line(std::string_view line) {
    const std::size_t i = index_++;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const bool garble = plan_.garble.count(i) || u(rng_) < plan_.garble_probability;
    drop_pending_ = plan_.drop_reply.count(i) || u(rng_) < plan_.drop_probability;
    if (garble) {
        ++garbled_;
        // Line noise: the device sees an unparseable line.
        std::string bad(line);
        bad.insert(bad.begin(), '~');
        if (bad.size() > 2)
            bad[bad.size() / 2] ^= 0x20;
        inner_->send_line(bad);
        return;
    }
    inner_->send_line(line);
}

std::string FaultInjectingTransport::read_line(Millis timeout) {
    if (drop_pending_) {
        drop_pending_ = false;
        ++dropped_;
        const std::string lost = inner_->read_line(timeout);
        if (lost.starts_with("IMG ")) {
            int w = 0, h = 0, c = 0;
            if (std::sscanf(lost.c_str(), "IMG %d %d %d", &w, &h, &c) == 3)
                inner_->read_exact(static_cast<std::size_t>(w) * h * c * 2, timeout);
        }
        throw TimeoutError("reply lost");
    }
    return inner_->read_line(timeout);
}

std::vector<std::uint8_t> FaultInjectingTransport::read_exact(std::size_t n, Millis timeout) {
    return inner_->read_exact(n, timeout);
}

void FaultInjectingTransport::discard_input(Millis quiet) {
    drop_pending_ = false;
    inner_->discard_input(quiet);
}

RecordingTransport::RecordingTransport(std::unique_ptr<Transport> inner, Sink sink)
    : inner_(std::move(inner)), sink_(std::move(sink)) {}

void RecordingTransport::send_line(std::string_view line) {
    sink_("> " + std::string(line));
    inner_->send_line(line);
}

std::string RecordingTransport::read_line(Millis timeout) {
    std::string line = inner_->read_line(timeout);
    sink_("< " + line);
    return line;
}

std::vector<std::uint8_t> RecordingTransport::read_exact(std::size_t n, Millis timeout) {
    auto data = inner_->read_exact(n, timeout);
    sink_("< [payload " + std::to_string(n) + " bytes]");
    return data;
}

void RecordingTransport::discard_input(Millis quiet) { inner_->discard_input(quiet); }

} // namespace wsi
