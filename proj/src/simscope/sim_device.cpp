#include "wsi/sim_device.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <thread>

#include "wsi/errors.hpp"
#include "wsi/raster_io.hpp"

namespace wsi {

namespace {

constexpr double kZLimitMm = 1.0;
constexpr double kMaxDwellS = 60.0;

WireReply ok() { return {"ok\n", {}}; }
WireReply error(int code) { return {"error:" + std::to_string(code) + "\n", {}}; }

bool parse_double(std::string_view s, double& out) {
    if (s.empty())
        return false;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end && std::isfinite(out);
}

bool parse_int(std::string_view s, int& out) {
    if (!s.empty() && s.front() == '+')
        s.remove_prefix(1);
    if (s.empty())
        return false;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ')
            ++i;
        const std::size_t j = s.find(' ', i);
        const std::size_t end = j == std::string_view::npos ? s.size() : j;
        if (end > i)
            out.push_back(s.substr(i, end - i));
        i = end;
    }
    return out;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace

SimMicroscope::SimMicroscope(Specimen spec, OpticsConfig optics, SimConfig sim, std::uint64_t seed, bool realtime)
    : spec_(std::move(spec)), optics_(optics), sim_(sim), seed_(seed), realtime_(realtime),
      epoch_(std::chrono::steady_clock::now()) {
    optics_.validate();
    // Park at the slide center so the first capture is always in bounds.
    from_.x_mm = to_.x_mm = spec_.width_mm() / 2.0;
    from_.y_mm = to_.y_mm = spec_.height_mm() / 2.0;
}

double SimMicroscope::now() const {
    if (!realtime_)
        return virtual_time_;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
}

void SimMicroscope::advance(double seconds) {
    if (realtime_)
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    else
        virtual_time_ += seconds;
}

SimMicroscope::Pose SimMicroscope::pose_at(double t) const {
    if (t >= move_end_ || move_end_ <= move_start_)
        return to_;
    const double a = std::clamp((t - move_start_) / (move_end_ - move_start_), 0.0, 1.0);
    return {from_.x_mm + a * (to_.x_mm - from_.x_mm), from_.y_mm + a * (to_.y_mm - from_.y_mm),
            from_.z_mm + a * (to_.z_mm - from_.z_mm)};
}

CaptureState SimMicroscope::state_at(double t) const {
    std::lock_guard lock(mutex_);
    const Pose p = pose_at(t);
    CaptureState st;
    st.stage_x_mm = p.x_mm;
    st.stage_y_mm = p.y_mm;
    st.stage_z_um = p.z_mm * 1000.0;
    st.ring_steps = ring_;
    st.led_mode = led_;
    st.isolation_pad = sim_.isolation_pad;
    return st;
}

double SimMicroscope::true_defocus_um() const {
    const CaptureState st = state_at(now());
    return net_defocus_um(spec_, st, sim_);
}

int SimMicroscope::ring_steps() const {
    std::lock_guard lock(mutex_);
    return ring_;
}

std::vector<CaptureRecord> SimMicroscope::captures() const {
    std::lock_guard lock(mutex_);
    return captures_;
}

void SimMicroscope::set_isolation_pad(bool pad) {
    std::lock_guard lock(mutex_);
    sim_.isolation_pad = pad;
}

void SimMicroscope::set_render_options(RenderOptions opts) {
    std::lock_guard lock(mutex_);
    render_opts_ = opts;
}

void SimMicroscope::set_stage_z_um(double z) {
    std::lock_guard lock(mutex_);
    from_ = to_ = pose_at(now());
    to_.z_mm = from_.z_mm = z / 1000.0;
    move_start_ = move_end_ = now();
}

WireReply SimMicroscope::handle(std::string_view line) {
    std::lock_guard lock(mutex_);
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r'))
        line.remove_suffix(1);
    if (line == "?") {
        const double t = now();
        const Pose p = pose_at(t);
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s,MPos:%.3f,%.3f,%.3f\n", t < move_end_ ? "Run" : "Idle", p.x_mm, p.y_mm,
                      p.z_mm);
        return {buf, {}};
    }
    if (line == "C")
        return do_capture();
    if (line == "L BF") {
        led_ = LedMode::brightfield;
        return ok();
    }
    if (line == "L RG") {
        led_ = LedMode::rg_dual;
        return ok();
    }
    if (line.size() >= 2 && line[0] == 'R') {
        int steps = 0;
        if (!parse_int(line.substr(1), steps))
            return error(1);
        const long next = static_cast<long>(ring_) + steps;
        if (std::abs(next) > sim_.ring_limit_steps)
            return error(2);
        ring_ = static_cast<int>(next);
        return ok();
    }
    if (line.starts_with("G0 "))
        return do_move(line.substr(3));
    if (line.starts_with("G4 "))
        return do_dwell(line.substr(3));
    return error(1);
}

WireReply SimMicroscope::do_move(std::string_view args) {
    const double t = now();
    Pose target = pose_at(t);
    bool any = false, seen[3] = {false, false, false};
    for (auto tok : split_ws(args)) {
        if (tok.size() < 2)
            return error(1);
        const int axis = tok[0] == 'X' ? 0 : tok[0] == 'Y' ? 1 : tok[0] == 'Z' ? 2 : -1;
        double v = 0.0;
        if (axis < 0 || seen[axis] || !parse_double(tok.substr(1), v))
            return error(1);
        seen[axis] = any = true;
        (axis == 0 ? target.x_mm : axis == 1 ? target.y_mm : target.z_mm) = v;
    }
    if (!any)
        return error(1);
    if (target.x_mm < 0.0 || target.x_mm > spec_.width_mm() || target.y_mm < 0.0 ||
        target.y_mm > spec_.height_mm() || std::abs(target.z_mm) > kZLimitMm)
        return error(2);
    const Pose start = pose_at(t);
    const double txy = std::max(std::abs(target.x_mm - start.x_mm), std::abs(target.y_mm - start.y_mm)) /
                       sim_.stage_velocity_mm_s;
    const double tz = std::abs(target.z_mm - start.z_mm) / sim_.z_velocity_mm_s;
    from_ = start;
    to_ = target;
    move_start_ = t;
    move_end_ = t + std::max(txy, tz);
    if (txy > 0.0) {
        has_moved_ = true;
        xy_move_end_ = t + txy;
    }
    return ok();
}

WireReply SimMicroscope::do_dwell(std::string_view args) {
    double s = 0.0;
    if (args.size() < 2 || args[0] != 'P' || !parse_double(args.substr(1), s))
        return error(1);
    if (s < 0.0 || s > kMaxDwellS)
        return error(2);
    advance(s);
    return ok();
}

WireReply SimMicroscope::do_capture() {
    const double t0 = now();
    const double e = sim_.exposure_s;
    // Mean pose over the exposure; travel during it becomes motion blur.
    constexpr int kSamples = 33;
    Pose mean;
    for (int i = 0; i < kSamples; ++i) {
        const Pose p = pose_at(t0 + e * i / (kSamples - 1));
        mean.x_mm += p.x_mm / kSamples;
        mean.y_mm += p.y_mm / kSamples;
        mean.z_mm += p.z_mm / kSamples;
    }
    const Pose a = pose_at(t0);
    const Pose b = pose_at(t0 + e);

    CaptureState st;
    st.stage_x_mm = mean.x_mm;
    st.stage_y_mm = mean.y_mm;
    st.stage_z_um = mean.z_mm * 1000.0;
    st.ring_steps = ring_;
    st.led_mode = led_;
    st.x_velocity_mm_s = e > 0.0 ? (b.x_mm - a.x_mm) / e : 0.0;
    st.y_velocity_mm_s = e > 0.0 ? (b.y_mm - a.y_mm) / e : 0.0;
    // Vibration only in the XY-move sense; the last motion that changed XY
    // defines the decay origin.
    st.time_since_move_s = has_moved_ && t0 >= move_end_ ? t0 + e / 2.0 - xy_move_end_ : -1.0;
    st.isolation_pad = sim_.isolation_pad;
    st.noise_seed = mix(seed_, ++capture_count_);

    Image img;
    try {
        img = render(spec_, st, optics_, sim_, render_opts_);
    } catch (const OutOfBoundsError&) {
        return error(3);
    }
    captures_.push_back({st, net_defocus_um(spec_, st, sim_), t0});
    if (realtime_) {
        const double remaining = t0 + e + sim_.readout_s - now();
        if (remaining > 0.0)
            advance(remaining);
    } else {
        advance(e + sim_.readout_s);
    }
    WireReply r;
    r.line = "IMG " + std::to_string(img.width()) + " " + std::to_string(img.height()) + " 3\n";
    r.payload = pack_u16le(img);
    return r;
}

namespace {

bool write_all(int fd, const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    while (n > 0) {
        const ssize_t k = ::write(fd, p, n);
        if (k < 0) {
            if (errno == EINTR)
                continue;
            return false;
        }
        p += k;
        n -= static_cast<std::size_t>(k);
    }
    return true;
}

} // namespace

void serve_stream(SimMicroscope& scope, int in_fd, int out_fd, const std::atomic<bool>* stop) {
    std::string buffer;
    char chunk[4096];
    for (;;) {
        if (stop && stop->load())
            return;
        pollfd pfd{in_fd, POLLIN, 0};
        const int pr = ::poll(&pfd, 1, 100);
        if (pr < 0 && errno != EINTR)
            return;
        if (pr <= 0)
            continue;
        const ssize_t n = ::read(in_fd, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            return;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t nl;
        while ((nl = buffer.find('\n')) != std::string::npos) {
            const std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            const WireReply r = scope.handle(line);
            if (!write_all(out_fd, r.line.data(), r.line.size()) ||
                !write_all(out_fd, r.payload.data(), r.payload.size()))
                return;
        }
    }
}

void serve_tcp(SimMicroscope& scope, int port, const std::atomic<bool>& stop,
               const std::function<void(int)>& on_listening) {
    const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
    if (srv < 0)
        throw DeviceError("socket() failed");
    const int one = 1;
    ::setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(srv, 1) < 0) {
        ::close(srv);
        throw DeviceError("cannot listen on port " + std::to_string(port));
    }
    socklen_t len = sizeof addr;
    ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
    if (on_listening)
        on_listening(ntohs(addr.sin_port));
    while (!stop.load()) {
        pollfd pfd{srv, POLLIN, 0};
        if (::poll(&pfd, 1, 100) <= 0)
            continue;
        const int client = ::accept(srv, nullptr, nullptr);
        if (client < 0)
            continue;
        serve_stream(scope, client, client, &stop);
        ::close(client);
    }
    ::close(srv);
}

} // namespace wsi
