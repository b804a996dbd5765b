#include "gaitstream/wire.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <tuple>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "json.hpp"

#include "gaitstream/errors.hpp"
#include "gaitstream/numfmt.hpp"

namespace gaitstream {

using nlohmann::json;

namespace {

json parse_object(std::string_view line, const char* what)
{
    json j = json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded()) {
        throw ProtocolError(std::string(what) + " is not valid JSON");
    }
    if (!j.is_object()) {
        throw ProtocolError(std::string(what) + " must be a JSON object");
    }
    return j;
}

template <typename T>
T field(const json& j, const char* key, const char* what)
{
    const auto it = j.find(key);
    if (it == j.end()) {
        throw ProtocolError(std::string(what) + " is missing '" + key + "'");
    }
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ProtocolError(std::string(what) + " has a malformed '" + key + "'");
    }
}

[[noreturn]] void fail(const std::string& what)
{
    throw ProtocolError(what + ": " + std::strerror(errno));
}

} // namespace

Handshake parse_handshake(std::string_view line)
{
    const json j = parse_object(line, "handshake");
    const auto it = j.find("channels");
    if (it == j.end() || !it->is_array() || it->empty()) {
        throw ProtocolError("handshake needs a non-empty 'channels' array");
    }
    Handshake h;
    for (const auto& c : *it) {
        if (!c.is_object()) {
            throw ProtocolError("handshake channel entries must be objects");
        }
        ChannelInfo info;
        info.channel_id = field<std::string>(c, "ch", "handshake channel");
        try {
            info.modality = parse_modality(field<std::string>(c, "modality", "handshake channel"));
        } catch (const ValidationError& e) {
            throw ProtocolError(e.what());
        }
        info.rate_hz = field<double>(c, "rate_hz", "handshake channel");
        h.channels.push_back(std::move(info));
    }
    if (const auto m = j.find("model"); m != j.end() && !m->is_null()) {
        h.model = field<std::string>(j, "model", "handshake");
    }
    return h;
}

std::string encode_handshake(const Handshake& h)
{
    json ch = json::array();
    for (const auto& c : h.channels) {
        ch.push_back({{"ch", c.channel_id}, {"modality", std::string(to_string(c.modality))}, {"rate_hz", c.rate_hz}});
    }
    json j = {{"channels", ch}};
    if (h.model) {
        j["model"] = *h.model;
    }
    return j.dump();
}

StreamFrame parse_frame(std::string_view line)
{
    const json j = parse_object(line, "frame");
    StreamFrame f;
    f.seq = field<std::int64_t>(j, "seq", "frame");
    f.t_s = field<double>(j, "t", "frame");
    f.channel_id = field<std::string>(j, "ch", "frame");
    const auto v = j.find("v");
    if (v == j.end() || !v->is_array()) {
        throw ProtocolError("frame needs a 'v' array");
    }
    f.values.reserve(v->size());
    for (const auto& x : *v) {
        // null stands for a non-finite value; the ingest step rejects it
        if (x.is_null()) {
            f.values.push_back(std::nan(""));
        } else if (x.is_number()) {
            f.values.push_back(x.get<double>());
        } else {
            throw ProtocolError("frame values must be numbers");
        }
    }
    if (const auto p = j.find("prox"); p != j.end() && !p->is_null()) {
        if (!p->is_number()) {
            throw ProtocolError("frame has a malformed 'prox'");
        }
        f.proximity_m = p->get<double>();
    }
    return f;
}

std::string encode_frame(const StreamFrame& f)
{
    json j = {{"seq", f.seq}, {"t", f.t_s}, {"ch", f.channel_id}, {"v", f.values}};
    j["prox"] = f.proximity_m ? json(*f.proximity_m) : json(nullptr);
    return j.dump();
}

std::string encode_alert(const AlertEvent& a)
{
    json j = {{"t", a.t_s},
              {"kind", a.kind},
              {"conf", a.confidence},
              {"window", {a.window_start_s, a.window_end_s}}};
    return j.dump();
}

std::string encode_prediction(const Prediction& p)
{
    json j = {{"prediction", p.class_name},
              {"label", p.label},
              {"conf", p.confidence},
              {"window", {p.start_s, p.end_s}},
              {"index", p.index}};
    return j.dump();
}

std::vector<StreamFrame> session_frames(const Session& s, std::size_t frame_size, std::optional<double> proximity_m)
{
    if (frame_size == 0) {
        throw InputError("frame size must be positive");
    }
    struct Pending {
        std::size_t first;
        std::size_t channel;
        StreamFrame frame;
    };
    std::vector<Pending> all;
    for (std::size_t ci = 0; ci < s.channels.size(); ++ci) {
        const auto& c = s.channels[ci];
        std::int64_t seq = 0;
        std::size_t i = 0;
        const std::size_t n = c.samples.size();
        while (i < n) {
            if (!c.gap_mask.empty() && c.gap_mask[i]) {
                ++i;
                continue;
            }
            std::size_t end = i;
            while (end < n && end - i < frame_size && (c.gap_mask.empty() || !c.gap_mask[end])) {
                ++end;
            }
            StreamFrame f;
            f.seq = seq++;
            f.t_s = static_cast<double>(i) / c.rate_hz;
            f.channel_id = c.channel_id;
            f.values.assign(c.samples.begin() + static_cast<std::ptrdiff_t>(i),
                            c.samples.begin() + static_cast<std::ptrdiff_t>(end));
            f.proximity_m = proximity_m;
            all.push_back({i, ci, std::move(f)});
            i = end;
        }
    }
    std::stable_sort(all.begin(), all.end(), [](const Pending& a, const Pending& b) {
        return std::tie(a.frame.t_s, a.channel) < std::tie(b.frame.t_s, b.channel);
    });
    std::vector<StreamFrame> out;
    out.reserve(all.size());
    for (auto& p : all) {
        out.push_back(std::move(p.frame));
    }
    return out;
}

Socket& Socket::operator=(Socket&& o) noexcept
{
    if (this != &o) {
        if (fd_ >= 0) {
            ::close(fd_);
        }
        fd_ = o.fd_;
        o.fd_ = -1;
    }
    return *this;
}

Socket::~Socket()
{
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

void Socket::write_all(std::string_view data)
{
    while (!data.empty()) {
        const ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            fail("send");
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

void Socket::read_lines(const std::function<void(std::string_view)>& on_line)
{
    std::string buf;
    char chunk[65536];
    while (true) {
        const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            fail("recv");
        }
        if (n == 0) {
            break;
        }
        buf.append(chunk, static_cast<std::size_t>(n));
        std::size_t start = 0;
        for (std::size_t nl; (nl = buf.find('\n', start)) != std::string::npos; start = nl + 1) {
            on_line(std::string_view(buf).substr(start, nl - start));
        }
        buf.erase(0, start);
    }
    if (!buf.empty()) {
        on_line(buf);
    }
}

namespace {

addrinfo* resolve(const std::string& host, std::uint16_t port, bool passive)
{
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) {
        hints.ai_flags = AI_PASSIVE;
    }
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res);
    if (rc != 0) {
        throw ProtocolError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
    }
    return res;
}

} // namespace

Socket listen_tcp(const std::string& host, std::uint16_t port)
{
    addrinfo* res = resolve(host, port, true);
    Socket s;
    for (addrinfo* a = res; a; a = a->ai_next) {
        Socket cand(::socket(a->ai_family, a->ai_socktype, a->ai_protocol));
        if (!cand.valid()) {
            continue;
        }
        const int one = 1;
        ::setsockopt(cand.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(cand.fd(), a->ai_addr, a->ai_addrlen) == 0 && ::listen(cand.fd(), 8) == 0) {
            s = std::move(cand);
            break;
        }
    }
    ::freeaddrinfo(res);
    if (!s.valid()) {
        fail("cannot listen on " + host + ":" + std::to_string(port));
    }
    return s;
}

std::uint16_t local_port(const Socket& listener)
{
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    if (::getsockname(listener.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        fail("getsockname");
    }
    if (addr.ss_family == AF_INET6) {
        return ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
    }
    return ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

Socket accept_one(const Socket& listener)
{
    while (true) {
        const int fd = ::accept(listener.fd(), nullptr, nullptr);
        if (fd >= 0) {
            return Socket(fd);
        }
        if (errno != EINTR) {
            fail("accept");
        }
    }
}

Socket connect_tcp(const std::string& host, std::uint16_t port)
{
    addrinfo* res = resolve(host, port, false);
    Socket s;
    for (addrinfo* a = res; a; a = a->ai_next) {
        Socket cand(::socket(a->ai_family, a->ai_socktype, a->ai_protocol));
        if (cand.valid() && ::connect(cand.fd(), a->ai_addr, a->ai_addrlen) == 0) {
            s = std::move(cand);
            break;
        }
    }
    ::freeaddrinfo(res);
    if (!s.valid()) {
        fail("cannot connect to " + host + ":" + std::to_string(port));
    }
    return s;
}

} // namespace gaitstream
