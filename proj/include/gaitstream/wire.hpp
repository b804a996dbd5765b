#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <string>
#include <string_view>

#include "gaitstream/stream.hpp"

namespace gaitstream {

// Newline-delimited JSON codec. Parsers throw ProtocolError.
Handshake parse_handshake(std::string_view line);
std::string encode_handshake(const Handshake& h);
StreamFrame parse_frame(std::string_view line);
std::string encode_frame(const StreamFrame& f);
std::string encode_alert(const AlertEvent& a);
std::string encode_prediction(const Prediction& p);

// Frames of a stored session in time order, `frame_size` samples each, with
// seq counting per channel. Gap samples are skipped, so a frame after a gap
// starts at a later timestamp.
std::vector<StreamFrame> session_frames(const Session& s, std::size_t frame_size,
                                        std::optional<double> proximity_m = std::nullopt);

// Minimal POSIX TCP helpers. All throw ProtocolError on socket failures.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket();

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void write_all(std::string_view data);
    // Calls `on_line` for every complete line until the peer closes.
    void read_lines(const std::function<void(std::string_view)>& on_line);

private:
    int fd_ = -1;
};

Socket listen_tcp(const std::string& host, std::uint16_t port);
std::uint16_t local_port(const Socket& listener);
Socket accept_one(const Socket& listener);
Socket connect_tcp(const std::string& host, std::uint16_t port);

} // namespace gaitstream
