#ifndef SYMPHONY_TRANSPORT_HPP
#define SYMPHONY_TRANSPORT_HPP

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "symphony/transport_address.hpp"

namespace symphony::transport {

class transport_error : public std::runtime_error
{
public:
	using std::runtime_error::runtime_error;
};

class bind_failed : public transport_error
{
public:
	using transport_error::transport_error;
};

class send_failed : public transport_error
{
public:
	using transport_error::transport_error;
};

class connect_failed : public transport_error
{
public:
	using transport_error::transport_error;
};

class peer_closed : public transport_error
{
public:
	using transport_error::transport_error;
};

class frame_too_large : public transport_error
{
public:
	using transport_error::transport_error;
};

// largest packet a 2 octet length prefix can carry
inline constexpr std::size_t max_frame = 65535;

// Prefixes a packet with its length as 2 big endian octets.
// Throws frame_too_large above max_frame.
std::vector<std::uint8_t> frame(std::span<std::uint8_t const> packet);

// Reassembles length prefixed packets from a byte stream. Only whole
// packets come out.
class frame_decoder
{
public:
	void feed(std::span<std::uint8_t const> bytes);
	std::optional<std::vector<std::uint8_t>> next();
	std::size_t buffered() const { return m_buf.size() - m_pos; }

private:
	std::vector<std::uint8_t> m_buf;
	std::size_t m_pos = 0;
};

// Owns a file descriptor.
class socket_handle
{
public:
	socket_handle() = default;
	explicit socket_handle(int fd) : m_fd(fd) {}
	~socket_handle();
	socket_handle(socket_handle&& o) noexcept : m_fd(std::exchange(o.m_fd, -1)) {}
	socket_handle& operator=(socket_handle&& o) noexcept;

	int get() const { return m_fd; }
	explicit operator bool() const { return m_fd >= 0; }

private:
	int m_fd = -1;
};

// Non-blocking datagram socket; every datagram is one packet.
class udp_socket
{
public:
	// Port 0 binds an ephemeral port. Throws bind_failed.
	udp_socket(std::string const& host, std::uint16_t port);

	int fd() const { return m_sock.get(); }
	transport_address const& local() const { return m_local; }

	// Throws send_failed. Datagrams above the usual MTU are sent anyway.
	void send_to(transport_address const& to, std::span<std::uint8_t const> packet);
	// next waiting datagram and its source, nullopt when none is waiting
	std::optional<std::pair<transport_address, std::vector<std::uint8_t>>> receive();

private:
	// filled in while binding m_sock
	transport_address m_local;
	socket_handle m_sock;
};

// Non-blocking stream carrying length prefixed packets.
class tcp_stream
{
public:
	enum class state : std::uint8_t { opening, open, closed };

	// Starts connecting; completion shows up as writability. Throws connect_failed.
	static tcp_stream connect(transport_address const& to);
	tcp_stream(socket_handle sock, transport_address remote, state st);

	int fd() const { return m_sock.get(); }
	state status() const { return m_state; }
	transport_address const& remote() const { return m_remote; }

	// Queues one packet. Throws frame_too_large.
	void send(std::span<std::uint8_t const> packet);
	bool wants_write() const { return m_state == state::opening || !m_out.empty(); }
	// Writes what the socket accepts. Throws connect_failed while opening and
	// send_failed afterwards.
	void flush();
	// Reads what is waiting and returns the whole packets. Throws peer_closed.
	std::vector<std::vector<std::uint8_t>> receive();
	void close();

private:
	socket_handle m_sock;
	transport_address m_remote;
	state m_state;
	std::deque<std::uint8_t> m_out;
	frame_decoder m_in;
};

class tcp_listener
{
public:
	// Throws bind_failed.
	tcp_listener(std::string const& host, std::uint16_t port);

	int fd() const { return m_sock.get(); }
	transport_address const& local() const { return m_local; }
	// a pending connection, nullopt when none is waiting
	std::optional<tcp_stream> accept();

private:
	// filled in while binding m_sock
	transport_address m_local;
	socket_handle m_sock;
};

} // namespace symphony::transport

#endif
