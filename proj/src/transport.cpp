#include "symphony/transport.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

namespace symphony::transport {

namespace {

std::string error_text(char const* what)
{
	return std::string(what) + ": " + std::strerror(errno);
}

sockaddr_in resolve(std::string const& host, std::uint16_t port)
{
	sockaddr_in sa{};
	sa.sin_family = AF_INET;
	sa.sin_port = htons(port);
	if (inet_pton(AF_INET, host.c_str(), &sa.sin_addr) == 1) return sa;

	addrinfo hints{};
	hints.ai_family = AF_INET;
	addrinfo* res = nullptr;
	if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
		throw transport_error("cannot resolve host " + host);
	sa.sin_addr = reinterpret_cast<sockaddr_in const*>(res->ai_addr)->sin_addr;
	freeaddrinfo(res);
	return sa;
}

transport_address to_ta(protocol proto, sockaddr_in const& sa)
{
	char buf[INET_ADDRSTRLEN] = {};
	inet_ntop(AF_INET, &sa.sin_addr, buf, sizeof buf);
	return {proto, buf, ntohs(sa.sin_port)};
}

void set_nonblocking(int fd)
{
	int const flags = fcntl(fd, F_GETFL, 0);
	fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

socket_handle bound_socket(int type, std::string const& host, std::uint16_t port, transport_address& local)
{
	socket_handle s(::socket(AF_INET, type, 0));
	if (!s) throw bind_failed(error_text("socket"));
	int one = 1;
	setsockopt(s.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
	set_nonblocking(s.get());
	sockaddr_in sa = resolve(host, port);
	if (::bind(s.get(), reinterpret_cast<sockaddr const*>(&sa), sizeof sa) != 0)
		throw bind_failed(error_text("bind"));
	socklen_t len = sizeof sa;
	getsockname(s.get(), reinterpret_cast<sockaddr*>(&sa), &len);
	local = to_ta(type == SOCK_DGRAM ? protocol::udp : protocol::tcp, sa);
	return s;
}

} // namespace

std::vector<std::uint8_t> frame(std::span<std::uint8_t const> packet)
{
	if (packet.size() > max_frame)
		throw frame_too_large("packet of " + std::to_string(packet.size()) + " bytes exceeds the frame limit");
	std::vector<std::uint8_t> out;
	out.reserve(packet.size() + 2);
	out.push_back(std::uint8_t(packet.size() >> 8));
	out.push_back(std::uint8_t(packet.size() & 0xff));
	out.insert(out.end(), packet.begin(), packet.end());
	return out;
}

void frame_decoder::feed(std::span<std::uint8_t const> bytes)
{
	if (m_pos > 0 && m_pos == m_buf.size())
	{
		m_buf.clear();
		m_pos = 0;
	}
	m_buf.insert(m_buf.end(), bytes.begin(), bytes.end());
}

std::optional<std::vector<std::uint8_t>> frame_decoder::next()
{
	if (buffered() < 2) return std::nullopt;
	std::size_t const len = (std::size_t(m_buf[m_pos]) << 8) | m_buf[m_pos + 1];
	if (buffered() < 2 + len) return std::nullopt;
	auto const first = m_buf.begin() + std::ptrdiff_t(m_pos + 2);
	std::vector<std::uint8_t> out(first, first + std::ptrdiff_t(len));
	m_pos += 2 + len;
	if (m_pos > 65536 && m_pos * 2 > m_buf.size())
	{
		m_buf.erase(m_buf.begin(), m_buf.begin() + std::ptrdiff_t(m_pos));
		m_pos = 0;
	}
	return out;
}

socket_handle::~socket_handle()
{
	if (m_fd >= 0) ::close(m_fd);
}

socket_handle& socket_handle::operator=(socket_handle&& o) noexcept
{
	if (this != &o)
	{
		if (m_fd >= 0) ::close(m_fd);
		m_fd = std::exchange(o.m_fd, -1);
	}
	return *this;
}

udp_socket::udp_socket(std::string const& host, std::uint16_t port)
	: m_sock(bound_socket(SOCK_DGRAM, host, port, m_local))
{
}

void udp_socket::send_to(transport_address const& to, std::span<std::uint8_t const> packet)
{
	sockaddr_in const sa = resolve(to.host, to.port);
	ssize_t const n = ::sendto(m_sock.get(), packet.data(), packet.size(), 0
		, reinterpret_cast<sockaddr const*>(&sa), sizeof sa);
	if (n < 0 || std::size_t(n) != packet.size()) throw send_failed(error_text("sendto"));
}

std::optional<std::pair<transport_address, std::vector<std::uint8_t>>> udp_socket::receive()
{
	std::vector<std::uint8_t> buf(65536);
	sockaddr_in sa{};
	socklen_t len = sizeof sa;
	ssize_t const n = ::recvfrom(m_sock.get(), buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&sa), &len);
	if (n < 0) return std::nullopt;
	buf.resize(std::size_t(n));
	return std::pair{to_ta(protocol::udp, sa), std::move(buf)};
}

tcp_stream tcp_stream::connect(transport_address const& to)
{
	socket_handle s(::socket(AF_INET, SOCK_STREAM, 0));
	if (!s) throw connect_failed(error_text("socket"));
	set_nonblocking(s.get());
	int one = 1;
	setsockopt(s.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
	sockaddr_in const sa = resolve(to.host, to.port);
	if (::connect(s.get(), reinterpret_cast<sockaddr const*>(&sa), sizeof sa) != 0 && errno != EINPROGRESS)
		throw connect_failed(error_text("connect"));
	return tcp_stream(std::move(s), to, state::opening);
}

tcp_stream::tcp_stream(socket_handle sock, transport_address remote, state st)
	: m_sock(std::move(sock))
	, m_remote(std::move(remote))
	, m_state(st)
{
}

void tcp_stream::send(std::span<std::uint8_t const> packet)
{
	auto const f = frame(packet);
	m_out.insert(m_out.end(), f.begin(), f.end());
}

void tcp_stream::flush()
{
	if (m_state == state::closed) throw send_failed("stream closed");
	if (m_state == state::opening)
	{
		int err = 0;
		socklen_t len = sizeof err;
		getsockopt(m_sock.get(), SOL_SOCKET, SO_ERROR, &err, &len);
		if (err != 0)
		{
			m_state = state::closed;
			errno = err;
			throw connect_failed(error_text("connect"));
		}
		sockaddr_in peer{};
		len = sizeof peer;
		if (getpeername(m_sock.get(), reinterpret_cast<sockaddr*>(&peer), &len) != 0) return;
		m_state = state::open;
	}
	while (!m_out.empty())
	{
		std::uint8_t chunk[16384];
		std::size_t const n = std::min(m_out.size(), sizeof chunk);
		std::copy_n(m_out.begin(), n, chunk);
		ssize_t const w = ::send(m_sock.get(), chunk, n, MSG_NOSIGNAL);
		if (w < 0)
		{
			if (errno == EAGAIN || errno == EWOULDBLOCK) return;
			m_state = state::closed;
			throw send_failed(error_text("send"));
		}
		m_out.erase(m_out.begin(), m_out.begin() + w);
	}
}

std::vector<std::vector<std::uint8_t>> tcp_stream::receive()
{
	std::vector<std::vector<std::uint8_t>> out;
	std::uint8_t buf[16384];
	for (;;)
	{
		ssize_t const n = ::recv(m_sock.get(), buf, sizeof buf, 0);
		if (n > 0)
		{
			m_in.feed(std::span(buf, std::size_t(n)));
			continue;
		}
		if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
		while (auto p = m_in.next()) out.push_back(std::move(*p));
		m_state = state::closed;
		if (out.empty()) throw peer_closed("peer closed the stream");
		return out;
	}
	while (auto p = m_in.next()) out.push_back(std::move(*p));
	return out;
}

void tcp_stream::close()
{
	m_sock = socket_handle();
	m_state = state::closed;
}

tcp_listener::tcp_listener(std::string const& host, std::uint16_t port)
	: m_sock(bound_socket(SOCK_STREAM, host, port, m_local))
{
	if (::listen(m_sock.get(), 64) != 0) throw bind_failed(error_text("listen"));
}

std::optional<tcp_stream> tcp_listener::accept()
{
	sockaddr_in sa{};
	socklen_t len = sizeof sa;
	socket_handle s(::accept(m_sock.get(), reinterpret_cast<sockaddr*>(&sa), &len));
	if (!s) return std::nullopt;
	set_nonblocking(s.get());
	int one = 1;
	setsockopt(s.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
	return tcp_stream(std::move(s), to_ta(protocol::tcp, sa), tcp_stream::state::open);
}

} // namespace symphony::transport
