#ifndef SYMPHONY_MESSAGES_HPP
#define SYMPHONY_MESSAGES_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "symphony/address.hpp"
#include "symphony/routing.hpp"
#include "symphony/transport_address.hpp"

// Payload bodies carried by overlay packets. Every field is encoded in order:
//
//   u8 / u16 / u32   big endian integers
//   address          20 bytes, big endian
//   string           u16 length, then that many bytes
//   ta               string holding the textual transport address
//   list<T>          u8 count, then count elements
//   optional<T>      u8 presence flag (0 or 1), then T if present
//
// link body (payload type 0x01):
//   u8 kind, address sender, string connection_type, u32 token,
//   list<ta> sender_tas, optional<ta> observed_remote, optional<ta> observed_local
// status body (payload type 0x02):
//   u8 kind, address sender, list<peer> neighbors
//   where peer = address, list<ta>
// connection request body (payload type 0x03):
//   u8 kind, u8 routing_mode, u8 flags, u32 id, string connection_type,
//   address subject, list<ta> subject_tas
namespace symphony::overlay {

using transport::transport_address;

class message_error : public std::runtime_error
{
public:
	using std::runtime_error::runtime_error;
};

namespace connection_type {
inline constexpr char const* leaf = "leaf";
inline constexpr char const* near = "structured.near";
inline constexpr char const* shortcut = "structured.shortcut";
} // namespace connection_type

struct peer_info
{
	address addr;
	std::vector<transport_address> tas;

	friend bool operator==(peer_info const&, peer_info const&) = default;
};

struct link_message
{
	enum class kind : std::uint8_t
	{
		request = 1,
		response = 2,
		close = 3,
		ping = 4,
		pong = 5,
		error = 6,
	};

	kind what = kind::request;
	address sender;
	std::string connection_type;
	// id of the connection request this link answers, 0 if none
	std::uint32_t token = 0;
	std::vector<transport_address> sender_tas;
	// the receiver's endpoint as the sender sees it
	std::optional<transport_address> observed_remote;
	// the sender's own endpoint as it sees it
	std::optional<transport_address> observed_local;

	friend bool operator==(link_message const&, link_message const&) = default;
};

struct status_message
{
	enum class kind : std::uint8_t { request = 1, response = 2 };

	kind what = kind::request;
	address sender;
	// structured.near peers of the sender
	std::vector<peer_info> neighbors;

	friend bool operator==(status_message const&, status_message const&) = default;
};

struct connection_request
{
	enum class kind : std::uint8_t { request = 1, response = 2 };
	enum flag : std::uint8_t
	{
		join = 1,
		already_connected = 2,
		directional = 4,
	};

	kind what = kind::request;
	routing::mode mode = routing::mode::greedy;
	std::uint8_t flags = 0;
	std::uint32_t id = 0;
	std::string connection_type;
	// the requester for a request, the responder for a response
	address subject;
	std::vector<transport_address> subject_tas;

	bool has(flag f) const { return (flags & f) != 0; }

	friend bool operator==(connection_request const&, connection_request const&) = default;
};

std::vector<std::uint8_t> encode(link_message const& m);
std::vector<std::uint8_t> encode(status_message const& m);
std::vector<std::uint8_t> encode(connection_request const& m);

// throw message_error on malformed input
link_message decode_link(std::span<std::uint8_t const> body);
status_message decode_status(std::span<std::uint8_t const> body);
connection_request decode_connection_request(std::span<std::uint8_t const> body);

} // namespace symphony::overlay

#endif
