#ifndef SYMPHONY_PACKET_HPP
#define SYMPHONY_PACKET_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "symphony/address.hpp"

namespace symphony {

// Wire layout of the 46 byte header. Multi-byte integers are big endian.
//
//   offset  size  field
//        0     1  type          0x01 link-local, 0x02 routed
//        1     2  hops
//        3     2  ttl
//        5    20  source address
//       25    20  destination address
//       45     1  payload type
//       46     -  payload
//
// There is no checksum; edges are required to deliver whole, uncorrupted
// packets.
enum class packet_type : std::uint8_t
{
	link = 0x01,
	routed = 0x02,
};

enum class payload_type : std::uint8_t
{
	application = 0x00,
	link_protocol = 0x01,
	status = 0x02,
	connection_request = 0x03,
};

inline constexpr std::size_t header_size = 46;
inline constexpr std::uint16_t default_ttl = 100;

struct packet_header
{
	packet_type type = packet_type::routed;
	std::uint16_t hops = 0;
	std::uint16_t ttl = default_ttl;
	address source;
	address destination;
	payload_type payload = payload_type::application;

	friend bool operator==(packet_header const&, packet_header const&) = default;
};

struct packet
{
	packet_header header;
	std::vector<std::uint8_t> payload;

	friend bool operator==(packet const&, packet const&) = default;
};

class decode_error : public std::runtime_error
{
public:
	enum class kind { too_short, unknown_type };

	decode_error(kind k, char const* what) : std::runtime_error(what), m_kind(k) {}
	kind reason() const { return m_kind; }

private:
	kind m_kind;
};

std::vector<std::uint8_t> encode(packet const& p);
void encode_header(packet_header const& h, std::span<std::uint8_t, header_size> out);

// throws decode_error
packet decode(std::span<std::uint8_t const> bytes);

// Copy with hops + 1, or nullopt when the packet has used up its ttl.
std::optional<packet> advance_hop(packet const& p);

} // namespace symphony

#endif
