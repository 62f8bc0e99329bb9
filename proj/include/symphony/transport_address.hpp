#ifndef SYMPHONY_TRANSPORT_ADDRESS_HPP
#define SYMPHONY_TRANSPORT_ADDRESS_HPP

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace symphony::transport {

enum class protocol : std::uint8_t { udp, tcp };

// Endpoint of an edge, written brunet.<proto>:<host>:<port>
struct transport_address
{
	protocol proto = protocol::udp;
	std::string host;
	std::uint16_t port = 0;

	std::string to_string() const;

	friend bool operator==(transport_address const&, transport_address const&) = default;
	friend std::strong_ordering operator<=>(transport_address const&, transport_address const&) = default;
};

class malformed_transport_address : public std::invalid_argument
{
public:
	using std::invalid_argument::invalid_argument;
};

// The scheme is case insensitive. Port 0 is rejected.
transport_address parse_ta(std::string_view text);

} // namespace symphony::transport

#endif
