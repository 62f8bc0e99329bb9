#include "symphony/transport_address.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace symphony::transport {

std::string transport_address::to_string() const
{
	return std::string(proto == protocol::udp ? "brunet.udp:" : "brunet.tcp:") + host + ":"
		+ std::to_string(port);
}

transport_address parse_ta(std::string_view text)
{
	auto const first = text.find(':');
	auto const last = text.rfind(':');
	if (first == std::string_view::npos || first == last)
		throw malformed_transport_address("transport address needs scheme:host:port");

	std::string scheme(text.substr(0, first));
	std::transform(scheme.begin(), scheme.end(), scheme.begin()
		, [](unsigned char c) { return char(std::tolower(c)); });

	transport_address ta;
	if (scheme == "brunet.udp") ta.proto = protocol::udp;
	else if (scheme == "brunet.tcp") ta.proto = protocol::tcp;
	else throw malformed_transport_address("unknown transport scheme: " + scheme);

	ta.host = std::string(text.substr(first + 1, last - first - 1));
	if (ta.host.empty()) throw malformed_transport_address("empty host");

	auto const port_text = text.substr(last + 1);
	unsigned port = 0;
	auto const [end, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
	if (ec != std::errc{} || end != port_text.data() + port_text.size() || port_text.empty())
		throw malformed_transport_address("bad port");
	if (port == 0 || port > 65535) throw malformed_transport_address("port out of range");
	ta.port = std::uint16_t(port);
	return ta;
}

} // namespace symphony::transport
