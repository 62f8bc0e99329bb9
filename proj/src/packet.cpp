#include "symphony/packet.hpp"

#include <algorithm>

namespace symphony {

namespace {

void put_u16(std::uint8_t* out, std::uint16_t v)
{
	out[0] = std::uint8_t(v >> 8);
	out[1] = std::uint8_t(v);
}

std::uint16_t get_u16(std::uint8_t const* in)
{
	return std::uint16_t(in[0] << 8 | in[1]);
}

} // namespace

void encode_header(packet_header const& h, std::span<std::uint8_t, header_size> out)
{
	out[0] = std::uint8_t(h.type);
	put_u16(&out[1], h.hops);
	put_u16(&out[3], h.ttl);
	auto const src = h.source.value().to_bytes();
	auto const dst = h.destination.value().to_bytes();
	std::copy(src.begin(), src.end(), out.begin() + 5);
	std::copy(dst.begin(), dst.end(), out.begin() + 25);
	out[45] = std::uint8_t(h.payload);
}

std::vector<std::uint8_t> encode(packet const& p)
{
	std::vector<std::uint8_t> out(header_size + p.payload.size());
	encode_header(p.header, std::span<std::uint8_t, header_size>(out.data(), header_size));
	std::copy(p.payload.begin(), p.payload.end(), out.begin() + header_size);
	return out;
}

packet decode(std::span<std::uint8_t const> bytes)
{
	if (bytes.size() < header_size)
		throw decode_error(decode_error::kind::too_short, "packet shorter than 46 byte header");
	if (bytes[0] != std::uint8_t(packet_type::link) && bytes[0] != std::uint8_t(packet_type::routed))
		throw decode_error(decode_error::kind::unknown_type, "unknown packet type");

	packet p;
	p.header.type = packet_type(bytes[0]);
	p.header.hops = get_u16(&bytes[1]);
	p.header.ttl = get_u16(&bytes[3]);
	p.header.source = address(uint160::from_bytes(bytes.subspan(5, 20)));
	p.header.destination = address(uint160::from_bytes(bytes.subspan(25, 20)));
	p.header.payload = payload_type(bytes[45]);
	p.payload.assign(bytes.begin() + header_size, bytes.end());
	return p;
}

std::optional<packet> advance_hop(packet const& p)
{
	if (p.header.hops >= p.header.ttl) return std::nullopt;
	packet next = p;
	++next.header.hops;
	return next;
}

} // namespace symphony
