#include <gtest/gtest.h>

#include <poll.h>

#include <random>

#include "oracle.hpp"
#include "symphony/loopback.hpp"
#include "symphony/packet.hpp"
#include "symphony/transport.hpp"

using namespace symphony;
using namespace symphony::transport;

namespace {

bool readable(int fd, int ms = 2000)
{
	pollfd p{fd, POLLIN, 0};
	return ::poll(&p, 1, ms) > 0;
}

packet random_packet(std::mt19937_64& rng, std::size_t max_payload)
{
	packet p;
	p.header.type = packet_type::routed;
	p.header.hops = std::uint16_t(rng() % 100);
	p.header.ttl = 100;
	p.header.source = oracle::addr(oracle::random_value(rng));
	p.header.destination = oracle::addr(oracle::random_value(rng));
	p.payload.resize(rng() % (max_payload + 1));
	for (auto& b : p.payload) b = std::uint8_t(rng());
	return p;
}

std::pair<tcp_stream, tcp_stream> connected_pair(tcp_listener& l)
{
	auto out = tcp_stream::connect(l.local());
	EXPECT_TRUE(readable(l.fd()));
	auto in = l.accept();
	EXPECT_TRUE(in.has_value());
	return {std::move(out), std::move(*in)};
}

void flush_all(tcp_stream& s)
{
	while (s.wants_write())
	{
		pollfd p{s.fd(), POLLOUT, 0};
		ASSERT_GT(::poll(&p, 1, 2000), 0);
		s.flush();
	}
}

} // namespace

TEST(parse_ta, literal_example)
{
	auto const ta = parse_ta("brunet.tcp:192.168.0.1:10030");
	EXPECT_EQ(ta.proto, protocol::tcp);
	EXPECT_EQ(ta.host, "192.168.0.1");
	EXPECT_EQ(ta.port, 10030);
}

TEST(parse_ta, rejects_bad_input)
{
	EXPECT_THROW(parse_ta("brunet.udp:127.0.0.1:0"), malformed_transport_address);
	EXPECT_THROW(parse_ta("brunet.udp:127.0.0.1:65536"), malformed_transport_address);
	EXPECT_THROW(parse_ta("brunet.sctp:127.0.0.1:5"), malformed_transport_address);
	EXPECT_THROW(parse_ta("brunet.udp::5"), malformed_transport_address);
	EXPECT_THROW(parse_ta("brunet.udp:host"), malformed_transport_address);
	EXPECT_THROW(parse_ta("brunet.udp:host:12x"), malformed_transport_address);
}

TEST(parse_ta, scheme_is_case_insensitive)
{
	EXPECT_EQ(parse_ta("Brunet.UDP:example.org:7").proto, protocol::udp);
}

TEST(parse_ta, format_then_parse_is_identity)
{
	std::mt19937_64 rng(1);
	for (int i = 0; i < 500; ++i)
	{
		transport_address ta;
		ta.proto = rng() % 2 ? protocol::udp : protocol::tcp;
		ta.host = "10." + std::to_string(rng() % 256) + ".0." + std::to_string(rng() % 256);
		ta.port = std::uint16_t(rng() % 65535 + 1);
		EXPECT_EQ(parse_ta(ta.to_string()), ta);
	}
}

TEST(framing, length_prefix_is_two_big_endian_octets)
{
	std::vector<std::uint8_t> const p(300, 7);
	auto const f = frame(p);
	ASSERT_EQ(f.size(), 302u);
	EXPECT_EQ(f[0], 0x01);
	EXPECT_EQ(f[1], 0x2c);
}

TEST(framing, decoder_never_surfaces_partial_packets)
{
	std::mt19937_64 rng(2);
	std::vector<std::vector<std::uint8_t>> sent;
	std::vector<std::uint8_t> stream;
	for (int i = 0; i < 200; ++i)
	{
		auto const bytes = encode(random_packet(rng, 500));
		sent.push_back(bytes);
		auto const f = frame(bytes);
		stream.insert(stream.end(), f.begin(), f.end());
	}
	frame_decoder d;
	std::vector<std::vector<std::uint8_t>> got;
	std::size_t pos = 0;
	while (pos < stream.size())
	{
		std::size_t const chunk = std::min<std::size_t>(rng() % 97 + 1, stream.size() - pos);
		d.feed(std::span(stream.data() + pos, chunk));
		pos += chunk;
		while (auto p = d.next()) got.push_back(std::move(*p));
	}
	EXPECT_EQ(got, sent);
	EXPECT_EQ(d.buffered(), 0u);
}

TEST(framing, oversized_packet_rejected_at_send)
{
	tcp_listener l("127.0.0.1", 0);
	auto [out, in] = connected_pair(l);
	packet p;
	p.payload.resize(max_frame - header_size + 1);
	EXPECT_THROW(out.send(encode(p)), frame_too_large);
	p.payload.resize(max_frame - header_size);
	EXPECT_NO_THROW(out.send(encode(p)));
}

TEST(tcp_stream, thousand_packets_arrive_whole_and_in_order)
{
	tcp_listener l("127.0.0.1", 0);
	auto [out, in] = connected_pair(l);
	std::mt19937_64 rng(3);
	std::vector<std::vector<std::uint8_t>> sent;
	for (int i = 0; i < 1000; ++i)
	{
		sent.push_back(encode(random_packet(rng, 3000)));
		out.send(sent.back());
	}
	std::vector<std::vector<std::uint8_t>> got;
	while (got.size() < sent.size())
	{
		if (out.wants_write()) out.flush();
		if (!readable(in.fd(), 50)) continue;
		for (auto& p : in.receive()) got.push_back(std::move(p));
	}
	EXPECT_EQ(got, sent);
	for (auto const& g : got) EXPECT_NO_THROW(decode(g));
}

TEST(tcp_stream, closing_side_is_seen_as_peer_closed)
{
	tcp_listener l("127.0.0.1", 0);
	auto [out, in] = connected_pair(l);
	flush_all(out);
	out.close();
	ASSERT_TRUE(readable(in.fd()));
	EXPECT_THROW(in.receive(), peer_closed);
	EXPECT_EQ(in.status(), tcp_stream::state::closed);
}

TEST(tcp_stream, refused_connection_fails)
{
	std::uint16_t port = 0;
	{
		tcp_listener l("127.0.0.1", 0);
		port = l.local().port;
	}
	transport_address const gone{protocol::tcp, "127.0.0.1", port};
	try
	{
		auto s = tcp_stream::connect(gone);
		pollfd p{s.fd(), POLLOUT, 0};
		ASSERT_GT(::poll(&p, 1, 2000), 0);
		EXPECT_THROW(s.flush(), connect_failed);
	}
	catch (connect_failed const&)
	{
		SUCCEED();
	}
}

TEST(udp_socket, packet_round_trip)
{
	udp_socket a("127.0.0.1", 0);
	udp_socket b("127.0.0.1", 0);
	EXPECT_EQ(a.local().proto, protocol::udp);
	EXPECT_NE(a.local().port, 0);
	std::mt19937_64 rng(4);
	for (int i = 0; i < 50; ++i)
	{
		packet const p = random_packet(rng, 1400);
		a.send_to(b.local(), encode(p));
		ASSERT_TRUE(readable(b.fd()));
		auto d = b.receive();
		ASSERT_TRUE(d);
		EXPECT_EQ(d->first, a.local());
		EXPECT_EQ(decode(d->second), p);
	}
	EXPECT_FALSE(b.receive());
}

TEST(udp_socket, truncated_datagram_decodes_as_too_short)
{
	udp_socket a("127.0.0.1", 0);
	udp_socket b("127.0.0.1", 0);
	auto bytes = encode(packet{});
	bytes.resize(20);
	a.send_to(b.local(), bytes);
	ASSERT_TRUE(readable(b.fd()));
	auto d = b.receive();
	ASSERT_TRUE(d);
	try
	{
		decode(d->second);
		FAIL() << "truncated datagram decoded";
	}
	catch (decode_error const& e)
	{
		EXPECT_EQ(e.reason(), decode_error::kind::too_short);
	}
}

TEST(loopback, two_nodes_link_over_udp_despite_junk)
{
	loopback_runtime rt(loopback_options{});
	rt.add_node({protocol::udp});
	rt.add_node({protocol::udp});
	udp_socket junk("127.0.0.1", 0);
	junk.send_to(rt.node_at(0).transport_addresses().front(), std::vector<std::uint8_t>(10, 0x02));
	rt.run_until(rt.now() + 0.1);
	EXPECT_EQ(rt.stats().malformed, 1u);

	rt.join(0, {});
	rt.join(1, {0});
	bool const linked = rt.run_while_not([&] {
		return rt.node_at(0).structured_peers().size() == 1 && rt.node_at(1).structured_peers().size() == 1;
	}, 10, 0.05);
	ASSERT_TRUE(linked);
	EXPECT_EQ(rt.node_at(0).structured_peers().front(), rt.node_at(1).self());
	EXPECT_EQ(rt.node_at(1).structured_peers().front(), rt.node_at(0).self());
	EXPECT_DOUBLE_EQ(metrics::ring_correct(rt.snapshot()).fraction, 1.0);
}

TEST(loopback, mixed_transports_form_a_correct_ring_of_eight)
{
	loopback_options opt;
	opt.seed = 5;
	auto const r = run_demo(8, {{protocol::udp, protocol::tcp}, {protocol::tcp, protocol::udp}}, opt, 30);
	EXPECT_TRUE(r.ring_correct);
	EXPECT_GT(r.stats.datagrams_sent, 0u);
	EXPECT_GT(r.stats.frames_sent, 0u);
}

TEST(loopback, single_node_is_a_trivial_ring)
{
	auto const r = run_demo(1, {{protocol::udp}}, loopback_options{}, 5);
	EXPECT_TRUE(r.ring_correct);
	EXPECT_DOUBLE_EQ(r.ring_correct_fraction, 1.0);
}

TEST(loopback, scenario_phases_other_than_bootstrap_and_wait_are_refused)
{
	simnet::scenario s;
	s.phases = {simnet::phase::bootstrap(4), simnet::phase::massive_fail_count(1)};
	EXPECT_THROW(run_loopback(s, loopback_options{}), simnet::scenario_invalid);
}
