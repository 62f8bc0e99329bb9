#include "symphony/node.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "symphony/shortcut.hpp"

namespace symphony::overlay {

namespace {

constexpr std::size_t max_local_tas = 4;
constexpr double request_timeout = 10.0;
constexpr double seen_request_lifetime = 60.0;

bool is_known_label(std::string const& t)
{
	return t == connection_type::leaf || t == connection_type::near || t == connection_type::shortcut;
}

packet link_packet(address const& self, std::optional<address> const& peer, payload_type pt
	, std::vector<std::uint8_t> body)
{
	packet p;
	p.header.type = packet_type::link;
	p.header.hops = 0;
	p.header.ttl = 1;
	p.header.source = self;
	p.header.destination = peer.value_or(address());
	p.header.payload = pt;
	p.payload = std::move(body);
	return p;
}

char const* link_kind_name(link_message::kind k)
{
	switch (k)
	{
		case link_message::kind::request: return "link.request";
		case link_message::kind::response: return "link.response";
		case link_message::kind::close: return "link.close";
		case link_message::kind::ping: return "link.ping";
		case link_message::kind::pong: return "link.pong";
		case link_message::kind::error: return "link.error";
	}
	return "link.unknown";
}

} // namespace

char const* to_string(link_error e)
{
	switch (e)
	{
		case link_error::handshake_timeout: return "handshake_timeout";
		case link_error::address_collision: return "address_collision";
		case link_error::address_mismatch: return "address_mismatch";
		case link_error::all_transports_failed: return "all_transports_failed";
		case link_error::join_timeout: return "join_timeout";
	}
	return "unknown";
}

std::string connection::label() const
{
	if (near || remote_near) return connection_type::near;
	if (shortcut_out > 0 || shortcut_in) return connection_type::shortcut;
	return connection_type::leaf;
}

node::node(address self, std::vector<transport_address> local_tas, node_config cfg, environment& env
	, std::uint64_t seed)
	: m_self(self)
	, m_tas(std::move(local_tas))
	, m_cfg(std::move(cfg))
	, m_env(env)
	, m_rng(seed)
{
}

// ---------------------------------------------------------------- accessors

std::vector<address> node::structured_peers() const
{
	std::vector<address> out;
	for (auto const& [peer, c] : m_connections)
		if (c.structured()) out.push_back(peer);
	return out;
}

std::vector<address> node::near_peers() const
{
	std::vector<address> out;
	for (auto const& [peer, c] : m_connections)
		if (c.near) out.push_back(peer);
	return out;
}

std::size_t node::shortcut_count() const
{
	std::size_t n = 0;
	for (auto const& [peer, c] : m_connections) n += std::size_t(c.shortcut_out);
	return n;
}

std::optional<ring_distance> node::d_ave_estimate() const
{
	auto const peers = near_peers();
	if (peers.empty()) return std::nullopt;

	// the near neighbors of near neighbors double the sample of gaps
	std::set<address> known(peers.begin(), peers.end());
	for (auto const& p : peers)
	{
		auto const it = m_reported.find(p);
		if (it == m_reported.end()) continue;
		for (auto const& a : it->second)
			if (a != m_self) known.insert(a);
	}
	std::size_t const wide = 2 * m_cfg.near_per_side;
	if (known.size() >= 2 * wide)
	{
		std::vector<address> const all(known.begin(), known.end());
		return estimate_d_ave(m_self, all, wide);
	}
	return estimate_d_ave(m_self, peers, m_cfg.near_per_side);
}

std::size_t node::target_shortcuts() const
{
	if (m_cfg.shortcuts) return *m_cfg.shortcuts;
	auto const est = d_ave_estimate();
	if (!est) return 0;
	return default_shortcut_count(*est, m_cfg.max_shortcuts);
}

std::size_t node::handshakes_in_progress() const
{
	std::size_t n = 0;
	for (auto const& [e, es] : m_edges)
		if (es.out || es.accepted_type) ++n;
	return n;
}

// ---------------------------------------------------------------- helpers

void node::emit(protocol_event::kind k, std::optional<address> peer, std::string detail
	, std::optional<link_error> err)
{
	if (!m_events) return;
	protocol_event ev;
	ev.what = k;
	ev.time = m_env.now();
	ev.node = m_self;
	ev.peer = peer;
	ev.detail = std::move(detail);
	ev.error = err;
	m_events(ev);
}

std::uint32_t node::new_request_id()
{
	std::uniform_int_distribution<std::uint32_t> dist(1, 0xffffffffu);
	std::uint32_t id = dist(m_rng);
	while (m_requests.count(id)) id = dist(m_rng);
	return id;
}

std::vector<address> node::top_near(std::vector<address> const& candidates, direction dir) const
{
	std::vector<std::pair<ring_distance, address>> ranked;
	ranked.reserve(candidates.size());
	for (auto const& c : candidates)
		if (c != m_self) ranked.emplace_back(directed_distance(m_self, c, dir), c);
	std::sort(ranked.begin(), ranked.end());
	ranked.erase(std::unique(ranked.begin(), ranked.end()), ranked.end());
	std::vector<address> out;
	for (std::size_t i = 0; i < ranked.size() && i < m_cfg.near_per_side; ++i)
		out.push_back(ranked[i].second);
	return out;
}

std::vector<peer_info> node::near_list() const
{
	std::vector<peer_info> out;
	for (auto const& [peer, c] : m_connections)
		if (c.near) out.push_back({peer, c.peer_tas});
	return out;
}

bool node::handshake_pending_to(address const& peer) const
{
	for (auto const& [e, es] : m_edges)
	{
		if (es.out && ((es.out->expected && *es.out->expected == peer) || (es.peer && *es.peer == peer)))
			return true;
		if (es.accepted_type && es.peer && *es.peer == peer) return true;
	}
	return false;
}

std::optional<edge_id> node::edge_of(address const& peer) const
{
	auto const it = m_connections.find(peer);
	if (it == m_connections.end()) return std::nullopt;
	return it->second.edge;
}

void node::learn_local_ta(transport_address const& ta)
{
	// stream transports observe ephemeral ports; only datagram views are reusable
	if (ta.proto != transport::protocol::udp) return;
	if (std::find(m_tas.begin(), m_tas.end(), ta) != m_tas.end()) return;
	m_tas.insert(m_tas.begin(), ta);
	if (m_tas.size() > max_local_tas) m_tas.resize(max_local_tas);
}

// ---------------------------------------------------------------- sending

void node::send_raw(edge_id e, packet const& p, char const* what)
{
	auto const it = m_edges.find(e);
	std::optional<address> peer;
	if (it != m_edges.end()) peer = it->second.peer;
	emit(protocol_event::kind::sent, peer, what);
	m_env.send(e, encode(p));
}

void node::send_link(edge_id e, link_message const& m)
{
	auto const it = m_edges.find(e);
	std::optional<address> peer = it != m_edges.end() ? it->second.peer : std::nullopt;
	send_raw(e, link_packet(m_self, peer, payload_type::link_protocol, encode(m)), link_kind_name(m.what));
}

void node::send_status(edge_id e, status_message::kind k)
{
	status_message m;
	m.what = k;
	m.sender = m_self;
	m.neighbors = near_list();
	auto const it = m_edges.find(e);
	std::optional<address> peer = it != m_edges.end() ? it->second.peer : std::nullopt;
	send_raw(e, link_packet(m_self, peer, payload_type::status, encode(m))
		, k == status_message::kind::request ? "status.request" : "status.response");
}

// ---------------------------------------------------------------- joining

void node::join(std::vector<transport_address> const& proxies)
{
	m_proxies = proxies;
	m_join_started = m_env.now();
	m_join_failed = false;
	m_join_attempts = 0;
	m_last_join_request = m_env.now();
	if (proxies.empty())
	{
		m_joining = false;
		m_join_completed = m_env.now();
		emit(protocol_event::kind::join_complete, std::nullopt, "alone");
		return;
	}
	m_joining = true;
	for (auto const& ta : proxies) connect_to({ta}, connection_type::leaf);
}

void node::send_join_request(edge_id via)
{
	m_last_join_request = m_env.now();
	send_connection_request(m_self, routing::mode::annealing, request_kind::join, connection_type::near
		, connection_request::join, via, m_cfg.ttl);
}

namespace {

char const* request_name(node::request_kind k)
{
	switch (k)
	{
		case node::request_kind::join: return "ctm.request.join";
		case node::request_kind::near: return "ctm.request.near";
		case node::request_kind::shortcut: return "ctm.request.shortcut";
		case node::request_kind::directional: return "ctm.request.directional";
		case node::request_kind::probe: return "ctm.request.probe";
	}
	return "ctm.request";
}

} // namespace

std::uint32_t node::send_connection_request(address const& destination, routing::mode m, request_kind kind
	, std::string const& type, std::uint8_t flags, std::optional<edge_id> first_hop, std::uint16_t ttl
	, direction dir)
{
	std::uint32_t const id = new_request_id();
	m_requests[id] = pending_request{kind, m_env.now(), dir};

	connection_request req;
	req.what = connection_request::kind::request;
	req.mode = m;
	req.flags = flags;
	req.id = id;
	req.connection_type = type;
	req.subject = m_self;
	req.subject_tas = m_tas;

	packet p;
	p.header.type = packet_type::routed;
	p.header.ttl = ttl;
	p.header.source = m_self;
	p.header.destination = destination;
	p.header.payload = payload_type::connection_request;
	p.payload = encode(req);

	if (first_hop)
	{
		// the first hop is chosen by the sender, not by the routing rule
		auto const next = advance_hop(p);
		if (next) send_raw(*first_hop, *next, request_name(kind));
		return id;
	}
	emit(protocol_event::kind::sent, std::nullopt, request_name(kind));
	route(std::move(p), std::nullopt);
	return id;
}

void node::send_routed(address const& destination, routing::mode m, std::vector<std::uint8_t> payload)
{
	packet p;
	p.header.type = packet_type::routed;
	p.header.ttl = m_cfg.ttl;
	p.header.source = m_self;
	p.header.destination = destination;
	p.header.payload = payload_type::application;
	p.payload = std::move(payload);
	(void)m;
	route(std::move(p), std::nullopt);
}

// ---------------------------------------------------------------- linking

void node::connect_to(std::vector<transport_address> const& tas, std::string const& type
	, std::uint32_t token, std::optional<address> expected)
{
	if (tas.empty()) return;
	if (expected && *expected == m_self) return;

	handshake hs;
	hs.type = type;
	hs.token = token;
	hs.expected = expected;

	if (expected)
	{
		if (type == connection_type::near) m_near_attempts[*expected] = m_env.now();
		auto const it = m_connections.find(*expected);
		if (it != m_connections.end())
		{
			// upgrade a bootstrap connection in place, otherwise nothing to do
			if (it->second.structured() || type == connection_type::leaf) return;
			if (handshake_pending_to(*expected)) return;
			begin_handshake(it->second.edge, std::move(hs));
			return;
		}
		if (handshake_pending_to(*expected)) return;
	}

	hs.remaining.assign(tas.begin() + 1, tas.end());
	edge_id const e = m_env.open_edge(tas.front());
	auto [it, inserted] = m_edges.try_emplace(e);
	if (inserted)
	{
		it->second.remote = tas.front();
		it->second.created = m_env.now();
		it->second.last_recv = m_env.now();
	}
	if (it->second.out) return;
	begin_handshake(e, std::move(hs));
}

void node::begin_handshake(edge_id e, handshake hs)
{
	auto& es = m_edges[e];
	hs.st = handshake::stage::link;
	hs.attempts = 0;
	hs.deadline = m_env.now() + m_cfg.handshake_backoff;
	es.out = std::move(hs);

	link_message m;
	m.what = link_message::kind::request;
	m.sender = m_self;
	m.connection_type = es.out->type;
	m.token = es.out->token;
	m.sender_tas = m_tas;
	m.observed_remote = es.remote;
	send_link(e, m);
}

void node::fail_handshake(edge_id e, link_error why)
{
	auto it = m_edges.find(e);
	if (it == m_edges.end() || !it->second.out) return;
	handshake hs = std::move(*it->second.out);
	it->second.out.reset();
	emit(protocol_event::kind::error, hs.expected, hs.type, why);

	bool const in_use = it->second.peer && m_connections.count(*it->second.peer)
		&& m_connections.at(*it->second.peer).edge == e;
	if (!in_use && !it->second.accepted_type) drop_edge(e);

	if (!hs.remaining.empty())
	{
		connect_to(hs.remaining, hs.type, hs.token, hs.expected);
		return;
	}
	emit(protocol_event::kind::error, hs.expected, hs.type, link_error::all_transports_failed);
}

void node::complete_link(edge_id e, edge_state& es, std::string const& type, std::uint32_t token)
{
	if (!es.peer) return;
	address const peer = *es.peer;
	double const now = m_env.now();

	auto [it, inserted] = m_connections.try_emplace(peer);
	connection& c = it->second;
	if (inserted)
	{
		c.peer = peer;
		c.edge = e;
		c.established = now;
	}
	else if (c.edge != e)
	{
		edge_id const old = c.edge;
		c.edge = e;
		auto const o = m_edges.find(old);
		if (o != m_edges.end() && !o->second.out && !o->second.accepted_type) drop_edge(old);
	}

	std::vector<transport_address> tas;
	if (es.remote.proto == transport::protocol::udp) tas.push_back(es.remote);
	for (auto const& t : es.peer_tas)
		if (std::find(tas.begin(), tas.end(), t) == tas.end()) tas.push_back(t);
	c.peer_tas = std::move(tas);

	bool const was_structured = c.structured();
	if (type == connection_type::near)
	{
		c.near = true;
		// a live near connection replaces any bootstrap role
		if (!m_joining) c.leaf = false;
	}
	else if (type == connection_type::shortcut)
	{
		auto const req = m_requests.find(token);
		if (token != 0 && req != m_requests.end() && req->second.kind == request_kind::shortcut)
		{
			++c.shortcut_out;
			c.shortcut_basis.push_back(req->second.basis);
			m_requests.erase(req);
			m_next_shortcut = now;
		}
		else
		{
			c.shortcut_in = true;
		}
	}
	else if (type == connection_type::leaf || !is_known_label(type))
	{
		c.leaf = true;
	}
	if (!was_structured && c.structured()) c.established = now;

	emit(protocol_event::kind::connection_added, peer, type);

	if (type == connection_type::leaf && m_joining && structured_peers().empty())
		send_join_request(e);

	if (c.near && !m_first_near) m_first_near = now;
	update_near();
	m_saturated = {};
}

void node::remove_connection(address const& peer, bool notify, char const* why)
{
	auto const it = m_connections.find(peer);
	if (it == m_connections.end()) return;
	edge_id const e = it->second.edge;
	bool const was_near = it->second.near;
	if (notify)
	{
		link_message m;
		m.what = link_message::kind::close;
		m.sender = m_self;
		send_link(e, m);
	}
	m_connections.erase(it);
	m_reported.erase(peer);
	emit(protocol_event::kind::connection_removed, peer, why);

	auto const es = m_edges.find(e);
	if (es != m_edges.end() && !es->second.out && !es->second.accepted_type)
	{
		if (std::string(why) == "trim") es->second.linger_until = m_env.now() + m_cfg.trim_linger;
		else drop_edge(e);
	}

	update_near();
	m_saturated = {};
	std::string const reason = why;
	if (was_near && (reason == "timeout" || reason == "edge closed")) m_probes_left = m_cfg.repair_probes;
}

void node::drop_edge(edge_id e)
{
	if (m_edges.erase(e) == 0) return;
	m_env.close_edge(e);
}

void node::on_edge_closed(edge_id e)
{
	auto const it = m_edges.find(e);
	if (it == m_edges.end()) return;
	if (it->second.out) fail_handshake(e, link_error::handshake_timeout);
	auto const again = m_edges.find(e);
	if (again == m_edges.end()) return;
	if (again->second.peer)
	{
		auto const c = m_connections.find(*again->second.peer);
		if (c != m_connections.end() && c->second.edge == e)
			remove_connection(*again->second.peer, false, "edge closed");
	}
	m_edges.erase(e);
}

// ---------------------------------------------------------------- receiving

void node::on_packet(edge_id e, transport_address const& remote, std::span<std::uint8_t const> bytes)
{
	packet p;
	try
	{
		p = decode(bytes);
	}
	catch (decode_error const&)
	{
		// framing problem on the transport; the edge stays open
		return;
	}

	auto [it, inserted] = m_edges.try_emplace(e);
	edge_state& es = it->second;
	if (inserted) es.created = m_env.now();
	es.remote = remote;
	es.last_recv = m_env.now();

	try
	{
		if (p.header.type == packet_type::link)
		{
			if (p.header.payload == payload_type::status) handle_status(e, es, p);
			else handle_link(e, es, p);
		}
		else
		{
			handle_routed(e, es, std::move(p));
		}
	}
	catch (message_error const&)
	{
		// malformed body, ignore the packet
	}
}

void node::handle_link(edge_id e, edge_state& es, packet const& p)
{
	link_message const m = decode_link(p.payload);
	switch (m.what)
	{
		case link_message::kind::request:
		{
			if (m.sender == m_self)
			{
				link_message err;
				err.what = link_message::kind::error;
				err.sender = m_self;
				send_link(e, err);
				emit(protocol_event::kind::error, m.sender, m.connection_type, link_error::address_collision);
				return;
			}
			// simultaneous attempts: the smaller address keeps its own handshake
			for (auto& [oe, os] : m_edges)
			{
				if (!os.out || os.out->st != handshake::stage::link) continue;
				bool const same_peer = (os.out->expected && *os.out->expected == m.sender)
					|| (oe == e && !os.out->expected);
				if (!same_peer) continue;
				if (m_self < m.sender) return;
				os.out.reset();
			}
			if (es.peer && *es.peer != m.sender)
			{
				auto const c = m_connections.find(*es.peer);
				if (c != m_connections.end() && c->second.edge == e)
					remove_connection(*es.peer, false, "replaced");
			}
			es.peer = m.sender;
			es.peer_tas = m.sender_tas;
			es.accepted_type = m.connection_type;
			es.accepted_token = m.token;
			if (m.observed_remote) learn_local_ta(*m.observed_remote);

			link_message r;
			r.what = link_message::kind::response;
			r.sender = m_self;
			r.connection_type = m.connection_type;
			r.token = m.token;
			r.sender_tas = m_tas;
			r.observed_remote = es.remote;
			if (!m_tas.empty()) r.observed_local = m_tas.front();
			send_link(e, r);
			return;
		}
		case link_message::kind::response:
		{
			if (!es.out || es.out->st != handshake::stage::link) return;
			if (m.sender == m_self)
			{
				fail_handshake(e, link_error::address_collision);
				return;
			}
			if (es.out->expected && *es.out->expected != m.sender)
			{
				fail_handshake(e, link_error::address_mismatch);
				return;
			}
			if (m.observed_remote) learn_local_ta(*m.observed_remote);
			es.peer = m.sender;
			es.peer_tas = m.sender_tas;
			es.out->st = handshake::stage::status;
			es.out->attempts = 0;
			es.out->deadline = m_env.now() + m_cfg.handshake_backoff;
			send_status(e, status_message::kind::request);
			return;
		}
		case link_message::kind::close:
		{
			if (es.out) fail_handshake(e, link_error::handshake_timeout);
			auto const again = m_edges.find(e);
			if (again == m_edges.end()) return;
			if (again->second.peer)
			{
				auto const c = m_connections.find(*again->second.peer);
				if (c != m_connections.end() && c->second.edge == e)
					remove_connection(*again->second.peer, false, "closed by peer");
			}
			drop_edge(e);
			return;
		}
		case link_message::kind::ping:
		{
			bool const connected = es.peer && m_connections.count(*es.peer)
				&& m_connections.at(*es.peer).edge == e;
			link_message r;
			r.sender = m_self;
			r.what = connected ? link_message::kind::pong : link_message::kind::close;
			send_link(e, r);
			if (!connected && !es.out && !es.accepted_type) drop_edge(e);
			return;
		}
		case link_message::kind::pong:
			return;
		case link_message::kind::error:
			if (es.out) fail_handshake(e, link_error::address_collision);
			return;
	}
}

void node::handle_status(edge_id e, edge_state& es, packet const& p)
{
	status_message const s = decode_status(p.payload);
	auto reject = [&] {
		link_message r;
		r.what = link_message::kind::close;
		r.sender = m_self;
		send_link(e, r);
	};

	if (s.what == status_message::kind::request)
	{
		if (!es.peer || *es.peer != s.sender)
		{
			reject();
			return;
		}
		if (es.accepted_type)
		{
			std::string const type = *es.accepted_type;
			es.accepted_type.reset();
			complete_link(e, es, type, es.accepted_token);
		}
		else
		{
			complete_overtaken(e, es);
		}
		auto const c = m_connections.find(s.sender);
		if (c == m_connections.end() || c->second.edge != e)
		{
			reject();
			return;
		}
		send_status(e, status_message::kind::response);
		process_status(s);
		return;
	}

	if (es.out && es.out->st == handshake::stage::status && es.peer && *es.peer == s.sender)
	{
		handshake const hs = *es.out;
		es.out.reset();
		complete_link(e, es, hs.type, hs.token);
	}
	process_status(s);
}

void node::complete_overtaken(edge_id e, edge_state& es)
{
	// the peer finished first and its traffic overtook our status response
	if (!es.out || es.out->st != handshake::stage::status || !es.peer) return;
	handshake const hs = *es.out;
	es.out.reset();
	complete_link(e, es, hs.type, hs.token);
}

void node::handle_routed(edge_id e, edge_state& es, packet p)
{
	std::optional<address> prev;
	complete_overtaken(e, es);
	if (es.peer)
	{
		auto const c = m_connections.find(*es.peer);
		if (c != m_connections.end() && c->second.edge == e) prev = *es.peer;
		else if (c == m_connections.end() && es.linger_until && m_env.now() < *es.linger_until) prev = *es.peer;
	}
	if (!prev)
	{
		// routed traffic only flows over established connections
		link_message r;
		r.what = link_message::kind::close;
		r.sender = m_self;
		send_link(e, r);
		return;
	}
	if (p.header.hops > p.header.ttl) return;
	route(std::move(p), prev);
}

void node::route(packet p, std::optional<address> prev)
{
	auto const adj = structured_peers();
	address const& dst = p.header.destination;

	routing::decision d;
	if (is_directional(dst))
	{
		d = routing::directional_next_hop(m_self, adj, direction_of(dst), p.header.hops, p.header.ttl);
	}
	else
	{
		routing::mode mode = routing::mode::greedy;
		if (p.header.payload == payload_type::connection_request)
			mode = decode_connection_request(p.payload).mode;

		auto const leaf = m_connections.find(dst);
		if (dst != m_self && leaf != m_connections.end() && leaf->second.leaf && !leaf->second.structured()
			&& (!prev || *prev != dst))
		{
			// bootstrap connections deliver straight to their joining peer
			d = routing::decision::forward(dst);
		}
		else if (adj.empty() && !prev && dst != m_self)
		{
			// not placed on the ring yet; hand the packet to a proxy
			auto const proxy = std::find_if(m_connections.begin(), m_connections.end()
				, [](auto const& kv) { return kv.second.leaf; });
			d = proxy == m_connections.end() ? routing::decision::drop()
				: routing::decision::forward(proxy->first);
		}
		else
		{
			d = routing::next_hop(mode, m_self, adj, prev, dst);
		}
	}
	if (m_events)
	{
		protocol_event ev;
		ev.what = protocol_event::kind::routed;
		ev.time = m_env.now();
		ev.node = m_self;
		ev.peer = d.next;
		ev.destination = dst;
		ev.detail = routing::to_string(d.what);
		m_events(ev);
	}

	if (d.delivers_locally()) deliver(p, d);
	if (d.next) forward_to(*d.next, p);
}

void node::forward_to(address const& next, packet const& p)
{
	auto const c = m_connections.find(next);
	if (c == m_connections.end()) return;
	auto const q = advance_hop(p);
	if (!q) return;
	send_raw(c->second.edge, *q, "routed.forward");
}

void node::deliver(packet const& p, routing::decision const& d)
{
	if (p.header.payload == payload_type::connection_request)
	{
		connection_request const req = decode_connection_request(p.payload);
		if (req.what == connection_request::kind::request) handle_connection_request(req, d);
		else if (p.header.destination == m_self) handle_connection_response(req);
		return;
	}
	if (p.header.payload == payload_type::application && m_deliver) m_deliver(p);
}

// ---------------------------------------------------------------- requests

void node::handle_connection_request(connection_request const& req, routing::decision const&)
{
	double const now = m_env.now();
	if (req.subject == m_self)
	{
		// our own request came back to us
		auto const it = m_requests.find(req.id);
		if (it == m_requests.end()) return;
		if (it->second.kind == request_kind::shortcut) m_next_shortcut = now + m_cfg.shortcut_retry;
		if (it->second.kind == request_kind::directional)
			m_saturated[std::size_t(it->second.dir)] = true;
		m_requests.erase(it);
		return;
	}

	auto const key = std::make_pair(req.subject, req.id);
	if (m_seen_requests.count(key)) return;
	m_seen_requests[key] = now;

	auto conn = m_connections.find(req.subject);
	bool already = conn != m_connections.end() && conn->second.structured();
	if (already && req.has(connection_request::join))
	{
		// the requester restarted; whatever we hold for it is stale
		remove_connection(req.subject, false, "rejoin");
		already = false;
		conn = m_connections.end();
	}

	connection_request resp;
	resp.what = connection_request::kind::response;
	resp.mode = routing::mode::exact;
	resp.flags = std::uint8_t(req.flags & ~connection_request::join);
	if (already) resp.flags |= connection_request::already_connected;
	resp.id = req.id;
	resp.connection_type = req.connection_type;
	resp.subject = m_self;
	resp.subject_tas = m_tas;

	packet p;
	p.header.type = packet_type::routed;
	p.header.ttl = m_cfg.ttl;
	p.header.source = m_self;
	p.header.destination = req.subject;
	p.header.payload = payload_type::connection_request;
	p.payload = encode(resp);
	emit(protocol_event::kind::sent, req.subject, "ctm.response");
	route(std::move(p), std::nullopt);

	if (req.connection_type == connection_type::shortcut)
	{
		if (already) conn->second.shortcut_in = true;
		else connect_to(req.subject_tas, connection_type::shortcut, req.id, req.subject);
		return;
	}
	if (!already) connect_to(req.subject_tas, req.connection_type, req.id, req.subject);
}

void node::handle_connection_response(connection_request const& resp)
{
	auto const pending = m_requests.find(resp.id);
	request_kind const kind = pending != m_requests.end() ? pending->second.kind : request_kind::near;
	address const& target = resp.subject;
	auto const conn = m_connections.find(target);
	bool const connected = conn != m_connections.end() && conn->second.structured();

	switch (kind)
	{
		case request_kind::shortcut:
			if (connected)
			{
				++conn->second.shortcut_out;
				conn->second.shortcut_basis.push_back(pending->second.basis);
				m_requests.erase(pending);
				m_next_shortcut = m_env.now();
			}
			else if (!handshake_pending_to(target))
			{
				connect_to(resp.subject_tas, connection_type::shortcut, resp.id, target);
			}
			return;
		case request_kind::directional:
			if (target == m_self || conn != m_connections.end())
				m_saturated[std::size_t(pending->second.dir)] = true;
			else if (!handshake_pending_to(target))
				connect_to(resp.subject_tas, connection_type::near, resp.id, target);
			m_requests.erase(pending);
			return;
		case request_kind::join:
		case request_kind::near:
		case request_kind::probe:
			if (!connected && !handshake_pending_to(target))
				connect_to(resp.subject_tas, connection_type::near, resp.id, target);
			if (pending != m_requests.end()) m_requests.erase(pending);
			return;
	}
}

void node::process_status(status_message const& status)
{
	if (!m_connections.count(status.sender)) return;

	auto& reported = m_reported[status.sender];
	reported.clear();
	for (auto const& n : status.neighbors) reported.push_back(n.addr);
	bool const needs_us = std::find(reported.begin(), reported.end(), m_self) != reported.end();
	if (auto& c = m_connections.at(status.sender); c.remote_near != needs_us)
	{
		c.remote_near = needs_us;
		update_near();
	}

	// a proxy's neighborhood says nothing about where we belong on the ring
	if (!m_connections.at(status.sender).structured() || structured_peers().empty()) return;

	std::map<address, std::vector<transport_address>> offered;
	for (auto const& n : status.neighbors)
		if (n.addr != m_self && !n.tas.empty()) offered.emplace(n.addr, n.tas);

	std::vector<address> all = structured_peers();
	for (auto const& [a, tas] : offered) all.push_back(a);

	double const now = m_env.now();
	for (direction dir : {direction::clockwise, direction::counter_clockwise})
	{
		for (auto const& want : top_near(all, dir))
		{
			auto const c = m_connections.find(want);
			if (c != m_connections.end() && c->second.structured()) continue;
			auto const o = offered.find(want);
			if (o == offered.end()) continue;
			if (handshake_pending_to(want)) continue;
			auto const last = m_near_attempts.find(want);
			if (last != m_near_attempts.end() && now - last->second < m_cfg.relink_backoff) continue;
			connect_to(o->second, connection_type::near, 0, want);
		}
	}
}

// ---------------------------------------------------------------- maintenance

void node::update_near()
{
	std::vector<address> peers = structured_peers();
	std::vector<address> keep = top_near(peers, direction::clockwise);
	auto const ccw = top_near(peers, direction::counter_clockwise);
	keep.insert(keep.end(), ccw.begin(), ccw.end());

	std::vector<address> now_near;
	for (auto& [peer, c] : m_connections)
	{
		c.near = c.structured() && std::find(keep.begin(), keep.end(), peer) != keep.end();
		if (c.near) now_near.push_back(peer);
	}
	if (now_near != m_last_near)
	{
		for (auto const& a : m_last_near)
			if (std::find(now_near.begin(), now_near.end(), a) == now_near.end()) m_dropped_near.insert(a);
		m_last_near = std::move(now_near);
		m_near_dirty = true;
	}
}

void node::maintain_edges()
{
	double const now = m_env.now();
	std::vector<edge_id> ids;
	ids.reserve(m_edges.size());
	for (auto const& kv : m_edges) ids.push_back(kv.first);

	for (edge_id e : ids)
	{
		auto it = m_edges.find(e);
		if (it == m_edges.end()) continue;
		edge_state& es = it->second;

		if (es.out && now >= es.out->deadline)
		{
			if (es.out->attempts < m_cfg.handshake_retries)
			{
				++es.out->attempts;
				es.out->deadline = now + m_cfg.handshake_backoff * std::ldexp(1.0, es.out->attempts);
				if (es.out->st == handshake::stage::link)
				{
					link_message m;
					m.what = link_message::kind::request;
					m.sender = m_self;
					m.connection_type = es.out->type;
					m.token = es.out->token;
					m.sender_tas = m_tas;
					m.observed_remote = es.remote;
					send_link(e, m);
				}
				else
				{
					send_status(e, status_message::kind::request);
				}
			}
			else
			{
				fail_handshake(e, link_error::handshake_timeout);
				continue;
			}
		}

		if (es.accepted_type && now - es.last_recv > m_cfg.raw_edge_timeout) es.accepted_type.reset();

		bool const in_use = es.peer && m_connections.count(*es.peer) && m_connections.at(*es.peer).edge == e;
		if (in_use)
		{
			if (now - es.last_recv > m_cfg.edge_timeout)
			{
				remove_connection(*es.peer, false, "timeout");
				continue;
			}
			if (now - es.last_recv >= m_cfg.ping_interval && now - es.last_ping >= m_cfg.ping_interval)
			{
				es.last_ping = now;
				link_message m;
				m.what = link_message::kind::ping;
				m.sender = m_self;
				send_link(e, m);
			}
		}
		else if (!es.out && !es.accepted_type
			&& (es.linger_until ? now >= *es.linger_until : now - es.last_recv > m_cfg.raw_edge_timeout))
		{
			drop_edge(e);
		}
	}
}

void node::tick()
{
	maintain_edges();
	overlord_tick();
}

void node::overlord_tick()
{
	double const now = m_env.now();
	auto const structured = structured_peers();

	// join retries
	if (m_joining && structured.empty() && !m_join_failed
		&& now - m_last_join_request >= m_cfg.join_retry_interval)
	{
		++m_join_attempts;
		m_last_join_request = now;
		if (m_join_attempts >= m_cfg.join_attempts)
		{
			m_join_failed = true;
			m_joining = false;
			emit(protocol_event::kind::error, std::nullopt, "join", link_error::join_timeout);
		}
		else
		{
			auto const leaf = std::find_if(m_connections.begin(), m_connections.end()
				, [](auto const& kv) { return kv.second.leaf; });
			if (leaf != m_connections.end()) send_join_request(leaf->second.edge);
			else for (auto const& ta : m_proxies) connect_to({ta}, connection_type::leaf);
		}
	}

	// bootstrap connections end once we sit on the ring
	if (m_first_near && now > *m_first_near)
	{
		m_joining = false;
		for (auto& [peer, c] : m_connections)
		{
			if (!c.leaf) continue;
			bool const ours = std::any_of(m_proxies.begin(), m_proxies.end()
				, [&](auto const& ta) { return std::find(c.peer_tas.begin(), c.peer_tas.end(), ta) != c.peer_tas.end(); });
			if (ours && c.structured())
			{
				c.leaf = false;
				// tell the proxy its bootstrap role is over
				if (!handshake_pending_to(peer)) begin_handshake(c.edge, handshake{handshake::stage::link
					, connection_type::near, 0, peer, 0, 0, {}});
			}
			else if (ours)
			{
				c.leaf = false;
			}
		}
	}
	for (auto& [peer, c] : m_connections)
	{
		if (c.leaf && c.structured() && !m_joining) c.leaf = false;
		else if (c.leaf && !c.structured() && now - c.established > m_cfg.leaf_timeout) c.leaf = false;
	}

	// trim what nobody needs
	std::vector<address> unneeded;
	for (auto const& [peer, c] : m_connections)
		if (!c.needed() && now - c.established >= m_cfg.trim_grace && !handshake_pending_to(peer))
			unneeded.push_back(peer);
	for (auto const& peer : unneeded) remove_connection(peer, true, "trim");

	// share neighbor lists after changes
	if (m_near_dirty)
	{
		m_near_dirty = false;
		for (auto const& [peer, c] : m_connections)
			if (c.near || m_dropped_near.count(peer)) send_status(c.edge, status_message::kind::request);
		m_dropped_near.clear();
	}

	auto const adj = structured_peers();
	if (!adj.empty())
	{
		// near neighbor deficits
		std::array<std::size_t, 2> per_side{};
		for (auto const& p : near_peers()) ++per_side[std::size_t(side_of(m_self, p))];
		for (direction dir : {direction::clockwise, direction::counter_clockwise})
		{
			std::size_t const have = per_side[std::size_t(dir)];
			if (have >= m_cfg.near_per_side || m_saturated[std::size_t(dir)]) continue;
			if (have == 0 && m_probes_left == 0) m_probes_left = 1;
			if (have == 0) continue;
			send_connection_request(directional_address(dir), routing::mode::greedy, request_kind::directional
				, connection_type::near, connection_request::directional, std::nullopt
				, std::uint16_t(have + 1), dir);
		}

		// ring probes: a request for our own address through a far peer
		if (m_probes_left > 0)
		{
			--m_probes_left;
			std::vector<address> far;
			for (auto const& [peer, c] : m_connections)
				if (c.structured() && !c.near) far.push_back(peer);
			auto const& pool = far.empty() ? adj : far;
			std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
			address const via = pool[pick(m_rng)];
			send_connection_request(m_self, routing::mode::annealing, request_kind::probe
				, connection_type::near, 0, m_connections.at(via).edge, m_cfg.ttl);
		}

		// shortcuts
		bool shortcut_pending = false;
		for (auto const& [id, r] : m_requests)
			if (r.kind == request_kind::shortcut) shortcut_pending = true;
		auto const est = d_ave_estimate();
		if (!shortcut_pending && est && now >= m_next_shortcut && shortcut_count() < target_shortcuts())
		{
			ring_distance const d = sample_shortcut_distance(*est, m_rng);
			address const target(m_self.value() + d.value);
			m_next_shortcut = now + m_cfg.shortcut_timeout;
			std::uint32_t const id = send_connection_request(target, routing::mode::greedy
				, request_kind::shortcut, connection_type::shortcut, 0, std::nullopt, m_cfg.ttl);
			if (auto const it = m_requests.find(id); it != m_requests.end()) it->second.basis = est->value.log2();
		}
		else if (!shortcut_pending && est)
		{
			// the network grew or shrank since a shortcut was drawn
			long double const basis = est->value.log2();
			for (auto& [peer, c] : m_connections)
			{
				auto const stale = std::find_if(c.shortcut_basis.begin(), c.shortcut_basis.end()
					, [&](long double b) { return std::fabs(b - basis) > m_cfg.shortcut_redraw_bits; });
				if (stale == c.shortcut_basis.end()) continue;
				c.shortcut_basis.erase(stale);
				--c.shortcut_out;
				m_next_shortcut = now;
				break;
			}
		}
	}

	// expire stale bookkeeping
	for (auto it = m_requests.begin(); it != m_requests.end();)
	{
		double const limit = it->second.kind == request_kind::shortcut ? m_cfg.shortcut_timeout : request_timeout;
		if (now - it->second.sent > limit)
		{
			if (it->second.kind == request_kind::shortcut) m_next_shortcut = now;
			it = m_requests.erase(it);
		}
		else ++it;
	}
	for (auto it = m_seen_requests.begin(); it != m_seen_requests.end();)
	{
		if (now - it->second > seen_request_lifetime) it = m_seen_requests.erase(it);
		else ++it;
	}

	if (!m_join_completed && !m_join_failed)
	{
		std::array<std::size_t, 2> per_side{};
		for (auto const& p : near_peers()) ++per_side[std::size_t(side_of(m_self, p))];
		bool done = !near_peers().empty();
		for (direction dir : {direction::clockwise, direction::counter_clockwise})
		{
			// a walk that wrapped around on the other side has seen the whole ring
			bool const wrapped = per_side[std::size_t(dir)] == 0 && m_saturated[std::size_t(opposite(dir))];
			if (per_side[std::size_t(dir)] < m_cfg.near_per_side && !m_saturated[std::size_t(dir)] && !wrapped)
				done = false;
		}
		if (done)
		{
			m_join_completed = now;
			emit(protocol_event::kind::join_complete, std::nullopt, "joined");
		}
	}
}

} // namespace symphony::overlay
