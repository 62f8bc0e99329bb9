#include "symphony/simnet.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include "symphony/topology.hpp"

namespace symphony::simnet {

namespace {

constexpr std::uint16_t node_port = 4000;
constexpr std::uint32_t public_base = 0x0a000000;   // 10.0.0.0
constexpr std::uint32_t nat_public_base = 0x0b000000; // 11.0.0.0
constexpr std::uint32_t private_base = 0xc0a80000;  // 192.168.0.0

std::optional<std::uint32_t> parse_ip(std::string const& s)
{
	std::uint32_t ip = 0;
	char const* p = s.data();
	char const* end = s.data() + s.size();
	for (int i = 0; i < 4; ++i)
	{
		unsigned v = 0;
		auto const r = std::from_chars(p, end, v);
		if (r.ec != std::errc() || v > 255) return std::nullopt;
		ip = ip << 8 | v;
		p = r.ptr;
		if (i < 3)
		{
			if (p == end || *p != '.') return std::nullopt;
			++p;
		}
	}
	if (p != end) return std::nullopt;
	return ip;
}

transport_address udp_ta(endpoint e)
{
	return {transport::protocol::udp, format_ip(e.ip), e.port};
}

} // namespace

std::string format_ip(std::uint32_t ip)
{
	return std::to_string(ip >> 24) + '.' + std::to_string(ip >> 16 & 0xff) + '.'
		+ std::to_string(ip >> 8 & 0xff) + '.' + std::to_string(ip & 0xff);
}

void sim_config::validate() const
{
	if (!(loss_rate >= 0 && loss_rate <= 1)) throw std::invalid_argument("loss_rate must be within [0, 1]");
	if (!(tick_interval > 0)) throw std::invalid_argument("tick_interval must be positive");
	if (auto const* u = std::get_if<uniform_latency>(&latency))
	{
		if (u->min_ms < 0 || u->min_ms > u->max_ms) throw std::invalid_argument("latency needs 0 <= min <= max");
	}
	if (auto const* c = std::get_if<constant_latency>(&latency))
	{
		if (c->ms < 0) throw std::invalid_argument("latency must be nonnegative");
	}
}

char const* to_string(nat_kind k)
{
	switch (k)
	{
		case nat_kind::none: return "none";
		case nat_kind::full_cone: return "full_cone";
		case nat_kind::restricted_cone: return "restricted_cone";
		case nat_kind::port_restricted_cone: return "port_restricted_cone";
		case nat_kind::symmetric: return "symmetric";
	}
	return "unknown";
}

// ---------------------------------------------------------------- nat

nat_profile::nat_profile(nat_kind kind, std::uint32_t external_ip)
	: m_kind(kind)
	, m_external_ip(external_ip)
{
}

endpoint nat_profile::outbound(endpoint const& internal, endpoint const& destination)
{
	auto const key = std::make_pair(internal, m_kind == nat_kind::symmetric ? destination : endpoint{});
	auto it = m_ports.find(key);
	if (it == m_ports.end())
	{
		std::uint16_t const port = m_next_port++;
		it = m_ports.emplace(key, port).first;
		m_mappings[port].internal = internal;
	}
	auto& m = m_mappings[it->second];
	m.permitted_ips.insert(destination.ip);
	m.permitted_endpoints.insert(destination);
	return {m_external_ip, it->second};
}

std::optional<endpoint> nat_profile::inbound(std::uint16_t external_port, endpoint const& source) const
{
	auto const it = m_mappings.find(external_port);
	if (it == m_mappings.end()) return std::nullopt;
	auto const& m = it->second;
	switch (m_kind)
	{
		case nat_kind::none:
		case nat_kind::full_cone:
			return m.internal;
		case nat_kind::restricted_cone:
			if (m.permitted_ips.count(source.ip)) return m.internal;
			return std::nullopt;
		case nat_kind::port_restricted_cone:
		case nat_kind::symmetric:
			if (m.permitted_endpoints.count(source)) return m.internal;
			return std::nullopt;
	}
	return std::nullopt;
}

verdict nat_filter(nat_profile const& profile, std::uint16_t external_port, endpoint const& source)
{
	return profile.inbound(external_port, source) ? verdict::pass : verdict::drop;
}

// ---------------------------------------------------------------- hosts

struct simulator::host
{
	host_id id = 0;
	address addr;
	endpoint internal;
	std::optional<nat_profile> nat;
	bool alive = false;
	std::uint64_t generation = 0;
	std::optional<double> join_started;
	std::unique_ptr<host_environment> env;
	std::unique_ptr<overlay::node> node;
	std::map<transport_address, edge_id> by_ta;
	std::map<edge_id, transport_address> by_edge;
	edge_id next_edge = 1;

	edge_id edge_for(transport_address const& ta)
	{
		auto const it = by_ta.find(ta);
		if (it != by_ta.end()) return it->second;
		edge_id const e = next_edge++;
		by_ta.emplace(ta, e);
		by_edge.emplace(e, ta);
		return e;
	}
};

class simulator::host_environment : public overlay::environment
{
public:
	host_environment(simulator& sim, host_id h) : m_sim(sim), m_host(h) {}

	double now() const override { return m_sim.m_now; }

	edge_id open_edge(transport_address const& remote) override
	{
		return m_sim.m_hosts[m_host]->edge_for(remote);
	}

	void send(edge_id e, std::vector<std::uint8_t> bytes) override
	{
		auto& h = *m_sim.m_hosts[m_host];
		auto const it = h.by_edge.find(e);
		if (it == h.by_edge.end()) return;
		m_sim.transmit(m_host, it->second, std::move(bytes));
	}

	void close_edge(edge_id e) override
	{
		auto& h = *m_sim.m_hosts[m_host];
		auto const it = h.by_edge.find(e);
		if (it == h.by_edge.end()) return;
		h.by_ta.erase(it->second);
		h.by_edge.erase(it);
	}

private:
	simulator& m_sim;
	host_id m_host;
};

simulator::simulator(sim_config cfg, overlay::node_config node_cfg)
	: m_cfg(std::move(cfg))
	, m_node_cfg(std::move(node_cfg))
	, m_rng(m_cfg.seed)
{
	m_cfg.validate();
}

simulator::~simulator() = default;

host_id simulator::add_host(host_options opt)
{
	host_id const id = m_hosts.size();
	auto h = std::make_unique<host>();
	h->id = id;
	h->addr = opt.addr.value_or(random_class0(m_rng));
	if (opt.nat == nat_kind::none)
	{
		h->internal = {public_base + std::uint32_t(id) + 1, node_port};
		m_by_ip[h->internal.ip] = id;
	}
	else
	{
		h->internal = {private_base + (std::uint32_t(id) + 1) % 0xffff, node_port};
		h->nat.emplace(opt.nat, nat_public_base + std::uint32_t(id) + 1);
		m_by_ip[h->nat->external_ip()] = id;
	}
	m_hosts.push_back(std::move(h));
	start_node(id);
	return id;
}

void simulator::start_node(host_id id)
{
	auto& h = *m_hosts[id];
	h.alive = true;
	++h.generation;
	h.by_ta.clear();
	h.by_edge.clear();
	h.join_started.reset();
	h.env = std::make_unique<host_environment>(*this, id);
	std::vector<transport_address> const tas{udp_ta(h.internal)};
	std::uint64_t const seed = m_rng();
	if (m_tap)
	{
		tap_record r{tap_record::kind::start, m_now, id, h.addr, seed};
		r.tas = tas;
		m_tap(r);
	}
	h.node = std::make_unique<overlay::node>(h.addr, tas, m_node_cfg, *h.env, seed);
	h.node->set_event_sink([this, id](overlay::protocol_event const& ev) {
		if (ev.what == overlay::protocol_event::kind::sent) ++m_messages[ev.detail];
		if (ev.what == overlay::protocol_event::kind::join_complete)
		{
			auto& hh = *m_hosts[id];
			if (hh.join_started && ev.detail != "alone") m_join_durations.push_back(m_now - *hh.join_started);
		}
		if (m_record) m_events.push_back(ev);
	});
	std::uniform_real_distribution<double> phase(0.0, m_cfg.tick_interval);
	schedule_tick(id, h.generation, m_now + phase(m_rng));
}

void simulator::schedule_tick(host_id id, std::uint64_t generation, double at)
{
	schedule(at, [this, id, generation] {
		auto& h = *m_hosts[id];
		if (!h.alive || h.generation != generation) return;
		if (m_tap) m_tap(tap_record{tap_record::kind::tick, m_now, id});
		h.node->tick();
		schedule_tick(id, generation, m_now + m_cfg.tick_interval);
	});
}

void simulator::join(host_id id, std::vector<host_id> const& proxies)
{
	auto& h = *m_hosts.at(id);
	if (!h.alive) throw std::logic_error("cannot join a dead host");
	std::vector<transport_address> tas;
	for (auto p : proxies) tas.push_back(public_ta(p));
	h.join_started = m_now;
	if (m_tap)
	{
		tap_record r{tap_record::kind::join, m_now, id};
		r.tas = tas;
		m_tap(r);
	}
	h.node->join(tas);
}

std::optional<double> simulator::join_started(host_id id) const
{
	return m_hosts.at(id)->join_started;
}

void simulator::kill(host_id id)
{
	auto& h = *m_hosts.at(id);
	if (!h.alive) return;
	h.alive = false;
	++h.generation;
	h.node.reset();
	h.env.reset();
	h.by_ta.clear();
	h.by_edge.clear();
}

void simulator::revive(host_id id)
{
	if (m_hosts.at(id)->alive) return;
	start_node(id);
}

bool simulator::alive(host_id id) const { return m_hosts.at(id)->alive; }

overlay::node& simulator::node_at(host_id id)
{
	auto& h = *m_hosts.at(id);
	if (!h.node) throw std::logic_error("host is not running");
	return *h.node;
}

overlay::node const& simulator::node_at(host_id id) const
{
	auto const& h = *m_hosts.at(id);
	if (!h.node) throw std::logic_error("host is not running");
	return *h.node;
}

address simulator::address_of(host_id id) const { return m_hosts.at(id)->addr; }

transport_address simulator::public_ta(host_id id) const
{
	auto const& h = *m_hosts.at(id);
	if (!h.nat) return udp_ta(h.internal);
	if (h.node) return h.node->transport_addresses().front();
	return udp_ta(h.internal);
}

std::vector<host_id> simulator::live_hosts() const
{
	std::vector<host_id> out;
	for (auto const& h : m_hosts)
		if (h->alive) out.push_back(h->id);
	return out;
}

std::vector<host_id> simulator::placed_hosts() const
{
	std::vector<host_id> out;
	for (auto const& h : m_hosts)
		if (h->alive && !h->node->structured_peers().empty()) out.push_back(h->id);
	return out;
}

// ---------------------------------------------------------------- events

void simulator::schedule(double at, std::function<void()> fn)
{
	m_queue.push(event{std::max(at, m_now), m_seq++, std::move(fn)});
}

void simulator::run_until(double t)
{
	while (!m_queue.empty() && m_queue.top().time <= t)
	{
		event ev = m_queue.top();
		m_queue.pop();
		m_now = ev.time;
		ev.fn();
	}
	m_now = std::max(m_now, t);
}

double simulator::latency(host_id a, host_id b)
{
	return std::visit([&](auto const& m) -> double {
		using T = std::decay_t<decltype(m)>;
		if constexpr (std::is_same_v<T, constant_latency>) return m.ms;
		else if constexpr (std::is_same_v<T, uniform_latency>)
			return std::uniform_real_distribution<double>(m.min_ms, m.max_ms)(m_rng);
		else
		{
			auto const it = m.ms.find({a, b});
			return it != m.ms.end() ? it->second : m.fallback_ms;
		}
	}, m_cfg.latency) / 1000.0;
}

void simulator::transmit(host_id from, transport_address const& to, std::vector<std::uint8_t> bytes)
{
	auto& src = *m_hosts[from];
	if (to.proto != transport::protocol::udp)
	{
		++m_dropped;
		return;
	}
	auto const ip = parse_ip(to.host);
	if (!ip)
	{
		++m_dropped;
		return;
	}
	endpoint const dst{*ip, to.port};
	endpoint const source = src.nat ? src.nat->outbound(src.internal, dst) : src.internal;

	if (m_cfg.loss_rate > 0 && std::bernoulli_distribution(m_cfg.loss_rate)(m_rng))
	{
		++m_dropped;
		return;
	}
	auto const target = m_by_ip.find(dst.ip);
	if (target == m_by_ip.end())
	{
		// private or unknown addresses do not route
		++m_dropped;
		return;
	}
	host_id const to_host = target->second;
	double const delay = latency(from, to_host);
	schedule(m_now + delay, [this, to_host, dst, source, b = std::move(bytes)]() mutable {
		arrive(to_host, dst, source, std::move(b));
	});
}

void simulator::arrive(host_id id, endpoint dst, endpoint source, std::vector<std::uint8_t> bytes)
{
	auto& h = *m_hosts[id];
	if (h.nat)
	{
		if (dst.ip != h.nat->external_ip() || nat_filter(*h.nat, dst.port, source) == verdict::drop)
		{
			++m_dropped;
			return;
		}
	}
	else if (dst != h.internal)
	{
		++m_dropped;
		return;
	}
	if (!h.alive)
	{
		++m_dropped;
		return;
	}
	transport_address const ta = udp_ta(source);
	edge_id const e = h.edge_for(ta);
	if (m_tap)
	{
		tap_record r{tap_record::kind::packet, m_now, id};
		r.edge = e;
		r.remote = ta;
		r.bytes = bytes;
		m_tap(r);
	}
	h.node->on_packet(e, ta, bytes);
}

// ---------------------------------------------------------------- observation

metrics::snapshot simulator::snapshot() const
{
	return snapshot(placed_hosts());
}

metrics::snapshot simulator::snapshot(std::vector<host_id> const& among) const
{
	std::vector<overlay::node const*> nodes;
	for (auto id : among)
	{
		auto const& h = *m_hosts.at(id);
		if (h.alive) nodes.push_back(h.node.get());
	}
	return overlay::topology_snapshot(m_now, nodes);
}

std::uint64_t simulator::messages_excluding_keepalive() const
{
	std::uint64_t n = 0;
	for (auto const& [k, v] : m_messages)
		if (k != "link.ping" && k != "link.pong") n += v;
	return n;
}

} // namespace symphony::simnet
