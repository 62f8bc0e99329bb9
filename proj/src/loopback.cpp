#include "symphony/loopback.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <poll.h>

#include "symphony/packet.hpp"
#include "symphony/topology.hpp"

namespace symphony::transport {

using overlay::edge_id;

namespace {

constexpr std::size_t ethernet_payload = 1472;

} // namespace

struct loopback_runtime::host
{
	struct edge
	{
		transport_address remote;
		std::optional<tcp_stream> stream;
		double opened = 0;
	};

	std::unique_ptr<udp_socket> udp;
	std::unique_ptr<tcp_listener> tcp;
	std::unique_ptr<host_environment> env;
	std::unique_ptr<overlay::node> node;
	std::map<edge_id, edge> edges;
	std::map<transport_address, edge_id> by_ta;
	edge_id next_edge = 1;
	double next_tick = 0;
	// edges that died underneath the node, reported outside of socket handling
	std::vector<edge_id> closed;

	edge_id edge_for(transport_address const& ta)
	{
		auto const it = by_ta.find(ta);
		if (it != by_ta.end()) return it->second;
		edge_id const id = next_edge++;
		by_ta.emplace(ta, id);
		edges[id].remote = ta;
		return id;
	}

	void drop(edge_id e)
	{
		auto const it = edges.find(e);
		if (it == edges.end()) return;
		by_ta.erase(it->second.remote);
		edges.erase(it);
	}
};

class loopback_runtime::host_environment : public overlay::environment
{
public:
	host_environment(loopback_runtime& rt, host& h) : m_rt(rt), m_host(h) {}

	double now() const override { return m_rt.now(); }

	edge_id open_edge(transport_address const& remote) override
	{
		auto const existing = m_host.by_ta.find(remote);
		if (existing != m_host.by_ta.end()) return existing->second;
		edge_id const e = m_host.edge_for(remote);
		auto& ed = m_host.edges.at(e);
		ed.opened = now();
		if (remote.proto == protocol::tcp)
		{
			try
			{
				ed.stream.emplace(tcp_stream::connect(remote));
			}
			catch (connect_failed const&)
			{
				++m_rt.m_stats.connect_failures;
				m_host.closed.push_back(e);
			}
		}
		return e;
	}

	void send(edge_id e, std::vector<std::uint8_t> bytes) override
	{
		auto const it = m_host.edges.find(e);
		if (it == m_host.edges.end()) return;
		auto& ed = it->second;
		if (ed.remote.proto == protocol::udp)
		{
			if (bytes.size() > ethernet_payload) ++m_rt.m_stats.oversized_datagrams;
			try
			{
				m_host.udp->send_to(ed.remote, bytes);
				++m_rt.m_stats.datagrams_sent;
			}
			catch (transport_error const&)
			{
				++m_rt.m_stats.send_failures;
			}
			return;
		}
		if (!ed.stream) return;
		try
		{
			ed.stream->send(bytes);
			++m_rt.m_stats.frames_sent;
		}
		catch (frame_too_large const&)
		{
			++m_rt.m_stats.send_failures;
		}
	}

	void close_edge(edge_id e) override { m_host.drop(e); }

private:
	loopback_runtime& m_rt;
	host& m_host;
};

loopback_runtime::loopback_runtime(loopback_options opt)
	: m_opt(std::move(opt))
	, m_start(std::chrono::steady_clock::now())
	, m_rng(m_opt.seed)
{
}

loopback_runtime::~loopback_runtime() = default;

double loopback_runtime::now() const
{
	return std::chrono::duration<double>(std::chrono::steady_clock::now() - m_start).count();
}

std::size_t loopback_runtime::add_node(std::vector<protocol> preference)
{
	if (preference.empty()) preference = {protocol::udp};
	auto h = std::make_unique<host>();
	h->udp = std::make_unique<udp_socket>(m_opt.host, 0);
	h->tcp = std::make_unique<tcp_listener>(m_opt.host, 0);
	h->env = std::make_unique<host_environment>(*this, *h);

	std::vector<transport_address> tas;
	for (auto p : preference)
	{
		auto const& ta = p == protocol::udp ? h->udp->local() : h->tcp->local();
		if (std::find(tas.begin(), tas.end(), ta) == tas.end()) tas.push_back(ta);
	}
	h->node = std::make_unique<overlay::node>(random_class0(m_rng), tas, m_opt.node, *h->env, m_rng());
	std::uniform_real_distribution<double> phase(0.0, m_opt.tick_interval);
	h->next_tick = now() + phase(m_rng);
	m_hosts.push_back(std::move(h));
	return m_hosts.size() - 1;
}

overlay::node& loopback_runtime::node_at(std::size_t i)
{
	return *m_hosts.at(i)->node;
}

overlay::node const& loopback_runtime::node_at(std::size_t i) const
{
	return *m_hosts.at(i)->node;
}

void loopback_runtime::join(std::size_t i, std::vector<std::size_t> const& proxies)
{
	std::vector<transport_address> tas;
	for (auto p : proxies) tas.push_back(m_hosts.at(p)->node->transport_addresses().front());
	m_hosts.at(i)->node->join(tas);
	dispatch_closed();
}

void loopback_runtime::dispatch_closed()
{
	for (auto& h : m_hosts)
	{
		while (!h->closed.empty())
		{
			edge_id const e = h->closed.back();
			h->closed.pop_back();
			h->drop(e);
			h->node->on_edge_closed(e);
		}
	}
}

void loopback_runtime::poll_once(double max_wait)
{
	struct watch
	{
		host* h;
		enum class what : std::uint8_t { udp, listener, stream } kind;
		edge_id e;
	};
	std::vector<pollfd> fds;
	std::vector<watch> watches;
	for (auto& hp : m_hosts)
	{
		host& h = *hp;
		fds.push_back({h.udp->fd(), POLLIN, 0});
		watches.push_back({&h, watch::what::udp, 0});
		fds.push_back({h.tcp->fd(), POLLIN, 0});
		watches.push_back({&h, watch::what::listener, 0});
		for (auto& [e, ed] : h.edges)
		{
			if (!ed.stream || ed.stream->status() == tcp_stream::state::closed) continue;
			short ev = POLLIN;
			if (ed.stream->wants_write()) ev |= POLLOUT;
			fds.push_back({ed.stream->fd(), ev, 0});
			watches.push_back({&h, watch::what::stream, e});
		}
	}
	int const wait_ms = std::max(0, int(max_wait * 1000));
	if (::poll(fds.data(), fds.size(), wait_ms) <= 0) return;

	for (std::size_t i = 0; i < fds.size(); ++i)
	{
		if (fds[i].revents == 0) continue;
		host& h = *watches[i].h;
		switch (watches[i].kind)
		{
			case watch::what::udp:
				while (auto d = h.udp->receive())
				{
					if (d->second.size() < header_size) ++m_stats.malformed;
					edge_id const e = h.edge_for(d->first);
					h.node->on_packet(e, d->first, d->second);
				}
				break;
			case watch::what::listener:
				while (auto s = h.tcp->accept())
				{
					transport_address const remote = s->remote();
					edge_id const e = h.edge_for(remote);
					auto& ed = h.edges.at(e);
					ed.stream.emplace(std::move(*s));
					ed.opened = now();
				}
				break;
			case watch::what::stream:
			{
				auto const it = h.edges.find(watches[i].e);
				if (it == h.edges.end() || !it->second.stream) break;
				auto& ed = it->second;
				try
				{
					if (fds[i].revents & (POLLOUT | POLLERR | POLLHUP)) ed.stream->flush();
					if (fds[i].revents & (POLLIN | POLLHUP))
					{
						for (auto const& p : ed.stream->receive())
						{
							h.node->on_packet(watches[i].e, ed.remote, p);
							if (!h.edges.count(watches[i].e)) break;
						}
						auto const again = h.edges.find(watches[i].e);
						if (again != h.edges.end() && again->second.stream
							&& again->second.stream->status() == tcp_stream::state::closed)
							h.closed.push_back(watches[i].e);
					}
				}
				catch (connect_failed const&)
				{
					++m_stats.connect_failures;
					h.closed.push_back(watches[i].e);
				}
				catch (transport_error const&)
				{
					h.closed.push_back(watches[i].e);
				}
				break;
			}
		}
	}
	dispatch_closed();
}

void loopback_runtime::run_until(double t)
{
	while (now() < t)
	{
		double const current = now();
		double next = t;
		for (auto& h : m_hosts)
		{
			if (h->next_tick <= current)
			{
				h->node->tick();
				h->next_tick = current + m_opt.tick_interval;
			}
			next = std::min(next, h->next_tick);
			for (auto& [e, ed] : h->edges)
			{
				if (ed.stream && ed.stream->status() == tcp_stream::state::opening
					&& current - ed.opened > m_opt.edge_open_timeout)
					h->closed.push_back(e);
			}
		}
		dispatch_closed();
		for (auto& h : m_hosts)
		{
			// push out what the ticks queued
			for (auto& [e, ed] : h->edges)
			{
				if (!ed.stream || ed.stream->status() != tcp_stream::state::open) continue;
				try
				{
					ed.stream->flush();
				}
				catch (transport_error const&)
				{
					h->closed.push_back(e);
				}
			}
		}
		dispatch_closed();
		poll_once(std::min(0.01, std::max(0.0, next - now())));
	}
}

bool loopback_runtime::run_while_not(std::function<bool()> const& pred, double timeout, double check_every)
{
	double const deadline = now() + timeout;
	while (!pred())
	{
		if (now() >= deadline) return false;
		run_until(std::min(deadline, now() + check_every));
	}
	return true;
}

metrics::snapshot loopback_runtime::snapshot() const
{
	std::vector<overlay::node const*> nodes;
	for (auto const& h : m_hosts) nodes.push_back(h->node.get());
	return overlay::topology_snapshot(now(), nodes);
}

demo_result run_demo(std::size_t n, std::vector<std::vector<protocol>> const& transports, loopback_options opt
	, double budget, double spacing)
{
	if (n == 0) throw std::invalid_argument("demo needs at least one node");
	if (transports.empty()) throw std::invalid_argument("no transports given");
	loopback_runtime rt(std::move(opt));
	for (std::size_t i = 0; i < n; ++i) rt.add_node(transports[i % transports.size()]);
	double const start = rt.now();
	double const deadline = start + budget;

	auto fraction = [&] {
		if (n == 1) return rt.node_at(0).join_complete() ? 1.0 : 0.0;
		// nodes not yet on the ring count as incorrect
		auto const report = metrics::ring_correct(rt.snapshot());
		return double(std::count(report.correct.begin(), report.correct.end(), true)) / double(n);
	};

	rt.join(0, {});
	for (std::size_t i = 1; i < n && rt.now() < deadline; ++i)
	{
		rt.run_until(std::min(deadline, rt.now() + spacing));
		rt.join(i, {i - 1});
	}
	demo_result out;
	out.ring_correct = rt.run_while_not([&] { return fraction() == 1.0; }, std::max(0.0, deadline - rt.now()));
	out.elapsed = rt.now() - start;
	out.ring_correct_fraction = fraction();
	out.snapshot = rt.snapshot();
	out.stats = rt.stats();
	return out;
}

simnet::sim_trace run_loopback(simnet::scenario const& s, loopback_options opt
	, std::vector<std::vector<protocol>> const& transports)
{
	simnet::validate(s);
	for (auto const& p : s.phases)
	{
		if (p.what != simnet::phase::kind::bootstrap && p.what != simnet::phase::kind::wait)
			throw simnet::scenario_invalid("real-loopback runs support bootstrap and wait phases only");
	}
	if (transports.empty()) throw std::invalid_argument("no transports given");

	std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
	loopback_runtime rt(std::move(opt));
	simnet::sim_trace trace;
	double next_measure = s.measurement_interval;

	auto measure = [&] {
		auto snap = rt.snapshot();
		auto const rr = metrics::routability(snap, s.pair_budget, trace.rows.size());
		simnet::trace_row row;
		row.time = rt.now();
		row.live_nodes = rt.size();
		row.routability = rr.routability;
		row.ring_correct_fraction = metrics::ring_correct(snap).fraction;
		row.missing_edges = metrics::missing_edges(snap);
		row.mean_hops = rr.mean_hops;
		trace.rows.push_back(row);
		if (s.keep_snapshots) trace.snapshots.push_back(std::move(snap));
	};
	auto advance = [&](double until) {
		while (next_measure <= until)
		{
			rt.run_until(next_measure);
			measure();
			next_measure += s.measurement_interval;
		}
		rt.run_until(until);
	};

	for (auto const& p : s.phases)
	{
		if (p.what == simnet::phase::kind::wait)
		{
			advance(rt.now() + p.duration);
			continue;
		}
		for (std::size_t i = 0; i < p.count; ++i)
		{
			std::size_t const idx = rt.add_node(transports[rt.size() % transports.size()]);
			if (idx == 0) rt.join(idx, {});
			else rt.join(idx, {std::uniform_int_distribution<std::size_t>(0, idx - 1)(rng)});
			advance(rt.now() + s.bootstrap_spacing);
		}
	}
	measure();
	trace.final_snapshot = rt.snapshot();
	return trace;
}

} // namespace symphony::transport
