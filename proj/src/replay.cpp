#include "symphony/replay.hpp"

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <poll.h>

#include "symphony/transport.hpp"

namespace symphony::transport {

using overlay::edge_id;
using simnet::host_id;
using simnet::tap_record;

namespace {

void wait_for(int fd, short events, double timeout)
{
	pollfd p{fd, events, 0};
	if (::poll(&p, 1, int(timeout * 1000)) <= 0) throw transport_error("replay wire stalled");
}

class lockstep
{
public:
	lockstep(overlay::node_config cfg, protocol wire, std::string host, double timeout)
		: m_cfg(std::move(cfg)), m_wire(wire), m_host(std::move(host)), m_timeout(timeout)
	{
	}

	replay_result run(std::vector<tap_record> const& records)
	{
		for (auto const& r : records)
		{
			m_now = r.time;
			switch (r.what)
			{
				case tap_record::kind::start: start(r); break;
				case tap_record::kind::join: at(r.host).node->join(r.tas); break;
				case tap_record::kind::tick: at(r.host).node->tick(); break;
				case tap_record::kind::packet: deliver(r); break;
			}
		}
		return std::move(m_result);
	}

private:
	class environment;

	struct peer
	{
		transport_address ta;
		std::unique_ptr<udp_socket> udp;
		std::unique_ptr<tcp_listener> tcp;
		std::unique_ptr<environment> env;
		std::unique_ptr<overlay::node> node;
		std::map<transport_address, edge_id> by_ta;
		std::map<edge_id, transport_address> by_edge;
		edge_id next_edge = 1;
		std::deque<std::pair<transport_address, std::vector<std::uint8_t>>> inbox;

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

	struct stream_pair
	{
		std::optional<tcp_stream> out;
		std::optional<tcp_stream> in;
	};

	class environment : public overlay::environment
	{
	public:
		environment(lockstep& ls, host_id h) : m_ls(ls), m_host(h) {}

		double now() const override { return m_ls.m_now; }
		edge_id open_edge(transport_address const& remote) override { return m_ls.at(m_host).edge_for(remote); }

		void send(edge_id e, std::vector<std::uint8_t> bytes) override
		{
			auto const& p = m_ls.at(m_host);
			auto const it = p.by_edge.find(e);
			if (it == p.by_edge.end()) return;
			m_ls.transmit(m_host, it->second, bytes);
		}

		void close_edge(edge_id e) override
		{
			auto& p = m_ls.at(m_host);
			auto const it = p.by_edge.find(e);
			if (it == p.by_edge.end()) return;
			p.by_ta.erase(it->second);
			p.by_edge.erase(it);
		}

	private:
		lockstep& m_ls;
		host_id m_host;
	};

	peer& at(host_id h) { return *m_peers.at(h); }

	void start(tap_record const& r)
	{
		auto p = std::make_unique<peer>();
		p->ta = r.tas.front();
		if (m_wire == protocol::udp)
		{
			p->udp = std::make_unique<udp_socket>(m_host, 0);
			m_sim_by_real[p->udp->local()] = p->ta;
		}
		else
			p->tcp = std::make_unique<tcp_listener>(m_host, 0);
		p->env = std::make_unique<environment>(*this, r.host);
		p->node = std::make_unique<overlay::node>(r.addr, r.tas, m_cfg, *p->env, r.seed);
		p->node->set_event_sink([this](overlay::protocol_event const& ev) { m_result.events.push_back(ev); });
		m_by_sim[p->ta] = r.host;
		m_peers[r.host] = std::move(p);
	}

	void transmit(host_id from, transport_address const& to, std::vector<std::uint8_t> const& bytes)
	{
		auto const target = m_by_sim.find(to);
		if (target == m_by_sim.end()) return;
		auto& src = at(from);
		auto& dst = at(target->second);
		if (m_wire == protocol::udp)
		{
			src.udp->send_to(dst.udp->local(), bytes);
			wait_for(dst.udp->fd(), POLLIN, m_timeout);
			auto d = dst.udp->receive();
			if (!d) throw transport_error("replay datagram vanished");
			auto const sender = m_sim_by_real.find(d->first);
			transport_address const ta = sender == m_sim_by_real.end() ? d->first : sender->second;
			dst.inbox.emplace_back(ta, std::move(d->second));
			return;
		}
		auto& sp = m_streams[{from, target->second}];
		if (!sp.out)
		{
			sp.out.emplace(tcp_stream::connect(dst.tcp->local()));
			wait_for(dst.tcp->fd(), POLLIN, m_timeout);
			auto accepted = dst.tcp->accept();
			if (!accepted) throw transport_error("replay connection vanished");
			sp.in.emplace(std::move(*accepted));
		}
		sp.out->send(bytes);
		while (sp.out->wants_write())
		{
			wait_for(sp.out->fd(), POLLOUT, m_timeout);
			sp.out->flush();
		}
		for (;;)
		{
			wait_for(sp.in->fd(), POLLIN, m_timeout);
			auto packets = sp.in->receive();
			if (packets.empty()) continue;
			// one frame was written and read back before the next, so one arrives
			for (auto& pk : packets) dst.inbox.emplace_back(src.ta, std::move(pk));
			return;
		}
	}

	void deliver(tap_record const& r)
	{
		auto& p = at(r.host);
		++m_result.packets;
		if (p.inbox.empty())
		{
			++m_result.missing;
			return;
		}
		auto [from, bytes] = std::move(p.inbox.front());
		p.inbox.pop_front();
		if (from != r.remote || bytes != r.bytes) ++m_result.mismatched;
		edge_id const e = p.edge_for(from);
		p.node->on_packet(e, from, bytes);
	}

	overlay::node_config m_cfg;
	protocol m_wire;
	std::string m_host;
	double m_timeout;
	double m_now = 0;
	std::map<host_id, std::unique_ptr<peer>> m_peers;
	std::map<transport_address, host_id> m_by_sim;
	std::map<transport_address, transport_address> m_sim_by_real;
	std::map<std::pair<host_id, host_id>, stream_pair> m_streams;
	replay_result m_result;
};

} // namespace

replay_result replay(std::vector<tap_record> const& records, overlay::node_config const& cfg, protocol wire
	, std::string const& host, double receive_timeout)
{
	lockstep ls(cfg, wire, host, receive_timeout);
	return ls.run(records);
}

} // namespace symphony::transport
