#ifndef SYMPHONY_SIMNET_HPP
#define SYMPHONY_SIMNET_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "symphony/metrics.hpp"
#include "symphony/node.hpp"

namespace symphony::simnet {

using overlay::edge_id;
using transport::transport_address;
using host_id = std::size_t;

struct constant_latency
{
	double ms = 50;
};

struct uniform_latency
{
	double min_ms = 20;
	double max_ms = 80;
};

// one way delay per ordered host pair, with a fallback for unlisted pairs
struct table_latency
{
	std::map<std::pair<host_id, host_id>, double> ms;
	double fallback_ms = 50;
};

using latency_model = std::variant<constant_latency, uniform_latency, table_latency>;

struct sim_config
{
	std::uint64_t seed = 1;
	latency_model latency = uniform_latency{};
	double loss_rate = 0;
	// seconds between maintenance ticks of each node
	double tick_interval = 1.0;

	// throws std::invalid_argument
	void validate() const;
};

enum class nat_kind : std::uint8_t
{
	none,
	full_cone,
	restricted_cone,
	port_restricted_cone,
	// per destination mappings; not traversable, kept as a negative control
	symmetric,
};

char const* to_string(nat_kind k);

struct endpoint
{
	std::uint32_t ip = 0;
	std::uint16_t port = 0;

	friend bool operator==(endpoint const&, endpoint const&) = default;
	friend auto operator<=>(endpoint const&, endpoint const&) = default;
};

std::string format_ip(std::uint32_t ip);

// Address translation in front of one internal host.
class nat_profile
{
public:
	nat_profile(nat_kind kind, std::uint32_t external_ip);

	nat_kind kind() const { return m_kind; }
	std::uint32_t external_ip() const { return m_external_ip; }

	// Translates an outbound datagram from the internal host and records the
	// destination as a permitted source.
	endpoint outbound(endpoint const& internal, endpoint const& destination);

	// Inbound datagram from source to external_port: the internal endpoint to
	// deliver to, or nullopt when the datagram is filtered.
	std::optional<endpoint> inbound(std::uint16_t external_port, endpoint const& source) const;

private:
	struct mapping
	{
		endpoint internal;
		std::set<std::uint32_t> permitted_ips;
		std::set<endpoint> permitted_endpoints;
	};

	nat_kind m_kind;
	std::uint32_t m_external_ip;
	std::uint16_t m_next_port = 40000;
	// external port -> mapping
	std::map<std::uint16_t, mapping> m_mappings;
	// (internal, destination for symmetric else zero) -> external port
	std::map<std::pair<endpoint, endpoint>, std::uint16_t> m_ports;
};

enum class verdict : std::uint8_t { pass, drop };

// The filtering rule applied to an inbound datagram at a NAT.
verdict nat_filter(nat_profile const& profile, std::uint16_t external_port, endpoint const& source);

struct host_options
{
	std::optional<address> addr;
	nat_kind nat = nat_kind::none;
};

// One input handed to a node. Recording them lets a run be replayed against
// another network.
struct tap_record
{
	enum class kind : std::uint8_t { start, join, tick, packet };

	kind what = kind::tick;
	double time = 0;
	host_id host = 0;
	// start: node address and seed
	address addr;
	std::uint64_t seed = 0;
	// start: local transport addresses, join: proxies
	std::vector<transport_address> tas;
	// packet: edge, sender and bytes
	edge_id edge = 0;
	transport_address remote;
	std::vector<std::uint8_t> bytes;
};

class simulator
{
public:
	simulator(sim_config cfg, overlay::node_config node_cfg);
	~simulator();

	simulator(simulator const&) = delete;
	simulator& operator=(simulator const&) = delete;

	double now() const { return m_now; }
	std::mt19937_64& rng() { return m_rng; }
	overlay::node_config const& node_settings() const { return m_node_cfg; }

	// Creates a host with a fresh node that has not joined yet.
	host_id add_host(host_options opt = {});
	std::size_t host_count() const { return m_hosts.size(); }

	// Starts joining through the given hosts (none: form a ring alone).
	void join(host_id h, std::vector<host_id> const& proxies);
	// time the current node of a host was asked to join, if it was
	std::optional<double> join_started(host_id h) const;
	// Abrupt departure: no goodbye, every edge silently dies.
	void kill(host_id h);
	// Restarts a dead host with a new node keeping address and transport address.
	void revive(host_id h);

	bool alive(host_id h) const;
	overlay::node& node_at(host_id h);
	overlay::node const& node_at(host_id h) const;
	address address_of(host_id h) const;
	// transport address peers use to reach this host
	transport_address public_ta(host_id h) const;
	std::vector<host_id> live_hosts() const;
	// live hosts whose node holds at least one structured connection
	std::vector<host_id> placed_hosts() const;

	void schedule(double at, std::function<void()> fn);
	void run_until(double t);

	// Graph of placed hosts with connections that both endpoints hold,
	// optionally restricted to some hosts.
	metrics::snapshot snapshot() const;
	metrics::snapshot snapshot(std::vector<host_id> const& among) const;

	// protocol messages sent, keyed by message name
	std::map<std::string, std::uint64_t> const& message_counts() const { return m_messages; }
	std::uint64_t messages_excluding_keepalive() const;
	std::uint64_t datagrams_dropped() const { return m_dropped; }

	// every protocol event, in order, when enabled
	void record_events(bool on) { m_record = on; }
	std::vector<overlay::protocol_event> const& events() const { return m_events; }
	void set_tap(std::function<void(tap_record const&)> tap) { m_tap = std::move(tap); }

	// join completion durations of nodes that finished joining
	std::vector<double> const& join_durations() const { return m_join_durations; }

private:
	struct host;
	class host_environment;

	struct event
	{
		double time;
		std::uint64_t seq;
		std::function<void()> fn;
	};
	struct later
	{
		bool operator()(event const& a, event const& b) const
		{
			return a.time != b.time ? a.time > b.time : a.seq > b.seq;
		}
	};

	void transmit(host_id from, transport_address const& to, std::vector<std::uint8_t> bytes);
	void arrive(host_id h, endpoint internal, endpoint source, std::vector<std::uint8_t> bytes);
	double latency(host_id a, host_id b);
	void start_node(host_id h);
	void schedule_tick(host_id h, std::uint64_t generation, double at);

	sim_config m_cfg;
	overlay::node_config m_node_cfg;
	std::mt19937_64 m_rng;
	double m_now = 0;
	std::uint64_t m_seq = 0;
	std::priority_queue<event, std::vector<event>, later> m_queue;

	std::vector<std::unique_ptr<host>> m_hosts;
	// public ip -> host
	std::map<std::uint32_t, host_id> m_by_ip;

	std::map<std::string, std::uint64_t> m_messages;
	std::uint64_t m_dropped = 0;
	bool m_record = false;
	std::vector<overlay::protocol_event> m_events;
	std::function<void(tap_record const&)> m_tap;
	std::vector<double> m_join_durations;
};

} // namespace symphony::simnet

#endif
