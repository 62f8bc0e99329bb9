#ifndef SYMPHONY_NODE_HPP
#define SYMPHONY_NODE_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "symphony/address.hpp"
#include "symphony/messages.hpp"
#include "symphony/packet.hpp"
#include "symphony/routing.hpp"
#include "symphony/transport_address.hpp"

namespace symphony::overlay {

using edge_id = std::uint64_t;

// What a node needs from whatever carries its packets: the simulator or a
// real socket reactor. Edges toward the same remote endpoint may be reused.
class environment
{
public:
	virtual ~environment() = default;
	// seconds, on whatever clock drives the node
	virtual double now() const = 0;
	virtual edge_id open_edge(transport_address const& remote) = 0;
	virtual void send(edge_id e, std::vector<std::uint8_t> bytes) = 0;
	virtual void close_edge(edge_id e) = 0;
};

struct node_config
{
	std::size_t near_per_side = 2;
	// fixed shortcut count; derived from the size estimate when unset
	std::optional<std::size_t> shortcuts;
	std::size_t max_shortcuts = 16;
	std::uint16_t ttl = default_ttl;

	int handshake_retries = 4;
	double handshake_backoff = 1.0;

	double ping_interval = 3.0;
	double edge_timeout = 10.0;
	double raw_edge_timeout = 30.0;

	double join_retry_interval = 5.0;
	int join_attempts = 4;
	double leaf_timeout = 60.0;

	double shortcut_timeout = 10.0;
	double shortcut_retry = 5.0;
	// connections younger than this are never trimmed
	double trim_grace = 2.0;
	// seconds a trimmed edge keeps forwarding routed packets already in flight
	double trim_linger = 2.0;
	// ticks of ring probing after losing a near neighbor
	int repair_probes = 5;
	// redraw a shortcut once the d_ave estimate has moved this many bits
	// away from the one it was drawn with
	double shortcut_redraw_bits = 0.5;
	// do not re-request a near link to a peer within this many seconds
	double relink_backoff = 3.0;
};

enum class link_error : std::uint8_t
{
	handshake_timeout,
	address_collision,
	address_mismatch,
	all_transports_failed,
	join_timeout,
};

char const* to_string(link_error e);

// Observable protocol activity, used for tracing and message accounting.
struct protocol_event
{
	enum class kind : std::uint8_t
	{
		sent,
		routed,
		connection_added,
		connection_removed,
		join_complete,
		error,
	};

	kind what = kind::sent;
	double time = 0;
	address node;
	std::optional<address> peer;
	// destination of the packet for routed events
	std::optional<address> destination;
	// message name for sent, routing decision for routed, label for connections
	std::string detail;
	std::optional<link_error> error;

	friend bool operator==(protocol_event const&, protocol_event const&) = default;
};

struct connection
{
	address peer;
	edge_id edge = 0;
	std::vector<transport_address> peer_tas;
	bool leaf = false;
	bool near = false;
	// shortcuts this node requested that resolved to the peer
	int shortcut_out = 0;
	// log2 of the d_ave estimate each of those shortcuts was drawn with
	std::vector<long double> shortcut_basis;
	// the peer requested a shortcut to this node
	bool shortcut_in = false;
	// the peer counts this node among its near neighbors
	bool remote_near = false;
	double established = 0;

	bool structured() const { return near || remote_near || shortcut_out > 0 || shortcut_in; }
	bool needed() const { return leaf || structured(); }
	std::string label() const;
};

class node
{
public:
	using event_sink = std::function<void(protocol_event const&)>;
	using delivery_sink = std::function<void(packet const&)>;

	node(address self, std::vector<transport_address> local_tas, node_config cfg, environment& env
		, std::uint64_t seed);

	node(node const&) = delete;
	node& operator=(node const&) = delete;

	void set_event_sink(event_sink s) { m_events = std::move(s); }
	void set_delivery_sink(delivery_sink s) { m_deliver = std::move(s); }

	// Start joining through one or more proxies. With no proxies the node
	// forms a ring on its own.
	void join(std::vector<transport_address> const& proxies);

	// raw bytes arriving on an edge; remote is the sender as observed here
	void on_packet(edge_id e, transport_address const& remote, std::span<std::uint8_t const> bytes);
	void on_edge_closed(edge_id e);

	// timers, retries and connection maintenance
	void tick();

	// route an application payload from this node
	void send_routed(address const& destination, routing::mode m, std::vector<std::uint8_t> payload);

	// Build a connection to a peer by trying each transport address in turn.
	// Runs the two round trip link handshake; the connection enters the
	// table once both rounds complete on this side.
	void connect_to(std::vector<transport_address> const& tas, std::string const& type
		, std::uint32_t token = 0, std::optional<address> expected = std::nullopt);

	address const& self() const { return m_self; }
	std::vector<transport_address> const& transport_addresses() const { return m_tas; }
	std::map<address, connection> const& connections() const { return m_connections; }
	std::vector<address> structured_peers() const;
	std::vector<address> near_peers() const;
	std::size_t shortcut_count() const;
	std::size_t target_shortcuts() const;
	std::optional<ring_distance> d_ave_estimate() const;

	bool joining() const { return m_joining; }
	bool join_complete() const { return m_join_completed.has_value(); }
	std::optional<double> join_completed_at() const { return m_join_completed; }
	bool join_failed() const { return m_join_failed; }
	std::size_t handshakes_in_progress() const;

	enum class request_kind : std::uint8_t { join, near, shortcut, directional, probe };

private:
	struct handshake
	{
		enum class stage : std::uint8_t { link, status };
		stage st = stage::link;
		std::string type;
		std::uint32_t token = 0;
		std::optional<address> expected;
		int attempts = 0;
		double deadline = 0;
		std::vector<transport_address> remaining;
	};

	struct edge_state
	{
		transport_address remote;
		std::optional<address> peer;
		std::vector<transport_address> peer_tas;
		double created = 0;
		double last_recv = 0;
		double last_ping = -1e18;
		std::optional<handshake> out;
		// responder side of a handshake waiting for its status round
		std::optional<std::string> accepted_type;
		std::uint32_t accepted_token = 0;
		// a trimmed connection still forwards traffic already in flight until then
		std::optional<double> linger_until;
	};

	struct pending_request
	{
		request_kind kind = request_kind::near;
		double sent = 0;
		direction dir = direction::clockwise;
		long double basis = 0;
	};

	// packet plumbing
	void send_link(edge_id e, link_message const& m);
	void send_status(edge_id e, status_message::kind k);
	void send_raw(edge_id e, packet const& p, char const* what);
	void handle_link(edge_id e, edge_state& es, packet const& p);
	void handle_status(edge_id e, edge_state& es, packet const& p);
	void complete_overtaken(edge_id e, edge_state& es);
	void handle_routed(edge_id e, edge_state& es, packet p);
	void route(packet p, std::optional<address> prev);
	void forward_to(address const& next, packet const& p);
	void deliver(packet const& p, routing::decision const& d);

	// protocol steps
	void begin_handshake(edge_id e, handshake hs);
	void fail_handshake(edge_id e, link_error why);
	void complete_link(edge_id e, edge_state& es, std::string const& type, std::uint32_t token);
	void handle_connection_request(connection_request const& req, routing::decision const& d);
	void handle_connection_response(connection_request const& resp);
	void process_status(status_message const& status);
	void send_join_request(edge_id via);
	std::uint32_t send_connection_request(address const& destination, routing::mode m, request_kind kind
		, std::string const& type, std::uint8_t flags, std::optional<edge_id> first_hop
		, std::uint16_t ttl, direction dir = direction::clockwise);
	void remove_connection(address const& peer, bool notify, char const* why);
	void drop_edge(edge_id e);
	void update_near();
	void overlord_tick();
	void maintain_edges();
	void learn_local_ta(transport_address const& ta);

	std::vector<address> top_near(std::vector<address> const& candidates, direction dir) const;
	std::vector<peer_info> near_list() const;
	bool handshake_pending_to(address const& peer) const;
	std::optional<edge_id> edge_of(address const& peer) const;
	std::uint32_t new_request_id();
	void emit(protocol_event::kind k, std::optional<address> peer, std::string detail
		, std::optional<link_error> err = std::nullopt);

	address m_self;
	std::vector<transport_address> m_tas;
	node_config m_cfg;
	environment& m_env;
	std::mt19937_64 m_rng;

	std::map<edge_id, edge_state> m_edges;
	std::map<address, connection> m_connections;
	std::map<std::uint32_t, pending_request> m_requests;
	// requests already handled, keyed by requester and id
	std::map<std::pair<address, std::uint32_t>, double> m_seen_requests;
	// last time a near link was attempted per peer
	std::map<address, double> m_near_attempts;
	// neighbor lists most recently reported by connected peers
	std::map<address, std::vector<address>> m_reported;

	bool m_joining = false;
	bool m_join_failed = false;
	int m_join_attempts = 0;
	double m_join_started = 0;
	double m_last_join_request = -1e18;
	std::optional<double> m_first_near;
	std::optional<double> m_join_completed;
	std::vector<transport_address> m_proxies;

	bool m_near_dirty = false;
	// near set as last announced
	std::vector<address> m_last_near;
	// peers dropped from the near set since the last announcement
	std::set<address> m_dropped_near;
	std::array<bool, 2> m_saturated{};
	int m_probes_left = 0;
	double m_next_shortcut = 0;

	event_sink m_events;
	delivery_sink m_deliver;
};

} // namespace symphony::overlay

#endif
