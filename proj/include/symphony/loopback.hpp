#ifndef SYMPHONY_LOOPBACK_HPP
#define SYMPHONY_LOOPBACK_HPP

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "symphony/metrics.hpp"
#include "symphony/node.hpp"
#include "symphony/scenario.hpp"
#include "symphony/transport.hpp"

namespace symphony::transport {

struct loopback_options
{
	overlay::node_config node;
	std::uint64_t seed = 1;
	double tick_interval = 1.0;
	// wall clock seconds a TCP edge may spend connecting
	double edge_open_timeout = 5.0;
	std::string host = "127.0.0.1";
};

struct loopback_stats
{
	std::uint64_t datagrams_sent = 0;
	std::uint64_t frames_sent = 0;
	// datagrams too short to hold a packet header
	std::uint64_t malformed = 0;
	// datagrams above 1472 bytes, which would not fit one Ethernet frame
	std::uint64_t oversized_datagrams = 0;
	std::uint64_t send_failures = 0;
	std::uint64_t connect_failures = 0;
};

// In-process nodes talking over real sockets on one host, driven by a single
// poll loop on the wall clock.
class loopback_runtime
{
public:
	explicit loopback_runtime(loopback_options opt);
	~loopback_runtime();

	loopback_runtime(loopback_runtime const&) = delete;
	loopback_runtime& operator=(loopback_runtime const&) = delete;

	// Binds a UDP socket and a TCP listener for a new node. Peers try the
	// transport addresses in the order of the protocols given.
	std::size_t add_node(std::vector<protocol> preference = {protocol::udp});
	std::size_t size() const { return m_hosts.size(); }
	overlay::node& node_at(std::size_t i);
	overlay::node const& node_at(std::size_t i) const;

	void join(std::size_t i, std::vector<std::size_t> const& proxies);

	// seconds since the runtime started
	double now() const;
	void run_until(double t);
	// Runs until pred holds or timeout seconds pass; true when pred held.
	bool run_while_not(std::function<bool()> const& pred, double timeout, double check_every = 0.25);

	metrics::snapshot snapshot() const;
	loopback_stats const& stats() const { return m_stats; }

private:
	struct host;
	class host_environment;

	void poll_once(double max_wait);
	void dispatch_closed();

	loopback_options m_opt;
	std::chrono::steady_clock::time_point m_start;
	std::mt19937_64 m_rng;
	std::vector<std::unique_ptr<host>> m_hosts;
	loopback_stats m_stats;
};

struct demo_result
{
	bool ring_correct = false;
	// wall clock seconds from the first join to the verdict
	double elapsed = 0;
	double ring_correct_fraction = 0;
	metrics::snapshot snapshot;
	loopback_stats stats;
};

// n nodes join one after another, each through the previous one and spacing
// seconds apart, then run until the ring is correct or budget seconds have
// passed. A single node is a correct ring once it has joined alone.
demo_result run_demo(std::size_t n, std::vector<std::vector<protocol>> const& transports, loopback_options opt
	, double budget = 60, double spacing = 0.2);

// Runs a scenario over loopback sockets on the wall clock. Only bootstrap and
// wait phases are supported; others throw scenario_invalid. Nodes take their
// protocol preference from transports in turn.
simnet::sim_trace run_loopback(simnet::scenario const& s, loopback_options opt
	, std::vector<std::vector<protocol>> const& transports = {{protocol::udp}});

} // namespace symphony::transport

#endif
