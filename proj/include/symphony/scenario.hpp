#ifndef SYMPHONY_SCENARIO_HPP
#define SYMPHONY_SCENARIO_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "symphony/metrics.hpp"
#include "symphony/simnet.hpp"

namespace symphony::simnet {

class scenario_invalid : public std::invalid_argument
{
public:
	using std::invalid_argument::invalid_argument;
};

struct phase
{
	enum class kind : std::uint8_t { bootstrap, wait, massive_join, massive_fail, churn, merge };

	kind what = kind::wait;
	// bootstrap, massive_join, massive_fail (when nonzero), first ring of merge
	std::size_t count = 0;
	// second ring of merge
	std::size_t count_b = 0;
	// massive_fail share of the live population, used when count is zero
	double fraction = 0;
	// wait and churn length, or the settling limit of a merge, in seconds
	double duration = 0;
	// churn: per node, per second departure probability
	double probability = 0;

	static phase bootstrap(std::size_t n) { return {kind::bootstrap, n, 0, 0, 0, 0}; }
	static phase wait(double t) { return {kind::wait, 0, 0, 0, t, 0}; }
	static phase massive_join(std::size_t n) { return {kind::massive_join, n, 0, 0, 0, 0}; }
	static phase massive_fail_count(std::size_t n) { return {kind::massive_fail, n, 0, 0, 0, 0}; }
	static phase massive_fail_fraction(double f) { return {kind::massive_fail, 0, 0, f, 0, 0}; }
	static phase churn(double t, double p) { return {kind::churn, 0, 0, 0, t, p}; }
	static phase merge(std::size_t a, std::size_t b, double limit = 900)
	{
		return {kind::merge, a, b, 0, limit, 0};
	}
};

struct scenario
{
	std::vector<phase> phases;
	double measurement_interval = 10;
	// seconds between consecutive joins while bootstrapping
	double bootstrap_spacing = 1;
	// routability is exhaustive up to this many ordered pairs, sampled above
	std::size_t pair_budget = 20000;
	// retain every measured snapshot in the trace
	bool keep_snapshots = false;
};

// Throws scenario_invalid when a phase asks for more than the population
// holds or has parameters out of range.
void validate(scenario const& s);

struct trace_row
{
	double time = 0;
	std::size_t live_nodes = 0;
	double routability = 1;
	double ring_correct_fraction = 1;
	std::size_t missing_edges = 0;
	double mean_hops = 0;

	friend bool operator==(trace_row const&, trace_row const&) = default;
};

struct merge_result
{
	double bridge_time = 0;
	std::optional<double> merged_time;
	// protocol messages without keepalives, from the bridge join to a merged ring
	std::uint64_t messages = 0;
	// the same messages by name
	std::map<std::string, std::uint64_t> by_kind;
};

struct sim_trace
{
	std::vector<trace_row> rows;
	std::vector<metrics::snapshot> snapshots;
	metrics::snapshot final_snapshot;
	std::vector<double> join_durations;
	// completed session lengths and departures during churn
	double churn_exposure = 0;
	std::size_t churn_departures = 0;
	std::optional<merge_result> merge;
};

sim_trace run(scenario const& s, sim_config const& cfg, overlay::node_config const& node_cfg);

// simulated_time_s,live_nodes,routability,ring_correct_fraction,missing_edges,mean_hops
void write_csv(std::ostream& out, std::vector<trace_row> const& rows);

struct departure
{
	double time;
	std::size_t index;
};

// Each of population nodes departs independently with probability p in every
// whole second of [0, duration). Sessions are geometric with mean 1/p.
std::vector<departure> churn_schedule(std::size_t population, double p, double duration, std::mt19937_64& rng);

// Ideal ring with near_per_side links each way plus shortcuts per node,
// drawn the way a converged node draws them: distance sampled from the
// 1/d law with a locally estimated d_ave, linked to the node closest to
// self + d.
metrics::snapshot converged_topology(std::size_t n, std::size_t near_per_side, std::size_t shortcuts
	, std::mt19937_64& rng);

struct nat_trial_result
{
	bool connected = false;
	// from the first handshake attempt between the two to the connection
	std::optional<double> elapsed;
};

// Two nodes behind NATs of the given kinds meet through a public rendezvous
// node and try to link with each other.
nat_trial_result nat_trial(nat_kind a, nat_kind b, std::uint64_t seed, double budget = 31.0);

} // namespace symphony::simnet

#endif
