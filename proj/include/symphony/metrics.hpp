#ifndef SYMPHONY_METRICS_HPP
#define SYMPHONY_METRICS_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "symphony/address.hpp"

// Offline analysis of topology snapshots. Nothing here touches overlay state;
// the only shared code is the address arithmetic and the greedy next-hop rule
// being replayed.
namespace symphony::metrics {

inline constexpr char const* label_near = "structured.near";
inline constexpr char const* label_shortcut = "structured.shortcut";
inline constexpr char const* label_leaf = "leaf";

struct edge
{
	// shortcut edges point from the node that asked for them to the peer
	address from;
	address to;
	std::string label;

	friend bool operator==(edge const&, edge const&) = default;
	friend auto operator<=>(edge const&, edge const&) = default;
};

// Live nodes and the connections held at both endpoints.
struct snapshot
{
	double time = 0;
	std::vector<address> nodes;
	std::vector<edge> edges;

	friend bool operator==(snapshot const&, snapshot const&) = default;
};

class malformed_snapshot : public std::runtime_error
{
public:
	malformed_snapshot(std::size_t line, std::string const& what);
	std::size_t line() const { return m_line; }

private:
	std::size_t m_line;
};

class insufficient_samples : public std::runtime_error
{
public:
	using std::runtime_error::runtime_error;
};

// Text format, one record per line:
//   time <seconds>
//   node <40 hex digits>
//   edge <from hex> <to hex> <label>
// Blank lines and lines starting with '#' are ignored.
void write_snapshot(std::ostream& out, snapshot const& s);
snapshot read_snapshot(std::istream& in);

// Graphviz rendering with nodes placed on a circle by address.
void write_dot(std::ostream& out, snapshot const& s);

struct ring_report
{
	std::vector<bool> correct;
	double fraction = 1.0;
};

// A node is correct when its near-labeled edges reach its two nearest live
// addresses clockwise and its two nearest counter-clockwise. With two nodes
// the pair only needs to be connected.
ring_report ring_correct(snapshot const& s);

// (node, required neighbor) relations that are absent
std::size_t missing_edges(snapshot const& s);

struct routability_report
{
	std::size_t pairs_tested = 0;
	std::size_t pairs_routable = 0;
	double routability = 1.0;
	double mean_hops = 0;
	std::size_t max_hops = 0;
};

// Replays greedy routing over the structured edges for every ordered pair of
// distinct nodes, or over pair_budget pairs sampled without replacement when
// there are more pairs than that.
routability_report routability(snapshot const& s, std::optional<std::size_t> pair_budget = std::nullopt
	, std::uint64_t seed = 0);

// log2 of the clockwise distance covered by each shortcut edge
std::vector<long double> shortcut_log2_lengths(snapshot const& s);

// Kolmogorov-Smirnov distance of samples (log2 lengths) against
// log(L / d_ave) / log(2^160 / d_ave)
double ks_distance(std::vector<long double> log2_lengths, long double log2_d_ave);

struct shortcut_report
{
	std::size_t samples = 0;
	double ks = 0;
};

// d_ave = 2^160 / N. Throws insufficient_samples below 50 shortcut edges.
shortcut_report shortcut_cdf(snapshot const& s);

// Coefficient of determination of a least squares fit of log(y) on t,
// i.e. how well y follows a geometric decay. Entries must be positive.
double geometric_decay_r2(std::vector<double> const& y);

} // namespace symphony::metrics

#endif
