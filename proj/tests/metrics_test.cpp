#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "oracle.hpp"
#include "symphony/metrics.hpp"

using namespace symphony;
using namespace symphony::metrics;

namespace {

std::vector<address> random_nodes(int n, std::mt19937_64& rng)
{
	std::vector<address> nodes;
	for (int i = 0; i < n; ++i) nodes.push_back(random_class0(rng));
	std::sort(nodes.begin(), nodes.end());
	return nodes;
}

// each node linked to its per_side nearest on both sides
void link_ring(snapshot& s, std::vector<address> const& members, int per_side)
{
	int const n = int(members.size());
	std::set<std::pair<address, address>> done;
	for (int i = 0; i < n; ++i)
		for (int k = 1; k <= per_side && k < n; ++k)
		{
			address a = members[std::size_t(i)];
			address b = members[std::size_t((i + k) % n)];
			if (a == b) continue;
			if (b < a) std::swap(a, b);
			if (done.insert({a, b}).second) s.edges.push_back({a, b, label_near});
		}
}

snapshot correct_ring(std::vector<address> const& nodes, int shortcuts, std::mt19937_64& rng)
{
	snapshot s;
	s.nodes = nodes;
	link_ring(s, nodes, 2);
	for (auto const& a : nodes)
		for (int k = 0; k < shortcuts; ++k)
		{
			address const b = nodes[rng() % nodes.size()];
			if (b != a) s.edges.push_back({a, b, label_shortcut});
		}
	return s;
}

void remove_edge(snapshot& s, address const& a, address const& b)
{
	std::erase_if(s.edges, [&](edge const& e) { return (e.from == a && e.to == b) || (e.from == b && e.to == a); });
}

} // namespace

TEST(ring_correct, perfect_ring_is_fully_correct)
{
	std::mt19937_64 rng(1);
	auto const s = correct_ring(random_nodes(64, rng), 2, rng);
	auto const r = ring_correct(s);
	EXPECT_DOUBLE_EQ(r.fraction, 1.0);
	EXPECT_EQ(missing_edges(s), 0u);
}

TEST(ring_correct, one_missing_near_edge_flags_its_two_ends)
{
	std::mt19937_64 rng(2);
	auto const nodes = random_nodes(64, rng);
	auto s = correct_ring(nodes, 0, rng);
	remove_edge(s, nodes[10], nodes[11]);
	auto const r = ring_correct(s);
	EXPECT_EQ(std::count(r.correct.begin(), r.correct.end(), false), 2);
	EXPECT_FALSE(r.correct[10]);
	EXPECT_FALSE(r.correct[11]);
	EXPECT_EQ(missing_edges(s), 2u);
}

TEST(ring_correct, two_nodes_need_only_each_other)
{
	std::mt19937_64 rng(3);
	auto const nodes = random_nodes(2, rng);
	snapshot s;
	s.nodes = nodes;
	EXPECT_DOUBLE_EQ(ring_correct(s).fraction, 0.0);
	s.edges.push_back({nodes[0], nodes[1], label_shortcut});
	EXPECT_DOUBLE_EQ(ring_correct(s).fraction, 1.0);
}

TEST(ring_correct, missing_edges_zero_exactly_when_correct)
{
	std::mt19937_64 rng(4);
	for (int trial = 0; trial < 200; ++trial)
	{
		int const n = int(rng() % 40) + 3;
		auto const nodes = random_nodes(n, rng);
		auto s = correct_ring(nodes, 1, rng);
		int const cuts = int(rng() % 3);
		for (int c = 0; c < cuts; ++c)
		{
			std::size_t const i = rng() % nodes.size();
			remove_edge(s, nodes[i], nodes[(i + 1 + rng() % 2) % nodes.size()]);
		}
		bool const correct = ring_correct(s).fraction == 1.0;
		EXPECT_EQ(missing_edges(s) == 0, correct);
	}
}

TEST(routability, correct_ring_is_fully_routable)
{
	std::mt19937_64 rng(5);
	for (int n : {2, 3, 17, 64, 128})
	{
		auto const s = correct_ring(random_nodes(n, rng), 3, rng);
		ASSERT_DOUBLE_EQ(ring_correct(s).fraction, 1.0);
		auto const r = routability(s);
		EXPECT_EQ(r.pairs_tested, std::size_t(n) * std::size_t(n - 1));
		EXPECT_DOUBLE_EQ(r.routability, 1.0) << n;
	}
}

TEST(routability, split_ring_matches_intra_component_pair_count)
{
	std::mt19937_64 rng(6);
	for (auto [a, b] : {std::pair{10, 30}, std::pair{16, 16}, std::pair{5, 59}})
	{
		auto const nodes = random_nodes(a + b, rng);
		std::vector<address> const left(nodes.begin(), nodes.begin() + a);
		std::vector<address> const right(nodes.begin() + a, nodes.end());
		snapshot s;
		s.nodes = nodes;
		link_ring(s, left, 2);
		link_ring(s, right, 2);
		double const n = a + b;
		double const exact = (double(a) * (a - 1) + double(b) * (b - 1)) / (n * (n - 1));
		double const approx = (double(a) * a + double(b) * b) / (n * n);
		auto const r = routability(s);
		EXPECT_DOUBLE_EQ(r.routability, exact);
		EXPECT_NEAR(r.routability, approx, 0.05);
	}
}

TEST(routability, sampled_estimate_tracks_exhaustive_value)
{
	int within = 0;
	for (std::uint64_t seed = 0; seed < 20; ++seed)
	{
		std::mt19937_64 rng(100 + seed);
		auto const nodes = random_nodes(128, rng);
		auto s = correct_ring(nodes, 1, rng);
		for (int c = 0; c < 12; ++c)
		{
			std::size_t const i = rng() % nodes.size();
			remove_edge(s, nodes[i], nodes[(i + 1) % nodes.size()]);
		}
		double const exhaustive = routability(s).routability;
		double const sampled = routability(s, 4000, seed).routability;
		if (std::abs(sampled - exhaustive) <= 0.02) ++within;
	}
	EXPECT_GE(within, 19);
}

TEST(routability, pairs_exclude_self)
{
	std::mt19937_64 rng(7);
	auto const s = correct_ring(random_nodes(5, rng), 0, rng);
	EXPECT_EQ(routability(s).pairs_tested, 20u);
}

TEST(shortcut_law, all_shortcuts_at_maximum_distance_fail)
{
	std::vector<long double> const at_max(100, 160.0L);
	EXPECT_GT(ks_distance(at_max, 150), 0.99);
}

TEST(shortcut_law, too_few_shortcuts)
{
	std::mt19937_64 rng(8);
	auto const s = correct_ring(random_nodes(20, rng), 2, rng);
	EXPECT_THROW(shortcut_cdf(s), insufficient_samples);
}

TEST(shortcut_law, lengths_are_clockwise)
{
	snapshot s;
	address const a = oracle::addr(oracle::big(1) << 150);
	address const b = oracle::addr(oracle::big(1) << 100);
	s.nodes = {b, a};
	s.edges = {{a, b, label_shortcut}};
	auto const l = shortcut_log2_lengths(s);
	ASSERT_EQ(l.size(), 1u);
	// from 2^150 clockwise round to 2^100 covers 2^160 - 2^150 + 2^100
	EXPECT_NEAR(double(l[0]), 160.0 + std::log2(1.0 - std::ldexp(1.0, -10) + std::ldexp(1.0, -60)), 1e-9);
}

TEST(snapshot_io, round_trip)
{
	std::mt19937_64 rng(9);
	auto s = correct_ring(random_nodes(30, rng), 2, rng);
	s.time = 123.5;
	s.edges.push_back({s.nodes[0], s.nodes[5], label_leaf});
	std::sort(s.edges.begin(), s.edges.end());
	std::stringstream buf;
	write_snapshot(buf, s);
	auto const back = read_snapshot(buf);
	auto sorted = back;
	std::sort(sorted.edges.begin(), sorted.edges.end());
	EXPECT_EQ(sorted.nodes, s.nodes);
	EXPECT_EQ(sorted.edges, s.edges);
	EXPECT_DOUBLE_EQ(back.time, s.time);
}

TEST(snapshot_io, malformed_inputs_report_lines)
{
	auto line_of = [](std::string const& text) -> std::size_t {
		std::istringstream in(text);
		try
		{
			read_snapshot(in);
		}
		catch (malformed_snapshot const& e)
		{
			return e.line();
		}
		return 9999;
	};
	std::string const a(40, 'a');
	std::string const b(40, 'b');
	EXPECT_NE(line_of(""), 9999u);
	EXPECT_EQ(line_of("time 1\nnode " + a + "\nbogus 3\n"), 3u);
	EXPECT_EQ(line_of("node " + a + "\nnode " + a + "\n"), 2u);
	EXPECT_EQ(line_of("node " + a + "\nedge " + a + " " + b + " structured.near\n"), 2u);
	EXPECT_EQ(line_of("# comment\n\nnode xyz\n"), 3u);
	EXPECT_EQ(line_of("time soon\n"), 1u);
	EXPECT_EQ(line_of("node " + a + " extra\n"), 1u);
}

TEST(snapshot_io, dot_lists_every_node_and_edge)
{
	std::mt19937_64 rng(10);
	auto const s = correct_ring(random_nodes(6, rng), 1, rng);
	std::ostringstream out;
	write_dot(out, s);
	std::string const dot = out.str();
	EXPECT_EQ(dot.rfind("graph", 0), 0u);
	for (auto const& n : s.nodes) EXPECT_NE(dot.find(n.to_hex().substr(0, 8)), std::string::npos);
	std::size_t edges = 0;
	for (std::size_t at = dot.find(" -- "); at != std::string::npos; at = dot.find(" -- ", at + 1)) ++edges;
	EXPECT_EQ(edges, s.edges.size());
}

TEST(geometric_decay, perfect_decay_and_reference_fit)
{
	std::vector<double> y;
	for (int i = 0; i < 10; ++i) y.push_back(500 * std::pow(0.6, i));
	EXPECT_NEAR(geometric_decay_r2(y), 1.0, 1e-12);

	std::vector<double> const noisy{100, 70, 55, 30, 22, 18, 9, 6, 5, 2};
	// ordinary least squares of log y on t, written out
	double const n = double(noisy.size());
	double st = 0, sy = 0, stt = 0, sty = 0;
	for (std::size_t i = 0; i < noisy.size(); ++i)
	{
		double const t = double(i);
		double const ly = std::log(noisy[i]);
		st += t;
		sy += ly;
		stt += t * t;
		sty += t * ly;
	}
	double const slope = (n * sty - st * sy) / (n * stt - st * st);
	double const icpt = (sy - slope * st) / n;
	double ss_res = 0, ss_tot = 0;
	for (std::size_t i = 0; i < noisy.size(); ++i)
	{
		double const ly = std::log(noisy[i]);
		double const fit = icpt + slope * double(i);
		ss_res += (ly - fit) * (ly - fit);
		ss_tot += (ly - sy / n) * (ly - sy / n);
	}
	EXPECT_NEAR(geometric_decay_r2(noisy), 1 - ss_res / ss_tot, 1e-9);
}
