#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "oracle.hpp"
#include "symphony/routing.hpp"

using namespace symphony;
using oracle::big;
using routing::decision;

namespace {

// Brute force reference: sort every candidate by (distance, not self,
// address) and read the rules off the sorted list.
struct reference_router
{
	static std::vector<std::pair<address, bool>> ranked(address const& self, std::vector<address> const& adj
		, address const& target)
	{
		std::vector<std::tuple<big, int, big, address>> rows;
		rows.emplace_back(oracle::ring_distance(oracle::to_big(self), oracle::to_big(target)), 0, oracle::to_big(self), self);
		for (auto const& u : adj)
			rows.emplace_back(oracle::ring_distance(oracle::to_big(u), oracle::to_big(target)), 1, oracle::to_big(u), u);
		std::sort(rows.begin(), rows.end(), [](auto const& a, auto const& b) {
			if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
			if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
			return std::get<2>(a) < std::get<2>(b);
		});
		std::vector<std::pair<address, bool>> out;
		for (auto const& r : rows) out.emplace_back(std::get<3>(r), std::get<1>(r) == 0);
		return out;
	}

	static decision decide(routing::mode m, address const& self, std::vector<address> const& adj
		, std::optional<address> const& prev, address const& target)
	{
		auto const r = ranked(self, adj, target);
		auto usable = [&](std::pair<address, bool> const& c) { return !c.second && !(prev && *prev == c.first); };
		if (m == routing::mode::exact && self == target) return decision::deliver_local();
		if (usable(r[0])) return decision::forward(r[0].first);
		if (m == routing::mode::greedy) return decision::deliver_local();
		if (m == routing::mode::exact) return decision::drop();
		if (r.size() > 1 && usable(r[1])) return decision::deliver_and_forward(r[1].first);
		return decision::deliver_local();
	}
};

address evenly(int i, int n)
{
	return oracle::addr(oracle::modulus() / n * i);
}

using graph = std::map<address, std::vector<address>>;

// nodes sorted by address, each linked to per_side nearest on both sides
graph ring(std::vector<address> nodes, int per_side)
{
	std::sort(nodes.begin(), nodes.end());
	int const n = int(nodes.size());
	graph g;
	for (int i = 0; i < n; ++i)
	{
		std::set<address> nb;
		for (int s = 1; s <= per_side && s < n; ++s)
		{
			nb.insert(nodes[std::size_t((i + s) % n)]);
			nb.insert(nodes[std::size_t((i - s + n) % n)]);
		}
		nb.erase(nodes[std::size_t(i)]);
		g[nodes[std::size_t(i)]] = {nb.begin(), nb.end()};
	}
	return g;
}

void add_shortcuts(graph& g, int k, std::mt19937_64& rng)
{
	std::vector<address> nodes;
	for (auto const& [a, _] : g) nodes.push_back(a);
	for (auto const& a : nodes)
	{
		for (int i = 0; i < k; ++i)
		{
			address const b = nodes[rng() % nodes.size()];
			if (b == a) continue;
			auto& na = g[a];
			auto& nb = g[b];
			if (std::find(na.begin(), na.end(), b) == na.end()) na.push_back(b);
			if (std::find(nb.begin(), nb.end(), a) == nb.end()) nb.push_back(a);
		}
	}
}

// Follows every forwarded copy; returns the nodes that delivered locally.
std::multiset<address> walk(graph const& g, routing::mode m, address const& src, address const& target
	, std::vector<address>* path = nullptr)
{
	std::multiset<address> delivered;
	std::vector<std::pair<address, std::optional<address>>> work{{src, std::nullopt}};
	int budget = 1000;
	while (!work.empty() && budget-- > 0)
	{
		auto const [cur, prev] = work.back();
		work.pop_back();
		if (path) path->push_back(cur);
		auto const d = routing::next_hop(m, cur, g.at(cur), prev, target);
		if (d.delivers_locally()) delivered.insert(cur);
		if (d.next) work.emplace_back(*d.next, cur);
	}
	return delivered;
}

address closest(graph const& g, address const& target)
{
	address best;
	std::optional<big> bd;
	for (auto const& [a, _] : g)
	{
		big const d = oracle::ring_distance(oracle::to_big(a), oracle::to_big(target));
		if (!bd || d < *bd || (d == *bd && a < best))
		{
			best = a;
			bd = d;
		}
	}
	return best;
}

} // namespace

TEST(routing_reference, decisions_match_brute_force)
{
	std::mt19937_64 rng(1);
	for (int i = 0; i < 20000; ++i)
	{
		// a small coarse grid makes distance ties common
		auto coarse = [&] { return oracle::addr(big(rng() % 16) << 156); };
		address const self = coarse();
		std::set<address> nb;
		int const deg = int(rng() % 6);
		for (int j = 0; j < deg; ++j) nb.insert(coarse());
		nb.erase(self);
		std::vector<address> const adj(nb.begin(), nb.end());
		std::optional<address> prev;
		if (!adj.empty() && rng() % 2) prev = adj[rng() % adj.size()];
		address const target = rng() % 3 == 0 ? coarse() : oracle::addr(oracle::random_value(rng));
		for (auto m : {routing::mode::greedy, routing::mode::exact, routing::mode::annealing})
			ASSERT_EQ(routing::next_hop(m, self, adj, prev, target), reference_router::decide(m, self, adj, prev, target))
				<< routing::to_string(m) << " case " << i;
	}
}

TEST(greedy, delivers_when_self_is_closest)
{
	address const self = evenly(0, 8);
	std::vector<address> const adj{evenly(2, 8), evenly(6, 8)};
	EXPECT_EQ(routing::greedy_next_hop(self, adj, std::nullopt, oracle::addr(5)), decision::deliver_local());
}

TEST(greedy, neighbor_target_is_forwarded_to)
{
	address const self = evenly(0, 8);
	std::vector<address> const adj{evenly(1, 8), evenly(3, 8), evenly(6, 8)};
	for (auto m : {routing::mode::greedy, routing::mode::exact, routing::mode::annealing})
		EXPECT_EQ(routing::next_hop(m, self, adj, std::nullopt, evenly(3, 8)), decision::forward(evenly(3, 8)));
}

TEST(greedy, eight_node_ring_path_to_antipode)
{
	std::vector<address> nodes;
	for (int i = 0; i < 8; ++i) nodes.push_back(evenly(i, 8));
	graph const g = ring(nodes, 2);
	address const target = evenly(4, 8);
	std::vector<address> path;
	auto const delivered = walk(g, routing::mode::greedy, nodes[0], target, &path);

	// shortest progress path worked out by hand: two hops of two positions,
	// taking the smaller address on the tie at the first hop
	std::vector<address> const expected{nodes[0], nodes[2], nodes[4]};
	EXPECT_EQ(path, expected);
	EXPECT_EQ(delivered, std::multiset<address>{target});
	for (std::size_t i = 1; i < path.size(); ++i)
		EXPECT_LT(oracle::ring_distance(oracle::to_big(path[i]), oracle::to_big(target))
			, oracle::ring_distance(oracle::to_big(path[i - 1]), oracle::to_big(target)));
}

TEST(exact, delivers_only_at_target)
{
	address const self = evenly(1, 8);
	std::vector<address> const adj{evenly(0, 8), evenly(2, 8)};
	EXPECT_EQ(routing::exact_next_hop(self, adj, std::nullopt, self), decision::deliver_local());
	// self is the local minimum but not the target
	EXPECT_EQ(routing::exact_next_hop(self, adj, std::nullopt, oracle::addr(oracle::to_big(self) + 1)), decision::drop());
}

TEST(annealing, local_minimum_delivers_and_forwards_to_second_best)
{
	address const self = evenly(1, 8);
	std::vector<address> const adj{evenly(3, 8), evenly(6, 8)};
	address const target = oracle::addr(oracle::to_big(self) + 5);
	EXPECT_EQ(routing::annealing_next_hop(self, adj, std::nullopt, target), decision::deliver_and_forward(evenly(3, 8)));
	// the second best is where the packet came from
	EXPECT_EQ(routing::annealing_next_hop(self, adj, evenly(3, 8), target), decision::deliver_local());
}

TEST(annealing, matches_greedy_when_progress_exists)
{
	std::mt19937_64 rng(3);
	for (int i = 0; i < 2000; ++i)
	{
		address const self = oracle::addr(oracle::random_value(rng));
		std::vector<address> adj;
		for (int j = 0; j < 5; ++j) adj.push_back(oracle::addr(oracle::random_value(rng)));
		address const target = oracle::addr(oracle::random_value(rng));
		auto const g = routing::greedy_next_hop(self, adj, std::nullopt, target);
		if (g.what == decision::kind::forward)
			EXPECT_EQ(routing::annealing_next_hop(self, adj, std::nullopt, target), g);
	}
}

TEST(annealing, broken_ring_delivers_at_both_gap_endpoints)
{
	std::vector<address> nodes;
	for (int i = 0; i < 8; ++i) nodes.push_back(evenly(i, 8));
	graph g = ring(nodes, 2);
	auto cut = [&](address const& a, address const& b) {
		auto& na = g[a];
		na.erase(std::remove(na.begin(), na.end(), b), na.end());
	};
	cut(nodes[3], nodes[4]);
	cut(nodes[4], nodes[3]);
	// three quarters of the way from node 3 to node 4
	address const target = oracle::addr(oracle::modulus() / 32 * 15);
	ASSERT_EQ(closest(g, target), nodes[4]);

	auto const greedy = walk(g, routing::mode::greedy, nodes[1], target);
	auto const annealing = walk(g, routing::mode::annealing, nodes[1], target);
	auto const exact = walk(g, routing::mode::exact, nodes[1], target);
	EXPECT_EQ(greedy, std::multiset<address>{nodes[3]});
	EXPECT_EQ(annealing, (std::multiset<address>{nodes[3], nodes[4]}));
	EXPECT_TRUE(exact.empty());
}

TEST(greedy, loop_free_on_random_graphs)
{
	std::mt19937_64 rng(5);
	for (int trial = 0; trial < 50; ++trial)
	{
		graph g;
		std::vector<address> nodes;
		for (int i = 0; i < 40; ++i) nodes.push_back(oracle::addr(oracle::random_value(rng)));
		for (auto const& a : nodes) g[a];
		for (int e = 0; e < 80; ++e)
		{
			address const a = nodes[rng() % nodes.size()];
			address const b = nodes[rng() % nodes.size()];
			if (a == b) continue;
			if (std::find(g[a].begin(), g[a].end(), b) == g[a].end()) g[a].push_back(b);
			if (std::find(g[b].begin(), g[b].end(), a) == g[b].end()) g[b].push_back(a);
		}
		for (int q = 0; q < 20; ++q)
		{
			address const target = oracle::addr(oracle::random_value(rng));
			for (auto m : {routing::mode::greedy, routing::mode::exact})
			{
				std::vector<address> path;
				walk(g, m, nodes[rng() % nodes.size()], target, &path);
				ASSERT_LT(path.size(), nodes.size() + 1);
				for (std::size_t i = 1; i < path.size(); ++i)
					ASSERT_LT(oracle::ring_distance(oracle::to_big(path[i]), oracle::to_big(target))
						, oracle::ring_distance(oracle::to_big(path[i - 1]), oracle::to_big(target)));
			}
		}
	}
}

TEST(exact, never_delivers_away_from_target)
{
	std::mt19937_64 rng(7);
	for (int n : {2, 3, 5, 8, 16, 33, 64})
	{
		std::vector<address> nodes;
		for (int i = 0; i < n; ++i) nodes.push_back(oracle::addr(oracle::random_value(rng) & ~big(1)));
		graph g = ring(nodes, 2);
		// break a few links so that some routes dead-end
		add_shortcuts(g, 1, rng);
		if (n > 4)
		{
			auto& victim = g[nodes[0]];
			victim.erase(victim.begin());
		}
		for (auto const& s : nodes)
			for (auto const& t : nodes)
			{
				if (s == t) continue;
				auto const delivered = walk(g, routing::mode::exact, s, t);
				for (auto const& d : delivered) ASSERT_EQ(d, t);
			}
	}
}

TEST(greedy, correct_ring_reaches_closest_node)
{
	std::mt19937_64 rng(9);
	for (int n : {2, 7, 64, 256})
	{
		std::vector<address> nodes;
		for (int i = 0; i < n; ++i) nodes.push_back(oracle::addr(oracle::random_value(rng) & ~big(1)));
		graph g = ring(nodes, 2);
		add_shortcuts(g, 3, rng);
		for (auto const& s : nodes)
		{
			for (int q = 0; q < 8; ++q)
			{
				address const target = oracle::addr(oracle::random_value(rng));
				auto const delivered = walk(g, routing::mode::greedy, s, target);
				ASSERT_EQ(delivered, std::multiset<address>{closest(g, target)});
			}
		}
	}
}

TEST(directional, delivers_when_hops_reach_ttl)
{
	std::vector<address> const adj{evenly(1, 8)};
	EXPECT_EQ(routing::directional_next_hop(evenly(0, 8), adj, direction::clockwise, 2, 2), decision::deliver_local());
}

TEST(directional, walks_the_ring_one_position_per_hop)
{
	constexpr int n = 16;
	std::vector<address> nodes;
	for (int i = 0; i < n; ++i) nodes.push_back(evenly(i, n));
	graph const g = ring(nodes, 2);
	for (auto dir : {direction::clockwise, direction::counter_clockwise})
	{
		for (std::uint16_t ttl = 1; ttl <= n; ++ttl)
		{
			address cur = nodes[3];
			std::uint16_t hops = 0;
			for (;;)
			{
				auto const d = routing::directional_next_hop(cur, g.at(cur), dir, hops, ttl);
				if (d.what == decision::kind::deliver_local) break;
				ASSERT_EQ(d.what, decision::kind::forward);
				cur = *d.next;
				++hops;
			}
			int const step = dir == direction::clockwise ? ttl : -ttl;
			EXPECT_EQ(cur, nodes[std::size_t(((3 + step) % n + n) % n)]) << "ttl " << ttl;
		}
	}
}
