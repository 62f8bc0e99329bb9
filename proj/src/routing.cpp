#include "symphony/routing.hpp"

namespace symphony::routing {

namespace {

struct candidate
{
	address node;
	ring_distance dist;
	bool is_self = false;
};

// strict weak order: distance, then self before neighbors, then smaller address
bool closer(candidate const& a, candidate const& b)
{
	if (a.dist != b.dist) return a.dist < b.dist;
	if (a.is_self != b.is_self) return a.is_self;
	return a.node < b.node;
}

struct ranking
{
	candidate best;
	std::optional<candidate> second;
};

ranking rank(address const& self, adjacency_view adj, address const& target)
{
	ranking r{{self, distance(self, target), true}, std::nullopt};
	for (auto const& u : adj)
	{
		candidate const c{u, distance(u, target), false};
		if (closer(c, r.best))
		{
			r.second = r.best;
			r.best = c;
		}
		else if (!r.second || closer(c, *r.second))
		{
			r.second = c;
		}
	}
	return r;
}

bool is_prev(address const& a, std::optional<address> const& prev)
{
	return prev && *prev == a;
}

} // namespace

char const* to_string(mode m)
{
	switch (m)
	{
		case mode::greedy: return "greedy";
		case mode::exact: return "exact";
		case mode::annealing: return "annealing";
	}
	return "unknown";
}

char const* to_string(decision::kind k)
{
	switch (k)
	{
		case decision::kind::forward: return "forward";
		case decision::kind::deliver_local: return "deliver_local";
		case decision::kind::deliver_local_and_forward: return "deliver_local_and_forward";
		case decision::kind::drop: return "drop";
	}
	return "unknown";
}

decision greedy_next_hop(address const& self, adjacency_view adj
	, std::optional<address> const& prev, address const& target)
{
	ranking const r = rank(self, adj, target);
	if (!r.best.is_self && !is_prev(r.best.node, prev)) return decision::forward(r.best.node);
	return decision::deliver_local();
}

decision exact_next_hop(address const& self, adjacency_view adj
	, std::optional<address> const& prev, address const& target)
{
	if (self == target) return decision::deliver_local();
	ranking const r = rank(self, adj, target);
	if (!r.best.is_self && !is_prev(r.best.node, prev)) return decision::forward(r.best.node);
	return decision::drop();
}

decision annealing_next_hop(address const& self, adjacency_view adj
	, std::optional<address> const& prev, address const& target)
{
	ranking const r = rank(self, adj, target);
	if (!r.best.is_self && !is_prev(r.best.node, prev)) return decision::forward(r.best.node);
	if (r.second && !r.second->is_self && !is_prev(r.second->node, prev))
		return decision::deliver_and_forward(r.second->node);
	return decision::deliver_local();
}

decision next_hop(mode m, address const& self, adjacency_view adj
	, std::optional<address> const& prev, address const& target)
{
	switch (m)
	{
		case mode::greedy: return greedy_next_hop(self, adj, prev, target);
		case mode::exact: return exact_next_hop(self, adj, prev, target);
		case mode::annealing: return annealing_next_hop(self, adj, prev, target);
	}
	return decision::drop();
}

decision directional_next_hop(address const& self, adjacency_view adj
	, direction dir, std::uint16_t hops, std::uint16_t ttl)
{
	if (hops >= ttl) return decision::deliver_local();
	std::optional<address> best;
	ring_distance best_dist{};
	for (auto const& u : adj)
	{
		ring_distance const d = directed_distance(self, u, dir);
		if (!best || d < best_dist || (d == best_dist && u < *best))
		{
			best = u;
			best_dist = d;
		}
	}
	if (!best) return decision::drop();
	return decision::forward(*best);
}

} // namespace symphony::routing
