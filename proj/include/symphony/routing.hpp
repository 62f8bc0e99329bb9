#ifndef SYMPHONY_ROUTING_HPP
#define SYMPHONY_ROUTING_HPP

#include <cstdint>
#include <optional>
#include <span>

#include "symphony/address.hpp"

namespace symphony::routing {

enum class mode : std::uint8_t
{
	greedy = 0,
	exact = 1,
	annealing = 2,
};

char const* to_string(mode m);

struct decision
{
	enum class kind : std::uint8_t { forward, deliver_local, deliver_local_and_forward, drop };

	kind what = kind::drop;
	// set for forward and deliver_local_and_forward
	std::optional<address> next;

	static decision forward(address n) { return {kind::forward, n}; }
	static decision deliver_local() { return {kind::deliver_local, std::nullopt}; }
	static decision deliver_and_forward(address n) { return {kind::deliver_local_and_forward, n}; }
	static decision drop() { return {kind::drop, std::nullopt}; }

	bool delivers_locally() const
	{
		return what == kind::deliver_local || what == kind::deliver_local_and_forward;
	}

	friend bool operator==(decision const&, decision const&) = default;
};

char const* to_string(decision::kind k);

// The structured neighbors of the deciding node. Must not contain the
// deciding node itself; order does not matter.
using adjacency_view = std::span<address const>;

// prev is the overlay hop the packet arrived from (nullopt at the origin).
//
// All three destination modes pick the argmin of ring distance to the target
// over adj + {self}. Ties favour self, then the numerically smaller neighbor.
decision greedy_next_hop(address const& self, adjacency_view adj
	, std::optional<address> const& prev, address const& target);

decision exact_next_hop(address const& self, adjacency_view adj
	, std::optional<address> const& prev, address const& target);

decision annealing_next_hop(address const& self, adjacency_view adj
	, std::optional<address> const& prev, address const& target);

decision next_hop(mode m, address const& self, adjacency_view adj
	, std::optional<address> const& prev, address const& target);

// Hop limited routing along the ring: delivered where hops reaches ttl,
// otherwise forwarded to the nearest neighbor in the given direction.
decision directional_next_hop(address const& self, adjacency_view adj
	, direction dir, std::uint16_t hops, std::uint16_t ttl);

} // namespace symphony::routing

#endif
