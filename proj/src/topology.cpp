#include "symphony/topology.hpp"

#include <algorithm>
#include <map>

namespace symphony::overlay {

metrics::snapshot topology_snapshot(double time, std::vector<node const*> const& nodes)
{
	metrics::snapshot s;
	s.time = time;
	std::map<address, node const*> placed;
	for (auto const* n : nodes)
		if (!n->structured_peers().empty()) placed.emplace(n->self(), n);

	for (auto const& [a, n] : placed)
	{
		s.nodes.push_back(a);
		for (auto const& [peer, c] : n->connections())
		{
			auto const other = placed.find(peer);
			if (other == placed.end()) continue;
			auto const back = other->second->connections().find(a);
			if (back == other->second->connections().end()) continue;
			if (a < peer && (c.near || back->second.near)) s.edges.push_back({a, peer, metrics::label_near});
			for (int i = 0; i < c.shortcut_out; ++i) s.edges.push_back({a, peer, metrics::label_shortcut});
		}
	}
	std::sort(s.edges.begin(), s.edges.end());
	return s;
}

} // namespace symphony::overlay
