#ifndef SYMPHONY_TOPOLOGY_HPP
#define SYMPHONY_TOPOLOGY_HPP

#include <vector>

#include "symphony/metrics.hpp"
#include "symphony/node.hpp"

namespace symphony::overlay {

// Graph of the nodes holding at least one structured connection. An edge
// appears only when both endpoints hold the connection; it is near when
// either side counts the other as near, and there is one shortcut edge per
// shortcut the owner drew.
metrics::snapshot topology_snapshot(double time, std::vector<node const*> const& nodes);

} // namespace symphony::overlay

#endif
