#ifndef SYMPHONY_REPLAY_HPP
#define SYMPHONY_REPLAY_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "symphony/node.hpp"
#include "symphony/simnet.hpp"
#include "symphony/transport_address.hpp"

namespace symphony::transport {

struct replay_result
{
	std::vector<overlay::protocol_event> events;
	std::size_t packets = 0;
	// deliveries whose bytes or sender differ from the recording
	std::size_t mismatched = 0;
	// recorded deliveries with nothing waiting on the wire
	std::size_t missing = 0;
};

// Feeds recorded simulator inputs to fresh nodes in lockstep on a virtual
// clock. Everything the nodes send crosses real sockets on the loopback
// interface, and each recorded delivery hands over the next packet that
// actually arrived for that host. Throws transport_error when the wire stalls
// for receive_timeout seconds.
replay_result replay(std::vector<simnet::tap_record> const& records, overlay::node_config const& cfg
	, protocol wire, std::string const& host = "127.0.0.1", double receive_timeout = 2.0);

} // namespace symphony::transport

#endif
