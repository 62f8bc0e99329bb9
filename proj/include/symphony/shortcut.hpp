#ifndef SYMPHONY_SHORTCUT_HPP
#define SYMPHONY_SHORTCUT_HPP

#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>

#include "symphony/address.hpp"

namespace symphony::overlay {

class not_ready : public std::logic_error
{
public:
	using std::logic_error::logic_error;
};

inline constexpr long double log2_max_distance = 160.0L;

// d = d_ave * (d_max / d_ave)^x with d_max = 2^160, computed in the log
// domain. x = 0 yields d_ave exactly; results at or beyond 2^160 saturate at
// 2^160 - 1, the largest representable distance.
ring_distance shortcut_distance_at(ring_distance d_ave, long double x);
long double shortcut_log2_distance_at(ring_distance d_ave, long double x);

// density proportional to 1/d over [d_ave, 2^160]
ring_distance sample_shortcut_distance(ring_distance d_ave, std::mt19937_64& rng);

// Prob(d <= L) = log(L / d_ave) / log(d_max / d_ave), clamped to [0, 1]
long double shortcut_cdf(long double log2_length, long double log2_d_ave);

// Mean gap between consecutive addresses, estimated from a node's own address
// and its near neighbors. near_per_side is the number of neighbors a node
// keeps in each direction; with fewer than 2 * near_per_side distinct
// neighbors the whole population is assumed known. Throws not_ready when
// there are no neighbors.
ring_distance estimate_d_ave(address const& self, std::span<address const> near_peers
	, std::size_t near_per_side);

// ceil(log2(2^160 / d_ave)) clamped to [1, cap]
std::size_t default_shortcut_count(ring_distance d_ave, std::size_t cap);

} // namespace symphony::overlay

#endif
