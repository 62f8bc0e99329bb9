#include "symphony/shortcut.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace symphony::overlay {

namespace {

// floor(2^160 / n) for n >= 2
uint160 ring_size_over(std::uint32_t n)
{
	uint160::bytes_type bytes{};
	std::uint64_t rem = 1;
	for (auto& b : bytes)
	{
		std::uint64_t const cur = rem << 8;
		b = std::uint8_t(cur / n);
		rem = cur % n;
	}
	return uint160::from_bytes(bytes);
}

} // namespace

long double shortcut_log2_distance_at(ring_distance d_ave, long double x)
{
	long double const lo = d_ave.value.log2();
	return lo + x * (log2_max_distance - lo);
}

ring_distance shortcut_distance_at(ring_distance d_ave, long double x)
{
	if (x <= 0) return d_ave;
	return {uint160::from_log2(shortcut_log2_distance_at(d_ave, x))};
}

ring_distance sample_shortcut_distance(ring_distance d_ave, std::mt19937_64& rng)
{
	if (d_ave.value.is_zero()) throw std::invalid_argument("d_ave must be at least 1");
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	return shortcut_distance_at(d_ave, unit(rng));
}

long double shortcut_cdf(long double log2_length, long double log2_d_ave)
{
	long double const f = (log2_length - log2_d_ave) / (log2_max_distance - log2_d_ave);
	return std::clamp(f, 0.0L, 1.0L);
}

ring_distance estimate_d_ave(address const& self, std::span<address const> near_peers
	, std::size_t near_per_side)
{
	if (near_peers.empty()) throw not_ready("no near neighbors to estimate density from");

	std::vector<address> peers(near_peers.begin(), near_peers.end());
	std::sort(peers.begin(), peers.end());
	peers.erase(std::unique(peers.begin(), peers.end()), peers.end());

	if (peers.size() < 2 * near_per_side)
	{
		// the ring holds just us and these peers
		return {ring_size_over(std::uint32_t(peers.size() + 1))};
	}

	auto kth = [&](direction dir) {
		std::vector<uint160> d;
		d.reserve(peers.size());
		for (auto const& p : peers) d.push_back(directed_distance(self, p, dir).value);
		std::nth_element(d.begin(), d.begin() + std::ptrdiff_t(near_per_side - 1), d.end());
		return d[near_per_side - 1];
	};
	uint160 const span = kth(direction::clockwise) + kth(direction::counter_clockwise);
	return {span.divided_by(std::uint32_t(2 * near_per_side))};
}

std::size_t default_shortcut_count(ring_distance d_ave, std::size_t cap)
{
	if (d_ave.value.is_zero()) return cap;
	// ceil(log2(2^160 / d)) is 160 minus the index of the top set bit of d
	int top = 159;
	while (!d_ave.value.bit(top)) --top;
	auto const k = std::size_t(160 - top);
	return std::min(std::max<std::size_t>(k, 1), std::max<std::size_t>(cap, 1));
}

} // namespace symphony::overlay
