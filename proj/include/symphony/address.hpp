#ifndef SYMPHONY_ADDRESS_HPP
#define SYMPHONY_ADDRESS_HPP

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace symphony {

// Unsigned 160-bit integer with wrap-around (mod 2^160) arithmetic.
// Stored as five 32-bit words, most significant first.
class uint160
{
public:
	static constexpr std::size_t num_bytes = 20;
	static constexpr std::size_t num_words = 5;
	using bytes_type = std::array<std::uint8_t, num_bytes>;

	constexpr uint160() = default;
	constexpr explicit uint160(std::uint64_t low)
		: m_words{0, 0, 0, std::uint32_t(low >> 32), std::uint32_t(low)} {}

	static uint160 max();
	// 2^bit, for bit in [0, 159]
	static uint160 pow2(int bit);
	static uint160 from_bytes(std::span<std::uint8_t const> bytes);
	// exactly 40 hex digits, either case
	static uint160 from_hex(std::string_view hex);

	bytes_type to_bytes() const;
	std::string to_hex() const;

	bool bit(int index) const;
	void set_bit(int index, bool value);
	// number of consecutive one bits starting at the least significant end
	int trailing_ones() const;
	bool is_zero() const;

	// approximate value as a floating point number
	long double to_long_double() const;
	// log2 of the value, -inf for zero
	long double log2() const;
	// round(2^exponent), saturating at max() when exponent >= 160
	static uint160 from_log2(long double exponent);

	uint160 operator+(uint160 const& rhs) const;
	uint160 operator-(uint160 const& rhs) const;
	uint160& operator+=(uint160 const& rhs) { return *this = *this + rhs; }
	uint160& operator-=(uint160 const& rhs) { return *this = *this - rhs; }
	uint160 operator<<(int shift) const;
	uint160 operator>>(int shift) const;
	uint160 divided_by(std::uint32_t divisor) const;

	friend bool operator==(uint160 const&, uint160 const&) = default;
	friend std::strong_ordering operator<=>(uint160 const&, uint160 const&) = default;

	std::array<std::uint32_t, num_words> const& words() const { return m_words; }

private:
	std::array<std::uint32_t, num_words> m_words{};
};

enum class direction : std::uint8_t { clockwise, counter_clockwise };

inline direction opposite(direction d)
{
	return d == direction::clockwise ? direction::counter_clockwise : direction::clockwise;
}

char const* to_string(direction d);

// Distance along the ring modulo 2^160.
struct ring_distance
{
	uint160 value;

	friend bool operator==(ring_distance const&, ring_distance const&) = default;
	friend std::strong_ordering operator<=>(ring_distance const&, ring_distance const&) = default;
};

// A node address or routing directive on the 160-bit ring.
class address
{
public:
	static constexpr int num_classes = 161;
	static constexpr int ring_class = 0;
	static constexpr int directional_class = 124;

	constexpr address() = default;
	constexpr explicit address(uint160 v) : m_value(v) {}

	static address from_hex(std::string_view hex) { return address(uint160::from_hex(hex)); }

	uint160 const& value() const { return m_value; }
	std::string to_hex() const { return m_value.to_hex(); }

	friend bool operator==(address const&, address const&) = default;
	friend std::strong_ordering operator<=>(address const&, address const&) = default;

private:
	uint160 m_value;
};

std::ostream& operator<<(std::ostream& os, uint160 const& v);
std::ostream& operator<<(std::ostream& os, address const& a);
std::ostream& operator<<(std::ostream& os, ring_distance const& d);

// count of trailing one bits, 160 only for the all-ones address
int class_of(address const& a);

// min((a - b) mod 2^160, (b - a) mod 2^160)
ring_distance distance(address const& a, address const& b);

// (b - a) mod 2^160 walking clockwise, (a - b) mod 2^160 walking counter clockwise
ring_distance directed_distance(address const& a, address const& b, direction dir);

// the direction in which b is reached from a in at most half a turn.
// The antipode counts as clockwise.
direction side_of(address const& self, address const& other);

// uniform over the 2^159 even (class 0) addresses
address random_class0(std::mt19937_64& rng);

// Fixed class-124 routing directives. The 35 free high bits are all zero for
// clockwise; counter clockwise additionally sets the lowest free bit.
address directional_address(direction dir);
bool is_directional(address const& a);
direction direction_of(address const& directional);

} // namespace symphony

template <>
struct std::hash<symphony::address>
{
	std::size_t operator()(symphony::address const& a) const noexcept
	{
		auto const& w = a.value().words();
		std::size_t h = 0;
		for (auto x : w) h = h * 1000003u ^ x;
		return h;
	}
};

#endif
