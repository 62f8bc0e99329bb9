#include "symphony/address.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace symphony {

namespace {

int hex_value(char c)
{
	if (c >= '0' && c <= '9') return c - '0';
	if (c >= 'a' && c <= 'f') return c - 'a' + 10;
	if (c >= 'A' && c <= 'F') return c - 'A' + 10;
	return -1;
}

} // namespace

uint160 uint160::max()
{
	uint160 r;
	r.m_words.fill(0xffffffffu);
	return r;
}

uint160 uint160::pow2(int bit)
{
	if (bit < 0 || bit >= 160) throw std::out_of_range("uint160::pow2: bit out of range");
	uint160 r;
	r.set_bit(bit, true);
	return r;
}

uint160 uint160::from_bytes(std::span<std::uint8_t const> bytes)
{
	if (bytes.size() != num_bytes) throw std::invalid_argument("uint160: expected 20 bytes");
	uint160 r;
	for (std::size_t i = 0; i < num_words; ++i)
	{
		r.m_words[i] = std::uint32_t(bytes[i * 4]) << 24 | std::uint32_t(bytes[i * 4 + 1]) << 16
			| std::uint32_t(bytes[i * 4 + 2]) << 8 | std::uint32_t(bytes[i * 4 + 3]);
	}
	return r;
}

uint160 uint160::from_hex(std::string_view hex)
{
	if (hex.size() != num_bytes * 2) throw std::invalid_argument("uint160: expected 40 hex digits");
	uint160 r;
	for (std::size_t i = 0; i < hex.size(); ++i)
	{
		int const v = hex_value(hex[i]);
		if (v < 0) throw std::invalid_argument("uint160: invalid hex digit");
		r.m_words[i / 8] |= std::uint32_t(v) << (28 - 4 * (i % 8));
	}
	return r;
}

uint160::bytes_type uint160::to_bytes() const
{
	bytes_type out{};
	for (std::size_t i = 0; i < num_words; ++i)
	{
		out[i * 4] = std::uint8_t(m_words[i] >> 24);
		out[i * 4 + 1] = std::uint8_t(m_words[i] >> 16);
		out[i * 4 + 2] = std::uint8_t(m_words[i] >> 8);
		out[i * 4 + 3] = std::uint8_t(m_words[i]);
	}
	return out;
}

std::string uint160::to_hex() const
{
	static char const digits[] = "0123456789abcdef";
	std::string out;
	out.reserve(40);
	for (auto w : m_words)
		for (int s = 28; s >= 0; s -= 4) out.push_back(digits[(w >> s) & 0xf]);
	return out;
}

bool uint160::bit(int index) const
{
	return (m_words[num_words - 1 - index / 32] >> (index % 32)) & 1u;
}

void uint160::set_bit(int index, bool value)
{
	auto& w = m_words[num_words - 1 - index / 32];
	std::uint32_t const mask = 1u << (index % 32);
	if (value) w |= mask;
	else w &= ~mask;
}

int uint160::trailing_ones() const
{
	int n = 0;
	for (int i = int(num_words) - 1; i >= 0; --i)
	{
		std::uint32_t const w = m_words[i];
		if (w == 0xffffffffu)
		{
			n += 32;
			continue;
		}
		return n + std::countr_one(w);
	}
	return n;
}

bool uint160::is_zero() const
{
	for (auto w : m_words)
		if (w != 0) return false;
	return true;
}

long double uint160::to_long_double() const
{
	long double r = 0;
	for (auto w : m_words) r = r * 4294967296.0L + w;
	return r;
}

long double uint160::log2() const
{
	return std::log2(to_long_double());
}

uint160 uint160::from_log2(long double exponent)
{
	if (exponent >= 160) return max();
	if (exponent < 0) return exponent < -1 ? uint160{} : uint160(1);
	long double const whole = std::floor(exponent);
	int const shift = int(whole);
	// 2^frac in [1, 2) scaled to a 64 bit mantissa
	long double const frac = std::exp2(exponent - whole);
	if (shift >= 63)
	{
		auto const mantissa = std::uint64_t(std::ldexp(frac, 63));
		return uint160(mantissa) << (shift - 63);
	}
	return uint160(std::uint64_t(std::llround(std::ldexp(frac, shift))));
}

uint160 uint160::operator+(uint160 const& rhs) const
{
	uint160 r;
	std::uint64_t carry = 0;
	for (int i = int(num_words) - 1; i >= 0; --i)
	{
		std::uint64_t const s = std::uint64_t(m_words[i]) + rhs.m_words[i] + carry;
		r.m_words[i] = std::uint32_t(s);
		carry = s >> 32;
	}
	return r;
}

uint160 uint160::operator-(uint160 const& rhs) const
{
	uint160 r;
	std::int64_t borrow = 0;
	for (int i = int(num_words) - 1; i >= 0; --i)
	{
		std::int64_t d = std::int64_t(m_words[i]) - rhs.m_words[i] - borrow;
		borrow = d < 0 ? 1 : 0;
		if (d < 0) d += std::int64_t(1) << 32;
		r.m_words[i] = std::uint32_t(d);
	}
	return r;
}

uint160 uint160::operator<<(int shift) const
{
	if (shift <= 0) return shift == 0 ? *this : *this >> -shift;
	if (shift >= 160) return {};
	uint160 r;
	int const word_shift = shift / 32;
	int const bit_shift = shift % 32;
	for (int i = 0; i < int(num_words); ++i)
	{
		int const src = i + word_shift;
		if (src >= int(num_words)) break;
		std::uint64_t v = std::uint64_t(m_words[src]) << bit_shift;
		if (bit_shift != 0 && src + 1 < int(num_words)) v |= m_words[src + 1] >> (32 - bit_shift);
		r.m_words[i] = std::uint32_t(v);
	}
	return r;
}

uint160 uint160::operator>>(int shift) const
{
	if (shift <= 0) return shift == 0 ? *this : *this << -shift;
	if (shift >= 160) return {};
	uint160 r;
	int const word_shift = shift / 32;
	int const bit_shift = shift % 32;
	for (int i = int(num_words) - 1; i >= 0; --i)
	{
		int const src = i - word_shift;
		if (src < 0) break;
		std::uint64_t v = m_words[src] >> bit_shift;
		if (bit_shift != 0 && src - 1 >= 0) v |= std::uint64_t(m_words[src - 1]) << (32 - bit_shift);
		r.m_words[i] = std::uint32_t(v);
	}
	return r;
}

uint160 uint160::divided_by(std::uint32_t divisor) const
{
	if (divisor == 0) throw std::domain_error("uint160: division by zero");
	uint160 r;
	std::uint64_t rem = 0;
	for (std::size_t i = 0; i < num_words; ++i)
	{
		std::uint64_t const cur = rem << 32 | m_words[i];
		r.m_words[i] = std::uint32_t(cur / divisor);
		rem = cur % divisor;
	}
	return r;
}

char const* to_string(direction d)
{
	return d == direction::clockwise ? "clockwise" : "counter_clockwise";
}

std::ostream& operator<<(std::ostream& os, uint160 const& v) { return os << v.to_hex(); }
std::ostream& operator<<(std::ostream& os, address const& a) { return os << a.to_hex(); }
std::ostream& operator<<(std::ostream& os, ring_distance const& d) { return os << d.value.to_hex(); }

int class_of(address const& a)
{
	return a.value().trailing_ones();
}

ring_distance distance(address const& a, address const& b)
{
	uint160 const ab = a.value() - b.value();
	uint160 const ba = b.value() - a.value();
	return {std::min(ab, ba)};
}

ring_distance directed_distance(address const& a, address const& b, direction dir)
{
	if (dir == direction::clockwise) return {b.value() - a.value()};
	return {a.value() - b.value()};
}

direction side_of(address const& self, address const& other)
{
	static uint160 const half = uint160::pow2(159);
	return directed_distance(self, other, direction::clockwise).value <= half
		? direction::clockwise : direction::counter_clockwise;
}

address random_class0(std::mt19937_64& rng)
{
	uint160::bytes_type bytes{};
	for (std::size_t i = 0; i < bytes.size(); i += 4)
	{
		auto const r = std::uint32_t(rng());
		bytes[i] = std::uint8_t(r >> 24);
		bytes[i + 1] = std::uint8_t(r >> 16);
		bytes[i + 2] = std::uint8_t(r >> 8);
		bytes[i + 3] = std::uint8_t(r);
	}
	bytes.back() &= 0xfe;
	return address(uint160::from_bytes(bytes));
}

address directional_address(direction dir)
{
	// bits 0..123 set, bit 124 clear, bits 125..159 free
	uint160 v = (uint160::max() >> (160 - address::directional_class));
	if (dir == direction::counter_clockwise) v.set_bit(address::directional_class + 1, true);
	return address(v);
}

bool is_directional(address const& a)
{
	return class_of(a) == address::directional_class;
}

direction direction_of(address const& directional)
{
	return directional == directional_address(direction::counter_clockwise)
		? direction::counter_clockwise : direction::clockwise;
}

} // namespace symphony
