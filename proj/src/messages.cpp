#include "symphony/messages.hpp"

namespace symphony::overlay {

namespace {

class writer
{
public:
	void u8(std::uint8_t v) { m_out.push_back(v); }
	void u16(std::uint16_t v)
	{
		m_out.push_back(std::uint8_t(v >> 8));
		m_out.push_back(std::uint8_t(v));
	}
	void u32(std::uint32_t v)
	{
		u16(std::uint16_t(v >> 16));
		u16(std::uint16_t(v));
	}
	void addr(address const& a)
	{
		auto const b = a.value().to_bytes();
		m_out.insert(m_out.end(), b.begin(), b.end());
	}
	void str(std::string const& s)
	{
		if (s.size() > 0xffff) throw message_error("string field too long");
		u16(std::uint16_t(s.size()));
		m_out.insert(m_out.end(), s.begin(), s.end());
	}
	void ta(transport_address const& t) { str(t.to_string()); }
	void tas(std::vector<transport_address> const& list)
	{
		if (list.size() > 0xff) throw message_error("too many transport addresses");
		u8(std::uint8_t(list.size()));
		for (auto const& t : list) ta(t);
	}
	void opt_ta(std::optional<transport_address> const& t)
	{
		u8(t ? 1 : 0);
		if (t) ta(*t);
	}

	std::vector<std::uint8_t> take() { return std::move(m_out); }

private:
	std::vector<std::uint8_t> m_out;
};

class reader
{
public:
	explicit reader(std::span<std::uint8_t const> in) : m_in(in) {}

	std::uint8_t u8()
	{
		need(1);
		return m_in[m_pos++];
	}
	std::uint16_t u16()
	{
		need(2);
		auto const v = std::uint16_t(m_in[m_pos] << 8 | m_in[m_pos + 1]);
		m_pos += 2;
		return v;
	}
	std::uint32_t u32()
	{
		std::uint32_t const hi = u16();
		return hi << 16 | u16();
	}
	address addr()
	{
		need(20);
		auto const a = address(uint160::from_bytes(m_in.subspan(m_pos, 20)));
		m_pos += 20;
		return a;
	}
	std::string str()
	{
		std::size_t const len = u16();
		need(len);
		std::string s(m_in.begin() + std::ptrdiff_t(m_pos), m_in.begin() + std::ptrdiff_t(m_pos + len));
		m_pos += len;
		return s;
	}
	transport_address ta()
	{
		try
		{
			return transport::parse_ta(str());
		}
		catch (transport::malformed_transport_address const& e)
		{
			throw message_error(std::string("bad transport address: ") + e.what());
		}
	}
	std::vector<transport_address> tas()
	{
		std::size_t const n = u8();
		std::vector<transport_address> out;
		out.reserve(n);
		for (std::size_t i = 0; i < n; ++i) out.push_back(ta());
		return out;
	}
	std::optional<transport_address> opt_ta()
	{
		std::uint8_t const present = u8();
		if (present > 1) throw message_error("bad optional flag");
		if (!present) return std::nullopt;
		return ta();
	}
	void finish() const
	{
		if (m_pos != m_in.size()) throw message_error("trailing bytes in message body");
	}

private:
	void need(std::size_t n) const
	{
		if (m_in.size() - m_pos < n) throw message_error("truncated message body");
	}

	std::span<std::uint8_t const> m_in;
	std::size_t m_pos = 0;
};

} // namespace

std::vector<std::uint8_t> encode(link_message const& m)
{
	writer w;
	w.u8(std::uint8_t(m.what));
	w.addr(m.sender);
	w.str(m.connection_type);
	w.u32(m.token);
	w.tas(m.sender_tas);
	w.opt_ta(m.observed_remote);
	w.opt_ta(m.observed_local);
	return w.take();
}

std::vector<std::uint8_t> encode(status_message const& m)
{
	writer w;
	w.u8(std::uint8_t(m.what));
	w.addr(m.sender);
	if (m.neighbors.size() > 0xff) throw message_error("too many neighbors");
	w.u8(std::uint8_t(m.neighbors.size()));
	for (auto const& n : m.neighbors)
	{
		w.addr(n.addr);
		w.tas(n.tas);
	}
	return w.take();
}

std::vector<std::uint8_t> encode(connection_request const& m)
{
	writer w;
	w.u8(std::uint8_t(m.what));
	w.u8(std::uint8_t(m.mode));
	w.u8(m.flags);
	w.u32(m.id);
	w.str(m.connection_type);
	w.addr(m.subject);
	w.tas(m.subject_tas);
	return w.take();
}

link_message decode_link(std::span<std::uint8_t const> body)
{
	reader r(body);
	link_message m;
	std::uint8_t const k = r.u8();
	if (k < 1 || k > 6) throw message_error("unknown link message kind");
	m.what = link_message::kind(k);
	m.sender = r.addr();
	m.connection_type = r.str();
	m.token = r.u32();
	m.sender_tas = r.tas();
	m.observed_remote = r.opt_ta();
	m.observed_local = r.opt_ta();
	r.finish();
	return m;
}

status_message decode_status(std::span<std::uint8_t const> body)
{
	reader r(body);
	status_message m;
	std::uint8_t const k = r.u8();
	if (k < 1 || k > 2) throw message_error("unknown status message kind");
	m.what = status_message::kind(k);
	m.sender = r.addr();
	std::size_t const n = r.u8();
	m.neighbors.reserve(n);
	for (std::size_t i = 0; i < n; ++i)
	{
		peer_info p;
		p.addr = r.addr();
		p.tas = r.tas();
		m.neighbors.push_back(std::move(p));
	}
	r.finish();
	return m;
}

connection_request decode_connection_request(std::span<std::uint8_t const> body)
{
	reader r(body);
	connection_request m;
	std::uint8_t const k = r.u8();
	if (k < 1 || k > 2) throw message_error("unknown connection request kind");
	m.what = connection_request::kind(k);
	std::uint8_t const mode = r.u8();
	if (mode > 2) throw message_error("unknown routing mode");
	m.mode = routing::mode(mode);
	m.flags = r.u8();
	m.id = r.u32();
	m.connection_type = r.str();
	m.subject = r.addr();
	m.subject_tas = r.tas();
	r.finish();
	return m;
}

} // namespace symphony::overlay
