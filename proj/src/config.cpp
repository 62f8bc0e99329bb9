#include "symphony/config.hpp"

#include <charconv>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>

namespace symphony::config {

namespace {

std::string trim(std::string const& s)
{
	auto const b = s.find_first_not_of(" \t\r");
	if (b == std::string::npos) return {};
	auto const e = s.find_last_not_of(" \t\r");
	return s.substr(b, e - b + 1);
}

std::string strip_comment(std::string const& s)
{
	for (std::size_t i = 0; i < s.size(); ++i)
		if (s[i] == '#' && (i == 0 || s[i - 1] == ' ' || s[i - 1] == '\t')) return s.substr(0, i);
	return s;
}

double to_double(entry const& e)
{
	double v = 0;
	auto const* end = e.value.data() + e.value.size();
	auto const [p, ec] = std::from_chars(e.value.data(), end, v);
	if (ec != std::errc() || p != end) throw config_error(e.line, e.key + ": not a number: " + e.value);
	return v;
}

std::uint64_t to_unsigned(entry const& e)
{
	std::uint64_t v = 0;
	auto const* end = e.value.data() + e.value.size();
	auto const [p, ec] = std::from_chars(e.value.data(), end, v);
	if (ec != std::errc() || p != end) throw config_error(e.line, e.key + ": not a whole number: " + e.value);
	return v;
}

bool to_bool(entry const& e)
{
	if (e.value == "true" || e.value == "yes" || e.value == "1") return true;
	if (e.value == "false" || e.value == "no" || e.value == "0") return false;
	throw config_error(e.line, e.key + ": expected true or false: " + e.value);
}

std::vector<std::string> words(std::string const& s)
{
	std::string flat = s;
	for (auto& c : flat)
		if (c == ',') c = ' ';
	std::istringstream in(flat);
	std::vector<std::string> out;
	for (std::string w; in >> w;) out.push_back(w);
	return out;
}

using setter = std::function<void(entry const&)>;

void apply(section const& s, std::map<std::string, setter> const& keys)
{
	for (auto const& e : s.entries)
	{
		auto const it = keys.find(e.key);
		if (it == keys.end()) throw config_error(e.line, "unknown key '" + e.key + "' in [" + s.name + "]");
		it->second(e);
	}
}

simnet::latency_model parse_latency(entry const& e)
{
	auto const w = words(e.value);
	auto number = [&](std::string const& x) { return to_double(entry{e.key, x, e.line}); };
	if (w.size() == 2 && w[0] == "constant") return simnet::constant_latency{number(w[1])};
	if (w.size() == 3 && w[0] == "uniform") return simnet::uniform_latency{number(w[1]), number(w[2])};
	throw config_error(e.line, "latency: expected 'constant <ms>' or 'uniform <min ms> <max ms>'");
}

simnet::phase parse_phase(section const& s)
{
	std::map<std::string, entry> given;
	for (auto const& e : s.entries) given[e.key] = e;
	auto const kind = given.find("kind");
	if (kind == given.end()) throw config_error(s.line, "[phase] needs a kind");
	std::string const k = kind->second.value;

	static std::map<std::string, std::set<std::string>> const allowed{
		{"bootstrap", {"count"}},
		{"wait", {"duration"}},
		{"massive_join", {"count"}},
		{"massive_fail", {"count", "fraction"}},
		{"churn", {"duration", "probability", "mean_session"}},
		{"merge", {"count", "count_b", "duration"}},
	};
	auto const spec = allowed.find(k);
	if (spec == allowed.end()) throw config_error(kind->second.line, "unknown phase kind '" + k + "'");
	for (auto const& e : s.entries)
	{
		if (e.key == "kind") continue;
		if (!spec->second.count(e.key)) throw config_error(e.line, "key '" + e.key + "' does not apply to a " + k + " phase");
	}
	auto count = [&](char const* key) -> std::size_t {
		auto const it = given.find(key);
		if (it == given.end()) throw config_error(s.line, k + " phase needs " + key);
		return to_unsigned(it->second);
	};
	auto number = [&](char const* key) -> std::optional<double> {
		auto const it = given.find(key);
		if (it == given.end()) return std::nullopt;
		return to_double(it->second);
	};

	if (k == "bootstrap") return simnet::phase::bootstrap(count("count"));
	if (k == "massive_join") return simnet::phase::massive_join(count("count"));
	if (k == "wait")
	{
		auto const d = number("duration");
		if (!d) throw config_error(s.line, "wait phase needs duration");
		return simnet::phase::wait(*d);
	}
	if (k == "massive_fail")
	{
		if (given.count("count") && given.count("fraction"))
			throw config_error(s.line, "massive_fail takes count or fraction, not both");
		if (given.count("count")) return simnet::phase::massive_fail_count(count("count"));
		auto const f = number("fraction");
		if (!f) throw config_error(s.line, "massive_fail phase needs count or fraction");
		return simnet::phase::massive_fail_fraction(*f);
	}
	if (k == "churn")
	{
		auto const d = number("duration");
		if (!d) throw config_error(s.line, "churn phase needs duration");
		auto p = number("probability");
		auto const mean = number("mean_session");
		if (p && mean) throw config_error(s.line, "churn takes probability or mean_session, not both");
		if (mean)
		{
			if (!(*mean > 1)) throw config_error(given["mean_session"].line, "mean_session must exceed 1 second");
			p = 1.0 / *mean;
		}
		if (!p) throw config_error(s.line, "churn phase needs probability or mean_session");
		return simnet::phase::churn(*d, *p);
	}
	auto const limit = number("duration");
	return simnet::phase::merge(count("count"), count("count_b"), limit.value_or(900));
}

} // namespace

config_error::config_error(std::size_t line, std::string const& what)
	: std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what)
	, m_line(line)
{
}

std::vector<section> parse_sections(std::istream& in)
{
	std::vector<section> out;
	std::string raw;
	std::size_t n = 0;
	while (std::getline(in, raw))
	{
		++n;
		std::string const line = trim(strip_comment(raw));
		if (line.empty()) continue;
		if (line.front() == '[')
		{
			if (line.back() != ']') throw config_error(n, "unterminated section header");
			std::string const name = trim(line.substr(1, line.size() - 2));
			if (name.empty()) throw config_error(n, "empty section name");
			out.push_back(section{name, n, {}});
			continue;
		}
		auto const eq = line.find('=');
		if (eq == std::string::npos) throw config_error(n, "expected 'key = value'");
		if (out.empty()) throw config_error(n, "setting outside of any section");
		entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), n};
		if (e.key.empty()) throw config_error(n, "missing key");
		for (auto const& other : out.back().entries)
			if (other.key == e.key) throw config_error(n, "duplicate key '" + e.key + "'");
		out.back().entries.push_back(std::move(e));
	}
	return out;
}

scenario_file load_scenario(std::istream& in)
{
	scenario_file f;
	auto& sc = f.scenario;
	auto& net = f.network;
	auto& nd = f.node;
	std::map<std::string, setter> const scenario_keys{
		{"measurement_interval", [&](entry const& e) { sc.measurement_interval = to_double(e); }},
		{"bootstrap_spacing", [&](entry const& e) { sc.bootstrap_spacing = to_double(e); }},
		{"pair_budget", [&](entry const& e) { sc.pair_budget = to_unsigned(e); }},
		{"keep_snapshots", [&](entry const& e) { sc.keep_snapshots = to_bool(e); }},
	};
	std::map<std::string, setter> const network_keys{
		{"latency", [&](entry const& e) { net.latency = parse_latency(e); }},
		{"loss_rate", [&](entry const& e) { net.loss_rate = to_double(e); }},
		{"tick_interval", [&](entry const& e) { net.tick_interval = to_double(e); }},
	};
	auto size = [](std::size_t& field) { return [&field](entry const& e) { field = to_unsigned(e); }; };
	auto real = [](double& field) { return [&field](entry const& e) { field = to_double(e); }; };
	auto whole = [](int& field) { return [&field](entry const& e) { field = int(to_unsigned(e)); }; };
	std::map<std::string, setter> const node_keys{
		{"near_per_side", size(nd.near_per_side)},
		{"shortcuts", [&](entry const& e) {
			if (e.value == "auto") nd.shortcuts.reset();
			else nd.shortcuts = to_unsigned(e);
		}},
		{"max_shortcuts", size(nd.max_shortcuts)},
		{"ttl", [&](entry const& e) {
			auto const v = to_unsigned(e);
			if (v > 0xffff) throw config_error(e.line, "ttl must fit 16 bits");
			nd.ttl = std::uint16_t(v);
		}},
		{"handshake_retries", whole(nd.handshake_retries)},
		{"handshake_backoff", real(nd.handshake_backoff)},
		{"ping_interval", real(nd.ping_interval)},
		{"edge_timeout", real(nd.edge_timeout)},
		{"raw_edge_timeout", real(nd.raw_edge_timeout)},
		{"join_retry_interval", real(nd.join_retry_interval)},
		{"join_attempts", whole(nd.join_attempts)},
		{"leaf_timeout", real(nd.leaf_timeout)},
		{"shortcut_timeout", real(nd.shortcut_timeout)},
		{"shortcut_retry", real(nd.shortcut_retry)},
		{"trim_grace", real(nd.trim_grace)},
		{"trim_linger", real(nd.trim_linger)},
		{"repair_probes", whole(nd.repair_probes)},
		{"shortcut_redraw_bits", real(nd.shortcut_redraw_bits)},
		{"relink_backoff", real(nd.relink_backoff)},
	};

	std::set<std::string> seen;
	for (auto const& s : parse_sections(in))
	{
		if (s.name == "phase")
		{
			sc.phases.push_back(parse_phase(s));
			continue;
		}
		if (!seen.insert(s.name).second) throw config_error(s.line, "section [" + s.name + "] appears twice");
		if (s.name == "scenario") apply(s, scenario_keys);
		else if (s.name == "network") apply(s, network_keys);
		else if (s.name == "node") apply(s, node_keys);
		else throw config_error(s.line, "unknown section [" + s.name + "]");
	}
	if (sc.phases.empty()) throw config_error(0, "scenario has no [phase] sections");
	try
	{
		simnet::validate(sc);
		net.validate();
	}
	catch (std::invalid_argument const& e)
	{
		throw config_error(0, e.what());
	}
	return f;
}

std::vector<std::vector<transport::protocol>> parse_transports(std::string const& s)
{
	using transport::protocol;
	if (s == "udp") return {{protocol::udp}};
	if (s == "tcp") return {{protocol::tcp}};
	if (s == "mixed") return {{protocol::udp, protocol::tcp}, {protocol::tcp, protocol::udp}};
	throw std::invalid_argument("transport must be udp, tcp or mixed: " + s);
}

run_manifest load_manifest(std::istream& in, std::filesystem::path const& base)
{
	run_manifest m;
	bool have_scenario = false;
	bool have_output = false;
	auto path = [&](entry const& e) {
		std::filesystem::path p(e.value);
		return p.is_absolute() ? p : base / p;
	};
	std::map<std::string, setter> const run_keys{
		{"scenario", [&](entry const& e) { m.scenario = path(e); have_scenario = true; }},
		{"output", [&](entry const& e) { m.output = path(e); have_output = true; }},
		{"seeds", [&](entry const& e) {
			for (auto const& w : words(e.value)) m.seeds.push_back(to_unsigned(entry{e.key, w, e.line}));
			if (m.seeds.empty()) throw config_error(e.line, "seeds: at least one seed is needed");
		}},
		{"mode", [&](entry const& e) {
			if (e.value == "sim") m.mode = run_mode::sim;
			else if (e.value == "real-loopback") m.mode = run_mode::real_loopback;
			else throw config_error(e.line, "mode must be sim or real-loopback");
		}},
		{"transport", [&](entry const& e) {
			try
			{
				m.transports = parse_transports(e.value);
			}
			catch (std::invalid_argument const& x)
			{
				throw config_error(e.line, x.what());
			}
		}},
	};
	auto& t = m.limits;
	std::map<std::string, setter> const threshold_keys{
		{"routability_floor", [&](entry const& e) { t.routability_floor = to_double(e); }},
		{"ks_ceiling", [&](entry const& e) { t.ks_ceiling = to_double(e); }},
		{"missing_edges_ceiling", [&](entry const& e) { t.missing_edges_ceiling = to_unsigned(e); }},
		{"ring_correct_floor", [&](entry const& e) { t.ring_correct_floor = to_double(e); }},
	};
	std::set<std::string> seen;
	for (auto const& s : parse_sections(in))
	{
		if (!seen.insert(s.name).second) throw config_error(s.line, "section [" + s.name + "] appears twice");
		if (s.name == "run") apply(s, run_keys);
		else if (s.name == "thresholds") apply(s, threshold_keys);
		else throw config_error(s.line, "unknown section [" + s.name + "]");
	}
	if (!have_scenario) throw config_error(0, "[run] needs a scenario");
	if (!have_output) throw config_error(0, "[run] needs an output directory");
	if (m.seeds.empty()) throw config_error(0, "[run] needs seeds");
	return m;
}

} // namespace symphony::config
