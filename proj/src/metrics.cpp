#include "symphony/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "symphony/routing.hpp"

namespace symphony::metrics {

namespace {

std::string format_time(double t)
{
	std::ostringstream os;
	os << std::setprecision(15) << t;
	return os.str();
}

struct indexed
{
	std::vector<address> sorted;

	explicit indexed(snapshot const& s) : sorted(s.nodes)
	{
		std::sort(sorted.begin(), sorted.end());
		sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
	}

	std::optional<std::size_t> find(address const& a) const
	{
		auto const it = std::lower_bound(sorted.begin(), sorted.end(), a);
		if (it == sorted.end() || *it != a) return std::nullopt;
		return std::size_t(it - sorted.begin());
	}

	std::size_t size() const { return sorted.size(); }
};

bool structured_label(std::string const& l) { return l == label_near || l == label_shortcut; }

// required (node, neighbor) index pairs for the ideal ring over the population
std::vector<std::set<std::size_t>> required_neighbors(std::size_t n)
{
	std::vector<std::set<std::size_t>> req(n);
	if (n < 2) return req;
	for (std::size_t i = 0; i < n; ++i)
	{
		for (std::size_t step = 1; step <= 2; ++step)
		{
			std::size_t const cw = (i + step) % n;
			std::size_t const ccw = (i + n - step % n) % n;
			if (cw != i) req[i].insert(cw);
			if (ccw != i) req[i].insert(ccw);
		}
	}
	return req;
}

std::vector<std::set<std::size_t>> adjacency(indexed const& idx, snapshot const& s, bool near_only)
{
	std::vector<std::set<std::size_t>> adj(idx.size());
	for (auto const& e : s.edges)
	{
		bool const keep = near_only ? e.label == label_near : structured_label(e.label);
		if (!keep) continue;
		auto const a = idx.find(e.from);
		auto const b = idx.find(e.to);
		if (!a || !b || *a == *b) continue;
		adj[*a].insert(*b);
		adj[*b].insert(*a);
	}
	return adj;
}

} // namespace

malformed_snapshot::malformed_snapshot(std::size_t line, std::string const& what)
	: std::runtime_error("snapshot line " + std::to_string(line) + ": " + what)
	, m_line(line)
{
}

void write_snapshot(std::ostream& out, snapshot const& s)
{
	out << "time " << format_time(s.time) << '\n';
	for (auto const& n : s.nodes) out << "node " << n.to_hex() << '\n';
	for (auto const& e : s.edges) out << "edge " << e.from.to_hex() << ' ' << e.to.to_hex() << ' ' << e.label << '\n';
}

snapshot read_snapshot(std::istream& in)
{
	snapshot s;
	std::set<address> known;
	std::string line;
	std::size_t lineno = 0;
	bool any = false;
	while (std::getline(in, line))
	{
		++lineno;
		std::istringstream ls(line);
		std::string key;
		if (!(ls >> key) || key.front() == '#') continue;
		any = true;
		try
		{
			if (key == "time")
			{
				if (!(ls >> s.time)) throw malformed_snapshot(lineno, "expected a time value");
			}
			else if (key == "node")
			{
				std::string hex;
				if (!(ls >> hex)) throw malformed_snapshot(lineno, "expected a node address");
				address const a = address::from_hex(hex);
				if (!known.insert(a).second) throw malformed_snapshot(lineno, "duplicate node");
				s.nodes.push_back(a);
			}
			else if (key == "edge")
			{
				std::string a, b, label;
				if (!(ls >> a >> b >> label)) throw malformed_snapshot(lineno, "expected two addresses and a label");
				edge e{address::from_hex(a), address::from_hex(b), label};
				if (!known.count(e.from) || !known.count(e.to))
					throw malformed_snapshot(lineno, "edge references an unknown node");
				s.edges.push_back(std::move(e));
			}
			else
			{
				throw malformed_snapshot(lineno, "unknown record '" + key + "'");
			}
			std::string extra;
			if (ls >> extra) throw malformed_snapshot(lineno, "trailing text");
		}
		catch (std::invalid_argument const& e)
		{
			throw malformed_snapshot(lineno, e.what());
		}
	}
	if (!any) throw malformed_snapshot(lineno, "empty snapshot");
	return s;
}

void write_dot(std::ostream& out, snapshot const& s)
{
	indexed const idx(s);
	out << "graph snapshot {\n";
	out << "  label=\"t=" << format_time(s.time) << " N=" << idx.size() << "\";\n";
	out << "  node [shape=point, width=0.06];\n";
	out << std::fixed << std::setprecision(3);
	for (std::size_t i = 0; i < idx.size(); ++i)
	{
		long double const frac = idx.sorted[i].value().to_long_double() / std::ldexp(1.0L, 160);
		double const angle = double(frac) * 2 * std::numbers::pi;
		out << "  n" << i << " [tooltip=\"" << idx.sorted[i].to_hex().substr(0, 8) << "\", pos=\""
			<< 10 * std::sin(angle) << ',' << 10 * std::cos(angle) << "!\"];\n";
	}
	for (auto const& e : s.edges)
	{
		auto const a = idx.find(e.from);
		auto const b = idx.find(e.to);
		if (!a || !b) continue;
		char const* color = e.label == label_near ? "black" : e.label == label_shortcut ? "gray60" : "orange";
		out << "  n" << *a << " -- n" << *b << " [color=" << color << "];\n";
	}
	out << "}\n";
	out.unsetf(std::ios::floatfield);
}

ring_report ring_correct(snapshot const& s)
{
	indexed const idx(s);
	ring_report r;
	std::size_t const n = idx.size();
	r.correct.assign(n, true);
	if (n <= 1) return r;

	auto const near = adjacency(idx, s, n > 2);
	auto const req = required_neighbors(n);
	std::size_t good = 0;
	for (std::size_t i = 0; i < n; ++i)
	{
		bool ok = std::includes(near[i].begin(), near[i].end(), req[i].begin(), req[i].end());
		r.correct[i] = ok;
		good += ok ? 1 : 0;
	}
	r.fraction = double(good) / double(n);
	return r;
}

std::size_t missing_edges(snapshot const& s)
{
	indexed const idx(s);
	std::size_t const n = idx.size();
	if (n <= 1) return 0;
	auto const near = adjacency(idx, s, n > 2);
	auto const req = required_neighbors(n);
	std::size_t missing = 0;
	for (std::size_t i = 0; i < n; ++i)
		for (auto j : req[i])
			if (!near[i].count(j)) ++missing;
	return missing;
}

routability_report routability(snapshot const& s, std::optional<std::size_t> pair_budget, std::uint64_t seed)
{
	indexed const idx(s);
	std::size_t const n = idx.size();
	routability_report r;
	if (n < 2) return r;

	auto const adj_sets = adjacency(idx, s, false);
	std::vector<std::vector<address>> adj(n);
	for (std::size_t i = 0; i < n; ++i)
		for (auto j : adj_sets[i]) adj[i].push_back(idx.sorted[j]);

	std::uint64_t const total = std::uint64_t(n) * (n - 1);
	std::vector<std::uint64_t> pairs;
	if (pair_budget && *pair_budget < total)
	{
		// Floyd's sampling without replacement
		std::mt19937_64 rng(seed);
		std::unordered_set<std::uint64_t> chosen;
		for (std::uint64_t j = total - *pair_budget; j < total; ++j)
		{
			std::uniform_int_distribution<std::uint64_t> pick(0, j);
			std::uint64_t const t = pick(rng);
			if (!chosen.insert(t).second) chosen.insert(j);
		}
		pairs.assign(chosen.begin(), chosen.end());
		std::sort(pairs.begin(), pairs.end());
	}
	else
	{
		pairs.resize(total);
		for (std::uint64_t k = 0; k < total; ++k) pairs[k] = k;
	}

	std::uint64_t hop_sum = 0;
	for (std::uint64_t k : pairs)
	{
		std::size_t const src = std::size_t(k / (n - 1));
		std::size_t dst = std::size_t(k % (n - 1));
		if (dst >= src) ++dst;
		address const target = idx.sorted[dst];

		std::size_t cur = src;
		std::optional<address> prev;
		std::size_t hops = 0;
		bool routable = false;
		while (hops <= n)
		{
			auto const d = routing::greedy_next_hop(idx.sorted[cur], adj[cur], prev, target);
			if (d.what == routing::decision::kind::forward && d.next)
			{
				prev = idx.sorted[cur];
				cur = *idx.find(*d.next);
				++hops;
				continue;
			}
			routable = d.delivers_locally() && cur == dst;
			break;
		}
		++r.pairs_tested;
		if (routable)
		{
			++r.pairs_routable;
			hop_sum += hops;
			r.max_hops = std::max(r.max_hops, hops);
		}
	}
	r.routability = r.pairs_tested ? double(r.pairs_routable) / double(r.pairs_tested) : 1.0;
	r.mean_hops = r.pairs_routable ? double(hop_sum) / double(r.pairs_routable) : 0.0;
	return r;
}

std::vector<long double> shortcut_log2_lengths(snapshot const& s)
{
	std::vector<long double> out;
	for (auto const& e : s.edges)
	{
		if (e.label != label_shortcut) continue;
		out.push_back(directed_distance(e.from, e.to, direction::clockwise).value.log2());
	}
	return out;
}

double ks_distance(std::vector<long double> x, long double log2_d_ave)
{
	if (x.empty()) throw insufficient_samples("no samples");
	std::sort(x.begin(), x.end());
	long double const span = 160.0L - log2_d_ave;
	auto cdf = [&](long double v) { return std::clamp((v - log2_d_ave) / span, 0.0L, 1.0L); };
	long double const n = x.size();
	long double d = 0;
	for (std::size_t i = 0; i < x.size(); ++i)
	{
		long double const f = cdf(x[i]);
		d = std::max({d, (i + 1) / n - f, f - i / n});
	}
	return double(d);
}

shortcut_report shortcut_cdf(snapshot const& s)
{
	auto lengths = shortcut_log2_lengths(s);
	if (lengths.size() < 50)
		throw insufficient_samples(std::to_string(lengths.size()) + " shortcut edges, at least 50 needed");
	indexed const idx(s);
	long double const log2_d_ave = 160.0L - std::log2((long double)idx.size());
	shortcut_report r;
	r.samples = lengths.size();
	r.ks = ks_distance(std::move(lengths), log2_d_ave);
	return r;
}

double geometric_decay_r2(std::vector<double> const& y)
{
	std::size_t const n = y.size();
	if (n < 3) return 1.0;
	double st = 0, sy = 0;
	std::vector<double> ly(n);
	for (std::size_t i = 0; i < n; ++i)
	{
		if (y[i] <= 0) throw std::invalid_argument("geometric fit needs positive values");
		ly[i] = std::log(y[i]);
		st += double(i);
		sy += ly[i];
	}
	double const mt = st / double(n), my = sy / double(n);
	double sxy = 0, sxx = 0, syy = 0;
	for (std::size_t i = 0; i < n; ++i)
	{
		sxy += (double(i) - mt) * (ly[i] - my);
		sxx += (double(i) - mt) * (double(i) - mt);
		syy += (ly[i] - my) * (ly[i] - my);
	}
	if (syy == 0) return 0.0;
	return sxy * sxy / (sxx * syy);
}

} // namespace symphony::metrics
