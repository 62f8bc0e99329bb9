// Runs every acceptance criterion and prints one PASS or FAIL line for each.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "symphony/loopback.hpp"
#include "symphony/metrics.hpp"
#include "symphony/packet.hpp"
#include "symphony/replay.hpp"
#include "symphony/scenario.hpp"
#include "symphony/simnet.hpp"

using namespace symphony;
using namespace symphony::simnet;

namespace {

struct outcome
{
	bool pass = false;
	std::string detail;
};

std::string fmt(char const* f, auto... args)
{
	char buf[512];
	std::snprintf(buf, sizeof buf, f, args...);
	return buf;
}

// least squares slope of y on x
double slope(std::vector<double> const& x, std::vector<double> const& y)
{
	double const mx = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
	double const my = std::accumulate(y.begin(), y.end(), 0.0) / double(y.size());
	double sxy = 0, sxx = 0;
	for (std::size_t i = 0; i < x.size(); ++i)
	{
		sxy += (x[i] - mx) * (y[i] - my);
		sxx += (x[i] - mx) * (x[i] - mx);
	}
	return sxy / sxx;
}

sim_config seeded(std::uint64_t seed)
{
	sim_config c;
	c.seed = seed;
	return c;
}

outcome codec_exactness()
{
	std::mt19937_64 rng(1);
	std::size_t bad = 0;
	for (int i = 0; i < 10000; ++i)
	{
		packet p;
		p.header.type = rng() % 2 ? packet_type::link : packet_type::routed;
		p.header.hops = std::uint16_t(rng());
		p.header.ttl = std::uint16_t(rng());
		uint160::bytes_type src{}, dst{};
		for (auto& b : src) b = std::uint8_t(rng());
		for (auto& b : dst) b = std::uint8_t(rng());
		p.header.source = address(uint160::from_bytes(src));
		p.header.destination = address(uint160::from_bytes(dst));
		p.header.payload = payload_type(rng() % 4);
		p.payload.resize(rng() % 300);
		for (auto& b : p.payload) b = std::uint8_t(rng());
		auto const bytes = encode(p);
		if (bytes.size() != header_size + p.payload.size() || decode(bytes) != p || encode(decode(bytes)) != bytes) ++bad;
	}
	std::size_t const empty = encode(packet{}).size();
	return {bad == 0 && header_size == 46 && empty == 46
		, fmt("%zu of 10000 packets differ, header %zu bytes", bad, empty)};
}

outcome ring_formation()
{
	scenario s;
	s.phases = {phase::bootstrap(256), phase::wait(60)};
	s.measurement_interval = 60;
	s.pair_budget = 1000;
	auto const t = run(s, seeded(1), overlay::node_config{});
	auto const ring = metrics::ring_correct(t.final_snapshot).fraction;
	auto const rr = metrics::routability(t.final_snapshot);
	return {t.final_snapshot.nodes.size() == 256 && ring == 1.0 && rr.routability == 1.0
		, fmt("nodes %zu, ring_correct %.4f, routability %.4f over %zu pairs", t.final_snapshot.nodes.size(), ring
			, rr.routability, rr.pairs_tested)};
}

outcome shortcut_law()
{
	scenario s;
	s.phases = {phase::bootstrap(1024), phase::wait(300)};
	s.measurement_interval = 300;
	s.pair_budget = 1000;
	overlay::node_config n;
	n.shortcuts = 4;
	auto const t = run(s, seeded(1), n);
	auto const r = metrics::shortcut_cdf(t.final_snapshot);
	return {r.ks < 0.05, fmt("KS %.4f over %zu shortcuts", r.ks, r.samples)};
}

outcome hop_scaling()
{
	auto hops = [](std::size_t n, std::size_t k) {
		std::mt19937_64 rng(7);
		auto const snap = converged_topology(n, 2, k, rng);
		return metrics::routability(snap, 10000, 11).mean_hops;
	};
	std::vector<double> x, y;
	for (std::size_t n : {256, 1024, 4096})
	{
		double const l = std::log2(double(n));
		x.push_back(l * l / 4);
		y.push_back(hops(n, 4));
	}
	double sxy = 0, sxx = 0;
	for (std::size_t i = 0; i < x.size(); ++i)
	{
		sxy += x[i] * y[i];
		sxx += x[i] * x[i];
	}
	double const c = sxy / sxx;
	double worst = 0;
	for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(y[i] - c * x[i]) / (c * x[i]));
	double const k1 = hops(1024, 1);
	double const gain = k1 / y[1];
	return {worst < 0.25 && gain >= 2
		, fmt("hops %.2f %.2f %.2f, c %.3f, worst deviation %.1f%%, k=1 over k=4 at 1024: %.2f", y[0], y[1], y[2], c
			, 100 * worst, gain)};
}

outcome massive_join()
{
	double const interval = 0.25;
	scenario s;
	s.phases = {phase::bootstrap(256), phase::wait(100), phase::massive_join(250), phase::wait(50 * interval)};
	s.measurement_interval = interval;
	s.pair_budget = 2000;
	auto const t = run(s, seeded(1), overlay::node_config{});
	auto const& rows = t.rows;
	auto const join = std::find_if(rows.begin(), rows.end(), [](trace_row const& r) { return r.live_nodes == 506; });
	if (join == rows.end()) return {false, "the joining nodes never appeared"};
	std::size_t const first = std::size_t(join - rows.begin());

	std::size_t low = first;
	for (std::size_t i = first; i < rows.size(); ++i)
		if (rows[i].routability < rows[low].routability) low = i;
	bool const dipped = rows[low].routability < 1.0;
	bool monotone = true;
	for (std::size_t i = low + 1; i < rows.size(); ++i)
		if (rows[i].routability < rows[i - 1].routability - 0.02) monotone = false;

	// intervals from the lowest routability until everything is repaired
	std::optional<std::size_t> recovered;
	for (std::size_t i = low; i < rows.size() && !recovered; ++i)
		if (rows[i].routability == 1.0 && rows[i].missing_edges == 0 && rows[i].ring_correct_fraction == 1.0)
			recovered = i - low;

	// missing edges from their peak down to the last nonzero count
	std::size_t peak = first;
	for (std::size_t i = first; i < rows.size(); ++i)
		if (rows[i].missing_edges > rows[peak].missing_edges) peak = i;
	std::vector<double> decay;
	for (std::size_t i = peak; i < rows.size() && rows[i].missing_edges > 0; ++i)
		decay.push_back(double(rows[i].missing_edges));
	double const r2 = decay.size() >= 3 ? metrics::geometric_decay_r2(decay) : 0;

	auto const final_rr = metrics::routability(t.final_snapshot);
	bool const final_ok = final_rr.routability == 1.0 && metrics::missing_edges(t.final_snapshot) == 0;
	std::ostringstream series;
	for (std::size_t i = peak; i < peak + decay.size(); ++i) series << (i > peak ? " " : "") << rows[i].missing_edges;
	return {dipped && monotone && recovered && *recovered <= 50 && r2 >= 0.9 && final_ok
		, fmt("minimum routability %.4f, monotone %s, recovered after %d intervals, missing edges %s, R2 %.3f"
			, rows[low].routability, monotone ? "yes" : "no", recovered ? int(*recovered) : -1, series.str().c_str(), r2)};
}

outcome massive_failure()
{
	scenario s;
	s.phases = {phase::bootstrap(512), phase::wait(100), phase::massive_fail_fraction(0.3), phase::wait(60)};
	s.measurement_interval = 5;
	s.pair_budget = 2000;
	auto const t = run(s, seeded(1), overlay::node_config{});
	double dip = 1;
	for (auto const& r : t.rows)
		if (r.live_nodes < 512) dip = std::min(dip, r.routability);
	auto const rr = metrics::routability(t.final_snapshot);
	auto const ring = metrics::ring_correct(t.final_snapshot).fraction;
	return {t.final_snapshot.nodes.size() == t.rows.back().live_nodes && rr.routability == 1.0 && ring == 1.0
		, fmt("%zu survivors, lowest routability %.4f, final routability %.4f over %zu pairs, ring_correct %.4f"
			, t.final_snapshot.nodes.size(), dip, rr.routability, rr.pairs_tested, ring)};
}

outcome ring_merge()
{
	scenario big;
	big.phases = {phase::merge(128, 128)};
	auto const t = run(big, seeded(1), overlay::node_config{});
	bool const merged = t.merge && t.merge->merged_time && t.final_snapshot.nodes.size() == 257
		&& metrics::ring_correct(t.final_snapshot).fraction == 1.0;

	overlay::node_config one;
	one.shortcuts = 1;
	std::vector<double> x, y;
	bool all_merged = true;
	std::string counts;
	for (std::size_t n : {16, 32, 64})
	{
		double sum = 0;
		for (std::uint64_t seed = 1; seed <= 5; ++seed)
		{
			scenario s;
			s.phases = {phase::merge(n, n)};
			auto const r = run(s, seeded(seed), one);
			if (!r.merge || !r.merge->merged_time) all_merged = false;
			else sum += double(r.merge->messages);
		}
		x.push_back(std::log(double(n)));
		y.push_back(std::log(sum / 5));
		counts += fmt("%s%zu:%.0f", counts.empty() ? "" : " ", n, sum / 5);
	}
	double const b = slope(x, y);
	return {merged && all_merged && b >= 0.8 && b <= 1.25
		, fmt("257-node ring %s after %.0f s with %llu messages; mean messages per side size %s, log-log slope %.3f"
			, merged ? "correct" : "not correct", merged ? *t.merge->merged_time - t.merge->bridge_time : -1.0
			, t.merge ? static_cast<unsigned long long>(t.merge->messages) : 0ULL, counts.c_str(), b)};
}

outcome churn()
{
	// join completion time in a quiet network
	scenario calib;
	calib.phases = {phase::bootstrap(256), phase::wait(30)};
	calib.measurement_interval = 100;
	calib.pair_budget = 100;
	auto const c = run(calib, seeded(1), overlay::node_config{});
	double const j = std::accumulate(c.join_durations.begin(), c.join_durations.end(), 0.0)
		/ double(c.join_durations.size());

	double const duration = 1500;
	std::vector<double> multiples{100, 30, 10, 5};
	std::vector<double> steady;
	for (double m : multiples)
	{
		scenario s;
		s.bootstrap_spacing = 0.5;
		s.measurement_interval = 10;
		s.pair_budget = 20000;
		s.phases = {phase::bootstrap(256), phase::wait(60), phase::churn(duration, 1 / (m * j))};
		auto const t = run(s, seeded(1), overlay::node_config{});
		double const from = t.rows.back().time - 1000;
		double sum = 0;
		std::size_t count = 0;
		for (auto const& r : t.rows)
			if (r.time > from)
			{
				sum += r.routability;
				++count;
			}
		steady.push_back(sum / double(count));
	}
	bool const monotone = std::is_sorted(steady.rbegin(), steady.rend());
	bool const ok = steady[0] >= 0.99 && steady[2] < 0.95 && steady[2] > 0.5 && monotone;
	return {ok, fmt("join time %.3f s; steady routability at 100x %.4f, 30x %.4f, 10x %.4f, 5x %.4f", j, steady[0]
		, steady[1], steady[2], steady[3])};
}

outcome nat_logic()
{
	int cone = 0, symmetric = 0;
	for (std::uint64_t seed = 1; seed <= 100; ++seed)
	{
		cone += nat_trial(nat_kind::port_restricted_cone, nat_kind::port_restricted_cone, seed).connected;
		symmetric += nat_trial(nat_kind::port_restricted_cone, nat_kind::symmetric, seed).connected;
	}
	return {cone >= 99 && symmetric == 0
		, fmt("port-restricted pairs linked %d/100, with a symmetric NAT %d/100", cone, symmetric)};
}

outcome real_transport_parity()
{
	using transport::protocol;
	std::string detail;
	bool ok = true;
	for (protocol p : {protocol::udp, protocol::tcp})
	{
		transport::loopback_options opt;
		opt.seed = 1;
		auto const r = transport::run_demo(8, {{p}}, opt, 60);
		ok = ok && r.ring_correct && r.ring_correct_fraction == 1.0 && r.elapsed <= 60;
		detail += fmt("%s ring %.2f in %.2f s; ", p == protocol::udp ? "udp" : "tcp", r.ring_correct_fraction
			, r.elapsed);
	}

	sim_config cfg = seeded(11);
	cfg.latency = constant_latency{20};
	simulator sim(cfg, overlay::node_config{});
	std::vector<tap_record> records;
	sim.set_tap([&](tap_record const& r) { records.push_back(r); });
	sim.record_events(true);
	for (int i = 0; i < 8; ++i) sim.add_host();
	sim.join(0, {});
	for (host_id i = 1; i < 8; ++i) sim.schedule(0.5 * double(i), [&sim, i] { sim.join(i, {i - 1}); });
	sim.run_until(40);
	for (protocol p : {protocol::udp, protocol::tcp})
	{
		auto const r = transport::replay(records, overlay::node_config{}, p);
		bool const same = r.missing == 0 && r.mismatched == 0 && r.events == sim.events();
		ok = ok && same;
		detail += fmt("%s trace of %zu events %s", p == protocol::udp ? "udp" : "tcp", sim.events().size()
			, same ? "identical" : "differs");
		if (p == protocol::udp) detail += "; ";
	}
	return {ok, detail};
}

outcome determinism()
{
	scenario s;
	s.measurement_interval = 5;
	s.phases = {phase::bootstrap(64), phase::wait(30), phase::massive_join(20), phase::wait(20)
		, phase::massive_fail_fraction(0.25), phase::wait(20), phase::churn(200, 0.01)};
	auto csv = [&](std::uint64_t seed) {
		std::ostringstream out;
		write_csv(out, run(s, seeded(seed), overlay::node_config{}).rows);
		return out.str();
	};
	std::string const a = csv(5);
	std::string const b = csv(5);
	scenario m;
	m.phases = {phase::merge(24, 24)};
	std::ostringstream ma, mb;
	write_csv(ma, run(m, seeded(8), overlay::node_config{}).rows);
	write_csv(mb, run(m, seeded(8), overlay::node_config{}).rows);
	bool const ok = a == b && ma.str() == mb.str() && a != csv(6);
	return {ok, fmt("reruns %s (%zu and %zu bytes)", ok ? "byte-identical" : "differ", a.size(), ma.str().size())};
}

struct criterion
{
	int number;
	char const* name;
	double limit_s;
	std::function<outcome()> check;
};

} // namespace

int main()
{
	std::vector<criterion> const all{
		{1, "codec exactness", 5, codec_exactness},
		{2, "ring formation", 120, ring_formation},
		{3, "shortcut distance law", 300, shortcut_law},
		{4, "hop scaling", 600, hop_scaling},
		{5, "massive join", 300, massive_join},
		{6, "massive failure", 300, massive_failure},
		{7, "ring merge", 300, ring_merge},
		{8, "churn", 600, churn},
		{9, "NAT traversal", 60, nat_logic},
		{10, "real transport parity", 120, real_transport_parity},
		{11, "determinism", 600, determinism},
	};
	int failed = 0;
	for (auto const& c : all)
	{
		auto const start = std::chrono::steady_clock::now();
		outcome o;
		try
		{
			o = c.check();
		}
		catch (std::exception const& e)
		{
			o = {false, std::string("error: ") + e.what()};
		}
		double const took = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
		bool const pass = o.pass && took < c.limit_s;
		failed += !pass;
		std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.number << " (" << c.name << "): " << o.detail
			<< fmt(" [%.1f s, limit %.0f s]", took, c.limit_s) << std::endl;
	}
	return failed;
}
