#include "symphony/scenario.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <set>

#include "symphony/shortcut.hpp"

namespace symphony::simnet {

namespace {

// seconds without protocol traffic that count as a settled network
constexpr double quiet_window = 10;

template <class T>
T const& pick(std::vector<T> const& v, std::mt19937_64& rng)
{
	std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
	return v[d(rng)];
}

class runner
{
public:
	runner(scenario const& s, sim_config const& cfg, overlay::node_config const& node_cfg)
		: m_s(s)
		, m_sim(cfg, node_cfg)
		, m_metric_seed(cfg.seed * 0x9e3779b97f4a7c15ULL + 1)
	{
		schedule_measurement(m_s.measurement_interval);
	}

	sim_trace run()
	{
		for (auto const& p : m_s.phases)
		{
			switch (p.what)
			{
				case phase::kind::bootstrap: bootstrap(p.count); break;
				case phase::kind::wait: m_sim.run_until(m_sim.now() + p.duration); break;
				case phase::kind::massive_join: massive_join(p.count); break;
				case phase::kind::massive_fail: massive_fail(p); break;
				case phase::kind::churn: churn(p.duration, p.probability); break;
				case phase::kind::merge: merge(p); break;
			}
		}
		if (m_trace.rows.empty() || m_trace.rows.back().time < m_sim.now()) measure();
		m_trace.final_snapshot = m_sim.snapshot();
		m_trace.join_durations = m_sim.join_durations();
		return std::move(m_trace);
	}

private:
	void schedule_measurement(double at)
	{
		m_sim.schedule(at, [this, at] {
			measure();
			schedule_measurement(at + m_s.measurement_interval);
		});
	}

	void measure()
	{
		auto snap = m_sim.snapshot();
		auto const rr = metrics::routability(snap, m_s.pair_budget, m_metric_seed + m_trace.rows.size());
		trace_row row;
		row.time = m_sim.now();
		row.live_nodes = m_sim.live_hosts().size();
		row.routability = rr.routability;
		row.ring_correct_fraction = metrics::ring_correct(snap).fraction;
		row.missing_edges = metrics::missing_edges(snap);
		row.mean_hops = rr.mean_hops;
		m_trace.rows.push_back(row);
		if (m_s.keep_snapshots) m_trace.snapshots.push_back(std::move(snap));
	}

	// a live host already on the ring, preferring members of group
	std::optional<host_id> proxy_for(host_id self, std::vector<host_id> const* group = nullptr)
	{
		std::vector<host_id> pool;
		for (auto h : m_sim.placed_hosts())
			if (h != self && (!group || std::find(group->begin(), group->end(), h) != group->end()))
				pool.push_back(h);
		if (pool.empty())
		{
			for (auto h : group ? *group : m_joined)
				if (h != self && m_sim.alive(h) && m_sim.join_started(h)) pool.push_back(h);
		}
		if (pool.empty()) return std::nullopt;
		return pick(pool, m_sim.rng());
	}

	void join_one(host_id h, std::vector<host_id> const* group = nullptr)
	{
		auto const proxy = proxy_for(h, group);
		if (proxy) m_sim.join(h, {*proxy});
		else m_sim.join(h, {});
		m_joined.push_back(h);
	}

	void bootstrap(std::size_t n)
	{
		for (std::size_t i = 0; i < n; ++i)
		{
			join_one(m_sim.add_host());
			m_sim.run_until(m_sim.now() + m_s.bootstrap_spacing);
		}
	}

	void massive_join(std::size_t n)
	{
		std::vector<host_id> fresh;
		for (std::size_t i = 0; i < n; ++i) fresh.push_back(m_sim.add_host());
		for (auto h : fresh)
		{
			auto const proxy = proxy_for(h);
			m_sim.join(h, proxy ? std::vector<host_id>{*proxy} : std::vector<host_id>{});
		}
		m_joined.insert(m_joined.end(), fresh.begin(), fresh.end());
	}

	void massive_fail(phase const& p)
	{
		auto live = m_sim.live_hosts();
		std::size_t const n = p.count ? p.count : std::size_t(double(live.size()) * p.fraction + 0.5);
		std::shuffle(live.begin(), live.end(), m_sim.rng());
		for (std::size_t i = 0; i < n && i < live.size(); ++i) m_sim.kill(live[i]);
	}

	void churn(double duration, double p)
	{
		auto const live = m_sim.live_hosts();
		double const start = m_sim.now();
		auto const events = churn_schedule(live.size(), p, duration, m_sim.rng());
		for (auto const& ev : events)
		{
			m_sim.run_until(start + ev.time);
			host_id const h = live[ev.index];
			m_sim.kill(h);
			m_sim.revive(h);
			auto const proxy = proxy_for(h);
			m_sim.join(h, proxy ? std::vector<host_id>{*proxy} : std::vector<host_id>{});
		}
		m_sim.run_until(start + duration);
		m_trace.churn_exposure += double(live.size()) * duration;
		m_trace.churn_departures += events.size();
	}

	bool converged(std::vector<host_id> const& group) const
	{
		auto const snap = m_sim.snapshot(group);
		return snap.nodes.size() == group.size() && metrics::missing_edges(snap) == 0;
	}

	void merge(phase const& p)
	{
		std::vector<host_id> ring_a, ring_b;
		for (std::size_t i = 0; i < std::max(p.count, p.count_b); ++i)
		{
			if (i < p.count)
			{
				host_id const h = m_sim.add_host();
				ring_a.push_back(h);
				join_one(h, &ring_a);
			}
			if (i < p.count_b)
			{
				host_id const h = m_sim.add_host();
				ring_b.push_back(h);
				join_one(h, &ring_b);
			}
			m_sim.run_until(m_sim.now() + m_s.bootstrap_spacing);
		}
		// bridge only once both rings are correct and have gone quiet
		double const limit = m_sim.now() + p.duration;
		while (m_sim.now() < limit)
		{
			std::uint64_t const sent = m_sim.messages_excluding_keepalive();
			m_sim.run_until(m_sim.now() + quiet_window);
			if (sent == m_sim.messages_excluding_keepalive() && converged(ring_a) && converged(ring_b)) break;
		}

		merge_result res;
		res.bridge_time = m_sim.now();
		std::uint64_t const before = m_sim.messages_excluding_keepalive();
		auto const counts_before = m_sim.message_counts();
		host_id const bridge = m_sim.add_host();
		m_sim.join(bridge, {pick(ring_a, m_sim.rng()), pick(ring_b, m_sim.rng())});
		m_joined.push_back(bridge);

		std::vector<host_id> all = ring_a;
		all.insert(all.end(), ring_b.begin(), ring_b.end());
		all.push_back(bridge);
		double const merge_limit = m_sim.now() + p.duration;
		while (m_sim.now() < merge_limit)
		{
			m_sim.run_until(m_sim.now() + 1);
			if (converged(all))
			{
				res.merged_time = m_sim.now();
				break;
			}
		}
		res.messages = m_sim.messages_excluding_keepalive() - before;
		for (auto const& [name, count] : m_sim.message_counts())
		{
			auto const b = counts_before.find(name);
			std::uint64_t const delta = count - (b == counts_before.end() ? 0 : b->second);
			if (delta && name != "link.ping" && name != "link.pong") res.by_kind[name] = delta;
		}
		m_trace.merge = res;
	}

	scenario const& m_s;
	simulator m_sim;
	std::uint64_t m_metric_seed;
	std::vector<host_id> m_joined;
	sim_trace m_trace;
};

} // namespace

void validate(scenario const& s)
{
	if (!(s.measurement_interval > 0)) throw scenario_invalid("measurement interval must be positive");
	if (s.bootstrap_spacing < 0) throw scenario_invalid("bootstrap spacing must be nonnegative");
	std::size_t population = 0;
	for (std::size_t i = 0; i < s.phases.size(); ++i)
	{
		auto const& p = s.phases[i];
		std::string const where = "phase " + std::to_string(i + 1) + ": ";
		switch (p.what)
		{
			case phase::kind::bootstrap:
			case phase::kind::massive_join:
				if (p.count < 1) throw scenario_invalid(where + "size must be at least 1");
				population += p.count;
				break;
			case phase::kind::wait:
				if (p.duration < 0) throw scenario_invalid(where + "wait must be nonnegative");
				break;
			case phase::kind::massive_fail:
			{
				if (p.count == 0 && !(p.fraction > 0 && p.fraction <= 1))
					throw scenario_invalid(where + "failure fraction must be within (0, 1]");
				std::size_t const n = p.count ? p.count : std::size_t(double(population) * p.fraction + 0.5);
				if (n > population) throw scenario_invalid(where + "cannot fail more nodes than are live");
				population -= n;
				break;
			}
			case phase::kind::churn:
				if (!(p.probability > 0 && p.probability < 1))
					throw scenario_invalid(where + "leave probability must be within (0, 1)");
				if (p.duration < 0) throw scenario_invalid(where + "churn duration must be nonnegative");
				if (population < 2) throw scenario_invalid(where + "churn needs at least 2 live nodes");
				break;
			case phase::kind::merge:
				if (p.count < 1 || p.count_b < 1) throw scenario_invalid(where + "ring sizes must be at least 1");
				if (population != 0) throw scenario_invalid(where + "merge must start from an empty network");
				population = p.count + p.count_b + 1;
				break;
		}
	}
}

sim_trace run(scenario const& s, sim_config const& cfg, overlay::node_config const& node_cfg)
{
	validate(s);
	runner r(s, cfg, node_cfg);
	return r.run();
}

void write_csv(std::ostream& out, std::vector<trace_row> const& rows)
{
	out << "simulated_time_s,live_nodes,routability,ring_correct_fraction,missing_edges,mean_hops\n";
	auto const flags = out.flags();
	auto const prec = out.precision();
	out << std::fixed << std::setprecision(6);
	for (auto const& r : rows)
	{
		out << std::setprecision(3) << r.time << ',' << r.live_nodes << ',' << std::setprecision(6) << r.routability
			<< ',' << r.ring_correct_fraction << ',' << r.missing_edges << ',' << r.mean_hops << '\n';
	}
	out.flags(flags);
	out.precision(prec);
}

std::vector<departure> churn_schedule(std::size_t population, double p, double duration, std::mt19937_64& rng)
{
	std::vector<departure> out;
	if (p <= 0) return out;
	std::bernoulli_distribution leave(p);
	for (double t = 0; t < duration; t += 1)
		for (std::size_t i = 0; i < population; ++i)
			if (leave(rng)) out.push_back({t, i});
	return out;
}

metrics::snapshot converged_topology(std::size_t n, std::size_t near_per_side, std::size_t shortcuts
	, std::mt19937_64& rng)
{
	metrics::snapshot s;
	std::vector<address> addrs;
	std::set<address> seen;
	while (addrs.size() < n)
	{
		address const a = random_class0(rng);
		if (seen.insert(a).second) addrs.push_back(a);
	}
	std::sort(addrs.begin(), addrs.end());
	s.nodes = addrs;

	// the node a greedy walk toward target would end at
	auto owner = [&](address const& target) {
		auto it = std::lower_bound(addrs.begin(), addrs.end(), target);
		address const above = it == addrs.end() ? addrs.front() : *it;
		address const below = it == addrs.begin() ? addrs.back() : *std::prev(it);
		auto const da = distance(above, target), db = distance(below, target);
		if (da != db) return da < db ? above : below;
		return std::min(above, below);
	};

	std::set<std::pair<address, address>> near;
	for (std::size_t i = 0; i < n; ++i)
	{
		for (std::size_t step = 1; step <= near_per_side && step < n; ++step)
		{
			address const a = addrs[i], b = addrs[(i + step) % n];
			near.insert({std::min(a, b), std::max(a, b)});
		}
	}
	for (auto const& [a, b] : near) s.edges.push_back({a, b, metrics::label_near});

	for (std::size_t i = 0; i < n && n > 1; ++i)
	{
		std::vector<address> peers;
		for (std::size_t step = 1; step <= near_per_side && step < n; ++step)
		{
			peers.push_back(addrs[(i + step) % n]);
			peers.push_back(addrs[(i + n - step) % n]);
		}
		auto const d_ave = overlay::estimate_d_ave(addrs[i], peers, near_per_side);
		for (std::size_t k = 0; k < shortcuts; ++k)
		{
			// a request that lands back on its sender is simply retried
			for (int attempt = 0; attempt < 64; ++attempt)
			{
				auto const d = overlay::sample_shortcut_distance(d_ave, rng);
				address const to = owner(address(addrs[i].value() + d.value));
				if (to == addrs[i]) continue;
				s.edges.push_back({addrs[i], to, metrics::label_shortcut});
				break;
			}
		}
	}
	std::sort(s.edges.begin(), s.edges.end());
	return s;
}

nat_trial_result nat_trial(nat_kind a, nat_kind b, std::uint64_t seed, double budget)
{
	sim_config cfg;
	cfg.seed = seed;
	simulator sim(cfg, overlay::node_config{});
	host_id const r = sim.add_host();
	host_id const x = sim.add_host({std::nullopt, a});
	host_id const y = sim.add_host({std::nullopt, b});

	sim.join(r, {});
	sim.run_until(1);
	sim.join(x, {r});
	sim.join(y, {r});

	auto holds = [&](host_id u, host_id v) {
		return sim.node_at(u).connections().count(sim.address_of(v)) > 0;
	};

	std::optional<double> ready;
	nat_trial_result res;
	double const step = 0.05;
	while (sim.now() < 120)
	{
		sim.run_until(sim.now() + step);
		if (!ready && holds(x, r) && holds(y, r)) ready = sim.now();
		if (ready && holds(x, y) && holds(y, x))
		{
			res.elapsed = sim.now() - *ready;
			res.connected = *res.elapsed <= budget;
			break;
		}
		if (ready && sim.now() > *ready + budget + 1) break;
	}
	return res;
}

} // namespace symphony::simnet
