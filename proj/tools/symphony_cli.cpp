// symphony_cli: run scenarios, demo the real transports, analyze snapshots.
// Exit status: 0 pass, 1 threshold failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "symphony/config.hpp"
#include "symphony/loopback.hpp"
#include "symphony/metrics.hpp"
#include "symphony/scenario.hpp"

using namespace symphony;
namespace fs = std::filesystem;

namespace {

constexpr int exit_pass = 0;
constexpr int exit_threshold = 1;
constexpr int exit_usage = 2;

struct overrides
{
	std::vector<std::uint64_t> seeds;
	std::string output;
	std::string mode;
	std::optional<double> routability_floor;
	std::optional<double> ks_ceiling;
	std::optional<std::size_t> missing_edges_ceiling;
	std::optional<double> ring_correct_floor;
};

std::string describe(config::config_error const& e, fs::path const& file)
{
	return file.string() + ": " + e.what();
}

void write_file(fs::path const& p, std::string const& text)
{
	std::ofstream out(p, std::ios::binary);
	out << text;
	if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string snapshot_text(metrics::snapshot const& s)
{
	std::ostringstream o;
	metrics::write_snapshot(o, s);
	return o.str();
}

std::string dot_text(metrics::snapshot const& s)
{
	std::ostringstream o;
	metrics::write_dot(o, s);
	return o.str();
}

// Checks the final state of one run; returns the violated thresholds.
std::vector<std::string> check(config::thresholds const& t, simnet::trace_row const& last
	, metrics::snapshot const& final_snapshot, std::ostream& report)
{
	std::vector<std::string> failed;
	report << std::fixed << std::setprecision(4) << "routability=" << last.routability
		<< " ring_correct=" << last.ring_correct_fraction << " missing_edges=" << last.missing_edges;
	if (t.routability_floor && last.routability < *t.routability_floor) failed.push_back("routability");
	if (t.ring_correct_floor && last.ring_correct_fraction < *t.ring_correct_floor) failed.push_back("ring_correct");
	if (t.missing_edges_ceiling && last.missing_edges > *t.missing_edges_ceiling) failed.push_back("missing_edges");
	if (t.ks_ceiling)
	{
		try
		{
			auto const sc = metrics::shortcut_cdf(final_snapshot);
			report << " ks=" << sc.ks << " (" << sc.samples << " shortcuts)";
			if (!(sc.ks < *t.ks_ceiling)) failed.push_back("ks");
		}
		catch (metrics::insufficient_samples const&)
		{
			report << " ks=insufficient samples";
			failed.push_back("ks");
		}
	}
	return failed;
}

int cmd_run(std::string const& manifest_path, overrides const& o)
{
	fs::path const mpath(manifest_path);
	std::ifstream min(mpath);
	if (!min)
	{
		std::cerr << "cannot open manifest " << mpath << "\n";
		return exit_usage;
	}
	config::run_manifest m;
	config::scenario_file sf;
	try
	{
		m = config::load_manifest(min, mpath.parent_path());
	}
	catch (config::config_error const& e)
	{
		std::cerr << describe(e, mpath) << "\n";
		return exit_usage;
	}
	if (!o.seeds.empty()) m.seeds = o.seeds;
	if (!o.output.empty()) m.output = o.output;
	if (o.mode == "sim") m.mode = config::run_mode::sim;
	if (o.mode == "real-loopback") m.mode = config::run_mode::real_loopback;
	if (o.routability_floor) m.limits.routability_floor = o.routability_floor;
	if (o.ks_ceiling) m.limits.ks_ceiling = o.ks_ceiling;
	if (o.missing_edges_ceiling) m.limits.missing_edges_ceiling = o.missing_edges_ceiling;
	if (o.ring_correct_floor) m.limits.ring_correct_floor = o.ring_correct_floor;

	std::ifstream sin(m.scenario);
	if (!sin)
	{
		std::cerr << "cannot open scenario " << m.scenario << "\n";
		return exit_usage;
	}
	try
	{
		sf = config::load_scenario(sin);
	}
	catch (config::config_error const& e)
	{
		std::cerr << describe(e, m.scenario) << "\n";
		return exit_usage;
	}

	std::error_code ec;
	fs::create_directories(m.output, ec);
	{
		fs::path const probe = m.output / ".write_probe";
		std::ofstream test(probe);
		if (ec || !test)
		{
			std::cerr << "output directory " << m.output << " is not writable\n";
			return exit_usage;
		}
		test.close();
		fs::remove(probe, ec);
	}

	bool all_pass = true;
	for (auto const seed : m.seeds)
	{
		simnet::sim_trace trace;
		try
		{
			if (m.mode == config::run_mode::sim)
			{
				auto net = sf.network;
				net.seed = seed;
				trace = simnet::run(sf.scenario, net, sf.node);
			}
			else
			{
				transport::loopback_options opt;
				opt.node = sf.node;
				opt.seed = seed;
				opt.tick_interval = sf.network.tick_interval;
				trace = transport::run_loopback(sf.scenario, opt, m.transports);
			}
		}
		catch (simnet::scenario_invalid const& e)
		{
			std::cerr << m.scenario.string() << ": " << e.what() << "\n";
			return exit_usage;
		}
		catch (transport::transport_error const& e)
		{
			std::cerr << "transport: " << e.what() << "\n";
			return exit_usage;
		}

		std::string const stem = "seed_" + std::to_string(seed);
		std::ostringstream csv;
		simnet::write_csv(csv, trace.rows);
		write_file(m.output / (stem + ".csv"), csv.str());
		write_file(m.output / (stem + "_final.snapshot"), snapshot_text(trace.final_snapshot));
		write_file(m.output / (stem + "_final.dot"), dot_text(trace.final_snapshot));
		for (std::size_t i = 0; i < trace.snapshots.size(); ++i)
		{
			std::ostringstream name;
			name << stem << "_" << std::setw(4) << std::setfill('0') << i << ".snapshot";
			write_file(m.output / name.str(), snapshot_text(trace.snapshots[i]));
		}

		std::cout << "seed " << seed << ": ";
		auto const failed = check(m.limits, trace.rows.back(), trace.final_snapshot, std::cout);
		if (trace.merge)
		{
			std::cout << " merge_messages=" << trace.merge->messages;
			if (trace.merge->merged_time) std::cout << " merged_after=" << *trace.merge->merged_time - trace.merge->bridge_time << "s";
			else std::cout << " merged=no";
		}
		if (failed.empty()) std::cout << " PASS\n";
		else
		{
			std::cout << " FAIL (";
			for (std::size_t i = 0; i < failed.size(); ++i) std::cout << (i ? ", " : "") << failed[i];
			std::cout << ")\n";
			all_pass = false;
		}
	}
	return all_pass ? exit_pass : exit_threshold;
}

int cmd_demo(std::size_t n, std::string const& proto, std::uint64_t seed, double budget, std::string const& out)
{
	if (n < 1 || n > 64)
	{
		std::cerr << "--n must be within [1, 64]\n";
		return exit_usage;
	}
	transport::loopback_options opt;
	opt.seed = seed;
	transport::demo_result r;
	try
	{
		r = transport::run_demo(n, config::parse_transports(proto), opt, budget);
	}
	catch (transport::transport_error const& e)
	{
		std::cerr << "transport: " << e.what() << "\n";
		return exit_usage;
	}
	std::cout << std::fixed << std::setprecision(3) << "nodes=" << n << " transport=" << proto
		<< " ring_correct_fraction=" << r.ring_correct_fraction << " elapsed=" << r.elapsed << "s"
		<< " datagrams=" << r.stats.datagrams_sent << " frames=" << r.stats.frames_sent << "\n";
	if (!out.empty())
	{
		fs::create_directories(out);
		write_file(fs::path(out) / "demo.snapshot", snapshot_text(r.snapshot));
		write_file(fs::path(out) / "demo.dot", dot_text(r.snapshot));
	}
	std::cout << (r.ring_correct ? "PASS" : "FAIL") << "\n";
	return r.ring_correct ? exit_pass : exit_threshold;
}

int cmd_analyze(std::string const& path, std::string dot, std::size_t pairs, std::uint64_t seed
	, std::optional<double> routability_floor, std::optional<double> ks_ceiling)
{
	std::ifstream in(path);
	if (!in)
	{
		std::cerr << "cannot open snapshot " << path << "\n";
		return exit_usage;
	}
	metrics::snapshot s;
	try
	{
		s = metrics::read_snapshot(in);
	}
	catch (metrics::malformed_snapshot const& e)
	{
		std::cerr << path << ": " << e.what() << "\n";
		return exit_usage;
	}
	auto const ring = metrics::ring_correct(s);
	auto const rr = metrics::routability(s, pairs, seed);
	std::cout << std::fixed << std::setprecision(6);
	std::cout << "nodes " << s.nodes.size() << "\n";
	std::cout << "edges " << s.edges.size() << "\n";
	std::cout << "ring_correct_fraction " << ring.fraction << "\n";
	std::cout << "routability " << rr.routability << " (" << rr.pairs_routable << "/" << rr.pairs_tested << " pairs)\n";
	std::cout << "mean_hops " << rr.mean_hops << "\n";
	bool pass = !routability_floor || rr.routability >= *routability_floor;
	try
	{
		auto const sc = metrics::shortcut_cdf(s);
		std::cout << "shortcut_ks " << sc.ks << " (" << sc.samples << " shortcuts)\n";
		if (ks_ceiling && !(sc.ks < *ks_ceiling)) pass = false;
	}
	catch (metrics::insufficient_samples const& e)
	{
		std::cout << "shortcut_ks insufficient samples: " << e.what() << "\n";
		if (ks_ceiling) pass = false;
	}
	std::cout << "missing_edges " << metrics::missing_edges(s) << "\n";
	if (dot.empty()) dot = path + ".dot";
	try
	{
		write_file(dot, dot_text(s));
	}
	catch (std::runtime_error const& e)
	{
		std::cerr << e.what() << "\n";
		return exit_usage;
	}
	std::cout << "dot " << dot << "\n";
	return pass ? exit_pass : exit_threshold;
}

} // namespace

int main(int argc, char** argv)
{
	CLI::App app{"Symphony overlay experiments"};
	app.require_subcommand(1);

	overrides o;
	std::string manifest;
	auto* run = app.add_subcommand("run", "Run a scenario manifest for each seed");
	run->add_option("manifest", manifest, "manifest file")->required();
	run->add_option("--seed", o.seeds, "seeds, replacing the manifest's");
	run->add_option("--out", o.output, "output directory");
	run->add_option("--mode", o.mode, "sim or real-loopback")->check(CLI::IsMember({"sim", "real-loopback"}));
	run->add_option("--routability-floor", o.routability_floor);
	run->add_option("--ks-ceiling", o.ks_ceiling);
	run->add_option("--missing-edges-ceiling", o.missing_edges_ceiling);
	run->add_option("--ring-correct-floor", o.ring_correct_floor);

	std::size_t n = 8;
	std::string proto = "udp";
	std::uint64_t seed = 1;
	double budget = 60;
	std::string demo_out;
	auto* demo = app.add_subcommand("demo-real", "Bootstrap a ring of in-process nodes over loopback sockets");
	demo->add_option("--n", n, "node count, at most 64");
	demo->add_option("--proto", proto, "udp, tcp or mixed")->check(CLI::IsMember({"udp", "tcp", "mixed"}));
	demo->add_option("--seed", seed);
	demo->add_option("--budget", budget, "wall clock seconds");
	demo->add_option("--out", demo_out, "directory for the final snapshot and DOT");

	std::string snapshot_path;
	std::string dot_path;
	std::size_t pairs = 20000;
	std::uint64_t analyze_seed = 0;
	std::optional<double> floor;
	std::optional<double> ceiling;
	auto* analyze = app.add_subcommand("analyze", "Report metrics of a topology snapshot");
	analyze->add_option("snapshot", snapshot_path, "snapshot file")->required();
	analyze->add_option("--dot", dot_path, "DOT output, default <snapshot>.dot");
	analyze->add_option("--pairs", pairs, "exhaustive up to this many ordered pairs, sampled above");
	analyze->add_option("--seed", analyze_seed, "pair sampling seed");
	analyze->add_option("--routability-floor", floor);
	analyze->add_option("--ks-ceiling", ceiling);

	try
	{
		app.parse(argc, argv);
	}
	catch (CLI::CallForHelp const& e)
	{
		return app.exit(e);
	}
	catch (CLI::CallForAllHelp const& e)
	{
		return app.exit(e);
	}
	catch (CLI::ParseError const& e)
	{
		app.exit(e);
		return exit_usage;
	}

	try
	{
		if (run->parsed()) return cmd_run(manifest, o);
		if (demo->parsed()) return cmd_demo(n, proto, seed, budget, demo_out);
		return cmd_analyze(snapshot_path, dot_path, pairs, analyze_seed, floor, ceiling);
	}
	catch (std::exception const& e)
	{
		std::cerr << "error: " << e.what() << "\n";
		return exit_usage;
	}
}
