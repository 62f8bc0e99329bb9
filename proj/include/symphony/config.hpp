#ifndef SYMPHONY_CONFIG_HPP
#define SYMPHONY_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "symphony/node.hpp"
#include "symphony/scenario.hpp"
#include "symphony/simnet.hpp"
#include "symphony/transport_address.hpp"

// Plain text configuration: "[section]" headers followed by "key = value"
// lines. '#' starts a comment. Sections may repeat where noted.
namespace symphony::config {

class config_error : public std::runtime_error
{
public:
	config_error(std::size_t line, std::string const& what);
	// 0 when the problem is not tied to one line
	std::size_t line() const { return m_line; }

private:
	std::size_t m_line;
};

struct entry
{
	std::string key;
	std::string value;
	std::size_t line = 0;
};

struct section
{
	std::string name;
	std::size_t line = 0;
	std::vector<entry> entries;
};

// Throws config_error on malformed lines, duplicate keys and text before the
// first header.
std::vector<section> parse_sections(std::istream& in);

struct scenario_file
{
	simnet::scenario scenario;
	simnet::sim_config network;
	overlay::node_config node;
};

// Sections: [scenario], [network], [node], and one [phase] per phase in
// order. Throws config_error, including for unknown keys and for phases
// that fail validation.
scenario_file load_scenario(std::istream& in);

enum class run_mode : std::uint8_t { sim, real_loopback };

struct thresholds
{
	std::optional<double> routability_floor;
	std::optional<double> ks_ceiling;
	std::optional<std::size_t> missing_edges_ceiling;
	std::optional<double> ring_correct_floor;
};

struct run_manifest
{
	std::filesystem::path scenario;
	std::vector<std::uint64_t> seeds;
	std::filesystem::path output;
	run_mode mode = run_mode::sim;
	// protocol preference of loopback nodes; several entries alternate per node
	std::vector<std::vector<transport::protocol>> transports{{transport::protocol::udp}};
	thresholds limits;
};

// Sections: [run] and [thresholds]. Relative paths resolve against base.
// Throws config_error.
run_manifest load_manifest(std::istream& in, std::filesystem::path const& base);

// "udp", "tcp" or "mixed"
std::vector<std::vector<transport::protocol>> parse_transports(std::string const& s);

} // namespace symphony::config

#endif
