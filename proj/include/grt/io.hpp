#pragma once

#include <map>
#include <string>
#include <vector>

#include "grt/phantom.hpp"
#include "grt/volume.hpp"

namespace grt {

// Flat "key = value" config text; '#' starts a comment.
std::map<std::string, std::string> parse_kv(const std::string& text);
std::string serialize_kv(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> load_kv_file(const std::string& path);

// ProjectionSet on disk: raw little-endian f32 in canonical bin order at
// `path`, JSON sidecar at `path`.json with the geometry config, dims,
// counts_scale, and seed.
void save_projection_set(const std::string& path, const ProjectionSet& ps);
ProjectionSet load_projection_set(const std::string& path);

// VolumeGrid on disk: raw f32 + JSON sidecar {dims, spacing, origin}.
void save_volume(const std::string& path, const VolumeGrid& v);
VolumeGrid load_volume(const std::string& path);

// RFC-4180 quoting.
std::string csv_field(const std::string& s);
std::string csv_row(const std::vector<std::string>& fields);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace grt
