#include "grt/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "grt/errors.hpp"

namespace grt {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

std::string serialize_kv(const std::map<std::string, std::string>& kv) {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
    return os.str();
}

std::map<std::string, std::string> load_kv_file(const std::string& path) {
    return parse_kv(read_text_file(path));
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << content;
    if (!os) throw IoError("write failed: " + path);
}

namespace {

void write_f32(const std::string& path, const std::vector<float>& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write(reinterpret_cast<const char*>(data.data()),
             std::streamsize(data.size() * sizeof(float)));
    if (!os) throw IoError("write failed: " + path);
}

std::vector<float> read_f32(const std::string& path, std::size_t expected) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<float> data(expected);
    is.read(reinterpret_cast<char*>(data.data()), std::streamsize(expected * sizeof(float)));
    if (std::size_t(is.gcount()) != expected * sizeof(float))
        throw IoError("truncated data file: " + path);
    return data;
}

nlohmann::json load_sidecar(const std::string& path) {
    std::string text = read_text_file(path + ".json");
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("corrupt sidecar: " + path + ".json");
    return j;
}

} // namespace

void save_projection_set(const std::string& path, const ProjectionSet& ps) {
    write_f32(path, ps.data);
    nlohmann::json j;
    j["geometry"] = geometry_to_kv(ps.geometry);
    j["total_bins"] = ps.data.size();
    j["n_views"] = n_total_views(ps.geometry);
    if (ps.counts_scale) j["counts_scale"] = *ps.counts_scale;
    if (ps.seed) j["seed"] = *ps.seed;
    write_text_file(path + ".json", j.dump(2) + "\n");
}

ProjectionSet load_projection_set(const std::string& path) {
    nlohmann::json j = load_sidecar(path);
    ProjectionSet ps;
    try {
        std::map<std::string, std::string> kv = j.at("geometry");
        ps.geometry = geometry_from_kv(kv);
        if (ps.data.empty()) ps.data.clear();
        std::size_t bins = j.at("total_bins");
        if (bins != total_bins(ps.geometry))
            throw ConfigError("sidecar bin count disagrees with geometry: " + path);
        ps.data = read_f32(path, bins);
        if (j.contains("counts_scale")) ps.counts_scale = double(j["counts_scale"]);
        if (j.contains("seed")) ps.seed = std::uint64_t(j["seed"]);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("corrupt sidecar: ") + e.what());
    }
    return ps;
}

void save_volume(const std::string& path, const VolumeGrid& v) {
    write_f32(path, v.data);
    nlohmann::json j;
    j["dims"] = v.dims;
    j["spacing"] = {v.spacing.x, v.spacing.y, v.spacing.z};
    j["origin"] = {v.origin.x, v.origin.y, v.origin.z};
    write_text_file(path + ".json", j.dump(2) + "\n");
}

VolumeGrid load_volume(const std::string& path) {
    nlohmann::json j = load_sidecar(path);
    VolumeGrid v;
    try {
        v.dims = j.at("dims");
        auto sp = j.at("spacing");
        auto og = j.at("origin");
        v.spacing = {sp[0], sp[1], sp[2]};
        v.origin = {og[0], og[1], og[2]};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("corrupt sidecar: ") + e.what());
    }
    v.data = read_f32(path, v.size());
    return v;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') out += '"';
    }
    out += '"';
    return out;
}

std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    out += "\r\n";
    return out;
}

} // namespace grt
