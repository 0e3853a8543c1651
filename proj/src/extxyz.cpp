#include "les/extxyz.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "les/error.hpp"
#include "les/format.hpp"

namespace les {

namespace {

struct KeyValue {
    std::string key;
    std::string value;
};

std::vector<std::string_view> split_lines(std::string_view text)
{
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

std::vector<std::string_view> split_ws(std::string_view line)
{
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
            ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t')
            ++i;
        if (i > start)
            tokens.push_back(line.substr(start, i - start));
    }
    return tokens;
}

double parse_number(std::string_view token, std::size_t line)
{
    double value = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (!token.empty() && *first == '+')
        ++first;
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last)
        throw ParseError("expected a number, got '" + std::string(token) + "'", line);
    return value;
}

std::vector<KeyValue> parse_comment(std::string_view line, std::size_t line_no)
{
    std::vector<KeyValue> out;
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
            ++i;
    };
    auto read_token = [&]() -> std::string {
        if (i < line.size() && (line[i] == '"' || line[i] == '\'')) {
            const char quote = line[i++];
            const std::size_t start = i;
            while (i < line.size() && line[i] != quote)
                ++i;
            if (i >= line.size())
                throw ParseError("unterminated quote in comment line", line_no);
            std::string s(line.substr(start, i - start));
            ++i;
            return s;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '=')
            ++i;
        return std::string(line.substr(start, i - start));
    };

    while (true) {
        skip_ws();
        if (i >= line.size())
            break;
        std::string key = read_token();
        if (key.empty())
            throw ParseError("malformed key=value pair in comment line", line_no);
        skip_ws();
        std::string value;
        if (i < line.size() && line[i] == '=') {
            ++i;
            skip_ws();
            value = read_token();
        } else {
            value = "T";
        }
        out.push_back({std::move(key), std::move(value)});
    }
    return out;
}

struct Column {
    std::string name;
    char type = 'R';
    int count = 1;
};

std::vector<Column> parse_properties(const std::string& spec, std::size_t line_no)
{
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ':'))
        parts.push_back(part);
    if (parts.size() % 3 != 0 || parts.empty())
        throw ParseError("malformed Properties string '" + spec + "'", line_no);
    std::vector<Column> cols;
    for (std::size_t k = 0; k < parts.size(); k += 3) {
        Column c;
        c.name = parts[k];
        if (parts[k + 1].size() != 1)
            throw ParseError("malformed Properties type '" + parts[k + 1] + "'", line_no);
        c.type = parts[k + 1][0];
        try {
            c.count = std::stoi(parts[k + 2]);
        } catch (const std::exception&) {
            throw ParseError("malformed Properties count '" + parts[k + 2] + "'", line_no);
        }
        if (c.count < 1)
            throw ParseError("Properties column count must be positive", line_no);
        cols.push_back(std::move(c));
    }
    return cols;
}

Cell parse_lattice(const std::string& value, std::size_t line_no)
{
    const auto tokens = split_ws(value);
    if (tokens.size() != 9)
        throw ParseError("Lattice needs 9 numbers", line_no);
    double m[9];
    for (int k = 0; k < 9; ++k)
        m[k] = parse_number(tokens[k], line_no);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            if (r != c && m[3 * r + c] != 0.0)
                throw ParseError("non-orthorhombic cell", line_no);
    try {
        return Cell({m[0], m[4], m[8]});
    } catch (const UserError& e) {
        throw ParseError(e.what(), line_no);
    }
}

bool is_core_key(const std::string& key)
{
    return key == "Lattice" || key == "Properties" || key == "energy" || key == "pbc";
}

std::string quote_if_needed(const std::string& s)
{
    if (s.empty() || s.find_first_of(" \t=") != std::string::npos)
        return "\"" + s + "\"";
    return s;
}

} // namespace

std::vector<Configuration> parse_extxyz(std::string_view text)
{
    const auto lines = split_lines(text);
    std::vector<Configuration> frames;
    std::size_t pos = 0;
    while (pos < lines.size()) {
        const auto count_tokens = split_ws(lines[pos]);
        if (count_tokens.empty()) {
            ++pos;
            continue;
        }
        const std::size_t header_line = pos + 1;
        if (count_tokens.size() != 1)
            throw ParseError("expected atom count", header_line);
        long long n_atoms = 0;
        {
            const auto tok = count_tokens[0];
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), n_atoms);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || n_atoms < 1)
                throw ParseError("expected positive atom count, got '" + std::string(tok) + "'",
                                 header_line);
        }
        if (pos + 1 >= lines.size())
            throw ParseError("missing comment line", header_line + 1);
        const std::size_t comment_line = pos + 2;
        const auto kvs = parse_comment(lines[pos + 1], comment_line);

        Configuration cfg;
        std::vector<Column> cols;
        bool have_lattice = false;
        bool have_props = false;
        for (const auto& kv : kvs) {
            if (kv.key == "Lattice") {
                cfg.cell = parse_lattice(kv.value, comment_line);
                have_lattice = true;
            } else if (kv.key == "Properties") {
                cols = parse_properties(kv.value, comment_line);
                have_props = true;
            } else if (kv.key == "energy") {
                cfg.labels.energy = parse_number(kv.value, comment_line);
            } else if (kv.key != "pbc") {
                cfg.info[kv.key] = kv.value;
            }
        }
        if (!have_lattice)
            throw ParseError("missing Lattice in comment line", comment_line);
        if (!have_props)
            throw ParseError("missing Properties in comment line", comment_line);

        int species_col = -1, pos_col = -1, force_col = -1, vel_col = -1;
        std::vector<int> offsets;
        int width = 0;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            offsets.push_back(width);
            width += cols[c].count;
            const auto& col = cols[c];
            if (col.name == "species" && col.type == 'S' && col.count == 1)
                species_col = static_cast<int>(c);
            else if (col.name == "pos" && col.type == 'R' && col.count == 3)
                pos_col = static_cast<int>(c);
            else if ((col.name == "forces" || col.name == "force") && col.type == 'R' && col.count == 3)
                force_col = static_cast<int>(c);
            else if ((col.name == "velocities" || col.name == "vel") && col.type == 'R' && col.count == 3)
                vel_col = static_cast<int>(c);
        }
        if (species_col < 0 || pos_col < 0)
            throw ParseError("Properties must include species:S:1:pos:R:3", comment_line);

        if (pos + 2 + static_cast<std::size_t>(n_atoms) > lines.size())
            throw ParseError("atom count mismatch: header says " + std::to_string(n_atoms)
                                 + " atoms but the file ends early",
                             lines.size());
        std::vector<Vec3> forces, velocities;
        for (long long a = 0; a < n_atoms; ++a) {
            const std::size_t line_idx = pos + 2 + static_cast<std::size_t>(a);
            const auto tokens = split_ws(lines[line_idx]);
            if (static_cast<int>(tokens.size()) != width)
                throw ParseError("expected " + std::to_string(width) + " columns, found "
                                     + std::to_string(tokens.size()),
                                 line_idx + 1);
            auto vec_at = [&](int col) {
                const int o = offsets[col];
                return Vec3{parse_number(tokens[o], line_idx + 1), parse_number(tokens[o + 1], line_idx + 1),
                            parse_number(tokens[o + 2], line_idx + 1)};
            };
            cfg.species.emplace_back(tokens[offsets[species_col]]);
            cfg.positions.push_back(vec_at(pos_col));
            if (force_col >= 0)
                forces.push_back(vec_at(force_col));
            if (vel_col >= 0)
                velocities.push_back(vec_at(vel_col));
        }
        if (force_col >= 0)
            cfg.labels.forces = std::move(forces);
        if (vel_col >= 0)
            cfg.velocities = std::move(velocities);
        try {
            cfg.validate();
        } catch (const UserError& e) {
            throw ParseError(e.what(), header_line);
        }
        frames.push_back(std::move(cfg));
        pos += 2 + static_cast<std::size_t>(n_atoms);
    }
    return frames;
}

std::string write_extxyz(std::span<const Configuration> configs)
{
    std::string out;
    for (const auto& cfg : configs) {
        cfg.validate();
        const Vec3& L = cfg.cell.lengths();
        out += std::to_string(cfg.size()) + "\n";
        out += "Lattice=\"" + format_double(L.x) + " 0 0 0 " + format_double(L.y) + " 0 0 0 "
             + format_double(L.z) + "\" Properties=species:S:1:pos:R:3";
        if (cfg.labels.forces)
            out += ":forces:R:3";
        if (cfg.velocities)
            out += ":velocities:R:3";
        if (cfg.labels.energy)
            out += " energy=" + format_double(*cfg.labels.energy);
        for (const auto& [key, value] : cfg.info) {
            if (is_core_key(key))
                continue;
            out += " " + key + "=" + quote_if_needed(value);
        }
        out += " pbc=\"T T T\"\n";
        auto put = [&out](const Vec3& v) {
            out += " " + format_double(v.x) + " " + format_double(v.y) + " " + format_double(v.z);
        };
        for (std::size_t a = 0; a < cfg.size(); ++a) {
            out += cfg.species[a];
            put(cfg.positions[a]);
            if (cfg.labels.forces)
                put((*cfg.labels.forces)[a]);
            if (cfg.velocities)
                put((*cfg.velocities)[a]);
            out += "\n";
        }
    }
    return out;
}

std::vector<Configuration> read_extxyz_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw UserError("cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_extxyz(buf.str());
    } catch (const ParseError& e) {
        throw UserError(path.string() + ": " + e.what());
    }
}

void write_extxyz_file(const std::filesystem::path& path, std::span<const Configuration> configs)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw UserError("cannot write '" + path.string() + "'");
    out << write_extxyz(configs);
}

} // namespace les
