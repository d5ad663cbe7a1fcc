#include "harmscope/io.hpp"

#include "harmscope/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace harmscope::io {

namespace {

struct Line {
    std::size_t number;  // 1-based
    std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
    std::vector<Line> lines;
    std::size_t number = 0;
    while (!text.empty()) {
        ++number;
        auto end = text.find('\n');
        std::string_view line = text.substr(0, end);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back({number, line});
        if (end == std::string_view::npos) break;
        text.remove_prefix(end + 1);
    }
    return lines;
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t") == std::string_view::npos; }

std::string quote_if_needed(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) out += ',';
        out += quote_if_needed(fields[i]);
    }
    return out;
}

[[noreturn]] void cell_error(std::string_view source, std::size_t row, std::string_view column,
                             const std::string& what) {
    std::ostringstream os;
    os << source << ": row " << row << ", column " << column << ": " << what;
    throw FormatError(os.str());
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                current += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current += c;
        }
    }
    if (quoted) throw FormatError("unterminated quoted field");
    fields.push_back(std::move(current));
    return fields;
}

std::string format_number(double value) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) throw Error("format_number failed");
    return {buf.data(), end};
}

double parse_number(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
        throw InputError("not a number: '" + std::string(text) + "'");
    return value;
}

// ----------------------------------------------------------------------------
// Predictions
// ----------------------------------------------------------------------------

std::vector<PredictionRecord> parse_predictions(std::string_view text, std::string_view source) {
    static const std::array<std::string, 7> required{"subject_id", "dataset_id", "model_id", "task",
                                                     "dimension",  "truth",      "prediction"};
    auto lines = split_lines(text);
    std::size_t first = 0;
    while (first < lines.size() && blank(lines[first].text)) ++first;
    if (first == lines.size()) throw FormatError(std::string(source) + ": empty file, no header");

    const auto header = split_csv_line(lines[first].text);
    std::map<std::string, std::size_t> column;
    std::vector<std::pair<std::string, std::size_t>> context_columns;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto& name = header[i];
        if (!column.emplace(name, i).second)
            throw FormatError(std::string(source) + ": duplicate column: " + name);
        if (name.starts_with("context:")) {
            if (name.size() == 8) throw FormatError(std::string(source) + ": context column without a name");
            context_columns.emplace_back(name.substr(8), i);
        } else if (name != "obs" && std::find(required.begin(), required.end(), name) == required.end()) {
            throw FormatError(std::string(source) + ": unexpected column: " + name);
        }
    }
    std::string missing;
    for (const auto& name : required)
        if (!column.contains(name)) missing += (missing.empty() ? "" : ", ") + name;
    if (!missing.empty()) throw FormatError(std::string(source) + ": missing column: " + missing);
    const bool explicit_obs = column.contains("obs");

    using Key = std::tuple<std::string, std::string, std::string, TaskKind, std::string>;
    std::map<Key, std::size_t> ordinal;
    std::set<std::pair<Key, std::size_t>> seen;
    std::vector<PredictionRecord> records;
    for (std::size_t li = first + 1; li < lines.size(); ++li) {
        const auto& line = lines[li];
        if (blank(line.text)) continue;
        std::vector<std::string> f;
        try {
            f = split_csv_line(line.text);
        } catch (const FormatError& e) {
            throw FormatError(std::string(source) + ": row " + std::to_string(line.number) + ": " + e.what());
        }
        if (f.size() != header.size())
            throw FormatError(std::string(source) + ": row " + std::to_string(line.number) + ": expected " +
                              std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));

        PredictionRecord r;
        r.source_row = line.number;
        r.subject_id = f[column["subject_id"]];
        r.dataset_id = f[column["dataset_id"]];
        r.model_id = f[column["model_id"]];
        r.dimension = f[column["dimension"]];
        if (r.subject_id.empty()) cell_error(source, line.number, "subject_id", "empty subject id");
        const auto& task = f[column["task"]];
        if (task == "cls")
            r.task = TaskKind::classification;
        else if (task == "reg")
            r.task = TaskKind::regression;
        else
            cell_error(source, line.number, "task", "expected cls or reg, got '" + task + "'");
        for (auto [name, target] : {std::pair{"truth", &r.truth}, std::pair{"prediction", &r.prediction}}) {
            try {
                *target = parse_number(f[column[name]]);
            } catch (const InputError& e) {
                cell_error(source, line.number, name, e.what());
            }
            if (!std::isfinite(*target)) cell_error(source, line.number, name, "non-finite value");
            if (r.task == TaskKind::classification && *target != 0.0 && *target != 1.0)
                cell_error(source, line.number, name,
                           "classification value " + f[column[name]] + " out of range, expected 0 or 1");
        }
        for (const auto& [name, idx] : context_columns)
            if (!f[idx].empty()) r.context[name] = f[idx];

        Key key{r.subject_id, r.dataset_id, r.model_id, r.task, r.dimension};
        if (explicit_obs) {
            try {
                const double obs = parse_number(f[column["obs"]]);
                if (obs < 0 || obs != std::floor(obs)) throw InputError("not a non-negative integer");
                r.observation = static_cast<std::size_t>(obs);
            } catch (const InputError& e) {
                cell_error(source, line.number, "obs", e.what());
            }
        } else {
            r.observation = ordinal[key]++;
        }
        if (!seen.emplace(key, r.observation).second)
            throw FormatError(std::string(source) + ": row " + std::to_string(line.number) +
                              ": duplicate key (" + r.subject_id + ", " + r.dataset_id + ", " + r.model_id +
                              ", " + task + ", " + r.dimension + ", obs " + std::to_string(r.observation) + ")");
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
    return parse_predictions(read_file(path), path.string());
}

std::string format_predictions(std::span<const PredictionRecord> records) {
    std::set<std::string> context_names;
    for (const auto& r : records)
        for (const auto& [name, _] : r.context) context_names.insert(name);

    std::vector<std::string> header{"subject_id", "dataset_id", "model_id", "task",
                                    "dimension",  "truth",      "prediction"};
    for (const auto& name : context_names) header.push_back("context:" + name);
    std::string out = join(header) + "\n";
    for (const auto& r : records) {
        std::vector<std::string> row{r.subject_id, r.dataset_id, r.model_id, std::string(to_string(r.task)),
                                     r.dimension, format_number(r.truth), format_number(r.prediction)};
        for (const auto& name : context_names) {
            auto it = r.context.find(name);
            row.push_back(it == r.context.end() ? "" : it->second);
        }
        out += join(row) + "\n";
    }
    return out;
}

// ----------------------------------------------------------------------------
// Cohort
// ----------------------------------------------------------------------------

CohortTable parse_cohort(std::string_view text, std::string_view source) {
    const std::string src(source);
    std::vector<AttributeSchema> schema;
    std::vector<std::string> header;
    std::map<std::string, std::map<std::string, std::string>> entries;

    for (const auto& line : split_lines(text)) {
        if (blank(line.text)) continue;
        const std::string row_tag = src + ": row " + std::to_string(line.number);
        if (line.text.starts_with("#attribute")) {
            if (!header.empty()) throw FormatError(row_tag + ": schema line after the header");
            const auto f = split_csv_line(line.text);
            if (f.size() != 4 || f[0] != "#attribute")
                throw FormatError(row_tag + ": expected #attribute,<name>,<levels>,<designated level>");
            AttributeSchema attr;
            attr.name = f[1];
            std::string_view levels = f[2];
            while (true) {
                auto cut = levels.find(';');
                attr.levels.emplace_back(levels.substr(0, cut));
                if (cut == std::string_view::npos) break;
                levels.remove_prefix(cut + 1);
            }
            if (f[3].find(';') != std::string::npos)
                throw FormatError(row_tag + ": attribute " + attr.name + " designates more than one level");
            attr.designated = f[3];
            if (attr.levels.size() < 2)
                throw FormatError(row_tag + ": attribute " + attr.name + " needs at least 2 levels");
            attr.kind = attr.levels.size() == 2 ? AttributeKind::binary : AttributeKind::categorical;
            schema.push_back(std::move(attr));
            continue;
        }
        if (line.text.starts_with('#')) continue;

        if (header.empty()) {
            header = split_csv_line(line.text);
            if (header.empty() || header[0] != "subject_id")
                throw FormatError(row_tag + ": header must start with subject_id");
            std::set<std::string> named(header.begin() + 1, header.end());
            if (named.size() != header.size() - 1) throw FormatError(row_tag + ": duplicate attribute column");
            for (const auto& attr : schema)
                if (!named.contains(attr.name))
                    throw FormatError(src + ": schema attribute " + attr.name + " has no column");
            for (const auto& name : named) {
                bool declared = false;
                for (const auto& attr : schema) declared = declared || attr.name == name;
                if (!declared) throw FormatError(src + ": column " + name + " has no #attribute line");
            }
            continue;
        }

        const auto f = split_csv_line(line.text);
        if (f.size() != header.size())
            throw FormatError(row_tag + ": expected " + std::to_string(header.size()) + " fields, got " +
                              std::to_string(f.size()));
        const auto& subject = f[0];
        if (subject.empty()) throw FormatError(row_tag + ": empty subject_id");
        if (entries.contains(subject)) throw FormatError(row_tag + ": duplicate subject " + subject);
        auto& row = entries[subject];
        for (std::size_t i = 1; i < f.size(); ++i) {
            const auto* attr = &*std::find_if(schema.begin(), schema.end(),
                                              [&](const auto& a) { return a.name == header[i]; });
            if (!f[i].empty() && !attr->has_level(f[i]))
                throw FormatError(row_tag + ": subject " + subject + ": unknown level '" + f[i] +
                                  "' for attribute " + header[i]);
            row[header[i]] = f[i];
        }
    }
    if (header.empty()) throw FormatError(src + ": missing subject_id header");
    try {
        return CohortTable(std::move(schema), std::move(entries));
    } catch (const InputError& e) {
        throw FormatError(src + ": " + e.what());
    }
}

CohortTable load_cohort(const std::filesystem::path& path) {
    return parse_cohort(read_file(path), path.string());
}

std::string format_cohort(const CohortTable& cohort) {
    std::string out;
    std::vector<std::string> header{"subject_id"};
    for (const auto& attr : cohort.schema()) {
        std::string levels;
        for (const auto& l : attr.levels) levels += (levels.empty() ? "" : ";") + l;
        out += join({"#attribute", attr.name, levels, attr.designated}) + "\n";
        header.push_back(attr.name);
    }
    out += join(header) + "\n";
    for (const auto& [subject, row] : cohort.entries()) {
        std::vector<std::string> fields{subject};
        for (const auto& attr : cohort.schema()) {
            auto it = row.find(attr.name);
            fields.push_back(it == row.end() ? "" : it->second);
        }
        out += join(fields) + "\n";
    }
    return out;
}

// ----------------------------------------------------------------------------
// Files and digests
// ----------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    if (in.bad()) throw IoError("error reading " + path.string());
    return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("error writing " + path.string());
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

}  // namespace harmscope::io
