#include "cutgam/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "cutgam/error.hpp"

namespace cutgam {

void Dataset::set_column(const std::string& name, std::vector<double> values) {
    if (!names_.empty() && values.size() != rows_)
        throw Error(ErrorCode::DimensionMismatch,
                    "column '" + name + "' length differs from dataset rows");
    rows_ = values.size();
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it != names_.end()) {
        columns_[static_cast<std::size_t>(it - names_.begin())] = std::move(values);
        return;
    }
    names_.push_back(name);
    columns_.push_back(std::move(values));
}

bool Dataset::has_column(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::span<const double> Dataset::column(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw Error(ErrorCode::MissingColumn, "no column named '" + name + "'");
    return columns_[static_cast<std::size_t>(it - names_.begin())];
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    for (std::size_t c = 0; c < names_.size(); ++c) {
        std::vector<double> v;
        v.reserve(rows.size());
        for (std::size_t r : rows) v.push_back(columns_[c].at(r));
        out.set_column(names_[c], std::move(v));
    }
    return out;
}

namespace {

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == delim && !quoted) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA"; }

}  // namespace

IngestResult ingest_text(const std::string& text, const IngestHints& hints) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "input has no header row");
    std::vector<std::string> header = split(line, hints.delimiter);
    for (auto& h : header) h = trim(h);

    std::vector<std::string> wanted = hints.required;
    if (hints.response &&
        std::find(wanted.begin(), wanted.end(), *hints.response) == wanted.end() &&
        !wanted.empty())
        wanted.push_back(*hints.response);
    if (wanted.empty()) wanted = header;

    std::vector<std::size_t> index;
    for (const auto& name : wanted) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            const bool is_response = hints.response && name == *hints.response;
            throw Error(ErrorCode::MissingColumn,
                        (is_response ? "response column '" : "column '") + name +
                            "' absent from header");
        }
        index.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    if (hints.response &&
        std::find(header.begin(), header.end(), *hints.response) == header.end())
        throw Error(ErrorCode::MissingColumn,
                    "response column '" + *hints.response + "' absent from header");

    IngestResult result;
    std::vector<std::vector<double>> cols(wanted.size());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++result.rows_read;
        const auto cells = split(line, hints.delimiter);
        if (cells.size() != header.size()) {
            std::ostringstream msg;
            msg << "line " << line_no << ": expected " << header.size() << " fields, found "
                << cells.size();
            throw Error(ErrorCode::ParseError, msg.str());
        }
        std::vector<double> row(wanted.size());
        bool missing = false;
        for (std::size_t c = 0; c < wanted.size(); ++c) {
            const std::string cell = trim(cells[index[c]]);
            if (is_missing(cell)) {
                missing = true;
                continue;
            }
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                std::ostringstream msg;
                msg << "line " << line_no << ", column '" << wanted[c]
                    << "': cannot parse '" << cell << "' as a number";
                throw Error(ErrorCode::ParseError, msg.str());
            }
            row[c] = v;
        }
        if (missing) {
            ++result.rows_excluded;
            continue;
        }
        for (std::size_t c = 0; c < wanted.size(); ++c) cols[c].push_back(row[c]);
    }
    for (std::size_t c = 0; c < wanted.size(); ++c) result.data.set_column(wanted[c], std::move(cols[c]));
    if (result.rows_excluded > 0) {
        result.log.push_back(std::to_string(result.rows_excluded) +
                             " rows excluded (missing values)");
    }
    if (hints.response && hints.family) hints.family->validate_response(result.data.column(*hints.response));
    return result;
}

IngestResult ingest(const std::filesystem::path& path, const IngestHints& hints) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open input file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return ingest_text(buf.str(), hints);
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    const auto& names = data.names();
    for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
    out << '\n';
    std::vector<std::span<const double>> cols;
    for (const auto& n : names) cols.push_back(data.column(n));
    char buf[64];
    for (std::size_t r = 0; r < data.rows(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, cols[c][r]);
            (void)ec;
            if (c) out << ',';
            out.write(buf, ptr - buf);
        }
        out << '\n';
    }
}

}  // namespace cutgam
