#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cutgam/family.hpp"

namespace cutgam {

/// Column-oriented table of numeric observations.
class Dataset {
public:
    Dataset() = default;

    /// Adds or replaces a column. All columns must share one length.
    void set_column(const std::string& name, std::vector<double> values);

    [[nodiscard]] bool has_column(const std::string& name) const;
    /// Throws Error(MissingColumn) for an unknown name.
    [[nodiscard]] std::span<const double> column(const std::string& name) const;
    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return names_.size(); }

    /// Rows selected by index, in the given order.
    [[nodiscard]] Dataset subset(std::span<const std::size_t> rows) const;

private:
    std::vector<std::string> names_;
    std::vector<std::vector<double>> columns_;
    std::size_t rows_ = 0;
};

struct IngestHints {
    char delimiter = ',';
    /// Columns that must be present; only these are parsed and used for
    /// complete-case exclusion. Empty means every column.
    std::vector<std::string> required;
    std::optional<std::string> response;
    std::optional<Family> family;
};

struct IngestResult {
    Dataset data;
    std::size_t rows_read = 0;
    std::size_t rows_excluded = 0;
    std::vector<std::string> log;
};

/// Reads delimited text with a header row. Empty cells and "NA" mark
/// missing values; rows with a missing required value are dropped and
/// counted. Throws Error(ParseError) with row/column context for cells that
/// are not numbers, Error(MissingColumn) for absent columns and
/// Error(FamilyMismatch) for a response outside the family support.
IngestResult ingest(const std::filesystem::path& path, const IngestHints& hints = {});

/// Same as ingest() but reading from an in-memory buffer.
IngestResult ingest_text(const std::string& text, const IngestHints& hints = {});

/// Writes the dataset as comma-separated text with full round-trip precision.
void write_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace cutgam
