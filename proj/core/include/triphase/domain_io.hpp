#pragma once

#include "triphase/domain.hpp"

#include <map>
#include <string>

namespace triphase {

/// Optional renaming of the canonical column names to the names used in a
/// particular file. Unmapped names are looked up as-is.
struct IngestSchema {
    std::map<std::string, std::string> rename;
    std::string col(const std::string& canonical) const {
        auto it = rename.find(canonical);
        return it == rename.end() ? canonical : it->second;
    }
};

/// Reads a long-format subject-month file. Enforces positive offsets,
/// consecutive months per subject, 0/1 binary cells, and phase consistency
/// (chart/validated values may only be present when the subject was sampled
/// at that phase). Violating rows are reported by row number.
Cohort ingest(const std::string& path, const IngestSchema& schema = {});

/// Writes a cohort in the same format; export followed by ingest
/// reproduces an identical cohort.
void export_cohort(const Cohort& cohort, const std::string& path);

} // namespace triphase
