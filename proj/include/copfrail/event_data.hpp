#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace copfrail {

// One row of the long-format input: an event or a censoring marker.
struct EventRecord {
    std::string subject_id;
    int event_type = 0;   // 1..m after label mapping
    double time = 0.0;
    int status = 0;       // 1 = event, 0 = censoring
};

// All observed data for one subject: covariates, follow-up end, and the
// per-type sorted event times. A type with no events keeps an empty list.
struct SubjectData {
    std::string id;
    Eigen::VectorXd covariates;                 // length p
    double censoring_time = 0.0;                // tau_i
    std::vector<std::vector<double>> events;    // [type][k], strictly increasing

    int n_events(int type) const { return static_cast<int>(events[static_cast<std::size_t>(type)].size()); }
    int total_events() const;
};

// Validated, immutable-after-construction study data plus the per-type
// distinct-event-time tables used by the nonparametric baseline.
struct Dataset {
    std::vector<SubjectData> subjects;
    std::vector<std::string> type_labels;            // file labels in first-appearance order
    int n_covariates = 0;

    // Per type: ordered distinct event times t_j(1) < ... < t_j(k_j), the
    // multiplicity N_j(t_j(l)) at each, and the subjects with an event there.
    std::vector<std::vector<double>> distinct_times;
    std::vector<std::vector<int>> tie_counts;
    std::vector<std::vector<std::vector<int>>> event_subjects;

    int n_subjects() const { return static_cast<int>(subjects.size()); }
    int n_types() const { return static_cast<int>(type_labels.size()); }

    // Recomputes the distinct-time tables and checks every invariant.
    // Throws ValidationError naming the offending subject.
    void finalize();

    bool operator==(const Dataset& other) const;
};

// Risk sets R(t_j(l)) = { i : tau_i >= t_j(l) }, stored as prefixes of the
// subjects ordered by decreasing censoring time so that nested sets share
// storage and risk-set sums can be accumulated in one sweep.
struct RiskSetIndex {
    std::vector<int> by_tau_desc;                   // subject indices, tau decreasing
    std::vector<std::vector<int>> risk_set_sizes;   // [type][l]: prefix length of by_tau_desc

    std::span<const int> risk_set(int type, int l) const {
        return {by_tau_desc.data(), static_cast<std::size_t>(risk_set_sizes[static_cast<std::size_t>(type)][static_cast<std::size_t>(l)])};
    }
};

RiskSetIndex build_risk_sets(const Dataset& d);

// Column names for the long-format CSV. event_type may be `*` on a status=0
// row, which stands for one censoring record per event type.
struct CsvSchema {
    std::string subject_col = "subject_id";
    std::string type_col = "event_type";
    std::string time_col = "time";
    std::string status_col = "status";
    std::string covariate_prefix = "x";  // x1, x2, ...
};

Dataset load_dataset(const std::string& path, const CsvSchema& schema = {});
Dataset load_dataset(std::istream& in, const CsvSchema& schema = {});

void save_dataset(const Dataset& d, const std::string& path);
void save_dataset(const Dataset& d, std::ostream& out);

}  // namespace copfrail
