#include "copfrail/event_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "copfrail/errors.hpp"

namespace copfrail {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string::size_type start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    for (auto& f : fields) {
        while (!f.empty() && (f.back() == '\r' || f.back() == ' ' || f.back() == '\t')) f.pop_back();
        std::string::size_type i = 0;
        while (i < f.size() && (f[i] == ' ' || f[i] == '\t')) ++i;
        f.erase(0, i);
    }
    return fields;
}

double parse_double(const std::string& s, std::size_t line_no, const std::string& col) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + s + "' as number in column " + col);
    }
    return value;
}

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

bool numeric_id(const std::string& s, long long& out) {
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

// Subjects sort numerically when every id is an integer, else lexicographically.
void sort_canonical(std::vector<SubjectData>& subjects) {
    bool all_numeric = true;
    for (const auto& s : subjects) {
        long long v;
        if (!numeric_id(s.id, v)) {
            all_numeric = false;
            break;
        }
    }
    if (all_numeric) {
        std::sort(subjects.begin(), subjects.end(), [](const SubjectData& a, const SubjectData& b) {
            long long va = 0, vb = 0;
            numeric_id(a.id, va);
            numeric_id(b.id, vb);
            return va < vb;
        });
    } else {
        std::sort(subjects.begin(), subjects.end(),
                  [](const SubjectData& a, const SubjectData& b) { return a.id < b.id; });
    }
}

}  // namespace

int SubjectData::total_events() const {
    int n = 0;
    for (const auto& e : events) n += static_cast<int>(e.size());
    return n;
}

void Dataset::finalize() {
    const int m = n_types();
    for (auto& s : subjects) {
        if (s.censoring_time <= 0.0) {
            throw ValidationError("subject " + s.id + ": censoring time must be positive");
        }
        if (s.covariates.size() != n_covariates) {
            throw ValidationError("subject " + s.id + ": covariate vector length " +
                                  std::to_string(s.covariates.size()) + " != dataset p = " +
                                  std::to_string(n_covariates));
        }
        if (static_cast<int>(s.events.size()) != m) {
            throw ValidationError("subject " + s.id + ": event list count != number of event types");
        }
        for (int j = 0; j < m; ++j) {
            auto& ev = s.events[static_cast<std::size_t>(j)];
            std::sort(ev.begin(), ev.end());
            double prev = 0.0;
            for (double t : ev) {
                if (t <= 0.0) throw ValidationError("subject " + s.id + ": event time must be positive");
                if (t == prev) {
                    throw ValidationError("subject " + s.id + ": duplicate event at time " + format_double(t) +
                                          " for type " + type_labels[static_cast<std::size_t>(j)]);
                }
                if (t >= s.censoring_time) {
                    throw ValidationError("subject " + s.id + ": event at time " + format_double(t) +
                                          " not strictly before censoring time " + format_double(s.censoring_time));
                }
                prev = t;
            }
        }
    }

    distinct_times.assign(static_cast<std::size_t>(m), {});
    tie_counts.assign(static_cast<std::size_t>(m), {});
    event_subjects.assign(static_cast<std::size_t>(m), {});
    for (int j = 0; j < m; ++j) {
        std::map<double, std::vector<int>> at_time;
        for (int i = 0; i < n_subjects(); ++i) {
            for (double t : subjects[static_cast<std::size_t>(i)].events[static_cast<std::size_t>(j)]) {
                at_time[t].push_back(i);
            }
        }
        auto& dt = distinct_times[static_cast<std::size_t>(j)];
        auto& tc = tie_counts[static_cast<std::size_t>(j)];
        auto& es = event_subjects[static_cast<std::size_t>(j)];
        dt.reserve(at_time.size());
        tc.reserve(at_time.size());
        es.reserve(at_time.size());
        for (auto& [t, subj] : at_time) {
            dt.push_back(t);
            tc.push_back(static_cast<int>(subj.size()));
            es.push_back(std::move(subj));
        }
    }
}

bool Dataset::operator==(const Dataset& other) const {
    if (type_labels != other.type_labels || n_covariates != other.n_covariates ||
        subjects.size() != other.subjects.size()) {
        return false;
    }
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const auto& a = subjects[i];
        const auto& b = other.subjects[i];
        if (a.id != b.id || a.censoring_time != b.censoring_time || a.events != b.events) return false;
        if (a.covariates.size() != b.covariates.size()) return false;
        for (Eigen::Index k = 0; k < a.covariates.size(); ++k) {
            if (a.covariates[k] != b.covariates[k]) return false;
        }
    }
    return true;
}

RiskSetIndex build_risk_sets(const Dataset& d) {
    const int n = d.n_subjects();
    const int m = d.n_types();
    RiskSetIndex idx;
    idx.by_tau_desc.resize(static_cast<std::size_t>(n));
    std::iota(idx.by_tau_desc.begin(), idx.by_tau_desc.end(), 0);
    std::stable_sort(idx.by_tau_desc.begin(), idx.by_tau_desc.end(), [&](int a, int b) {
        return d.subjects[static_cast<std::size_t>(a)].censoring_time > d.subjects[static_cast<std::size_t>(b)].censoring_time;
    });
    idx.risk_set_sizes.assign(static_cast<std::size_t>(m), {});
    for (int j = 0; j < m; ++j) {
        const auto& dt = d.distinct_times[static_cast<std::size_t>(j)];
        auto& sizes = idx.risk_set_sizes[static_cast<std::size_t>(j)];
        sizes.resize(dt.size());
        // tau sorted descending: the risk set at time t is the prefix with tau >= t.
        for (std::size_t l = 0; l < dt.size(); ++l) {
            const double t = dt[l];
            auto it = std::partition_point(idx.by_tau_desc.begin(), idx.by_tau_desc.end(), [&](int i) {
                return d.subjects[static_cast<std::size_t>(i)].censoring_time >= t;
            });
            sizes[l] = static_cast<int>(it - idx.by_tau_desc.begin());
        }
    }
    return idx;
}

Dataset load_dataset(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open input file: " + path);
    return load_dataset(in, schema);
}

Dataset load_dataset(std::istream& in, const CsvSchema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty input: header row required");
    const auto header = split_csv_line(line);

    auto find_col = [&](const std::string& name) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == name) return static_cast<int>(c);
        }
        throw ParseError("missing required column '" + name + "' in header");
    };
    const int c_subject = find_col(schema.subject_col);
    const int c_type = find_col(schema.type_col);
    const int c_time = find_col(schema.time_col);
    const int c_status = find_col(schema.status_col);

    // Covariate columns: prefix followed by 1..p, in numeric order.
    std::vector<int> c_covs;
    for (int k = 1;; ++k) {
        const std::string name = schema.covariate_prefix + std::to_string(k);
        bool found = false;
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == name) {
                c_covs.push_back(static_cast<int>(c));
                found = true;
                break;
            }
        }
        if (!found) break;
    }
    const int p = static_cast<int>(c_covs.size());

    struct RawSubject {
        Eigen::VectorXd covariates;
        double censoring_time = -1.0;
        bool covariates_set = false;
        std::vector<std::vector<double>> events;
        std::set<int> censor_seen;  // types with an explicit censoring row; -1 = '*'
    };
    std::vector<std::string> subject_order;
    std::map<std::string, RawSubject> raw;
    std::vector<std::string> type_order;
    std::map<std::string, int> type_index;

    auto type_of = [&](const std::string& label) {
        auto it = type_index.find(label);
        if (it != type_index.end()) return it->second;
        const int idx = static_cast<int>(type_order.size());
        type_order.push_back(label);
        type_index[label] = idx;
        return idx;
    };

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        }
        const std::string& id = fields[static_cast<std::size_t>(c_subject)];
        if (id.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty subject_id");
        const double time = parse_double(fields[static_cast<std::size_t>(c_time)], line_no, schema.time_col);
        const std::string& status_s = fields[static_cast<std::size_t>(c_status)];
        if (status_s != "0" && status_s != "1") {
            throw ParseError("line " + std::to_string(line_no) + ": status must be 0 or 1, got '" + status_s + "'");
        }
        const int status = status_s == "1" ? 1 : 0;
        const std::string& type_label = fields[static_cast<std::size_t>(c_type)];

        auto [it, inserted] = raw.try_emplace(id);
        if (inserted) subject_order.push_back(id);
        RawSubject& rs = it->second;

        Eigen::VectorXd covs(p);
        for (int k = 0; k < p; ++k) {
            covs[k] = parse_double(fields[static_cast<std::size_t>(c_covs[static_cast<std::size_t>(k)])], line_no,
                                   schema.covariate_prefix + std::to_string(k + 1));
        }
        if (!rs.covariates_set) {
            rs.covariates = covs;
            rs.covariates_set = true;
        } else if ((rs.covariates - covs).cwiseAbs().maxCoeff() != 0.0) {
            throw ValidationError("subject " + id + ": inconsistent covariates across rows (line " +
                                  std::to_string(line_no) + ")");
        }

        if (status == 0) {
            if (time <= 0.0) {
                throw ValidationError("subject " + id + ": censoring time must be positive (line " +
                                      std::to_string(line_no) + ")");
            }
            if (rs.censoring_time >= 0.0 && rs.censoring_time != time) {
                throw ValidationError("subject " + id + ": conflicting censoring times " +
                                      format_double(rs.censoring_time) + " and " + format_double(time));
            }
            rs.censoring_time = time;
            const int tkey = type_label == "*" ? -1 : type_of(type_label);
            if (tkey == -1) {
                if (!rs.censor_seen.empty()) {
                    throw ValidationError("subject " + id + ": duplicate censoring record (line " +
                                          std::to_string(line_no) + ")");
                }
                rs.censor_seen.insert(-1);
            } else {
                if (rs.censor_seen.count(-1) || rs.censor_seen.count(tkey)) {
                    throw ValidationError("subject " + id + ": duplicate censoring record for type " + type_label +
                                          " (line " + std::to_string(line_no) + ")");
                }
                rs.censor_seen.insert(tkey);
            }
        } else {
            if (type_label == "*") {
                throw ParseError("line " + std::to_string(line_no) + ": event_type '*' is only valid on censoring rows");
            }
            const int j = type_of(type_label);
            if (rs.events.size() <= static_cast<std::size_t>(j)) rs.events.resize(static_cast<std::size_t>(j) + 1);
            rs.events[static_cast<std::size_t>(j)].push_back(time);
        }
    }

    const int m = static_cast<int>(type_order.size());
    if (m == 0) throw ParseError("no event types found in input");

    Dataset d;
    d.type_labels = type_order;
    d.n_covariates = p;
    d.subjects.reserve(subject_order.size());
    for (const auto& id : subject_order) {
        RawSubject& rs = raw[id];
        if (rs.censoring_time < 0.0) {
            throw ValidationError("subject " + id + ": no censoring record");
        }
        // Per-type censoring rows must cover every type (a '*' row covers all).
        if (!rs.censor_seen.count(-1)) {
            for (int j = 0; j < m; ++j) {
                if (!rs.censor_seen.count(j)) {
                    throw ValidationError("subject " + id + ": missing censoring record for type " +
                                          type_order[static_cast<std::size_t>(j)]);
                }
            }
        }
        SubjectData s;
        s.id = id;
        s.covariates = rs.covariates_set ? rs.covariates : Eigen::VectorXd::Zero(p);
        s.censoring_time = rs.censoring_time;
        rs.events.resize(static_cast<std::size_t>(m));
        s.events = std::move(rs.events);
        d.subjects.push_back(std::move(s));
    }
    sort_canonical(d.subjects);
    d.finalize();
    return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open output file: " + path);
    save_dataset(d, out);
}

void save_dataset(const Dataset& d, std::ostream& out) {
    out << "subject_id,event_type,time,status";
    for (int k = 1; k <= d.n_covariates; ++k) out << ",x" << k;
    out << "\n";
    for (const auto& s : d.subjects) {
        std::string covs;
        for (Eigen::Index k = 0; k < s.covariates.size(); ++k) covs += "," + format_double(s.covariates[k]);
        for (int j = 0; j < d.n_types(); ++j) {
            for (double t : s.events[static_cast<std::size_t>(j)]) {
                out << s.id << ',' << d.type_labels[static_cast<std::size_t>(j)] << ',' << format_double(t) << ",1"
                    << covs << "\n";
            }
        }
        out << s.id << ",*," << format_double(s.censoring_time) << ",0" << covs << "\n";
    }
}

}  // namespace copfrail
