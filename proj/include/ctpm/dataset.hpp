#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ctpm/common.hpp"

namespace ctpm::data {

// One treatment session: a subject matched with a candidate, the cohort flag,
// the continuous intensity in [0,1], and named outcome dimensions.
struct MatchRecord {
    std::string subject_id;
    std::string candidate_id;
    std::vector<double> x;  // subject features
    std::vector<double> y;  // candidate features
    int treatment = 0;      // cohort indicator, 0 or 1
    double intensity = 0.0; // in [0,1]
    std::map<std::string, double> outcomes;

    double outcome(const std::string& dim) const {
        auto it = outcomes.find(dim);
        if (it == outcomes.end()) throw DataError("record missing outcome dimension '" + dim + "'");
        return it->second;
    }
};

struct NormalizationStats {
    std::vector<double> x_mean, x_std;
    std::vector<double> y_mean, y_std;
    bool fitted = false;
};

struct Dataset {
    std::vector<MatchRecord> records;
    std::vector<std::string> subject_feature_names;
    std::vector<std::string> candidate_feature_names;
    std::vector<std::string> outcome_names;
    NormalizationStats normalization;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    std::size_t treated_count() const {
        std::size_t n = 0;
        for (const auto& r : records) n += static_cast<std::size_t>(r.treatment);
        return n;
    }
};

// Column mapping for delimiter-separated tables with a header row.
struct TableSchema {
    char delimiter = ',';
    std::string subject_id = "subject_id";
    std::string candidate_id = "candidate_id";
    std::vector<std::string> subject_features;
    std::vector<std::string> candidate_features;
    std::string treatment = "T";  // empty: derive later from the intensity median
    std::string intensity = "P";
    std::map<std::string, std::string> outcomes;  // dimension name -> column name
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, std::size_t row, const std::string& col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
        return v;
    } catch (const std::exception&) {
        throw DataError("row " + std::to_string(row) + ": cannot parse value '" + s +
                        "' in column '" + col + "'");
    }
}

}  // namespace detail

inline Dataset load_table(const std::string& path, const TableSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw DataError("empty data file: " + path);

    const auto header = detail::split_line(header_line, schema.delimiter);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

    auto col_index = [&](const std::string& name, const std::string& what) {
        auto it = col.find(name);
        if (it == col.end()) {
            throw DataError("missing column '" + name + "' (" + what + ") in " + path);
        }
        return it->second;
    };

    const std::size_t sid = col_index(schema.subject_id, "subject id");
    const std::size_t cid = col_index(schema.candidate_id, "candidate id");
    std::vector<std::size_t> xcols, ycols;
    for (const auto& n : schema.subject_features) xcols.push_back(col_index(n, "subject feature"));
    for (const auto& n : schema.candidate_features) ycols.push_back(col_index(n, "candidate feature"));
    const bool has_t = !schema.treatment.empty();
    const std::size_t tcol = has_t ? col_index(schema.treatment, "treatment") : 0;
    const std::size_t pcol = col_index(schema.intensity, "intensity");
    std::vector<std::pair<std::string, std::size_t>> ocols;
    for (const auto& [dim, name] : schema.outcomes) ocols.emplace_back(dim, col_index(name, "outcome"));

    Dataset ds;
    ds.subject_feature_names = schema.subject_features;
    ds.candidate_feature_names = schema.candidate_features;
    for (const auto& [dim, name] : schema.outcomes) ds.outcome_names.push_back(dim);

    std::string line;
    std::size_t row = 1;  // header was row 1
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto cells = detail::split_line(line, schema.delimiter);
        if (cells.size() != header.size()) {
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
        }
        MatchRecord rec;
        rec.subject_id = cells[sid];
        rec.candidate_id = cells[cid];
        for (std::size_t i = 0; i < xcols.size(); ++i) {
            rec.x.push_back(detail::parse_double(cells[xcols[i]], row, schema.subject_features[i]));
        }
        for (std::size_t i = 0; i < ycols.size(); ++i) {
            rec.y.push_back(detail::parse_double(cells[ycols[i]], row, schema.candidate_features[i]));
        }
        if (has_t) {
            const double tv = detail::parse_double(cells[tcol], row, schema.treatment);
            if (tv != 0.0 && tv != 1.0) {
                throw DataError("row " + std::to_string(row) + ": treatment must be 0 or 1, got " +
                                cells[tcol]);
            }
            rec.treatment = static_cast<int>(tv);
        }
        double p = detail::parse_double(cells[pcol], row, schema.intensity);
        // clamp only hairline excursions; anything farther out is a data error
        if (p < 0.0 || p > 1.0) {
            if (p >= -1e-9 && p <= 1.0 + 1e-9) {
                p = clamp(p, 0.0, 1.0);
            } else {
                throw DataError("row " + std::to_string(row) + ": intensity " + cells[pcol] +
                                " outside [0,1]");
            }
        }
        rec.intensity = p;
        for (const auto& [dim, idx] : ocols) {
            rec.outcomes[dim] = detail::parse_double(cells[idx], row, dim);
        }
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.empty()) throw DataError("data file has a header but no rows: " + path);
    return ds;
}

inline std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void save_table(const Dataset& ds, const std::string& path, const TableSchema& schema) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write data file: " + path);
    const char d = schema.delimiter;
    out << schema.subject_id << d << schema.candidate_id;
    for (const auto& n : schema.subject_features) out << d << n;
    for (const auto& n : schema.candidate_features) out << d << n;
    if (!schema.treatment.empty()) out << d << schema.treatment;
    out << d << schema.intensity;
    for (const auto& [dim, name] : schema.outcomes) out << d << name;
    out << "\n";
    for (const auto& r : ds.records) {
        out << r.subject_id << d << r.candidate_id;
        for (double v : r.x) out << d << format_value(v);
        for (double v : r.y) out << d << format_value(v);
        if (!schema.treatment.empty()) out << d << r.treatment;
        out << d << format_value(r.intensity);
        for (const auto& [dim, name] : schema.outcomes) out << d << format_value(r.outcome(dim));
        out << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

struct SplitRatios {
    double train = 0.6, validation = 0.2, test = 0.2;
};

struct Splits {
    Dataset train, validation, test;
};

// Sizes are floor(ratio * N) with the remainder assigned to train; membership
// is a seeded shuffle, deterministic for a given seed.
inline Splits split(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
    const double sum = ratios.train + ratios.validation + ratios.test;
    if (ratios.train <= 0.0 || ratios.validation <= 0.0 || ratios.test <= 0.0 ||
        std::fabs(sum - 1.0) > 1e-9) {
        throw ConfigError("split ratios must be positive and sum to 1");
    }
    const std::size_t n = ds.size();
    const auto n_val = static_cast<std::size_t>(ratios.validation * static_cast<double>(n));
    const auto n_test = static_cast<std::size_t>(ratios.test * static_cast<double>(n));
    const std::size_t n_train = n - n_val - n_test;

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, 101));
    rng.shuffle(idx);

    Splits out;
    auto copy_meta = [&](Dataset& part) {
        part.subject_feature_names = ds.subject_feature_names;
        part.candidate_feature_names = ds.candidate_feature_names;
        part.outcome_names = ds.outcome_names;
    };
    copy_meta(out.train);
    copy_meta(out.validation);
    copy_meta(out.test);
    for (std::size_t i = 0; i < n; ++i) {
        const MatchRecord& r = ds.records[idx[i]];
        if (i < n_train) {
            out.train.records.push_back(r);
        } else if (i < n_train + n_val) {
            out.validation.records.push_back(r);
        } else {
            out.test.records.push_back(r);
        }
    }
    return out;
}

// z-score stats from the training split only; zero-variance features map to 0.
inline NormalizationStats fit_normalizer(const Dataset& train) {
    require(!train.empty(), "fit_normalizer: empty training split");
    const std::size_t dx = train.records.front().x.size();
    const std::size_t dy = train.records.front().y.size();
    NormalizationStats st;
    st.x_mean.assign(dx, 0.0);
    st.x_std.assign(dx, 0.0);
    st.y_mean.assign(dy, 0.0);
    st.y_std.assign(dy, 0.0);
    const double n = static_cast<double>(train.size());
    for (const auto& r : train.records) {
        for (std::size_t i = 0; i < dx; ++i) st.x_mean[i] += r.x[i];
        for (std::size_t i = 0; i < dy; ++i) st.y_mean[i] += r.y[i];
    }
    for (std::size_t i = 0; i < dx; ++i) st.x_mean[i] /= n;
    for (std::size_t i = 0; i < dy; ++i) st.y_mean[i] /= n;
    for (const auto& r : train.records) {
        for (std::size_t i = 0; i < dx; ++i) {
            const double dxv = r.x[i] - st.x_mean[i];
            st.x_std[i] += dxv * dxv;
        }
        for (std::size_t i = 0; i < dy; ++i) {
            const double dyv = r.y[i] - st.y_mean[i];
            st.y_std[i] += dyv * dyv;
        }
    }
    for (std::size_t i = 0; i < dx; ++i) st.x_std[i] = std::sqrt(st.x_std[i] / n);
    for (std::size_t i = 0; i < dy; ++i) st.y_std[i] = std::sqrt(st.y_std[i] / n);
    st.fitted = true;
    return st;
}

inline std::vector<double> normalize_features(const std::vector<double>& v,
                                              const std::vector<double>& mean,
                                              const std::vector<double>& std) {
    if (v.size() != mean.size()) throw ShapeError("normalize: feature length mismatch");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std[i] > 0.0 ? (v[i] - mean[i]) / std[i] : 0.0;
    }
    return out;
}

inline Dataset apply_normalizer(const NormalizationStats& st, const Dataset& ds) {
    require(st.fitted, "apply_normalizer: stats not fitted");
    Dataset out = ds;
    for (auto& r : out.records) {
        r.x = normalize_features(r.x, st.x_mean, st.x_std);
        r.y = normalize_features(r.y, st.y_mean, st.y_std);
    }
    out.normalization = st;
    return out;
}

// Cohort flag from the intensity median of the training split, applied to all
// splits: sessions above the median are the treatment cohort.
inline double train_intensity_median(const Dataset& train) {
    require(!train.empty(), "median: empty training split");
    std::vector<double> p;
    p.reserve(train.size());
    for (const auto& r : train.records) p.push_back(r.intensity);
    std::sort(p.begin(), p.end());
    const std::size_t n = p.size();
    return n % 2 == 1 ? p[n / 2] : 0.5 * (p[n / 2 - 1] + p[n / 2]);
}

inline void derive_treatment_from_median(Splits& splits) {
    const double med = train_intensity_median(splits.train);
    auto assign = [med](Dataset& ds) {
        for (auto& r : ds.records) r.treatment = r.intensity > med ? 1 : 0;
    };
    assign(splits.train);
    assign(splits.validation);
    assign(splits.test);
}

// Keeps every record with a nonzero value in `dim` and a seeded `keep_rate`
// fraction of the zero-valued ones.
inline Dataset subsample_zero_outcome(const Dataset& ds, const std::string& dim,
                                      double keep_rate, std::uint64_t seed) {
    require(keep_rate > 0.0 && keep_rate <= 1.0, "subsample keep_rate must be in (0,1]");
    Dataset out;
    out.subject_feature_names = ds.subject_feature_names;
    out.candidate_feature_names = ds.candidate_feature_names;
    out.outcome_names = ds.outcome_names;
    Rng rng(derive_seed(seed, 102));
    for (const auto& r : ds.records) {
        if (r.outcome(dim) != 0.0 || rng.bernoulli(keep_rate)) out.records.push_back(r);
    }
    return out;
}

inline void shuffle_records(Dataset& ds, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 103));
    rng.shuffle(ds.records);
}

}  // namespace ctpm::data
