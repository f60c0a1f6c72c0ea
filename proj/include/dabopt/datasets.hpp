#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "dabopt/errors.hpp"
#include "dabopt/gbrt.hpp"
#include "dabopt/oracle.hpp"
#include "dabopt/rng.hpp"
#include "dabopt/types.hpp"

namespace dabopt {

struct DatasetProvenance {
    std::string mode;           // how the data came to be, e.g. "sim_grid"
    std::uint64_t seed = 0;
    std::string oracle_digest;  // empty when unknown (plain CSV import)
};

struct Dataset {
    Fidelity fidelity = Fidelity::Simulation;
    std::vector<Sample> samples;
    DatasetProvenance provenance;

    FeatureMatrix features() const {
        FeatureMatrix m;
        m.reserve(samples.size());
        for (const Sample& s : samples) {
            auto f = s.point.features();
            m.push_back({f[0], f[1], f[2]});
        }
        return m;
    }

    std::vector<double> targets() const {
        std::vector<double> t;
        t.reserve(samples.size());
        for (const Sample& s : samples) t.push_back(s.eta);
        return t;
    }
};

namespace detail {

inline void check_eta(double eta) {
    if (!(eta > 0.0 && eta <= 100.0))
        throw DataError("efficiency " + format_double(eta) + " outside (0, 100]");
}

inline double grid_value(double lo, double hi, int i, int n) {
    if (i == n - 1) return hi;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace detail

struct GridCounts {
    int n_d1 = 25;
    int n_d2 = 25;
    int n_p = 20;
};

// Cartesian product of evenly spaced axis values (endpoints included),
// labeled with the simulator surface.
inline Dataset generate_sim_grid(const GridCounts& counts, const OracleParams& params) {
    params.validate();
    if (counts.n_d1 < 2 || counts.n_d2 < 2 || counts.n_p < 2)
        throw DataError("grid counts must each be >= 2");

    Dataset ds;
    ds.fidelity = Fidelity::Simulation;
    ds.provenance = {"sim_grid", 0, oracle_digest(params)};
    ds.samples.reserve(static_cast<std::size_t>(counts.n_d1) *
                       static_cast<std::size_t>(counts.n_d2) *
                       static_cast<std::size_t>(counts.n_p));
    for (int i = 0; i < counts.n_d1; ++i) {
        double d1 = detail::grid_value(ranges::d1_min, ranges::d1_max, i, counts.n_d1);
        for (int j = 0; j < counts.n_d2; ++j) {
            double d2 = detail::grid_value(ranges::d2_min, ranges::d2_max, j, counts.n_d2);
            for (int k = 0; k < counts.n_p; ++k) {
                double p = detail::grid_value(ranges::p_min, ranges::p_max, k, counts.n_p);
                OperatingPoint pt{d1, d2, p};
                double eta = eta_sim(params, pt);
                detail::check_eta(eta);
                ds.samples.push_back({pt, eta, Fidelity::Simulation});
            }
        }
    }
    return ds;
}

// Uniform-random bench points labeled with noisy measurements. Exact
// duplicate points are redrawn (vanishingly rare, but determinism needs a
// rule). The RNG order per row is: d1, d2, p, then the measurement noise;
// a duplicate redraws the point before any noise is consumed.
inline Dataset generate_exp_pool(int count, const OracleParams& params, std::uint64_t seed) {
    params.validate();
    if (count < 1) throw DataError("experimental pool size must be >= 1");

    Dataset ds;
    ds.fidelity = Fidelity::Experimental;
    ds.provenance = {"exp_pool", seed, oracle_digest(params)};
    ds.samples.reserve(static_cast<std::size_t>(count));

    std::mt19937_64 rng(seed);
    std::set<std::tuple<double, double, double>> seen;
    for (int i = 0; i < count; ++i) {
        OperatingPoint pt{};
        do {
            pt.d1 = uniform_in(rng, ranges::d1_min, ranges::d1_max);
            pt.d2 = uniform_in(rng, ranges::d2_min, ranges::d2_max);
            pt.p = uniform_in(rng, ranges::p_min, ranges::p_max);
        } while (!seen.insert({pt.d1, pt.d2, pt.p}).second);
        double eta = measure(params, pt, rng);
        detail::check_eta(eta);
        ds.samples.push_back({pt, eta, Fidelity::Experimental});
    }
    return ds;
}

struct SplitSpec {
    double train_frac = 0.0;
    double test_frac = 0.0;
    double val_frac = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        for (double f : {train_frac, test_frac, val_frac})
            if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must be in [0, 1]");
        if (std::abs(train_frac + test_frac + val_frac - 1.0) > 1e-9)
            throw ConfigError("split fractions must sum to 1");
    }
};

struct SplitResult {
    Dataset train;
    Dataset test;
    Dataset validation;
};

// Seeded uniform shuffle, then contiguous slices. Train and test get
// round(n * frac) rows; validation absorbs the rounding remainder.
inline SplitResult split_dataset(const Dataset& data, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = data.samples.size();
    if (n == 0) throw DataError("cannot split an empty dataset");

    auto n_train = static_cast<std::int64_t>(
        std::llround(static_cast<double>(n) * spec.train_frac));
    auto n_test = static_cast<std::int64_t>(
        std::llround(static_cast<double>(n) * spec.test_frac));
    auto n_val = static_cast<std::int64_t>(n) - n_train - n_test;
    if (n_train < 1) throw DataError("train partition is empty");
    if (n_test < 1) throw DataError("test partition is empty");
    if (n_val < 1) throw DataError("validation partition is empty");

    std::vector<Sample> shuffled = data.samples;
    std::mt19937_64 rng(spec.seed);
    shuffle_seeded(shuffled, rng);

    auto slice = [&](std::int64_t begin, std::int64_t end, const char* part) {
        Dataset d;
        d.fidelity = data.fidelity;
        d.provenance = data.provenance;
        d.provenance.mode += std::string(":") + part;
        d.samples.assign(shuffled.begin() + begin, shuffled.begin() + end);
        return d;
    };
    return {slice(0, n_train, "train"), slice(n_train, n_train + n_test, "test"),
            slice(n_train + n_test, static_cast<std::int64_t>(n), "validation")};
}

// --- CSV persistence -------------------------------------------------------

namespace detail {

// Shortest decimal form that parses back to the identical double.
inline std::string shortest_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double_field(const std::string& text, const char* field, std::size_t line) {
    double v = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw DataError("line " + std::to_string(line) + ": field " + field +
                        " is not a number: '" + text + "'");
    return v;
}

}  // namespace detail

inline const char* kCsvHeader = "d1,d2,p_watts,eta_percent,fidelity";

inline std::string dataset_to_csv(const Dataset& data) {
    std::string out = kCsvHeader;
    out += '\n';
    for (const Sample& s : data.samples) {
        out += detail::shortest_double(s.point.d1);
        out += ',';
        out += detail::shortest_double(s.point.d2);
        out += ',';
        out += detail::shortest_double(s.point.p);
        out += ',';
        out += detail::shortest_double(s.eta);
        out += ',';
        out += fidelity_tag(s.fidelity);
        out += '\n';
    }
    return out;
}

// Content fingerprint used in provenance sidecars and model metadata.
inline std::string dataset_digest(const Dataset& data) {
    return fnv1a_hex(dataset_to_csv(data));
}

// Writes the dataset plus a `<path>.provenance.json` sidecar recording how
// the rows were produced.
inline void write_csv(const Dataset& data, const std::string& path) {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot open " + path + " for writing");
        out << dataset_to_csv(data);
        if (!out) throw DataError("write failed: " + path);
    }
    std::string side;
    side += "{\"mode\":\"" + data.provenance.mode + "\"";
    side += ",\"seed\":" + std::to_string(data.provenance.seed);
    side += ",\"oracle_digest\":\"" + data.provenance.oracle_digest + "\"";
    side += ",\"rows\":" + std::to_string(data.samples.size());
    side += ",\"content_digest\":\"" + dataset_digest(data) + "\"}";
    side += '\n';
    std::ofstream out(path + ".provenance.json", std::ios::binary);
    if (!out) throw DataError("cannot open " + path + ".provenance.json for writing");
    out << side;
}

inline Dataset read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader)
        throw DataError(path + ": bad header '" + line + "', expected '" + kCsvHeader + "'");

    Dataset ds;
    ds.provenance.mode = "csv:" + path;
    std::set<std::tuple<double, double, double>> seen;
    bool first_row = true;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 5)
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected 5 fields, got " +
                            std::to_string(fields.size()));

        Sample s;
        s.point.d1 = detail::parse_double_field(fields[0], "d1", line_no);
        s.point.d2 = detail::parse_double_field(fields[1], "d2", line_no);
        s.point.p = detail::parse_double_field(fields[2], "p_watts", line_no);
        s.eta = detail::parse_double_field(fields[3], "eta_percent", line_no);

        if (fields[4] == "sim") s.fidelity = Fidelity::Simulation;
        else if (fields[4] == "exp") s.fidelity = Fidelity::Experimental;
        else throw DataError(path + ": line " + std::to_string(line_no) + ": fidelity must be sim or exp, got '" + fields[4] + "'");

        auto range_check = [&](double v, double lo, double hi, const char* field) {
            if (!(v >= lo && v <= hi))
                throw RangeError(path + ": line " + std::to_string(line_no) + ": " + field + " = " +
                                 detail::format_double(v) + " outside [" + detail::format_double(lo) +
                                 ", " + detail::format_double(hi) + "]");
        };
        range_check(s.point.d1, ranges::d1_min, ranges::d1_max, "d1");
        range_check(s.point.d2, ranges::d2_min, ranges::d2_max, "d2");
        range_check(s.point.p, ranges::p_min, ranges::p_max, "p_watts");
        if (!(s.eta > 0.0 && s.eta <= 100.0))
            throw RangeError(path + ": line " + std::to_string(line_no) + ": eta_percent = " +
                             detail::format_double(s.eta) + " outside (0, 100]");

        if (first_row) {
            ds.fidelity = s.fidelity;
            first_row = false;
        } else if (s.fidelity != ds.fidelity) {
            throw DataError(path + ": line " + std::to_string(line_no) +
                            ": mixed fidelity tags in one dataset");
        }
        if (!seen.insert({s.point.d1, s.point.d2, s.point.p}).second)
            throw DataError(path + ": line " + std::to_string(line_no) + ": duplicate operating point");
        ds.samples.push_back(s);
    }
    if (ds.samples.empty()) throw DataError(path + ": no data rows");
    return ds;
}

}  // namespace dabopt
