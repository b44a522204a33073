#include "alkd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace alkd {

BinScheme parse_bin_scheme(const std::string& name) {
    if (name == "7") return BinScheme::seven;
    if (name == "5") return BinScheme::five;
    if (name == "3") return BinScheme::three;
    if (name == "2_with_neutral") return BinScheme::two_with_neutral;
    if (name == "2_without_neutral") return BinScheme::two_without_neutral;
    throw MetricError("unknown binning scheme '" + name + "'");
}

std::string to_string(BinScheme scheme) {
    switch (scheme) {
        case BinScheme::seven: return "7";
        case BinScheme::five: return "5";
        case BinScheme::three: return "3";
        case BinScheme::two_with_neutral: return "2_with_neutral";
        case BinScheme::two_without_neutral: return "2_without_neutral";
    }
    return "?";
}

std::optional<int> bin_sentiment(double score, BinScheme scheme) {
    if (!(score >= -3.0 && score <= 3.0)) {
        throw MetricError("sentiment score " + std::to_string(score) + " outside [-3, 3]");
    }
    switch (scheme) {
        case BinScheme::seven: return static_cast<int>(std::round(score));
        case BinScheme::five: return static_cast<int>(std::round(std::clamp(score, -2.0, 2.0)));
        case BinScheme::three: return score > 0.0 ? 1 : (score < 0.0 ? -1 : 0);
        case BinScheme::two_with_neutral: return score >= 0.0 ? 1 : 0;
        case BinScheme::two_without_neutral:
            if (score == 0.0) return std::nullopt;
            return score > 0.0 ? 1 : 0;
    }
    return std::nullopt;
}

std::string binning_convention() {
    return "7: round half away from zero in [-3,3]; 5: clamp to [-2,2] then round; 3: sign with 0 neutral; "
           "2_with_neutral: positive iff score >= 0; 2_without_neutral: score 0 excluded, positive iff score > 0; "
           "predictions clipped to [-3,3] before binning";
}

namespace {

void check_pair(std::span<const double> pred, std::span<const double> gold, const char* what, std::size_t min_n) {
    if (pred.size() != gold.size()) {
        throw MetricError(std::string(what) + ": " + std::to_string(pred.size()) + " predictions vs " +
                          std::to_string(gold.size()) + " gold values");
    }
    if (pred.size() < min_n) {
        throw MetricError(std::string(what) + ": needs at least " + std::to_string(min_n) + " values");
    }
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> gold) {
    check_pair(pred, gold, "mae", 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - gold[i]);
    return sum / static_cast<double>(pred.size());
}

double pearson(std::span<const double> pred, std::span<const double> gold) {
    check_pair(pred, gold, "pearson", 2);
    const double n = static_cast<double>(pred.size());
    double mp = 0.0, mg = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        mp += pred[i];
        mg += gold[i];
    }
    mp /= n;
    mg /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dx = pred[i] - mp, dy = gold[i] - mg;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw MetricError(std::string("pearson correlation undefined: ") + (sxx == 0.0 ? "predictions" : "gold values") +
                          " are constant");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double binned_accuracy(std::span<const double> pred, std::span<const double> gold, BinScheme scheme) {
    check_pair(pred, gold, "binned_accuracy", 1);
    std::size_t counted = 0, correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto g = bin_sentiment(gold[i], scheme);
        if (!g) continue;
        ++counted;
        const auto p = bin_sentiment(std::clamp(pred[i], -3.0, 3.0), scheme);
        if (p && *p == *g) ++correct;
    }
    if (counted == 0) throw MetricError("binned_accuracy: every gold score is excluded by scheme " + to_string(scheme));
    return static_cast<double>(correct) / static_cast<double>(counted);
}

double accuracy(std::span<const int> pred, std::span<const int> gold) {
    if (pred.size() != gold.size() || pred.empty()) throw MetricError("accuracy: empty or mismatched lists");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == gold[i];
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

Aggregate aggregate(std::span<const double> values) {
    if (values.empty()) throw MetricError("aggregate: no values");
    Aggregate a;
    for (double v : values) a.mean += v;
    a.mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(values.size()));
    return a;
}

void MetricSeries::finalize() {
    std::vector<double> defined;
    for (const auto& v : per_seed) {
        if (v) defined.push_back(*v);
    }
    if (defined.empty()) {
        mean.reset();
        std.reset();
        return;
    }
    const auto a = aggregate(defined);
    mean = a.mean;
    std = a.std;
}

const MetricSeries& MetricsReport::metric(const std::string& name) const {
    for (const auto& m : metrics) {
        if (m.name == name) return m;
    }
    throw MetricError("report for task '" + task + "' has no metric '" + name + "'");
}

namespace {

using json = nlohmann::ordered_json;

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

json report_json(const MetricsReport& r) {
    json j;
    j["task"] = r.task;
    j["std"] = r.std_kind;
    j["binning"] = r.binning;
    j["seeds"] = r.seeds;
    json metrics = json::array();
    for (const auto& m : r.metrics) {
        json jm;
        jm["name"] = m.name;
        json per = json::array();
        for (const auto& v : m.per_seed) per.push_back(opt(v));
        jm["per_seed"] = per;
        jm["mean"] = opt(m.mean);
        jm["std"] = opt(m.std);
        if (!m.note.empty()) jm["note"] = m.note;
        metrics.push_back(jm);
    }
    j["metrics"] = metrics;
    return j;
}

MetricsReport report_from(const json& j) {
    MetricsReport r;
    try {
        r.task = j.at("task").get<std::string>();
        r.std_kind = j.at("std").get<std::string>();
        r.binning = j.at("binning").get<std::string>();
        r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        for (const auto& jm : j.at("metrics")) {
            MetricSeries m;
            m.name = jm.at("name").get<std::string>();
            for (const auto& v : jm.at("per_seed")) m.per_seed.push_back(opt_from(v));
            m.mean = opt_from(jm.at("mean"));
            m.std = opt_from(jm.at("std"));
            if (jm.contains("note")) m.note = jm.at("note").get<std::string>();
            r.metrics.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw MetricError(std::string("malformed metrics report: ") + e.what());
    }
    return r;
}

json parse(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw MetricError(std::string("malformed metrics report: ") + e.what());
    }
}

}  // namespace

std::string report_to_json(const MetricsReport& report) { return report_json(report).dump(2); }

MetricsReport report_from_json(const std::string& text) { return report_from(parse(text)); }

std::string reports_to_json(const std::vector<MetricsReport>& reports) {
    json j;
    j["reports"] = json::array();
    for (const auto& r : reports) j["reports"].push_back(report_json(r));
    return j.dump(2);
}

std::vector<MetricsReport> reports_from_json(const std::string& text) {
    const json j = parse(text);
    if (!j.contains("reports") || !j["reports"].is_array()) throw MetricError("malformed report file: no 'reports'");
    std::vector<MetricsReport> out;
    for (const auto& r : j["reports"]) out.push_back(report_from(r));
    return out;
}

void write_report(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << report_to_json(report) << '\n';
}

MetricsReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return report_from_json(ss.str());
}

}  // namespace alkd
