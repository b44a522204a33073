#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace alkd {

/// Bad metric input: score out of range, empty or mismatched lists, or an
/// undefined correlation.
class MetricError : public std::domain_error {
   public:
    using std::domain_error::domain_error;
};

enum class BinScheme { seven, five, three, two_with_neutral, two_without_neutral };

BinScheme parse_bin_scheme(const std::string& name);
std::string to_string(BinScheme scheme);

/// Sentiment score in [-3, 3] to a class id.
///   seven: round half away from zero, classes -3..3
///   five:  clamp to [-2, 2], then round, classes -2..2
///   three: sign, exact 0 is neutral (-1, 0, 1)
///   two_with_neutral:    1 iff score >= 0, else 0
///   two_without_neutral: nullopt at 0 (excluded), else 1 iff score > 0
std::optional<int> bin_sentiment(double score, BinScheme scheme);

/// Fixed binning convention, written into report headers.
std::string binning_convention();

double mae(std::span<const double> pred, std::span<const double> gold);

/// Sample Pearson correlation. Throws MetricError if either list is constant.
double pearson(std::span<const double> pred, std::span<const double> gold);

/// Accuracy after binning both lists; pairs whose gold bin is excluded are
/// skipped, and a prediction in an excluded bin counts as wrong.
double binned_accuracy(std::span<const double> pred, std::span<const double> gold, BinScheme scheme);

/// Fraction of equal entries.
double accuracy(std::span<const int> pred, std::span<const int> gold);

struct Aggregate {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
};

Aggregate aggregate(std::span<const double> values);

/// One metric across seeds. A seed where the metric is undefined (e.g. ρ of
/// a constant predictor) holds nullopt; mean and σ cover the defined seeds.
struct MetricSeries {
    std::string name;
    std::vector<std::optional<double>> per_seed;
    std::optional<double> mean;
    std::optional<double> std;
    std::string note;

    void finalize();
    bool operator==(const MetricSeries&) const = default;
};

struct MetricsReport {
    std::string task;
    std::vector<std::uint64_t> seeds;
    std::vector<MetricSeries> metrics;
    std::string std_kind = "population";
    std::string binning = binning_convention();

    const MetricSeries& metric(const std::string& name) const;
    bool operator==(const MetricsReport&) const = default;
};

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);
void write_report(const MetricsReport& report, const std::string& path);
MetricsReport read_report(const std::string& path);

/// Several task reports in one file: {"reports": [...]}.
std::string reports_to_json(const std::vector<MetricsReport>& reports);
std::vector<MetricsReport> reports_from_json(const std::string& text);

}  // namespace alkd
