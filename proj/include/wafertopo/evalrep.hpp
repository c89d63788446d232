#pragma once

#include <map>
#include <string>
#include <vector>

namespace wafertopo::evalrep {

constexpr int kNoise = -1;

/// Clusters x labels contingency table. Rows follow ascending cluster id with
/// the noise row (if any) last; label columns are sorted.
struct CrossTab {
  std::vector<int> clusters;
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t row_sum(std::size_t r) const;
  std::size_t col_sum(std::size_t c) const;
  std::size_t total() const;
};

/// Throws ValidationError when an id has no label or the lengths differ.
CrossTab crosstab(const std::vector<std::string>& ids, const std::vector<int>& assignments,
                  const std::map<std::string, std::string>& labels);

/// Per row: labels holding at least `threshold` of the row, by descending
/// share (ties by name), joined by " | "; falls back to the top label.
std::vector<std::string> name_clusters(const CrossTab& tab, double threshold = 0.10);

/// Sum over non-noise rows of the largest count, over the non-noise total.
double purity(const CrossTab& tab);

/// Adjusted Rand index between two partitions given as integer labels.
double ari(const std::vector<int>& a, const std::vector<int>& b);
/// ARI over the items whose assignment is not noise.
double ari_excluding_noise(const std::vector<int>& assignments, const std::vector<int>& truth);

double largest_fraction(const std::vector<int>& assignments);
double noise_fraction(const std::vector<int>& assignments);
std::size_t n_clusters(const std::vector<int>& assignments);

/// Every cluster (noise included as its own group) predicts its majority
/// label; returns the mean per-label recall.
double balanced_accuracy(const std::vector<int>& assignments, const std::vector<std::string>& truth);

/// Integer codes for string labels in sorted label order.
std::vector<int> encode_labels(const std::vector<std::string>& labels);

struct ClusterSummary {
  int id = 0;  // kNoise for the noise row
  std::string name;
  std::size_t size = 0;
  std::map<std::string, std::size_t> labels;
  std::map<std::string, double> cluster_share;  // count / cluster size
  std::map<std::string, double> label_share;    // count / label total
};

struct Metrics {
  double purity = 0.0;
  double ari = 0.0;
  double db_score = 0.0;
  double noise_fraction = 0.0;
  double largest_cluster_fraction = 0.0;
  std::size_t n_clusters = 0;
};

struct Report {
  std::vector<ClusterSummary> clusters;
  Metrics metrics;
  std::string config_json = "{}";
};

Report make_report(const std::vector<std::string>& ids, const std::vector<int>& assignments,
                   const std::map<std::string, std::string>& labels, double db_score, const std::string& config_json = "{}",
                   double threshold = 0.10);

std::string report_json(const Report& r);
/// Checks the published schema; throws FormatError naming the first problem.
void validate_report_json(const std::string& text);
Report parse_report_json(const std::string& text);

/// Rows `cluster,label,count` for every cell, noise labelled NOISE.
std::string histogram_csv(const CrossTab& tab);
/// One bar panel per cluster.
std::string histogram_svg(const CrossTab& tab, const std::vector<std::string>& names);

}  // namespace wafertopo::evalrep
