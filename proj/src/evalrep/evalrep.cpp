#include "wafertopo/evalrep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "wafertopo/error.hpp"
#include "wafertopo/io.hpp"

namespace wafertopo::evalrep {

using json = nlohmann::json;

std::size_t CrossTab::row_sum(std::size_t r) const {
  std::size_t s = 0;
  for (std::size_t v : counts[r]) s += v;
  return s;
}

std::size_t CrossTab::col_sum(std::size_t c) const {
  std::size_t s = 0;
  for (const auto& row : counts) s += row[c];
  return s;
}

std::size_t CrossTab::total() const {
  std::size_t s = 0;
  for (std::size_t r = 0; r < counts.size(); ++r) s += row_sum(r);
  return s;
}

CrossTab crosstab(const std::vector<std::string>& ids, const std::vector<int>& assignments,
                  const std::map<std::string, std::string>& labels) {
  if (ids.size() != assignments.size()) throw ValidationError("crosstab: ids and assignments differ in length");
  std::vector<std::string> lab(ids.size());
  std::set<std::string> names;
  std::set<int> cl;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = labels.find(ids[i]);
    if (it == labels.end()) throw ValidationError("crosstab: no label for id " + ids[i]);
    lab[i] = it->second;
    names.insert(lab[i]);
    if (assignments[i] < kNoise) throw ValidationError("crosstab: bad cluster id");
    cl.insert(assignments[i]);
  }
  CrossTab t;
  t.labels.assign(names.begin(), names.end());
  for (int c : cl)
    if (c != kNoise) t.clusters.push_back(c);
  if (cl.count(kNoise)) t.clusters.push_back(kNoise);
  t.counts.assign(t.clusters.size(), std::vector<std::size_t>(t.labels.size(), 0));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto r = static_cast<std::size_t>(std::find(t.clusters.begin(), t.clusters.end(), assignments[i]) - t.clusters.begin());
    const auto c = static_cast<std::size_t>(std::lower_bound(t.labels.begin(), t.labels.end(), lab[i]) - t.labels.begin());
    ++t.counts[r][c];
  }
  return t;
}

std::vector<std::string> name_clusters(const CrossTab& tab, double threshold) {
  std::vector<std::string> out;
  for (std::size_t r = 0; r < tab.counts.size(); ++r) {
    const double size = static_cast<double>(tab.row_sum(r));
    std::vector<std::pair<std::size_t, std::string>> cand;
    for (std::size_t c = 0; c < tab.labels.size(); ++c)
      if (tab.counts[r][c] > 0) cand.emplace_back(tab.counts[r][c], tab.labels[c]);
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::string name;
    for (const auto& [n, l] : cand)
      if (size > 0 && static_cast<double>(n) / size >= threshold) name += (name.empty() ? "" : " | ") + l;
    if (name.empty() && !cand.empty()) name = cand.front().second;
    out.push_back(name);
  }
  return out;
}

double purity(const CrossTab& tab) {
  std::size_t hit = 0, n = 0;
  for (std::size_t r = 0; r < tab.counts.size(); ++r) {
    if (tab.clusters[r] == kNoise) continue;
    hit += *std::max_element(tab.counts[r].begin(), tab.counts[r].end());
    n += tab.row_sum(r);
  }
  if (n == 0) throw ValidationError("purity: no clustered items");
  return static_cast<double>(hit) / static_cast<double>(n);
}

double ari(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ValidationError("ari: partitions differ in length");
  if (a.empty()) throw ValidationError("ari: empty input");
  std::map<std::pair<int, int>, double> cell;
  std::map<int, double> ra, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++cell[{a[i], b[i]}];
    ++ra[a[i]];
    ++cb[b[i]];
  }
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : cell) index += c2(v);
  for (const auto& [k, v] : ra) sa += c2(v);
  for (const auto& [k, v] : cb) sb += c2(v);
  const double total = c2(static_cast<double>(a.size()));
  const double expected = total > 0 ? sa * sb / total : 0.0;
  const double maxi = 0.5 * (sa + sb);
  // both partitions trivial in the same way: treat as perfect agreement
  if (maxi == expected) return 1.0;
  return (index - expected) / (maxi - expected);
}

double ari_excluding_noise(const std::vector<int>& assignments, const std::vector<int>& truth) {
  if (assignments.size() != truth.size()) throw ValidationError("ari: partitions differ in length");
  std::vector<int> a, b;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] != kNoise) {
      a.push_back(assignments[i]);
      b.push_back(truth[i]);
    }
  if (a.empty()) return 0.0;
  return ari(a, b);
}

double largest_fraction(const std::vector<int>& assignments) {
  if (assignments.empty()) throw ValidationError("largest_fraction: empty input");
  std::map<int, std::size_t> h;
  for (int a : assignments)
    if (a != kNoise) ++h[a];
  std::size_t mx = 0;
  for (const auto& [k, v] : h) mx = std::max(mx, v);
  return static_cast<double>(mx) / static_cast<double>(assignments.size());
}

double noise_fraction(const std::vector<int>& assignments) {
  if (assignments.empty()) throw ValidationError("noise_fraction: empty input");
  return static_cast<double>(std::count(assignments.begin(), assignments.end(), kNoise)) /
         static_cast<double>(assignments.size());
}

std::size_t n_clusters(const std::vector<int>& assignments) {
  std::set<int> s;
  for (int a : assignments)
    if (a != kNoise) s.insert(a);
  return s.size();
}

double balanced_accuracy(const std::vector<int>& assignments, const std::vector<std::string>& truth) {
  if (assignments.size() != truth.size()) throw ValidationError("balanced_accuracy: length mismatch");
  if (assignments.empty()) throw ValidationError("balanced_accuracy: empty input");
  std::map<int, std::map<std::string, std::size_t>> per;
  for (std::size_t i = 0; i < truth.size(); ++i) ++per[assignments[i]][truth[i]];
  std::map<int, std::string> predict;
  for (const auto& [c, h] : per) {
    std::string best;
    std::size_t n = 0;
    for (const auto& [l, k] : h)
      if (k > n) {
        best = l;
        n = k;
      }
    predict[c] = best;
  }
  std::map<std::string, std::pair<std::size_t, std::size_t>> recall;  // label -> (hits, total)
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& r = recall[truth[i]];
    ++r.second;
    if (predict[assignments[i]] == truth[i]) ++r.first;
  }
  double s = 0;
  for (const auto& [l, r] : recall) s += static_cast<double>(r.first) / static_cast<double>(r.second);
  return s / static_cast<double>(recall.size());
}

std::vector<int> encode_labels(const std::vector<std::string>& labels) {
  std::vector<std::string> u = labels;
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(static_cast<int>(std::lower_bound(u.begin(), u.end(), l) - u.begin()));
  return out;
}

Report make_report(const std::vector<std::string>& ids, const std::vector<int>& assignments,
                   const std::map<std::string, std::string>& labels, double db_score, const std::string& config_json,
                   double threshold) {
  if (ids.empty()) throw ValidationError("report: empty input");
  const CrossTab tab = crosstab(ids, assignments, labels);
  const auto names = name_clusters(tab, threshold);
  Report r;
  for (std::size_t row = 0; row < tab.clusters.size(); ++row) {
    ClusterSummary s;
    s.id = tab.clusters[row];
    s.name = names[row];
    s.size = tab.row_sum(row);
    for (std::size_t c = 0; c < tab.labels.size(); ++c) {
      const std::size_t k = tab.counts[row][c];
      if (k == 0) continue;
      s.labels[tab.labels[c]] = k;
      s.cluster_share[tab.labels[c]] = static_cast<double>(k) / static_cast<double>(s.size);
      s.label_share[tab.labels[c]] = static_cast<double>(k) / static_cast<double>(tab.col_sum(c));
    }
    r.clusters.push_back(std::move(s));
  }
  std::vector<std::string> truth;
  for (const auto& id : ids) truth.push_back(labels.at(id));
  r.metrics.n_clusters = n_clusters(assignments);
  r.metrics.purity = r.metrics.n_clusters > 0 ? purity(tab) : 0.0;
  r.metrics.ari = ari_excluding_noise(assignments, encode_labels(truth));
  r.metrics.db_score = db_score;
  r.metrics.noise_fraction = noise_fraction(assignments);
  r.metrics.largest_cluster_fraction = largest_fraction(assignments);
  r.config_json = config_json;
  return r;
}

namespace {

// JSON has no infinity; an unusable score is written as null.
json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string report_json(const Report& r) {
  json j;
  j["clusters"] = json::array();
  for (const auto& c : r.clusters) {
    json cj;
    cj["id"] = c.id == kNoise ? json("NOISE") : json(c.id);
    cj["name"] = c.name;
    cj["size"] = c.size;
    cj["labels"] = c.labels;
    cj["cluster_share"] = c.cluster_share;
    cj["label_share"] = c.label_share;
    j["clusters"].push_back(cj);
  }
  j["metrics"] = {{"purity", r.metrics.purity},
                  {"ari", r.metrics.ari},
                  {"db_score", num_or_null(r.metrics.db_score)},
                  {"noise_fraction", r.metrics.noise_fraction},
                  {"largest_cluster_fraction", r.metrics.largest_cluster_fraction},
                  {"n_clusters", r.metrics.n_clusters}};
  j["config"] = json::parse(r.config_json);
  return j.dump(2) + "\n";
}

void validate_report_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: not JSON: ") + e.what());
  }
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw FormatError("report: " + what);
  };
  need(j.is_object(), "top level must be an object");
  need(j.contains("clusters") && j["clusters"].is_array(), "clusters must be an array");
  need(j.contains("metrics") && j["metrics"].is_object(), "metrics must be an object");
  need(j.contains("config") && j["config"].is_object(), "config must be an object");
  std::size_t total = 0;
  for (const auto& c : j["clusters"]) {
    need(c.is_object(), "cluster entries must be objects");
    need(c.contains("id") && (c["id"].is_number_integer() || c["id"] == "NOISE"), "cluster id must be an integer or NOISE");
    need(c.contains("name") && c["name"].is_string(), "cluster name must be a string");
    need(c.contains("size") && c["size"].is_number_unsigned(), "cluster size must be a non-negative integer");
    need(c.contains("labels") && c["labels"].is_object(), "cluster labels must be an object");
    std::size_t s = 0;
    for (const auto& [k, v] : c["labels"].items()) {
      need(v.is_number_unsigned(), "label counts must be non-negative integers");
      s += v.get<std::size_t>();
    }
    need(s == c["size"].get<std::size_t>(), "label counts must sum to the cluster size");
    total += s;
  }
  const auto& m = j["metrics"];
  for (const char* k : {"purity", "ari", "noise_fraction", "largest_cluster_fraction"})
    need(m.contains(k) && m[k].is_number(), std::string("metric ") + k + " must be a number");
  need(m.contains("db_score") && (m["db_score"].is_number() || m["db_score"].is_null()), "db_score must be a number or null");
  need(m.contains("n_clusters") && m["n_clusters"].is_number_unsigned(), "n_clusters must be a non-negative integer");
  for (const char* k : {"purity", "noise_fraction", "largest_cluster_fraction"}) {
    const double v = m[k].get<double>();
    need(v >= 0.0 && v <= 1.0, std::string(k) + " must lie in [0, 1]");
  }
  const double a = m["ari"].get<double>();
  need(a >= -1.0 && a <= 1.0, "ari must lie in [-1, 1]");
  need(total > 0, "report covers no items");
}

Report parse_report_json(const std::string& text) {
  validate_report_json(text);
  const json j = json::parse(text);
  Report r;
  for (const auto& c : j["clusters"]) {
    ClusterSummary s;
    s.id = c["id"].is_string() ? kNoise : c["id"].get<int>();
    s.name = c["name"].get<std::string>();
    s.size = c["size"].get<std::size_t>();
    s.labels = c["labels"].get<std::map<std::string, std::size_t>>();
    if (c.contains("cluster_share")) s.cluster_share = c["cluster_share"].get<std::map<std::string, double>>();
    if (c.contains("label_share")) s.label_share = c["label_share"].get<std::map<std::string, double>>();
    r.clusters.push_back(std::move(s));
  }
  const auto& m = j["metrics"];
  r.metrics.purity = m["purity"].get<double>();
  r.metrics.ari = m["ari"].get<double>();
  r.metrics.db_score = m["db_score"].is_null() ? std::numeric_limits<double>::infinity() : m["db_score"].get<double>();
  r.metrics.noise_fraction = m["noise_fraction"].get<double>();
  r.metrics.largest_cluster_fraction = m["largest_cluster_fraction"].get<double>();
  r.metrics.n_clusters = m["n_clusters"].get<std::size_t>();
  r.config_json = j["config"].dump();
  return r;
}

std::string histogram_csv(const CrossTab& tab) {
  std::string out = format_csv_row({"cluster", "label", "count"});
  for (std::size_t r = 0; r < tab.clusters.size(); ++r)
    for (std::size_t c = 0; c < tab.labels.size(); ++c)
      out += format_csv_row({tab.clusters[r] == kNoise ? std::string("NOISE") : std::to_string(tab.clusters[r]),
                             tab.labels[c], std::to_string(tab.counts[r][c])});
  return out;
}

std::string histogram_svg(const CrossTab& tab, const std::vector<std::string>& names) {
  const int bar = 18, gap = 4, panel_h = 120, top = 24, left = 40;
  const int plot_w = static_cast<int>(tab.labels.size()) * (bar + gap);
  const int width = left + plot_w + 20;
  const int height = static_cast<int>(tab.clusters.size()) * (panel_h + top + 40) + 10;
  auto esc = [](const std::string& s) {
    std::string o;
    for (char ch : s) {
      if (ch == '&') o += "&amp;";
      else if (ch == '<') o += "&lt;";
      else if (ch == '>') o += "&gt;";
      else o += ch;
    }
    return o;
  };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  int y0 = 10;
  for (std::size_t r = 0; r < tab.clusters.size(); ++r) {
    const std::size_t mx = std::max<std::size_t>(1, *std::max_element(tab.counts[r].begin(), tab.counts[r].end()));
    const std::string title = (tab.clusters[r] == kNoise ? std::string("NOISE") : "Cluster " + std::to_string(tab.clusters[r])) +
                              " (" + std::to_string(tab.row_sum(r)) + "): " + (r < names.size() ? names[r] : "");
    o << "  <text x=\"4\" y=\"" << y0 + 12 << "\" font-size=\"12\">" << esc(title) << "</text>\n";
    const int base = y0 + top + panel_h;
    o << "  <line x1=\"" << left << "\" y1=\"" << base << "\" x2=\"" << left + plot_w << "\" y2=\"" << base
      << "\" stroke=\"black\"/>\n";
    for (std::size_t c = 0; c < tab.labels.size(); ++c) {
      const int h = static_cast<int>(std::lround(static_cast<double>(tab.counts[r][c]) / static_cast<double>(mx) * panel_h));
      const int x = left + static_cast<int>(c) * (bar + gap);
      o << "  <rect x=\"" << x << "\" y=\"" << base - h << "\" width=\"" << bar << "\" height=\"" << h
        << "\" fill=\"#21918c\"><title>" << esc(tab.labels[c]) << ": " << tab.counts[r][c] << "</title></rect>\n";
      o << "  <text x=\"" << x + bar / 2 << "\" y=\"" << base + 10 << "\" text-anchor=\"end\" transform=\"rotate(-45 "
        << x + bar / 2 << " " << base + 10 << ")\">" << esc(tab.labels[c]) << "</text>\n";
    }
    y0 += panel_h + top + 40;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace wafertopo::evalrep
