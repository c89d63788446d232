#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "wafertopo/error.hpp"
#include "wafertopo/ingest.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/persist.hpp"

namespace wafertopo::persist {

std::string to_string(FiltrationMode m) { return m == FiltrationMode::Sublevel ? "sublevel" : "distance"; }

FiltrationMode filtration_mode_from_string(const std::string& s) {
  if (s == "sublevel") return FiltrationMode::Sublevel;
  if (s == "distance") return FiltrationMode::Distance;
  throw ValidationError("unknown filtration mode '" + s + "' (expected sublevel|distance)");
}

std::size_t PersistenceDiagram::infinite_count() const {
  return static_cast<std::size_t>(
      std::count_if(intervals.begin(), intervals.end(), [](const Interval& i) { return i.infinite(); }));
}

namespace {

constexpr std::uint32_t kNone = 0xffffffffu;

struct UnionFind {
  std::vector<std::uint32_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<std::uint32_t>(i);
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
};

void push_interval(PersistenceDiagram& d, double birth, double death, bool keep_zero) {
  if (!keep_zero && birth == death) return;
  d.intervals.push_back({birth, death});
}

}  // namespace

DiagramPair compute_persistence(const CubicalFiltration& f, const PersistenceOptions& opt) {
  DiagramPair out;
  const std::size_t n = f.size();
  if (n == 0) return out;
  const std::vector<std::uint32_t> order = f.order();
  std::vector<std::uint32_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[order[i]] = static_cast<std::uint32_t>(i);

  // H0: union-find with the elder rule. Roots are always the oldest vertex of
  // their component, so comparing root positions picks the survivor.
  const std::size_t nv = f.vertex_count();
  UnionFind uf(nv);
  std::vector<std::uint8_t> negative_edge(n, 0);
  for (std::uint32_t cell : order) {
    if (f.dim(cell) != 1) continue;
    const auto b = f.boundary(cell);
    std::uint32_t ra = uf.find(static_cast<std::uint32_t>(b[0]));
    std::uint32_t rb = uf.find(static_cast<std::uint32_t>(b[1]));
    if (ra == rb) continue;
    if (pos[ra] > pos[rb]) std::swap(ra, rb);  // ra older
    push_interval(out.h0, f.value(rb), f.value(cell), opt.keep_zero_persistence);
    uf.parent[rb] = ra;
    negative_edge[cell] = 1;
  }
  for (std::uint32_t v = 0; v < nv; ++v)
    if (uf.find(v) == v) out.h0.intervals.push_back({f.value(v), kInf});

  // H1: reduce square columns in filtration order. Negative edges already
  // died in H0 and can never be a pivot, so they are removed up front.
  std::vector<std::uint32_t> pivot_owner(n, kNone);  // edge pos -> slot in reduced
  std::vector<std::vector<std::uint32_t>> reduced;
  std::vector<std::uint8_t> paired_edge(n, 0);
  std::vector<std::uint32_t> col, tmp;
  for (std::uint32_t cell : order) {
    if (f.dim(cell) != 2) continue;
    col.clear();
    for (std::size_t e : f.boundary(cell))
      if (!negative_edge[e]) col.push_back(pos[e]);
    std::sort(col.begin(), col.end());
    while (!col.empty()) {
      const std::uint32_t owner = pivot_owner[col.back()];
      if (owner == kNone) break;
      const auto& other = reduced[owner];
      tmp.clear();
      std::set_symmetric_difference(col.begin(), col.end(), other.begin(), other.end(), std::back_inserter(tmp));
      col.swap(tmp);
    }
    if (col.empty()) continue;  // would be an H2 class; cannot happen on a planar grid
    const std::uint32_t low = col.back();
    const std::uint32_t edge = order[low];
    pivot_owner[low] = static_cast<std::uint32_t>(reduced.size());
    reduced.push_back(col);
    paired_edge[edge] = 1;
    push_interval(out.h1, f.value(edge), f.value(cell), opt.keep_zero_persistence);
  }
  for (std::uint32_t cell : order)
    if (f.dim(cell) == 1 && !negative_edge[cell] && !paired_edge[cell]) out.h1.intervals.push_back({f.value(cell), kInf});

  std::sort(out.h0.intervals.begin(), out.h0.intervals.end());
  std::sort(out.h1.intervals.begin(), out.h1.intervals.end());
  return out;
}

namespace {

TdaSignature signature_of(const GrayImage& img) {
  TdaSignature s;
  s.diagrams = compute_persistence(build_filtration(img));
  const auto [lo, hi] = std::minmax_element(img.values.begin(), img.values.end());
  s.min_value = *lo;
  s.max_value = *hi;
  return s;
}

}  // namespace

TdaSignature signature_sublevel(const GrayImage& image) { return signature_of(image); }

TdaSignature signature_distance(const WaferGrid& grid) { return signature_of(distance_filtration(grid)); }

TdaSignature tda_signature(const ingest::CorpusItem& item, FiltrationMode mode) {
  if (mode == FiltrationMode::Sublevel) return signature_sublevel(item.image);
  if (!item.grid) throw ValidationError("distance mode needs a wafer grid, item '" + item.id + "' has none");
  return signature_distance(*item.grid);
}

std::string format_diagram_csv(const DiagramPair& d) {
  std::string out = "dim,birth,death\n";
  char buf[96];
  for (const auto* diag : {&d.h0, &d.h1})
    for (const auto& iv : diag->intervals) {
      if (iv.infinite())
        std::snprintf(buf, sizeof buf, "%d,%.17g,inf\n", diag->dim, iv.birth);
      else
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", diag->dim, iv.birth, iv.death);
      out += buf;
    }
  return out;
}

DiagramPair parse_diagram_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0] != std::vector<std::string>{"dim", "birth", "death"})
    throw FormatError("diagram csv: expected header dim,birth,death");
  DiagramPair d;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 3) throw FormatError("diagram csv: row " + std::to_string(i) + " needs 3 fields");
    Interval iv;
    try {
      iv.birth = std::stod(r[1]);
      iv.death = r[2] == "inf" ? kInf : std::stod(r[2]);
    } catch (const std::exception&) {
      throw FormatError("diagram csv: bad number on row " + std::to_string(i));
    }
    if (r[0] == "0")
      d.h0.intervals.push_back(iv);
    else if (r[0] == "1")
      d.h1.intervals.push_back(iv);
    else
      throw FormatError("diagram csv: dim must be 0 or 1 on row " + std::to_string(i));
  }
  return d;
}

}  // namespace wafertopo::persist
