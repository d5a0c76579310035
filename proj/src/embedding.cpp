#include "zstad/embedding.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace zstad {

namespace {

constexpr double kRenormTolerance = 1e-12;
constexpr double kFeasibleResidual = 1e-6;
constexpr double kPolishMargin = 1e-4;
constexpr double kWarnTolerance = 1e-6;

Vec normalized(const Vec& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("cannot normalize a zero or non-finite vector");
  return v / n;
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::vector<std::string> labels, std::vector<Vec> vectors,
                               std::vector<bool> seen_mask)
    : labels_(std::move(labels)), vectors_(std::move(vectors)), seen_(std::move(seen_mask)) {
  if (labels_.empty()) throw DomainError("embedding table needs at least one label");
  if (vectors_.size() != labels_.size() || seen_.size() != labels_.size())
    throw DomainError("labels, vectors and seen mask differ in length");
  dim_ = static_cast<int>(vectors_.front().size());
  if (dim_ < 1) throw DomainError("embedding dimension must be positive");

  std::unordered_set<std::string> names;
  for (std::size_t j = 0; j < labels_.size(); ++j) {
    if (labels_[j].empty()) throw DomainError("empty label name");
    if (!names.insert(labels_[j]).second) throw DomainError("duplicate label '" + labels_[j] + "'");
    if (vectors_[j].size() != dim_) throw DomainError("dimension mismatch for label '" + labels_[j] + "'");
    if (std::abs(vectors_[j].norm() - 1.0) > kRenormTolerance) vectors_[j] = normalized(vectors_[j]);
  }

  seen_rank_.assign(labels_.size(), -1);
  for (std::size_t j = 0; j < labels_.size(); ++j) {
    if (seen_[j]) {
      seen_rank_[j] = num_seen_++;
      seen_index_.push_back(static_cast<int>(j));
    }
  }
  if (num_seen_ < 1) throw DomainError("embedding table needs at least one seen label");
}

int EmbeddingTable::check(int index) const {
  if (index < 0 || index >= num_classes())
    throw DomainError("label index " + std::to_string(index) + " out of range");
  return index;
}

int EmbeddingTable::seen_rank(int index) const {
  const int r = seen_rank_[check(index)];
  if (r < 0) throw DomainError("label '" + labels_[index] + "' is not seen");
  return r;
}

int EmbeddingTable::seen_index(int rank) const {
  if (rank < 0 || rank >= num_seen_) throw DomainError("seen rank out of range");
  return seen_index_[rank];
}

const Vec& EmbeddingTable::background() const {
  if (!background_) throw DomainError("embedding table has no background vector");
  return *background_;
}

void EmbeddingTable::set_background(const Vec& v, BackgroundOrigin origin) {
  if (origin == BackgroundOrigin::kNone) {
    background_.reset();
    bg_origin_ = origin;
    return;
  }
  if (v.size() != dim_) throw DomainError("background dimension mismatch");
  background_ = std::abs(v.norm() - 1.0) > kRenormTolerance ? normalized(v) : v;
  bg_origin_ = origin;
}

bool EmbeddingTable::operator==(const EmbeddingTable& other) const {
  if (labels_ != other.labels_ || seen_ != other.seen_ || dim_ != other.dim_) return false;
  for (std::size_t j = 0; j < vectors_.size(); ++j)
    if (vectors_[j] != other.vectors_[j]) return false;
  if (background_.has_value() != other.background_.has_value()) return false;
  return !background_ || *background_ == *other.background_;
}

double cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DomainError("cosine_similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("cosine_similarity: zero-norm input");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double background_objective(const EmbeddingTable& table, const Vec& v, double delta_bg) {
  double total = 0.0;
  for (int j = 0; j < table.num_classes(); ++j) {
    const double excess = cosine_similarity(v, table.vector(j)) - delta_bg;
    if (excess > 0.0) total += excess * excess;
  }
  return total;
}

std::pair<Vec, BgSolverReport> solve_background_embedding(const EmbeddingTable& table,
                                                          double delta_bg,
                                                          const BgSolverOptions& opts) {
  if (!(delta_bg > 0.0 && delta_bg < 1.0)) throw DomainError("delta_bg must lie in (0, 1)");
  const int d = table.dim();

  Vec mean = Vec::Zero(d);
  for (int j = 0; j < table.num_classes(); ++j) mean += table.vector(j);
  mean /= table.num_classes();

  Vec v(d);
  if (mean.norm() < 1e-8) {
    Rng rng(opts.seed);
    do {
      for (int i = 0; i < d; ++i) v[i] = rng.normal();
    } while (v.norm() < 1e-8);
    v.normalize();
  } else {
    v = -mean.normalized();
  }

  BgSolverReport report;
  double f = background_objective(table, v, delta_bg);
  report.objective_trace.push_back(f);

  int it = 0;
  bool stalled = false;
  // Descends on the objective for `target` starting from x.
  auto descend = [&](Vec& x, double target, std::vector<double>* trace) {
    double step = opts.initial_step;
    double g_obj = background_objective(table, x, target);
    stalled = false;
    while (it < opts.max_iterations && g_obj > 0.0) {
      ++it;
      Vec grad = Vec::Zero(d);
      for (int j = 0; j < table.num_classes(); ++j) {
        const Vec& l = table.vector(j);
        const double excess = x.dot(l) - target;
        if (excess > 0.0) grad += 2.0 * excess * l;
      }
      grad -= grad.dot(x) * x;  // tangent space of the sphere at x
      if (grad.norm() == 0.0) {
        stalled = true;
        return;
      }
      bool accepted = false;
      while (step > 1e-30) {
        Vec cand = x - step * grad;
        const double n = cand.norm();
        if (n > 0.0) {
          cand /= n;
          const double gc = background_objective(table, cand, target);
          if (gc < g_obj) {
            const double change = g_obj - gc;
            x = cand;
            g_obj = gc;
            if (trace) trace->push_back(gc);
            accepted = true;
            if (change < opts.tolerance) stalled = true;
            step = std::min(2.0 * step, opts.initial_step);
            break;
          }
        }
        step *= 0.5;
      }
      if (!accepted || stalled) {
        stalled = true;
        return;
      }
    }
  };

  descend(v, delta_bg, &report.objective_trace);
  f = background_objective(table, v, delta_bg);
  // Gradient descent only approaches the feasible boundary asymptotically. A
  // tiny residual means the problem is feasible, so aim slightly inside and
  // keep the result if it is no worse.
  if (f > 0.0 && f < kFeasibleResidual) {
    Vec polished = v;
    const bool was_stalled = stalled;
    descend(polished, delta_bg - kPolishMargin, nullptr);
    const double fp = background_objective(table, polished, delta_bg);
    if (fp <= f) {
      v = polished;
      f = fp;
      report.objective_trace.push_back(f);
    }
    stalled = stalled || was_stalled;
  }

  report.iterations = it;
  report.final_objective = background_objective(table, v, delta_bg);
  report.converged = f == 0.0 || stalled || report.final_objective <= opts.tolerance;
  report.max_similarity = -1.0;
  for (int j = 0; j < table.num_classes(); ++j)
    report.max_similarity = std::max(report.max_similarity, cosine_similarity(v, table.vector(j)));
  return {v, report};
}

int nearest_seen_class(const EmbeddingTable& table, int index) {
  const Vec& target = table.vector(index);
  if (table.is_seen(index)) return index;
  int best = -1;
  double best_sim = -2.0;
  for (int r = 0; r < table.num_seen(); ++r) {
    const int j = table.seen_index(r);
    const double s = cosine_similarity(target, table.vector(j));
    if (s > best_sim) {
      best_sim = s;
      best = j;
    }
  }
  return best;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_real(const std::string& tok, const std::string& src, std::size_t line) {
  double x = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  auto res = std::from_chars(first, last, x);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(x))
    throw ParseError(src, line, "invalid number '" + tok + "'");
  return x;
}

long parse_int(const std::string& tok, const std::string& src, std::size_t line) {
  long x = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw ParseError(src, line, "invalid integer '" + tok + "'");
  return x;
}

Vec parse_vector(const std::vector<std::string>& toks, std::size_t offset, int d,
                 const std::string& src, std::size_t line) {
  if (toks.size() != offset + static_cast<std::size_t>(d))
    throw ParseError(src, line, "expected " + std::to_string(d) + " values, found " +
                                    std::to_string(static_cast<long>(toks.size()) - static_cast<long>(offset)));
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = parse_real(toks[offset + i], src, line);
  const double n = v.norm();
  if (!(n > 0.0)) throw ParseError(src, line, "zero vector");
  if (std::abs(n - 1.0) > kWarnTolerance)
    log_warning(src + ":" + std::to_string(line) + ": vector norm " + format_double(n) + " renormalized");
  return v;
}

}  // namespace

EmbeddingTable parse_embeddings(std::istream& in, const std::string& source) {
  std::string raw;
  std::size_t line_no = 0;
  int d = -1;
  long c = -1;
  std::vector<std::string> labels;
  std::vector<Vec> vectors;
  std::vector<bool> seen;
  std::unordered_set<std::string> names;
  std::optional<Vec> background;

  while (std::getline(in, raw)) {
    ++line_no;
    auto toks = split_ws(raw);
    if (toks.empty() || toks.front().front() == '#') continue;
    if (d < 0) {
      if (toks.size() != 2) throw ParseError(source, line_no, "header must be 'd c'");
      d = static_cast<int>(parse_int(toks[0], source, line_no));
      c = parse_int(toks[1], source, line_no);
      if (d < 1 || c < 1) throw ParseError(source, line_no, "header values must be positive");
      continue;
    }
    if (toks[0] == "__background__") {
      if (static_cast<long>(labels.size()) != c)
        throw ParseError(source, line_no, "background line must follow all labels");
      if (background) throw ParseError(source, line_no, "duplicate background line");
      background = parse_vector(toks, 1, d, source, line_no);
      continue;
    }
    if (static_cast<long>(labels.size()) == c) throw ParseError(source, line_no, "more label rows than declared");
    if (toks.size() < 2) throw ParseError(source, line_no, "missing seen flag");
    if (toks[1] != "0" && toks[1] != "1") throw ParseError(source, line_no, "seen flag must be 0 or 1");
    if (!names.insert(toks[0]).second) throw ParseError(source, line_no, "duplicate label '" + toks[0] + "'");
    Vec v = parse_vector(toks, 2, d, source, line_no);
    labels.push_back(toks[0]);
    seen.push_back(toks[1] == "1");
    vectors.push_back(std::move(v));
  }
  if (d < 0) throw ParseError(source, line_no, "missing header");
  if (static_cast<long>(labels.size()) != c)
    throw ParseError(source, line_no, "expected " + std::to_string(c) + " label rows, found " +
                                          std::to_string(labels.size()));
  try {
    EmbeddingTable table(std::move(labels), std::move(vectors), std::move(seen));
    if (background) table.set_background(*background, BackgroundOrigin::kLoaded);
    return table;
  } catch (const DomainError& e) {
    throw ParseError(source, line_no, e.what());
  }
}

void write_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out << table.dim() << ' ' << table.num_classes() << '\n';
  for (int j = 0; j < table.num_classes(); ++j) {
    out << table.label(j) << ' ' << (table.is_seen(j) ? 1 : 0);
    for (int i = 0; i < table.dim(); ++i) out << ' ' << format_double(table.vector(j)[i]);
    out << '\n';
  }
  if (table.has_background()) {
    out << "__background__";
    for (int i = 0; i < table.dim(); ++i) out << ' ' << format_double(table.background()[i]);
    out << '\n';
  }
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return parse_embeddings(in, path);
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_embeddings(table, out);
}

}  // namespace zstad
