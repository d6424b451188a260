#include "llmrank/corpus.hpp"

#include "llmrank/rng.hpp"
#include "llmrank/strings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace llmrank {

namespace {

bool parse_int64(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) return false;
  out = v;
  return true;
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  out = v;
  return true;
}

/// Numeric when both ids parse as integers, lexicographic otherwise.
bool natural_less(const std::string& a, const std::string& b) {
  std::int64_t ia, ib;
  if (parse_int64(a, ia) && parse_int64(b, ib)) {
    if (ia != ib) return ia < ib;
    return a < b;
  }
  return a < b;
}

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t lineno,
                             const std::string& what) {
  std::ostringstream os;
  os << path.string() << ":" << lineno << ": " << what;
  throw UsageError(os.str());
}

}  // namespace

std::vector<RawInteraction> parse_interactions(const std::filesystem::path& path,
                                               const ParseOptions& opts) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open ratings file: " + path.string());

  Rng rng(derive_seed(opts.seed, "synthetic-timestamps"));
  std::vector<RawInteraction> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, opts.delimiter);
    const std::size_t want = opts.synthesize_timestamps ? 3 : 4;
    if (fields.size() < want) {
      line_error(path, lineno, "expected user, item, rating, timestamp");
    }
    RawInteraction r;
    r.user = trim(fields[0]);
    r.item = trim(fields[1]);
    if (r.user.empty() || r.item.empty()) line_error(path, lineno, "empty user or item id");
    if (!parse_real(trim(fields[2]), r.rating)) {
      line_error(path, lineno, "malformed rating '" + fields[2] + "'");
    }
    if (r.rating < 1.0 || r.rating > static_cast<double>(opts.scale_max)) {
      line_error(path, lineno,
                 "rating " + format_double(r.rating) + " outside scale [1, " +
                     std::to_string(opts.scale_max) + "]");
    }
    if (fields.size() >= 4 && !trim(fields[3]).empty()) {
      if (!parse_int64(trim(fields[3]), r.timestamp)) {
        line_error(path, lineno, "malformed timestamp '" + fields[3] + "'");
      }
    } else if (opts.synthesize_timestamps) {
      r.timestamp = static_cast<std::int64_t>(rng.below(1'000'000'000ull));
    } else {
      line_error(path, lineno, "missing timestamp");
    }
    rows.push_back(std::move(r));
  }

  // duplicate (user, item) pairs keep the latest timestamp
  std::unordered_map<std::string, std::size_t> seen;
  std::vector<RawInteraction> out;
  out.reserve(rows.size());
  for (auto& r : rows) {
    const std::string key = r.user + '\x1f' + r.item;
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(key, out.size());
      out.push_back(std::move(r));
    } else if (r.timestamp >= out[it->second].timestamp) {
      out[it->second] = std::move(r);
    }
  }
  return out;
}

std::vector<ItemMeta> parse_catalog(const std::filesystem::path& path,
                                    const std::string& delimiter) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open catalog file: " + path.string());
  std::vector<ItemMeta> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, delimiter);
    if (fields.size() < 2) line_error(path, lineno, "expected at least id and title");
    ItemMeta m;
    m.external_id = trim(fields[0]);
    m.title = trim(fields[1]);
    for (std::size_t i = 2; i < fields.size(); ++i) {
      m.attributes.emplace_back("f" + std::to_string(i), trim(fields[i]));
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<RawInteraction> apply_k_core(std::vector<RawInteraction> interactions, int k) {
  if (k < 1) throw UsageError("k-core requires k >= 1");
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, int> user_deg, item_deg;
    for (const auto& r : interactions) {
      ++user_deg[r.user];
      ++item_deg[r.item];
    }
    std::vector<RawInteraction> kept;
    kept.reserve(interactions.size());
    for (auto& r : interactions) {
      if (user_deg[r.user] >= k && item_deg[r.item] >= k) {
        kept.push_back(std::move(r));
      } else {
        changed = true;
      }
    }
    interactions = std::move(kept);
    if (interactions.empty()) {
      throw UsageError("corpus emptied by " + std::to_string(k) + "-core filtering");
    }
  }
  return interactions;
}

Dataset build_dataset(const std::vector<RawInteraction>& interactions,
                      const std::vector<ItemMeta>& catalog, int scale_max, std::uint64_t seed) {
  Dataset ds;
  ds.scale_max = scale_max;
  ds.seed = seed;

  std::set<std::string, bool (*)(const std::string&, const std::string&)> users(natural_less),
      items(natural_less);
  for (const auto& r : interactions) {
    users.insert(r.user);
    items.insert(r.item);
  }
  ds.user_ids.assign(users.begin(), users.end());
  for (std::size_t i = 0; i < ds.user_ids.size(); ++i) {
    ds.user_index.emplace(ds.user_ids[i], static_cast<UserId>(i));
  }

  std::unordered_map<std::string, const ItemMeta*> catalog_by_id;
  for (const auto& m : catalog) catalog_by_id[m.external_id] = &m;
  ds.items.reserve(items.size());
  for (const auto& ext : items) {
    auto it = catalog_by_id.find(ext);
    if (it != catalog_by_id.end()) {
      ds.items.push_back(*it->second);
    } else {
      ds.items.push_back(ItemMeta{ext, "Item " + ext, {}});
    }
    ds.item_index.emplace(ext, static_cast<ItemId>(ds.items.size() - 1));
  }

  ds.interactions.reserve(interactions.size());
  for (const auto& r : interactions) {
    ds.interactions.push_back(Interaction{ds.user_index.at(r.user), ds.item_index.at(r.item),
                                          r.rating, r.timestamp});
  }
  std::sort(ds.interactions.begin(), ds.interactions.end(), [](const auto& a, const auto& b) {
    if (a.user != b.user) return a.user < b.user;
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.item < b.item;
  });
  return ds;
}

void SplitDataset::rebuild_histories() {
  histories_.assign(train.user_count(), {});
  for (const auto& r : train.interactions) {
    histories_[static_cast<std::size_t>(r.user)].push_back(r);
  }
  for (auto& h : histories_) {
    std::sort(h.begin(), h.end(), [](const Interaction& a, const Interaction& b) {
      if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
      return a.item < b.item;
    });
  }
}

SplitDataset leave_one_out_split(const Dataset& dataset) {
  SplitDataset split;
  split.train = dataset;
  split.train.interactions.clear();

  std::vector<std::vector<Interaction>> per_user(dataset.user_count());
  for (const auto& r : dataset.interactions) {
    per_user[static_cast<std::size_t>(r.user)].push_back(r);
  }
  for (auto& history : per_user) {
    if (history.size() < 3) {
      if (!history.empty()) ++split.skipped_users;
      continue;
    }
    // latest first; timestamp ties break by ascending item id
    std::sort(history.begin(), history.end(), [](const Interaction& a, const Interaction& b) {
      if (a.timestamp != b.timestamp) return a.timestamp > b.timestamp;
      return a.item < b.item;
    });
    split.test.emplace(history[0].user, history[0]);
    split.validation.emplace(history[1].user, history[1]);
    for (std::size_t i = 2; i < history.size(); ++i) {
      split.train.interactions.push_back(history[i]);
    }
  }
  std::sort(split.train.interactions.begin(), split.train.interactions.end(),
            [](const Interaction& a, const Interaction& b) {
              if (a.user != b.user) return a.user < b.user;
              if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
              return a.item < b.item;
            });
  split.rebuild_histories();
  return split;
}

const std::vector<Interaction>& user_history(const SplitDataset& split, UserId user) {
  if (user < 0 || static_cast<std::size_t>(user) >= split.histories().size() ||
      split.histories()[static_cast<std::size_t>(user)].empty()) {
    throw UsageError("user " + std::to_string(user) + " has no train history");
  }
  return split.histories()[static_cast<std::size_t>(user)];
}

double liked_threshold(int scale_max) {
  if (scale_max <= 5) return 4.0;
  if (scale_max == 10) return 7.0;
  return std::ceil(0.7 * scale_max);
}

// --- serialization --------------------------------------------------------

namespace {

void write_header(std::ofstream& out, const char* kind, const Dataset& ds) {
  out << "#llmrank " << kind << " v1\n";
  out << "#scale_max " << ds.scale_max << "\n";
  out << "#seed " << ds.seed << "\n";
  out << "#users " << ds.user_count() << "\n";
  out << "#items " << ds.item_count() << "\n";
}

void write_items(std::ofstream& out, const Dataset& ds) {
  for (const auto& m : ds.items) {
    out << "I\t" << m.external_id << "\t" << m.title;
    for (const auto& [k, v] : m.attributes) out << "\t" << k << "=" << v;
    out << "\n";
  }
}

struct HeaderInfo {
  std::string kind;
  int scale_max = 5;
  std::uint64_t seed = 0;
};

HeaderInfo read_header_line(const std::string& line, const std::filesystem::path& path) {
  const auto fields = split(line, " ");
  if (fields.size() < 3 || fields[0] != "#llmrank" || fields[2] != "v1") {
    throw UsageError("not a llmrank data file: " + path.string());
  }
  HeaderInfo h;
  h.kind = fields[1];
  return h;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  write_header(out, "dataset", ds);
  out << "#interactions " << ds.interactions.size() << "\n";
  write_items(out, ds);
  for (const auto& r : ds.interactions) {
    out << "R\t" << ds.user_ids[static_cast<std::size_t>(r.user)] << "\t"
        << ds.items[static_cast<std::size_t>(r.item)].external_id << "\t"
        << format_double(r.rating) << "\t" << r.timestamp << "\n";
  }
}

namespace {

/// Shared reader for dataset/split files; returns raw rows + roles.
struct FileContents {
  HeaderInfo header;
  int scale_max = 5;
  std::uint64_t seed = 0;
  int skipped_users = 0;
  std::vector<ItemMeta> catalog;
  std::vector<RawInteraction> rows;
  std::vector<int> roles;  // 0 train, 1 validation, 2 test; -1 for plain datasets
};

FileContents read_file(const std::filesystem::path& path, const std::string& expect_kind) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw UsageError("empty file: " + path.string());
  FileContents fc;
  fc.header = read_header_line(line, path);
  if (fc.header.kind != expect_kind) {
    throw UsageError("expected a " + expect_kind + " file, found " + fc.header.kind + ": " +
                     path.string());
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto fields = split(line, " ");
      if (fields.size() >= 2) {
        if (fields[0] == "#scale_max") fc.scale_max = std::atoi(fields[1].c_str());
        if (fields[0] == "#seed") fc.seed = std::strtoull(fields[1].c_str(), nullptr, 10);
        if (fields[0] == "#skipped_users") fc.skipped_users = std::atoi(fields[1].c_str());
      }
      continue;
    }
    const auto fields = split(line, "\t");
    if (fields[0] == "I") {
      if (fields.size() < 3) line_error(path, lineno, "malformed item line");
      ItemMeta m;
      m.external_id = fields[1];
      m.title = fields[2];
      for (std::size_t i = 3; i < fields.size(); ++i) {
        const auto pos = fields[i].find('=');
        if (pos == std::string::npos) {
          m.attributes.emplace_back("f" + std::to_string(i), fields[i]);
        } else {
          m.attributes.emplace_back(fields[i].substr(0, pos), fields[i].substr(pos + 1));
        }
      }
      fc.catalog.push_back(std::move(m));
    } else if (fields[0] == "R" || fields[0] == "S") {
      const std::size_t want = fields[0] == "S" ? 6 : 5;
      if (fields.size() < want) line_error(path, lineno, "malformed interaction line");
      RawInteraction r;
      r.user = fields[1];
      r.item = fields[2];
      if (!parse_real(fields[3], r.rating)) line_error(path, lineno, "malformed rating");
      if (!parse_int64(fields[4], r.timestamp)) line_error(path, lineno, "malformed timestamp");
      int role = -1;
      if (fields[0] == "S") {
        if (fields[5] == "train") role = 0;
        else if (fields[5] == "validation") role = 1;
        else if (fields[5] == "test") role = 2;
        else line_error(path, lineno, "unknown split role '" + fields[5] + "'");
      }
      fc.rows.push_back(std::move(r));
      fc.roles.push_back(role);
    } else {
      line_error(path, lineno, "unknown record type '" + fields[0] + "'");
    }
  }
  return fc;
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& path) {
  FileContents fc = read_file(path, "dataset");
  return build_dataset(fc.rows, fc.catalog, fc.scale_max, fc.seed);
}

void write_split(const std::filesystem::path& path, const SplitDataset& split) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  const Dataset& ds = split.train;
  write_header(out, "split", ds);
  out << "#interactions "
      << split.train.interactions.size() + split.validation.size() + split.test.size() << "\n";
  out << "#skipped_users " << split.skipped_users << "\n";
  write_items(out, ds);
  auto emit = [&](const Interaction& r, const char* role) {
    out << "S\t" << ds.user_ids[static_cast<std::size_t>(r.user)] << "\t"
        << ds.items[static_cast<std::size_t>(r.item)].external_id << "\t"
        << format_double(r.rating) << "\t" << r.timestamp << "\t" << role << "\n";
  };
  for (const auto& r : split.train.interactions) emit(r, "train");
  for (const auto& [u, r] : split.validation) emit(r, "validation");
  for (const auto& [u, r] : split.test) emit(r, "test");
}

SplitDataset read_split(const std::filesystem::path& path) {
  FileContents fc = read_file(path, "split");
  // index over all rows so internal ids cover validation/test entities too
  Dataset full = build_dataset(fc.rows, fc.catalog, fc.scale_max, fc.seed);

  SplitDataset split;
  split.train = full;
  split.train.interactions.clear();
  split.skipped_users = fc.skipped_users;

  // rows and roles are parallel; rebuild index-order lookups
  for (std::size_t i = 0; i < fc.rows.size(); ++i) {
    const auto& raw = fc.rows[i];
    Interaction r{full.user_index.at(raw.user), full.item_index.at(raw.item), raw.rating,
                  raw.timestamp};
    switch (fc.roles[i]) {
      case 0: split.train.interactions.push_back(r); break;
      case 1: split.validation.emplace(r.user, r); break;
      case 2: split.test.emplace(r.user, r); break;
      default: throw UsageError("split file contains a roleless interaction: " + path.string());
    }
  }
  std::sort(split.train.interactions.begin(), split.train.interactions.end(),
            [](const Interaction& a, const Interaction& b) {
              if (a.user != b.user) return a.user < b.user;
              if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
              return a.item < b.item;
            });
  split.rebuild_histories();
  return split;
}

}  // namespace llmrank
