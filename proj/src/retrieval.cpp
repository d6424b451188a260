#include "llmrank/retrieval.hpp"

#include "llmrank/rng.hpp"
#include "llmrank/strings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace llmrank {

double FactorModel::score(UserId u, ItemId i) const {
  const bool ku = u >= 0 && static_cast<std::size_t>(u) < user_count();
  const bool ki = i >= 0 && static_cast<std::size_t>(i) < item_count();
  double s = kind == ModelKind::rating ? global_mean : 0.0;
  if (ku) s += user_bias(u);
  if (ki) s += item_bias(i);
  if (ku && ki) s += user_factors.row(u).dot(item_factors.row(i));
  return s;
}

double FactorModel::predict_rating(UserId u, ItemId i) const {
  const bool ku = u >= 0 && static_cast<std::size_t>(u) < user_count();
  const bool ki = i >= 0 && static_cast<std::size_t>(i) < item_count();
  double s = global_mean;
  if (ku) s += user_bias(u);
  if (ki) s += item_bias(i);
  if (ku && ki) s += user_factors.row(u).dot(item_factors.row(i));
  return std::clamp(s, 1.0, static_cast<double>(scale_max));
}

namespace {

FactorModel make_empty(ModelKind kind, const SplitDataset& split, const MfConfig& config) {
  FactorModel m;
  m.kind = kind;
  m.d = config.d;
  m.scale_max = split.train.scale_max;
  m.seed = config.seed;
  m.user_factors = Matrix::Zero(static_cast<Eigen::Index>(split.train.user_count()), config.d);
  m.item_factors = Matrix::Zero(static_cast<Eigen::Index>(split.train.item_count()), config.d);
  m.user_bias = Vector::Zero(static_cast<Eigen::Index>(split.train.user_count()));
  m.item_bias = Vector::Zero(static_cast<Eigen::Index>(split.train.item_count()));
  return m;
}

void init_factors(FactorModel& m, Rng& rng) {
  for (Eigen::Index r = 0; r < m.user_factors.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.user_factors.cols(); ++c) {
      m.user_factors(r, c) = rng.uniform(-0.01, 0.01);
    }
  }
  for (Eigen::Index r = 0; r < m.item_factors.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.item_factors.cols(); ++c) {
      m.item_factors(r, c) = rng.uniform(-0.01, 0.01);
    }
  }
}

[[noreturn]] void diverged(const char* what) {
  throw std::runtime_error(std::string(what) +
                           ": training loss became non-finite; try a smaller learning rate");
}

}  // namespace

FactorModel train_rating_mf(const SplitDataset& split, const MfConfig& config, TrainLog* log) {
  const auto& train = split.train.interactions;
  if (train.empty()) throw UsageError("cannot train on an empty corpus");

  FactorModel m = make_empty(ModelKind::rating, split, config);
  double sum = 0.0;
  for (const auto& r : train) sum += r.rating;
  m.global_mean = sum / static_cast<double>(train.size());
  if (config.epochs == 0) return m;

  Rng rng(derive_seed(config.seed, "rating-mf"));
  init_factors(m, rng);

  const double lr = config.learning_rate;
  const double reg = config.regularization;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss = 0.0;
    for (const std::size_t idx : order) {
      const auto& r = train[idx];
      const double pred = m.global_mean + m.user_bias(r.user) + m.item_bias(r.item) +
                          m.user_factors.row(r.user).dot(m.item_factors.row(r.item));
      const double err = r.rating - pred;
      loss += err * err;

      m.user_bias(r.user) += lr * (err - reg * m.user_bias(r.user));
      m.item_bias(r.item) += lr * (err - reg * m.item_bias(r.item));
      // update item row against the pre-update user row
      const Vector pu = m.user_factors.row(r.user);
      m.user_factors.row(r.user) += lr * (err * m.item_factors.row(r.item) -
                                          reg * m.user_factors.row(r.user));
      m.item_factors.row(r.item) += lr * (err * pu.transpose() -
                                          reg * m.item_factors.row(r.item));
    }
    if (!std::isfinite(loss)) diverged("rating-mf");
    if (log) log->epoch_loss.push_back(loss / static_cast<double>(train.size()));
  }
  return m;
}

FactorModel train_ranking_mf(const SplitDataset& split, const MfConfig& config, TrainLog* log) {
  const auto& train = split.train.interactions;
  if (train.empty()) throw UsageError("cannot train on an empty corpus");

  FactorModel m = make_empty(ModelKind::ranking, split, config);
  m.global_mean = 0.0;
  if (config.epochs == 0) return m;

  Rng rng(derive_seed(config.seed, "ranking-mf"));
  init_factors(m, rng);

  // per-user positive sets for negative rejection
  std::vector<std::unordered_set<ItemId>> seen(split.train.user_count());
  for (const auto& r : train) seen[static_cast<std::size_t>(r.user)].insert(r.item);
  const auto n_items = static_cast<std::uint64_t>(split.train.item_count());

  const double lr = config.learning_rate;
  const double reg = config.regularization;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss = 0.0;
    for (const std::size_t idx : order) {
      const auto& r = train[idx];
      const auto& user_seen = seen[static_cast<std::size_t>(r.user)];
      for (int neg = 0; neg < config.negatives_per_positive; ++neg) {
        if (user_seen.size() >= n_items) break;  // nothing left to contrast with
        ItemId j = static_cast<ItemId>(rng.below(n_items));
        while (user_seen.count(j) > 0) j = static_cast<ItemId>(rng.below(n_items));

        const double x = m.item_bias(r.item) - m.item_bias(j) +
                         m.user_factors.row(r.user).dot(m.item_factors.row(r.item) -
                                                        m.item_factors.row(j));
        const double sig = 1.0 / (1.0 + std::exp(x));  // d/dx of -ln sigmoid(x)
        loss += std::log1p(std::exp(-x));

        const Vector pu = m.user_factors.row(r.user);
        const Vector diff = m.item_factors.row(r.item) - m.item_factors.row(j);
        m.user_factors.row(r.user) += lr * (sig * diff.transpose() -
                                            reg * m.user_factors.row(r.user));
        m.item_factors.row(r.item) += lr * (sig * pu.transpose() -
                                            reg * m.item_factors.row(r.item));
        m.item_factors.row(j) += lr * (-sig * pu.transpose() - reg * m.item_factors.row(j));
        m.item_bias(r.item) += lr * (sig - reg * m.item_bias(r.item));
        m.item_bias(j) += lr * (-sig - reg * m.item_bias(j));
      }
    }
    if (!std::isfinite(loss)) diverged("ranking-mf");
    if (log) log->epoch_loss.push_back(loss / static_cast<double>(train.size()));
  }
  return m;
}

CandidateList top_candidates(const FactorModel& model, const SplitDataset& split, UserId user,
                             int k_prime) {
  if (k_prime < 1) throw UsageError("k' must be >= 1");
  CandidateList out;
  out.user = user;

  std::unordered_set<ItemId> seen;
  if (user >= 0 && static_cast<std::size_t>(user) < split.histories().size()) {
    for (const auto& r : split.histories()[static_cast<std::size_t>(user)]) seen.insert(r.item);
  }

  const auto n_items = static_cast<ItemId>(split.train.item_count());
  std::vector<std::pair<double, ItemId>> scored;
  scored.reserve(static_cast<std::size_t>(n_items));
  for (ItemId i = 0; i < n_items; ++i) {
    if (seen.count(i) > 0) continue;
    scored.emplace_back(model.score(user, i), i);
  }
  const std::size_t take = std::min<std::size_t>(scored.size(), static_cast<std::size_t>(k_prime));
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  for (std::size_t i = 0; i < take; ++i) {
    out.scores.push_back(scored[i].first);
    out.items.push_back(scored[i].second);
  }
  out.degenerate = take < static_cast<std::size_t>(k_prime);
  return out;
}

// --- persistence ----------------------------------------------------------

void write_model(const std::filesystem::path& path, const FactorModel& model) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "#llmrank model v1\n";
  out << "#kind " << (model.kind == ModelKind::rating ? "rating" : "ranking") << "\n";
  out << "#d " << model.d << "\n";
  out << "#users " << model.user_count() << "\n";
  out << "#items " << model.item_count() << "\n";
  out << "#scale_max " << model.scale_max << "\n";
  out << "#seed " << model.seed << "\n";
  out << "#global_mean " << format_double_exact(model.global_mean) << "\n";
  auto emit_rows = [&out](char tag, const Matrix& mat) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      out << tag << "\t" << r;
      for (Eigen::Index c = 0; c < mat.cols(); ++c) {
        out << "\t" << format_double_exact(mat(r, c));
      }
      out << "\n";
    }
  };
  emit_rows('U', model.user_factors);
  emit_rows('V', model.item_factors);
  for (Eigen::Index r = 0; r < model.user_bias.size(); ++r) {
    out << "B\t" << r << "\t" << format_double_exact(model.user_bias(r)) << "\n";
  }
  for (Eigen::Index r = 0; r < model.item_bias.size(); ++r) {
    out << "C\t" << r << "\t" << format_double_exact(model.item_bias(r)) << "\n";
  }
}

FactorModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open model file: " + path.string());
  FactorModel m;
  std::string line;
  std::size_t users = 0, items = 0;
  bool sized = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto f = split(line, " ");
      if (f.size() < 2) continue;
      if (f[0] == "#kind") m.kind = f[1] == "ranking" ? ModelKind::ranking : ModelKind::rating;
      else if (f[0] == "#d") m.d = std::atoi(f[1].c_str());
      else if (f[0] == "#users") users = std::strtoull(f[1].c_str(), nullptr, 10);
      else if (f[0] == "#items") items = std::strtoull(f[1].c_str(), nullptr, 10);
      else if (f[0] == "#scale_max") m.scale_max = std::atoi(f[1].c_str());
      else if (f[0] == "#seed") m.seed = std::strtoull(f[1].c_str(), nullptr, 10);
      else if (f[0] == "#global_mean") m.global_mean = std::strtod(f[1].c_str(), nullptr);
      continue;
    }
    if (!sized) {
      m.user_factors = Matrix::Zero(static_cast<Eigen::Index>(users), m.d);
      m.item_factors = Matrix::Zero(static_cast<Eigen::Index>(items), m.d);
      m.user_bias = Vector::Zero(static_cast<Eigen::Index>(users));
      m.item_bias = Vector::Zero(static_cast<Eigen::Index>(items));
      sized = true;
    }
    const auto f = split(line, "\t");
    if (f.size() < 3) throw UsageError("malformed model row in " + path.string());
    const auto row = static_cast<Eigen::Index>(std::atoll(f[1].c_str()));
    if (f[0] == "U" || f[0] == "V") {
      Matrix& mat = f[0] == "U" ? m.user_factors : m.item_factors;
      if (f.size() != static_cast<std::size_t>(m.d) + 2 || row >= mat.rows()) {
        throw UsageError("malformed factor row in " + path.string());
      }
      for (int c = 0; c < m.d; ++c) {
        mat(row, c) = std::strtod(f[static_cast<std::size_t>(c) + 2].c_str(), nullptr);
      }
    } else if (f[0] == "B") {
      m.user_bias(row) = std::strtod(f[2].c_str(), nullptr);
    } else if (f[0] == "C") {
      m.item_bias(row) = std::strtod(f[2].c_str(), nullptr);
    } else {
      throw UsageError("unknown model row '" + f[0] + "' in " + path.string());
    }
  }
  if (!sized) throw UsageError("model file has no factor rows: " + path.string());
  return m;
}

void write_candidates(const std::filesystem::path& path, const Dataset& ds,
                      const std::vector<CandidateList>& lists) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "#llmrank candidates v1\n";
  for (const auto& cl : lists) {
    for (std::size_t i = 0; i < cl.items.size(); ++i) {
      out << ds.user_ids[static_cast<std::size_t>(cl.user)] << "\t" << i + 1 << "\t"
          << ds.items[static_cast<std::size_t>(cl.items[i])].external_id << "\t"
          << format_double_exact(cl.scores[i]) << "\n";
    }
  }
}

std::vector<CandidateList> read_candidates(const std::filesystem::path& path,
                                           const Dataset& ds) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open candidates file: " + path.string());
  std::vector<CandidateList> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, "\t");
    if (f.size() < 4) throw UsageError("malformed candidates line in " + path.string());
    const UserId u = ds.user_index.at(f[0]);
    const ItemId i = ds.item_index.at(f[2]);
    if (out.empty() || out.back().user != u) {
      out.push_back(CandidateList{u, {}, {}, false});
    }
    out.back().items.push_back(i);
    out.back().scores.push_back(std::strtod(f[3].c_str(), nullptr));
  }
  return out;
}

}  // namespace llmrank
