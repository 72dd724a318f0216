#include "fedeval/statkit.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

namespace fedeval {

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'E', 'V', 'B'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::size_t kHeaderBytes = 14;

void require_finite(const RowMatrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        throw FormatError("non-finite entry at row " + std::to_string(r) + ", column " +
                          std::to_string(c));
      }
    }
  }
}

template <class T>
T load_le(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(u);
}

template <class T>
void store_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U u = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(RowMatrix data) : data_(std::move(data)) {
  if (data_.rows() < 1 || data_.cols() < 1) throw PreconditionError("embedding matrix is empty");
  require_finite(data_);
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t cols,
                                 std::span<const double> row_major) {
  if (row_major.size() != rows * cols) throw PreconditionError("payload size mismatch");
  data_ = Eigen::Map<const RowMatrix>(row_major.data(), static_cast<Eigen::Index>(rows),
                                      static_cast<Eigen::Index>(cols));
  if (data_.rows() < 1 || data_.cols() < 1) throw PreconditionError("embedding matrix is empty");
  require_finite(data_);
}

EmbeddingMatrix EmbeddingMatrix::concat(std::span<const EmbeddingMatrix* const> parts) {
  if (parts.empty()) throw PreconditionError("nothing to concatenate");
  const auto cols = parts.front()->data_.cols();
  Eigen::Index rows = 0;
  for (const auto* p : parts) {
    if (p->data_.cols() != cols) throw PreconditionError("dimension mismatch across clients");
    rows += p->data_.rows();
  }
  RowMatrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto* p : parts) {
    out.middleRows(at, p->data_.rows()) = p->data_;
    at += p->data_.rows();
  }
  return EmbeddingMatrix(std::move(out));
}

EmbeddingMatrix parse_csv(std::string_view text) {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  bool first_line = true;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = trim(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (first_line && !line.empty() && line.front() == '#') {
      first_line = false;
      continue;
    }
    first_line = false;
    if (line.empty()) continue;

    std::size_t count = 0;
    while (true) {
      const auto comma = line.find(',');
      const std::string_view field = trim(line.substr(0, comma));
      double v = 0.0;
      const auto* begin = field.data();
      const auto* end = field.data() + field.size();
      if (!field.empty() && *begin == '+') ++begin;
      const auto [ptr, ec] = std::from_chars(begin, end, v);
      if (field.empty() || ec != std::errc{} || ptr != end) {
        throw FormatError("malformed number '" + std::string(field) + "' on data row " +
                          std::to_string(rows));
      }
      if (!std::isfinite(v)) {
        throw FormatError("non-finite entry at row " + std::to_string(rows) + ", column " +
                          std::to_string(count));
      }
      values.push_back(v);
      ++count;
      if (comma == std::string_view::npos) break;
      line = line.substr(comma + 1);
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw FormatError("dimension mismatch: row " + std::to_string(rows) + " has " +
                        std::to_string(count) + " columns, expected " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw FormatError("no data rows");
  return EmbeddingMatrix(rows, cols, values);
}

std::string format_csv(const EmbeddingMatrix& m) {
  std::string out;
  char buf[64];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out.push_back(',');
      const auto res = std::to_chars(buf, buf + sizeof buf, m.data()(r, c));
      out.append(buf, res.ptr);
    }
    out.push_back('\n');
  }
  return out;
}

BinaryDtype binary_dtype(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("malformed header: missing FEVB magic");
  }
  if (bytes[4] != kVersion) throw FormatError("malformed header: unsupported version");
  if (bytes[5] != 0x00 && bytes[5] != 0x01) throw FormatError("malformed header: unknown dtype");
  return static_cast<BinaryDtype>(bytes[5]);
}

EmbeddingMatrix decode_binary(std::span<const std::uint8_t> bytes) {
  const BinaryDtype dtype = binary_dtype(bytes);
  const std::size_t rows = load_le<std::uint32_t>(bytes.data() + 6);
  const std::size_t cols = load_le<std::uint32_t>(bytes.data() + 10);
  if (rows == 0 || cols == 0) throw FormatError("malformed header: zero rows or columns");
  const std::size_t width = dtype == BinaryDtype::f32 ? 4 : 8;
  if (bytes.size() - kHeaderBytes != rows * cols * width) throw FormatError("payload size mismatch");

  std::vector<double> values(rows * cols);
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < values.size(); ++i, p += width) {
    values[i] = dtype == BinaryDtype::f32 ? static_cast<double>(load_le<float>(p)) : load_le<double>(p);
    if (!std::isfinite(values[i])) {
      throw FormatError("non-finite entry at row " + std::to_string(i / cols) + ", column " +
                        std::to_string(i % cols));
    }
  }
  return EmbeddingMatrix(rows, cols, values);
}

std::vector<std::uint8_t> encode_binary(const EmbeddingMatrix& m, BinaryDtype dtype) {
  if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) throw PreconditionError("matrix too large");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  store_le(out, static_cast<std::uint32_t>(m.rows()));
  store_le(out, static_cast<std::uint32_t>(m.cols()));
  out.reserve(out.size() + m.rows() * m.cols() * (dtype == BinaryDtype::f32 ? 4 : 8));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double v = m.data()(r, c);
      if (dtype == BinaryDtype::f32) {
        store_le(out, static_cast<float>(v));
      } else {
        store_le(out, v);
      }
    }
  }
  return out;
}

EmbeddingMatrix ingest(const std::filesystem::path& path, EmbeddingFormat format) {
  const auto bytes = read_file(path);
  if (format == EmbeddingFormat::binary) return decode_binary(bytes);
  return parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

EmbeddingMatrix ingest(const std::filesystem::path& path) {
  return ingest(path, path.extension() == ".csv" ? EmbeddingFormat::csv : EmbeddingFormat::binary);
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m,
                      EmbeddingFormat format, BinaryDtype dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  if (format == EmbeddingFormat::csv) {
    out << format_csv(m);
  } else {
    const auto bytes = encode_binary(m, dtype);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

GaussianStats moments(const EmbeddingMatrix& x, Estimator estimator) {
  const auto n = x.rows();
  if (estimator == Estimator::unbiased && n < 2) {
    throw PreconditionError("unbiased covariance requires at least 2 samples");
  }
  const RowMatrix& data = x.data();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(data.cols());
  for (Eigen::Index r = 0; r < data.rows(); ++r) mean += data.row(r).transpose();
  mean /= static_cast<double>(n);

  const Eigen::MatrixXd centered = data.rowwise() - mean.transpose();
  const double divisor = estimator == Estimator::population ? static_cast<double>(n)
                                                              : static_cast<double>(n - 1);
  Eigen::MatrixXd cov = (centered.transpose() * centered) / divisor;
  cov = 0.5 * (cov + cov.transpose());
  return {n, std::move(mean), std::move(cov)};
}

EmbeddingMatrix sample_gaussian(const GaussianModel& model, std::size_t n, std::mt19937_64& rng) {
  const auto d = model.mean.size();
  if (model.cov.rows() != d || model.cov.cols() != d) throw PreconditionError("dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (model.cov + model.cov.transpose()));
  const Eigen::MatrixXd factor =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix out(static_cast<Eigen::Index>(n), d);
  Eigen::VectorXd z(d);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < d; ++c) z(c) = normal(rng);
    out.row(r) = (model.mean + factor * z).transpose();
  }
  return EmbeddingMatrix(std::move(out));
}

ClientSet::ClientSet(std::vector<Client> clients) : clients_(std::move(clients)) {
  if (clients_.empty()) throw PreconditionError("client set is empty");
  std::sort(clients_.begin(), clients_.end(),
            [](const Client& a, const Client& b) { return a.id < b.id; });
  std::set<std::string> seen;
  double total = 0.0;
  for (auto& c : clients_) {
    if (!seen.insert(c.id).second) throw PreconditionError("duplicate client id '" + c.id + "'");
    if (!(c.weight >= 0.0)) throw PreconditionError("client '" + c.id + "' has a negative weight");
    total += c.weight;
    if (!c.data && !c.stats) throw PreconditionError("client '" + c.id + "' carries no data");
    if (c.data && !c.stats) c.stats = moments(*c.data);
    const auto d = static_cast<std::size_t>(c.stats->mean.size());
    if (c.data && c.data->cols() != d) throw PreconditionError("client '" + c.id + "' data/stats dimension mismatch");
    if (static_cast<std::size_t>(c.stats->cov.rows()) != d || static_cast<std::size_t>(c.stats->cov.cols()) != d) {
      throw PreconditionError("client '" + c.id + "' covariance has the wrong shape");
    }
    if (dim_ == 0) dim_ = d;
    if (d != dim_) throw PreconditionError("dimension mismatch across clients");
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    throw PreconditionError("client weights must sum to 1 (got " + std::to_string(total) + ")");
  }
}

namespace {
template <class T, class Fill>
ClientSet proportional(std::vector<std::pair<std::string, T>> items, Fill fill) {
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t total = 0;
  std::vector<std::size_t> counts;
  for (const auto& [id, v] : items) {
    counts.push_back(fill(v));
    total += counts.back();
  }
  if (total == 0) throw PreconditionError("clients carry no samples");
  std::vector<Client> clients;
  for (std::size_t i = 0; i < items.size(); ++i) {
    Client c;
    c.id = std::move(items[i].first);
    c.weight = static_cast<double>(counts[i]) / static_cast<double>(total);
    if constexpr (std::is_same_v<T, EmbeddingMatrix>) {
      c.data = std::move(items[i].second);
    } else {
      c.stats = std::move(items[i].second);
    }
    clients.push_back(std::move(c));
  }
  return ClientSet(std::move(clients));
}
}  // namespace

ClientSet ClientSet::from_embeddings(std::vector<std::pair<std::string, EmbeddingMatrix>> data) {
  return proportional(std::move(data), [](const EmbeddingMatrix& m) { return m.rows(); });
}

ClientSet ClientSet::from_stats(std::vector<std::pair<std::string, GaussianStats>> stats) {
  return proportional(std::move(stats), [](const GaussianStats& s) { return s.n; });
}

bool ClientSet::has_embeddings() const noexcept {
  return std::all_of(clients_.begin(), clients_.end(), [](const Client& c) { return c.data.has_value(); });
}

std::size_t ClientSet::total_samples() const noexcept {
  std::size_t n = 0;
  for (const auto& c : clients_) n += c.data ? c.data->rows() : c.stats->n;
  return n;
}

std::vector<double> ClientSet::weights() const {
  std::vector<double> w;
  w.reserve(clients_.size());
  for (const auto& c : clients_) w.push_back(c.weight);
  return w;
}

bool ClientSet::weights_proportional() const noexcept {
  const double n = static_cast<double>(total_samples());
  if (n == 0.0) return false;
  return std::all_of(clients_.begin(), clients_.end(), [n](const Client& c) {
    const double ni = static_cast<double>(c.data ? c.data->rows() : c.stats->n);
    return std::abs(c.weight - ni / n) <= kWeightTolerance;
  });
}

const EmbeddingMatrix& ClientSet::embeddings(std::size_t i) const {
  if (!clients_.at(i).data) throw PreconditionError("client '" + clients_[i].id + "' carries no raw embeddings");
  return *clients_[i].data;
}

EmbeddingMatrix ClientSet::pooled_embeddings() const {
  std::vector<const EmbeddingMatrix*> parts;
  for (std::size_t i = 0; i < clients_.size(); ++i) parts.push_back(&embeddings(i));
  return EmbeddingMatrix::concat(parts);
}

GaussianStats pool_moments(const ClientSet& clients) {
  double total = 0.0;
  for (const auto& c : clients) total += c.weight;
  if (std::abs(total - 1.0) > ClientSet::kWeightTolerance) throw PreconditionError("client weights must sum to 1");

  const auto d = static_cast<Eigen::Index>(clients.dim());
  GaussianStats out{0, Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  for (const auto& c : clients) {
    out.mean += c.weight * c.stats->mean;
    out.n += c.stats->n;
  }
  for (const auto& c : clients) {
    const Eigen::VectorXd delta = c.stats->mean - out.mean;
    out.cov += c.weight * (c.stats->cov + delta * delta.transpose());
  }
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

namespace {
struct Factorized {
  Eigen::VectorXd mean;
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_norm = 0.0;  // -(d log 2pi + log det C) / 2
};

Factorized factorize(const GaussianModel& model, double ridge) {
  const auto d = model.mean.size();
  if (model.cov.rows() != d || model.cov.cols() != d) throw PreconditionError("dimension mismatch");
  Eigen::MatrixXd cov = 0.5 * (model.cov + model.cov.transpose());
  cov.diagonal().array() += ridge;
  Factorized f{model.mean, Eigen::LLT<Eigen::MatrixXd>(cov), 0.0};
  const Eigen::VectorXd diag = f.llt.matrixL().toDenseMatrix().diagonal();
  if (f.llt.info() != Eigen::Success || !(diag.minCoeff() > 1e-150) ||
      diag.minCoeff() <= 1e-12 * diag.maxCoeff()) {
    throw NumericalError("singular model covariance");
  }
  const double log_det = 2.0 * diag.array().log().sum();
  f.log_norm = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
  return f;
}

double log_density(const Factorized& f, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd z = f.llt.matrixL().solve(x - f.mean);
  return f.log_norm - 0.5 * z.squaredNorm();
}
}  // namespace

double log_density(const GaussianModel& model, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != model.mean.size()) throw PreconditionError("dimension mismatch");
  const auto f = factorize(model, 0.0);
  return log_density(f, Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
}

LogLikelihoodScores log_likelihood_scores(const ClientSet& clients, const GaussianModel& model,
                                          double ridge) {
  if (static_cast<std::size_t>(model.mean.size()) != clients.dim()) throw PreconditionError("dimension mismatch");
  const auto f = factorize(model, ridge);
  LogLikelihoodScores out;
  double pooled_sum = 0.0;
  std::size_t pooled_n = 0;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& x = clients.embeddings(i).data();
    double sum = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) sum += log_density(f, x.row(r).transpose());
    out.per_client.push_back(sum / static_cast<double>(x.rows()));
    pooled_sum += sum;
    pooled_n += static_cast<std::size_t>(x.rows());
    out.avg += clients[i].weight * out.per_client.back();
  }
  out.all = pooled_sum / static_cast<double>(pooled_n);
  return out;
}

}  // namespace fedeval
