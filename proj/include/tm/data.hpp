#pragma once

// Dataset ingestion and windowing: CSV loading, chronological splits per the
// community benchmark protocol, per-channel standardization fitted on the
// train slice only, and sliding (look-back, horizon) window generation.
//
// CSV contract: UTF-8, comma-delimited, header row whose first column is
// "date" (ISO-like local timestamps, strictly increasing), remaining columns
// numeric. Matches the public ETT/Weather/Electricity/Traffic files.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tm/rng.hpp"
#include "tm/tensor.hpp"

namespace timemachine::data {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RawSeries {
  std::string name;
  std::vector<std::string> channel_names;
  std::vector<std::int64_t> timestamps;  // comparable encoding of the date column
  Tensor values;                         // [total_len, M]

  std::size_t total_len() const { return values.dim(0); }
  std::size_t channels() const { return values.dim(1); }
};

// "YYYY-MM-DD HH:MM[:SS]" (or with 'T') -> sortable integer; falls back to a
// plain integer timestamp when the cell is numeric
inline std::int64_t parse_timestamp(const std::string& s, std::size_t row) {
  auto digits = [](const std::string& str) {
    for (char c : str)
      if (!std::isdigit(static_cast<unsigned char>(c)) && c != '-' && c != '+') return false;
    return !str.empty();
  };
  if (digits(s)) return std::stoll(s);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  std::istringstream is(s);
  if (!(is >> y >> sep >> mo >> sep >> d))
    throw DataError("row " + std::to_string(row) + ": unparsable timestamp '" + s + "'");
  char space = 0;
  if (is.get(space) && (space == ' ' || space == 'T')) {
    is >> h;
    if (is.get(sep)) is >> mi;
    if (is.get(sep)) is >> sec;
  }
  return (((((std::int64_t)y * 13 + mo) * 32 + d) * 25 + h) * 61 + mi) * 61 + sec;
}

inline RawSeries load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  RawSeries series;
  series.name = path;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::istringstream hs(line);
    std::string col;
    bool first = true;
    while (std::getline(hs, col, ',')) {
      if (first) {
        if (col != "date")
          throw DataError(path + ": first header column must be \"date\", got '" + col + "'");
        first = false;
      } else {
        series.channel_names.push_back(col);
      }
    }
    if (series.channel_names.empty()) throw DataError(path + ": no value columns");
  }
  const std::size_t M = series.channel_names.size();
  std::vector<double> flat;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ls, cell, ',')) {
      if (col == 0) {
        series.timestamps.push_back(parse_timestamp(cell, row));
      } else {
        if (cell.empty())
          throw DataError(path + ": blank cell at row " + std::to_string(row) +
                          ", column " + std::to_string(col + 1));
        double v = 0;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
          throw DataError(path + ": unparsable cell '" + cell + "' at row " +
                          std::to_string(row) + ", column " + std::to_string(col + 1));
        flat.push_back(v);
      }
      ++col;
    }
    if (col != M + 1)
      throw DataError(path + ": row " + std::to_string(row) + " has " + std::to_string(col) +
                      " columns, expected " + std::to_string(M + 1));
  }
  const std::size_t n = series.timestamps.size();
  if (n == 0) throw DataError(path + ": no data rows");
  for (std::size_t i = 1; i < n; ++i)
    if (series.timestamps[i] <= series.timestamps[i - 1])
      throw DataError(path + ": non-monotonic timestamp at row " + std::to_string(i + 2));
  series.values = Tensor({n, M}, std::move(flat));
  series.values.require_finite("load_csv");
  return series;
}

// ---- chronological splits ---------------------------------------------------

enum class DatasetClass { etth, ettm, ratio };

inline DatasetClass parse_dataset_class(const std::string& s) {
  if (s == "etth") return DatasetClass::etth;
  if (s == "ettm") return DatasetClass::ettm;
  if (s == "ratio") return DatasetClass::ratio;
  throw ConfigError("unknown dataset class '" + s + "' (expected etth|ettm|ratio)");
}

struct SplitSpec {
  // [0, train_end) train, [train_end, val_end) val, [val_end, test_end) test.
  // Val/test input windows may reach back L points before their border.
  std::size_t train_end = 0, val_end = 0, test_end = 0;
};

// ETT calendar borders: 12/4/4 months of hourly points (x4 for the
// 15-minute variants); other datasets use the 0.7/0.1/0.2 ratio protocol.
inline SplitSpec split(const RawSeries& series, DatasetClass cls) {
  const std::size_t n = series.total_len();
  SplitSpec s;
  switch (cls) {
    case DatasetClass::etth:
      s = {12 * 30 * 24, 16 * 30 * 24, 20 * 30 * 24};
      break;
    case DatasetClass::ettm:
      s = {12 * 30 * 24 * 4, 16 * 30 * 24 * 4, 20 * 30 * 24 * 4};
      break;
    case DatasetClass::ratio: {
      const std::size_t train = static_cast<std::size_t>(n * 0.7);
      const std::size_t test = static_cast<std::size_t>(n * 0.2);
      s = {train, n - test, n};
      break;
    }
  }
  if (n < s.test_end)
    throw DataError("series length " + std::to_string(n) +
                    " shorter than split borders (need " + std::to_string(s.test_end) + ")");
  return s;
}

// ---- standardization --------------------------------------------------------

struct Scaler {
  Tensor mean;  // [M]
  Tensor std;   // [M]
  std::vector<bool> constant_channel;
};

inline constexpr double kScalerEps = 1e-8;

// population statistics (ddof = 0) over the train slice only
inline Scaler fit_scaler(const RawSeries& series, const SplitSpec& split) {
  const std::size_t M = series.channels(), n = split.train_end;
  if (n == 0) throw DataError("fit_scaler: empty train slice");
  Scaler sc{Tensor({M}), Tensor({M}), std::vector<bool>(M, false)};
  for (std::size_t j = 0; j < M; ++j) {
    double mu = 0;
    for (std::size_t i = 0; i < n; ++i) mu += series.values[i * M + j];
    mu /= double(n);
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = series.values[i * M + j] - mu;
      var += d * d;
    }
    var /= double(n);
    sc.mean[j] = mu;
    sc.std[j] = std::sqrt(var);
    if (sc.std[j] <= 0.0) {
      sc.constant_channel[j] = true;
      sc.std[j] = kScalerEps;  // epsilon guard; channel maps to zeros
    }
  }
  return sc;
}

inline Tensor transform(const Tensor& values, const Scaler& sc) {
  const std::size_t n = values.dim(0), M = values.dim(1);
  Tensor out({n, M});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < M; ++j)
      out[i * M + j] = (values[i * M + j] - sc.mean[j]) / sc.std[j];
  return out;
}

// ---- sliding windows --------------------------------------------------------

enum class Split { train, val, test };

struct WindowDataset {
  const Tensor* values = nullptr;  // standardized [total_len, M], not owned
  std::size_t L = 0, T = 0;
  std::vector<std::size_t> starts;  // window start positions into values

  std::size_t size() const { return starts.size(); }

  // input [start, start+L), target [start+L, start+L+T); x as [1, M, L] row
  void fill_sample(std::size_t i, std::size_t batch_pos, Tensor& x, Tensor& y) const {
    const std::size_t M = values->dim(1);
    const std::size_t s = starts[i];
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t l = 0; l < L; ++l)
        x[(batch_pos * M + m) * L + l] = (*values)[(s + l) * M + m];
      for (std::size_t t = 0; t < T; ++t)
        y[(batch_pos * M + m) * T + t] = (*values)[(s + L + t) * M + m];
    }
  }
};

// Window starts for one split span. Val/test spans begin L points before
// their border so every target lies inside the split.
inline WindowDataset make_windows(const Tensor& standardized, const SplitSpec& sp,
                                  Split which, std::size_t L, std::size_t T) {
  std::size_t lo = 0, hi = 0;
  switch (which) {
    case Split::train: lo = 0; hi = sp.train_end; break;
    case Split::val: lo = sp.train_end - std::min(L, sp.train_end); hi = sp.val_end; break;
    case Split::test: lo = sp.val_end - std::min(L, sp.val_end); hi = sp.test_end; break;
  }
  if (hi > standardized.dim(0))
    throw DataError("split border " + std::to_string(hi) + " exceeds series length " +
                    std::to_string(standardized.dim(0)));
  const std::size_t span = hi - lo;
  if (span < L + T)
    throw DataError("split span " + std::to_string(span) + " too short: need at least L+T = " +
                    std::to_string(L + T));
  WindowDataset ds;
  ds.values = &standardized;
  ds.L = L;
  ds.T = T;
  for (std::size_t s = lo; s + L + T <= hi; ++s) ds.starts.push_back(s);
  return ds;
}

}  // namespace timemachine::data
