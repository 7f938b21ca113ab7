#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace tstar::csv {

// Minimal comma-separated reader for the fixed schemas this project ingests.
// No quoting rules: none of the documented columns may contain commas.
class Reader {
 public:
  explicit Reader(const std::string& path);

  bool ok() const { return ok_; }
  const std::vector<std::string>& header() const { return header_; }
  // Column position or -1.
  int column(const std::string& name) const;
  // Reads the next data row into fields; skips blank lines; strips \r.
  bool next(std::vector<std::string>& fields);
  std::size_t rows_read() const { return rows_; }

 private:
  std::ifstream in_;
  std::vector<std::string> header_;
  bool ok_ = false;
  std::size_t rows_ = 0;
};

void split_line(const std::string& line, std::vector<std::string>& out);

// Deterministic float formatting shared by every CSV writer; byte-stable
// output is part of the reproducibility contract.
std::string fmt(double v);

class Writer {
 public:
  explicit Writer(const std::string& path);
  ~Writer();
  bool ok() const { return out_ != nullptr; }
  void row(const std::vector<std::string>& fields);
  void raw(const std::string& line);

 private:
  std::FILE* out_ = nullptr;
};

}  // namespace tstar::csv
