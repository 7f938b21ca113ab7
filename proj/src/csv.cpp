#include "tstar/csv.hpp"

#include <cstring>

namespace tstar::csv {

Reader::Reader(const std::string& path) : in_(path) {
  if (!in_.is_open()) return;
  std::string line;
  if (!std::getline(in_, line)) return;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  split_line(line, header_);
  ok_ = !header_.empty();
}

int Reader::column(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return static_cast<int>(i);
  return -1;
}

bool Reader::next(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in_, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    split_line(line, fields);
    ++rows_;
    return true;
  }
  return false;
}

void split_line(const std::string& line, std::vector<std::string>& out) {
  out.clear();
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

Writer::Writer(const std::string& path) { out_ = std::fopen(path.c_str(), "wb"); }

Writer::~Writer() {
  if (out_) std::fclose(out_);
}

void Writer::row(const std::vector<std::string>& fields) {
  if (!out_) return;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) std::fputc(',', out_);
    std::fwrite(fields[i].data(), 1, fields[i].size(), out_);
  }
  std::fputc('\n', out_);
}

void Writer::raw(const std::string& line) {
  if (!out_) return;
  std::fwrite(line.data(), 1, line.size(), out_);
  std::fputc('\n', out_);
}

}  // namespace tstar::csv
