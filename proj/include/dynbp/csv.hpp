#pragma once
#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dynbp {

// shortest decimal that reads back to the same double
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// comma separated, header first, LF line endings
class CsvWriter {
 public:
  CsvWriter& cell(std::string_view s) {
    if (!at_line_start_) buf_ += ',';
    buf_.append(s.data(), s.size());
    at_line_start_ = false;
    return *this;
  }
  // without this overload a string literal would fall into cell(bool)
  CsvWriter& cell(const char* s) { return cell(std::string_view(s)); }
  CsvWriter& cell(double v) { return cell(std::string_view(format_double(v))); }
  CsvWriter& cell(std::int64_t v) {
    char buf[24];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return cell(std::string_view(buf, static_cast<size_t>(res.ptr - buf)));
  }
  CsvWriter& cell(int v) { return cell(static_cast<std::int64_t>(v)); }
  CsvWriter& cell(bool v) { return cell(std::string_view(v ? "1" : "0")); }
  void end_row() {
    buf_ += '\n';
    at_line_start_ = true;
  }

  const std::string& str() const { return buf_; }

  void write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
  }

 private:
  std::string buf_;
  bool at_line_start_ = true;
};

}  // namespace dynbp
