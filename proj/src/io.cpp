#include "termmt/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "termmt/text.hpp"

namespace termmt {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  for (const auto& line : lines) out << line << '\n';
}

TokenLines read_token_file(const std::filesystem::path& path) {
  TokenLines out;
  for (const auto& line : read_lines(path)) out.push_back(tokenize(line));
  return out;
}

void write_token_file(const std::filesystem::path& path, const TokenLines& lines) {
  std::vector<std::string> raw;
  raw.reserve(lines.size());
  for (const auto& toks : lines) raw.push_back(join_tokens(toks));
  write_lines(path, raw);
}

std::vector<std::vector<int>> read_factor_file(const std::filesystem::path& path) {
  std::vector<std::vector<int>> out;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    std::vector<int> row;
    for (const auto& tok : tokenize(line)) {
      if (tok.size() != 1 || tok[0] < '0' || tok[0] > '2')
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": invalid factor value '" + tok + "'");
      row.push_back(tok[0] - '0');
    }
    out.push_back(std::move(row));
  }
  return out;
}

void write_factor_file(const std::filesystem::path& path,
                       const std::vector<std::vector<int>>& factors) {
  std::vector<std::string> raw;
  raw.reserve(factors.size());
  for (const auto& row : factors) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line.push_back(' ');
      line += std::to_string(row[i]);
    }
    raw.push_back(std::move(line));
  }
  write_lines(path, raw);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << content;
}

std::string file_checksum(const std::filesystem::path& path) {
  std::uint64_t h = fnv1a64(read_file(path));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace termmt
