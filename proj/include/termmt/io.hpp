#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace termmt {

using TokenLines = std::vector<std::vector<std::string>>;

struct ParallelCorpus {
  TokenLines src;
  TokenLines tgt;
  std::size_t size() const { return src.size(); }
};

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

// Token files: one sentence per line, tokens separated by single spaces.
TokenLines read_token_file(const std::filesystem::path& path);
void write_token_file(const std::filesystem::path& path, const TokenLines& lines);

// Factor files: space-separated digits, aligned line-by-line and
// token-by-token with a .tok file.
std::vector<std::vector<int>> read_factor_file(const std::filesystem::path& path);
void write_factor_file(const std::filesystem::path& path,
                       const std::vector<std::vector<int>>& factors);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

// FNV-1a content hash, hex-encoded; used for manifest checksums.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace termmt
