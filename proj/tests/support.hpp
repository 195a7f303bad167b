#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace testing {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("cxrbench-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline fs::path fixture_path(const std::string& name) {
  return fs::path(CXRBENCH_FIXTURE_DIR) / name;
}

// Tab-separated fixture with a header row; each row keyed by column name.
struct FixtureTable {
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;

  double num(std::size_t row, const std::string& column) const {
    return std::stod(rows.at(row).at(column));
  }
  const std::string& str(std::size_t row, const std::string& column) const {
    return rows.at(row).at(column);
  }
};

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, '\t')) out.push_back(cell);
  return out;
}

inline FixtureTable load_fixture(const std::string& name) {
  std::ifstream in(fixture_path(name));
  if (!in) throw std::runtime_error("missing fixture " + name);
  FixtureTable table;
  std::string line;
  std::getline(in, line);
  table.header = split_tabs(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_tabs(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < table.header.size() && i < cells.size(); ++i) {
      row[table.header[i]] = cells[i];
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace testing
