#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cxrbench {

struct CommitOptions {
  // Test hook: stop after the temporary file is written, as if the process
  // died before the rename.
  bool simulate_crash_before_rename = false;
};

// Thrown by atomic_commit when simulate_crash_before_rename is set.
struct SimulatedCrash {};

// Write-then-rename. Readers see either the old file or the complete new one.
// Committing bytes identical to the existing file is a no-op.
void atomic_commit(std::span<const std::uint8_t> bytes, const std::filesystem::path& dest,
                   const CommitOptions& options = {});
void atomic_commit(std::string_view text, const std::filesystem::path& dest,
                   const CommitOptions& options = {});

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::string read_file(const std::filesystem::path& path);

// Artifact kinds stored per (model, split_index).
namespace artifact {
inline constexpr std::string_view kWeights = "weights.bin";
inline constexpr std::string_view kHistory = "history.csv";
inline constexpr std::string_view kLogits = "logits.csv";
inline constexpr std::string_view kMeta = "instance.meta";
inline constexpr std::string_view kError = "error.txt";
}  // namespace artifact

// Layout of one run:
//   config.snapshot               reproducibility contract (key = value)
//   LOCK                          held by the coordinating process
//   splits/split_<i>.tsv          shared training/validation plans
//   instances/<model>/split_<i>/  weights.bin, history.csv, logits.csv, instance.meta
//   reports/                      emitted tables
//   quarantine/                   partial files recovered from interrupted commits
class RunStore {
 public:
  // Creates the run root if needed and moves leftover partial files into
  // quarantine/.
  explicit RunStore(std::filesystem::path run_root);

  const std::filesystem::path& root() const { return root_; }
  std::string run_id() const { return root_.filename().string(); }

  std::filesystem::path instance_dir(std::string_view model, int split_index) const;
  std::filesystem::path instance_artifact(std::string_view model, int split_index,
                                          std::string_view kind) const;
  std::filesystem::path split_path(int split_index) const;
  std::filesystem::path reports_dir() const { return root_ / "reports"; }
  std::filesystem::path config_path() const { return root_ / "config.snapshot"; }
  std::filesystem::path quarantine_dir() const { return root_ / "quarantine"; }

  // Weights, history, logits and meta all present.
  bool instance_complete(std::string_view model, int split_index) const;

  void commit(const std::filesystem::path& dest, std::string_view text) const;
  void commit(const std::filesystem::path& dest, std::span<const std::uint8_t> bytes) const;

  // Moves "*.partial-*" files into quarantine/; returns how many were moved.
  std::size_t sweep_partials() const;

 private:
  void check_inside(const std::filesystem::path& dest) const;
  std::filesystem::path root_;
};

// Exclusive lock file (LOCK) holding pid/host/start time. A lock whose pid no
// longer exists on this host is treated as stale and replaced.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_root);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

bool is_filesystem_safe(std::string_view name);

}  // namespace cxrbench
