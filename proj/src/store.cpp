#include "cxrbench/store.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <signal.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cxrbench/error.hpp"

namespace cxrbench {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kPartialMarker = ".partial-";

std::atomic<std::uint64_t> g_commit_counter{0};

std::string errno_text() { return std::strerror(errno); }

void write_all(int fd, const std::uint8_t* data, std::size_t size, const fs::path& path) {
  while (size > 0) {
    const ssize_t n = ::write(fd, data, size);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("write failed for " + path.string() + ": " + errno_text());
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void atomic_commit(std::span<const std::uint8_t> bytes, const fs::path& dest,
                   const CommitOptions& options) {
  std::error_code ec;
  if (fs::exists(dest, ec) && fs::file_size(dest, ec) == bytes.size()) {
    const std::string existing = read_file(dest);
    if (std::memcmp(existing.data(), bytes.data(), bytes.size()) == 0) return;
  }
  if (dest.has_parent_path()) {
    fs::create_directories(dest.parent_path(), ec);
    if (ec) throw IoError("cannot create " + dest.parent_path().string() + ": " + ec.message());
  }

  // Same directory as the destination so the rename never crosses filesystems.
  const fs::path tmp = dest.string() + std::string(kPartialMarker) + std::to_string(::getpid()) +
                       "-" + std::to_string(g_commit_counter.fetch_add(1));
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot create " + tmp.string() + ": " + errno_text());
  try {
    write_all(fd, bytes.data(), bytes.size(), tmp);
    if (::fsync(fd) != 0) throw IoError("fsync failed for " + tmp.string() + ": " + errno_text());
  } catch (...) {
    ::close(fd);
    ::unlink(tmp.c_str());
    throw;
  }
  ::close(fd);

  if (options.simulate_crash_before_rename) throw SimulatedCrash{};

  if (::rename(tmp.c_str(), dest.c_str()) != 0) {
    const int err = errno;
    ::unlink(tmp.c_str());
    if (err == EXDEV) {
      throw IoError("cannot rename " + tmp.string() + " to " + dest.string() +
                    " across filesystems; place the output root on a single filesystem");
    }
    throw IoError("rename to " + dest.string() + " failed: " + std::strerror(err));
  }
}

void atomic_commit(std::string_view text, const fs::path& dest, const CommitOptions& options) {
  atomic_commit(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), dest,
                options);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

bool is_filesystem_safe(std::string_view name) {
  if (name.empty() || name == "." || name == ".." || name.size() > 128) return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

RunStore::RunStore(fs::path run_root) : root_(fs::absolute(std::move(run_root)).lexically_normal()) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw IoError("cannot create run root " + root_.string() + ": " + ec.message());
  sweep_partials();
}

fs::path RunStore::instance_dir(std::string_view model, int split_index) const {
  if (!is_filesystem_safe(model)) {
    throw ValidationError("model name '" + std::string(model) + "' is not filesystem-safe");
  }
  return root_ / "instances" / std::string(model) / ("split_" + std::to_string(split_index));
}

fs::path RunStore::instance_artifact(std::string_view model, int split_index,
                                     std::string_view kind) const {
  return instance_dir(model, split_index) / std::string(kind);
}

fs::path RunStore::split_path(int split_index) const {
  return root_ / "splits" / ("split_" + std::to_string(split_index) + ".tsv");
}

bool RunStore::instance_complete(std::string_view model, int split_index) const {
  for (auto kind : {artifact::kWeights, artifact::kHistory, artifact::kLogits, artifact::kMeta}) {
    if (!fs::exists(instance_artifact(model, split_index, kind))) return false;
  }
  return true;
}

void RunStore::check_inside(const fs::path& dest) const {
  const fs::path rel = fs::absolute(dest).lexically_normal().lexically_relative(root_);
  if (rel.empty() || *rel.begin() == "..") {
    throw ValidationError(dest.string() + " is outside the store root " + root_.string());
  }
}

void RunStore::commit(const fs::path& dest, std::string_view text) const {
  check_inside(dest);
  atomic_commit(text, dest);
}

void RunStore::commit(const fs::path& dest, std::span<const std::uint8_t> bytes) const {
  check_inside(dest);
  atomic_commit(bytes, dest);
}

std::size_t RunStore::sweep_partials() const {
  std::vector<fs::path> partials;
  for (const auto& entry : fs::recursive_directory_iterator(root_)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = entry.path().lexically_relative(root_);
    if (*rel.begin() == "quarantine") continue;
    if (entry.path().filename().string().find(kPartialMarker) != std::string::npos) {
      partials.push_back(entry.path());
    }
  }
  for (const auto& p : partials) {
    const fs::path rel = p.lexically_relative(root_);
    std::string flat = rel.generic_string();
    for (char& c : flat) {
      if (c == '/') c = '~';
    }
    fs::create_directories(quarantine_dir());
    fs::rename(p, quarantine_dir() / flat);
  }
  return partials.size();
}

RunLock::RunLock(const fs::path& run_root) : path_(run_root / "LOCK") {
  fs::create_directories(run_root);
  char host[256] = {};
  ::gethostname(host, sizeof host - 1);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd >= 0) {
      std::ostringstream meta;
      meta << "pid = " << ::getpid() << "\nhost = " << host << "\nstarted = "
           << std::chrono::duration_cast<std::chrono::seconds>(
                  std::chrono::system_clock::now().time_since_epoch())
                  .count()
           << "\n";
      const std::string text = meta.str();
      write_all(fd, reinterpret_cast<const std::uint8_t*>(text.data()), text.size(), path_);
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw IoError("cannot create " + path_.string() + ": " + errno_text());

    // Held already: replace only if the owner is a dead process on this host.
    std::string text;
    try {
      text = read_file(path_);
    } catch (const IoError&) {
      continue;
    }
    long pid = 0;
    std::string owner_host;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
      if (line.rfind("pid = ", 0) == 0) pid = std::strtol(line.c_str() + 6, nullptr, 10);
      if (line.rfind("host = ", 0) == 0) owner_host = line.substr(7);
    }
    const bool stale = owner_host == host && pid > 0 && ::kill(static_cast<pid_t>(pid), 0) != 0 &&
                       errno == ESRCH;
    if (!stale) {
      throw ValidationError("run is locked by another process (" + path_.string() + ": pid " +
                            std::to_string(pid) + " on " + owner_host + ")");
    }
    fs::remove(path_);
  }
  throw ValidationError("could not acquire " + path_.string());
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace cxrbench
