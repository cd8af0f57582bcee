#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ph/errors.hpp"
#include "ph/serialize.hpp"
#include "ph/task_data.hpp"
#include "ph/trainer.hpp"

namespace ph {

// Filesystem-safe opaque user identifier: nonempty, [A-Za-z0-9._-] only,
// and not a path traversal token.
inline void validate_user_id(const std::string& user) {
  if (user.empty()) throw ValidationError("user id must be nonempty");
  if (user == "." || user == "..") throw ValidationError("user id \"" + user + "\" is reserved");
  for (const char ch : user) {
    const bool ok = (ch >= 'A' && ch <= 'Z') || (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') ||
                    ch == '.' || ch == '_' || ch == '-';
    if (!ok) {
      throw ValidationError("user id \"" + user + "\" contains characters outside [A-Za-z0-9._-]");
    }
  }
}

// One shared base model plus a versioned head file per user:
//   root/base.pibm
//   root/users/<id>/v<N>.piph
//   root/index.json          (rebuildable cache of the disk scan)
// Storage therefore grows as base + N x head, never N x base.
class Registry {
 public:
  static Registry create(const std::filesystem::path& root, const BaseLM& base) {
    if (!base.frozen) throw FrozenParameterError("registry base model must be frozen");
    std::filesystem::create_directories(root / "users");
    save_base(root / "base.pibm", base);
    Registry reg(root);
    reg.write_index();
    return reg;
  }

  static Registry open(const std::filesystem::path& root) {
    if (!std::filesystem::exists(root / "base.pibm")) {
      throw NotFoundError("no base model at " + (root / "base.pibm").string());
    }
    Registry reg(root);
    reg.write_index();  // refresh the cache from the authoritative disk scan
    return reg;
  }

  // moving rebuilds the encoding cache so it never points at a stale base
  Registry(Registry&& other) noexcept
      : root_(std::move(other.root_)),
        base_(std::move(other.base_)),
        index_(std::move(other.index_)),
        cache_(std::make_unique<EncodingCache>(base_)),
        cache_mutex_(std::make_unique<std::mutex>()) {}
  Registry& operator=(Registry&&) = delete;
  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  const BaseLM& base() const { return base_; }
  const std::filesystem::path& root() const { return root_; }

  std::vector<std::string> users() const {
    std::vector<std::string> out;
    for (const auto& [user, versions] : index_) {
      if (!versions.empty()) out.push_back(user);
    }
    return out;
  }

  std::vector<std::uint32_t> versions(const std::string& user) const {
    std::vector<std::uint32_t> out;
    const auto it = index_.find(user);
    if (it != index_.end()) {
      for (const auto& [v, path] : it->second) out.push_back(v);
    }
    return out;
  }

  // Atomic write (temp file + rename) of the next head version. The previous
  // version stays retrievable; an interrupted write leaves only a temp file
  // the scan ignores.
  std::uint32_t put_head(const std::string& user, const PersonalizationHead& head) {
    validate_user_id(user);
    if (head.config.d_model != base_.config.d_model) {
      throw ConfigError("head d_model " + std::to_string(head.config.d_model) +
                        " does not match registry base d_model " + std::to_string(base_.config.d_model));
    }
    auto& versions = index_[user];
    const std::uint32_t version = versions.empty() ? 1 : versions.rbegin()->first + 1;
    const std::filesystem::path path = root_ / "users" / user / ("v" + std::to_string(version) + ".piph");
    save_head(path, head);
    versions.emplace(version, path);
    write_index();
    return version;
  }

  // Latest version by default; the CRC check in load_head means a corrupt
  // file surfaces as an error rather than being served.
  PersonalizationHead get_head(const std::string& user,
                               std::optional<std::uint32_t> version = std::nullopt) const {
    const auto it = index_.find(user);
    if (it == index_.end() || it->second.empty()) {
      throw NotFoundError("no stored head for user \"" + user + "\"");
    }
    const auto& versions = it->second;
    if (!version.has_value()) return load_head(versions.rbegin()->second);
    const auto vit = versions.find(*version);
    if (vit == versions.end()) {
      throw NotFoundError("user \"" + user + "\" has no head version " + std::to_string(*version));
    }
    return load_head(vit->second);
  }

  // Argmax decode with the user's latest head over the shared frozen base.
  Prediction serve_predict(const std::string& user, const std::string& text,
                           const std::vector<std::string>& classes) {
    const PersonalizationHead head = get_head(user);
    std::lock_guard<std::mutex> lock(*cache_mutex_);
    return predict_class(head_confidence_fn(*cache_, head), text, classes);
  }

  struct Stats {
    std::size_t n_users{0};
    std::uint64_t total_head_bytes{0};  // every stored version
    std::uint64_t base_bytes{0};
    std::vector<std::pair<std::string, std::uint64_t>> bytes_per_user;  // latest version each
  };

  Stats stats() const {
    Stats s;
    s.base_bytes = std::filesystem::file_size(root_ / "base.pibm");
    for (const auto& [user, versions] : index_) {
      if (versions.empty()) continue;
      ++s.n_users;
      for (const auto& [v, path] : versions) {
        s.total_head_bytes += std::filesystem::file_size(path);
      }
      s.bytes_per_user.emplace_back(user, std::filesystem::file_size(versions.rbegin()->second));
    }
    return s;
  }

 private:
  explicit Registry(std::filesystem::path root)
      : root_(std::move(root)),
        base_(load_base(root_ / "base.pibm")),
        cache_(std::make_unique<EncodingCache>(base_)),
        cache_mutex_(std::make_unique<std::mutex>()) {
    scan();
  }

  // Disk is the source of truth: users/<id>/v<N>.piph files, temp files and
  // anything else ignored.
  void scan() {
    index_.clear();
    const std::filesystem::path users_dir = root_ / "users";
    if (!std::filesystem::exists(users_dir)) return;
    for (const auto& user_entry : std::filesystem::directory_iterator(users_dir)) {
      if (!user_entry.is_directory()) continue;
      const std::string user = user_entry.path().filename().string();
      for (const auto& file : std::filesystem::directory_iterator(user_entry.path())) {
        const std::string name = file.path().filename().string();
        if (name.size() < 7 || name.front() != 'v' || name.substr(name.size() - 5) != ".piph") continue;
        const std::string digits = name.substr(1, name.size() - 6);
        if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
        index_[user].emplace(static_cast<std::uint32_t>(std::stoul(digits)), file.path());
      }
    }
  }

  void write_index() const {
    nlohmann::json j;
    j["base_checksum"] = base_.weights_checksum;
    nlohmann::json users = nlohmann::json::object();
    for (const auto& [user, versions] : index_) {
      nlohmann::json v = nlohmann::json::array();
      for (const auto& [ver, path] : versions) v.push_back(ver);
      users[user] = {{"versions", v}, {"latest", versions.empty() ? 0 : versions.rbegin()->first}};
    }
    j["users"] = users;
    std::ofstream out(root_ / "index.json", std::ios::trunc);
    out << j.dump(2) << "\n";
  }

  std::filesystem::path root_;
  BaseLM base_;
  std::map<std::string, std::map<std::uint32_t, std::filesystem::path>> index_;
  std::unique_ptr<EncodingCache> cache_;
  std::unique_ptr<std::mutex> cache_mutex_;
};

}  // namespace ph
