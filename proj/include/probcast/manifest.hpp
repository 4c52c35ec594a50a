#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "probcast/errors.hpp"

namespace probcast {

inline constexpr const char* kToolVersion = "0.1.0";

// Exclusive ownership of an output directory for the lifetime of a command.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir) : lock_path_(dir / ".lock") {
        std::filesystem::create_directories(dir);
        const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0)
            throw LockError("output directory is locked by another run: " + dir.string());
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
    }
    ~DirLock() {
        std::error_code ec;
        std::filesystem::remove(lock_path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::filesystem::path lock_path_;
};

// Written as "incomplete" when a run starts; finalize() verifies every listed
// artifact exists and flips the status. A crashed run leaves the incomplete
// marker behind.
class RunManifest {
public:
    RunManifest(std::filesystem::path run_dir, std::string command, nlohmann::json config_snapshot)
        : run_dir_(std::move(run_dir)), command_(std::move(command)),
          config_(std::move(config_snapshot)) {
        write("incomplete");
    }

    void add_artifact(const std::string& name, const std::string& path) {
        artifacts_[name] = path;
    }

    void finalize() {
        for (const auto& [name, path] : artifacts_)
            if (!std::filesystem::exists(path))
                throw IoError("manifest artifact missing: " + name + " -> " + path);
        write("complete");
    }

    std::string path() const { return (run_dir_ / "manifest.json").string(); }

private:
    void write(const std::string& status) const {
        nlohmann::ordered_json j;
        j["format"] = "probcast-manifest";
        j["tool_version"] = kToolVersion;
        j["command"] = command_;
        j["status"] = status;
        j["config"] = config_;
        auto arts = nlohmann::ordered_json::object();
        for (const auto& [name, p] : artifacts_)
            arts[name] = p;
        j["artifacts"] = std::move(arts);
        std::ofstream out(path());
        if (!out)
            throw IoError("cannot write " + path());
        out << j.dump(2) << "\n";
    }

    std::filesystem::path run_dir_;
    std::string command_;
    nlohmann::json config_;
    std::map<std::string, std::string> artifacts_;
};

} // namespace probcast
