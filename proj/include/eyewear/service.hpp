#pragma once

// HTTP session API. SessionService holds the state and is usable without a socket;
// HttpServer maps routes onto it.

#include "eyewear/edit.hpp"
#include "eyewear/error.hpp"
#include "eyewear/session.hpp"

#include "json.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace eyewear {

struct ServiceOptions {
  std::chrono::milliseconds idle_ttl{std::chrono::minutes(30)};
  std::optional<std::filesystem::path> session_dir;  // records survive eviction and restarts
  EditConfig edit;
  std::vector<std::string> axis_names;  // display names; "axis-<i>" when missing
  std::size_t max_upload_bytes = 16u << 20;
};

/// Error raised for requests naming a session that does not exist.
struct SessionNotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class SessionService {
 public:
  SessionService(std::shared_ptr<const SynthesisBackend> backend, GlassesSubspace subspace, ServiceOptions options);

  nlohmann::json create(const nlohmann::json& body);
  nlohmann::json init(const std::string& id, const nlohmann::json& body);
  nlohmann::json add_edit(const std::string& id, const nlohmann::json& body);
  nlohmann::json undo(const std::string& id);
  std::vector<std::uint8_t> render_png(const std::string& id);
  nlohmann::json record(const std::string& id);
  nlohmann::json meta() const;

  /// Drops sessions idle for longer than the TTL; returns how many went.
  std::size_t evict_idle(std::chrono::steady_clock::time_point now = std::chrono::steady_clock::now());
  std::size_t session_count() const;
  const ServiceOptions& options() const { return options_; }

 private:
  struct Entry {
    std::mutex lock;  // serializes requests within one session
    std::optional<EditSession> session;
    std::chrono::steady_clock::time_point last_used;
  };
  using Guarded = std::pair<std::shared_ptr<Entry>, std::unique_lock<std::mutex>>;

  Guarded acquire(const std::string& id);
  std::shared_ptr<Entry> insert(EditSession session);
  void persist(const EditSession& s) const;
  std::string new_id();
  std::string render_url(const std::string& id) const;

  std::shared_ptr<const SynthesisBackend> backend_;
  GlassesSubspace subspace_;
  ServiceOptions options_;

  mutable std::mutex sessions_lock_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t counter_ = 0;
  std::uint64_t id_salt_ = 0;
};

class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds without serving; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); also runs the idle-eviction sweeper.
  void run();
  /// Safe from any thread.
  void stop();

 private:
  void routes();
  void sweep_loop();

  SessionService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex sweep_lock_;
  std::condition_variable sweep_cv_;
  bool stopping_ = false;
  std::thread sweeper_;
};

/// HTTP status for a library error code.
int http_status(ErrorCode code);

}  // namespace eyewear
