#include "eyewear/service.hpp"

#include "eyewear/error.hpp"

#include "httplib.h"

#include <cmath>
#include <fstream>
#include <random>

namespace eyewear {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnknownStyle:
    case ErrorCode::AxisOutOfRange:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::EmptyInput:
    case ErrorCode::FitDiverged:
    case ErrorCode::Io:
      return 400;
    case ErrorCode::UninitializedB:
      return 409;
    case ErrorCode::NoGlassesFound:
      return 422;
    default:
      return 500;
  }
}

namespace {

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || c == '-')) return false;
  }
  return true;
}

template <typename T>
T field(const json& body, const char* name) {
  if (!body.is_object() || !body.contains(name)) fail(ErrorCode::InvalidConfig, std::string("missing field '") + name + "'");
  try {
    return body.at(name).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidConfig, std::string("field '") + name + "' has the wrong type");
  }
}

}  // namespace

SessionService::SessionService(std::shared_ptr<const SynthesisBackend> backend, GlassesSubspace subspace,
                               ServiceOptions options)
    : backend_(std::move(backend)), subspace_(std::move(subspace)), options_(std::move(options)) {
  if (!backend_) fail(ErrorCode::InvalidConfig, "no backend");
  if (subspace_.backend_fingerprint != backend_->fingerprint()) {
    fail(ErrorCode::DimensionMismatch, "subspace fitted for '" + subspace_.backend_fingerprint +
                                           "', backend is '" + backend_->fingerprint() + "'");
  }
  options_.edit.validate();
  if (options_.session_dir) std::filesystem::create_directories(*options_.session_dir);
  std::random_device rd;
  id_salt_ = (std::uint64_t{rd()} << 32) ^ rd();
}

std::string SessionService::new_id() {
  std::lock_guard<std::mutex> g(sessions_lock_);
  std::mt19937_64 mix(id_salt_ + counter_++);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(mix()),
                static_cast<unsigned long long>(mix()));
  return buf;
}

std::string SessionService::render_url(const std::string& id) const { return "/api/sessions/" + id + "/render"; }

std::shared_ptr<SessionService::Entry> SessionService::insert(EditSession session) {
  auto e = std::make_shared<Entry>();
  const std::string id = session.id();
  e->session.emplace(std::move(session));
  e->last_used = std::chrono::steady_clock::now();
  std::lock_guard<std::mutex> g(sessions_lock_);
  auto [it, inserted] = sessions_.emplace(id, e);
  return it->second;
}

SessionService::Guarded SessionService::acquire(const std::string& id) {
  if (!valid_id(id)) throw SessionNotFound("no session '" + id + "'");
  std::shared_ptr<Entry> e;
  {
    std::lock_guard<std::mutex> g(sessions_lock_);
    auto it = sessions_.find(id);
    if (it != sessions_.end()) e = it->second;
  }
  if (!e && options_.session_dir) {
    const auto path = *options_.session_dir / (id + ".json");
    std::ifstream in(path);
    if (in) {
      json record;
      try {
        in >> record;
      } catch (const json::exception& ex) {
        fail(ErrorCode::Io, "unreadable session record " + path.string() + ": " + ex.what());
      }
      e = insert(EditSession::replay(record, *backend_));
    }
  }
  if (!e) throw SessionNotFound("no session '" + id + "'");
  std::unique_lock<std::mutex> lock(e->lock);
  e->last_used = std::chrono::steady_clock::now();
  return {std::move(e), std::move(lock)};
}

void SessionService::persist(const EditSession& s) const {
  if (!options_.session_dir) return;
  const auto path = *options_.session_dir / (s.id() + ".json");
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp);
    out << s.record().dump();
  }
  std::filesystem::rename(tmp, path);
}

json SessionService::create(const json& body) {
  std::string id = new_id();
  std::optional<EditSession> s;
  if (body.is_object() && body.contains("toy_latent_seed")) {
    s.emplace(EditSession::from_toy_seed(id, field<std::uint64_t>(body, "toy_latent_seed"), *backend_));
  } else if (body.is_object() && body.contains("image")) {
    const auto text = field<std::string>(body, "image");
    if (text.size() > options_.max_upload_bytes * 4 / 3 + 4) fail(ErrorCode::InvalidConfig, "image too large");
    s.emplace(EditSession::from_png(id, base64_decode(text), *backend_));
  } else {
    fail(ErrorCode::InvalidConfig, "body needs 'image' (base64 PNG) or 'toy_latent_seed'");
  }
  persist(*s);
  insert(std::move(*s));

  json axes = json::array();
  for (int i = 0; i < subspace_.d_prime(); ++i) {
    const double m = max_magnitude(subspace_, i, options_.edit);
    const std::string name =
        i < static_cast<int>(options_.axis_names.size()) ? options_.axis_names[i] : "axis-" + std::to_string(i);
    axes.push_back({{"index", i}, {"name", name}, {"suggested_range", {-m, m}}});
  }
  return {{"session_id", id}, {"axes", axes}, {"styles", subspace_.styles()}};
}

json SessionService::init(const std::string& id, const json& body) {
  auto [e, lock] = acquire(id);
  const auto style = field<std::string>(body, "style");
  const InitResult r = e->session->initialize(style, subspace_, *backend_, options_.edit);
  e->session->render(subspace_, *backend_, options_.edit);
  persist(*e->session);
  return {{"b", r.b}, {"area_residual", r.residual}, {"area", r.area}, {"render_url", render_url(id)}};
}

json SessionService::add_edit(const std::string& id, const json& body) {
  auto [e, lock] = acquire(id);
  const EditParams requested{field<int>(body, "axis"), field<double>(body, "magnitude")};
  const EditParams applied = e->session->add_edit(requested, subspace_, options_.edit);
  try {
    e->session->render(subspace_, *backend_, options_.edit);
  } catch (const Error&) {
    e->session->undo();
    throw;
  }
  persist(*e->session);
  return {{"render_url", render_url(id)},
          {"magnitude", applied.magnitude},
          {"clamped", applied.magnitude != requested.magnitude},
          {"edit_count", e->session->edits().size()}};
}

json SessionService::undo(const std::string& id) {
  auto [e, lock] = acquire(id);
  const bool undone = e->session->undo();
  e->session->render(subspace_, *backend_, options_.edit);
  persist(*e->session);
  return {{"render_url", render_url(id)}, {"undone", undone}, {"edit_count", e->session->edits().size()}};
}

std::vector<std::uint8_t> SessionService::render_png(const std::string& id) {
  auto [e, lock] = acquire(id);
  return encode_png(e->session->render(subspace_, *backend_, options_.edit));
}

json SessionService::record(const std::string& id) {
  auto [e, lock] = acquire(id);
  return e->session->record();
}

json SessionService::meta() const {
  std::vector<double> eig(subspace_.eigenvalues.data(), subspace_.eigenvalues.data() + subspace_.eigenvalues.size());
  return {{"d_prime", subspace_.d_prime()},
          {"eigenvalues", eig},
          {"fingerprint", subspace_.backend_fingerprint},
          {"layers", subspace_.layers},
          {"channels", subspace_.channels},
          {"styles", subspace_.styles()},
          {"fit", {{"K", subspace_.metadata.images},
                   {"N", subspace_.metadata.templates},
                   {"N+", subspace_.metadata.augmented_templates},
                   {"timestamp", subspace_.metadata.timestamp}}}};
}

std::size_t SessionService::evict_idle(std::chrono::steady_clock::time_point now) {
  std::lock_guard<std::mutex> g(sessions_lock_);
  std::size_t n = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock<std::mutex> busy(it->second->lock, std::try_to_lock);
    if (busy && now - it->second->last_used > options_.idle_ttl) {
      busy.unlock();
      it = sessions_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

std::size_t SessionService::session_count() const {
  std::lock_guard<std::mutex> g(sessions_lock_);
  return sessions_.size();
}

HttpServer::HttpServer(SessionService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpServer::~HttpServer() {
  stop();
  if (sweeper_.joinable()) sweeper_.join();
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("request body is not JSON: ") + e.what());
  }
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const SessionNotFound& e) {
      send_json(res, 404, {{"error", "SessionNotFound"}, {"message", e.what()}});
    } catch (const Error& e) {
      send_json(res, http_status(e.code()), {{"error", std::string(to_string(e.code()))}, {"message", e.message()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace

void HttpServer::routes() {
  auto& s = *server_;
  s.set_payload_max_length(service_.options().max_upload_bytes * 2);
  s.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 201, service_.create(parse_body(req)));
         }));
  s.Post(R"(/api/sessions/([0-9a-f-]+)/init)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, service_.init(req.matches[1], parse_body(req)));
         }));
  s.Post(R"(/api/sessions/([0-9a-f-]+)/edits)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, service_.add_edit(req.matches[1], parse_body(req)));
         }));
  s.Post(R"(/api/sessions/([0-9a-f-]+)/undo)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, service_.undo(req.matches[1]));
         }));
  s.Get(R"(/api/sessions/([0-9a-f-]+)/render)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto png = service_.render_png(req.matches[1]);
          res.set_content(std::string(png.begin(), png.end()), "image/png");
        }));
  s.Get(R"(/api/sessions/([0-9a-f-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, service_.record(req.matches[1]));
        }));
  s.Get("/api/meta", guarded([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, service_.meta());
        }));
}

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) fail(ErrorCode::Io, "cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) fail(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::sweep_loop() {
  const auto period = std::max(std::chrono::milliseconds(10),
                               std::min(std::chrono::milliseconds(1000), service_.options().idle_ttl / 4));
  std::unique_lock<std::mutex> lock(sweep_lock_);
  while (!sweep_cv_.wait_for(lock, period, [this] { return stopping_; })) {
    lock.unlock();
    service_.evict_idle();
    lock.lock();
  }
}

void HttpServer::run() {
  {
    std::lock_guard<std::mutex> g(sweep_lock_);
    if (stopping_) return;
  }
  sweeper_ = std::thread([this] { sweep_loop(); });
  server_->listen_after_bind();
  {
    std::lock_guard<std::mutex> g(sweep_lock_);
    stopping_ = true;
  }
  sweep_cv_.notify_all();
  sweeper_.join();
}

void HttpServer::stop() {
  {
    std::lock_guard<std::mutex> g(sweep_lock_);
    stopping_ = true;
  }
  sweep_cv_.notify_all();
  server_->stop();
}

}  // namespace eyewear
