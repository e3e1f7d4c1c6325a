#include "eyewear/app.hpp"
#include "eyewear/error.hpp"
#include "eyewear/persistence.hpp"
#include "eyewear/session.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>

using namespace eyewear;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

std::filesystem::path config_dir(const std::string& path) {
  return path.empty() ? std::filesystem::path() : std::filesystem::path(path).parent_path();
}

json section(const json& cfg, const char* name) { return cfg.contains(name) ? cfg.at(name) : json(); }

std::shared_ptr<const SynthesisBackend> backend_from(const json& cfg) {
  return make_backend(cfg.contains("backend") ? cfg.at("backend") : json{{"name", "toy"}});
}

int cmd_fit(const Globals& g, const std::string& output) {
  const json cfg = load_config(g.config);
  json fit = section(cfg, "fit");
  if (fit.is_null()) fit = json::object();
  if (cfg.contains("backend") && !fit.contains("backend")) fit["backend"] = cfg.at("backend");
  auto fc = app::FitConfig::from_json(fit, config_dir(g.config));
  if (!output.empty()) fc.output = output;
  if (g.seed) fc.images.seed = *g.seed;
  app::run_fit(fc, std::cout, g.verbose);
  return app::kExitOk;
}

struct EditArgs {
  std::string subspace, input, output = "edited.png", style = kStyleClear;
  std::optional<std::uint64_t> toy_seed;
  std::optional<double> b;
  std::vector<std::string> edits;
};

int cmd_edit(const Globals& g, const EditArgs& a) {
  const json cfg = load_config(g.config);
  const auto backend = backend_from(cfg);
  const auto sub = load_subspace(a.subspace);
  const EditConfig ec = app::edit_config_from_json(section(cfg, "edit"));

  EditRequest req;
  req.style = a.style;
  req.b = a.b;
  for (const auto& e : a.edits) {
    const EditParams requested = app::parse_edit(e);
    const EditParams applied = clamp_edit(sub, requested, ec);
    if (applied.magnitude != requested.magnitude) {
      std::cerr << "axis " << applied.axis << ": magnitude clamped to " << applied.magnitude << "\n";
    }
    req.edits.push_back(applied);
  }
  FaceImage image;
  if (a.toy_seed) {
    const auto s = EditSession::from_toy_seed("cli", *a.toy_seed, *backend);
    image = s.original();
    req.inversion = s.inversion();
  } else {
    if (a.input.empty()) fail(ErrorCode::InvalidConfig, "edit needs --input or --toy-seed");
    image = read_png(a.input);
  }
  const EditResult r = edit_pipeline(image, sub, req, *backend, ec);
  write_png(r.image, a.output);
  std::printf("b=%.4f area=%.5f area_residual=%.5f\n", r.b, r.area, r.area_residual);
  if (g.verbose) std::printf("wrote %s\n", a.output.c_str());
  if (r.area < ec.failure_area()) {
    std::fprintf(stderr, "NoGlassesFound: edited frame area %.5f is below %.5f\n", r.area, ec.failure_area());
    return app::kExitEdit;
  }
  return app::kExitOk;
}

struct EvalArgs {
  std::string subspace, report, style;
  int count = 0;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const json cfg = load_config(g.config);
  const auto backend = backend_from(cfg);
  const auto sub = load_subspace(a.subspace);
  json ej = section(cfg, "eval");
  if (ej.is_null()) ej = json::object();
  if (cfg.contains("edit") && !ej.contains("edit")) ej["edit"] = cfg.at("edit");
  auto ec = app::EvalConfig::from_json(ej, config_dir(g.config));
  if (!a.report.empty()) ec.report = a.report;
  if (!a.style.empty()) ec.toy.style = a.style;
  if (a.count > 0) ec.toy.count = a.count;
  if (g.seed) ec.toy.seed = *g.seed;
  app::run_eval(ec, sub, *backend, std::cout);
  return app::kExitOk;
}

struct ServeArgs {
  std::string subspace, bind = "127.0.0.1:8080", session_dir;
  double ttl = -1;
};

int cmd_serve(const Globals& g, const ServeArgs& a) {
  const json cfg = load_config(g.config);
  const auto backend = backend_from(cfg);
  const auto sub = load_subspace(a.subspace);
  ServiceOptions opt = app::service_options_from_json(section(cfg, "serve"));
  opt.edit = app::edit_config_from_json(section(cfg, "edit"));
  if (a.ttl > 0) opt.idle_ttl = std::chrono::milliseconds(static_cast<long long>(a.ttl * 1000));
  if (!a.session_dir.empty()) opt.session_dir = a.session_dir;

  const auto colon = a.bind.rfind(':');
  if (colon == std::string::npos) fail(ErrorCode::InvalidConfig, "--bind must be host:port");
  const std::string host = a.bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(a.bind.substr(colon + 1));
  } catch (const std::logic_error&) {
    fail(ErrorCode::InvalidConfig, "--bind port is not a number");
  }

  SessionService service(backend, sub, opt);
  HttpServer server(service);
  // Signals are taken synchronously by a watcher thread, which then stops the server.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  const int bound = server.bind(host, port);
  std::printf("listening on %s:%d\n", host.c_str(), bound);
  std::fflush(stdout);
  std::thread watcher([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.run();
  // run() also returns on its own; wake the watcher if it is still waiting.
  pthread_kill(watcher.native_handle(), SIGTERM);
  watcher.join();
  std::printf("stopped\n");
  return app::kExitOk;
}

int cmd_templates(const std::string& dir, int count) {
  const auto set = builtin_templates(count);
  std::filesystem::create_directories(dir);
  for (const auto& t : set.templates) save_template(t, dir);
  std::printf("wrote %zu templates to %s\n", set.templates.size(), dir.c_str());
  return app::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Eyewear latent-space editing"};
  cli.require_subcommand(1);
  cli.fallthrough();
  Globals g;
  cli.add_option("--config", g.config, "JSON config file");
  cli.add_option("--seed", g.seed, "overrides the sampling seed of the command");
  cli.add_flag("--verbose", g.verbose, "more logging");

  std::string fit_output;
  auto* fit = cli.add_subcommand("fit", "discover appearances and fit the glasses subspace");
  fit->add_option("--output", fit_output, "subspace file (overrides fit.output)");

  EditArgs ea;
  auto* edit = cli.add_subcommand("edit", "add or edit glasses on one image");
  edit->add_option("--subspace", ea.subspace, "subspace file")->required();
  auto* in = edit->add_option("--input", ea.input, "input PNG");
  edit->add_option("--toy-seed", ea.toy_seed, "use a sampled toy face instead of --input")->excludes(in);
  edit->add_option("--style", ea.style, "glasses style");
  edit->add_option("--edit", ea.edits, "axis:magnitude, repeatable")->delimiter(',');
  edit->add_option("--b", ea.b, "subspace position; searched when omitted");
  edit->add_option("--output", ea.output, "output PNG");

  EvalArgs va;
  auto* eval = cli.add_subcommand("eval", "edit robustness and MSE report");
  eval->add_option("--subspace", va.subspace, "subspace file")->required();
  eval->add_option("--report", va.report, "report JSON path");
  eval->add_option("--style", va.style, "glasses style");
  eval->add_option("--count", va.count, "toy corpus size");

  ServeArgs sa;
  auto* serve = cli.add_subcommand("serve", "HTTP session API");
  serve->add_option("--subspace", sa.subspace, "subspace file")->required();
  serve->add_option("--bind", sa.bind, "host:port");
  serve->add_option("--ttl", sa.ttl, "idle session TTL in seconds");
  serve->add_option("--session-dir", sa.session_dir, "persist session records here");

  std::string tdir;
  int tcount = 28;
  auto* templates = cli.add_subcommand("templates", "write the built-in templates as PNG + JSON");
  templates->add_option("dir", tdir, "output directory")->required();
  templates->add_option("--count", tcount, "number of templates");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : app::kExitConfig;
  }

  try {
    if (*fit) return cmd_fit(g, fit_output);
    if (*edit) return cmd_edit(g, ea);
    if (*eval) return cmd_eval(g, va);
    if (*serve) return cmd_serve(g, sa);
    if (*templates) return cmd_templates(tdir, tcount);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return app::exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return app::kExitConfig;
  }
  return app::kExitConfig;
}
