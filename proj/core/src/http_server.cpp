#include "intentscale/service.hpp"

#include <chrono>
#include <thread>

#include "intentscale/error.hpp"

// After Eigen: httplib leaks macros that collide with Eigen internals.
#include <httplib.h>

namespace intentscale {

void run_http(Service& service, const std::string& bind, const std::atomic<bool>* stop,
              const std::function<void(int)>& on_listening) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::invalid_argument, "bind address must be host:port");
  const std::string host = bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::invalid_argument, "invalid port in bind address: " + bind);
  }

  httplib::Server server;
  const auto dispatch = [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const Response r = service.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(".*", dispatch);
  server.Post(".*", dispatch);
  server.Put(".*", dispatch);
  server.Delete(".*", dispatch);

  if (port == 0) {
    port = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(ErrorCode::io_error, "cannot bind " + bind);

  std::thread watcher;
  if (stop != nullptr) {
    watcher = std::thread([&server, stop] {
      while (!stop->load()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
      server.stop();
    });
  }
  if (on_listening) on_listening(port);
  server.listen_after_bind();
  if (watcher.joinable()) watcher.join();
}

}  // namespace intentscale
