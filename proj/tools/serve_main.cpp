// HTTP session service. DTPBO_BIND=host:port (default 127.0.0.1:8080),
// DTPBO_DATA_DIR for session files (default ./sessions).
#include <csignal>
#include <cstdlib>
#include <iostream>

#include "dtpbo/session_service.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main() {
  try {
    const char* bind_env = std::getenv("DTPBO_BIND");
    const char* dir_env = std::getenv("DTPBO_DATA_DIR");
    const auto [host, port] = dtpbo::service::parse_bind(bind_env ? bind_env : "127.0.0.1:8080");
    dtpbo::service::SessionStore store(dir_env ? dir_env : "sessions");

    httplib::Server server;
    dtpbo::service::install_routes(server, store);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    if (!server.bind_to_port(host, port)) {
      std::cerr << "error: cannot bind " << host << ":" << port << '\n';
      return 1;
    }
    std::cout << "listening on " << host << ":" << port << ", sessions in " << (dir_env ? dir_env : "sessions")
              << std::endl;
    server.listen_after_bind();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
