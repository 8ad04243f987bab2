#include "bigthick/service/http.hpp"

#include <httplib.h>

namespace bigthick::service {

ApiRequest to_api_request(const httplib::Request& request) {
  ApiRequest out;
  out.method = request.method;
  out.path = request.path;
  for (const auto& [key, value] : request.params) out.query.emplace(key, value);
  out.body = request.body;
  const auto auth = request.get_header_value("Authorization");
  const std::string bearer = "Bearer ";
  if (auth.compare(0, bearer.size(), bearer) == 0) out.token = auth.substr(bearer.size());
  return out;
}

void mount(httplib::Server& server, Service& service) {
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    auto response = service.handle(to_api_request(req));
    res.status = response.status;
    res.set_content(response.body.dump(), "application/json");
  };
  server.Get(".*", handler);
  server.Post(".*", handler);
  server.Put(".*", handler);
  server.Delete(".*", handler);
}

}  // namespace bigthick::service
