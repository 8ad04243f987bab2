#pragma once

#include "bigthick/service/service.hpp"

namespace httplib {
class Server;
struct Request;
}  // namespace httplib

namespace bigthick::service {

/// Bearer token from the Authorization header, query parameters, path and body.
ApiRequest to_api_request(const httplib::Request& request);

/// Routes every GET/POST/PUT/DELETE on `server` to `service`.
void mount(httplib::Server& server, Service& service);

}  // namespace bigthick::service
