#pragma once

#include <map>
#include <string>

namespace reef {

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// One request against an absolute `http://` or `https://` URL. Throws
/// TransportFailure when no response arrives.
HttpResponse http_request(std::string const &method, std::string const &url, std::string const &body = {},
                          std::map<std::string, std::string> const &headers = {},
                          std::string const &content_type = "application/octet-stream");

/// GET that requires a 200. Throws TransportFailure otherwise.
std::string http_get(std::string const &url);

} // namespace reef
