#include "reef/http.hpp"
#include "reef/registry.hpp"
#include "reef/service.hpp"

#include "reef/error.hpp"

#include <httplib.h>

namespace reef {

using nlohmann::json;

namespace {

struct Url {
  std::string origin; // scheme://host[:port]
  std::string path;   // starts with '/'
};

Url split_url(std::string const &url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::TransportFailure, "not an absolute URL: " + url);
  }
  auto slash = url.find('/', scheme_end + 3);
  if (slash == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, slash), url.substr(slash)};
}

std::string trim_slash(std::string s) {
  while (!s.empty() && s.back() == '/') {
    s.pop_back();
  }
  return s;
}

std::string error_message(HttpResponse const &r) {
  auto j = json::parse(r.body, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("message") && j["message"].is_string()) {
    return j["message"].get<std::string>();
  }
  return r.body.substr(0, 200);
}

} // namespace

HttpResponse http_request(std::string const &method, std::string const &url, std::string const &body,
                          std::map<std::string, std::string> const &headers, std::string const &content_type) {
  auto u = split_url(url);
  httplib::Client client(u.origin);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(60, 0);
  client.set_write_timeout(60, 0);
  client.set_follow_location(true);
  httplib::Headers h(headers.begin(), headers.end());
  httplib::Result res;
  if (method == "GET") {
    res = client.Get(u.path, h);
  } else if (method == "PUT") {
    res = client.Put(u.path, h, body, content_type);
  } else if (method == "POST") {
    res = client.Post(u.path, h, body, content_type);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unsupported HTTP method " + method);
  }
  if (!res) {
    throw Error(ErrorKind::TransportFailure, method + " " + url + ": " + httplib::to_string(res.error()),
                {{"url", url}});
  }
  return {res->status, res->body};
}

std::string http_get(std::string const &url) {
  auto r = http_request("GET", url);
  if (r.status != 200) {
    throw Error(ErrorKind::TransportFailure, "GET " + url + " returned HTTP " + std::to_string(r.status),
                {{"url", url}, {"status", r.status}});
  }
  return std::move(r.body);
}

HttpRegistry::HttpRegistry(std::string base_url, std::string token)
    : base_url_(trim_slash(std::move(base_url))), token_(std::move(token)) {}

RegistryIndex HttpRegistry::index() {
  auto body = http_get(base_url_ + "/v1/index");
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorKind::TransportFailure, "registry index at " + base_url_ + " is not JSON");
  }
  return RegistryIndex::from_json(j);
}

std::string HttpRegistry::fetch_blob(ComponentId const &id, Version const &version) {
  auto url = base_url_ + "/v1/components/" + id.str() + "/" + version.str();
  auto r = http_request("GET", url);
  if (r.status == 404) {
    throw Error(ErrorKind::UnknownComponent, id.str() + "@" + version.str() + " is not in the registry",
                {{"id", id.str()}, {"version", version.str()}});
  }
  if (r.status != 200) {
    throw Error(ErrorKind::TransportFailure, "GET " + url + " returned HTTP " + std::to_string(r.status));
  }
  return std::move(r.body);
}

PublicationRecord HttpRegistry::publish(Component const &component) {
  auto url = base_url_ + "/v1/components/" + component.id.str() + "/" + component.version.str();
  std::map<std::string, std::string> headers{{"X-Reef-Digest", component.digest}};
  if (!token_.empty()) {
    headers["Authorization"] = "Bearer " + token_;
  }
  auto r = http_request("PUT", url, pack_component(component), headers, "application/gzip");
  if (r.status == 409) {
    throw Error(ErrorKind::DuplicateVersion, error_message(r),
                {{"id", component.id.str()}, {"version", component.version.str()}});
  }
  if (r.status == 422) {
    throw Error(ErrorKind::DigestMismatch, error_message(r));
  }
  if (r.status != 201 && r.status != 200) {
    throw Error(ErrorKind::TransportFailure, "PUT " + url + " returned HTTP " + std::to_string(r.status) + ": " +
                                                 error_message(r));
  }
  auto j = json::parse(r.body, nullptr, false);
  PublicationRecord rec{component.id, component.version, component.digest, ""};
  if (!j.is_discarded() && j.contains("index_digest")) {
    rec.index_digest = j["index_digest"].get<std::string>();
  }
  return rec;
}

std::string submit_result(std::string const &base_url, ResultRecord const &record, std::string const &token) {
  std::map<std::string, std::string> headers;
  if (!token.empty()) {
    headers["Authorization"] = "Bearer " + token;
  }
  auto url = trim_slash(base_url) + "/v1/results";
  auto r = http_request("POST", url, record.to_json().dump(), headers, "application/json");
  if (r.status == 400) {
    throw Error(ErrorKind::SchemaViolation, "service rejected the record: " + error_message(r));
  }
  if (r.status == 409) {
    throw Error(ErrorKind::DuplicateRecord, "service already holds this record");
  }
  if (r.status != 201 && r.status != 200) {
    throw Error(ErrorKind::TransportFailure, "POST " + url + " returned HTTP " + std::to_string(r.status));
  }
  auto j = json::parse(r.body, nullptr, false);
  return !j.is_discarded() && j.contains("id") ? j["id"].get<std::string>() : record.id();
}

std::vector<ResultRecord> list_remote_results(std::string const &base_url, std::optional<std::string> const &solution,
                                              std::optional<std::string> const &since) {
  httplib::Params params;
  if (solution) {
    params.emplace("solution", *solution);
  }
  if (since) {
    params.emplace("since", *since);
  }
  auto query = httplib::detail::params_to_query_str(params);
  auto body = http_get(trim_slash(base_url) + "/v1/results" + (query.empty() ? "" : "?" + query));
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_array()) {
    throw Error(ErrorKind::TransportFailure, "results listing is not a JSON array");
  }
  std::vector<ResultRecord> out;
  for (auto const &r : j) {
    out.push_back(ResultRecord::from_json(r));
  }
  return out;
}

} // namespace reef
