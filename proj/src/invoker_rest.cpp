#include <httplib.h>
#include <strings.h>

#include "flowforge/invoker.hpp"

namespace flowforge
{

namespace
{

std::string percent_encode(const std::string & s)
{
  static const char * hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') out += static_cast<char>(c);
    else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

struct Target
{
  std::string origin;  // scheme://host[:port]
  std::string path;    // with query
};

Target split_url(const std::string & url)
{
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error("E_CONNECTION", "URL '" + url + "' has no scheme");
  if (url.compare(0, scheme, "http") != 0) {
    throw Error("E_CONNECTION", "only http:// URLs are supported, got '" + url + "'");
  }
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

Executor rest_executor()
{
  return [](const Implementation & impl, const ConcreteRequest & req, const InvokeEnv &) {
    const auto & rest = std::get<RestImplementation>(impl.details);
    std::string url = rest.url_template;
    for (const auto & [name, value] : req.path_params) {
      const std::string ph = "{" + name + "}";
      for (auto pos = url.find(ph); pos != std::string::npos; pos = url.find(ph, pos)) {
        const auto enc = percent_encode(value);
        url.replace(pos, ph.size(), enc);
        pos += enc.size();
      }
    }
    for (const auto & [name, value] : req.query_params) {
      url += (url.find('?') == std::string::npos ? "?" : "&") + percent_encode(name) + "=" + percent_encode(value);
    }
    const auto target = split_url(url);

    httplib::Client cli(target.origin);
    const auto sec = static_cast<time_t>(rest.timeout_ms / 1000);
    const auto usec = static_cast<time_t>((rest.timeout_ms % 1000) * 1000);
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto & [k, v] : rest.headers) {
      if (strcasecmp(k.c_str(), "Content-Type") == 0) content_type = v;
      else headers.emplace(k, v);
    }
    const bool has_body = !req.document.empty();
    const std::string body = has_body ? req.document.dump() : std::string();

    httplib::Result res;
    switch (rest.method) {
      case HttpMethod::Get: res = cli.Get(target.path, headers); break;
      case HttpMethod::Post: res = cli.Post(target.path, headers, body, content_type); break;
      case HttpMethod::Put: res = cli.Put(target.path, headers, body, content_type); break;
      case HttpMethod::Delete:
        res = has_body ? cli.Delete(target.path, headers, body, content_type) : cli.Delete(target.path, headers);
        break;
    }
    const std::string where = std::string(http_method_name(rest.method)) + " " + url;
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
        throw Error("E_TIMEOUT", where + " failed: " + httplib::to_string(err));
      }
      throw Error("E_CONNECTION", where + " failed: " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status > 299) {
      throw Error("E_REMOTE_STATUS", where + " answered " + std::to_string(res->status) +
                                        (res->body.empty() ? "" : ": " + res->body.substr(0, 300)));
    }
    if (res->body.empty()) return json::object();
    try {
      return json::parse(res->body);
    } catch (const json::exception & e) {
      throw Error("E_DECODE", where + " returned invalid JSON: " + e.what());
    }
  };
}

}  // namespace flowforge
